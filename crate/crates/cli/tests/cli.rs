use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
platform.variant = direct
platform.emitters = 2
platform.gamma_1d = 1
grid.points = 60
outputs = summary, trajectory, wigner-field
wigner.resolution = 21
";

fn cemit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cemit")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bundled_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "cfg") {
            let o = cemit(&["validate", s(&p)]);
            assert_eq!(code(&o), 0, "{}: {}", p.display(), String::from_utf8_lossy(&o.stderr));
            seen += 1;
        }
    }
    assert!(seen >= 8);
}

#[test]
fn run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "tiny.cfg", TINY);
    let out = tmp.path().join("out");
    let o = cemit(&["run", s(&cfg), "-o", s(&out), "--threads", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("fidelity"));
    for f in ["MANIFEST", "resolved.cfg", "summary.tsv", "trajectory.tsv", "wigner_mode_0059.grid", "timing.tsv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let no_outputs = write(tmp.path(), "none.cfg", &TINY.replace("outputs = summary, trajectory, wigner-field\n", ""));
    let o = cemit(&["run", s(&no_outputs), "-o", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no outputs requested"));

    let typo = write(tmp.path(), "typo.cfg", &format!("{TINY}platform.gama_1d = 2\n"));
    let o = cemit(&["validate", s(&typo)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":7: unknown key"));

    assert_eq!(code(&cemit(&["validate", s(&tmp.path().join("missing.cfg"))])), 2);
    let cfg = write(tmp.path(), "tiny.cfg", TINY);
    assert_eq!(code(&cemit(&["run", s(&cfg), "-o", s(&tmp.path().join("t")), "--threads", "0"])), 2);
}

#[test]
fn dark_source_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "dark.cfg",
        "platform.variant = waveguide\nplatform.emitters = 1\nplatform.positions = 0.25\ngrid.points = 40\ngrid.t_end = 2\noutputs = summary\n",
    );
    let o = cemit(&["run", s(&cfg), "-o", s(&tmp.path().join("o"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn subradiant_remainder_is_fatal_only_when_strict() {
    let tmp = tempfile::tempdir().unwrap();
    // the second emitter sits at a node of the standing wave and keeps its excitation
    let cfg = write(
        tmp.path(),
        "half.cfg",
        "platform.variant = waveguide\nplatform.emitters = 2\nplatform.positions = 0, 0.25\ngrid.points = 60\n\
         grid.t_end = 6\noutputs = summary\n",
    );
    let relaxed = cemit(&["run", s(&cfg), "-o", s(&tmp.path().join("a"))]);
    assert_eq!(code(&relaxed), 0, "{}", String::from_utf8_lossy(&relaxed.stderr));
    assert!(String::from_utf8_lossy(&relaxed.stderr).contains("subradiant"));
    let strict = cemit(&["run", s(&cfg), "-o", s(&tmp.path().join("b")), "--strict"]);
    assert_eq!(code(&strict), 4);
}

#[test]
fn sweep_writes_points_and_aggregate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "tiny.cfg", &TINY.replace(", wigner-field", ""));
    let out = tmp.path().join("sw");
    let o = cemit(&["sweep", s(&cfg), "--axis", "gamma_1d=0.5,1", "--axis", "gamma_collective=0,0.1", "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for p in ["p000", "p001", "p002", "p003"] {
        assert!(out.join(p).join("summary.tsv").is_file(), "{p}");
    }
    let table = fs::read_to_string(out.join("sweep.tsv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert_eq!(code(&cemit(&["sweep", s(&cfg), "--axis", "colour=1", "-o", s(&out)])), 2);
}
