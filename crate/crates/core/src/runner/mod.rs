//! Scenario files in, artifact directories out.
//!
//! A run directory holds `resolved.cfg` (the exact parameters used), the
//! requested tables and Wigner grids, and a `MANIFEST` listing every promised
//! file with its status. Sweeps write one such directory per point plus
//! aggregate tables. Wall-clock times go to `timing.tsv` only, so every other
//! file is byte-identical across reruns.

pub mod config;
mod output;
mod scenario;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::cascade::{run_pipeline, CascadeResult, Diagnostics};
use crate::error::{Error, Result};
use crate::tomography::{wigner_field, wigner_sphere, write_ppm, PhaseGrid, SphereGrid};

pub use scenario::{
    AxisValues, GridSpec, LossChannel, Output, ScenarioConfig, ScenarioPoint, SolverSpec, SweepAxis, WignerSpec, LABEL_AXES,
    RUNNER_AXES,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_SUBRADIANT: i32 = 4;

pub const MANIFEST: &str = "MANIFEST";
pub const RESOLVED: &str = "resolved.cfg";
pub const TIMING: &str = "timing.tsv";

/// Exit code for an error: configuration problems versus failures of the
/// numerics on a valid configuration.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::StepUnderflow { .. }
        | Error::TraceDrift { .. }
        | Error::NegativeOccupancy { .. }
        | Error::DarkStart(_)
        | Error::NotHermitian(_)
        | Error::GridTooNarrow { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Ok,
    Failed(String),
}

/// What happened at one point.
#[derive(Debug)]
pub struct PointOutcome {
    pub index: usize,
    pub coordinates: Vec<(String, String)>,
    pub dir: PathBuf,
    /// Pipeline failure with its exit code.
    pub failure: Option<(i32, String)>,
    /// Requested artifacts that could not be produced.
    pub missing: Vec<(String, String)>,
    pub subradiant: bool,
    pub summary: Option<Row>,
    pub diagnostics: Vec<Diagnostics>,
    pub wall_seconds: f64,
}

/// Headline numbers of a finished point.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub t_end: f64,
    pub n0: f64,
    pub fidelity: f64,
    pub root_fidelity: f64,
    pub rotated_fidelity: f64,
    pub mode_purity: f64,
    pub final_entropy: f64,
    pub residual_fraction: f64,
    pub wigner_min_over_max: f64,
}

impl Row {
    fn of(r: &CascadeResult) -> Self {
        let last = r.final_diagnostics();
        Row {
            t_end: r.grid.t_end(),
            n0: r.dominant_occupancy(),
            fidelity: r.fidelity,
            root_fidelity: r.root_fidelity(),
            rotated_fidelity: r.rotated_fidelity,
            mode_purity: last.mode_purity,
            final_entropy: last.system_entropy,
            residual_fraction: r.residual_fraction,
            wigner_min_over_max: output::wigner_contrast(r),
        }
    }
}

struct Artifacts {
    dir: PathBuf,
    manifest: Vec<(String, Status)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), manifest: vec![] })
    }

    fn write(&mut self, name: &str, content: impl FnOnce() -> Result<String>) {
        let status = content().and_then(|text| Ok(std::fs::write(self.dir.join(name), text)?));
        self.record(name, status);
    }

    fn record(&mut self, name: &str, status: Result<()>) {
        let s = match status {
            Ok(()) => Status::Ok,
            Err(e) => Status::Failed(e.to_string()),
        };
        self.manifest.push((name.to_string(), s));
    }

    fn fail(&mut self, name: &str, why: &str) {
        self.manifest.push((name.to_string(), Status::Failed(why.to_string())));
    }

    fn missing(&self) -> Vec<(String, String)> {
        self.manifest
            .iter()
            .filter_map(|(n, s)| match s {
                Status::Failed(w) => Some((n.clone(), w.clone())),
                Status::Ok => None,
            })
            .collect()
    }

    fn finish(self) -> Result<Vec<(String, String)>> {
        let mut text = String::from("# file status detail\n");
        for (name, status) in &self.manifest {
            match status {
                Status::Ok => text.push_str(&format!("{name} ok -\n")),
                Status::Failed(why) => text.push_str(&format!("{name} failed {}\n", why.replace('\n', " "))),
            }
        }
        std::fs::write(self.dir.join(MANIFEST), text)?;
        Ok(self.missing())
    }
}

fn promised(config: &ScenarioConfig) -> Vec<String> {
    let mut files = Vec::new();
    let cavity = config.platform.variant == crate::cascade::Variant::Cavity;
    for o in &config.outputs {
        match o {
            Output::Trajectory => files.push("trajectory.tsv".to_string()),
            Output::Modes => {
                files.push("modes.tsv".into());
                files.push("occupancies.tsv".into());
            }
            Output::WignerField => {
                for i in config.snapshot_indices() {
                    files.push(format!("wigner_mode_{i:04}.grid"));
                    if cavity {
                        files.push(format!("wigner_cavity_{i:04}.grid"));
                    }
                }
            }
            Output::WignerSphere => {
                for i in config.snapshot_indices() {
                    files.push(format!("wigner_emitters_{i:04}.grid"));
                }
            }
            Output::Summary => files.push("summary.tsv".into()),
        }
    }
    files
}

fn field_grid(config: &ScenarioConfig, dim: usize) -> Result<PhaseGrid> {
    let n = config.wigner.resolution;
    match config.wigner.half_width {
        Some(h) => PhaseGrid::square(h, n),
        None => PhaseGrid::for_cutoff(dim, n),
    }
}

fn write_artifacts(a: &mut Artifacts, point: &ScenarioPoint, r: &CascadeResult) {
    let config = &point.config;
    for o in &config.outputs {
        match o {
            Output::Trajectory => a.write("trajectory.tsv", || Ok(output::trajectory(&r.diagnostics))),
            Output::Modes => {
                a.write("modes.tsv", || Ok(output::modes(r, 4)));
                a.write("occupancies.tsv", || Ok(output::occupancies(r)));
            }
            Output::WignerField => {
                for s in &r.snapshots {
                    let mut maps = vec![("mode", &s.mode)];
                    if let Some(c) = &s.cavity {
                        maps.push(("cavity", c));
                    }
                    for (label, rho) in maps {
                        let name = format!("wigner_{label}_{:04}.grid", s.index);
                        let map = field_grid(config, rho.matrix().nrows()).and_then(|g| wigner_field(rho, &g));
                        match map {
                            Ok(w) => {
                                a.write(&name, || Ok(w.to_grid_file()));
                                if config.wigner.images {
                                    let img = name.replace(".grid", ".ppm");
                                    let status = write_ppm(&a.dir.join(&img), &w.values, w.grid.nx, w.grid.np);
                                    a.record(&img, status);
                                }
                            }
                            Err(e) => a.fail(&name, &e.to_string()),
                        }
                    }
                }
            }
            Output::WignerSphere => {
                for s in &r.snapshots {
                    let name = format!("wigner_emitters_{:04}.grid", s.index);
                    let map = SphereGrid::new(config.wigner.sphere_theta, config.wigner.sphere_phi)
                        .and_then(|g| wigner_sphere(&s.emitters, &g));
                    match map {
                        Ok(w) => {
                            a.write(&name, || Ok(w.to_grid_file()));
                            if config.wigner.images {
                                let img = name.replace(".grid", ".ppm");
                                let status = write_ppm(&a.dir.join(&img), &w.values, w.grid.ntheta, w.grid.nphi);
                                a.record(&img, status);
                            }
                        }
                        Err(e) => a.fail(&name, &e.to_string()),
                    }
                }
            }
            Output::Summary => a.write("summary.tsv", || Ok(output::summary(&config.name, &point.coordinates, r))),
        }
    }
}

/// Run one point into `dir`. Failures are recorded, never raised, except
/// when the directory itself cannot be written.
pub fn run_point(point: &ScenarioPoint, dir: &Path) -> Result<PointOutcome> {
    let start = Instant::now();
    let mut a = Artifacts::new(dir)?;
    let config = &point.config;
    a.write(RESOLVED, || Ok(config.render()));
    let result = match &point.invalid {
        Some(why) => Err(Error::Config(why.clone())),
        None => config
            .platform
            .validate()
            .and_then(|_| config.emitter_state())
            .and_then(|psi| Ok((psi, config.pipeline_options()?)))
            .and_then(|(psi, opts)| run_pipeline(&config.platform, &psi, &opts)),
    };
    let (failure, subradiant, summary, diagnostics) = match result {
        Ok(r) => {
            write_artifacts(&mut a, point, &r);
            (None, r.subradiant_remainder, Some(Row::of(&r)), r.diagnostics.clone())
        }
        Err(e) => {
            let msg = e.to_string();
            for f in promised(config) {
                a.fail(&f, &msg);
            }
            (Some((exit_code(&e), msg)), false, None, vec![])
        }
    };
    let missing = a.finish()?;
    let wall_seconds = start.elapsed().as_secs_f64();
    std::fs::write(dir.join(TIMING), format!("# phase seconds\npoint {wall_seconds:.3}\n"))?;
    Ok(PointOutcome {
        index: point.index,
        coordinates: point.coordinates.clone(),
        dir: dir.to_path_buf(),
        failure,
        missing,
        subradiant,
        summary,
        diagnostics,
        wall_seconds,
    })
}

pub fn point_dir_name(index: usize) -> String {
    format!("p{index:03}")
}

/// Aggregate over all points of a sweep.
fn aggregate(config: &ScenarioConfig, outcomes: &[PointOutcome], dir: &Path) -> Result<()> {
    let mut a = Artifacts::new(dir)?;
    a.write(RESOLVED, || Ok(config.render()));
    let axes: Vec<&str> = config.sweep.iter().map(|s| s.name.as_str()).collect();
    let mut header = vec!["point"];
    header.extend(&axes);
    header.extend([
        "status",
        "t_end",
        "n0",
        "fidelity",
        "root_fidelity",
        "rotated_fidelity",
        "mode_purity",
        "final_entropy",
        "residual_fraction",
        "wigner_min_over_max",
        "subradiant",
    ]);
    let rows = outcomes.iter().map(|o| {
        let mut row = vec![point_dir_name(o.index)];
        row.extend(o.coordinates.iter().map(|(_, v)| v.clone()));
        match (&o.summary, &o.failure) {
            (Some(s), None) => {
                row.push(if o.missing.is_empty() { "ok".into() } else { "partial".into() });
                row.extend(
                    [s.t_end, s.n0, s.fidelity, s.root_fidelity, s.rotated_fidelity, s.mode_purity, s.final_entropy, s.residual_fraction, s.wigner_min_over_max]
                        .into_iter()
                        .map(output::num),
                );
                row.push(o.subradiant.to_string());
            }
            _ => {
                row.push("failed".into());
                row.extend(std::iter::repeat_n("nan".to_string(), 9));
                row.push("-".into());
            }
        }
        row
    });
    let sweep_table = output::table(&header, rows);
    a.write("sweep.tsv", || Ok(sweep_table));
    let failures = output::table(
        &["point", "code", "message"],
        outcomes
            .iter()
            .filter_map(|o| o.failure.as_ref().map(|(c, m)| vec![point_dir_name(o.index), c.to_string(), m.replace('\n', " ")])),
    );
    a.write("failures.tsv", || Ok(failures));
    if config.outputs.contains(&Output::Trajectory) {
        let series: [(&str, fn(&Diagnostics) -> f64); 6] = [
            ("intensity", |d| d.intensity),
            ("entropy", |d| d.system_entropy),
            ("inversion", |d| d.emitter_excitation),
            ("system_purity", |d| d.system_purity),
            ("mode_purity", |d| d.mode_purity),
            ("fidelity", |d| d.fidelity),
        ];
        for (label, f) in series {
            let name = format!("series_{label}.tsv");
            a.write(&name, || Ok(series_table(outcomes, f)));
        }
    }
    for o in outcomes {
        let sub = format!("{}/", point_dir_name(o.index));
        match &o.failure {
            None => a.record(&sub, Ok(())),
            Some((_, m)) => a.fail(&sub, m),
        }
    }
    a.finish()?;
    let mut timing = String::from("# point seconds\n");
    for o in outcomes {
        timing.push_str(&format!("{} {:.3}\n", point_dir_name(o.index), o.wall_seconds));
    }
    std::fs::write(dir.join(TIMING), timing)?;
    Ok(())
}

/// One column per successful point. Points sharing one time grid share the
/// `t` column; otherwise each point gets its own.
fn series_table(outcomes: &[PointOutcome], f: fn(&Diagnostics) -> f64) -> String {
    let done: Vec<&PointOutcome> = outcomes.iter().filter(|o| !o.diagnostics.is_empty()).collect();
    let times = |o: &PointOutcome| o.diagnostics.iter().map(|d| d.t.to_bits()).collect::<Vec<_>>();
    let shared = done.windows(2).all(|w| times(w[0]) == times(w[1]));
    let mut header: Vec<String> = Vec::new();
    if shared {
        header.push("t".into());
    }
    for o in &done {
        if !shared {
            header.push(format!("t_{}", point_dir_name(o.index)));
        }
        header.push(point_dir_name(o.index));
    }
    let len = done.iter().map(|o| o.diagnostics.len()).max().unwrap_or(0);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..len).map(|i| {
        let mut row = Vec::new();
        if shared {
            row.push(output::num(done[0].diagnostics[i].t));
        }
        for o in &done {
            let d = o.diagnostics.get(i);
            if !shared {
                row.push(d.map_or("nan".into(), |d| output::num(d.t)));
            }
            row.push(d.map_or("nan".into(), |d| output::num(f(d))));
        }
        row
    });
    output::table(&header, rows)
}

/// Outcome of a command: exit code plus lines for the user.
#[derive(Debug)]
pub struct Report {
    pub code: i32,
    pub messages: Vec<String>,
    pub points: Vec<PointOutcome>,
}

impl Report {
    fn config_error(e: &Error) -> Self {
        Report { code: exit_code(e), messages: vec![format!("error: {e}")], points: vec![] }
    }
}

/// Run every point of `config` into `out`. A config without a sweep writes
/// straight into `out`; otherwise each point gets `out/pNNN`.
pub fn execute(config: &ScenarioConfig, out: &Path) -> Result<Vec<PointOutcome>> {
    let points = config.points()?;
    if config.sweep.is_empty() {
        return Ok(vec![run_point(&points[0], out)?]);
    }
    std::fs::create_dir_all(out)?;
    let outcomes: Vec<PointOutcome> = points
        .par_iter()
        .map(|p| run_point(p, &out.join(point_dir_name(p.index))))
        .collect::<Result<_>>()?;
    aggregate(config, &outcomes, out)?;
    Ok(outcomes)
}

fn describe(o: &PointOutcome) -> String {
    let at = if o.coordinates.is_empty() {
        String::new()
    } else {
        let c: Vec<String> = o.coordinates.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!(" [{}]", c.join(" "))
    };
    match (&o.failure, &o.summary) {
        (Some((code, m)), _) => format!("{}{at}: failed (exit {code}): {m}", point_dir_name(o.index)),
        (None, Some(s)) => format!(
            "{}{at}: fidelity {:.4} (root {:.4}), n0 {:.4}, mode purity {:.4}{}",
            point_dir_name(o.index),
            s.fidelity,
            s.root_fidelity,
            s.n0,
            s.mode_purity,
            if o.subradiant { ", subradiant remainder" } else { "" }
        ),
        _ => String::new(),
    }
}

/// `run`: every point must succeed. Exit 3 on a numerical failure or a
/// missing artifact, 2 on a configuration failure, 4 under `strict` when
/// emission stalls on a subradiant remainder.
pub fn cli_run(config_path: &Path, out: &Path, strict: bool) -> Report {
    let config = match ScenarioConfig::from_file(config_path) {
        Ok(c) => c,
        Err(e) => return Report::config_error(&e),
    };
    let points = match execute(&config, out) {
        Ok(p) => p,
        Err(e) => return Report::config_error(&e),
    };
    let mut messages: Vec<String> = points.iter().map(describe).collect();
    let mut code = EXIT_OK;
    if let Some((c, _)) = points.iter().find_map(|o| o.failure.as_ref()) {
        code = *c;
    } else if points.iter().any(|o| !o.missing.is_empty()) {
        for o in &points {
            for (f, why) in &o.missing {
                messages.push(format!("missing {}: {why}", o.dir.join(f).display()));
            }
        }
        code = EXIT_NUMERICAL;
    } else if points.iter().any(|o| o.subradiant) {
        messages.push("warning: emission left a subradiant remainder above the residual tolerance".into());
        if strict {
            code = EXIT_SUBRADIANT;
        }
    }
    Report { code, messages, points }
}

/// `sweep`: `axes` (`name=v1,v2,...`) replace the config's sweep block.
/// Exit 0 unless every point fails.
pub fn cli_sweep(config_path: &Path, axes: &[String], out: &Path) -> Report {
    let mut config = match ScenarioConfig::from_file(config_path) {
        Ok(c) => c,
        Err(e) => return Report::config_error(&e),
    };
    if !axes.is_empty() {
        config.sweep.clear();
        for a in axes {
            let parsed = a
                .split_once('=')
                .ok_or_else(|| format!("axis override must look like name=v1,v2,..., got `{a}`"))
                .and_then(|(k, v)| SweepAxis::parse(k.trim(), v));
            match parsed {
                Ok(axis) if config.sweep.iter().any(|s| s.name == axis.name) => {
                    return Report::config_error(&Error::Config(format!("axis `{}` given twice", axis.name)))
                }
                Ok(axis) => config.sweep.push(axis),
                Err(m) => return Report::config_error(&Error::Config(m)),
            }
        }
    }
    if config.sweep.is_empty() {
        return Report::config_error(&Error::Config("no sweep axis: pass --axis name=v1,v2,... or set sweep.<axis>".into()));
    }
    if let Err(e) = config.check_sweep() {
        return Report::config_error(&e);
    }
    let points = match execute(&config, out) {
        Ok(p) => p,
        Err(e) => return Report::config_error(&e),
    };
    let messages = points.iter().map(describe).collect();
    let code = match points.iter().all(|o| o.failure.is_some()) {
        true => points[0].failure.as_ref().map_or(EXIT_NUMERICAL, |(c, _)| *c),
        false => EXIT_OK,
    };
    Report { code, messages, points }
}

/// `validate`: parse the config and check every point without running.
pub fn cli_validate(config_path: &Path) -> Report {
    let config = match ScenarioConfig::from_file(config_path) {
        Ok(c) => c,
        Err(e) => return Report::config_error(&e),
    };
    let points = match config.points() {
        Ok(p) => p,
        Err(e) => return Report::config_error(&e),
    };
    let mut messages = Vec::new();
    let mut code = EXIT_OK;
    for p in &points {
        let check = match &p.invalid {
            Some(why) => Err(Error::Config(why.clone())),
            None => p
                .config
                .platform
                .validate()
                .and_then(|_| p.config.emitter_state())
                .and_then(|_| p.config.target_state())
                .and_then(|_| p.config.platform.space(true).map(|_| ())),
        };
        if let Err(e) = check {
            code = EXIT_CONFIG;
            messages.push(format!("{}: {e}", point_dir_name(p.index)));
        }
    }
    if code == EXIT_OK {
        let dim = config.platform.space(true).map(|s| s.dim()).unwrap_or(0);
        messages.push(format!(
            "ok: {} point(s), {} emitters, variant {}, cascaded dimension {dim}, outputs {}",
            points.len(),
            config.platform.emitters,
            config.platform.variant.name(),
            config.outputs.iter().map(|o| o.name()).collect::<Vec<_>>().join(",")
        ));
    }
    Report { code, messages, points: vec![] }
}
