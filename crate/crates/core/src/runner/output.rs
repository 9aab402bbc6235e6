//! Text artifacts. Every table starts with a `#` header naming its columns;
//! values are whitespace separated.

use std::fmt::Write as _;

use crate::cascade::{CascadeResult, Diagnostics};
use crate::tomography::{wigner_field_unchecked, PhaseGrid};

pub(crate) fn num(v: f64) -> String {
    format!("{v:.12e}")
}

pub(crate) fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = format!("# {}\n", header.join(" "));
    for row in rows {
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub(crate) const TRAJECTORY_COLUMNS: [&str; 9] = [
    "t",
    "intensity",
    "mode_photons",
    "emitter_excitation",
    "cavity_photons",
    "system_entropy",
    "system_purity",
    "mode_purity",
    "fidelity",
];

pub(crate) fn trajectory(diagnostics: &[Diagnostics]) -> String {
    table(
        &TRAJECTORY_COLUMNS,
        diagnostics.iter().map(|d| {
            [d.t, d.intensity, d.mode_photons, d.emitter_excitation, d.cavity_photons, d.system_entropy, d.system_purity, d.mode_purity, d.fidelity]
                .into_iter()
                .map(num)
                .collect()
        }),
    )
}

/// Envelopes of the leading modes and the cascade coupling `g0(t)`.
pub(crate) fn modes(r: &CascadeResult, keep: usize) -> String {
    let shown = &r.modes.modes[..r.modes.modes.len().min(keep)];
    let mut header = vec!["t".to_string(), "g0_re".into(), "g0_im".into()];
    for m in shown {
        header.push(format!("eta{}_re", m.index));
        header.push(format!("eta{}_im", m.index));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..r.grid.len()).map(|i| {
        let mut row = vec![num(r.grid.point(i)), num(r.profile.g0[i].re), num(r.profile.g0[i].im)];
        for m in shown {
            row.push(num(m.envelope[i].re));
            row.push(num(m.envelope[i].im));
        }
        row
    });
    table(&header, rows)
}

pub(crate) fn occupancies(r: &CascadeResult) -> String {
    let total = r.modes.total;
    table(
        &["k", "occupancy", "fraction"],
        r.modes.occupancies.iter().enumerate().take_while(|(k, n)| *k < 3 || **n > 1e-12 * total).map(|(k, n)| {
            vec![k.to_string(), num(*n), num(if total > 0.0 { n / total } else { 0.0 })]
        }),
    )
}

/// Minimum over maximum of the final mode's Wigner map on a grid sized for
/// its cutoff.
pub(crate) fn wigner_contrast(r: &CascadeResult) -> f64 {
    let d = r.mode_state.matrix().nrows();
    let grid = PhaseGrid::for_cutoff(d, 81).expect("fixed resolution is valid");
    let w = wigner_field_unchecked(r.mode_state.matrix(), &grid);
    w.min() / w.max()
}

pub(crate) fn summary(name: &str, coordinates: &[(String, String)], r: &CascadeResult) -> String {
    let last = r.final_diagnostics();
    let max_entropy = r.diagnostics.iter().map(|d| d.system_entropy).fold(0.0, f64::max);
    let occ = |k: usize| r.modes.occupancies.get(k).copied().unwrap_or(0.0);
    let mut s = String::from("# key value\n");
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} {v}");
    };
    put("name", name.replace(char::is_whitespace, "_"));
    for (axis, value) in coordinates {
        put(&format!("axis.{axis}"), value.clone());
    }
    put("variant", r.spec.variant.name().into());
    put("emitters", r.spec.emitters.to_string());
    put("xi", r.xi().map_or("nan".into(), num));
    put("t_end", num(r.grid.t_end()));
    put("points", r.grid.len().to_string());
    put("initial_excitation", num(r.initial_excitation));
    put("total_photons", num(r.modes.total));
    put("n0", num(occ(0)));
    put("n1", num(occ(1)));
    put("n2", num(occ(2)));
    put("fidelity", num(r.fidelity));
    put("root_fidelity", num(r.root_fidelity()));
    put("rotated_fidelity", num(r.rotated_fidelity));
    put("rotation", num(r.rotation));
    put("mode_purity", num(last.mode_purity));
    put("mode_photons", num(last.mode_photons));
    put("wigner_min_over_max", num(wigner_contrast(r)));
    put("final_system_entropy", num(last.system_entropy));
    put("max_system_entropy", num(max_entropy));
    put("final_system_purity", num(last.system_purity));
    put("residual_fraction", num(r.residual_fraction));
    put("subradiant_remainder", r.subradiant_remainder.to_string());
    put("horizon_extended", r.horizon_extended.to_string());
    put("max_trace_drift", num(r.max_trace_drift));
    put("max_hermiticity_error", num(r.max_hermiticity_error));
    s
}
