use std::time::Instant;

use rayon::prelude::*;

use super::{run_pipeline, CascadeResult, PipelineOptions, PlatformSpec};
use crate::error::{Error, Result};
use crate::operator::C64;

/// Platform parameters a sweep may vary.
pub const SWEEP_AXES: &[&str] = &[
    "g",
    "kappa",
    "xi",
    "gamma_1d",
    "detuning",
    "spacing",
    "gamma_collective",
    "gamma_independent",
    "gamma_dephasing",
];

impl PlatformSpec {
    pub fn set(&mut self, axis: &str, value: f64) -> Result<()> {
        match axis {
            "g" => self.g = value,
            "kappa" => self.kappa = value,
            "xi" => return self.set_xi(value),
            "gamma_1d" => self.gamma_1d = value,
            "detuning" => self.detuning = value,
            "spacing" => {
                self.spacing = value;
                self.positions = None;
            }
            "gamma_collective" => self.gamma_collective = value,
            "gamma_independent" => self.gamma_independent = value,
            "gamma_dephasing" => self.gamma_dephasing = value,
            _ => return Err(Error::InvalidParameter(format!("unknown sweep axis '{axis}'"))),
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub xi: Option<f64>,
    pub n0: f64,
    pub fidelity: f64,
    pub rotated_fidelity: f64,
    pub mode_purity: f64,
    pub final_entropy: f64,
    pub subradiant_remainder: bool,
    pub wall_seconds: f64,
}

impl SweepSummary {
    pub fn of(result: &CascadeResult, wall_seconds: f64) -> Self {
        let last = result.final_diagnostics();
        SweepSummary {
            xi: result.xi(),
            n0: result.dominant_occupancy(),
            fidelity: result.fidelity,
            rotated_fidelity: result.rotated_fidelity,
            mode_purity: last.mode_purity,
            final_entropy: last.system_entropy,
            subradiant_remainder: result.subradiant_remainder,
            wall_seconds,
        }
    }
}

#[derive(Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub outcome: Result<SweepSummary>,
}

/// Run the pipeline once per value of `axis`, in parallel. Per-point
/// failures are kept in the returned rows; only an unknown axis fails the
/// whole sweep.
pub fn sweep(
    template: &PlatformSpec,
    axis: &str,
    values: &[f64],
    psi: &[C64],
    opts: &PipelineOptions,
) -> Result<Vec<SweepPoint>> {
    if !SWEEP_AXES.contains(&axis) {
        return Err(Error::InvalidParameter(format!("unknown sweep axis '{axis}'")));
    }
    Ok(values
        .par_iter()
        .map(|&value| {
            let start = Instant::now();
            let outcome = (|| {
                let mut spec = template.clone();
                spec.set(axis, value)?;
                let r = run_pipeline(&spec, psi, opts)?;
                Ok(SweepSummary::of(&r, start.elapsed().as_secs_f64()))
            })();
            SweepPoint { value, outcome }
        })
        .collect())
}
