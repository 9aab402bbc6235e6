//! Reference measurements shared by the oracle tests and the acceptance
//! report. Each returns the largest deviation from the exact answer.
#![allow(dead_code)]

use collective_emission::cascade::{
    build_internal_model, initial_state, run_pipeline, symmetric_projection, system_operators, CascadeResult,
    PipelineOptions, PlatformSpec, Representation,
};
use collective_emission::dynamics::{regression_correlation, JumpOperator};
use collective_emission::operator::{boson_ladder, qubit, site_operator};
use collective_emission::states::{prepare_spin, SpinStateSpec};
use collective_emission::{
    build_space, evolve, CMatrix, DensityState, Factor, LindbladModel, OperatorMatrix, StepControl, TimeGrid, C64,
};

pub const TIGHT: StepControl = StepControl::Adaptive { rtol: 1e-10, atol: 1e-12 };

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn one_emitter(gamma: f64) -> (LindbladModel, DensityState, OperatorMatrix) {
    let space = build_space(vec![Factor::qubit("e")]).unwrap();
    let sm = site_operator(&space, "e", &qubit::lowering()).unwrap();
    let model = LindbladModel::new(OperatorMatrix::zero(&space))
        .unwrap()
        .with_jump(JumpOperator::constant(sm.scale(c(gamma.sqrt()))));
    let rho0 = DensityState::pure(&space, &[c(1.0), c(0.0)]).unwrap();
    (model, rho0, sm)
}

/// Excited population against `exp(-γt)`.
pub fn amplitude_damping_error(gamma: f64) -> f64 {
    let (model, rho0, sm) = one_emitter(gamma);
    let grid = TimeGrid::new(0.0, 4.0, 81).unwrap();
    let traj = evolve(&model, &rho0, &grid, TIGHT).unwrap();
    let ne = sm.adjoint().mul(&sm);
    traj.states
        .iter()
        .map(|(i, rho)| (rho.expectation(&ne).re - (-gamma * grid.point(*i)).exp()).abs())
        .fold(0.0, f64::max)
}

/// Emitter and photon populations of `|e, 0>` under `g(σ+ c + c† σ-)`
/// against `cos²(gt)` and `sin²(gt)`.
pub fn vacuum_rabi_error(g: f64) -> f64 {
    let space = build_space(vec![Factor::qubit("e"), Factor::boson("c", 2)]).unwrap();
    let sm = site_operator(&space, "e", &qubit::lowering()).unwrap();
    let (a, ad) = boson_ladder(&space, "c").unwrap();
    let x = ad.mul(&sm);
    let model = LindbladModel::new(x.add(&x.adjoint()).scale(c(g))).unwrap();
    // |e, 0> is the first basis vector
    let mut psi = vec![c(0.0); space.dim()];
    psi[0] = c(1.0);
    let rho0 = DensityState::pure(&space, &psi).unwrap();
    let grid = TimeGrid::new(0.0, 10.0, 101).unwrap();
    let traj = evolve(&model, &rho0, &grid, TIGHT).unwrap();
    let (ne, nc) = (sm.adjoint().mul(&sm), ad.mul(&a));
    traj.states
        .iter()
        .map(|(i, rho)| {
            let t = grid.point(*i);
            let de = (rho.expectation(&ne).re - (g * t).cos().powi(2)).abs();
            let dc = (rho.expectation(&nc).re - (g * t).sin().powi(2)).abs();
            de.max(dc)
        })
        .fold(0.0, f64::max)
}

/// `<σ+(t1) σ-(t2)> γ` against `γ exp(-γ(t1 + t2)/2)`.
pub fn two_time_correlation_error(gamma: f64) -> f64 {
    let (model, rho0, sm) = one_emitter(gamma);
    let grid = TimeGrid::new(0.0, 6.0, 61).unwrap();
    let root = c(gamma.sqrt());
    let g1 = regression_correlation(&model, &rho0, &grid, &sm.adjoint().scale(root), &sm.scale(root), TIGHT).unwrap();
    let mut worst = 0.0f64;
    for j in 0..grid.len() {
        for k in 0..grid.len() {
            let exact = gamma * (-gamma * (grid.point(j) + grid.point(k)) / 2.0).exp();
            worst = worst.max((g1[(j, k)] - c(exact)).norm());
        }
    }
    worst
}

pub struct RankOne {
    pub n0: f64,
    pub overlap: f64,
    pub fidelity: f64,
}

/// One emitter through the whole pipeline: a single photon in one mode
/// shaped like spontaneous emission.
pub fn single_emitter_pipeline(gamma: f64) -> RankOne {
    let spec = PlatformSpec::direct(1, gamma);
    let psi = prepare_spin(&SpinStateSpec::FullyInverted, 1).unwrap();
    let r = run_pipeline(&spec, &psi, &PipelineOptions::default()).unwrap();
    let mode = r.modes.dominant().unwrap();
    let exact: Vec<C64> = r.grid.points().iter().map(|t| c((gamma * (-gamma * t).exp()).sqrt())).collect();
    let w = r.grid.trapezoid_weights();
    let dot: C64 = w.iter().zip(mode.envelope.iter().zip(&exact)).map(|(w, (a, b))| a.conj() * b * *w).sum();
    let norm: f64 = w.iter().zip(&exact).map(|(w, b)| w * b.norm_sqr()).sum();
    RankOne { n0: r.dominant_occupancy(), overlap: dot.norm() / norm.sqrt(), fidelity: r.fidelity }
}

/// `|Σ n_i - N|` over fully inverted lossless runs.
pub fn photon_sum_rule_error() -> f64 {
    let cases = [PlatformSpec::direct(3, 1.0), PlatformSpec::direct(6, 1.0), PlatformSpec::cavity(4, 1.0, 2.0)];
    cases
        .iter()
        .map(|spec| {
            let psi = prepare_spin(&SpinStateSpec::FullyInverted, spec.emitters).unwrap();
            let r = run_pipeline(spec, &psi, &PipelineOptions::default()).unwrap();
            (r.modes.occupancies.iter().sum::<f64>() - spec.emitters as f64).abs()
        })
        .fold(0.0, f64::max)
}

/// Evolve the same symmetric start on the Dicke ladder and on the qubit
/// register with identical fixed steps; returns the largest elementwise gap
/// between the ladder state and the projected register state, and between
/// the two emission correlations.
pub fn ladder_versus_register(n: usize, psi: &[C64], gamma_collective: f64) -> (f64, f64) {
    let grid = TimeGrid::new(0.0, 3.0, 13).unwrap();
    let control = StepControl::Fixed { substeps: 20 };
    let mut results = Vec::new();
    for rep in [Representation::Dicke, Representation::Qubits] {
        let spec = PlatformSpec { representation: rep, gamma_collective, ..PlatformSpec::direct(n, 1.0) };
        let model = build_internal_model(&spec).unwrap();
        let space = model.space().clone();
        let ops = system_operators(&spec, &space).unwrap();
        let rho0 = initial_state(&spec, &space, psi).unwrap();
        let traj = evolve(&model, &rho0, &grid, control).unwrap();
        let states: Vec<CMatrix> = traj
            .states
            .iter()
            .map(|(_, s)| match rep {
                Representation::Qubits => symmetric_projection(s.matrix(), n).0,
                _ => s.matrix().clone(),
            })
            .collect();
        let root = c(ops.channel_rate.sqrt());
        let g1 =
            regression_correlation(&model, &rho0, &grid, &ops.channel.adjoint().scale(root), &ops.channel.scale(root), control)
                .unwrap();
        results.push((states, g1));
    }
    let state_gap = results[0].0.iter().zip(&results[1].0).map(|(a, b)| max_abs_diff(a, b)).fold(0.0, f64::max);
    (state_gap, max_abs_diff(&results[0].1, &results[1].1))
}

/// Worst ladder/register gap over `N <= 4` and a few starting states.
pub fn ladder_register_gap() -> f64 {
    let mut worst = 0.0f64;
    for n in 1..=4 {
        for spec in [
            SpinStateSpec::FullyInverted,
            SpinStateSpec::Coherent { theta: 1.1, phi: 0.4 },
            SpinStateSpec::Dicke { m: if n % 2 == 0 { 0.0 } else { 0.5 } },
        ] {
            let psi = prepare_spin(&spec, n).unwrap();
            let (a, b) = ladder_versus_register(n, &psi, 0.3);
            worst = worst.max(a).max(b);
        }
    }
    worst
}

/// Structural health of a finished run.
#[derive(Clone, Copy, Debug, Default)]
pub struct Invariants {
    pub trace_drift: f64,
    pub hermiticity: f64,
    /// Most negative raw eigenvalue of the coherence over the largest.
    pub negative_eigenvalue: f64,
    pub orthonormality: f64,
}

impl Invariants {
    pub fn of(r: &CascadeResult) -> Self {
        let modes = &r.modes.modes;
        let mut ortho = 0.0f64;
        for (i, a) in modes.iter().enumerate() {
            for (j, b) in modes.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                ortho = ortho.max((a.overlap(b) - c(expected)).norm());
            }
        }
        Invariants {
            trace_drift: r.max_trace_drift,
            hermiticity: r.max_hermiticity_error,
            negative_eigenvalue: (-r.modes.min_raw_eigenvalue / r.dominant_occupancy()).max(0.0),
            orthonormality: ortho,
        }
    }

    pub fn worst(self, o: Invariants) -> Invariants {
        Invariants {
            trace_drift: self.trace_drift.max(o.trace_drift),
            hermiticity: self.hermiticity.max(o.hermiticity),
            negative_eigenvalue: self.negative_eigenvalue.max(o.negative_eigenvalue),
            orthonormality: self.orthonormality.max(o.orthonormality),
        }
    }
}
