//! Shared fixtures for the benchmarks.

use collective_emission::cascade::{build_internal_model, initial_state, PlatformSpec};
use collective_emission::states::{prepare_spin, SpinStateSpec};
use collective_emission::{DensityState, LindbladModel, CMatrix, C64};

/// Internal model of six emitters half a wavelength apart, started in a
/// coherent state on the equator.
pub fn waveguide_source() -> (LindbladModel, DensityState) {
    let spec = PlatformSpec::waveguide(6, 1.0, 0.5);
    source(&spec, &SpinStateSpec::Coherent { theta: std::f64::consts::FRAC_PI_2, phi: 0.0 })
}

/// Ten fully inverted emitters coupled to a cavity at `xi = 3`.
pub fn cavity_source() -> (LindbladModel, DensityState) {
    let mut spec = PlatformSpec::cavity(10, 1.0, 1.0);
    spec.set_xi(3.0).expect("cavity accepts xi");
    source(&spec, &SpinStateSpec::FullyInverted)
}

fn source(spec: &PlatformSpec, state: &SpinStateSpec) -> (LindbladModel, DensityState) {
    let model = build_internal_model(spec).expect("valid platform");
    let psi = prepare_spin(state, spec.emitters).expect("valid state");
    let rho = initial_state(spec, model.space(), &psi).expect("state fits the space");
    (model, rho)
}

/// Rank-two exponential kernel `G(t1, t2)` sampled on `n` points of `[0, t_end]`.
pub fn two_mode_kernel(n: usize, t_end: f64) -> CMatrix {
    let t = |j: usize| t_end * j as f64 / (n - 1) as f64;
    CMatrix::from_fn(n, n, |j, k| {
        let (a, b) = (t(j), t(k));
        let slow = (-(a + b) / 2.0).exp();
        let fast = 2.0 * (-(a + b)).exp() * C64::from_polar(1.0, 0.7 * (b - a));
        fast + C64::new(slow, 0.0)
    })
}

/// Pure Fock state `|n>` in a space of dimension `d`.
pub fn fock_matrix(n: usize, d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    m[(n, n)] = C64::new(1.0, 0.0);
    m
}
