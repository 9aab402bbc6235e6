//! Principal temporal modes of the output field and the cascade coupling of
//! the dominant one.
//!
//! The coherence matrix `G(t1, t2) = sum_i n_i conj(eta_i(t1)) eta_i(t2)` is
//! discretized with trapezoid weights `w` and the symmetric matrix
//! `W^½ G W^½` is diagonalized. An eigenvector `y` maps back to the envelope
//! `eta = conj(y / sqrt(w))`, which is normalized under the trapezoid inner
//! product.

use nalgebra::SymmetricEigen;
use rustfft::FftPlanner;

use crate::density::hermitize;
use crate::dynamics::TimeGrid;
use crate::error::{Error, Result};
use crate::operator::{CMatrix, C64, ZERO};

/// Relative Hermiticity tolerance on the coherence matrix.
pub const HERMITIAN_REL_TOL: f64 = 1e-8;
/// Eigenvalues below `-NEGATIVE_REL_TOL * n0` are an error rather than noise.
pub const NEGATIVE_REL_TOL: f64 = 1e-4;
/// Modes are retained until this fraction of the total occupancy is covered.
pub const RETAINED_FRACTION: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct TemporalMode {
    pub grid: TimeGrid,
    pub envelope: Vec<C64>,
    pub occupancy: f64,
    pub index: usize,
}

impl TemporalMode {
    /// Trapezoid inner product `<self, other> = ∫ conj(self) other dt`.
    pub fn overlap(&self, other: &TemporalMode) -> C64 {
        inner(&self.grid, &self.envelope, &other.envelope)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.overlap(self).re
    }
}

pub(crate) fn inner(grid: &TimeGrid, a: &[C64], b: &[C64]) -> C64 {
    grid.trapezoid_weights().iter().zip(a.iter().zip(b)).map(|(w, (x, y))| x.conj() * y * *w).sum()
}

#[derive(Clone, Debug)]
pub struct ModeDecomposition {
    /// Retained modes, occupancy descending.
    pub modes: Vec<TemporalMode>,
    /// All eigenvalues after clamping, descending.
    pub occupancies: Vec<f64>,
    /// `∫ G(t, t) dt` (trapezoid), equal to the sum of all eigenvalues.
    pub total: f64,
    /// Number of small negative eigenvalues clamped to zero.
    pub clamped: usize,
    pub min_raw_eigenvalue: f64,
}

impl ModeDecomposition {
    pub fn dominant(&self) -> Option<&TemporalMode> {
        self.modes.first()
    }

    /// `sum_i n_i conj(eta_i(t1)) eta_i(t2)` over the retained modes.
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.modes.first().map_or(0, |m| m.envelope.len());
        let mut g = CMatrix::zeros(n, n);
        for m in &self.modes {
            for j in 0..n {
                for k in 0..n {
                    g[(j, k)] += m.envelope[j].conj() * m.envelope[k] * m.occupancy;
                }
            }
        }
        g
    }
}

/// Diagonalize a two-time coherence matrix sampled on `grid`.
pub fn principal_modes(g: &CMatrix, grid: &TimeGrid) -> Result<ModeDecomposition> {
    let n = grid.len();
    if g.nrows() != n || g.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.nrows() });
    }
    let scale = g.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let dev = crate::density::hermiticity_error(g);
    if dev > HERMITIAN_REL_TOL * scale {
        return Err(Error::NotHermitian(dev / scale.max(f64::MIN_POSITIVE)));
    }
    let w = grid.trapezoid_weights();
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let total: f64 = (0..n).map(|j| w[j] * g[(j, j)].re).sum();
    if scale == 0.0 {
        return Ok(ModeDecomposition {
            modes: vec![],
            occupancies: vec![0.0; n],
            total: 0.0,
            clamped: 0,
            min_raw_eigenvalue: 0.0,
        });
    }
    let mut m = CMatrix::from_fn(n, n, |j, k| g[(j, k)] * (sw[j] * sw[k]));
    hermitize(&mut m);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let n0 = eig.eigenvalues[order[0]];
    let min_raw = eig.eigenvalues[order[n - 1]];
    if n0 <= 0.0 {
        return Err(Error::NegativeOccupancy { value: min_raw, largest: n0 });
    }
    if min_raw < -NEGATIVE_REL_TOL * n0 {
        return Err(Error::NegativeOccupancy { value: min_raw, largest: n0 });
    }
    let occupancies: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let clamped = order.iter().filter(|&&i| eig.eigenvalues[i] < 0.0).count();
    let positive: f64 = occupancies.iter().sum();

    let mut modes = Vec::new();
    let mut covered = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        let occ = occupancies[rank];
        if occ <= 0.0 || covered >= RETAINED_FRACTION * positive {
            break;
        }
        covered += occ;
        let col = eig.eigenvectors.column(i);
        let mut env: Vec<C64> = (0..n).map(|j| (col[j] / sw[j]).conj()).collect();
        fix_gauge(&mut env);
        modes.push(TemporalMode { grid: grid.clone(), envelope: env, occupancy: occ, index: rank });
    }
    Ok(ModeDecomposition { modes, occupancies, total, clamped, min_raw_eigenvalue: min_raw })
}

/// Rotate so the entry of largest magnitude is real and positive.
fn fix_gauge(env: &mut [C64]) {
    let Some(peak) = env.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())) else { return };
    if peak.norm() == 0.0 {
        return;
    }
    let phase = peak.conj() / peak.norm();
    env.iter_mut().for_each(|v| *v *= phase);
}

/// Time-dependent coupling `g0(t) = -conj(eta0(t)) / sqrt(max(∫_0^t |eta0|², ε))`
/// of the virtual cavity that absorbs the dominant output mode.
///
/// The envelope is interpolated linearly between grid points and its
/// cumulative norm is integrated exactly for that interpolant, so the
/// identity `|g0|² ∫_0^t |eta0|² = |eta0|²` holds at every `t` where the
/// cumulative integral exceeds `ε`.
#[derive(Clone, Debug)]
pub struct CascadeProfile {
    pub grid: TimeGrid,
    pub epsilon: f64,
    envelope: Vec<C64>,
    cumulative: Vec<f64>,
    /// `g0` at the grid points.
    pub g0: Vec<C64>,
}

pub fn cascade_profile(mode: &TemporalMode, epsilon: f64) -> Result<CascadeProfile> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("regularization floor must be positive, got {epsilon}")));
    }
    let grid = mode.grid.clone();
    let h = grid.dt();
    let raw = &mode.envelope;
    let mut cumulative = Vec::with_capacity(raw.len());
    cumulative.push(0.0);
    for k in 0..raw.len() - 1 {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + segment_integral(raw[k], raw[k + 1], h, h));
    }
    let total = *cumulative.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter("mode envelope is identically zero".into()));
    }
    let envelope: Vec<C64> = raw.iter().map(|v| v / total.sqrt()).collect();
    cumulative.iter_mut().for_each(|c| *c /= total);
    let g0 = envelope.iter().zip(&cumulative).map(|(e, c)| -e.conj() / c.max(epsilon).sqrt()).collect();
    Ok(CascadeProfile { grid, epsilon, envelope, cumulative, g0 })
}

/// `∫_0^tau |a + (b - a) s / h|² ds`.
fn segment_integral(a: C64, b: C64, h: f64, tau: f64) -> f64 {
    let slope = (b - a) / h;
    a.norm_sqr() * tau + (a.conj() * slope).re * tau * tau + slope.norm_sqr() * tau.powi(3) / 3.0
}

impl CascadeProfile {
    fn locate(&self, t: f64) -> (usize, f64) {
        let h = self.grid.dt();
        let x = ((t - self.grid.t_start()) / h).max(0.0);
        let k = (x.floor() as usize).min(self.envelope.len() - 2);
        (k, (t - self.grid.point(k)).clamp(0.0, h))
    }

    /// Interpolated envelope.
    pub fn envelope_at(&self, t: f64) -> C64 {
        let (k, tau) = self.locate(t);
        let h = self.grid.dt();
        self.envelope[k] + (self.envelope[k + 1] - self.envelope[k]) * (tau / h)
    }

    /// `∫_0^t |eta0|²` of the interpolated envelope.
    pub fn cumulative_at(&self, t: f64) -> f64 {
        let (k, tau) = self.locate(t);
        self.cumulative[k] + segment_integral(self.envelope[k], self.envelope[k + 1], self.grid.dt(), tau)
    }

    pub fn at(&self, t: f64) -> C64 {
        -self.envelope_at(t).conj() / self.cumulative_at(t).max(self.epsilon).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Angular frequencies, ascending and centered on zero.
    pub omega: Vec<f64>,
    /// `|eta~(omega)|²` normalized so that `sum power * delta_omega = 1`.
    pub power: Vec<f64>,
    pub delta_omega: f64,
    /// `sum |eta~|² delta_omega` before normalization; equals `sum |eta|² dt`.
    pub raw_total: f64,
}

/// Zero-padded discrete Fourier transform of a mode envelope,
/// `eta~(omega) = dt / sqrt(2 pi) sum_j eta_j exp(-i omega t_j)`.
pub fn mode_spectrum(mode: &TemporalMode) -> Spectrum {
    let n = mode.envelope.len();
    let m = (8 * n).next_power_of_two();
    let dt = mode.grid.dt();
    let mut buf: Vec<C64> = mode.envelope.iter().copied().chain(std::iter::repeat(ZERO)).take(m).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let delta_omega = 2.0 * std::f64::consts::PI / (m as f64 * dt);
    let scale = dt * dt / (2.0 * std::f64::consts::PI);
    let half = m / 2;
    let (mut omega, mut power) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for i in 0..m {
        // fftshift: negative frequencies first
        let k = (i + half) % m;
        let freq = if k >= half { k as f64 - m as f64 } else { k as f64 };
        omega.push(freq * delta_omega);
        power.push(buf[k].norm_sqr() * scale);
    }
    let raw_total: f64 = power.iter().sum::<f64>() * delta_omega;
    if raw_total > 0.0 {
        power.iter_mut().for_each(|p| *p /= raw_total);
    }
    Spectrum { omega, power, delta_omega, raw_total }
}
