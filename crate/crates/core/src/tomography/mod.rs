//! Wigner functions, purity and entropy.
//!
//! Field quadratures are `x = (a + a†)/√2` and `p = (a - a†)/(i√2)`, so the
//! vacuum has variance ½ and `W(0, 0) = 1/π`. Maps hold raw values; any
//! display normalization happens at export.

mod sphere;

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::density::{hermitian_eigenvalues, DensityState};
use crate::error::{Error, Result};
use crate::operator::{CMatrix, C64};
use crate::space::FactorKind;

pub use sphere::{clebsch_gordan, multipoles, tensor_operator, wigner_sphere, Multipoles, SphereGrid, SphereWigner};

pub const MIN_RESOLUTION: usize = 16;
/// Boundary values above this fraction of the peak flag a truncated map.
pub const BOUNDARY_TOL: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseGrid {
    pub x0: f64,
    pub x1: f64,
    pub nx: usize,
    pub p0: f64,
    pub p1: f64,
    pub np: usize,
}

impl PhaseGrid {
    pub fn new(x0: f64, x1: f64, nx: usize, p0: f64, p1: f64, np: usize) -> Result<Self> {
        if nx < MIN_RESOLUTION || np < MIN_RESOLUTION {
            return Err(Error::InvalidParameter(format!("phase grid needs at least {MIN_RESOLUTION} points per axis")));
        }
        if !(x0.is_finite() && x1.is_finite() && p0.is_finite() && p1.is_finite()) || x1 <= x0 || p1 <= p0 {
            return Err(Error::InvalidParameter("phase grid ranges must be finite and increasing".into()));
        }
        Ok(PhaseGrid { x0, x1, nx, p0, p1, np })
    }

    pub fn square(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n, -half_width, half_width, n)
    }

    /// Square grid wide enough for any state supported below `cutoff` photons.
    pub fn for_cutoff(cutoff: usize, n: usize) -> Result<Self> {
        Self::square(((2 * cutoff + 1) as f64).sqrt() + 4.0, n)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + (self.x1 - self.x0) * i as f64 / (self.nx - 1) as f64
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p0 + (self.p1 - self.p0) * j as f64 / (self.np - 1) as f64
    }

    pub fn dx(&self) -> f64 {
        (self.x1 - self.x0) / (self.nx - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p1 - self.p0) / (self.np - 1) as f64
    }
}

/// Field Wigner map; `values[i * np + j]` is `W(x_i, p_j)`.
#[derive(Clone, Debug)]
pub struct FieldWigner {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
}

impl FieldWigner {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.np + j]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Trapezoid estimate of `∫∫ W dx dp`.
    pub fn integral(&self) -> f64 {
        let g = &self.grid;
        let w = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let mut s = 0.0;
        for i in 0..g.nx {
            for j in 0..g.np {
                s += w(i, g.nx) * w(j, g.np) * self.at(i, j);
            }
        }
        s * g.dx() * g.dp()
    }

    /// Largest `|W|` on the outer frame of the grid.
    pub fn boundary_max(&self) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for i in 0..g.nx {
            for j in 0..g.np {
                if i == 0 || j == 0 || i == g.nx - 1 || j == g.np - 1 {
                    m = m.max(self.at(i, j).abs());
                }
            }
        }
        m
    }

    pub fn to_grid_file(&self) -> String {
        let g = &self.grid;
        let mut s = format!("# wigner {} {} {} {} {} {}\n", g.x0, g.x1, g.nx, g.p0, g.p1, g.np);
        write_rows(&mut s, &self.values, g.nx, g.np);
        s
    }
}

pub(crate) fn write_rows(s: &mut String, values: &[f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(|v| format!("{v:.10e}")).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
}

fn single_factor_dim(rho: &DensityState, boson: bool) -> Result<usize> {
    let f = rho.space().factors();
    let ok = f.len() == 1
        && match f[0].kind {
            FactorKind::Boson { .. } => boson,
            FactorKind::CollectiveSpin { .. } => !boson,
            FactorKind::Qubit => false,
        };
    if !ok {
        let expected = if boson { "single boson" } else { "single collective-spin" };
        return Err(Error::WrongFactorKind { label: f.iter().map(|x| x.label.as_str()).collect::<Vec<_>>().join(","), expected });
    }
    Ok(rho.space().dim())
}

/// `W(x, p) = (1/π) tr[rho D(2α) Π]` with `α = (x + ip)/√2`, using the
/// Laguerre form of the displacement matrix elements.
pub fn wigner_field(rho: &DensityState, grid: &PhaseGrid) -> Result<FieldWigner> {
    single_factor_dim(rho, true)?;
    let w = wigner_field_unchecked(rho.matrix(), grid);
    let max = w.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let boundary = w.boundary_max();
    if boundary > BOUNDARY_TOL * max {
        return Err(Error::GridTooNarrow { boundary, max });
    }
    Ok(w)
}

/// Same as [`wigner_field`] on a raw Fock-basis matrix, without the
/// boundary check.
pub fn wigner_field_unchecked(rho: &CMatrix, grid: &PhaseGrid) -> FieldWigner {
    let values: Vec<f64> = (0..grid.nx * grid.np)
        .into_par_iter()
        .map(|idx| wigner_point(rho, grid.x(idx / grid.np), grid.p(idx % grid.np)))
        .collect();
    FieldWigner { grid: *grid, values }
}

pub fn wigner_point(rho: &CMatrix, x: f64, p: f64) -> f64 {
    let d = rho.nrows();
    let beta = C64::new(x, p) * std::f64::consts::SQRT_2;
    let r = beta.norm_sqr();
    let e = (-r / 2.0).exp();
    let mut total = 0.0;
    let mut lag = vec![0.0; d];
    // beta^k / sqrt(k!)
    let mut lead = C64::new(1.0, 0.0);
    for k in 0..d {
        if k > 0 {
            lead *= beta / (k as f64).sqrt();
        }
        laguerre(d - k, k as f64, r, &mut lag);
        // sqrt(m! k! / (m+k)!) running product
        let mut ratio = 1.0;
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..d - k {
            if m > 0 {
                ratio *= (m as f64 / (m + k) as f64).sqrt();
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            acc += rho[(m, m + k)] * (sign * ratio * lag[m]);
        }
        let term = acc * lead * e;
        total += if k == 0 { term.re } else { 2.0 * term.re };
    }
    total / PI
}

/// `L_m^{(alpha)}(x)` for `m < count`.
fn laguerre(count: usize, alpha: f64, x: f64, out: &mut [f64]) {
    if count == 0 {
        return;
    }
    out[0] = 1.0;
    if count > 1 {
        out[1] = 1.0 + alpha - x;
    }
    for j in 1..count.saturating_sub(1) {
        let jf = j as f64;
        out[j + 1] = ((2.0 * jf + 1.0 + alpha - x) * out[j] - (jf + alpha) * out[j - 1]) / (jf + 1.0);
    }
}

/// Von Neumann entropy (natural log, `0 ln 0 = 0`) and purity.
pub fn entropy_and_purity(rho: &DensityState) -> (f64, f64) {
    (von_neumann_entropy(rho.matrix()), rho.purity())
}

pub fn von_neumann_entropy(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).iter().filter(|l| **l > 0.0).map(|l| -l * l.ln()).sum::<f64>().max(0.0)
}

/// Write a map as a binary portable pixmap with a diverging palette:
/// blue for negative, white for zero, red for positive, scaled by `max |v|`.
pub fn write_ppm(path: &Path, values: &[f64], rows: usize, cols: usize) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::DimensionMismatch { expected: rows * cols, got: values.len() });
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut out = format!("P6\n{cols} {rows}\n255\n").into_bytes();
    // first axis runs down the image
    for r in 0..rows {
        for c in 0..cols {
            let t = (values[r * cols + c] / scale).clamp(-1.0, 1.0);
            let fade = (255.0 * (1.0 - t.abs())).round() as u8;
            out.extend_from_slice(&if t >= 0.0 { [255, fade, fade] } else { [fade, fade, 255] });
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_space, Factor};
    use crate::states::{hermite_functions, prepare_photon_target, PhotonTargetSpec};

    fn fock_state(d: usize, psi: &[C64]) -> DensityState {
        let s = build_space(vec![Factor::boson("a", d)]).unwrap();
        DensityState::pure(&s, psi).unwrap()
    }

    fn basis(d: usize, n: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); d];
        v[n] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn origin_values() {
        let vac = fock_state(4, &basis(4, 0));
        let one = fock_state(4, &basis(4, 1));
        assert!((wigner_point(vac.matrix(), 0.0, 0.0) - 1.0 / PI).abs() < 1e-12);
        assert!((wigner_point(one.matrix(), 0.0, 0.0) + 1.0 / PI).abs() < 1e-12);
        // vacuum Gaussian exp(-(x²+p²))/π
        let v = wigner_point(vac.matrix(), 0.7, -0.4);
        assert!((v - (-(0.49 + 0.16f64)).exp() / PI).abs() < 1e-12);
    }

    #[test]
    fn coherent_state_peak() {
        let alpha = C64::new(1.0, 0.0);
        let psi = prepare_photon_target(&PhotonTargetSpec::Coherent { alpha }, 20).unwrap();
        let w = wigner_field(&fock_state(20, &psi), &PhaseGrid::square(6.0, 121).unwrap()).unwrap();
        let (mut best, mut at) = (f64::NEG_INFINITY, (0.0, 0.0));
        for i in 0..w.grid.nx {
            for j in 0..w.grid.np {
                if w.at(i, j) > best {
                    best = w.at(i, j);
                    at = (w.grid.x(i), w.grid.p(j));
                }
            }
        }
        assert!((at.0 - 2f64.sqrt()).abs() <= w.grid.dx() && at.1.abs() <= w.grid.dp() / 2.0);
        let exact = wigner_point(&(fock_state(20, &psi).into_matrix()), 2f64.sqrt(), 0.0);
        assert!((exact - 1.0 / PI).abs() < 1e-6);
        assert!((w.integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn narrow_grid_rejected() {
        let rho = fock_state(6, &basis(6, 5));
        assert!(matches!(wigner_field(&rho, &PhaseGrid::square(2.0, 32).unwrap()), Err(Error::GridTooNarrow { .. })));
        assert!(PhaseGrid::square(2.0, 8).is_err());
    }

    #[test]
    fn position_marginal_matches_wavefunction() {
        let d = 12;
        let h = 0.5f64.sqrt();
        let mut sup = basis(d, 0);
        sup[0] = C64::new(h, 0.0);
        sup[3] = C64::new(0.0, h);
        let coh = prepare_photon_target(&PhotonTargetSpec::Coherent { alpha: C64::new(0.6, 0.3) }, d).unwrap();
        for psi in [basis(d, 0), basis(d, 1), coh, sup] {
            let rho = fock_state(d, &psi);
            let grid = PhaseGrid::new(-4.0, 4.0, 17, -9.0, 9.0, 721).unwrap();
            let w = wigner_field_unchecked(rho.matrix(), &grid);
            let mut hf = Vec::new();
            for i in 0..grid.nx {
                let marginal: f64 = (0..grid.np).map(|j| w.at(i, j)).sum::<f64>() * grid.dp();
                hermite_functions(grid.x(i), d, &mut hf);
                let amp: C64 = psi.iter().zip(&hf).map(|(c, f)| c * f).sum();
                assert!((marginal - amp.norm_sqr()).abs() < 1e-3, "x={}", grid.x(i));
            }
        }
    }

    #[test]
    fn entropy_examples() {
        let s = build_space(vec![Factor::qubit("q")]).unwrap();
        let pure = DensityState::pure(&s, &[C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let (e, p) = entropy_and_purity(&pure);
        assert!(e.abs() < 1e-8 && (p - 1.0).abs() < 1e-8);
        let mixed = DensityState::new(&s, CMatrix::identity(2, 2) * C64::new(0.5, 0.0)).unwrap();
        let (e, p) = entropy_and_purity(&mixed);
        assert!((e - 2f64.ln()).abs() < 1e-12 && (p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn grid_file_header_and_shape() {
        let rho = fock_state(3, &basis(3, 0));
        let w = wigner_field(&rho, &PhaseGrid::new(-5.0, 5.0, 16, -6.0, 6.0, 20).unwrap()).unwrap();
        let text = w.to_grid_file();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# wigner -5 5 16 -6 6 20");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 16);
        assert!(rows.iter().all(|r| r.split_whitespace().count() == 20));
    }

    #[test]
    fn ppm_export() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ppm");
        write_ppm(&path, &[1.0, -1.0, 0.0, 0.5], 2, 2).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 12..bytes.len() - 9], &[255, 0, 0]);
        assert!(write_ppm(&path, &[1.0], 2, 2).is_err());
    }
}
