//! Spherical Wigner function of a collective spin,
//! `W(θ, φ) = Σ_kq ρ_kq Y_kq(θ, φ)` with `ρ_kq = tr[ρ T_kq†]` and
//! `T_kq = Σ (-1)^(S-m') <S m; S -m'|k q> |m><m'|`.
//!
//! With this normalization `∫ W dΩ = √(4π) / √(N + 1)` for every state.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::{single_factor_dim, write_rows, MIN_RESOLUTION};
use crate::density::DensityState;
use crate::error::{Error, Result};
use crate::operator::{CMatrix, C64};

fn ln_factorial(n: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        let mut v = vec![0.0; 1024];
        for i in 1..v.len() {
            v[i] = v[i - 1] + (i as f64).ln();
        }
        v
    });
    t[n]
}

/// Clebsch–Gordan coefficient `<j1 m1; j2 m2 | j m>` from the Racah formula.
/// All arguments are doubled so half-integers are exact.
pub fn clebsch_gordan(j1: i64, m1: i64, j2: i64, m2: i64, j: i64, m: i64) -> f64 {
    if m1 + m2 != m || j < (j1 - j2).abs() || j > j1 + j2 || (j1 + j2 + j) % 2 != 0 {
        return 0.0;
    }
    if m1.abs() > j1 || m2.abs() > j2 || m.abs() > j || (j1 + m1) % 2 != 0 || (j2 + m2) % 2 != 0 || (j + m) % 2 != 0 {
        return 0.0;
    }
    let h = |x: i64| -> usize { (x / 2) as usize };
    let lf = |x: i64| ln_factorial(h(x));
    let ln_pre = 0.5
        * ((j + 1) as f64).ln()
        + 0.5 * (lf(j + j1 - j2) + lf(j - j1 + j2) + lf(j1 + j2 - j) - lf(j1 + j2 + j + 2))
        + 0.5 * (lf(j + m) + lf(j - m) + lf(j1 - m1) + lf(j1 + m1) + lf(j2 - m2) + lf(j2 + m2));
    let a = j1 + j2 - j;
    let b = j1 - m1;
    let c = j2 + m2;
    let d = j - j2 + m1;
    let e = j - j1 - m2;
    let zmin = 0.max(-d).max(-e);
    let zmax = a.min(b).min(c);
    let mut sum = 0.0;
    let mut z = zmin;
    while z <= zmax {
        let ln_den = lf(z) + lf(a - z) + lf(b - z) + lf(c - z) + lf(d + z) + lf(e + z);
        let sign = if (z / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * (ln_pre - ln_den).exp();
        z += 2;
    }
    sum
}

/// Irreducible tensor operator `T_kq` on the `N + 1` Dicke levels.
pub fn tensor_operator(emitters: usize, k: usize, q: i64) -> CMatrix {
    let d = emitters + 1;
    let s2 = emitters as i64;
    let mut t = CMatrix::zeros(d, d);
    for i in 0..d {
        let m2 = s2 - 2 * i as i64;
        for ip in 0..d {
            let mp2 = s2 - 2 * ip as i64;
            if m2 - mp2 != 2 * q {
                continue;
            }
            let sign = if ((s2 - mp2) / 2) % 2 == 0 { 1.0 } else { -1.0 };
            t[(i, ip)] = C64::new(sign * clebsch_gordan(s2, m2, s2, -mp2, 2 * k as i64, 2 * q), 0.0);
        }
    }
    t
}

/// Multipole coefficients `ρ_kq`, stored as `coeffs[k][q + k]`.
#[derive(Clone, Debug)]
pub struct Multipoles {
    pub emitters: usize,
    pub coeffs: Vec<Vec<C64>>,
}

pub fn multipoles(rho: &CMatrix) -> Multipoles {
    let n = rho.nrows() - 1;
    let coeffs = (0..=n)
        .map(|k| {
            (-(k as i64)..=k as i64)
                .map(|q| {
                    let t = tensor_operator(n, k, q);
                    rho.iter().zip(t.iter()).map(|(r, tv)| r * tv.conj()).sum()
                })
                .collect()
        })
        .collect();
    Multipoles { emitters: n, coeffs }
}

/// Orthonormal associated Legendre functions with the Condon–Shortley phase,
/// `table[k][q]` for `0 <= q <= k <= kmax`, by upward recurrence.
fn legendre_table(kmax: usize, theta: f64) -> Vec<Vec<f64>> {
    let (x, s) = (theta.cos(), theta.sin());
    let mut p = vec![vec![0.0; kmax + 1]; kmax + 1];
    p[0][0] = 1.0 / (4.0 * PI).sqrt();
    for q in 1..=kmax {
        let qf = q as f64;
        p[q][q] = -((2.0 * qf + 1.0) / (2.0 * qf)).sqrt() * s * p[q - 1][q - 1];
    }
    for q in 0..kmax {
        p[q + 1][q] = (2.0 * q as f64 + 3.0).sqrt() * x * p[q][q];
    }
    for q in 0..=kmax {
        for k in (q + 2)..=kmax {
            let (kf, qf) = (k as f64, q as f64);
            let a = ((4.0 * kf * kf - 1.0) / (kf * kf - qf * qf)).sqrt();
            let b = (((kf - 1.0).powi(2) - qf * qf) / (4.0 * (kf - 1.0).powi(2) - 1.0)).sqrt();
            p[k][q] = a * (x * p[k - 1][q] - b * p[k - 2][q]);
        }
    }
    p
}

/// `Y_kq(θ, φ)` for `-k <= q <= k`.
pub fn spherical_harmonic(k: usize, q: i64, theta: f64, phi: f64) -> C64 {
    let p = legendre_table(k, theta);
    let aq = q.unsigned_abs() as usize;
    let y = C64::from_polar(p[k][aq], aq as f64 * phi);
    if q >= 0 {
        y
    } else if aq.is_multiple_of(2) {
        y.conj()
    } else {
        -y.conj()
    }
}

impl Multipoles {
    pub fn value(&self, theta: f64, phi: f64) -> f64 {
        let p = legendre_table(self.emitters, theta);
        self.value_with(&p, phi)
    }

    fn value_with(&self, p: &[Vec<f64>], phi: f64) -> f64 {
        let mut w = 0.0;
        for (k, row) in self.coeffs.iter().enumerate() {
            w += (row[k] * p[k][0]).re;
            for q in 1..=k {
                // the ±q pair contributes twice the real part
                w += 2.0 * (row[k + q] * C64::from_polar(p[k][q], q as f64 * phi)).re;
            }
        }
        w
    }

    /// Full complex sum over all `q`, for checking reality.
    pub fn complex_value(&self, theta: f64, phi: f64) -> C64 {
        let mut w = C64::new(0.0, 0.0);
        for (k, row) in self.coeffs.iter().enumerate() {
            for q in -(k as i64)..=k as i64 {
                w += row[(q + k as i64) as usize] * spherical_harmonic(k, q, theta, phi);
            }
        }
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereGrid {
    pub ntheta: usize,
    pub nphi: usize,
}

impl SphereGrid {
    pub fn new(ntheta: usize, nphi: usize) -> Result<Self> {
        if ntheta < MIN_RESOLUTION || nphi < MIN_RESOLUTION {
            return Err(Error::InvalidParameter(format!("sphere grid needs at least {MIN_RESOLUTION} points per axis")));
        }
        Ok(SphereGrid { ntheta, nphi })
    }

    /// Polar angle from the fully excited pole, endpoints included.
    pub fn theta(&self, i: usize) -> f64 {
        PI * i as f64 / (self.ntheta - 1) as f64
    }

    pub fn phi(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.nphi as f64
    }
}

/// `values[i * nphi + j]` is `W(θ_i, φ_j)`.
#[derive(Clone, Debug)]
pub struct SphereWigner {
    pub grid: SphereGrid,
    pub values: Vec<f64>,
}

impl SphereWigner {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.nphi + j]
    }

    pub fn argmax(&self) -> (usize, usize) {
        let idx = (0..self.values.len()).max_by(|&a, &b| self.values[a].total_cmp(&self.values[b])).unwrap_or(0);
        (idx / self.grid.nphi, idx % self.grid.nphi)
    }

    /// `∫ W dΩ`: Simpson in θ for an odd point count (trapezoid otherwise)
    /// and the periodic rule in φ.
    pub fn integral(&self) -> f64 {
        let g = &self.grid;
        let (dt, dp) = (PI / (g.ntheta - 1) as f64, 2.0 * PI / g.nphi as f64);
        let simpson = g.ntheta % 2 == 1;
        let mut s = 0.0;
        for i in 0..g.ntheta {
            let edge = i == 0 || i == g.ntheta - 1;
            let w = match (simpson, edge) {
                (true, true) => 1.0 / 3.0,
                (true, false) => if i % 2 == 1 { 4.0 / 3.0 } else { 2.0 / 3.0 },
                (false, true) => 0.5,
                (false, false) => 1.0,
            };
            let row: f64 = (0..g.nphi).map(|j| self.at(i, j)).sum();
            s += w * g.theta(i).sin() * row;
        }
        s * dt * dp
    }

    pub fn to_grid_file(&self) -> String {
        let mut s = format!("# sphere {} {}\n", self.grid.ntheta, self.grid.nphi);
        write_rows(&mut s, &self.values, self.grid.ntheta, self.grid.nphi);
        s
    }
}

pub fn wigner_sphere(rho: &DensityState, grid: &SphereGrid) -> Result<SphereWigner> {
    single_factor_dim(rho, false)?;
    let mp = multipoles(rho.matrix());
    let values: Vec<f64> = (0..grid.ntheta)
        .into_par_iter()
        .flat_map_iter(|i| {
            let p = legendre_table(mp.emitters, grid.theta(i));
            (0..grid.nphi).map(|j| mp.value_with(&p, grid.phi(j))).collect::<Vec<_>>()
        })
        .collect();
    Ok(SphereWigner { grid: *grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{dicke, CMatrix};
    use crate::space::{build_space, Factor};
    use crate::states::{coherent_spin, prepare_spin, SpinStateSpec};
    use nalgebra::SymmetricEigen;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, Signed, ToPrimitive, Zero};

    fn fact(n: i64) -> BigRational {
        let mut f = BigInt::one();
        for i in 2..=n {
            f *= i;
        }
        BigRational::from_integer(f)
    }

    /// Exact squared CG coefficient with its sign, from the Racah sum in
    /// rational arithmetic (undoubled integer spins only).
    fn cg_exact(j1: i64, m1: i64, j2: i64, m2: i64, j: i64, m: i64) -> f64 {
        if m1 + m2 != m || j < (j1 - j2).abs() || j > j1 + j2 || m1.abs() > j1 || m2.abs() > j2 || m.abs() > j {
            return 0.0;
        }
        let pre = BigRational::from_integer(BigInt::from(2 * j + 1)) * fact(j + j1 - j2) * fact(j - j1 + j2)
            * fact(j1 + j2 - j)
            / fact(j1 + j2 + j + 1)
            * fact(j + m)
            * fact(j - m)
            * fact(j1 - m1)
            * fact(j1 + m1)
            * fact(j2 - m2)
            * fact(j2 + m2);
        let mut sum = BigRational::zero();
        for z in 0..=(j1 + j2) {
            let args = [z, j1 + j2 - j - z, j1 - m1 - z, j2 + m2 - z, j - j2 + m1 + z, j - j1 - m2 + z];
            if args.iter().any(|a| *a < 0) {
                continue;
            }
            let den = args.iter().fold(BigRational::one(), |acc, a| acc * fact(*a));
            let term = BigRational::one() / den;
            sum = if z % 2 == 0 { sum + term } else { sum - term };
        }
        let sq = (pre * &sum * &sum).to_f64().unwrap();
        if sum.is_negative() {
            -sq.sqrt()
        } else {
            sq.sqrt()
        }
    }

    #[test]
    fn known_coefficients() {
        let h = 0.5f64.sqrt();
        assert!((clebsch_gordan(1, 1, 1, -1, 2, 0) - h).abs() < 1e-15);
        assert!((clebsch_gordan(1, 1, 1, -1, 0, 0) - h).abs() < 1e-15);
        assert!((clebsch_gordan(1, -1, 1, 1, 0, 0) + h).abs() < 1e-15);
        assert!((clebsch_gordan(2, 2, 2, -2, 0, 0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(clebsch_gordan(2, 2, 2, 2, 2, 2), 0.0);
    }

    #[test]
    fn matches_exact_rationals_for_small_spins() {
        // integer j up to 4 covers N <= 4 at S = N/2 for even N and the k ranks
        for j1 in 0..=2i64 {
            for j in 0..=2 * j1 {
                for m1 in -j1..=j1 {
                    for m2 in -j1..=j1 {
                        let m = m1 + m2;
                        let exact = cg_exact(j1, m1, j1, m2, j, m);
                        let fast = clebsch_gordan(2 * j1, 2 * m1, 2 * j1, 2 * m2, 2 * j, 2 * m);
                        assert!((exact - fast).abs() < 1e-13, "{j1} {m1} {m2} {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn tensor_operators_are_orthonormal() {
        for n in [1usize, 3, 4, 10, 40] {
            let mut worst: f64 = 0.0;
            let ks: Vec<usize> = if n > 10 { vec![0, 1, 7, 20, 33, 40] } else { (0..=n).collect() };
            for &k in &ks {
                for q in [-(k as i64), 0, (k as i64 + 1) / 2] {
                    let t = tensor_operator(n, k, q);
                    let self_ip: C64 = t.iter().map(|v| v.norm_sqr()).sum::<f64>().into();
                    worst = worst.max((self_ip.re - 1.0).abs());
                    for &k2 in &ks {
                        if k2 != k && (q.unsigned_abs() as usize) <= k2 {
                            let t2 = tensor_operator(n, k2, q);
                            let ip: C64 = t.iter().zip(t2.iter()).map(|(a, b)| a.conj() * b).sum();
                            worst = worst.max(ip.norm());
                        }
                    }
                }
            }
            assert!(worst < 1e-9, "N={n}: {worst:e}");
        }
    }

    #[test]
    fn harmonics_known_values() {
        let (t, p) = (0.7, 1.9);
        let y10 = spherical_harmonic(1, 0, t, p);
        assert!((y10.re - (3.0 / (4.0 * PI)).sqrt() * t.cos()).abs() < 1e-14);
        let y11 = spherical_harmonic(1, 1, t, p);
        let expect = C64::from_polar(-(3.0 / (8.0 * PI)).sqrt() * t.sin(), p);
        assert!((y11 - expect).norm() < 1e-14);
        let y2m2 = spherical_harmonic(2, -2, t, p);
        let expect = C64::from_polar(0.25 * (15.0 / (2.0 * PI)).sqrt() * t.sin().powi(2), -2.0 * p);
        assert!((y2m2 - expect).norm() < 1e-14);
    }

    fn spin_rho(psi: &[C64]) -> DensityState {
        let s = build_space(vec![Factor::collective_spin("e", psi.len() - 1)]).unwrap();
        DensityState::pure(&s, psi).unwrap()
    }

    #[test]
    fn inverted_state_peaks_at_the_pole_and_is_normalized() {
        let rho = spin_rho(&prepare_spin(&SpinStateSpec::FullyInverted, 6).unwrap());
        let w = wigner_sphere(&rho, &SphereGrid::new(61, 64).unwrap()).unwrap();
        assert_eq!(w.argmax().0, 0);
        let expect = (4.0 * PI).sqrt() / 7f64.sqrt();
        assert!((w.integral() - expect).abs() < 1e-3 * expect);
    }

    #[test]
    fn dicke_zero_state_is_an_equatorial_ring() {
        let rho = spin_rho(&prepare_spin(&SpinStateSpec::Dicke { m: 0.0 }, 10).unwrap());
        let grid = SphereGrid::new(41, 32).unwrap();
        let w = wigner_sphere(&rho, &grid).unwrap();
        for i in 0..grid.ntheta {
            let row: Vec<f64> = (0..grid.nphi).map(|j| w.at(i, j)).collect();
            let spread = row.iter().copied().fold(f64::NEG_INFINITY, f64::max) - row.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(spread < 1e-8);
        }
        assert_eq!(w.argmax().0, 20);
        let expect = (4.0 * PI).sqrt() / 11f64.sqrt();
        assert!((w.integral() - expect).abs() < 1e-3 * expect);
    }

    #[test]
    fn rotation_covariance() {
        let n = 4;
        let psi = prepare_spin(&SpinStateSpec::Twisted { theta: 0.9, phi: 0.4, chi_t: 0.3 }, n).unwrap();
        // S_y in the Dicke basis and exp(-i beta S_y)
        let lower = dicke::lowering(n);
        let sy = (lower.adjoint() - &lower) * C64::new(0.0, -0.5);
        let eig = SymmetricEigen::new(sy);
        let beta = PI / 2.0;
        let phase = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -beta * l)));
        let r = &eig.eigenvectors * phase * eig.eigenvectors.adjoint();
        let rotated = &r * nalgebra::DVector::from_column_slice(&psi);
        let a = multipoles(spin_rho(&psi).matrix());
        let b = multipoles(spin_rho(rotated.as_slice()).matrix());
        let mut worst: f64 = 0.0;
        for i in 0..=16 {
            for j in 0..16 {
                let (t, p) = (PI * i as f64 / 16.0, 2.0 * PI * j as f64 / 16.0);
                let v = [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()];
                // pull the point back by a rotation of -beta about y
                let (c, s) = (beta.cos(), beta.sin());
                let u = [c * v[0] - s * v[2], v[1], s * v[0] + c * v[2]];
                let tb = u[2].clamp(-1.0, 1.0).acos();
                let pb = u[1].atan2(u[0]);
                worst = worst.max((b.value(t, p) - a.value(tb, pb)).abs());
            }
        }
        assert!(worst < 1e-6, "{worst:e}");
    }

    #[test]
    fn maps_are_real() {
        let psi = prepare_spin(&SpinStateSpec::Cat { legs: vec![(1.2, 0.3), (2.0, 2.5)], relative_phase: 0.8 }, 5).unwrap();
        let mp = multipoles(spin_rho(&psi).matrix());
        for (t, p) in [(0.3, 0.1), (1.7, 4.0), (2.9, 2.2)] {
            let z = mp.complex_value(t, p);
            assert!(z.im.abs() < 1e-10);
            assert!((z.re - mp.value(t, p)).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_constant_is_state_independent() {
        let grid = SphereGrid::new(81, 64).unwrap();
        let n = 5;
        let expect = (4.0 * PI).sqrt() / ((n + 1) as f64).sqrt();
        for psi in [coherent_spin(n, 1.0, 2.0), prepare_spin(&SpinStateSpec::Dicke { m: 0.5 }, n).unwrap()] {
            let w = wigner_sphere(&spin_rho(&psi), &grid).unwrap();
            assert!((w.integral() - expect).abs() < 1e-3 * expect);
        }
    }
}
