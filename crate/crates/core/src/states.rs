//! Initial emitter states, photonic target states and fidelities.
//!
//! Spin states live in the Dicke basis, index `i` holding `m = N/2 - i`, so
//! index 0 is the fully inverted state and index `i` carries `N - i`
//! excitations. Photonic states live in the Fock basis with quadratures
//! `x = (a + a†)/√2`, `p = (a - a†)/(i√2)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::density::DensityState;
use crate::error::{Error, Result};
use crate::operator::{C64, ZERO};

/// Largest truncation leakage tolerated when building photonic targets.
pub const LEAKAGE_LIMIT: f64 = 1e-4;
const NORM_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum SpinStateSpec {
    FullyInverted,
    Dicke { m: f64 },
    Coherent { theta: f64, phi: f64 },
    /// `sum_j exp(i j phase) |theta_j, phi_j>`, normalized.
    Cat { legs: Vec<(f64, f64)>, relative_phase: f64 },
    /// `exp(-i chi_t Sz²)` applied to a coherent state.
    Twisted { theta: f64, phi: f64, chi_t: f64 },
    /// Approximate grid state: spin-coherent peaks on the great circle
    /// `phi ∈ {0, π}` near the ground pole, placed where an oscillator grid
    /// state with the same `delta` and `spacing` has its position peaks.
    GkpCircle { delta: f64, spacing: f64 },
    /// Dicke image of a photonic state: `k` photons map to `k` excitations.
    PhotonImage(PhotonTargetSpec),
    FromFile(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum PhotonTargetSpec {
    Fock { n: usize },
    Coherent { alpha: C64 },
    /// `|alpha> + parity |-alpha>`, normalized; parity is `+1` or `-1`.
    Cat { alpha: C64, parity: f64 },
    /// Finite-energy grid state: peaks of width `delta` at `x = s * spacing`
    /// under a Gaussian envelope `exp(-delta² x² / 2)`.
    Gkp { delta: f64, spacing: f64 },
    FromFile(String),
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn norm_of(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(mut v: Vec<C64>, what: &str) -> Result<Vec<C64>> {
    let norm = norm_of(&v);
    if !(norm > NORM_FLOOR) {
        return Err(Error::Unnormalizable(format!("{what} has norm {norm:e}")));
    }
    v.iter_mut().for_each(|c| *c /= norm);
    Ok(v)
}

/// Spin coherent state obtained by rotating the fully inverted state by
/// `theta` about the axis at azimuth `phi`.
pub fn coherent_spin(emitters: usize, theta: f64, phi: f64) -> Vec<C64> {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    (0..=emitters)
        .map(|i| {
            let mag = binomial(emitters, i).sqrt() * c.powi((emitters - i) as i32) * s.powi(i as i32);
            C64::from_polar(mag, phi * i as f64)
        })
        .collect()
}

pub fn prepare_spin(spec: &SpinStateSpec, emitters: usize) -> Result<Vec<C64>> {
    if emitters == 0 {
        return Err(Error::InvalidParameter("emitter count must be at least 1".into()));
    }
    let n = emitters;
    let v = match spec {
        SpinStateSpec::FullyInverted => coherent_spin(n, 0.0, 0.0),
        SpinStateSpec::Dicke { m } => {
            let i = n as f64 / 2.0 - m;
            if i.fract() != 0.0 || i < 0.0 || i > n as f64 {
                return Err(Error::InvalidParameter(format!("m = {m} is not a Dicke level for N = {n}")));
            }
            let mut v = vec![ZERO; n + 1];
            v[i as usize] = C64::new(1.0, 0.0);
            v
        }
        SpinStateSpec::Coherent { theta, phi } => coherent_spin(n, *theta, *phi),
        SpinStateSpec::Cat { legs, relative_phase } => {
            if legs.is_empty() {
                return Err(Error::InvalidParameter("cat state needs at least one leg".into()));
            }
            let mut v = vec![ZERO; n + 1];
            for (j, &(theta, phi)) in legs.iter().enumerate() {
                let w = C64::from_polar(1.0, relative_phase * j as f64);
                for (a, b) in v.iter_mut().zip(coherent_spin(n, theta, phi)) {
                    *a += w * b;
                }
            }
            normalize(v, "spin cat")?
        }
        SpinStateSpec::Twisted { theta, phi, chi_t } => {
            let mut v = coherent_spin(n, *theta, *phi);
            for (i, c) in v.iter_mut().enumerate() {
                let m = n as f64 / 2.0 - i as f64;
                *c *= C64::from_polar(1.0, -chi_t * m * m);
            }
            v
        }
        SpinStateSpec::GkpCircle { delta, spacing } => gkp_circle(n, *delta, *spacing)?,
        SpinStateSpec::PhotonImage(target) => fock_to_dicke(&prepare_photon_target(target, n + 1)?, n)?,
        SpinStateSpec::FromFile(path) => {
            let (kind, v) = read_state(Path::new(path))?;
            match kind {
                // already normalized file contents are returned bit for bit
                StateKind::Dicke(m) if m == n && (norm_of(&v) - 1.0).abs() < 1e-10 => return Ok(v),
                StateKind::Dicke(m) if m == n => v,
                StateKind::Dicke(m) => return Err(Error::DimensionMismatch { expected: n + 1, got: m + 1 }),
                StateKind::Fock(_) => return Err(Error::InvalidParameter(format!("{path} holds a Fock state"))),
            }
        }
    };
    normalize(v, "spin state")
}

fn gkp_circle(n: usize, delta: f64, spacing: f64) -> Result<Vec<C64>> {
    if !(delta > 0.0 && spacing > 0.0) {
        return Err(Error::InvalidParameter("grid state needs positive delta and spacing".into()));
    }
    let mut v = vec![ZERO; n + 1];
    let mut s: i64 = 0;
    loop {
        let x = s as f64 * spacing;
        let w = (-delta * delta * x * x / 2.0).exp();
        // |alpha| = |x| / √2 maps to a polar angle from the ground pole
        let r = x.abs() / (2.0 * n as f64).sqrt();
        if w < 1e-10 || r >= 1.0 {
            break;
        }
        let theta = PI - 2.0 * r.asin();
        for sign in if s == 0 { vec![0.0] } else { vec![0.0, PI] } {
            for (a, b) in v.iter_mut().zip(coherent_spin(n, theta, sign)) {
                *a += b * w;
            }
        }
        s += 1;
    }
    normalize(v, "grid spin state")
}

fn coherent_amplitudes(alpha: C64, cutoff: usize) -> Vec<C64> {
    let mut v = Vec::with_capacity(cutoff);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for k in 0..cutoff {
        v.push(c);
        c *= alpha / ((k + 1) as f64).sqrt();
    }
    v
}

fn check_leakage(captured: f64, total: f64) -> Result<()> {
    let leakage = 1.0 - captured / total;
    if leakage > LEAKAGE_LIMIT {
        return Err(Error::TruncationLeakage { leakage, limit: LEAKAGE_LIMIT });
    }
    Ok(())
}

pub fn prepare_photon_target(spec: &PhotonTargetSpec, cutoff: usize) -> Result<Vec<C64>> {
    if cutoff < 1 {
        return Err(Error::InvalidParameter("cutoff must be positive".into()));
    }
    let v = match spec {
        PhotonTargetSpec::Fock { n } => {
            if *n >= cutoff {
                return Err(Error::TruncationLeakage { leakage: 1.0, limit: LEAKAGE_LIMIT });
            }
            let mut v = vec![ZERO; cutoff];
            v[*n] = C64::new(1.0, 0.0);
            v
        }
        PhotonTargetSpec::Coherent { alpha } => {
            let v = coherent_amplitudes(*alpha, cutoff);
            check_leakage(v.iter().map(|c| c.norm_sqr()).sum(), 1.0)?;
            v
        }
        PhotonTargetSpec::Cat { alpha, parity } => {
            let plus = coherent_amplitudes(*alpha, cutoff);
            let minus = coherent_amplitudes(-alpha, cutoff);
            let v: Vec<C64> = plus.iter().zip(&minus).map(|(a, b)| a + b * parity).collect();
            let total = 2.0 + 2.0 * parity * (-2.0 * alpha.norm_sqr()).exp();
            if total < NORM_FLOOR {
                return Err(Error::Unnormalizable(format!("cat with alpha = {alpha} and parity {parity}")));
            }
            check_leakage(v.iter().map(|c| c.norm_sqr()).sum(), total)?;
            v
        }
        PhotonTargetSpec::Gkp { delta, spacing } => gkp_fock(*delta, *spacing, cutoff)?,
        PhotonTargetSpec::FromFile(path) => {
            let (kind, v) = read_state(Path::new(path))?;
            match kind {
                StateKind::Fock(d) if d == cutoff => v,
                StateKind::Fock(d) => return Err(Error::DimensionMismatch { expected: cutoff, got: d }),
                StateKind::Dicke(_) => return Err(Error::InvalidParameter(format!("{path} holds a Dicke state"))),
            }
        }
    };
    normalize(v, "photonic target")
}

/// Hermite functions `<x|n>` for `n < count`.
pub(crate) fn hermite_functions(x: f64, count: usize, out: &mut Vec<f64>) {
    out.clear();
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-x * x / 2.0).exp();
    for n in 0..count {
        out.push(cur);
        let next = (2.0 / (n + 1) as f64).sqrt() * x * cur - (n as f64 / (n + 1) as f64).sqrt() * prev;
        prev = cur;
        cur = next;
    }
}

fn gkp_fock(delta: f64, spacing: f64, cutoff: usize) -> Result<Vec<C64>> {
    if !(delta > 0.0 && spacing > 0.0) {
        return Err(Error::InvalidParameter("grid state needs positive delta and spacing".into()));
    }
    let reach = (2.0 * 28.0f64).sqrt() / delta;
    let peaks: Vec<(f64, f64)> = (0..)
        .map(|s| s as f64 * spacing)
        .take_while(|x| *x <= reach)
        .flat_map(|x| if x == 0.0 { vec![x] } else { vec![x, -x] })
        .map(|x| (x, (-delta * delta * x * x / 2.0).exp()))
        .collect();
    let wave = |x: f64| peaks.iter().map(|(c, w)| w * (-(x - c).powi(2) / (2.0 * delta * delta)).exp()).sum::<f64>();
    let edge = reach + 10.0 * delta + ((2 * cutoff + 1) as f64).sqrt() + 8.0;
    let dx = (delta / 20.0).min(0.02);
    let steps = (2.0 * edge / dx).ceil() as usize;
    let mut coeffs = vec![0.0; cutoff];
    let mut total = 0.0;
    let mut h = Vec::with_capacity(cutoff);
    for j in 0..=steps {
        let x = -edge + j as f64 * dx;
        let w = if j == 0 || j == steps { 0.5 * dx } else { dx };
        let f = wave(x);
        total += w * f * f;
        hermite_functions(x, cutoff, &mut h);
        for (c, hn) in coeffs.iter_mut().zip(&h) {
            *c += w * hn * f;
        }
    }
    let captured: f64 = coeffs.iter().map(|c| c * c).sum();
    check_leakage(captured, total)?;
    Ok(coeffs.into_iter().map(|c| C64::new(c, 0.0)).collect())
}

/// Fock image of a Dicke vector: `k` excitations become `k` photons.
pub fn dicke_to_fock(psi: &[C64]) -> Vec<C64> {
    psi.iter().rev().copied().collect()
}

/// Dicke image of a Fock vector; amplitudes beyond `N` photons must vanish.
pub fn fock_to_dicke(psi: &[C64], emitters: usize) -> Result<Vec<C64>> {
    if psi.iter().skip(emitters + 1).any(|c| c.norm() > 0.0) {
        return Err(Error::DimensionMismatch { expected: emitters + 1, got: psi.len() });
    }
    let mut v = vec![ZERO; emitters + 1];
    for (k, c) in psi.iter().take(emitters + 1).enumerate() {
        v[emitters - k] = *c;
    }
    Ok(v)
}

/// Embed a Dicke vector into the space of `N` qubit factors listed in order,
/// each with local basis `(|e>, |g>)`; the first factor is most significant.
pub fn dicke_to_qubits(psi: &[C64]) -> Vec<C64> {
    let n = psi.len() - 1;
    let mut out = vec![ZERO; 1 << n];
    for (flat, amp) in out.iter_mut().enumerate() {
        // a set bit means ground
        let ground = flat.count_ones() as usize;
        *amp = psi[ground] / binomial(n, ground).sqrt();
    }
    out
}

/// `<target| rho |target>`.
pub fn fidelity(rho: &DensityState, target: &[C64]) -> Result<f64> {
    let m = rho.matrix();
    if target.len() != m.nrows() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: target.len() });
    }
    let mut f = ZERO;
    for j in 0..target.len() {
        if target[j] == ZERO {
            continue;
        }
        let row: C64 = (0..target.len()).map(|k| m[(j, k)] * target[k]).sum();
        f += target[j].conj() * row;
    }
    Ok(f.re.clamp(0.0, 1.0))
}

/// Fidelity maximized over the phase-space rotation `exp(i phi a†a)` of the
/// target. The output mode has no intrinsic phase reference, so this is the
/// gauge-independent figure. Returns `(fidelity, phi)`.
pub fn rotated_fidelity(rho: &DensityState, target: &[C64]) -> Result<(f64, f64)> {
    let rotate = |phi: f64| -> Vec<C64> {
        target.iter().enumerate().map(|(n, c)| c * C64::from_polar(1.0, phi * n as f64)).collect()
    };
    let eval = |phi: f64| fidelity(rho, &rotate(phi));
    let samples = 720;
    let mut best = (eval(0.0)?, 0.0);
    for s in 1..samples {
        let phi = 2.0 * PI * s as f64 / samples as f64;
        let f = eval(phi)?;
        if f > best.0 {
            best = (f, phi);
        }
    }
    // golden-section refinement inside the bracketing cell
    let step = 2.0 * PI / samples as f64;
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if eval(c)? > eval(d)? {
            b = d;
        } else {
            a = c;
        }
    }
    let phi = 0.5 * (a + b);
    let f = eval(phi)?;
    Ok(if f > best.0 { (f, phi.rem_euclid(2.0 * PI)) } else { best })
}

/// Mean spin vector and the smallest variance of a spin component
/// perpendicular to it.
pub fn spin_moments(psi: &[C64]) -> ([f64; 3], f64) {
    let n = psi.len() - 1;
    let s = n as f64 / 2.0;
    let m: Vec<f64> = (0..=n).map(|i| s - i as f64).collect();
    // S- |i> = l_i |i+1>
    let l: Vec<f64> = (0..n).map(|i| (s * (s + 1.0) - m[i] * (m[i] - 1.0)).sqrt()).collect();
    let exp_sz: f64 = psi.iter().zip(&m).map(|(c, mi)| c.norm_sqr() * mi).sum();
    let exp_sz2: f64 = psi.iter().zip(&m).map(|(c, mi)| c.norm_sqr() * mi * mi).sum();
    // <S+> = sum conj(psi_i) l_i psi_{i+1}
    let sp: C64 = (0..n).map(|i| psi[i].conj() * psi[i + 1] * l[i]).sum();
    // <S+²>
    let sp2: C64 = (0..n.saturating_sub(1)).map(|i| psi[i].conj() * psi[i + 2] * l[i] * l[i + 1]).sum();
    // <S+S-> and <S-S+>
    let spsm: f64 = (0..n).map(|i| psi[i].norm_sqr() * l[i] * l[i]).sum();
    let smsp: f64 = (0..n).map(|i| psi[i + 1].norm_sqr() * l[i] * l[i]).sum();
    let sx = sp.re;
    let sy = sp.im;
    let sxx = 0.25 * (2.0 * sp2.re + spsm + smsp);
    let syy = 0.25 * (-2.0 * sp2.re + spsm + smsp);
    let sxy = 0.5 * sp2.im;
    // symmetrized second moments
    let sxz = sz_cross(psi, &m, &l, false);
    let syz = sz_cross(psi, &m, &l, true);
    let mean = [sx, sy, exp_sz];
    let cov = [
        [sxx - sx * sx, sxy - sx * sy, sxz - sx * exp_sz],
        [sxy - sx * sy, syy - sy * sy, syz - sy * exp_sz],
        [sxz - sx * exp_sz, syz - sy * exp_sz, exp_sz2 - exp_sz * exp_sz],
    ];
    let norm = (sx * sx + sy * sy + exp_sz * exp_sz).sqrt();
    let axis = if norm > 0.0 { [sx / norm, sy / norm, exp_sz / norm] } else { [0.0, 0.0, 1.0] };
    // orthonormal pair perpendicular to the mean spin
    let helper = if axis[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let u = normalize3(cross(axis, helper));
    let v = cross(axis, u);
    let q = |a: [f64; 3], b: [f64; 3]| -> f64 {
        (0..3).map(|i| (0..3).map(|j| a[i] * cov[i][j] * b[j]).sum::<f64>()).sum()
    };
    let (vuu, vvv, vuv) = (q(u, u), q(v, v), q(u, v));
    let min = 0.5 * (vuu + vvv) - (0.25 * (vuu - vvv).powi(2) + vuv * vuv).sqrt();
    (mean, min)
}

/// `<{S_x or S_y, S_z}>/2`.
fn sz_cross(psi: &[C64], m: &[f64], l: &[f64], y: bool) -> f64 {
    // <S+ Sz + Sz S+>/2 = sum conj(psi_i) l_i psi_{i+1} (m_{i+1} + m_i)/2
    let v: C64 = (0..l.len()).map(|i| psi[i].conj() * psi[i + 1] * l[i] * (m[i] + m[i + 1]) * 0.5).sum();
    if y {
        v.im
    } else {
        v.re
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize3(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateKind {
    Dicke(usize),
    Fock(usize),
}

impl StateKind {
    pub fn dim(&self) -> usize {
        match *self {
            StateKind::Dicke(n) => n + 1,
            StateKind::Fock(d) => d,
        }
    }
}

pub fn format_state(kind: StateKind, psi: &[C64]) -> String {
    let mut s = match kind {
        StateKind::Dicke(n) => format!("# dicke {n}\n"),
        StateKind::Fock(d) => format!("# fock {d}\n"),
    };
    for (i, c) in psi.iter().enumerate() {
        let _ = writeln!(s, "{i} {} {}", c.re, c.im);
    }
    s
}

pub fn parse_state(text: &str, origin: &str) -> Result<(StateKind, Vec<C64>)> {
    let err = |line: usize, message: String| Error::Parse { path: origin.to_string(), line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty state file".into()))?;
    let words: Vec<&str> = header.split_whitespace().collect();
    let kind = match words.as_slice() {
        ["#", "dicke", n] => StateKind::Dicke(n.parse().map_err(|_| err(1, format!("bad emitter count `{n}`")))?),
        ["#", "fock", d] => StateKind::Fock(d.parse().map_err(|_| err(1, format!("bad cutoff `{d}`")))?),
        _ => return Err(err(1, format!("expected `# dicke N` or `# fock d`, got `{header}`"))),
    };
    let mut psi = vec![ZERO; kind.dim()];
    for (no, line) in lines {
        if line.trim_start().starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(err(no + 1, "expected `index Re Im`".into()));
        }
        let i: usize = f[0].parse().map_err(|_| err(no + 1, format!("bad index `{}`", f[0])))?;
        let re: f64 = f[1].parse().map_err(|_| err(no + 1, format!("bad number `{}`", f[1])))?;
        let im: f64 = f[2].parse().map_err(|_| err(no + 1, format!("bad number `{}`", f[2])))?;
        if i >= psi.len() {
            return Err(err(no + 1, format!("index {i} outside dimension {}", psi.len())));
        }
        psi[i] = C64::new(re, im);
    }
    Ok((kind, psi))
}

pub fn read_state(path: &Path) -> Result<(StateKind, Vec<C64>)> {
    parse_state(&std::fs::read_to_string(path)?, &path.display().to_string())
}

pub fn write_state(path: &Path, kind: StateKind, psi: &[C64]) -> Result<()> {
    if psi.len() != kind.dim() {
        return Err(Error::DimensionMismatch { expected: kind.dim(), got: psi.len() });
    }
    std::fs::write(path, format_state(kind, psi))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_space, Factor};
    use proptest::prelude::*;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    fn norm(v: &[C64]) -> f64 {
        v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn coherent_limits() {
        let a = prepare_spin(&SpinStateSpec::Coherent { theta: 0.0, phi: 1.3 }, 5).unwrap();
        let b = prepare_spin(&SpinStateSpec::FullyInverted, 5).unwrap();
        let d = prepare_spin(&SpinStateSpec::Dicke { m: 2.5 }, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, d);
        let v = prepare_spin(&SpinStateSpec::Coherent { theta: PI / 2.0, phi: 0.0 }, 2).unwrap();
        let expect = [0.5, 0.5f64.sqrt(), 0.5];
        for (x, e) in v.iter().zip(expect) {
            assert!((x - c(e)).norm() < 1e-15);
        }
    }

    #[test]
    fn dicke_level_validation() {
        assert!(prepare_spin(&SpinStateSpec::Dicke { m: 0.5 }, 4).is_err());
        assert!(prepare_spin(&SpinStateSpec::Dicke { m: 3.0 }, 4).is_err());
        let v = prepare_spin(&SpinStateSpec::Dicke { m: -2.0 }, 4).unwrap();
        assert_eq!(v[4], c(1.0));
    }

    #[test]
    fn antipodal_cat_with_cancelling_phase_is_unnormalizable() {
        // |theta = 0> and |theta = pi> coincide only for N = 0, so use identical legs
        let spec = SpinStateSpec::Cat { legs: vec![(0.7, 0.2), (0.7, 0.2)], relative_phase: PI };
        assert!(matches!(prepare_spin(&spec, 4), Err(Error::Unnormalizable(_))));
    }

    #[test]
    fn spin_cat_legs_are_recovered() {
        let spec = SpinStateSpec::Cat { legs: vec![(PI / 2.0, 0.0), (PI / 2.0, PI)], relative_phase: 0.0 };
        let v = prepare_spin(&spec, 10).unwrap();
        assert!((norm(&v) - 1.0).abs() < 1e-12);
        // equal-weight superposition of opposite equatorial states: only even indices survive
        for (i, x) in v.iter().enumerate() {
            if i % 2 == 1 {
                assert!(x.norm() < 1e-12);
            }
        }
    }

    /// Kitagawa–Ueda minimal variance for `H = chi Sz²`.
    fn kitagawa_ueda(n: usize, chi_t: f64) -> f64 {
        let s = n as f64 / 2.0;
        let mu = 2.0 * chi_t;
        let a = 1.0 - mu.cos().powf(2.0 * s - 2.0);
        let b = 4.0 * (mu / 2.0).sin() * (mu / 2.0).cos().powf(2.0 * s - 2.0);
        (s / 2.0) * (1.0 + 0.25 * (2.0 * s - 1.0) * a - 0.25 * (2.0 * s - 1.0) * (a * a + b * b).sqrt())
    }

    #[test]
    fn one_axis_twisting_matches_closed_form() {
        for chi_t in [0.02, 0.05, 0.1] {
            let v = prepare_spin(&SpinStateSpec::Twisted { theta: PI / 2.0, phi: 0.0, chi_t }, 10).unwrap();
            let (_, var) = spin_moments(&v);
            let oracle = kitagawa_ueda(10, chi_t);
            assert!((var - oracle).abs() < 0.05 * oracle, "chi_t={chi_t}: {var} vs {oracle}");
        }
        // untwisted coherent state: variance S/2
        let v = coherent_spin(10, PI / 2.0, 0.4);
        assert!((spin_moments(&v).1 - 2.5).abs() < 1e-10);
    }

    #[test]
    fn photon_targets() {
        let f = prepare_photon_target(&PhotonTargetSpec::Fock { n: 10 }, 11).unwrap();
        assert_eq!(f[10], c(1.0));
        assert!(prepare_photon_target(&PhotonTargetSpec::Fock { n: 11 }, 11).is_err());
        let vac = prepare_photon_target(&PhotonTargetSpec::Cat { alpha: c(0.0), parity: 1.0 }, 5).unwrap();
        assert!((vac[0] - c(1.0)).norm() < 1e-15);
        assert!(prepare_photon_target(&PhotonTargetSpec::Cat { alpha: c(0.0), parity: -1.0 }, 5).is_err());
        assert!(matches!(
            prepare_photon_target(&PhotonTargetSpec::Coherent { alpha: c(3.0) }, 8),
            Err(Error::TruncationLeakage { .. })
        ));
    }

    #[test]
    fn even_cat_distribution() {
        let alpha = 2.0f64;
        let d = 30;
        let v = prepare_photon_target(&PhotonTargetSpec::Cat { alpha: c(alpha), parity: 1.0 }, d).unwrap();
        // oracle: <n|alpha> + <n|-alpha> from the Poisson amplitude
        let mut oracle: Vec<f64> = (0..d)
            .map(|n| {
                let ln = -alpha * alpha / 2.0 + n as f64 * alpha.ln() - 0.5 * (1..=n).map(|k| (k as f64).ln()).sum::<f64>();
                let amp = ln.exp() * (1.0 + (-1f64).powi(n as i32));
                amp * amp
            })
            .collect();
        let total: f64 = oracle.iter().sum();
        oracle.iter_mut().for_each(|p| *p /= total);
        for (n, (x, p)) in v.iter().zip(&oracle).enumerate() {
            assert!((x.norm_sqr() - p).abs() < 1e-8, "n={n}: {} vs {p}", x.norm_sqr());
            if n % 2 == 1 {
                assert!(x.norm() < 1e-15);
            }
        }
    }

    #[test]
    fn gkp_target_is_a_grid_in_position() {
        let delta = 0.35;
        let spacing = 2.0 * PI.sqrt();
        let v = prepare_photon_target(&PhotonTargetSpec::Gkp { delta, spacing }, 41).unwrap();
        assert!((norm(&v) - 1.0).abs() < 1e-10);
        // logical zero in this convention is even under x -> -x: odd Fock amplitudes vanish
        for (n, x) in v.iter().enumerate() {
            if n % 2 == 1 {
                assert!(x.norm() < 1e-10);
            }
        }
        // position density peaks at the lattice sites and dips between them
        let density = |x: f64| {
            let mut h = Vec::new();
            hermite_functions(x, v.len(), &mut h);
            let a: f64 = v.iter().zip(&h).map(|(c, hn)| c.re * hn).sum();
            a * a
        };
        assert!(density(spacing) > 10.0 * density(spacing / 2.0));
        assert!(density(0.0) > density(spacing));
        assert!(prepare_photon_target(&PhotonTargetSpec::Gkp { delta: 0.2, spacing }, 20).is_err());
    }

    #[test]
    fn dicke_fock_correspondence() {
        let n = 10;
        for k in [0, n / 2, n] {
            let fock = prepare_photon_target(&PhotonTargetSpec::Fock { n: k }, n + 1).unwrap();
            let m = n as f64 / 2.0 - (n - k) as f64;
            let dicke = prepare_spin(&SpinStateSpec::Dicke { m }, n).unwrap();
            assert_eq!(dicke_to_fock(&dicke), fock);
            assert_eq!(fock_to_dicke(&fock, n).unwrap(), dicke);
        }
        let too_big = prepare_photon_target(&PhotonTargetSpec::Fock { n: 5 }, 8).unwrap();
        assert!(fock_to_dicke(&too_big, 3).is_err());
    }

    #[test]
    fn qubit_embedding_is_symmetric_and_normalized() {
        let v = coherent_spin(4, 1.1, 0.3);
        let q = dicke_to_qubits(&v);
        assert!((norm(&q) - 1.0).abs() < 1e-12);
        // product structure: coherent states embed as product states
        let single = coherent_spin(1, 1.1, 0.3);
        let s = build_space((0..4).map(|i| Factor::qubit(format!("q{i}"))).collect()).unwrap();
        for flat in 0..16 {
            let digits = s.decode(flat);
            let prod: C64 = digits.iter().map(|d| single[*d]).product();
            assert!((q[flat] - prod).norm() < 1e-12);
        }
    }

    #[test]
    fn fidelity_examples() {
        let s = build_space(vec![Factor::boson("a", 2)]).unwrap();
        let h = 0.5f64.sqrt();
        let psi = [c(h), C64::new(0.0, h)];
        let pure = DensityState::pure(&s, &psi).unwrap();
        assert!((fidelity(&pure, &psi).unwrap() - 1.0).abs() < 1e-15);
        let vac = DensityState::pure(&s, &[c(1.0), c(0.0)]).unwrap();
        assert_eq!(fidelity(&vac, &[c(0.0), c(1.0)]).unwrap(), 0.0);
        let mixed = DensityState::new(&s, crate::operator::CMatrix::identity(2, 2) * c(0.5)).unwrap();
        assert!((fidelity(&mixed, &[c(h), c(h)]).unwrap() - 0.5).abs() < 1e-15);
        assert!(fidelity(&mixed, &[c(1.0)]).is_err());
        // a phase-rotated target is recovered by the rotated fidelity
        let rotated = [c(h), C64::from_polar(h, 0.9)];
        let (f, phi) = rotated_fidelity(&DensityState::pure(&s, &rotated).unwrap(), &[c(h), c(h)]).unwrap();
        assert!((f - 1.0).abs() < 1e-12 && (phi - 0.9).abs() < 1e-6);
    }

    #[test]
    fn state_file_errors() {
        assert!(parse_state("", "x").is_err());
        assert!(parse_state("# qubit 3\n", "x").is_err());
        assert!(parse_state("# fock 2\n5 1 0\n", "x").is_err());
        assert!(parse_state("# fock 2\n0 one 0\n", "x").is_err());
    }

    proptest! {
        #[test]
        fn coherent_states_normalized_with_exact_sz(n in 1usize..30, theta in 0.0f64..PI, phi in -PI..PI) {
            let v = prepare_spin(&SpinStateSpec::Coherent { theta, phi }, n).unwrap();
            prop_assert!((norm(&v) - 1.0).abs() < 1e-10);
            let (mean, _) = spin_moments(&v);
            prop_assert!((mean[2] - n as f64 / 2.0 * theta.cos()).abs() < 1e-10);
        }

        #[test]
        fn state_file_round_trips_bit_exactly(
            re in proptest::collection::vec(-1.0f64..1.0, 2..12),
            im in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let psi: Vec<C64> = re.iter().zip(&im).map(|(a, b)| C64::new(*a, *b)).collect();
            let kind = StateKind::Dicke(psi.len() - 1);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("s.state");
            write_state(&path, kind, &psi).unwrap();
            let (k2, back) = read_state(&path).unwrap();
            prop_assert_eq!(k2, kind);
            prop_assert_eq!(&back, &psi);
            if norm(&psi) > 1e-3 {
                let unit = normalize(psi.clone(), "test").unwrap();
                write_state(&path, kind, &unit).unwrap();
                let prepared = prepare_spin(&SpinStateSpec::FromFile(path.display().to_string()), psi.len() - 1).unwrap();
                prop_assert_eq!(prepared, unit);
            }
        }
    }
}
