//! Explicit Runge–Kutta propagation of matrix-valued ODEs.
//!
//! Two schemes: classical fixed-step RK4 and the Dormand–Prince 5(4) embedded
//! pair with standard step-size control. RK4 stops exactly on every output
//! time; Dormand–Prince steps freely and fills outputs from its continuous
//! extension.

use crate::error::{Error, Result};
use crate::operator::{CMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepControl {
    /// RK4 with a fixed number of substeps per output interval.
    Fixed { substeps: usize },
    /// RK4 with substeps chosen so that `h * rate_bound <= courant`.
    Auto { courant: f64 },
    /// Dormand–Prince 5(4) with mixed absolute/relative error control.
    Adaptive { rtol: f64, atol: f64 },
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl::Auto { courant: 0.1 }
    }
}

impl StepControl {
    pub fn substeps(&self, dt: f64, rate_bound: f64) -> usize {
        match *self {
            StepControl::Fixed { substeps } => substeps.max(1),
            StepControl::Auto { courant } => ((dt * rate_bound / courant).ceil() as usize).max(1),
            StepControl::Adaptive { .. } => 1,
        }
    }
}

fn axpy(y: &mut CMatrix, a: f64, x: &CMatrix) {
    for (yv, xv) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yv += xv * a;
    }
}

/// Lincomb `out = y + h * sum(c_i k_i)`.
fn stage(out: &mut CMatrix, y: &CMatrix, h: f64, terms: &[(f64, &CMatrix)]) {
    out.copy_from(y);
    for &(c, k) in terms {
        if c != 0.0 {
            axpy(out, h * c, k);
        }
    }
}

/// Right-hand side `dy/dt = f(t, y)` written into `out` (overwritten).
pub trait Rhs {
    fn eval(&mut self, t: f64, y: &CMatrix, out: &mut CMatrix);
}

impl<F: FnMut(f64, &CMatrix, &mut CMatrix)> Rhs for F {
    fn eval(&mut self, t: f64, y: &CMatrix, out: &mut CMatrix) {
        self(t, y, out)
    }
}

/// Propagate `y` through `times`, calling `observe(index, t, y)` at every
/// output time (including the first). `rate_bound` feeds [`StepControl::Auto`].
pub fn propagate<R, O>(
    rhs: &mut R,
    y0: CMatrix,
    times: &[f64],
    control: StepControl,
    rate_bound: f64,
    mut observe: O,
) -> Result<CMatrix>
where
    R: Rhs,
    O: FnMut(usize, f64, &CMatrix) -> Result<()>,
{
    let mut y = y0;
    if times.is_empty() {
        return Ok(y);
    }
    observe(0, times[0], &y)?;
    match control {
        StepControl::Adaptive { rtol, atol } => {
            let mut dp = DormandPrince::new(y.nrows(), y.ncols(), rtol, atol);
            dp.dense(rhs, &mut y, times, |i, t, m| observe(i, t, m))?;
        }
        _ => {
            let mut rk = Rk4::new(y.nrows(), y.ncols());
            for (i, w) in times.windows(2).enumerate() {
                let n = control.substeps(w[1] - w[0], rate_bound);
                let h = (w[1] - w[0]) / n as f64;
                for s in 0..n {
                    rk.step(rhs, &mut y, w[0] + s as f64 * h, h);
                }
                observe(i + 1, w[1], &y)?;
            }
        }
    }
    Ok(y)
}

struct Rk4 {
    k: [CMatrix; 4],
    tmp: CMatrix,
}

impl Rk4 {
    fn new(r: usize, c: usize) -> Self {
        let z = CMatrix::zeros(r, c);
        Rk4 { k: [z.clone(), z.clone(), z.clone(), z.clone()], tmp: z }
    }

    fn step<R: Rhs>(&mut self, rhs: &mut R, y: &mut CMatrix, t: f64, h: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        rhs.eval(t, y, k1);
        stage(&mut self.tmp, y, h, &[(0.5, k1)]);
        rhs.eval(t + 0.5 * h, &self.tmp, k2);
        stage(&mut self.tmp, y, h, &[(0.5, k2)]);
        rhs.eval(t + 0.5 * h, &self.tmp, k3);
        stage(&mut self.tmp, y, h, &[(1.0, k3)]);
        rhs.eval(t + h, &self.tmp, k4);
        for (((yv, a), (b, c)), d) in y
            .as_mut_slice()
            .iter_mut()
            .zip(k1.as_slice())
            .zip(k2.as_slice().iter().zip(k3.as_slice()))
            .zip(k4.as_slice())
        {
            *yv += (a + (b + c) * 2.0 + d) * (h / 6.0);
        }
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

// Continuous extension coefficients.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

pub(crate) struct DormandPrince {
    k: Vec<CMatrix>,
    trial: CMatrix,
    cont: Option<Box<[CMatrix; 4]>>,
    rtol: f64,
    atol: f64,
    h: Option<f64>,
    pub(crate) accepted: usize,
    pub(crate) rejected: usize,
}

impl DormandPrince {
    pub(crate) fn new(r: usize, c: usize, rtol: f64, atol: f64) -> Self {
        DormandPrince {
            k: (0..7).map(|_| CMatrix::zeros(r, c)).collect(),
            trial: CMatrix::zeros(r, c),
            cont: None,
            rtol,
            atol,
            h: None,
            accepted: 0,
            rejected: 0,
        }
    }

    fn error_norm(&self, y: &CMatrix, h: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in 0..y.len() {
            let mut e = C64::new(0.0, 0.0);
            for (s, &w) in E.iter().enumerate() {
                if w != 0.0 {
                    e += self.k[s].as_slice()[idx] * w;
                }
            }
            let scale = self.atol + self.rtol * y.as_slice()[idx].norm().max(self.trial.as_slice()[idx].norm());
            worst = worst.max((e * h).norm() / scale);
        }
        worst
    }

    /// One trial step of size `h` from `(t, y)` with `k[0] = f(t, y)`. Leaves
    /// the candidate in `trial` and returns the scaled error.
    fn attempt<R: Rhs>(&mut self, rhs: &mut R, y: &CMatrix, t: f64, h: f64) -> f64 {
        for s in 1..7 {
            let (done, rest) = self.k.split_at_mut(s);
            let terms: Vec<(f64, &CMatrix)> = (0..s).map(|j| (A[s][j], &done[j])).collect();
            stage(&mut self.trial, y, h, &terms);
            rhs.eval(t + C[s] * h, &self.trial, &mut rest[0]);
        }
        // trial holds the fifth-order solution (last row of A equals the weights)
        self.error_norm(y, h)
    }

    fn grow(err: f64) -> f64 {
        if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        }
    }

    fn shrink(err: f64) -> f64 {
        if err.is_finite() {
            (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
        } else {
            0.1
        }
    }

    fn check_step(t: f64, h: f64) -> Result<()> {
        if h <= 1e-15 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }
        Ok(())
    }

    /// Integrate through increasing `times` with free steps, reporting every
    /// output from the continuous extension. Only the final time is hit
    /// exactly. `y` ends at `times.last()`.
    pub(crate) fn dense<R, O>(&mut self, rhs: &mut R, y: &mut CMatrix, times: &[f64], mut observe: O) -> Result<()>
    where
        R: Rhs,
        O: FnMut(usize, f64, &CMatrix) -> Result<()>,
    {
        let (Some(&t0), Some(&t_end)) = (times.first(), times.last()) else {
            return Ok(());
        };
        let span = t_end - t0;
        if span <= 0.0 {
            return Ok(());
        }
        let mut t = t0;
        let mut h_prop = self.h.unwrap_or(span * 1e-4);
        rhs.eval(t, y, &mut self.k[0]);
        let mut next = 1;
        let mut out = CMatrix::zeros(y.nrows(), y.ncols());
        while next < times.len() {
            let clipped = t + h_prop >= t_end - 1e-12 * span;
            let h = if clipped { t_end - t } else { h_prop };
            Self::check_step(t, h)?;
            let err = self.attempt(rhs, y, t, h);
            if err > 1.0 {
                self.rejected += 1;
                h_prop = h * Self::shrink(err);
                continue;
            }
            self.accepted += 1;
            let t_new = if clipped { t_end } else { t + h };
            let last = if clipped { times.len() - 1 } else { times.partition_point(|&s| s <= t_new) };
            if next < last {
                self.prepare_continuation(y, h);
                while next < last {
                    self.interpolate(y, (times[next] - t) / h, &mut out);
                    observe(next, times[next], &out)?;
                    next += 1;
                }
            }
            std::mem::swap(y, &mut self.trial);
            self.k.swap(0, 6);
            t = t_new;
            h_prop = h * Self::grow(err);
            if clipped {
                observe(next, times[next], y)?;
                next += 1;
            }
        }
        self.h = Some(h_prop);
        Ok(())
    }

    /// Fill the interpolation data for the accepted step `y -> trial`.
    fn prepare_continuation(&mut self, y: &CMatrix, h: f64) {
        let z = || CMatrix::zeros(y.nrows(), y.ncols());
        let c = self.cont.get_or_insert_with(|| Box::new([z(), z(), z(), z()]));
        let [diff, bspl, r4, r5] = &mut **c;
        let k = &self.k;
        for idx in 0..y.len() {
            let y0 = y.as_slice()[idx];
            let d = self.trial.as_slice()[idx] - y0;
            let k1 = k[0].as_slice()[idx] * h;
            let k7 = k[6].as_slice()[idx] * h;
            let b = k1 - d;
            diff.as_mut_slice()[idx] = d;
            bspl.as_mut_slice()[idx] = b;
            r4.as_mut_slice()[idx] = d - k7 - b;
            let mut acc = C64::new(0.0, 0.0);
            for (s, &w) in D.iter().enumerate() {
                if w != 0.0 {
                    acc += k[s].as_slice()[idx] * w;
                }
            }
            r5.as_mut_slice()[idx] = acc * h;
        }
    }

    fn interpolate(&self, y: &CMatrix, theta: f64, out: &mut CMatrix) {
        let [diff, bspl, r4, r5] = &**self.cont.as_ref().expect("continuation prepared");
        let th1 = 1.0 - theta;
        for (idx, o) in out.as_mut_slice().iter_mut().enumerate() {
            let inner = r4.as_slice()[idx] + r5.as_slice()[idx] * th1;
            let inner = bspl.as_slice()[idx] + inner * theta;
            let inner = diff.as_slice()[idx] + inner * th1;
            *o = y.as_slice()[idx] + inner * theta;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> CMatrix {
        CMatrix::from_element(1, 1, C64::new(v, 0.0))
    }

    #[test]
    fn rk4_order_on_exponential() {
        let mut f = |_t: f64, y: &CMatrix, out: &mut CMatrix| out.copy_from(&(y * C64::new(-1.0, 0.0)));
        let times = [0.0, 1.0];
        let err = |n: usize, f: &mut dyn FnMut(f64, &CMatrix, &mut CMatrix)| {
            let y = propagate(&mut |t: f64, y: &CMatrix, o: &mut CMatrix| f(t, y, o), scalar(1.0), &times,
                StepControl::Fixed { substeps: n }, 0.0, |_, _, _| Ok(())).unwrap();
            (y[(0, 0)].re - (-1f64).exp()).abs()
        };
        let e1 = err(10, &mut f);
        let e2 = err(20, &mut f);
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn dopri_hits_output_times_and_tolerance() {
        let mut f = |t: f64, _y: &CMatrix, out: &mut CMatrix| out[(0, 0)] = C64::new(t.cos(), 0.0);
        let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.7).collect();
        let mut seen = vec![];
        propagate(&mut f, scalar(0.0), &times, StepControl::Adaptive { rtol: 1e-10, atol: 1e-12 }, 0.0, |i, t, y| {
            seen.push(i);
            assert!((y[(0, 0)].re - t.sin()).abs() < 1e-8, "t={t}");
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, (0..=10).collect::<Vec<_>>());
    }

    #[test]
    fn dopri_handles_singular_rate_near_origin() {
        // y' = -y / (t + 1e-6): y = 1e-6 / (t + 1e-6) with y(0) = 1
        let mut f = |t: f64, y: &CMatrix, out: &mut CMatrix| out.copy_from(&(y * C64::new(-1.0 / (t + 1e-6), 0.0)));
        let y = propagate(&mut f, scalar(1.0), &[0.0, 1.0], StepControl::Adaptive { rtol: 1e-8, atol: 1e-12 }, 0.0,
            |_, _, _| Ok(())).unwrap();
        let exact = 1e-6 / (1.0 + 1e-6);
        assert!((y[(0, 0)].re - exact).abs() < 1e-10);
    }
}
