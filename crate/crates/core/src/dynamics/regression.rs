//! Two-time correlations `<A(t_j) B(t_k)>` via the quantum regression theorem.
//!
//! For `t_k >= t_j`, `<A(t_j) B(t_k)> = tr[B Φ_{t_j→t_k}(ρ(t_j) A)]` where `Φ`
//! is the Lindblad propagator. For a time-independent generator on a uniform
//! grid `Φ` depends only on `t_k - t_j`, so `B` is propagated once in the
//! Heisenberg picture and every entry becomes `tr[B(τ) ρ_j A]`. Otherwise
//! rows are propagated independently, in parallel.

use rayon::prelude::*;

use super::{evolve, integrate, LindbladModel, Scratch, StepControl, TimeGrid};
use crate::density::DensityState;
use crate::error::{Error, Result};
use crate::operator::{CMatrix, OperatorMatrix, C64, ZERO};

/// Evolve `rho0` and assemble the correlation matrix `G[j, k] = <A(t_j) B(t_k)>`.
pub fn regression_correlation(
    model: &LindbladModel,
    rho0: &DensityState,
    grid: &TimeGrid,
    a: &OperatorMatrix,
    b: &OperatorMatrix,
    control: StepControl,
) -> Result<CMatrix> {
    let traj = evolve(model, rho0, grid, control)?;
    let states: Vec<CMatrix> = traj.states.iter().map(|(_, s)| s.matrix().clone()).collect();
    if states.len() != grid.len() {
        return Err(Error::InvalidParameter("trajectory must store every grid point".into()));
    }
    correlation_from_states(model, &states, grid, a, b, control)
}

fn is_adjoint_pair(a: &OperatorMatrix, b: &OperatorMatrix) -> bool {
    let bd = b.adjoint();
    a.nnz() == bd.nnz() && a.triplets().all(|(r, c, v)| (bd.get(r, c) - v).norm() == 0.0)
}

/// Correlation matrix from precomputed states `rho(t_j)` on every grid point.
///
/// When `A = B^dag` the lower triangle is the Hermitian completion of the
/// upper one; otherwise it is propagated separately.
pub fn correlation_from_states(
    model: &LindbladModel,
    states: &[CMatrix],
    grid: &TimeGrid,
    a: &OperatorMatrix,
    b: &OperatorMatrix,
    control: StepControl,
) -> Result<CMatrix> {
    let n = grid.len();
    if states.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: states.len() });
    }
    let times = grid.points();
    let bound = model.rate_bound_over(&times);
    if model.is_time_independent() {
        return heisenberg(model, states, &times, bound, control, a, b);
    }
    let a_adj = a.adjoint();
    // upper triangle: seed rho_j A = (A^dag rho_j)^dag, then read tr(B X)
    let upper = rows(model, states, &times, bound, control, |rho| {
        let mut x = CMatrix::zeros(rho.nrows(), rho.ncols());
        a_adj.mul_dense_acc(C64::new(1.0, 0.0), rho, &mut x);
        x.adjoint()
    }, b)?;
    let mut g = CMatrix::zeros(n, n);
    for (j, row) in upper.iter().enumerate() {
        for (off, v) in row.iter().enumerate() {
            g[(j, j + off)] = *v;
        }
    }
    if is_adjoint_pair(a, b) {
        for j in 0..n {
            g[(j, j)] = C64::new(g[(j, j)].re, 0.0);
            for k in (j + 1)..n {
                g[(k, j)] = g[(j, k)].conj();
            }
        }
    } else {
        // <A(t_k) B(t_j)> for t_k > t_j = tr[A Φ(B rho_j)]
        let lower = rows(model, states, &times, bound, control, |rho| {
            let mut x = CMatrix::zeros(rho.nrows(), rho.ncols());
            b.mul_dense_acc(C64::new(1.0, 0.0), rho, &mut x);
            x
        }, a)?;
        for (j, row) in lower.iter().enumerate() {
            for (off, v) in row.iter().enumerate().skip(1) {
                g[(j + off, j)] = *v;
            }
        }
    }
    Ok(g)
}

/// `sum_ab x[a,b] yt[a,b]`, i.e. `tr(x y)` given `yt = y^T`.
fn trace_with_transposed(x: &CMatrix, yt: &CMatrix) -> C64 {
    x.as_slice().iter().zip(yt.as_slice()).map(|(p, q)| p * q).sum()
}

/// Fill `g[j, j + τ] = tr[R(τ) M_j]` where `R` is `read` evolved under the
/// adjoint generator for time `τ`.
fn diagonals(
    model: &LindbladModel,
    seeds_t: &[CMatrix],
    times: &[f64],
    bound: f64,
    control: StepControl,
    read: &OperatorMatrix,
    mut put: impl FnMut(usize, usize, C64),
) -> Result<()> {
    let n = seeds_t.len();
    let d = read.dim();
    let lags: Vec<f64> = times.iter().map(|t| t - times[0]).collect();
    let mut scratch = Scratch::new(d);
    let mut rhs = |t: f64, y: &CMatrix, out: &mut CMatrix| model.apply_heisenberg(t, y, out, &mut scratch);
    integrate::propagate(&mut rhs, read.to_dense(), &lags, control, bound, |tau, _t, r| {
        let vals: Vec<C64> = (0..n - tau).into_par_iter().map(|j| trace_with_transposed(r, &seeds_t[j])).collect();
        for (j, v) in vals.into_iter().enumerate() {
            put(j, j + tau, v);
        }
        Ok(())
    })?;
    Ok(())
}

fn heisenberg(
    model: &LindbladModel,
    states: &[CMatrix],
    times: &[f64],
    bound: f64,
    control: StepControl,
    a: &OperatorMatrix,
    b: &OperatorMatrix,
) -> Result<CMatrix> {
    let n = states.len();
    let a_adj = a.adjoint();
    // (rho_j A)^T = ((A^dag rho_j)^dag)^T = conj(A^dag rho_j)
    let upper_seeds: Vec<CMatrix> = states
        .par_iter()
        .map(|rho| {
            let mut x = CMatrix::zeros(rho.nrows(), rho.ncols());
            a_adj.mul_dense_acc(C64::new(1.0, 0.0), rho, &mut x);
            x.conjugate()
        })
        .collect();
    let mut g = CMatrix::zeros(n, n);
    diagonals(model, &upper_seeds, times, bound, control, b, |j, k, v| g[(j, k)] = v)?;
    drop(upper_seeds);
    if is_adjoint_pair(a, b) {
        for j in 0..n {
            g[(j, j)] = C64::new(g[(j, j)].re, 0.0);
            for k in (j + 1)..n {
                g[(k, j)] = g[(j, k)].conj();
            }
        }
    } else {
        let lower_seeds: Vec<CMatrix> = states
            .par_iter()
            .map(|rho| {
                let mut x = CMatrix::zeros(rho.nrows(), rho.ncols());
                b.mul_dense_acc(C64::new(1.0, 0.0), rho, &mut x);
                x.transpose()
            })
            .collect();
        diagonals(model, &lower_seeds, times, bound, control, a, |j, k, v| {
            if k > j {
                g[(k, j)] = v;
            }
        })?;
    }
    Ok(g)
}

fn rows<S>(
    model: &LindbladModel,
    states: &[CMatrix],
    times: &[f64],
    bound: f64,
    control: StepControl,
    seed: S,
    read: &OperatorMatrix,
) -> Result<Vec<Vec<C64>>>
where
    S: Fn(&CMatrix) -> CMatrix + Sync,
{
    (0..states.len())
        .into_par_iter()
        .map(|j| {
            let d = states[j].nrows();
            let mut scratch = Scratch::new(d);
            let mut rhs = |t: f64, y: &CMatrix, out: &mut CMatrix| model.apply_general(t, y, out, &mut scratch);
            let mut row = vec![ZERO; times.len() - j];
            integrate::propagate(&mut rhs, seed(&states[j]), &times[j..], control, bound, |k, _t, x| {
                row[k] = read.expectation(x);
                Ok(())
            })?;
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Envelope, JumpOperator};
    use crate::operator::{qubit, site_operator};
    use crate::space::{build_space, Factor};

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    #[test]
    fn decaying_atom_correlation() {
        let gamma: f64 = 0.9;
        let s = build_space(vec![Factor::qubit("q")]).unwrap();
        let sm = site_operator(&s, "q", &qubit::lowering()).unwrap();
        let model = LindbladModel::new(OperatorMatrix::zero(&s))
            .unwrap()
            .with_jump(JumpOperator::constant(sm.scale(c(gamma.sqrt()))));
        let rho0 = DensityState::pure(&s, &[c(1.0), c(0.0)]).unwrap();
        let grid = TimeGrid::new(0.0, 4.0, 41).unwrap();
        let a = sm.adjoint().scale(c(gamma.sqrt()));
        let b = sm.scale(c(gamma.sqrt()));
        let g = regression_correlation(&model, &rho0, &grid, &a, &b, StepControl::Fixed { substeps: 10 }).unwrap();
        for j in 0..grid.len() {
            for k in 0..grid.len() {
                let expect = gamma * (-gamma * (grid.point(j) + grid.point(k)) / 2.0).exp();
                assert!((g[(j, k)] - c(expect)).norm() < 1e-5, "({j},{k})");
            }
        }
    }

    #[test]
    fn heisenberg_path_matches_row_propagation() {
        let s = build_space(vec![Factor::qubit("q"), Factor::boson("c", 3)]).unwrap();
        let sm = site_operator(&s, "q", &qubit::lowering()).unwrap();
        let (cc, cd) = crate::operator::boson_ladder(&s, "c").unwrap();
        let h = cd.mul(&sm).add(&sm.adjoint().mul(&cc)).scale(c(0.6)).add(&cd.mul(&cc).scale(c(0.3)));
        let model = LindbladModel::new(h).unwrap().with_jump(JumpOperator::constant(cc.scale(c(0.9))));
        let rho0 = DensityState::pure(&s, &[c(0.6), c(0.0), c(0.0), c(0.0), c(0.8), c(0.0)]).unwrap();
        let grid = TimeGrid::new(0.0, 3.0, 16).unwrap();
        let ctl = StepControl::Fixed { substeps: 40 };
        let fast = regression_correlation(&model, &rho0, &grid, &cd, &cc, ctl).unwrap();
        let fast_lower = regression_correlation(&model, &rho0, &grid, &cd.add(&sm.adjoint()), &cc, ctl).unwrap();
        // a constant function envelope forces the row-by-row path
        let slow_model = LindbladModel::new(model.static_hamiltonian().clone())
            .unwrap()
            .with_jump(JumpOperator::new(vec![(Envelope::function(|_| c(0.9)), cc.clone())]));
        let slow = regression_correlation(&slow_model, &rho0, &grid, &cd, &cc, ctl).unwrap();
        let slow_lower = regression_correlation(&slow_model, &rho0, &grid, &cd.add(&sm.adjoint()), &cc, ctl).unwrap();
        assert!((&fast - &slow).iter().all(|v| v.norm() < 1e-9));
        assert!((&fast_lower - &slow_lower).iter().all(|v| v.norm() < 1e-9));
        assert!(fast[(0, 3)].norm() > 1e-3);
    }

    #[test]
    fn non_adjoint_pair_fills_lower_triangle_by_propagation() {
        let s = build_space(vec![Factor::qubit("q")]).unwrap();
        let sm = site_operator(&s, "q", &qubit::lowering()).unwrap();
        let sz = site_operator(&s, "q", &qubit::pauli_z()).unwrap();
        let model = LindbladModel::new(sz.scale(c(0.7)))
            .unwrap()
            .with_jump(JumpOperator::constant(sm.scale(c(0.8))));
        let h = 0.5f64.sqrt();
        let rho0 = DensityState::pure(&s, &[c(h), c(h)]).unwrap();
        let grid = TimeGrid::new(0.0, 2.0, 11).unwrap();
        let ctl = StepControl::Fixed { substeps: 8 };
        // <sigma-(t_j) sigma-(t_k)> vanishes identically
        let g0 = regression_correlation(&model, &rho0, &grid, &sm, &sm, ctl).unwrap();
        assert!(g0.iter().all(|v| v.norm() < 1e-12));
        // B = 2 sigma- is not the adjoint of A = sigma+, so the lower triangle is propagated
        let sp = sm.adjoint();
        let g1 = regression_correlation(&model, &rho0, &grid, &sp, &sm, ctl).unwrap();
        let g2 = regression_correlation(&model, &rho0, &grid, &sp, &sm.scale(c(2.0)), ctl).unwrap();
        assert!(g1.iter().any(|v| v.im.abs() > 1e-3));
        assert!((g1 * c(2.0) - g2).iter().all(|v| v.norm() < 1e-9));
    }
}
