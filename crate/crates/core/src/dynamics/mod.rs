//! Lindblad master equations with time-dependent Hamiltonians and jump
//! operators, and two-time correlations through the quantum regression
//! theorem.
//!
//! Sign convention: `d rho/dt = -i[H, rho] + sum_i (L_i rho L_i^dag - ½{L_i^dag L_i, rho})`.

mod generator;
pub mod integrate;
mod regression;

use std::fmt;
use std::sync::{Arc, OnceLock};

use generator::{adjoint_into, Coeff, Combo};

use crate::density::{hermitize, DensityState};
use crate::error::{Error, Result};
use crate::operator::{CMatrix, OperatorMatrix, C64, I, ONE, ZERO};
use crate::space::CompositeSpace;

pub use integrate::StepControl;
pub use regression::{correlation_from_states, regression_correlation};

/// Maximum tolerated `|tr rho - 1|` along a trajectory.
pub const TRACE_DRIFT_TOL: f64 = 1e-8;

/// Scalar time dependence of an operator term.
#[derive(Clone)]
pub enum Envelope {
    Constant(C64),
    Function(Arc<dyn Fn(f64) -> C64 + Send + Sync>),
}

impl Envelope {
    pub fn function(f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        Envelope::Function(Arc::new(f))
    }

    #[inline]
    pub fn at(&self, t: f64) -> C64 {
        match self {
            Envelope::Constant(c) => *c,
            Envelope::Function(f) => f(t),
        }
    }
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Envelope::Constant(c) => write!(f, "Constant({c})"),
            Envelope::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// `f(t) op + conj(f(t)) op^dag`: Hermitian at every `t` by construction.
#[derive(Clone, Debug)]
pub struct HermitianPair {
    pub envelope: Envelope,
    op: OperatorMatrix,
    op_adj: OperatorMatrix,
}

#[derive(Clone, Debug)]
struct JumpTerm {
    envelope: Envelope,
    op: OperatorMatrix,
    op_adj: OperatorMatrix,
}

/// `L(t) = sum_r f_r(t) O_r`.
#[derive(Clone, Debug)]
pub struct JumpOperator {
    terms: Vec<JumpTerm>,
}

impl JumpOperator {
    pub fn constant(op: OperatorMatrix) -> Self {
        Self::new(vec![(Envelope::Constant(ONE), op)])
    }

    pub fn new(terms: Vec<(Envelope, OperatorMatrix)>) -> Self {
        JumpOperator {
            terms: terms
                .into_iter()
                .map(|(envelope, op)| JumpTerm { envelope, op_adj: op.adjoint(), op })
                .collect(),
        }
    }

    fn norm_bound(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.envelope.at(t).norm() * op_norm_bound(&term.op, &term.op_adj)).sum()
    }

    pub fn at(&self, t: f64) -> OperatorMatrix {
        let mut iter = self.terms.iter();
        let first = iter.next().expect("jump operator has no terms");
        iter.fold(first.op.scale(first.envelope.at(t)), |acc, term| acc.add(&term.op.scale(term.envelope.at(t))))
    }
}

fn op_norm_bound(op: &OperatorMatrix, adj: &OperatorMatrix) -> f64 {
    (op.row_sum_norm() * adj.row_sum_norm()).sqrt()
}

/// Generator of a (possibly time-dependent) Lindblad master equation.
#[derive(Clone, Debug)]
pub struct LindbladModel {
    space: CompositeSpace,
    hamiltonian: OperatorMatrix,
    pairs: Vec<HermitianPair>,
    jumps: Vec<JumpOperator>,
    compiled: OnceLock<Arc<Compiled>>,
}

/// The generator folded into `K(t) = -iH(t) - ½ sum L^dag L` and one sparse
/// matrix per jump, plus their adjoints.
#[derive(Debug)]
struct Compiled {
    k: Combo,
    k_adj: Combo,
    jumps: Vec<Combo>,
    jumps_adj: Vec<Combo>,
}

/// Scratch buffers reused across right-hand-side evaluations.
pub(crate) struct Scratch {
    k: CMatrix,
    x: CMatrix,
    y: CMatrix,
    z: CMatrix,
    kv: Vec<C64>,
    lv: Vec<C64>,
}

impl Scratch {
    pub(crate) fn new(d: usize) -> Self {
        let z = CMatrix::zeros(d, d);
        Scratch { k: z.clone(), x: z.clone(), y: z.clone(), z, kv: vec![], lv: vec![] }
    }
}

impl LindbladModel {
    /// Model with a static Hermitian Hamiltonian and no jumps.
    pub fn new(hamiltonian: OperatorMatrix) -> Result<Self> {
        let space = hamiltonian.space().clone();
        let hamiltonian = hamiltonian.into_hermitian()?;
        Ok(LindbladModel { space, hamiltonian, pairs: vec![], jumps: vec![], compiled: OnceLock::new() })
    }

    pub fn with_pair(mut self, envelope: Envelope, op: OperatorMatrix) -> Self {
        self.pairs.push(HermitianPair { envelope, op_adj: op.adjoint(), op });
        self.compiled = OnceLock::new();
        self
    }

    pub fn with_jump(mut self, jump: JumpOperator) -> Self {
        self.jumps.push(jump);
        self.compiled = OnceLock::new();
        self
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn jumps(&self) -> &[JumpOperator] {
        &self.jumps
    }

    pub fn static_hamiltonian(&self) -> &OperatorMatrix {
        &self.hamiltonian
    }

    /// Full `H(t)` as a sparse matrix.
    pub fn hamiltonian_at(&self, t: f64) -> OperatorMatrix {
        self.pairs.iter().fold(self.hamiltonian.clone(), |acc, p| {
            let f = p.envelope.at(t);
            acc.add(&p.op.scale(f)).add(&p.op_adj.scale(f.conj()))
        })
    }

    /// Upper bound on the generator norm at time `t`.
    pub fn rate_bound(&self, t: f64) -> f64 {
        let h = op_norm_bound(&self.hamiltonian, &self.hamiltonian)
            + self.pairs.iter().map(|p| 2.0 * p.envelope.at(t).norm() * op_norm_bound(&p.op, &p.op_adj)).sum::<f64>();
        let j: f64 = self.jumps.iter().map(|l| l.norm_bound(t).powi(2)).sum();
        2.0 * h + 2.0 * j
    }

    pub(crate) fn rate_bound_over(&self, times: &[f64]) -> f64 {
        times.iter().map(|&t| self.rate_bound(t)).fold(0.0, f64::max)
    }

    fn compiled(&self) -> &Compiled {
        self.compiled.get_or_init(|| Arc::new(self.compile()))
    }

    fn compile(&self) -> Compiled {
        let d = self.space.dim();
        let mut k = vec![(Coeff::constant(-I), self.hamiltonian.clone())];
        for p in &self.pairs {
            k.push((Coeff::constant(-I).with(&p.envelope, false), p.op.clone()));
            k.push((Coeff::constant(-I).with(&p.envelope, true), p.op_adj.clone()));
        }
        for l in &self.jumps {
            for r in &l.terms {
                for s in &l.terms {
                    let c = Coeff::constant(C64::new(-0.5, 0.0)).with(&r.envelope, true).with(&s.envelope, false);
                    k.push((c, r.op_adj.mul(&s.op)));
                }
            }
        }
        let jump_terms: Vec<Vec<(Coeff, OperatorMatrix)>> = self
            .jumps
            .iter()
            .map(|l| l.terms.iter().map(|r| (Coeff::constant(ONE).with(&r.envelope, false), r.op.clone())).collect())
            .collect();
        Compiled {
            k_adj: Combo::adjoint_of(d, &k),
            k: Combo::new(d, k),
            jumps_adj: jump_terms.iter().map(|t| Combo::adjoint_of(d, t)).collect(),
            jumps: jump_terms.into_iter().map(|t| Combo::new(d, t)).collect(),
        }
    }

    /// `out = L[rho]` for Hermitian `rho`: `K rho + (K rho)^dag + sum L (L rho)^dag`.
    pub(crate) fn apply_hermitian(&self, t: f64, rho: &CMatrix, out: &mut CMatrix, s: &mut Scratch) {
        let c = self.compiled();
        c.k.eval(t, &mut s.kv);
        s.k.fill(ZERO);
        c.k.mul_acc(&s.kv, rho, &mut s.k);
        adjoint_into(&s.k, out);
        *out += &s.k;
        for l in &c.jumps {
            l.eval(t, &mut s.lv);
            s.x.fill(ZERO);
            l.mul_acc(&s.lv, rho, &mut s.x);
            adjoint_into(&s.x, &mut s.y);
            l.mul_acc(&s.lv, &s.y, out);
        }
        hermitize(out);
    }

    /// `out = L[x]` for an arbitrary square `x`.
    pub(crate) fn apply_general(&self, t: f64, x: &CMatrix, out: &mut CMatrix, s: &mut Scratch) {
        let c = self.compiled();
        Self::sandwich(&c.k, &c.jumps, t, x, out, s);
    }

    /// Adjoint generator `L'[x] = i[H, x] + sum (L^dag x L - ½{L^dag L, x})`,
    /// the dual of `L` under `(x, y) -> tr(x y)`.
    pub(crate) fn apply_heisenberg(&self, t: f64, x: &CMatrix, out: &mut CMatrix, s: &mut Scratch) {
        let c = self.compiled();
        Self::sandwich(&c.k_adj, &c.jumps_adj, t, x, out, s);
    }

    /// `out = K x + x K^dag + sum L x L^dag`, with `x K^dag = (K x^dag)^dag`
    /// and `x L^dag = (L x^dag)^dag`.
    fn sandwich(k: &Combo, jumps: &[Combo], t: f64, x: &CMatrix, out: &mut CMatrix, s: &mut Scratch) {
        k.eval(t, &mut s.kv);
        out.fill(ZERO);
        k.mul_acc(&s.kv, x, out);
        adjoint_into(x, &mut s.y);
        s.k.fill(ZERO);
        k.mul_acc(&s.kv, &s.y, &mut s.k);
        adjoint_into(&s.k, &mut s.z);
        *out += &s.z;
        for l in jumps {
            l.eval(t, &mut s.lv);
            s.x.fill(ZERO);
            l.mul_acc(&s.lv, &s.y, &mut s.x);
            adjoint_into(&s.x, &mut s.z);
            l.mul_acc(&s.lv, &s.z, out);
        }
    }

    /// No time-dependent pair or jump envelopes.
    pub fn is_time_independent(&self) -> bool {
        self.pairs.is_empty()
            && self.jumps.iter().all(|l| l.terms.iter().all(|t| matches!(t.envelope, Envelope::Constant(_))))
    }
}

/// Uniform time discretization.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_points: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n_points}")));
        }
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidGrid(format!("t_end {t_end} must exceed t_start {t_start}")));
        }
        Ok(TimeGrid { t_start, t_end, n_points })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.t_end
        } else {
            self.t_start + i as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    /// Trapezoid quadrature weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.n_points)
            .map(|i| if i == 0 || i + 1 == self.n_points { 0.5 * dt } else { dt })
            .collect()
    }
}

/// A named time series sampled on the trajectory grid.
#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub values: Vec<C64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: TimeGrid,
    /// `(grid index, state)` pairs; every `store_every`-th point.
    pub states: Vec<(usize, DensityState)>,
    pub observables: Vec<Observable>,
    pub max_trace_drift: f64,
    pub max_hermiticity_error: f64,
}

impl Trajectory {
    pub fn state_at(&self, index: usize) -> Option<&DensityState> {
        self.states.iter().find(|(i, _)| *i == index).map(|(_, s)| s)
    }

    pub fn final_state(&self) -> &DensityState {
        &self.states.last().expect("trajectory stores at least the final state").1
    }

    pub fn observable(&self, name: &str) -> Option<&[C64]> {
        self.observables.iter().find(|o| o.name == name).map(|o| o.values.as_slice())
    }
}

/// Options for [`evolve_with`].
#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub control: StepControl,
    /// Keep every n-th state (the final state is always kept); `0` keeps only the final one.
    pub store_every: usize,
    pub observables: Vec<(String, OperatorMatrix)>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { control: StepControl::default(), store_every: 1, observables: vec![] }
    }
}

/// Integrate the master equation over `grid`, storing every state.
pub fn evolve(model: &LindbladModel, rho0: &DensityState, grid: &TimeGrid, control: StepControl) -> Result<Trajectory> {
    evolve_with(model, rho0, grid, &EvolveOptions { control, ..Default::default() }, |_, _, _| Ok(()))
}

/// Integrate the master equation, calling `observe(index, t, rho)` at every
/// grid point in addition to recording the requested observables.
pub fn evolve_with<O>(
    model: &LindbladModel,
    rho0: &DensityState,
    grid: &TimeGrid,
    opts: &EvolveOptions,
    mut observe: O,
) -> Result<Trajectory>
where
    O: FnMut(usize, f64, &DensityState) -> Result<()>,
{
    if rho0.space().dim() != model.space().dim() {
        return Err(Error::DimensionMismatch { expected: model.space().dim(), got: rho0.space().dim() });
    }
    let times = grid.points();
    let d = model.space().dim();
    let mut scratch = Scratch::new(d);
    let mut rhs = |t: f64, y: &CMatrix, out: &mut CMatrix| model.apply_hermitian(t, y, out, &mut scratch);
    let bound = model.rate_bound_over(&times);
    let mut states = Vec::new();
    let mut observables: Vec<Observable> =
        opts.observables.iter().map(|(n, _)| Observable { name: n.clone(), values: Vec::with_capacity(times.len()) }).collect();
    let mut max_drift: f64 = 0.0;
    let mut max_herm: f64 = 0.0;
    let last = times.len() - 1;
    let space = model.space().clone();
    propagate_states(&mut rhs, rho0.matrix().clone(), &times, opts.control, bound, |i, t, y| {
        let drift = (y.trace() - ONE).norm();
        max_drift = max_drift.max(drift);
        if drift > TRACE_DRIFT_TOL {
            return Err(Error::TraceDrift { t, drift });
        }
        max_herm = max_herm.max(crate::density::hermiticity_error(y));
        for ((_, op), obs) in opts.observables.iter().zip(observables.iter_mut()) {
            obs.values.push(op.expectation(y));
        }
        let st = DensityState::new(&space, y.clone())?;
        observe(i, t, &st)?;
        if i == last || (opts.store_every > 0 && i % opts.store_every == 0) {
            states.push((i, st));
        }
        Ok(())
    })?;
    Ok(Trajectory {
        grid: grid.clone(),
        states,
        observables,
        max_trace_drift: max_drift,
        max_hermiticity_error: max_herm,
    })
}

fn propagate_states<R, O>(rhs: &mut R, y0: CMatrix, times: &[f64], control: StepControl, bound: f64, observe: O) -> Result<CMatrix>
where
    R: integrate::Rhs,
    O: FnMut(usize, f64, &CMatrix) -> Result<()>,
{
    integrate::propagate(rhs, y0, times, control, bound, observe)
}
