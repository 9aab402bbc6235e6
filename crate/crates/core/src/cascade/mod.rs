//! The output pulse as a quantum system: internal dynamics, dominant temporal
//! mode, then a cascaded master equation in which that mode is an extra
//! boson `a0` fed by the source.
//!
//! Three platforms share the pipeline. A cavity (emitters couple to a lossy
//! mode `c` that leaks into the output), direct collective emission (the
//! emitters radiate through `S-` themselves) and a waveguide terminated by a
//! mirror at `-λ0/4`, where positions shape both the coupling weights and a
//! coherent exchange between emitters.

mod sweep;

use std::f64::consts::PI;
use std::sync::Arc;

use crate::density::{DensityState, TraceMap};
use crate::dynamics::{
    correlation_from_states, evolve_with, Envelope, EvolveOptions, JumpOperator, LindbladModel, StepControl, TimeGrid,
};
use crate::error::{Error, Result};
use crate::modes::{cascade_profile, principal_modes, CascadeProfile, ModeDecomposition, DEFAULT_EPSILON};
use crate::operator::{
    boson_ladder, collective_operator, qubit, site_operator, CMatrix, Collective, OperatorMatrix, Weights, C64, I, ZERO,
};
use crate::space::{build_space, CompositeSpace, Factor};
use crate::states::{dicke_to_fock, dicke_to_qubits, fidelity, rotated_fidelity};
use crate::tomography::von_neumann_entropy;

pub use sweep::{sweep, SweepPoint, SweepSummary, SWEEP_AXES};

/// Mirror position in units of the wavelength.
pub const Z_MIRROR: f64 = -0.25;
pub const DEFAULT_QUBIT_CAP: usize = 10;
/// Dominant-mode occupancy below which the channel counts as dark.
pub const DARK_THRESHOLD: f64 = 1e-3;
/// Residual excitation, relative to the initial one, at which the automatic
/// horizon stops.
pub const HORIZON_TOL: f64 = 1e-5;
/// Residual fraction above which the run reports a subradiant remainder.
pub const RESIDUAL_TOL: f64 = 1e-3;

pub const EMITTER_LABEL: &str = "e";
pub const CAVITY_LABEL: &str = "c";
pub const MODE_LABEL: &str = "a0";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Cavity,
    Direct,
    Waveguide,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Cavity => "cavity",
            Variant::Direct => "direct",
            Variant::Waveguide => "waveguide",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cavity" => Some(Variant::Cavity),
            "direct" | "direct-collective" => Some(Variant::Direct),
            "waveguide" => Some(Variant::Waveguide),
            _ => None,
        }
    }
}

/// How the emitters are stored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Representation {
    /// Qubits when site-resolved physics needs them, the Dicke ladder otherwise.
    #[default]
    Auto,
    Dicke,
    Qubits,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlatformSpec {
    pub variant: Variant,
    pub emitters: usize,
    pub g: f64,
    pub kappa: f64,
    pub gamma_1d: f64,
    /// Cavity detuning from the emitter transition.
    pub detuning: f64,
    /// Uniform spacing in wavelengths; ignored when `positions` is set.
    pub spacing: f64,
    pub positions: Option<Vec<f64>>,
    pub gamma_collective: f64,
    pub gamma_independent: f64,
    pub gamma_dephasing: f64,
    pub representation: Representation,
    pub qubit_cap: usize,
    pub cavity_cutoff: Option<usize>,
    pub mode_cutoff: Option<usize>,
}

impl PlatformSpec {
    fn base(variant: Variant, emitters: usize) -> Self {
        PlatformSpec {
            variant,
            emitters,
            g: 0.0,
            kappa: 0.0,
            gamma_1d: 0.0,
            detuning: 0.0,
            spacing: 1.0,
            positions: None,
            gamma_collective: 0.0,
            gamma_independent: 0.0,
            gamma_dephasing: 0.0,
            representation: Representation::Auto,
            qubit_cap: DEFAULT_QUBIT_CAP,
            cavity_cutoff: None,
            mode_cutoff: None,
        }
    }

    pub fn cavity(emitters: usize, g: f64, kappa: f64) -> Self {
        PlatformSpec { g, kappa, ..Self::base(Variant::Cavity, emitters) }
    }

    pub fn direct(emitters: usize, gamma_1d: f64) -> Self {
        PlatformSpec { gamma_1d, ..Self::base(Variant::Direct, emitters) }
    }

    pub fn waveguide(emitters: usize, gamma_1d: f64, spacing: f64) -> Self {
        PlatformSpec { gamma_1d, spacing, ..Self::base(Variant::Waveguide, emitters) }
    }

    /// Reabsorption efficiency `2 g² N / κ²` (cavity only).
    pub fn xi(&self) -> Option<f64> {
        (self.variant == Variant::Cavity).then(|| 2.0 * self.g * self.g * self.emitters as f64 / (self.kappa * self.kappa))
    }

    /// Set κ so that the reabsorption efficiency equals `xi`.
    pub fn set_xi(&mut self, xi: f64) -> Result<()> {
        if self.variant != Variant::Cavity || !(xi > 0.0) {
            return Err(Error::InvalidParameter(format!("xi = {xi} needs a cavity platform and a positive value")));
        }
        self.kappa = (2.0 * self.g * self.g * self.emitters as f64 / xi).sqrt();
        Ok(())
    }

    pub fn positions(&self) -> Vec<f64> {
        match &self.positions {
            Some(p) => p.clone(),
            None => (0..self.emitters).map(|n| n as f64 * self.spacing).collect(),
        }
    }

    /// Waveguide coupling weights `cos(2π z_n)`.
    pub fn coupling_weights(&self) -> Vec<f64> {
        self.positions().iter().map(|z| (2.0 * PI * z).cos()).collect()
    }

    pub fn uses_qubits(&self) -> bool {
        match self.representation {
            Representation::Dicke => false,
            Representation::Qubits => true,
            Representation::Auto => {
                self.variant == Variant::Waveguide || self.gamma_independent > 0.0 || self.gamma_dephasing > 0.0
            }
        }
    }

    pub fn cavity_dim(&self) -> usize {
        self.cavity_cutoff.unwrap_or(self.emitters + 1)
    }

    pub fn mode_dim(&self) -> usize {
        self.mode_cutoff.unwrap_or(self.emitters + 1)
    }

    /// Output rate and its symbol's value: `κ` for the cavity, `Γ_1D` otherwise.
    pub fn channel_rate(&self) -> f64 {
        match self.variant {
            Variant::Cavity => self.kappa,
            _ => self.gamma_1d,
        }
    }

    /// Slowest single-emitter emission time, used to size the time horizon.
    pub fn time_unit(&self) -> f64 {
        match self.variant {
            Variant::Cavity => 1.0 / (0.5 * self.kappa).min(4.0 * self.g * self.g / self.kappa),
            _ => 1.0 / self.gamma_1d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.emitters < 1 {
            return bad("need at least one emitter".into());
        }
        let rates = [
            ("gamma_collective", self.gamma_collective),
            ("gamma_independent", self.gamma_independent),
            ("gamma_dephasing", self.gamma_dephasing),
        ];
        for (name, v) in rates {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite non-negative rate, got {v}"));
            }
        }
        if !self.detuning.is_finite() {
            return bad("detuning must be finite".into());
        }
        match self.variant {
            Variant::Cavity => {
                if !(self.g > 0.0 && self.kappa > 0.0) || !self.g.is_finite() || !self.kappa.is_finite() {
                    return bad(format!("cavity needs g > 0 and kappa > 0, got g = {}, kappa = {}", self.g, self.kappa));
                }
            }
            _ => {
                if !(self.gamma_1d > 0.0) || !self.gamma_1d.is_finite() {
                    return bad(format!("gamma_1d must be positive, got {}", self.gamma_1d));
                }
            }
        }
        if let Some(p) = &self.positions {
            if p.len() != self.emitters {
                return Err(Error::DimensionMismatch { expected: self.emitters, got: p.len() });
            }
            if p.iter().any(|z| !z.is_finite()) {
                return bad("positions must be finite".into());
            }
        } else if !self.spacing.is_finite() {
            return bad("spacing must be finite".into());
        }
        if self.representation == Representation::Dicke
            && (self.variant == Variant::Waveguide || self.gamma_independent > 0.0 || self.gamma_dephasing > 0.0)
        {
            return bad("site-resolved couplings or channels need the qubit representation".into());
        }
        if self.uses_qubits() && self.emitters > self.qubit_cap {
            return Err(Error::TooManyQubits { variant: self.variant.name(), n: self.emitters, cap: self.qubit_cap });
        }
        for (name, d) in [("cavity_cutoff", self.cavity_cutoff), ("mode_cutoff", self.mode_cutoff)] {
            if let Some(d) = d {
                if d < 2 {
                    return bad(format!("{name} must be at least 2, got {d}"));
                }
            }
        }
        Ok(())
    }

    /// Emitter factor labels in order.
    pub fn emitter_labels(&self) -> Vec<String> {
        if self.uses_qubits() {
            (0..self.emitters).map(|n| format!("q{n}")).collect()
        } else {
            vec![EMITTER_LABEL.to_string()]
        }
    }

    /// Labels of the source: emitters, then the cavity if present.
    pub fn system_labels(&self) -> Vec<String> {
        let mut l = self.emitter_labels();
        if self.variant == Variant::Cavity {
            l.push(CAVITY_LABEL.to_string());
        }
        l
    }

    /// Source space, optionally extended by the output mode, restricted to
    /// at most `N` excitations.
    pub fn space(&self, with_mode: bool) -> Result<CompositeSpace> {
        let mut factors: Vec<Factor> = if self.uses_qubits() {
            self.emitter_labels().into_iter().map(Factor::qubit).collect()
        } else {
            vec![Factor::collective_spin(EMITTER_LABEL, self.emitters)]
        };
        if self.variant == Variant::Cavity {
            factors.push(Factor::boson(CAVITY_LABEL, self.cavity_dim()));
        }
        if with_mode {
            factors.push(Factor::boson(MODE_LABEL, self.mode_dim()));
        }
        Ok(build_space(factors)?.with_excitation_cap(self.emitters))
    }
}

/// Source operators on some space containing the source factors.
#[derive(Clone, Debug)]
pub struct SystemOperators {
    pub hamiltonian: OperatorMatrix,
    /// Output channel operator: `c`, `S-`, or the position-weighted `S-`.
    pub channel: OperatorMatrix,
    pub channel_rate: f64,
    pub decoherence: Vec<JumpOperator>,
    /// Emitter excitations plus cavity photons.
    pub excitation: OperatorMatrix,
    pub emitter_excitation: OperatorMatrix,
    pub cavity_photons: Option<OperatorMatrix>,
}

fn real(v: f64) -> C64 {
    C64::new(v, 0.0)
}

/// Coherent exchange through the guide,
/// `-iΓ/4 Σ_{m≠n} (e^{i2π|z_m - z_n|} - e^{i2π(z_m + z_n + 2 z_mirror)}) σ_m+ σ_n- + h.c.`
pub fn waveguide_exchange(spec: &PlatformSpec, space: &CompositeSpace) -> Result<OperatorMatrix> {
    let z = spec.positions();
    let labels = spec.emitter_labels();
    let sm = qubit::lowering();
    let lowers: Vec<OperatorMatrix> =
        labels.iter().map(|l| site_operator(space, l, &sm)).collect::<Result<_>>()?;
    let mut h = OperatorMatrix::zero(space);
    for m in 0..z.len() {
        for n in 0..z.len() {
            if m == n {
                continue;
            }
            let phase = |x: f64| C64::from_polar(1.0, 2.0 * PI * x);
            let coeff = (phase((z[m] - z[n]).abs()) - phase(z[m] + z[n] + 2.0 * Z_MIRROR)) * (-I * spec.gamma_1d / 4.0);
            // exact cancellations leave rounding residue; keep the operator sparse
            if coeff.norm() < 1e-14 * spec.gamma_1d {
                continue;
            }
            let term = lowers[m].adjoint().mul(&lowers[n]).scale(coeff);
            h = h.add(&term).add(&term.adjoint());
        }
    }
    Ok(h)
}

/// Hamiltonian, output channel and decoherence channels of the source,
/// embedded in `space`.
pub fn system_operators(spec: &PlatformSpec, space: &CompositeSpace) -> Result<SystemOperators> {
    spec.validate()?;
    let n = spec.emitters as f64;
    let sm = collective_operator(space, Collective::Minus, &Weights::Uniform)?;
    let sz = collective_operator(space, Collective::Sz, &Weights::Uniform)?;
    let emitter_excitation = sz.add(&OperatorMatrix::identity(space).scale(real(n / 2.0)));
    let (hamiltonian, channel, cavity_photons) = match spec.variant {
        Variant::Cavity => {
            let (c, cd) = boson_ladder(space, CAVITY_LABEL)?;
            let nc = cd.mul(&c);
            // lowering before raising keeps products exact under the excitation cap
            let x = cd.mul(&sm);
            let h = nc.scale(real(spec.detuning)).add(&x.add(&x.adjoint()).scale(real(spec.g)));
            (h, c, Some(nc))
        }
        Variant::Direct => (OperatorMatrix::zero(space), sm.clone(), None),
        Variant::Waveguide => {
            let weighted = collective_operator(space, Collective::Minus, &Weights::PerEmitter(spec.coupling_weights()))?;
            (waveguide_exchange(spec, space)?, weighted, None)
        }
    };
    let mut decoherence = Vec::new();
    if spec.gamma_collective > 0.0 {
        decoherence.push(JumpOperator::constant(sm.scale(real(spec.gamma_collective.sqrt()))));
    }
    if spec.gamma_independent > 0.0 || spec.gamma_dephasing > 0.0 {
        for label in spec.emitter_labels() {
            if spec.gamma_independent > 0.0 {
                let op = site_operator(space, &label, &qubit::lowering())?;
                decoherence.push(JumpOperator::constant(op.scale(real(spec.gamma_independent.sqrt()))));
            }
            if spec.gamma_dephasing > 0.0 {
                let op = site_operator(space, &label, &qubit::pauli_z())?;
                decoherence.push(JumpOperator::constant(op.scale(real(spec.gamma_dephasing.sqrt()))));
            }
        }
    }
    let excitation = match &cavity_photons {
        Some(nc) => emitter_excitation.add(nc),
        None => emitter_excitation.clone(),
    };
    Ok(SystemOperators {
        hamiltonian,
        channel,
        channel_rate: spec.channel_rate(),
        decoherence,
        excitation,
        emitter_excitation,
        cavity_photons,
    })
}

/// Internal master equation of the source alone.
pub fn build_internal_model(spec: &PlatformSpec) -> Result<LindbladModel> {
    let space = spec.space(false)?;
    let ops = system_operators(spec, &space)?;
    Ok(internal_model(&ops))
}

fn internal_model(ops: &SystemOperators) -> LindbladModel {
    let mut model = LindbladModel::new(ops.hamiltonian.clone())
        .expect("source Hamiltonian is Hermitian by construction")
        .with_jump(JumpOperator::constant(ops.channel.scale(real(ops.channel_rate.sqrt()))));
    for j in &ops.decoherence {
        model = model.with_jump(j.clone());
    }
    model
}

/// Emitters in the symmetric state `psi` (Dicke basis, index 0 fully
/// excited), every boson in vacuum.
pub fn initial_state(spec: &PlatformSpec, space: &CompositeSpace, psi: &[C64]) -> Result<DensityState> {
    if psi.len() != spec.emitters + 1 {
        return Err(Error::DimensionMismatch { expected: spec.emitters + 1, got: psi.len() });
    }
    let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidState(format!("emitter state has norm² {norm}")));
    }
    let emitter = if spec.uses_qubits() { dicke_to_qubits(psi) } else { psi.to_vec() };
    let boson_dims: usize = space.factors().iter().skip(spec.emitter_labels().len()).map(Factor::dim).product();
    let mut full = vec![ZERO; space.dim()];
    for (e, amp) in emitter.iter().enumerate() {
        if amp.norm() == 0.0 {
            continue;
        }
        let idx = space
            .index_of_flat(e * boson_dims)
            .ok_or_else(|| Error::InvalidState("emitter state exceeds the excitation cap".into()))?;
        full[idx] = *amp;
    }
    DensityState::pure(space, &full)
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub n_points: usize,
    /// Emission window; chosen automatically from the residual excitation when absent.
    pub t_end: Option<f64>,
    pub internal_control: StepControl,
    pub cascade_control: StepControl,
    pub epsilon: f64,
    /// Grid indices at which reduced states are kept.
    pub snapshots: Vec<usize>,
    /// Photonic target on the mode factor; defaults to the Fock image of the
    /// initial emitter state.
    pub target: Option<Vec<C64>>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            n_points: 300,
            t_end: None,
            internal_control: StepControl::Adaptive { rtol: 1e-9, atol: 1e-11 },
            cascade_control: StepControl::Adaptive { rtol: 1e-6, atol: 1e-8 },
            epsilon: DEFAULT_EPSILON,
            snapshots: vec![],
            target: None,
        }
    }
}

/// Per-time-point diagnostics of the cascaded run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    /// Total output intensity `<A B>` at equal times.
    pub intensity: f64,
    pub mode_photons: f64,
    pub emitter_excitation: f64,
    pub cavity_photons: f64,
    /// Von Neumann entropy of the source (emitters and cavity).
    pub system_entropy: f64,
    pub system_purity: f64,
    pub mode_purity: f64,
    pub fidelity: f64,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub index: usize,
    pub t: f64,
    pub mode: DensityState,
    /// Emitters on the Dicke ladder. Qubit runs keep the renormalized
    /// projection onto the symmetric sector.
    pub emitters: DensityState,
    /// Weight of the symmetric sector in the emitter state.
    pub symmetric_weight: f64,
    pub cavity: Option<DensityState>,
}

/// Project an `N`-qubit density matrix (first qubit most significant, set
/// bit = ground) onto the Dicke ladder. Returns the block and its trace.
pub fn symmetric_projection(rho: &CMatrix, emitters: usize) -> (CMatrix, f64) {
    let n = emitters;
    let dim = 1usize << n;
    debug_assert_eq!(rho.nrows(), dim);
    let binom: Vec<f64> = (0..=n)
        .map(|k| (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64))
        .collect();
    let mut out = CMatrix::zeros(n + 1, n + 1);
    for b in 0..dim {
        let l = b.count_ones() as usize;
        for a in 0..dim {
            out[(a.count_ones() as usize, l)] += rho[(a, b)];
        }
    }
    for k in 0..=n {
        for l in 0..=n {
            out[(k, l)] /= (binom[k] * binom[l]).sqrt();
        }
    }
    let weight = out.trace().re;
    (out, weight)
}

#[derive(Clone, Debug)]
pub struct CascadeResult {
    pub spec: PlatformSpec,
    pub grid: TimeGrid,
    pub initial_excitation: f64,
    pub correlation: CMatrix,
    pub modes: ModeDecomposition,
    pub profile: CascadeProfile,
    pub diagnostics: Vec<Diagnostics>,
    pub snapshots: Vec<Snapshot>,
    pub mode_state: DensityState,
    pub system_state: DensityState,
    pub target: Vec<C64>,
    pub fidelity: f64,
    /// Fidelity maximized over the phase-space rotation of the target.
    pub rotated_fidelity: f64,
    pub rotation: f64,
    /// Residual source excitation at `t_end` over the initial excitation.
    pub residual_fraction: f64,
    pub subradiant_remainder: bool,
    pub horizon_extended: bool,
    pub max_trace_drift: f64,
    pub max_hermiticity_error: f64,
}

impl CascadeResult {
    pub fn dominant_occupancy(&self) -> f64 {
        self.modes.occupancies.first().copied().unwrap_or(0.0)
    }

    /// `sqrt(<t|rho|t>)`, the Uhlmann fidelity in its square-root convention.
    pub fn root_fidelity(&self) -> f64 {
        self.fidelity.max(0.0).sqrt()
    }

    pub fn final_diagnostics(&self) -> &Diagnostics {
        self.diagnostics.last().expect("diagnostics cover the grid")
    }

    pub fn xi(&self) -> Option<f64> {
        self.spec.xi()
    }
}

fn residual(ops: &SystemOperators, rho: &DensityState) -> f64 {
    rho.expectation(&ops.excitation).re
}

/// Shortest multiple of the platform time unit after which the residual
/// excitation drops below tolerance, or where the decay stalls.
fn probe_horizon(model: &LindbladModel, ops: &SystemOperators, rho0: &DensityState, unit: f64, control: StepControl) -> Result<f64> {
    let initial = residual(ops, rho0);
    let chunk = 2.0 * unit;
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut last = initial;
    for _ in 0..24 {
        let grid = TimeGrid::new(t, t + chunk, 9)?;
        let opts = EvolveOptions { control, store_every: 0, observables: vec![] };
        let traj = evolve_with(model, &rho, &grid, &opts, |_, _, _| Ok(()))?;
        rho = traj.final_state().clone();
        t += chunk;
        let r = residual(ops, &rho);
        if r < HORIZON_TOL * initial || last - r < 1e-7 * initial {
            break;
        }
        last = r;
    }
    Ok(t)
}

/// Steps (i)–(iii): internal evolution, dominant mode, cascaded evolution.
pub fn run_pipeline(spec: &PlatformSpec, psi: &[C64], opts: &PipelineOptions) -> Result<CascadeResult> {
    spec.validate()?;
    let space = spec.space(false)?;
    let ops = system_operators(spec, &space)?;
    let model = internal_model(&ops);
    let rho0 = initial_state(spec, &space, psi)?;
    let initial = residual(&ops, &rho0);

    let mut t_end = match opts.t_end {
        Some(t) => t,
        None => probe_horizon(&model, &ops, &rho0, spec.time_unit(), opts.internal_control)?,
    };
    let mut extended = false;
    let (grid, states, final_residual) = loop {
        let grid = TimeGrid::new(0.0, t_end, opts.n_points)?;
        let eo = EvolveOptions { control: opts.internal_control, store_every: 1, observables: vec![] };
        let traj = evolve_with(&model, &rho0, &grid, &eo, |_, _, _| Ok(()))?;
        let r = residual(&ops, traj.final_state());
        if r < HORIZON_TOL * initial || extended {
            let states: Vec<CMatrix> = traj.states.into_iter().map(|(_, s)| s.into_matrix()).collect();
            break (grid, states, r);
        }
        extended = true;
        t_end *= 1.5;
    };

    let root = real(ops.channel_rate.sqrt());
    let a = ops.channel.adjoint().scale(root);
    let b = ops.channel.scale(root);
    let correlation = correlation_from_states(&model, &states, &grid, &a, &b, opts.internal_control)?;
    let intensity: Vec<f64> = (0..grid.len()).map(|j| correlation[(j, j)].re).collect();
    drop(states);
    let modes = principal_modes(&correlation, &grid)?;
    let n0 = modes.occupancies.first().copied().unwrap_or(0.0);
    if n0 < DARK_THRESHOLD {
        return Err(Error::DarkStart(n0));
    }
    let profile = cascade_profile(modes.dominant().expect("occupancy is positive"), opts.epsilon)?;

    let ext = spec.space(true)?;
    let xops = system_operators(spec, &ext)?;
    let (a0, _) = boson_ladder(&ext, MODE_LABEL)?;
    let shared = Arc::new(profile.clone());
    let rate = ops.channel_rate;
    let p1 = shared.clone();
    let p2 = shared.clone();
    let mut cascade = LindbladModel::new(xops.hamiltonian.clone())?
        .with_pair(
            Envelope::function(move |t| I * (0.5 * rate.sqrt()) * p1.at(t).conj()),
            xops.channel.adjoint().mul(&a0),
        )
        .with_jump(JumpOperator::new(vec![
            (Envelope::Constant(real(rate.sqrt())), xops.channel.clone()),
            (Envelope::function(move |t| p2.at(t).conj()), a0.clone()),
        ]));
    for j in &xops.decoherence {
        cascade = cascade.with_jump(j.clone());
    }
    let xrho0 = initial_state(spec, &ext, psi)?;

    let target = match &opts.target {
        Some(t) => {
            if t.len() != spec.mode_dim() {
                return Err(Error::DimensionMismatch { expected: spec.mode_dim(), got: t.len() });
            }
            t.clone()
        }
        None => {
            let mut t = dicke_to_fock(psi);
            t.resize(spec.mode_dim(), ZERO);
            t
        }
    };

    let system_labels = spec.system_labels();
    let system_refs: Vec<&str> = system_labels.iter().map(String::as_str).collect();
    let to_mode = TraceMap::new(&ext, &[MODE_LABEL])?;
    let to_system = TraceMap::new(&ext, &system_refs)?;
    let emitter_labels = spec.emitter_labels();
    let emitter_refs: Vec<&str> = emitter_labels.iter().map(String::as_str).collect();
    let to_emitters = TraceMap::new(&ext, &emitter_refs)?;
    let dicke_space = build_space(vec![Factor::collective_spin(EMITTER_LABEL, spec.emitters)])?;
    let to_cavity = match spec.variant {
        Variant::Cavity => Some(TraceMap::new(&ext, &[CAVITY_LABEL])?),
        _ => None,
    };
    let n_mode = a0.adjoint().mul(&a0);

    let mut diagnostics = Vec::with_capacity(grid.len());
    let mut snapshots = Vec::new();
    let eo = EvolveOptions { control: opts.cascade_control, store_every: 0, observables: vec![] };
    let traj = evolve_with(&cascade, &xrho0, &grid, &eo, |i, t, rho| {
        let mode = to_mode.apply(rho)?;
        let sys = to_system.apply_matrix(rho.matrix());
        diagnostics.push(Diagnostics {
            t,
            intensity: intensity[i],
            mode_photons: rho.expectation(&n_mode).re,
            emitter_excitation: rho.expectation(&xops.emitter_excitation).re,
            cavity_photons: xops.cavity_photons.as_ref().map_or(0.0, |nc| rho.expectation(nc).re),
            system_entropy: von_neumann_entropy(&sys),
            system_purity: (&sys * &sys).trace().re,
            mode_purity: mode.purity(),
            fidelity: fidelity(&mode, &target)?,
        });
        if opts.snapshots.contains(&i) {
            let reduced = to_emitters.apply_matrix(rho.matrix());
            let (dicke, weight) = if spec.uses_qubits() {
                let (block, w) = symmetric_projection(&reduced, spec.emitters);
                (if w > 0.0 { block / C64::new(w, 0.0) } else { block }, w)
            } else {
                (reduced, 1.0)
            };
            snapshots.push(Snapshot {
                index: i,
                t,
                emitters: DensityState::new(&dicke_space, dicke)?,
                symmetric_weight: weight,
                cavity: to_cavity.as_ref().map(|m| m.apply(rho)).transpose()?,
                mode,
            });
        }
        Ok(())
    })?;
    let last = traj.final_state();
    let mode_state = to_mode.apply(last)?;
    let system_state = to_system.apply(last)?;
    let (rotated, rotation) = rotated_fidelity(&mode_state, &target)?;
    let residual_fraction = if initial > 0.0 { final_residual / initial } else { 0.0 };
    Ok(CascadeResult {
        spec: spec.clone(),
        grid,
        initial_excitation: initial,
        correlation,
        modes,
        profile,
        fidelity: fidelity(&mode_state, &target)?,
        diagnostics,
        snapshots,
        mode_state,
        system_state,
        target,
        rotated_fidelity: rotated,
        rotation,
        residual_fraction,
        subradiant_remainder: residual_fraction >= RESIDUAL_TOL,
        horizon_extended: extended,
        max_trace_drift: traj.max_trace_drift,
        max_hermiticity_error: traj.max_hermiticity_error,
    })
}
