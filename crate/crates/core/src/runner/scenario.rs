use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{fmt_real, fmt_reals, parse_real, split_list, RawConfig};
use crate::cascade::{PipelineOptions, PlatformSpec, Representation, Variant, SWEEP_AXES};
use crate::dynamics::StepControl;
use crate::error::{Error, Result};
use crate::modes::DEFAULT_EPSILON;
use crate::operator::C64;
use crate::states::{prepare_photon_target, prepare_spin, PhotonTargetSpec, SpinStateSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Output {
    Trajectory,
    Modes,
    WignerField,
    WignerSphere,
    Summary,
}

impl Output {
    pub const ALL: [Output; 5] = [Output::Trajectory, Output::Modes, Output::WignerField, Output::WignerSphere, Output::Summary];

    pub fn name(&self) -> &'static str {
        match self {
            Output::Trajectory => "trajectory",
            Output::Modes => "modes",
            Output::WignerField => "wigner-field",
            Output::WignerSphere => "wigner-sphere",
            Output::Summary => "summary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub points: usize,
    pub t_end: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSpec {
    pub internal_rtol: f64,
    pub internal_atol: f64,
    pub cascade_rtol: f64,
    pub cascade_atol: f64,
    pub epsilon: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = PipelineOptions::default();
        let (ir, ia) = match d.internal_control {
            StepControl::Adaptive { rtol, atol } => (rtol, atol),
            _ => (1e-9, 1e-11),
        };
        let (cr, ca) = match d.cascade_control {
            StepControl::Adaptive { rtol, atol } => (rtol, atol),
            _ => (1e-6, 1e-8),
        };
        SolverSpec { internal_rtol: ir, internal_atol: ia, cascade_rtol: cr, cascade_atol: ca, epsilon: DEFAULT_EPSILON }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WignerSpec {
    /// Snapshot times as fractions of the emission window.
    pub times: Vec<f64>,
    pub resolution: usize,
    /// Half width of the square field grid; sized from the cutoff when absent.
    pub half_width: Option<f64>,
    pub sphere_theta: usize,
    pub sphere_phi: usize,
    /// Also write portable-pixmap previews.
    pub images: bool,
}

impl Default for WignerSpec {
    fn default() -> Self {
        WignerSpec { times: vec![1.0], resolution: 81, half_width: None, sphere_theta: 41, sphere_phi: 80, images: false }
    }
}

/// Decoherence channel a `loss` axis acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossChannel {
    Collective,
    Independent,
    Dephasing,
}

impl LossChannel {
    pub fn name(&self) -> &'static str {
        match self {
            LossChannel::Collective => "collective",
            LossChannel::Independent => "independent",
            LossChannel::Dephasing => "dephasing",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [LossChannel::Collective, LossChannel::Independent, LossChannel::Dephasing].into_iter().find(|c| c.name() == s)
    }

    fn set(&self, spec: &mut PlatformSpec, rate: f64) {
        match self {
            LossChannel::Collective => spec.gamma_collective = rate,
            LossChannel::Independent => spec.gamma_independent = rate,
            LossChannel::Dephasing => spec.gamma_dephasing = rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AxisValues {
    Numeric(Vec<f64>),
    Labels(Vec<String>),
}

impl AxisValues {
    pub fn len(&self) -> usize {
        match self {
            AxisValues::Numeric(v) => v.len(),
            AxisValues::Labels(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn text(&self, i: usize) -> String {
        match self {
            AxisValues::Numeric(v) => fmt_real(v[i]),
            AxisValues::Labels(v) => v[i].clone(),
        }
    }

    fn render(&self) -> String {
        match self {
            AxisValues::Numeric(v) => fmt_reals(v),
            AxisValues::Labels(v) => v.join(", "),
        }
    }
}

/// Label axes take names rather than numbers.
pub const LABEL_AXES: &[&str] = &["state", "channel"];
/// Numeric axes handled by the runner rather than the platform.
pub const RUNNER_AXES: &[&str] = &["loss"];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub name: String,
    pub values: AxisValues,
}

impl SweepAxis {
    /// Parse `values` for the axis `name`.
    pub fn parse(name: &str, values: &str) -> std::result::Result<Self, String> {
        let values = if LABEL_AXES.contains(&name) {
            let labels = split_list(values);
            if labels.is_empty() {
                return Err(format!("axis `{name}` needs at least one value"));
            }
            if name == "channel" {
                if let Some(bad) = labels.iter().find(|l| LossChannel::parse(l).is_none()) {
                    return Err(format!("unknown channel `{bad}` (collective, independent, dephasing)"));
                }
            }
            AxisValues::Labels(labels)
        } else if SWEEP_AXES.contains(&name) || RUNNER_AXES.contains(&name) {
            AxisValues::Numeric(super::config::parse_reals(values)?)
        } else {
            return Err(format!(
                "unknown sweep axis `{name}`; expected one of {}",
                SWEEP_AXES.iter().chain(RUNNER_AXES).chain(LABEL_AXES).copied().collect::<Vec<_>>().join(", ")
            ));
        };
        Ok(SweepAxis { name: name.to_string(), values })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub platform: PlatformSpec,
    pub initial_state: SpinStateSpec,
    /// Photonic target; the Fock image of the emitter state when absent.
    pub target: Option<PhotonTargetSpec>,
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub outputs: Vec<Output>,
    pub wigner: WignerSpec,
    /// Named emitter states for the `state` axis.
    pub states: Vec<(String, SpinStateSpec)>,
    pub loss_channel: LossChannel,
    pub sweep: Vec<SweepAxis>,
}

/// One point of a scenario: the fully substituted config and the axis
/// values that produced it.
#[derive(Clone, Debug)]
pub struct ScenarioPoint {
    pub index: usize,
    pub coordinates: Vec<(String, String)>,
    pub config: ScenarioConfig,
    /// Set when an axis value could not be applied.
    pub invalid: Option<String>,
}

fn config_error(message: String) -> Error {
    Error::Config(message)
}

fn absolute(base: &Path, p: &str) -> String {
    let path = Path::new(p);
    let full: PathBuf = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
    full.canonicalize().unwrap_or(full).display().to_string()
}

fn parse_spin(raw: &mut RawConfig, prefix: &str, base: &Path, emitters: usize) -> Result<Option<SpinStateSpec>> {
    let Some(kind) = raw.text(&format!("{prefix}.kind")) else {
        return Ok(None);
    };
    let key = |k: &str| format!("{prefix}.{k}");
    let spec = match kind.value.as_str() {
        "fully-inverted" => SpinStateSpec::FullyInverted,
        "dicke" => {
            let m = raw.real(&key("m"))?;
            let excitations = raw.count(&key("excitations"))?;
            match (m, excitations) {
                (Some(m), None) => SpinStateSpec::Dicke { m },
                (None, Some(k)) => SpinStateSpec::Dicke { m: emitters as f64 / 2.0 - k as f64 },
                _ => return Err(raw.error(&kind, format!("{prefix}: dicke needs exactly one of `m` or `excitations`"))),
            }
        }
        "coherent" => SpinStateSpec::Coherent { theta: raw.real_or(&key("theta"), 0.0)?, phi: raw.real_or(&key("phi"), 0.0)? },
        "cat" => {
            let legs = match raw.text(&key("legs")) {
                Some(e) => parse_legs(&e.value).map_err(|m| raw.error(&e, format!("{prefix}.legs: {m}")))?,
                None => {
                    let theta = raw.real_or(&key("theta"), PI_2)?;
                    let phi = raw.real_or(&key("phi"), 0.0)?;
                    vec![(theta, phi), (theta, phi + std::f64::consts::PI)]
                }
            };
            SpinStateSpec::Cat { legs, relative_phase: raw.real_or(&key("relative_phase"), 0.0)? }
        }
        "twisted" => SpinStateSpec::Twisted {
            theta: raw.real_or(&key("theta"), PI_2)?,
            phi: raw.real_or(&key("phi"), 0.0)?,
            chi_t: raw.real_or(&key("chi_t"), 0.0)?,
        },
        "gkp-circle" => SpinStateSpec::GkpCircle {
            delta: raw.real_or(&key("delta"), 0.35)?,
            spacing: raw.real_or(&key("spacing"), 2.0 * std::f64::consts::PI.sqrt())?,
        },
        "photon-image" => match parse_target(raw, &key("photon"), base)? {
            Some(t) => SpinStateSpec::PhotonImage(t),
            None => return Err(raw.error(&kind, format!("{prefix}: photon-image needs `{prefix}.photon.kind`"))),
        },
        "file" => match raw.text(&key("path")) {
            Some(p) => SpinStateSpec::FromFile(absolute(base, &p.value)),
            None => return Err(raw.error(&kind, format!("{prefix}: file needs `{prefix}.path`"))),
        },
        other => {
            return Err(raw.error(
                &kind,
                format!("{prefix}.kind: unknown `{other}` (fully-inverted, dicke, coherent, cat, twisted, gkp-circle, photon-image, file)"),
            ))
        }
    };
    Ok(Some(spec))
}

const PI_2: f64 = std::f64::consts::FRAC_PI_2;

fn parse_legs(s: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    let legs: Vec<(f64, f64)> = split_list(s)
        .iter()
        .map(|leg| {
            let parts: Vec<&str> = leg.split_whitespace().collect();
            match parts.as_slice() {
                [t, p] => Ok((parse_real(t)?, parse_real(p)?)),
                _ => Err(format!("each leg is `theta phi`, got `{leg}`")),
            }
        })
        .collect::<std::result::Result<_, _>>()?;
    if legs.is_empty() {
        return Err("no legs".into());
    }
    Ok(legs)
}

fn parse_target(raw: &mut RawConfig, prefix: &str, base: &Path) -> Result<Option<PhotonTargetSpec>> {
    let Some(kind) = raw.text(&format!("{prefix}.kind")) else {
        return Ok(None);
    };
    let key = |k: &str| format!("{prefix}.{k}");
    let alpha = |raw: &mut RawConfig| -> Result<C64> {
        let r = raw.real_or(&key("alpha"), 0.0)?;
        let phase = raw.real_or(&key("alpha_phase"), 0.0)?;
        Ok(C64::from_polar(r, phase))
    };
    let spec = match kind.value.as_str() {
        "image" => return Ok(None),
        "fock" => match raw.count(&key("n"))? {
            Some(n) => PhotonTargetSpec::Fock { n },
            None => return Err(raw.error(&kind, format!("{prefix}: fock needs `{prefix}.n`"))),
        },
        "coherent" => PhotonTargetSpec::Coherent { alpha: alpha(raw)? },
        "cat" => {
            let alpha = alpha(raw)?;
            let parity = raw.real_or(&key("parity"), 1.0)?;
            if parity != 1.0 && parity != -1.0 {
                return Err(raw.error(&kind, format!("{prefix}.parity must be 1 or -1, got {parity}")));
            }
            PhotonTargetSpec::Cat { alpha, parity }
        }
        "gkp" => PhotonTargetSpec::Gkp {
            delta: raw.real_or(&key("delta"), 0.35)?,
            spacing: raw.real_or(&key("spacing"), 2.0 * std::f64::consts::PI.sqrt())?,
        },
        "file" => match raw.text(&key("path")) {
            Some(p) => PhotonTargetSpec::FromFile(absolute(base, &p.value)),
            None => return Err(raw.error(&kind, format!("{prefix}: file needs `{prefix}.path`"))),
        },
        other => return Err(raw.error(&kind, format!("{prefix}.kind: unknown `{other}` (image, fock, coherent, cat, gkp, file)"))),
    };
    Ok(Some(spec))
}

fn spin_keys(prefix: &str, spec: &SpinStateSpec, out: &mut Vec<(String, String)>) {
    let mut put = |k: &str, v: String| out.push((format!("{prefix}.{k}"), v));
    match spec {
        SpinStateSpec::FullyInverted => put("kind", "fully-inverted".into()),
        SpinStateSpec::Dicke { m } => {
            put("kind", "dicke".into());
            put("m", fmt_real(*m));
        }
        SpinStateSpec::Coherent { theta, phi } => {
            put("kind", "coherent".into());
            put("theta", fmt_real(*theta));
            put("phi", fmt_real(*phi));
        }
        SpinStateSpec::Cat { legs, relative_phase } => {
            put("kind", "cat".into());
            let legs: Vec<String> = legs.iter().map(|(t, p)| format!("{} {}", fmt_real(*t), fmt_real(*p))).collect();
            put("legs", legs.join(", "));
            put("relative_phase", fmt_real(*relative_phase));
        }
        SpinStateSpec::Twisted { theta, phi, chi_t } => {
            put("kind", "twisted".into());
            put("theta", fmt_real(*theta));
            put("phi", fmt_real(*phi));
            put("chi_t", fmt_real(*chi_t));
        }
        SpinStateSpec::GkpCircle { delta, spacing } => {
            put("kind", "gkp-circle".into());
            put("delta", fmt_real(*delta));
            put("spacing", fmt_real(*spacing));
        }
        SpinStateSpec::PhotonImage(t) => {
            put("kind", "photon-image".into());
            target_keys(&format!("{prefix}.photon"), t, out);
        }
        SpinStateSpec::FromFile(p) => {
            put("kind", "file".into());
            put("path", p.clone());
        }
    }
}

fn target_keys(prefix: &str, spec: &PhotonTargetSpec, out: &mut Vec<(String, String)>) {
    let mut put = |k: &str, v: String| out.push((format!("{prefix}.{k}"), v));
    match spec {
        PhotonTargetSpec::Fock { n } => {
            put("kind", "fock".into());
            put("n", n.to_string());
        }
        PhotonTargetSpec::Coherent { alpha } => {
            put("kind", "coherent".into());
            put("alpha", fmt_real(alpha.norm()));
            put("alpha_phase", fmt_real(alpha.arg()));
        }
        PhotonTargetSpec::Cat { alpha, parity } => {
            put("kind", "cat".into());
            put("alpha", fmt_real(alpha.norm()));
            put("alpha_phase", fmt_real(alpha.arg()));
            put("parity", fmt_real(*parity));
        }
        PhotonTargetSpec::Gkp { delta, spacing } => {
            put("kind", "gkp".into());
            put("delta", fmt_real(*delta));
            put("spacing", fmt_real(*spacing));
        }
        PhotonTargetSpec::FromFile(p) => {
            put("kind", "file".into());
            put("path", p.clone());
        }
    }
}

impl ScenarioConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into());
        Self::parse(&text, &path.display().to_string(), &base, &stem)
    }

    /// Parse scenario text; relative file paths resolve against `base`.
    pub fn parse(text: &str, origin: &str, base: &Path, default_name: &str) -> Result<Self> {
        let mut raw = RawConfig::parse(text, origin)?;
        let name = raw.text("name").map(|e| e.value).unwrap_or_else(|| default_name.to_string());

        let variant_entry = raw
            .text("platform.variant")
            .ok_or_else(|| config_error(format!("{origin}: missing `platform.variant` (cavity, direct, waveguide)")))?;
        let variant = Variant::parse(&variant_entry.value)
            .ok_or_else(|| raw.error(&variant_entry, format!("unknown variant `{}`", variant_entry.value)))?;
        let emitters = raw
            .count("platform.emitters")?
            .ok_or_else(|| config_error(format!("{origin}: missing `platform.emitters`")))?;
        let mut platform = match variant {
            Variant::Cavity => PlatformSpec::cavity(emitters, 1.0, 0.0),
            Variant::Direct => PlatformSpec::direct(emitters, 1.0),
            Variant::Waveguide => PlatformSpec::waveguide(emitters, 1.0, 1.0),
        };
        platform.g = raw.real_or("platform.g", platform.g)?;
        let kappa = raw.real("platform.kappa")?;
        let xi = raw.real("platform.xi")?;
        match (variant, kappa, xi) {
            (_, Some(_), Some(_)) => return Err(config_error(format!("{origin}: set either `platform.kappa` or `platform.xi`, not both"))),
            (Variant::Cavity, None, None) => return Err(config_error(format!("{origin}: cavity needs `platform.kappa` or `platform.xi`"))),
            (_, Some(k), None) => platform.kappa = k,
            (_, None, Some(x)) => platform.set_xi(x)?,
            (_, None, None) => {}
        }
        platform.gamma_1d = raw.real_or("platform.gamma_1d", platform.gamma_1d)?;
        platform.detuning = raw.real_or("platform.detuning", 0.0)?;
        platform.spacing = raw.real_or("platform.spacing", platform.spacing)?;
        platform.positions = raw.reals("platform.positions")?;
        platform.gamma_collective = raw.real_or("platform.gamma_collective", 0.0)?;
        platform.gamma_independent = raw.real_or("platform.gamma_independent", 0.0)?;
        platform.gamma_dephasing = raw.real_or("platform.gamma_dephasing", 0.0)?;
        if let Some(e) = raw.text("platform.representation") {
            platform.representation = match e.value.as_str() {
                "auto" => Representation::Auto,
                "dicke" => Representation::Dicke,
                "qubits" => Representation::Qubits,
                v => return Err(raw.error(&e, format!("unknown representation `{v}` (auto, dicke, qubits)"))),
            };
        }
        if let Some(cap) = raw.count("platform.qubit_cap")? {
            platform.qubit_cap = cap;
        }
        platform.cavity_cutoff = raw.count("platform.cavity_cutoff")?;
        platform.mode_cutoff = raw.count("platform.mode_cutoff")?;

        let initial_state = parse_spin(&mut raw, "initial_state", base, emitters)?.unwrap_or(SpinStateSpec::FullyInverted);
        let target = parse_target(&mut raw, "target", base)?;

        let grid = GridSpec {
            points: raw.count("grid.points")?.unwrap_or(300),
            t_end: match raw.text("grid.t_end") {
                None => None,
                Some(e) if e.value == "auto" => None,
                Some(e) => Some(parse_real(&e.value).map_err(|m| raw.error(&e, format!("grid.t_end: {m}")))?),
            },
        };
        let d = SolverSpec::default();
        let solver = SolverSpec {
            internal_rtol: raw.real_or("solver.internal_rtol", d.internal_rtol)?,
            internal_atol: raw.real_or("solver.internal_atol", d.internal_atol)?,
            cascade_rtol: raw.real_or("solver.cascade_rtol", d.cascade_rtol)?,
            cascade_atol: raw.real_or("solver.cascade_atol", d.cascade_atol)?,
            epsilon: raw.real_or("solver.epsilon", d.epsilon)?,
        };

        let outputs = match raw.text("outputs") {
            None => vec![],
            Some(e) => {
                let mut v = Vec::new();
                for item in split_list(&e.value) {
                    let o = Output::parse(&item).ok_or_else(|| {
                        raw.error(&e, format!("unknown output `{item}` (trajectory, modes, wigner-field, wigner-sphere, summary)"))
                    })?;
                    if !v.contains(&o) {
                        v.push(o);
                    }
                }
                v.sort();
                v
            }
        };

        let dw = WignerSpec::default();
        let wigner = WignerSpec {
            times: raw.reals("wigner.times")?.unwrap_or(dw.times),
            resolution: raw.count("wigner.resolution")?.unwrap_or(dw.resolution),
            half_width: raw.real("wigner.half_width")?,
            sphere_theta: raw.count("wigner.sphere_theta")?.unwrap_or(dw.sphere_theta),
            sphere_phi: raw.count("wigner.sphere_phi")?.unwrap_or(dw.sphere_phi),
            images: raw.flag("wigner.images", dw.images)?,
        };

        let mut states = Vec::new();
        for label in raw.groups("state") {
            let spec = parse_spin(&mut raw, &format!("state.{label}"), base, emitters)?
                .ok_or_else(|| config_error(format!("{origin}: `state.{label}` needs a `kind`")))?;
            states.push((label, spec));
        }

        let loss_channel = match raw.text("loss.channel") {
            None => LossChannel::Collective,
            Some(e) => LossChannel::parse(&e.value)
                .ok_or_else(|| raw.error(&e, format!("unknown loss channel `{}`", e.value)))?,
        };

        let order = raw.text("sweep.order").map(|e| split_list(&e.value));
        let mut entries = raw.take_prefixed("sweep");
        let mut sweep = Vec::new();
        if let Some(order) = order {
            for name in order {
                let pos = entries
                    .iter()
                    .position(|(k, _)| *k == name)
                    .ok_or_else(|| config_error(format!("{origin}: `sweep.order` names `{name}` but `sweep.{name}` is not set")))?;
                let (k, e) = entries.remove(pos);
                sweep.push(SweepAxis::parse(&k, &e.value).map_err(|m| raw.error(&e, m))?);
            }
        }
        for (k, e) in entries {
            sweep.push(SweepAxis::parse(&k, &e.value).map_err(|m| raw.error(&e, m))?);
        }
        raw.finish()?;

        let cfg = ScenarioConfig {
            name,
            platform,
            initial_state,
            target,
            grid,
            solver,
            outputs,
            wigner,
            states,
            loss_channel,
            sweep,
        };
        cfg.check()?;
        Ok(cfg)
    }

    /// Structural validation that does not depend on sweep values.
    fn check(&self) -> Result<()> {
        if self.outputs.is_empty() {
            return Err(config_error("no outputs requested".into()));
        }
        if self.grid.points < 3 {
            return Err(config_error(format!("grid.points must be at least 3, got {}", self.grid.points)));
        }
        if let Some(t) = self.grid.t_end {
            if !(t > 0.0) {
                return Err(config_error(format!("grid.t_end must be positive, got {t}")));
            }
        }
        let s = &self.solver;
        for (k, v) in [
            ("internal_rtol", s.internal_rtol),
            ("internal_atol", s.internal_atol),
            ("cascade_rtol", s.cascade_rtol),
            ("cascade_atol", s.cascade_atol),
            ("epsilon", s.epsilon),
        ] {
            if !(v > 0.0) {
                return Err(config_error(format!("solver.{k} must be positive, got {v}")));
            }
        }
        if let Some(bad) = self.wigner.times.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(config_error(format!("wigner.times are fractions of the window in [0, 1], got {bad}")));
        }
        self.check_sweep()?;
        if self.sweep.is_empty() {
            self.platform.validate()?;
            self.emitter_state()?;
            self.target_state()?;
        }
        Ok(())
    }

    /// Axis names distinct, labels defined, `channel` paired with `loss`.
    pub fn check_sweep(&self) -> Result<()> {
        let mut seen: Vec<&str> = Vec::new();
        for axis in &self.sweep {
            if seen.contains(&axis.name.as_str()) {
                return Err(config_error(format!("sweep axis `{}` given twice", axis.name)));
            }
            seen.push(&axis.name);
            if let AxisValues::Labels(labels) = &axis.values {
                if axis.name == "state" {
                    if let Some(l) = labels.iter().find(|l| !self.states.iter().any(|(n, _)| n == *l)) {
                        return Err(config_error(format!("sweep.state names `{l}` but no `state.{l}.kind` is defined")));
                    }
                }
            }
        }
        if seen.contains(&"channel") && !seen.contains(&"loss") {
            return Err(config_error("sweep.channel needs a `sweep.loss` axis".into()));
        }
        Ok(())
    }

    /// Emitter state vector on the Dicke ladder.
    pub fn emitter_state(&self) -> Result<Vec<C64>> {
        prepare_spin(&self.initial_state, self.platform.emitters)
    }

    pub fn target_state(&self) -> Result<Option<Vec<C64>>> {
        self.target.as_ref().map(|t| prepare_photon_target(t, self.platform.mode_dim())).transpose()
    }

    pub fn pipeline_options(&self) -> Result<PipelineOptions> {
        let s = &self.solver;
        let snapshots = if self.outputs.contains(&Output::WignerField) || self.outputs.contains(&Output::WignerSphere) {
            self.snapshot_indices()
        } else {
            vec![]
        };
        Ok(PipelineOptions {
            n_points: self.grid.points,
            t_end: self.grid.t_end,
            internal_control: StepControl::Adaptive { rtol: s.internal_rtol, atol: s.internal_atol },
            cascade_control: StepControl::Adaptive { rtol: s.cascade_rtol, atol: s.cascade_atol },
            epsilon: s.epsilon,
            snapshots,
            target: self.target_state()?,
        })
    }

    /// Grid indices of the Wigner snapshots, ascending and distinct.
    pub fn snapshot_indices(&self) -> Vec<usize> {
        let last = (self.grid.points - 1) as f64;
        let mut idx: Vec<usize> = self.wigner.times.iter().map(|f| (f * last).round() as usize).collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }

    /// Every point of the sweep grid (the config itself when there is no
    /// sweep), first axis slowest.
    pub fn points(&self) -> Result<Vec<ScenarioPoint>> {
        let total: usize = self.sweep.iter().map(|a| a.values.len()).product();
        let mut out = Vec::with_capacity(total);
        for index in 0..total {
            let mut rem = index;
            let mut picks = vec![0; self.sweep.len()];
            for (k, axis) in self.sweep.iter().enumerate().rev() {
                picks[k] = rem % axis.values.len();
                rem /= axis.values.len();
            }
            let mut config = self.clone();
            config.sweep.clear();
            let mut coordinates = Vec::new();
            let channel = self
                .sweep
                .iter()
                .zip(&picks)
                .find_map(|(a, &i)| match (&a.values, a.name.as_str()) {
                    (AxisValues::Labels(l), "channel") => LossChannel::parse(&l[i]),
                    _ => None,
                })
                .unwrap_or(self.loss_channel);
            config.loss_channel = channel;
            let mut invalid = None;
            for (axis, &i) in self.sweep.iter().zip(&picks) {
                coordinates.push((axis.name.clone(), axis.values.text(i)));
                match (&axis.values, axis.name.as_str()) {
                    (AxisValues::Labels(l), "state") => {
                        let (_, spec) = self.states.iter().find(|(n, _)| *n == l[i]).expect("checked at parse time");
                        config.initial_state = spec.clone();
                    }
                    (AxisValues::Labels(_), _) => {}
                    (AxisValues::Numeric(v), "loss") => channel.set(&mut config.platform, v[i]),
                    (AxisValues::Numeric(v), name) => {
                        if let Err(e) = config.platform.set(name, v[i]) {
                            invalid.get_or_insert(e);
                        }
                    }
                }
            }
            let invalid = invalid.map(|e: Error| e.to_string());
            out.push(ScenarioPoint { index, coordinates, config, invalid });
        }
        Ok(out)
    }

    /// Canonical, fully explicit `key = value` text. Parsing it yields an
    /// identical config.
    pub fn render(&self) -> String {
        let mut kv: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
        put("name", self.name.clone());
        let p = &self.platform;
        put("platform.variant", p.variant.name().into());
        put("platform.emitters", p.emitters.to_string());
        put("platform.g", fmt_real(p.g));
        put("platform.kappa", fmt_real(p.kappa));
        put("platform.gamma_1d", fmt_real(p.gamma_1d));
        put("platform.detuning", fmt_real(p.detuning));
        put("platform.spacing", fmt_real(p.spacing));
        if let Some(z) = &p.positions {
            put("platform.positions", fmt_reals(z));
        }
        put("platform.gamma_collective", fmt_real(p.gamma_collective));
        put("platform.gamma_independent", fmt_real(p.gamma_independent));
        put("platform.gamma_dephasing", fmt_real(p.gamma_dephasing));
        put(
            "platform.representation",
            match p.representation {
                Representation::Auto => "auto",
                Representation::Dicke => "dicke",
                Representation::Qubits => "qubits",
            }
            .into(),
        );
        put("platform.qubit_cap", p.qubit_cap.to_string());
        if p.variant == Variant::Cavity {
            put("platform.cavity_cutoff", p.cavity_dim().to_string());
        }
        put("platform.mode_cutoff", p.mode_dim().to_string());
        let mut states = Vec::new();
        spin_keys("initial_state", &self.initial_state, &mut states);
        kv.extend(states);
        let mut t = Vec::new();
        match &self.target {
            Some(spec) => target_keys("target", spec, &mut t),
            None => t.push(("target.kind".into(), "image".into())),
        }
        kv.extend(t);
        let mut put = |k: &str, v: String| kv.push((k.to_string(), v));
        put("grid.points", self.grid.points.to_string());
        put("grid.t_end", self.grid.t_end.map_or("auto".into(), fmt_real));
        let s = &self.solver;
        put("solver.internal_rtol", fmt_real(s.internal_rtol));
        put("solver.internal_atol", fmt_real(s.internal_atol));
        put("solver.cascade_rtol", fmt_real(s.cascade_rtol));
        put("solver.cascade_atol", fmt_real(s.cascade_atol));
        put("solver.epsilon", fmt_real(s.epsilon));
        put("outputs", self.outputs.iter().map(|o| o.name()).collect::<Vec<_>>().join(", "));
        let w = &self.wigner;
        put("wigner.times", fmt_reals(&w.times));
        put("wigner.resolution", w.resolution.to_string());
        if let Some(h) = w.half_width {
            put("wigner.half_width", fmt_real(h));
        }
        put("wigner.sphere_theta", w.sphere_theta.to_string());
        put("wigner.sphere_phi", w.sphere_phi.to_string());
        put("wigner.images", w.images.to_string());
        put("loss.channel", self.loss_channel.name().into());
        for (label, spec) in &self.states {
            spin_keys(&format!("state.{label}"), spec, &mut kv);
        }
        if !self.sweep.is_empty() {
            kv.push(("sweep.order".into(), self.sweep.iter().map(|a| a.name.clone()).collect::<Vec<_>>().join(", ")));
            for a in &self.sweep {
                kv.push((format!("sweep.{}", a.name), a.values.render()));
            }
        }
        let mut text = String::new();
        for (k, v) in kv {
            let _ = writeln!(text, "{k} = {v}");
        }
        text
    }
}
