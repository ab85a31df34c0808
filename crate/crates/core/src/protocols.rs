//! End-to-end write/store/read runs for the memory scenarios, the linear
//! optics that prepares their inputs, and computational-basis bookkeeping.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

use nalgebra::DVector;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    hamiltonian_entangled, hamiltonian_single, hamiltonian_superposition, integrate,
    linear_grid, modes, CollapseChannel, ControlEnvelope, DynamicsError, IntegratorOptions,
    LindbladSystem, Trajectory,
};
use crate::hilbert::{
    fock_ket, superposition_ket, CMatrix, CompositeSpace, HilbertError, ModeSpace, StateMatrix,
};
use crate::metrics::{self, ClassicalBound, MetricsError, MetricsReport, MetricsRequest};
use crate::model::{self, ConstraintReport, DerivedParams, ModelError, PhysicalParams};

/// Retrieved weight outside the qubit sector above which a warning is kept.
pub const DISCARD_WARN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("optical network: {0}")]
    Network(String),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// One photon in `a_ell`, stored in side mode `c`.
    Single,
    /// One photon shared by `a_ell` and `a_mell`.
    Superposition,
    /// Two cavities holding an OAM-entangled photon pair.
    Entangled,
    /// Multi-photon Fock states and their superpositions in `a_ell`.
    FockSeries,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Single => "single",
            Self::Superposition => "superposition",
            Self::Entangled => "entangled",
            Self::FockSeries => "fock_series",
        }
    }

    /// Optical modes, in space order.
    pub fn photonic_modes(self) -> Vec<String> {
        match self {
            Self::Single | Self::FockSeries => vec![modes::A_ELL.into()],
            Self::Superposition => vec![modes::A_ELL.into(), modes::A_MELL.into()],
            Self::Entangled => (1..=2)
                .flat_map(|k| {
                    [modes::in_cavity(modes::A_ELL, k), modes::in_cavity(modes::A_MELL, k)]
                })
                .collect(),
        }
    }

    /// Condensate side modes, in space order.
    pub fn side_modes(self) -> Vec<String> {
        match self {
            Self::Single | Self::FockSeries => vec![modes::C.into()],
            Self::Superposition => vec![modes::C.into(), modes::D.into()],
            Self::Entangled => (1..=2)
                .flat_map(|k| [modes::in_cavity(modes::C, k), modes::in_cavity(modes::D, k)])
                .collect(),
        }
    }

    /// Side mode that each photonic mode swaps with.
    pub fn partner(self, photonic: &str) -> Option<String> {
        let ph = self.photonic_modes();
        let pos = ph.iter().position(|m| m == photonic)?;
        Some(self.side_modes()[pos].clone())
    }

    pub fn default_cutoff(self) -> usize {
        match self {
            Self::FockSeries => 4,
            _ => 2,
        }
    }

    fn default_bound(self) -> ClassicalBound {
        match self {
            Self::Entangled => ClassicalBound::Teleport(4),
            _ => ClassicalBound::QubitMemory(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeTerm {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    /// One occupation per photonic mode.
    pub occupations: Vec<usize>,
}

/// Photonic input state; side modes always start in vacuum.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// `|1>` for single and fock_series, the interferometer output for
    /// superposition, the postselected pair for entangled.
    #[default]
    Default,
    Occupations { occupations: Vec<usize> },
    Amplitudes { terms: Vec<AmplitudeTerm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub physical: PhysicalParams,
    /// Control-off interval between the pulses (s).
    pub storage_time: f64,
    /// `G~ / gamma0`. When absent the coupling follows from the control
    /// power; a config file that omits the key gets that behavior.
    #[serde(default)]
    pub coupling_ratio: Option<f64>,
    pub interactions_enabled: bool,
    /// Fock cutoff per mode; the scenario default when absent.
    pub cutoff: Option<usize>,
    pub initial_state: InitialState,
    /// Moves the end of the write pulse (s); positive is late.
    pub switch_off_shift: f64,
    /// Observable spacing during the pulses (s). Defaults to `1/(50 G~)`.
    pub pulse_sample_step: Option<f64>,
    /// Observable samples across the storage interval.
    pub storage_samples: usize,
    /// Phase-space half-width and points per axis for Wigner minima.
    pub wigner_extent: f64,
    pub wigner_points: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Single,
            physical: PhysicalParams::reference(),
            storage_time: 613e-6,
            coupling_ratio: Some(4.0),
            interactions_enabled: false,
            cutoff: None,
            initial_state: InitialState::Default,
            switch_off_shift: 0.0,
            pulse_sample_step: None,
            storage_samples: 100,
            wigner_extent: 5.0,
            wigner_points: 201,
        }
    }
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.physical.validate()?;
        let bad = |m: String| Err(ProtocolError::Config(m));
        if !(self.storage_time >= 0.0) || !self.storage_time.is_finite() {
            return bad(format!("storage_time {} must be >= 0", self.storage_time));
        }
        if let Some(r) = self.coupling_ratio {
            if !(r > 0.0) || !r.is_finite() {
                return bad(format!("coupling_ratio {r} must be > 0"));
            }
        }
        if self.cutoff() < 2 {
            return bad(format!("cutoff {} must be >= 2", self.cutoff()));
        }
        if let Some(h) = self.pulse_sample_step {
            if !(h > 0.0) {
                return bad(format!("pulse_sample_step {h} must be > 0"));
            }
        }
        if self.wigner_points < 2 || !(self.wigner_extent > 0.0) {
            return bad("Wigner grid needs extent > 0 and at least 2 points".into());
        }
        Ok(())
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff.unwrap_or_else(|| self.kind.default_cutoff())
    }

    /// Derived parameters anchored to the boosted coupling actually used.
    pub fn derived(&self) -> Result<DerivedParams> {
        let base = model::derive(&self.physical)?;
        Ok(match self.coupling_ratio {
            Some(r) => base.with_boosted_coupling(&self.physical, r * self.physical.cavity_decay)?,
            None => base,
        })
    }

    /// Boosted coupling `G~` (rad/s).
    pub fn coupling(&self) -> Result<f64> {
        Ok(self.derived()?.boosted_coupling)
    }

    /// Frequency offset of each side mode (rad/s).
    pub fn side_offset(&self) -> f64 {
        if self.interactions_enabled {
            model::interaction_shift(&self.physical)
        } else {
            0.0
        }
    }
}

/// Space, Lindblad generator and input for one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioSystem {
    pub kind: ScenarioKind,
    pub system: LindbladSystem,
    pub coupling: f64,
    pub photonic_initial: StateMatrix,
    pub initial: StateMatrix,
}

impl ScenarioSystem {
    pub fn photonic_labels(&self) -> Vec<String> {
        self.kind.photonic_modes()
    }
}

fn scenario_space(kind: ScenarioKind, cutoff: usize) -> Result<CompositeSpace> {
    let labels: Vec<String> = kind
        .photonic_modes()
        .into_iter()
        .chain(kind.side_modes())
        .collect();
    let modes = labels
        .iter()
        .map(|l| ModeSpace::new(l.clone(), cutoff))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(CompositeSpace::new(modes)?)
}

fn photonic_input(config: &ScenarioConfig, space: &CompositeSpace) -> Result<StateMatrix> {
    let kind = config.kind;
    match &config.initial_state {
        InitialState::Default => match kind {
            ScenarioKind::Single | ScenarioKind::FockSeries => Ok(fock_ket(space, &[1])?),
            ScenarioKind::Superposition => embed_photonic(&make_superposition_input()?, space),
            ScenarioKind::Entangled => embed_photonic(&make_entangled_input()?, space),
        },
        InitialState::Occupations { occupations } => Ok(fock_ket(space, occupations)?),
        InitialState::Amplitudes { terms } => {
            let t: Vec<(C64, Vec<usize>)> = terms
                .iter()
                .map(|a| (C64::new(a.re, a.im), a.occupations.clone()))
                .collect();
            let ket = superposition_ket(space, &t)?;
            Ok(StateMatrix::from_ket(space, &ket)?)
        }
    }
}

/// Copies a cutoff-2 state into a space with the same labels and a larger
/// cutoff.
fn embed_photonic(state: &StateMatrix, target: &CompositeSpace) -> Result<StateMatrix> {
    if state.space().labels() != target.labels() {
        return Err(ProtocolError::Config(format!(
            "input on {} does not match {}",
            state.space(),
            target
        )));
    }
    let n = target.dim();
    let mut data = CMatrix::zeros(n, n);
    let src = state.space();
    for i in 0..src.dim() {
        let ti = target.index_of(&src.occupations_of(i))?;
        for j in 0..src.dim() {
            let tj = target.index_of(&src.occupations_of(j))?;
            data[(ti, tj)] = state.data()[(i, j)];
        }
    }
    Ok(StateMatrix::new(target.clone(), data)?)
}

fn str_refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

/// Builds the Lindblad system and the full initial state for `config`.
pub fn build_system(config: &ScenarioConfig) -> Result<ScenarioSystem> {
    config.validate()?;
    let kind = config.kind;
    let cutoff = config.cutoff();
    let space = scenario_space(kind, cutoff)?;
    let g = config.coupling()?;
    let offset = config.side_offset();
    let hamiltonian = match kind {
        ScenarioKind::Single | ScenarioKind::FockSeries => hamiltonian_single(&space, g, offset)?,
        ScenarioKind::Superposition => hamiltonian_superposition(&space, g, g, offset, offset)?,
        ScenarioKind::Entangled => {
            hamiltonian_entangled(&space, [[g, g], [g, g]], [[offset, offset]; 2])?
        }
    };
    let mut channels = Vec::new();
    for m in kind.photonic_modes() {
        channels.push(CollapseChannel::damping(&space, &m, config.physical.cavity_decay)?);
    }
    for m in kind.side_modes() {
        channels.push(CollapseChannel::damping(&space, &m, config.physical.mechanical_decay)?);
    }
    let system = LindbladSystem::new(hamiltonian, channels)?;

    let photonic_labels = kind.photonic_modes();
    let side_labels = kind.side_modes();
    let photonic_space = CompositeSpace::uniform(&str_refs(&photonic_labels), cutoff)?;
    let side_space = CompositeSpace::uniform(&str_refs(&side_labels), cutoff)?;
    let photonic_initial = photonic_input(config, &photonic_space)?;
    let vacuum = fock_ket(&side_space, &vec![0; side_labels.len()])?;
    let initial = photonic_initial.tensor(&vacuum)?;
    Ok(ScenarioSystem {
        kind,
        system,
        coupling: g,
        photonic_initial,
        initial,
    })
}

/// Write/store/read timing for `config`.
pub fn schedule(config: &ScenarioConfig) -> Result<ControlEnvelope> {
    let g = config.coupling()?;
    Ok(ControlEnvelope::write_store_read_shifted(
        g,
        config.storage_time,
        config.switch_off_shift,
    )?)
}

/// Key instants of a write/store/read envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub t_off: f64,
    pub t_on: f64,
    pub t_read: f64,
}

impl Timing {
    pub fn of(envelope: &ControlEnvelope) -> Option<Self> {
        Some(Self {
            t_off: envelope.segment("write")?.end,
            t_on: envelope.segment("read")?.start,
            t_read: envelope.segment("read")?.end,
        })
    }
}

/// Sample instants: pulse segments at `pulse_step`, storage at
/// `storage_samples` evenly spaced points.
pub fn sample_times(envelope: &ControlEnvelope, pulse_step: f64, storage_samples: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for seg in envelope.segments() {
        let pts = if seg.scale == 0.0 {
            let step = (seg.end - seg.start) / storage_samples.max(1) as f64;
            if step > 0.0 {
                linear_grid(seg.start, seg.end, step)
            } else {
                vec![seg.start]
            }
        } else {
            linear_grid(seg.start, seg.end, pulse_step)
        };
        out.extend(pts);
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

#[derive(Debug, Clone)]
pub struct ProtocolResult {
    pub config: ScenarioConfig,
    /// Photonic reduced state at t = 0.
    pub rho_initial: StateMatrix,
    /// Photonic reduced state at t_read.
    pub rho_retrieved: StateMatrix,
    pub trajectory: Trajectory,
    pub schedule: ControlEnvelope,
    pub timing: Timing,
    pub metrics: MetricsReport,
    /// Fidelity after undoing the nominal swap and storage phases.
    pub fidelity_phase_corrected: f64,
    pub constraints: ConstraintReport,
    pub derived: DerivedParams,
    pub warnings: Vec<String>,
}

/// Applies `exp(i phi_m n_m)` to each photonic mode `m`.
fn rotate_photonic(state: &StateMatrix, phases: &[(String, f64)]) -> Result<StateMatrix> {
    let space = state.space();
    let positions: Vec<(usize, f64)> = phases
        .iter()
        .map(|(m, p)| Ok((space.position(m)?, *p)))
        .collect::<Result<_>>()?;
    let angle: Vec<f64> = (0..space.dim())
        .map(|i| {
            let occ = space.occupations_of(i);
            positions.iter().map(|&(pos, p)| p * occ[pos] as f64).sum()
        })
        .collect();
    let n = space.dim();
    let data = CMatrix::from_fn(n, n, |i, j| {
        state.data()[(i, j)] * C64::from_polar(1.0, angle[i] - angle[j])
    });
    Ok(StateMatrix::new_unchecked(space.clone(), data))
}

/// Runs the write/store/read protocol described by `config`.
pub fn run_protocol(config: &ScenarioConfig) -> Result<ProtocolResult> {
    let built = build_system(config)?;
    let derived = config.derived()?;
    let constraints = model::check_constraints(&config.physical, &derived);
    let envelope = schedule(config)?;
    let timing = Timing::of(&envelope).expect("write/store/read envelope");
    let pulse_step = config
        .pulse_sample_step
        .unwrap_or(1.0 / (50.0 * built.coupling));
    let samples = sample_times(&envelope, pulse_step, config.storage_samples);
    let options = IntegratorOptions {
        checkpoints: vec![timing.t_off, timing.t_on, timing.t_read],
        ..Default::default()
    };
    let trajectory = integrate(&built.system, &built.initial, &envelope, &samples, &options)?;

    let labels = built.photonic_labels();
    let keep: Vec<&str> = labels.iter().map(String::as_str).collect();
    let rho_retrieved = trajectory.final_state.partial_trace(&keep)?;
    let rho_initial = built.photonic_initial.clone();

    let mut warnings = Vec::new();
    if !constraints.all_ok() {
        warnings.push(format!("constraints not met: {}", constraints.failed().join(", ")));
    }
    let trace = rho_retrieved.trace();
    if (trace - 1.0).abs() > 1e-6 {
        warnings.push(format!("retrieved trace {trace}"));
    }
    let kind = config.kind;
    let request = MetricsRequest {
        bipartition: (kind == ScenarioKind::Entangled).then(|| labels[..2].to_vec()),
        wigner_mode: matches!(kind, ScenarioKind::Single | ScenarioKind::FockSeries)
            .then(|| modes::A_ELL.to_string()),
        wigner_extent: Some((config.wigner_extent, config.wigner_points)),
        bound: Some(kind.default_bound()),
    };
    let report = metrics::evaluate(&rho_initial, &rho_retrieved, &request)?;

    let store = timing.t_on - timing.t_off;
    let offset = config.side_offset();
    let phases: Vec<(String, f64)> = labels
        .iter()
        .map(|m| (m.clone(), std::f64::consts::PI + offset * store))
        .collect();
    let corrected = rotate_photonic(&rho_retrieved, &phases)?;
    let fidelity_phase_corrected = metrics::fidelity(&rho_initial, &corrected)?;

    if matches!(kind, ScenarioKind::Superposition) {
        let q = map_to_qubit_basis(&rho_retrieved)?;
        warnings.extend(q.warning);
    }

    Ok(ProtocolResult {
        config: config.clone(),
        rho_initial,
        rho_retrieved,
        trajectory,
        schedule: envelope,
        timing,
        metrics: report,
        fidelity_phase_corrected,
        constraints,
        derived,
        warnings,
    })
}

/// Occupation pairs `(n_ell, n_mell)` to computational labels:
/// `|0,0> -> 0`, `|0,1> -> 1`, `|1,0> -> 2`, `|1,1> -> 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QubitMap;

impl QubitMap {
    pub fn index(n_ell: usize, n_mell: usize) -> Option<usize> {
        (n_ell <= 1 && n_mell <= 1).then_some(2 * n_ell + n_mell)
    }

    pub fn occupations(index: usize) -> Option<(usize, usize)> {
        (index < 4).then_some((index / 2, index % 2))
    }

    /// Compact two-cavity label `n = 4p + q - 5` for single-photon cavity
    /// states `p, q` in {1, 2, 3}.
    pub fn composite_index(p: usize, q: usize) -> Option<usize> {
        ((1..=3).contains(&p) && (1..=3).contains(&q)).then(|| 4 * p + q - 5)
    }

    /// Full binary label `4p + q` of the four-mode basis.
    pub fn binary_index(p: usize, q: usize) -> Option<usize> {
        (p < 4 && q < 4).then_some(4 * p + q)
    }

    pub fn label(index: usize) -> String {
        let (a, b) = Self::occupations(index).unwrap_or((9, 9));
        format!("|{a}{b}>")
    }
}

/// A state restricted to the `{0, 1}` occupation sector of each mode.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitMatrix {
    /// Indexed in computational order.
    pub matrix: CMatrix,
    pub labels: Vec<String>,
    pub discarded_weight: f64,
    pub warning: Option<String>,
}

fn restrict_to_qubits(state: &StateMatrix) -> Result<QubitMatrix> {
    let space = state.space();
    let k = space.num_modes();
    let dim = 1usize << k;
    let mut sources = Vec::with_capacity(dim);
    let mut labels = Vec::with_capacity(dim);
    for idx in 0..dim {
        // bit string, most significant bit is the first mode
        let occ: Vec<usize> = (0..k).map(|b| (idx >> (k - 1 - b)) & 1).collect();
        labels.push(format!(
            "|{}>",
            occ.iter().map(|o| o.to_string()).collect::<String>()
        ));
        sources.push(space.index_of(&occ)?);
    }
    let matrix = CMatrix::from_fn(dim, dim, |i, j| state.data()[(sources[i], sources[j])]);
    let kept: f64 = (0..dim).map(|i| matrix[(i, i)].re).sum();
    let discarded_weight = (state.trace() - kept).max(0.0);
    let warning = (discarded_weight > DISCARD_WARN).then(|| {
        format!("{discarded_weight:.3e} of the population lies outside the qubit sector")
    });
    Ok(QubitMatrix {
        matrix,
        labels,
        discarded_weight,
        warning,
    })
}

/// Two-mode photonic state in the computational basis of [`QubitMap`].
pub fn map_to_qubit_basis(state: &StateMatrix) -> Result<QubitMatrix> {
    if state.space().num_modes() != 2 {
        return Err(ProtocolError::Config(format!(
            "qubit map needs two modes, got {}",
            state.space()
        )));
    }
    let mut q = restrict_to_qubits(state)?;
    q.labels = (0..4).map(QubitMap::label).collect();
    Ok(q)
}

/// Four-mode two-cavity state in the binary basis `|i j k l>`, index
/// `4p + q` with `p`, `q` the per-cavity computational labels.
pub fn map_to_two_cavity_basis(state: &StateMatrix) -> Result<QubitMatrix> {
    if state.space().num_modes() != 4 {
        return Err(ProtocolError::Config(format!(
            "two-cavity map needs four modes, got {}",
            state.space()
        )));
    }
    restrict_to_qubits(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OpticalElement {
    /// 50:50 splitter: `a_i^dag -> (a_i^dag + i a_j^dag)/sqrt 2` and
    /// `a_j^dag -> (a_j^dag + i a_i^dag)/sqrt 2`.
    Beamsplitter { i: String, j: String },
    /// `exp(i theta n_mode)`.
    Phase { mode: String, theta: f64 },
    /// Vortex plate imprinting OAM `charge`; renames the path to the
    /// matching OAM mode.
    VortexRelabel { mode: String, charge: i64 },
}

/// Sequence of passive elements acting on labeled paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOpticsNetwork {
    pub modes: Vec<String>,
    pub elements: Vec<OpticalElement>,
}

fn oam_label(charge: i64) -> &'static str {
    if charge > 0 {
        modes::A_ELL
    } else {
        modes::A_MELL
    }
}

impl LinearOpticsNetwork {
    /// Two paths, two splitters, and an optional phase on the second path
    /// between them. Output slot 0 is the bright port.
    pub fn mach_zehnder(phase: Option<f64>) -> Self {
        let (p0, p1) = ("path_0".to_string(), "path_1".to_string());
        let mut elements = vec![OpticalElement::Beamsplitter {
            i: p0.clone(),
            j: p1.clone(),
        }];
        if let Some(theta) = phase {
            elements.push(OpticalElement::Phase {
                mode: p1.clone(),
                theta,
            });
        }
        elements.push(OpticalElement::Beamsplitter {
            i: p0.clone(),
            j: p1.clone(),
        });
        Self {
            modes: vec![p0, p1],
            elements,
        }
    }

    /// First splitter, vortex plates of charge `+1` and `-1` on the two
    /// arms, and a quarter-wave phase on the `-ell` arm that removes the
    /// reflection phase.
    pub fn superposition_source() -> Self {
        let (p0, p1) = ("path_0".to_string(), "path_1".to_string());
        Self {
            modes: vec![p0.clone(), p1.clone()],
            elements: vec![
                OpticalElement::Beamsplitter {
                    i: p0.clone(),
                    j: p1.clone(),
                },
                OpticalElement::VortexRelabel {
                    mode: p0,
                    charge: 1,
                },
                OpticalElement::VortexRelabel {
                    mode: p1,
                    charge: -1,
                },
                OpticalElement::Phase {
                    mode: modes::A_MELL.into(),
                    theta: FRAC_PI_2,
                },
            ],
        }
    }

    /// Checks that each element refers to a path present at that point.
    pub fn validate(&self) -> Result<()> {
        let mut live = self.modes.clone();
        let mut seen = std::collections::HashSet::new();
        if !live.iter().all(|m| seen.insert(m.clone())) {
            return Err(ProtocolError::Network("duplicate path labels".into()));
        }
        let has = |live: &[String], m: &str| -> Result<usize> {
            live.iter()
                .position(|x| x == m)
                .ok_or_else(|| ProtocolError::Network(format!("unknown path `{m}`")))
        };
        for el in &self.elements {
            match el {
                OpticalElement::Beamsplitter { i, j } => {
                    has(&live, i)?;
                    has(&live, j)?;
                    if i == j {
                        return Err(ProtocolError::Network(format!(
                            "beamsplitter on a single path `{i}`"
                        )));
                    }
                }
                OpticalElement::Phase { mode, theta } => {
                    has(&live, mode)?;
                    if !theta.is_finite() {
                        return Err(ProtocolError::Network("non-finite phase".into()));
                    }
                }
                OpticalElement::VortexRelabel { mode, charge } => {
                    let pos = has(&live, mode)?;
                    if *charge == 0 {
                        return Err(ProtocolError::Network("vortex charge 0".into()));
                    }
                    let new = oam_label(*charge).to_string();
                    if live.iter().enumerate().any(|(k, m)| k != pos && *m == new) {
                        return Err(ProtocolError::Network(format!("path `{new}` already exists")));
                    }
                    live[pos] = new;
                }
            }
        }
        Ok(())
    }

    /// Propagates a pure state through every element.
    pub fn apply(&self, state: &StateMatrix) -> Result<StateMatrix> {
        self.validate()?;
        let labels: Vec<&str> = state.space().labels();
        if labels != self.modes.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(ProtocolError::Network(format!(
                "state on {} does not match network paths",
                state.space()
            )));
        }
        let mut current = state.clone();
        for el in &self.elements {
            current = match el {
                OpticalElement::Beamsplitter { i, j } => beamsplitter_transform(&current, i, j)?,
                OpticalElement::Phase { mode, theta } => {
                    rotate_photonic(&current, &[(mode.clone(), *theta)])?
                }
                OpticalElement::VortexRelabel { mode, charge } => {
                    let new: Vec<&str> = current
                        .space()
                        .labels()
                        .into_iter()
                        .map(|l| if l == mode { oam_label(*charge) } else { l })
                        .collect();
                    current.relabeled(&new)?
                }
            };
        }
        Ok(current)
    }
}

/// Applies `exp(i pi/4 (a_i^dag a_j + a_i a_j^dag))` to `state`.
pub fn beamsplitter_transform(state: &StateMatrix, mode_i: &str, mode_j: &str) -> Result<StateMatrix> {
    let space = state.space();
    let pi = space.position(mode_i)?;
    let pj = space.position(mode_j)?;
    if pi == pj {
        return Err(ProtocolError::Network(format!("beamsplitter on a single path `{mode_i}`")));
    }
    if space.modes()[pi].cutoff() != space.modes()[pj].cutoff() {
        return Err(ProtocolError::Network(format!(
            "paths `{mode_i}` and `{mode_j}` have different cutoffs"
        )));
    }
    let a = crate::hilbert::annihilation(space, mode_i)?;
    let b = crate::hilbert::annihilation(space, mode_j)?;
    let generator = (&(&a.adjoint() * &b) + &(&a * &b.adjoint())).into_data();
    let eig = generator.symmetric_eigen();
    let phases = eig
        .eigenvalues
        .map(|l| C64::from_polar(1.0, FRAC_PI_4 * l));
    let u = &eig.eigenvectors * CMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint();
    let data = &u * state.data() * u.adjoint();
    Ok(StateMatrix::new_unchecked(space.clone(), data))
}

/// Sends Fock state `input_occupations` through `network`.
pub fn run_mach_zehnder(network: &LinearOpticsNetwork, input_occupations: &[usize]) -> Result<StateMatrix> {
    network.validate()?;
    if input_occupations.len() != network.modes.len() {
        return Err(ProtocolError::Network(format!(
            "{} occupations for {} paths",
            input_occupations.len(),
            network.modes.len()
        )));
    }
    let photons: usize = input_occupations.iter().sum();
    let labels: Vec<&str> = network.modes.iter().map(String::as_str).collect();
    let space = CompositeSpace::uniform(&labels, (photons + 1).max(2))?;
    network.apply(&fock_ket(&space, input_occupations)?)
}

/// Equal-weight single photon in `a_ell` and `a_mell`, prepared by the
/// interferometer source from a photon entering the second port.
pub fn make_superposition_input() -> Result<StateMatrix> {
    let out = run_mach_zehnder(&LinearOpticsNetwork::superposition_source(), &[0, 1])?;
    let reference = direct_superposition()?;
    let overlap = metrics::fidelity(&out, &reference)?;
    if (overlap - 1.0).abs() > 1e-12 {
        return Err(ProtocolError::Network(format!(
            "interferometer output deviates from the target (overlap {overlap})"
        )));
    }
    // the splitter's eigenbasis leaves ~1e-16 noise; store the exact target
    Ok(reference)
}

fn direct_superposition() -> Result<StateMatrix> {
    let space = CompositeSpace::uniform(&[modes::A_ELL, modes::A_MELL], 2)?;
    let amp = C64::new(FRAC_1_SQRT_2, 0.0);
    Ok(crate::hilbert::superpose(&space, &[(amp, vec![1, 0]), (amp, vec![0, 1])])?)
}

/// `(|1,0>_1 |0,1>_2 + |0,1>_1 |1,0>_2)/sqrt 2` over
/// `(a_ell_1, a_mell_1, a_ell_2, a_mell_2)`.
pub fn make_entangled_input() -> Result<StateMatrix> {
    let labels = ScenarioKind::Entangled.photonic_modes();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    let space = CompositeSpace::uniform(&refs, 2)?;
    let amp = C64::new(FRAC_1_SQRT_2, 0.0);
    let ket: DVector<C64> =
        superposition_ket(&space, &[(amp, vec![1, 0, 0, 1]), (amp, vec![0, 1, 1, 0])])?;
    Ok(StateMatrix::from_ket(&space, &ket)?)
}

/// Runs every config, in parallel.
pub fn run_many(configs: &[ScenarioConfig]) -> Vec<Result<ProtocolResult>> {
    use rayon::prelude::*;
    configs.par_iter().map(run_protocol).collect()
}
