//! Linearized beam-splitter Hamiltonians and Lindblad propagation under a
//! piecewise-constant control envelope.
//!
//! Pulse segments are integrated with fixed-step RK4. Segments with the
//! control off can instead use the closed-form damping map, which is what
//! makes second-long storage times tractable.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{
    annihilation, hermiticity_defect, number, CMatrix, CompositeSpace, HilbertError,
    OperatorMatrix, StateMatrix, HERMITIAN_TOL,
};

/// Mode labels used by the scenario spaces.
pub mod modes {
    pub const A_ELL: &str = "a_ell";
    pub const A_MELL: &str = "a_mell";
    pub const C: &str = "c";
    pub const D: &str = "d";

    /// Label of `base` in cavity `cavity` (1 or 2) of a two-cavity system.
    pub fn in_cavity(base: &str, cavity: usize) -> String {
        format!("{base}_{cavity}")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("control envelope: {0}")]
    Envelope(String),
    #[error("collapse rate must be non-negative, got {0}")]
    NegativeRate(f64),
    #[error("Hamiltonian term is not Hermitian (deviation {0:.3e})")]
    NonHermitianHamiltonian(f64),
    #[error("dimension mismatch: state {state}, system {system}")]
    DimensionMismatch { state: usize, system: usize },
    #[error("sample time {0} lies outside the schedule [0, {1}]")]
    SampleOutOfRange(f64, f64),
    #[error("step size underflow in segment `{segment}` at t = {time:.6e} s (interval {interval:.3e} s, {steps} steps)")]
    StepUnderflow {
        segment: String,
        time: f64,
        interval: f64,
        steps: f64,
    },
    #[error("trace drift {drift:.3e} in segment `{segment}` at t = {time:.6e} s")]
    TraceDrift {
        segment: String,
        time: f64,
        drift: f64,
    },
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    pub start: f64,
    pub end: f64,
    /// Multiplies every driven coupling while the segment is active.
    pub scale: f64,
}

/// Piecewise-constant control amplitude covering `[0, t_final]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlEnvelope {
    segments: Vec<Segment>,
    reference_coupling: f64,
}

impl ControlEnvelope {
    pub fn new(segments: Vec<Segment>, reference_coupling: f64) -> Result<Self> {
        let bad = |msg: String| Err(DynamicsError::Envelope(msg));
        if segments.is_empty() {
            return bad("no segments".into());
        }
        if segments[0].start != 0.0 {
            return bad(format!("first segment starts at {}", segments[0].start));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.end >= s.start) || !s.end.is_finite() {
                return bad(format!("segment `{}` has end {} < start {}", s.label, s.end, s.start));
            }
            if !(0.0..=1.0).contains(&s.scale) {
                return bad(format!("segment `{}` scale {} outside [0, 1]", s.label, s.scale));
            }
            if i > 0 && segments[i - 1].end != s.start {
                return bad(format!("segment `{}` is not contiguous with its predecessor", s.label));
            }
        }
        Ok(Self {
            segments,
            reference_coupling,
        })
    }

    /// One segment of constant amplitude.
    pub fn constant(duration: f64, scale: f64, reference_coupling: f64) -> Result<Self> {
        Self::new(
            vec![Segment {
                label: "pulse".into(),
                start: 0.0,
                end: duration,
                scale,
            }],
            reference_coupling,
        )
    }

    /// Write pulse of length `pi/(2G)`, control off for `storage_time`, read
    /// pulse of length `pi/(2G)`.
    pub fn write_store_read(coupling: f64, storage_time: f64) -> Result<Self> {
        Self::write_store_read_shifted(coupling, storage_time, 0.0)
    }

    /// As [`write_store_read`](Self::write_store_read) with the control
    /// switched off `switch_off_shift` seconds late (early if negative). The
    /// read pulse keeps its nominal length.
    pub fn write_store_read_shifted(
        coupling: f64,
        storage_time: f64,
        switch_off_shift: f64,
    ) -> Result<Self> {
        if !(coupling > 0.0) {
            return Err(DynamicsError::Envelope(format!("coupling {coupling} must be positive")));
        }
        if !(storage_time >= 0.0) {
            return Err(DynamicsError::Envelope(format!(
                "storage time {storage_time} must be non-negative"
            )));
        }
        let swap = std::f64::consts::PI / (2.0 * coupling);
        let t_off = swap + switch_off_shift;
        let t_on = swap + storage_time;
        if !(t_off > 0.0) || t_off > t_on {
            return Err(DynamicsError::Envelope(format!(
                "switch-off shift {switch_off_shift} incompatible with storage {storage_time}"
            )));
        }
        Self::new(
            vec![
                Segment {
                    label: "write".into(),
                    start: 0.0,
                    end: t_off,
                    scale: 1.0,
                },
                Segment {
                    label: "store".into(),
                    start: t_off,
                    end: t_on,
                    scale: 0.0,
                },
                Segment {
                    label: "read".into(),
                    start: t_on,
                    end: t_on + swap,
                    scale: 1.0,
                },
            ],
            coupling,
        )
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, label: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.label == label)
    }

    pub fn reference_coupling(&self) -> f64 {
        self.reference_coupling
    }

    pub fn t_final(&self) -> f64 {
        self.segments.last().map(|s| s.end).unwrap_or(0.0)
    }

    /// Amplitude at `t`; segments are closed on the left.
    pub fn scale_at(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .find(|s| t >= s.start && t < s.end)
            .or_else(|| self.segments.last())
            .map(|s| s.scale)
            .unwrap_or(0.0)
    }
}

/// Coupling term `coupling * scale(t) * generator`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivenTerm {
    pub label: String,
    pub generator: OperatorMatrix,
    /// rad/s at full control amplitude.
    pub coupling: f64,
}

/// `H(t)/hbar = sum_k detuning_k n_k + sum_j coupling_j scale(t) generator_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    space: CompositeSpace,
    pub detunings: Vec<(String, f64)>,
    pub driven: Vec<DrivenTerm>,
}

impl Hamiltonian {
    pub fn new(space: &CompositeSpace) -> Self {
        Self {
            space: space.clone(),
            detunings: Vec::new(),
            driven: Vec::new(),
        }
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn with_detuning(mut self, label: &str, detuning: f64) -> Result<Self> {
        self.space.position(label)?;
        self.detunings.push((label.to_string(), detuning));
        Ok(self)
    }

    /// Adds `coupling (a^dagger b + a b^dagger)`.
    pub fn with_exchange(mut self, a: &str, b: &str, coupling: f64) -> Result<Self> {
        let la = annihilation(&self.space, a)?;
        let lb = annihilation(&self.space, b)?;
        let generator = &(&la.adjoint() * &lb) + &(&la * &lb.adjoint());
        self.driven.push(DrivenTerm {
            label: format!("{a}<->{b}"),
            generator,
            coupling,
        });
        Ok(self)
    }

    pub fn static_part(&self) -> OperatorMatrix {
        let mut h = OperatorMatrix::zeros(&self.space);
        for (label, det) in &self.detunings {
            if *det != 0.0 {
                // labels were checked on insertion
                h = &h + &number(&self.space, label).expect("known mode").scale(*det);
            }
        }
        h
    }

    /// Operator at control amplitude `scale`.
    pub fn at_scale(&self, scale: f64) -> OperatorMatrix {
        let mut h = self.static_part();
        for term in &self.driven {
            if term.coupling * scale != 0.0 {
                h = &h + &term.generator.scale(term.coupling * scale);
            }
        }
        h
    }

    pub fn at(&self, envelope: &ControlEnvelope, t: f64) -> OperatorMatrix {
        self.at_scale(envelope.scale_at(t))
    }

    /// Fastest frequency present at amplitude `scale`.
    pub fn max_frequency(&self, scale: f64) -> f64 {
        let driven = self
            .driven
            .iter()
            .map(|d| (d.coupling * scale).abs())
            .fold(0.0, f64::max);
        self.detunings.iter().map(|(_, d)| d.abs()).fold(driven, f64::max)
    }

    fn check_hermitian(&self) -> Result<()> {
        let mut worst = hermiticity_defect(self.static_part().data());
        for term in &self.driven {
            worst = worst.max(hermiticity_defect(term.generator.data()));
        }
        if worst > HERMITIAN_TOL {
            return Err(DynamicsError::NonHermitianHamiltonian(worst));
        }
        Ok(())
    }
}

/// `G(t) (a^dagger c + a c^dagger) + offset c^dagger c` on modes `a_ell`, `c`.
pub fn hamiltonian_single(space: &CompositeSpace, coupling: f64, offset: f64) -> Result<Hamiltonian> {
    Hamiltonian::new(space)
        .with_exchange(modes::A_ELL, modes::C, coupling)?
        .with_detuning(modes::C, offset)
}

/// Two independent exchange branches, `a_ell <-> c` and `a_mell <-> d`.
pub fn hamiltonian_superposition(
    space: &CompositeSpace,
    coupling_plus: f64,
    coupling_minus: f64,
    offset_c: f64,
    offset_d: f64,
) -> Result<Hamiltonian> {
    Hamiltonian::new(space)
        .with_exchange(modes::A_ELL, modes::C, coupling_plus)?
        .with_exchange(modes::A_MELL, modes::D, coupling_minus)?
        .with_detuning(modes::C, offset_c)?
        .with_detuning(modes::D, offset_d)
}

/// Sum of two superposition-type Hamiltonians, one per cavity.
/// `couplings[j] = [G_plus, G_minus]` and `offsets[j] = [offset_c, offset_d]`
/// for cavity `j + 1`.
pub fn hamiltonian_entangled(
    space: &CompositeSpace,
    couplings: [[f64; 2]; 2],
    offsets: [[f64; 2]; 2],
) -> Result<Hamiltonian> {
    let mut h = Hamiltonian::new(space);
    for cavity in 1..=2 {
        let j = cavity - 1;
        let m = |base| modes::in_cavity(base, cavity);
        h = h
            .with_exchange(&m(modes::A_ELL), &m(modes::C), couplings[j][0])?
            .with_exchange(&m(modes::A_MELL), &m(modes::D), couplings[j][1])?
            .with_detuning(&m(modes::C), offsets[j][0])?
            .with_detuning(&m(modes::D), offsets[j][1])?;
    }
    Ok(h)
}

/// Loss channel with jump operator `operator` at `rate` (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseChannel {
    pub operator: OperatorMatrix,
    pub rate: f64,
    /// Set when `operator` is the lowering operator of this mode, which
    /// enables the closed-form storage map.
    pub mode: Option<String>,
}

impl CollapseChannel {
    pub fn new(operator: OperatorMatrix, rate: f64) -> Result<Self> {
        if !(rate >= 0.0) {
            return Err(DynamicsError::NegativeRate(rate));
        }
        Ok(Self {
            operator,
            rate,
            mode: None,
        })
    }

    /// Amplitude damping of `label` at `rate`.
    pub fn damping(space: &CompositeSpace, label: &str, rate: f64) -> Result<Self> {
        let mut ch = Self::new(annihilation(space, label)?, rate)?;
        ch.mode = Some(label.to_string());
        Ok(ch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladSystem {
    space: CompositeSpace,
    pub hamiltonian: Hamiltonian,
    pub channels: Vec<CollapseChannel>,
}

impl LindbladSystem {
    pub fn new(hamiltonian: Hamiltonian, channels: Vec<CollapseChannel>) -> Result<Self> {
        let space = hamiltonian.space().clone();
        for ch in &channels {
            if ch.operator.space() != &space {
                return Err(HilbertError::SpaceMismatch(
                    ch.operator.space().to_string(),
                    space.to_string(),
                )
                .into());
            }
            if !(ch.rate >= 0.0) {
                return Err(DynamicsError::NegativeRate(ch.rate));
            }
        }
        hamiltonian.check_hermitian()?;
        Ok(Self {
            space,
            hamiltonian,
            channels,
        })
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    fn max_rate(&self, scale: f64) -> f64 {
        self.channels
            .iter()
            .map(|c| c.rate)
            .fold(self.hamiltonian.max_frequency(scale), f64::max)
    }

    /// True when, with the control off, the generator is a sum of independent
    /// per-mode rotations and amplitude dampings.
    fn has_closed_form_storage(&self) -> bool {
        self.channels.iter().all(|c| c.mode.is_some())
    }
}

/// Master-equation right-hand side written with the dissipator
/// `D[O] rho = {O^dagger O, rho} - 2 O rho O^dagger`:
///
/// `d rho/dt = -i [H, rho] - sum_k (gamma_k / 2) D[L_k] rho`.
pub fn lindblad_rhs(
    rho: &CMatrix,
    h: &OperatorMatrix,
    channels: &[CollapseChannel],
) -> Result<CMatrix> {
    let n = h.dim();
    if rho.nrows() != n || rho.ncols() != n {
        return Err(DynamicsError::DimensionMismatch {
            state: rho.nrows(),
            system: n,
        });
    }
    let hd = h.data();
    let mut out = (hd * rho - rho * hd) * C64::new(0.0, -1.0);
    for ch in channels {
        if ch.operator.dim() != n {
            return Err(DynamicsError::DimensionMismatch {
                state: n,
                system: ch.operator.dim(),
            });
        }
        let l = ch.operator.data();
        let ld = l.adjoint();
        let ldl = &ld * l;
        let dissipator = &ldl * rho + rho * &ldl - (l * rho * &ld) * C64::new(2.0, 0.0);
        out -= dissipator * C64::new(ch.rate / 2.0, 0.0);
    }
    Ok(out)
}

/// Triplet list of the nonzero entries of a square matrix.
#[derive(Debug, Clone)]
struct SparseOp {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    entries.push((i, j, v));
                }
            }
        }
        Self { entries }
    }

    /// `out = self * rho`, column-major buffers of side `n`.
    fn left_mul(&self, rho: &[C64], out: &mut [C64], n: usize) {
        out.fill(C64::new(0.0, 0.0));
        for k in 0..n {
            let col = k * n;
            for &(r, c, v) in &self.entries {
                out[col + r] += v * rho[col + c];
            }
        }
    }

    /// `out += scale * y * self^dagger`.
    fn right_mul_adjoint_add(&self, y: &[C64], out: &mut [C64], n: usize, scale: f64) {
        // column j of the result gathers conj(L[j,k]) * y[:, k]
        for &(j, k, v) in &self.entries {
            let w = v.conj() * scale;
            let (src, dst) = (k * n, j * n);
            for i in 0..n {
                out[dst + i] += w * y[src + i];
            }
        }
    }
}

/// Precompiled generator `rho -> X + X^dagger + sum gamma L rho L^dagger`
/// with `X = -i H_eff rho` and `H_eff = H - (i/2) sum gamma L^dagger L`.
#[derive(Debug, Clone)]
struct Generator {
    n: usize,
    minus_i_heff: SparseOp,
    jumps: Vec<(SparseOp, f64)>,
    /// Row-sum norm of `H_eff`, an upper bound on its fastest frequency.
    spectral_bound: f64,
}

impl Generator {
    fn compile(system: &LindbladSystem, scale: f64) -> Self {
        let h = system.hamiltonian.at_scale(scale);
        let mut heff = h.into_data();
        for ch in &system.channels {
            if ch.rate > 0.0 {
                let l = ch.operator.data();
                heff -= (l.adjoint() * l) * C64::new(0.0, ch.rate / 2.0);
            }
        }
        let spectral_bound = heff
            .row_iter()
            .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let minus_i_heff = SparseOp::from_dense(&(heff * C64::new(0.0, -1.0)));
        let jumps = system
            .channels
            .iter()
            .filter(|c| c.rate > 0.0)
            .map(|c| (SparseOp::from_dense(c.operator.data()), c.rate))
            .collect();
        Self {
            n: system.space().dim(),
            minus_i_heff,
            jumps,
            spectral_bound,
        }
    }

    fn apply(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let n = self.n;
        self.minus_i_heff.left_mul(rho, scratch, n);
        for j in 0..n {
            for i in 0..n {
                out[j * n + i] = scratch[j * n + i] + scratch[i * n + j].conj();
            }
        }
        for (l, rate) in &self.jumps {
            l.left_mul(rho, scratch, n);
            l.right_mul_adjoint_add(scratch, out, n, *rate);
        }
    }
}

struct Rk4Workspace {
    k: [Vec<C64>; 4],
    stage: Vec<C64>,
    scratch: Vec<C64>,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n * n];
        Self {
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            stage: z.clone(),
            scratch: z,
        }
    }

    fn step(&mut self, g: &Generator, rho: &mut [C64], h: f64) {
        let Rk4Workspace { k, stage, scratch } = self;
        let [k1, k2, k3, k4] = k;
        g.apply(rho, k1, scratch);
        for ((s, r), d) in stage.iter_mut().zip(rho.iter()).zip(k1.iter()) {
            *s = r + d * (h / 2.0);
        }
        g.apply(stage, k2, scratch);
        for ((s, r), d) in stage.iter_mut().zip(rho.iter()).zip(k2.iter()) {
            *s = r + d * (h / 2.0);
        }
        g.apply(stage, k3, scratch);
        for ((s, r), d) in stage.iter_mut().zip(rho.iter()).zip(k3.iter()) {
            *s = r + d * h;
        }
        g.apply(stage, k4, scratch);
        for i in 0..rho.len() {
            rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
    }
}

fn sqrt_binomial(n: usize, k: usize) -> f64 {
    // sqrt(C(n, k)) via a running product
    let mut acc = 1.0f64;
    for i in 0..k {
        acc *= (n - i) as f64 / (i + 1) as f64;
    }
    acc.sqrt()
}

/// Exact single-mode channel over `duration`: rotation `exp(-i detuning n t)`
/// composed with amplitude damping at `rate`, applied to mode `pos`.
fn apply_mode_channel(
    rho: &CMatrix,
    space: &CompositeSpace,
    pos: usize,
    rate: f64,
    detuning: f64,
    duration: f64,
) -> CMatrix {
    let dims = space.dims();
    let cutoff = dims[pos];
    let stride: usize = dims[pos + 1..].iter().product();
    let eta = (-rate * duration).exp();
    let loss = -(-rate * duration).exp_m1();
    let n = space.dim();
    CMatrix::from_fn(n, n, |i, j| {
        let m = (i / stride) % cutoff;
        let q = (j / stride) % cutoff;
        let phase = C64::from_polar(1.0, -detuning * (m as f64 - q as f64) * duration);
        let mut acc = C64::new(0.0, 0.0);
        let mut k = 0;
        while m + k < cutoff && q + k < cutoff {
            let coef = sqrt_binomial(m + k, k)
                * sqrt_binomial(q + k, k)
                * eta.powf((m + q) as f64 / 2.0)
                * loss.powi(k as i32);
            if coef != 0.0 {
                acc += rho[(i + k * stride, j + k * stride)] * coef;
            }
            k += 1;
        }
        acc * phase
    })
}

/// Closed-form evolution over `duration` with every driven coupling off:
/// independent rotation and amplitude damping of each mode.
pub fn storage_map(system: &LindbladSystem, rho: &CMatrix, duration: f64) -> Result<CMatrix> {
    if !system.has_closed_form_storage() {
        return Err(DynamicsError::Envelope(
            "closed-form storage map needs pure amplitude-damping channels".into(),
        ));
    }
    let space = system.space();
    let mut out = rho.clone();
    for (pos, mode) in space.modes().iter().enumerate() {
        let rate: f64 = system
            .channels
            .iter()
            .filter(|c| c.mode.as_deref() == Some(mode.label()))
            .map(|c| c.rate)
            .sum();
        let detuning: f64 = system
            .hamiltonian
            .detunings
            .iter()
            .filter(|(l, _)| l == mode.label())
            .map(|(_, d)| d)
            .sum();
        if rate != 0.0 || detuning != 0.0 {
            out = apply_mode_channel(&out, space, pos, rate, detuning, duration);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorOptions {
    /// Steps per inverse fastest frequency; the step is at most
    /// `1 / (steps_per_period * max_rate)`.
    pub steps_per_period: f64,
    /// Use [`storage_map`] on control-off segments when possible.
    pub analytic_storage: bool,
    pub trace_tolerance: f64,
    /// Times at which full state snapshots are kept.
    pub checkpoints: Vec<f64>,
    pub max_steps_per_interval: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            steps_per_period: 50.0,
            analytic_storage: true,
            trace_tolerance: 1e-6,
            checkpoints: Vec::new(),
            max_steps_per_interval: 1e9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Propagation {
    RungeKutta,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub time: f64,
    pub state: StateMatrix,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `n_<mode>` for every mode, plus `trace` and `purity`.
    pub observables: BTreeMap<String, Vec<f64>>,
    pub checkpoints: Vec<Checkpoint>,
    pub final_state: StateMatrix,
    /// Largest RK4 step actually taken (0 if none).
    pub max_step: f64,
    pub propagation: Vec<(String, Propagation)>,
}

impl Trajectory {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.observables.get(name).map(Vec::as_slice)
    }

    pub fn occupation(&self, mode: &str) -> Option<&[f64]> {
        self.series(&format!("n_{mode}"))
    }

    pub fn checkpoint(&self, time: f64) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.time == time)
    }
}

struct Recorder {
    labels: Vec<String>,
    occupations: Vec<Vec<f64>>,
}

impl Recorder {
    fn new(space: &CompositeSpace) -> Self {
        let occupations = (0..space.dim()).map(|i| {
            space.occupations_of(i).into_iter().map(|n| n as f64).collect()
        });
        Self {
            labels: space.labels().iter().map(|l| format!("n_{l}")).collect(),
            occupations: occupations.collect(),
        }
    }

    fn record(&self, rho: &CMatrix, obs: &mut BTreeMap<String, Vec<f64>>) {
        let mut means = vec![0.0; self.labels.len()];
        let mut trace = 0.0;
        for (i, occ) in self.occupations.iter().enumerate() {
            let p = rho[(i, i)].re;
            trace += p;
            for (m, n) in means.iter_mut().zip(occ) {
                *m += p * n;
            }
        }
        for (label, m) in self.labels.iter().zip(means) {
            obs.entry(label.clone()).or_default().push(m);
        }
        obs.entry("trace".into()).or_default().push(trace);
        let purity = rho.iter().map(|z| z.norm_sqr()).sum();
        obs.entry("purity".into()).or_default().push(purity);
    }
}

fn merged_times(envelope: &ControlEnvelope, extra: &[&[f64]]) -> Vec<f64> {
    let mut times: Vec<f64> = envelope
        .segments()
        .iter()
        .flat_map(|s| [s.start, s.end])
        .collect();
    for set in extra {
        times.extend_from_slice(set);
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Propagates `rho0` through `envelope`, recording observables at each of
/// `sample_times`. No trace renormalization is applied; a drift beyond
/// `options.trace_tolerance` aborts with the offending segment.
pub fn integrate(
    system: &LindbladSystem,
    rho0: &StateMatrix,
    envelope: &ControlEnvelope,
    sample_times: &[f64],
    options: &IntegratorOptions,
) -> Result<Trajectory> {
    let n = system.space().dim();
    if rho0.dim() != n {
        return Err(DynamicsError::DimensionMismatch {
            state: rho0.dim(),
            system: n,
        });
    }
    let t_final = envelope.t_final();
    for &t in sample_times.iter().chain(&options.checkpoints) {
        if !(0.0..=t_final).contains(&t) {
            return Err(DynamicsError::SampleOutOfRange(t, t_final));
        }
    }
    let mut samples = sample_times.to_vec();
    samples.sort_by(f64::total_cmp);
    let events = merged_times(envelope, &[&samples, &options.checkpoints]);

    let recorder = Recorder::new(system.space());
    let mut observables = BTreeMap::new();
    let mut times = Vec::with_capacity(samples.len());
    let mut checkpoints = Vec::new();
    let mut propagation = Vec::new();
    let mut max_step = 0.0f64;
    let mut rho = rho0.data().clone();
    let mut work = Rk4Workspace::new(n);

    let mut visit = |t: f64, rho: &CMatrix, segment: &str| -> Result<()> {
        let drift = (rho.trace().re - 1.0).abs();
        if drift > options.trace_tolerance {
            return Err(DynamicsError::TraceDrift {
                segment: segment.to_string(),
                time: t,
                drift,
            });
        }
        // samples may repeat a time; record each occurrence
        for _ in samples.iter().filter(|&&s| s == t) {
            times.push(t);
            recorder.record(rho, &mut observables);
        }
        if options.checkpoints.contains(&t) && !checkpoints.iter().any(|c: &Checkpoint| c.time == t) {
            let state = StateMatrix::new_unchecked(system.space().clone(), rho.clone());
            let min_eigenvalue = state.min_eigenvalue();
            checkpoints.push(Checkpoint {
                time: t,
                state,
                min_eigenvalue,
            });
        }
        Ok(())
    };

    let first_label = envelope.segments()[0].label.clone();
    visit(0.0, &rho, &first_label)?;

    for seg in envelope.segments() {
        let closed_form = options.analytic_storage
            && seg.scale == 0.0
            && system.has_closed_form_storage();
        propagation.push((
            seg.label.clone(),
            if closed_form {
                Propagation::ClosedForm
            } else {
                Propagation::RungeKutta
            },
        ));
        let generator = (!closed_form).then(|| Generator::compile(system, seg.scale));
        // multi-excitation sectors oscillate faster than the bare coupling
        let rate = generator
            .as_ref()
            .map_or(0.0, |g| g.spectral_bound)
            .max(system.max_rate(seg.scale));
        let h_max = if rate > 0.0 {
            1.0 / (options.steps_per_period * rate)
        } else {
            f64::INFINITY
        };
        let stops: Vec<f64> = events
            .iter()
            .copied()
            .filter(|&t| t > seg.start && t <= seg.end)
            .collect();
        let mut t = seg.start;
        for stop in stops {
            let interval = stop - t;
            if closed_form {
                rho = storage_map(system, &rho, interval)?;
            } else if rate > 0.0 {
                let steps = (interval / h_max).ceil().max(1.0);
                let h = interval / steps;
                if steps > options.max_steps_per_interval || h <= t.abs() * f64::EPSILON * 4.0 {
                    return Err(DynamicsError::StepUnderflow {
                        segment: seg.label.clone(),
                        time: t,
                        interval,
                        steps,
                    });
                }
                let g = generator.as_ref().expect("compiled for RK segments");
                let buf = rho.as_mut_slice();
                for _ in 0..steps as usize {
                    work.step(g, buf, h);
                }
                max_step = max_step.max(h);
            }
            t = stop;
            visit(t, &rho, &seg.label)?;
        }
    }

    Ok(Trajectory {
        times,
        observables,
        checkpoints,
        final_state: StateMatrix::new_unchecked(system.space().clone(), rho),
        max_step,
        propagation,
    })
}

/// Evenly spaced grid over `[start, end]` with at most `max_step` spacing.
pub fn linear_grid(start: f64, end: f64, max_step: f64) -> Vec<f64> {
    if end <= start {
        return vec![start];
    }
    let steps = ((end - start) / max_step).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|i| {
            if i == steps {
                end
            } else {
                start + (end - start) * i as f64 / steps as f64
            }
        })
        .collect()
}

/// `per_decade` log-spaced points over `[start, end]`, both included.
pub fn log_grid(start: f64, end: f64, per_decade: usize) -> Vec<f64> {
    if !(start > 0.0) || end <= start {
        return vec![start.max(0.0), end].into_iter().filter(|t| *t >= start).collect();
    }
    let decades = (end / start).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    (0..=n)
        .map(|i| {
            if i == n {
                end
            } else {
                start * 10f64.powf(decades * i as f64 / n as f64)
            }
        })
        .collect()
}
