//! Truncated Fock spaces and dense operator algebra on tensor products of
//! bosonic modes.
//!
//! Basis convention: in a composite space the leftmost mode varies slowest,
//! so the occupation tuple `(n_0, ..., n_{k-1})` maps to the flat index
//! `sum_i n_i * stride_i` with `stride_i = prod_{j > i} cutoff_j`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use thiserror::Error;

pub type CMatrix = DMatrix<C64>;

/// Elementwise tolerance on `|rho - rho^dagger|` for Hermiticity.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Allowed deviation of a normalized state's trace from one.
pub const TRACE_TOL: f64 = 1e-8;
/// Most negative eigenvalue accepted for a physical state.
pub const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("mode cutoff must be at least 2, got {0}")]
    CutoffTooSmall(usize),
    #[error("duplicate mode label `{0}`")]
    DuplicateLabel(String),
    #[error("composite space needs at least one mode")]
    EmptySpace,
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("expected {expected} occupations, got {got}")]
    OccupationCount { expected: usize, got: usize },
    #[error("occupation {occupation} of mode `{label}` exceeds cutoff {cutoff}")]
    OccupationOutOfRange {
        label: String,
        occupation: usize,
        cutoff: usize,
    },
    #[error("all superposition amplitudes are zero")]
    ZeroAmplitudes,
    #[error("matrix is {rows}x{cols}, space dimension is {dim}")]
    DimensionMismatch { rows: usize, cols: usize, dim: usize },
    #[error("spaces differ: {0} vs {1}")]
    SpaceMismatch(String, String),
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("trace {0:.12} deviates from one")]
    TraceNotOne(f64),
    #[error("state has negative eigenvalue {0:.3e}")]
    NotPositive(f64),
    #[error("reduction needs at least one kept mode")]
    EmptyKeep,
    #[error("subsystem must be a proper nonempty subset of the modes")]
    InvalidSubsystem,
}

pub type Result<T> = std::result::Result<T, HilbertError>;

/// A single bosonic mode truncated to `{|0>, ..., |cutoff-1>}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ModeSpace {
    label: String,
    cutoff: usize,
}

impl ModeSpace {
    pub fn new(label: impl Into<String>, cutoff: usize) -> Result<Self> {
        if cutoff < 2 {
            return Err(HilbertError::CutoffTooSmall(cutoff));
        }
        Ok(Self {
            label: label.into(),
            cutoff,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }
}

/// Ordered tensor product of modes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompositeSpace {
    modes: Vec<ModeSpace>,
    dim: usize,
}

impl CompositeSpace {
    pub fn new(modes: Vec<ModeSpace>) -> Result<Self> {
        if modes.is_empty() {
            return Err(HilbertError::EmptySpace);
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].iter().any(|o| o.label == m.label) {
                return Err(HilbertError::DuplicateLabel(m.label.clone()));
            }
        }
        let dim = modes.iter().map(|m| m.cutoff).product();
        Ok(Self { modes, dim })
    }

    /// Convenience constructor: every mode shares one cutoff.
    pub fn uniform(labels: &[&str], cutoff: usize) -> Result<Self> {
        let modes = labels
            .iter()
            .map(|l| ModeSpace::new(*l, cutoff))
            .collect::<Result<Vec<_>>>()?;
        Self::new(modes)
    }

    pub fn single(label: &str, cutoff: usize) -> Result<Self> {
        Self::new(vec![ModeSpace::new(label, cutoff)?])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[ModeSpace] {
        &self.modes
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.modes.iter().map(|m| m.label.as_str()).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.cutoff).collect()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.modes.iter().any(|m| m.label == label)
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m.label == label)
            .ok_or_else(|| HilbertError::UnknownMode(label.to_string()))
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.modes.len()];
        for i in (0..self.modes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.modes[i + 1].cutoff;
        }
        strides
    }

    pub fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.modes.len() {
            return Err(HilbertError::OccupationCount {
                expected: self.modes.len(),
                got: occupations.len(),
            });
        }
        let mut index = 0;
        for (mode, &n) in self.modes.iter().zip(occupations) {
            if n >= mode.cutoff {
                return Err(HilbertError::OccupationOutOfRange {
                    label: mode.label.clone(),
                    occupation: n,
                    cutoff: mode.cutoff,
                });
            }
            index = index * mode.cutoff + n;
        }
        Ok(index)
    }

    pub fn occupations_of(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.modes.len()];
        for (slot, mode) in occ.iter_mut().zip(&self.modes).rev() {
            *slot = index % mode.cutoff;
            index /= mode.cutoff;
        }
        occ
    }

    /// Sub-space made of the listed modes, kept in this space's order.
    pub fn subspace(&self, labels: &[&str]) -> Result<CompositeSpace> {
        let positions = self.sorted_positions(labels)?;
        Self::new(positions.iter().map(|&p| self.modes[p].clone()).collect())
    }

    pub fn tensor(&self, other: &CompositeSpace) -> Result<CompositeSpace> {
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        Self::new(modes)
    }

    /// Same cutoffs, new labels.
    pub fn relabeled(&self, labels: &[&str]) -> Result<CompositeSpace> {
        if labels.len() != self.modes.len() {
            return Err(HilbertError::OccupationCount {
                expected: self.modes.len(),
                got: labels.len(),
            });
        }
        Self::new(
            self.modes
                .iter()
                .zip(labels)
                .map(|(m, l)| ModeSpace::new(*l, m.cutoff))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    fn sorted_positions(&self, labels: &[&str]) -> Result<Vec<usize>> {
        let mut positions = labels
            .iter()
            .map(|l| self.position(l))
            .collect::<Result<Vec<_>>>()?;
        positions.sort_unstable();
        if positions.windows(2).any(|w| w[0] == w[1]) {
            let dup = labels
                .iter()
                .enumerate()
                .find(|(i, l)| labels[..*i].contains(l))
                .map(|(_, l)| l.to_string())
                .unwrap_or_default();
            return Err(HilbertError::DuplicateLabel(dup));
        }
        Ok(positions)
    }

    /// For a split of the modes into `positions` (kept) and the rest, returns
    /// `map[kept_index][rest_index] = full_index`.
    fn split_index_map(&self, positions: &[usize]) -> (usize, usize, Vec<Vec<usize>>) {
        let dims = self.dims();
        let rest: Vec<usize> = (0..dims.len()).filter(|i| !positions.contains(i)).collect();
        let kept_dim: usize = positions.iter().map(|&p| dims[p]).product();
        let rest_dim: usize = rest.iter().map(|&p| dims[p]).product();
        let strides = self.strides();
        let digits = |mut idx: usize, group: &[usize]| -> Vec<usize> {
            let mut out = vec![0; group.len()];
            for (slot, &p) in out.iter_mut().zip(group).rev() {
                *slot = idx % dims[p];
                idx /= dims[p];
            }
            out
        };
        let mut map = vec![vec![0; rest_dim]; kept_dim];
        for (k, row) in map.iter_mut().enumerate() {
            let kd = digits(k, positions);
            let base: usize = kd.iter().zip(positions).map(|(d, &p)| d * strides[p]).sum();
            for (r, slot) in row.iter_mut().enumerate() {
                let rd = digits(r, &rest);
                *slot = base + rd.iter().zip(&rest).map(|(d, &p)| d * strides[p]).sum::<usize>();
            }
        }
        (kept_dim, rest_dim, map)
    }
}

impl fmt::Display for CompositeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .modes
            .iter()
            .map(|m| format!("{}[{}]", m.label, m.cutoff))
            .collect();
        write!(f, "{}", parts.join(" x "))
    }
}

fn check_square(data: &CMatrix, dim: usize) -> Result<()> {
    if data.nrows() != dim || data.ncols() != dim {
        return Err(HilbertError::DimensionMismatch {
            rows: data.nrows(),
            cols: data.ncols(),
            dim,
        });
    }
    Ok(())
}

/// Largest elementwise `|m - m^dagger|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in j..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix in ascending order. Only the lower
/// triangle is read.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Dense operator on a composite space.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    space: CompositeSpace,
    data: CMatrix,
}

impl OperatorMatrix {
    pub fn new(space: CompositeSpace, data: CMatrix) -> Result<Self> {
        check_square(&data, space.dim())?;
        Ok(Self { space, data })
    }

    pub fn zeros(space: &CompositeSpace) -> Self {
        Self {
            data: CMatrix::zeros(space.dim(), space.dim()),
            space: space.clone(),
        }
    }

    pub fn identity(space: &CompositeSpace) -> Self {
        Self {
            data: CMatrix::identity(space.dim(), space.dim()),
            space: space.clone(),
        }
    }

    /// Embed a single-mode matrix acting on `label` into the full space.
    pub fn embed(space: &CompositeSpace, label: &str, local: &CMatrix) -> Result<Self> {
        let pos = space.position(label)?;
        check_square(local, space.modes()[pos].cutoff())?;
        let mut data = CMatrix::identity(1, 1);
        for (i, mode) in space.modes().iter().enumerate() {
            let factor = if i == pos {
                local.clone()
            } else {
                CMatrix::identity(mode.cutoff(), mode.cutoff())
            };
            data = kron(&data, &factor);
        }
        Ok(Self {
            space: space.clone(),
            data,
        })
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space.clone(),
            data: self.data.adjoint(),
        }
    }

    pub fn scale(&self, factor: impl Into<C64>) -> Self {
        Self {
            space: self.space.clone(),
            data: &self.data * factor.into(),
        }
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn commutator(&self, other: &OperatorMatrix) -> Self {
        self * other - other * self
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        hermiticity_defect(&self.data) <= tol
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let defect = hermiticity_defect(&self.data);
        if defect > HERMITIAN_TOL {
            return Err(HilbertError::NotHermitian(defect));
        }
        Ok(hermitian_eigenvalues(&self.data))
    }

    /// Transpose of the indices belonging to `subsystem`.
    pub fn partial_transpose(&self, subsystem: &[&str]) -> Result<OperatorMatrix> {
        let positions = self.space.sorted_positions(subsystem)?;
        if positions.is_empty() || positions.len() == self.space.num_modes() {
            return Err(HilbertError::InvalidSubsystem);
        }
        let (sub_dim, rest_dim, map) = self.space.split_index_map(&positions);
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        // element (s r, s' r') <- (s' r, s r')
        for s in 0..sub_dim {
            for sp in 0..sub_dim {
                for r in 0..rest_dim {
                    for rp in 0..rest_dim {
                        out[(map[s][r], map[sp][rp])] = self.data[(map[sp][r], map[s][rp])];
                    }
                }
            }
        }
        Ok(OperatorMatrix {
            space: self.space.clone(),
            data: out,
        })
    }

    /// Same matrix viewed on another space of identical dimension, e.g. after
    /// a relabeling.
    pub fn with_space(self, space: CompositeSpace) -> Result<Self> {
        Self::new(space, self.data)
    }
}

fn assert_same_space(a: &CompositeSpace, b: &CompositeSpace) {
    assert!(
        a == b,
        "operator spaces differ: {a} vs {b}"
    );
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_same_space(&self.space, &rhs.space);
        OperatorMatrix {
            space: self.space.clone(),
            data: &self.data + &rhs.data,
        }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_same_space(&self.space, &rhs.space);
        OperatorMatrix {
            space: self.space.clone(),
            data: &self.data - &rhs.data,
        }
    }
}

impl Add for OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: OperatorMatrix) -> OperatorMatrix {
        &self + &rhs
    }
}

impl Sub for OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: OperatorMatrix) -> OperatorMatrix {
        &self - &rhs
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        assert_same_space(&self.space, &rhs.space);
        OperatorMatrix {
            space: self.space.clone(),
            data: &self.data * &rhs.data,
        }
    }
}

fn lowering_matrix(cutoff: usize) -> CMatrix {
    let mut a = CMatrix::zeros(cutoff, cutoff);
    for n in 1..cutoff {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Lowering operator on `label`, identity elsewhere.
pub fn annihilation(space: &CompositeSpace, label: &str) -> Result<OperatorMatrix> {
    let pos = space.position(label)?;
    OperatorMatrix::embed(space, label, &lowering_matrix(space.modes()[pos].cutoff()))
}

pub fn creation(space: &CompositeSpace, label: &str) -> Result<OperatorMatrix> {
    Ok(annihilation(space, label)?.adjoint())
}

pub fn number(space: &CompositeSpace, label: &str) -> Result<OperatorMatrix> {
    let pos = space.position(label)?;
    let cutoff = space.modes()[pos].cutoff();
    let local = CMatrix::from_diagonal(&DVector::from_iterator(
        cutoff,
        (0..cutoff).map(|n| C64::new(n as f64, 0.0)),
    ));
    OperatorMatrix::embed(space, label, &local)
}

/// Position quadrature `(a + a^dagger)/sqrt(2)`.
pub fn quadrature_x(space: &CompositeSpace, label: &str) -> Result<OperatorMatrix> {
    let a = annihilation(space, label)?;
    Ok((&a + &a.adjoint()).scale(std::f64::consts::FRAC_1_SQRT_2))
}

/// Density matrix of a physical state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    space: CompositeSpace,
    data: CMatrix,
}

impl StateMatrix {
    /// Validates Hermiticity, unit trace and positivity at the module
    /// tolerances.
    pub fn new(space: CompositeSpace, data: CMatrix) -> Result<Self> {
        check_square(&data, space.dim())?;
        let defect = hermiticity_defect(&data);
        if defect > HERMITIAN_TOL {
            return Err(HilbertError::NotHermitian(defect));
        }
        let tr = data.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(HilbertError::TraceNotOne(tr));
        }
        let min = hermitian_eigenvalues(&data)[0];
        if min < -POSITIVITY_TOL {
            return Err(HilbertError::NotPositive(min));
        }
        Ok(Self { space, data })
    }

    /// Skips validation. Used for propagated states whose diagnostics are
    /// reported separately.
    pub(crate) fn new_unchecked(space: CompositeSpace, data: CMatrix) -> Self {
        debug_assert_eq!(data.nrows(), space.dim());
        Self { space, data }
    }

    /// `|psi><psi|` for a (not necessarily normalized) ket.
    pub fn from_ket(space: &CompositeSpace, ket: &DVector<C64>) -> Result<Self> {
        if ket.len() != space.dim() {
            return Err(HilbertError::DimensionMismatch {
                rows: ket.len(),
                cols: 1,
                dim: space.dim(),
            });
        }
        let norm = ket.norm();
        if norm == 0.0 {
            return Err(HilbertError::ZeroAmplitudes);
        }
        let psi = ket / C64::new(norm, 0.0);
        Ok(Self {
            space: space.clone(),
            data: &psi * psi.adjoint(),
        })
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn trace(&self) -> f64 {
        self.data.trace().re
    }

    /// `Tr rho^2`.
    pub fn purity(&self) -> f64 {
        // Tr(rho rho) = sum |rho_ij|^2 for Hermitian rho
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> C64 {
        assert_same_space(&self.space, op.space());
        // Tr(rho O) = sum_ij rho_ij O_ji
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                acc += self.data[(i, j)] * op.data()[(j, i)];
            }
        }
        acc
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.data)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn populations(&self) -> Vec<f64> {
        self.data.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn as_operator(&self) -> OperatorMatrix {
        OperatorMatrix {
            space: self.space.clone(),
            data: self.data.clone(),
        }
    }

    pub fn tensor(&self, other: &StateMatrix) -> Result<StateMatrix> {
        Ok(Self {
            space: self.space.tensor(&other.space)?,
            data: kron(&self.data, &other.data),
        })
    }

    /// Same matrix on a relabeled space with identical cutoffs.
    pub fn relabeled(&self, labels: &[&str]) -> Result<StateMatrix> {
        Ok(Self {
            space: self.space.relabeled(labels)?,
            data: self.data.clone(),
        })
    }

    /// Reduced state on `keep`; result modes follow this space's order.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<StateMatrix> {
        if keep.is_empty() {
            return Err(HilbertError::EmptyKeep);
        }
        let positions = self.space.sorted_positions(keep)?;
        let sub = CompositeSpace::new(
            positions.iter().map(|&p| self.space.modes[p].clone()).collect(),
        )?;
        let (kept_dim, rest_dim, map) = self.space.split_index_map(&positions);
        let mut out = CMatrix::zeros(kept_dim, kept_dim);
        for b in 0..kept_dim {
            for a in 0..kept_dim {
                let mut acc = C64::new(0.0, 0.0);
                for r in 0..rest_dim {
                    acc += self.data[(map[a][r], map[b][r])];
                }
                out[(a, b)] = acc;
            }
        }
        Ok(Self {
            space: sub,
            data: out,
        })
    }

    /// Transpose of the indices belonging to `subsystem`.
    pub fn partial_transpose(&self, subsystem: &[&str]) -> Result<OperatorMatrix> {
        self.as_operator().partial_transpose(subsystem)
    }
}

/// Pure Fock state `|n_1 ... n_k><n_1 ... n_k|`.
pub fn fock_ket(space: &CompositeSpace, occupations: &[usize]) -> Result<StateMatrix> {
    let idx = space.index_of(occupations)?;
    let mut data = CMatrix::zeros(space.dim(), space.dim());
    data[(idx, idx)] = C64::new(1.0, 0.0);
    Ok(StateMatrix {
        space: space.clone(),
        data,
    })
}

/// Ket `sum_i c_i |n_i>` before normalization.
pub fn superposition_ket(
    space: &CompositeSpace,
    terms: &[(C64, Vec<usize>)],
) -> Result<DVector<C64>> {
    let mut ket = DVector::zeros(space.dim());
    for (amp, occ) in terms {
        ket[space.index_of(occ)?] += *amp;
    }
    if ket.norm() == 0.0 {
        return Err(HilbertError::ZeroAmplitudes);
    }
    Ok(ket)
}

/// Normalized pure state `sum_i c_i |n_i>` as a density matrix.
pub fn superpose(space: &CompositeSpace, terms: &[(C64, Vec<usize>)]) -> Result<StateMatrix> {
    let ket = superposition_ket(space, terms)?;
    StateMatrix::from_ket(space, &ket)
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(m: &OperatorMatrix) -> Result<f64> {
    Ok(m.eigenvalues()?.iter().map(|v| v.abs()).sum())
}
