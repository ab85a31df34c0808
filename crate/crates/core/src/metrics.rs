//! Figures of merit for stored and retrieved states.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{number, trace_norm, CMatrix, HilbertError, StateMatrix};

/// Eigenvalues in `[-CLAMP_TOL, 0)` are treated as zero when taking square
/// roots; anything more negative is rejected.
pub const CLAMP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("states live on different spaces: {0} vs {1}")]
    SpaceMismatch(String, String),
    #[error("matrix has eigenvalue {0:.3e} below the clamping window")]
    NegativeEigenvalue(f64),
    #[error("Wigner function needs a single-mode state, got {0} modes")]
    NotSingleMode(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid classical bound argument: {0}")]
    InvalidBound(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let e = herm.symmetric_eigen();
    (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
}

/// Square root of a positive semidefinite Hermitian matrix.
pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = eigen(m);
    let mut roots = Vec::with_capacity(vals.len());
    for v in vals {
        if v < -CLAMP_TOL {
            return Err(MetricsError::NegativeEigenvalue(v));
        }
        roots.push(C64::new(v.max(0.0).sqrt(), 0.0));
    }
    let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(roots));
    Ok(&vecs * diag * vecs.adjoint())
}

fn same_space(a: &StateMatrix, b: &StateMatrix) -> Result<()> {
    if a.space() != b.space() {
        return Err(MetricsError::SpaceMismatch(
            a.space().to_string(),
            b.space().to_string(),
        ));
    }
    Ok(())
}

/// Eigenvalues at or below this are outside the support used by
/// [`root_fidelity`].
const SUPPORT_TOL: f64 = 1e-14;

/// `(sqrt(lambda_k), v_k)` over the eigenpairs with `lambda_k > SUPPORT_TOL`.
fn sqrt_support(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let (vals, vecs) = eigen(m);
    let mut roots = Vec::new();
    let mut cols = Vec::new();
    for (k, v) in vals.into_iter().enumerate() {
        if v < -CLAMP_TOL {
            return Err(MetricsError::NegativeEigenvalue(v));
        }
        if v > SUPPORT_TOL {
            roots.push(v.sqrt());
            cols.push(vecs.column(k).into_owned());
        }
    }
    let basis = if cols.is_empty() {
        CMatrix::zeros(m.nrows(), 0)
    } else {
        CMatrix::from_columns(&cols)
    };
    Ok((roots, basis))
}

/// `Tr sqrt(sqrt(a) b sqrt(a))`, evaluated as the trace norm of
/// `sqrt(a) sqrt(b)` restricted to the two supports.
pub fn root_fidelity(a: &StateMatrix, b: &StateMatrix) -> Result<f64> {
    same_space(a, b)?;
    let (ra, va) = sqrt_support(a.data())?;
    let (rb, vb) = sqrt_support(b.data())?;
    if ra.is_empty() || rb.is_empty() {
        return Ok(0.0);
    }
    let overlap = va.adjoint() * vb;
    let m = CMatrix::from_fn(ra.len(), rb.len(), |i, j| overlap[(i, j)] * (ra[i] * rb[j]));
    Ok(m.singular_values().iter().sum())
}

/// Uhlmann fidelity `[Tr sqrt(sqrt(a) b sqrt(a))]^2`.
pub fn fidelity(a: &StateMatrix, b: &StateMatrix) -> Result<f64> {
    root_fidelity(a, b).map(|f| f * f)
}

/// `log2 || rho^{T_A} ||_1` with `A` the modes in `subsystem`. Not floored.
pub fn log_negativity(rho: &StateMatrix, subsystem: &[&str]) -> Result<f64> {
    let pt = rho.partial_transpose(subsystem)?;
    Ok(trace_norm(&pt)?.log2())
}

/// Rectangular phase-space grid; `values[j][i]` is `W(x[i], p[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl WignerGrid {
    pub fn min(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        let weights = |axis: &[f64]| -> Vec<f64> {
            let n = axis.len();
            (0..n)
                .map(|i| {
                    let left = if i > 0 { axis[i] - axis[i - 1] } else { 0.0 };
                    let right = if i + 1 < n { axis[i + 1] - axis[i] } else { 0.0 };
                    (left + right) / 2.0
                })
                .collect()
        };
        let wx = weights(&self.x);
        let wp = weights(&self.p);
        self.values
            .iter()
            .zip(&wp)
            .map(|(row, wj)| row.iter().zip(&wx).map(|(v, wi)| v * wi).sum::<f64>() * wj)
            .sum()
    }
}

/// `n` evenly spaced points over `[lo, hi]`.
pub fn axis(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(hi > lo) {
        return Err(MetricsError::InvalidGrid(format!("[{lo}, {hi}] with {n} points")));
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

/// `L_n^{(k)}(x)` by the three-term recurrence.
fn laguerre(n: usize, k: usize, x: f64) -> f64 {
    let k = k as f64;
    let (mut prev, mut cur) = (1.0, 1.0 + k - x);
    if n == 0 {
        return prev;
    }
    for j in 1..n {
        let j = j as f64;
        let next = ((2.0 * j + 1.0 + k - x) * cur - (j + k) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Wigner function of a single-mode state, with quadratures
/// `x = (a + a^dagger)/sqrt 2`, `p = (a - a^dagger)/(i sqrt 2)`, so that
/// the vacuum gives `exp(-x^2 - p^2)/pi`.
pub fn wigner(rho: &StateMatrix, x: &[f64], p: &[f64]) -> Result<WignerGrid> {
    if rho.space().num_modes() != 1 {
        return Err(MetricsError::NotSingleMode(rho.space().num_modes()));
    }
    let d = rho.dim();
    // sqrt(n!/m!) for n <= m
    let mut log_fact = vec![0.0f64; d];
    for i in 1..d {
        log_fact[i] = log_fact[i - 1] + (i as f64).ln();
    }
    let data = rho.data();
    let values = p
        .iter()
        .map(|&pj| {
            x.iter()
                .map(|&xi| {
                    let r2 = 2.0 * (xi * xi + pj * pj);
                    let beta = C64::new(xi, pj) * std::f64::consts::SQRT_2;
                    let gauss = (-r2 / 2.0).exp() / std::f64::consts::PI;
                    let mut acc = 0.0;
                    for n in 0..d {
                        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                        acc += data[(n, n)].re * sign * laguerre(n, 0, r2);
                        for m in n + 1..d {
                            let norm = (0.5 * (log_fact[n] - log_fact[m])).exp();
                            let w = beta.powu((m - n) as u32)
                                * (sign * norm * laguerre(n, m - n, r2));
                            acc += 2.0 * (data[(n, m)] * w).re;
                        }
                    }
                    acc * gauss
                })
                .collect()
        })
        .collect();
    Ok(WignerGrid {
        x: x.to_vec(),
        p: p.to_vec(),
        values,
    })
}

/// Best fidelity reachable by measure-and-prepare strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalBound {
    /// `(N + 1)/(N + 2)` for an `N`-qubit memory.
    QubitMemory(u32),
    /// `2/(d + 1)` for teleporting a `d`-dimensional state.
    Teleport(u32),
}

impl ClassicalBound {
    pub fn value(self) -> Result<f64> {
        match self {
            Self::QubitMemory(n) if n >= 1 => Ok((n as f64 + 1.0) / (n as f64 + 2.0)),
            Self::Teleport(d) if d >= 2 => Ok(2.0 / (d as f64 + 1.0)),
            other => Err(MetricsError::InvalidBound(format!("{other:?}"))),
        }
    }
}

/// What [`evaluate`] should compute beyond fidelity and occupations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRequest {
    /// Modes forming one side of the bipartition.
    pub bipartition: Option<Vec<String>>,
    /// Mode whose reduced state gets a Wigner function.
    pub wigner_mode: Option<String>,
    pub wigner_extent: Option<(f64, usize)>,
    pub bound: Option<ClassicalBound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fidelity: f64,
    pub root_fidelity: f64,
    pub log_negativity: Option<f64>,
    pub classical_bound: Option<f64>,
    pub wigner_min: Option<f64>,
    pub mean_occupations: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn beats_classical(&self) -> Option<bool> {
        self.classical_bound.map(|b| self.fidelity > b)
    }
}

/// Compares `retrieved` with `reference`.
pub fn evaluate(
    reference: &StateMatrix,
    retrieved: &StateMatrix,
    request: &MetricsRequest,
) -> Result<MetricsReport> {
    let root = root_fidelity(reference, retrieved)?;
    let log_negativity = match &request.bipartition {
        Some(side) => {
            let side: Vec<&str> = side.iter().map(String::as_str).collect();
            Some(log_negativity(retrieved, &side)?)
        }
        None => None,
    };
    let wigner_min = match &request.wigner_mode {
        Some(mode) => {
            let reduced = retrieved.partial_trace(&[mode])?;
            let (extent, n) = request.wigner_extent.unwrap_or((5.0, 201));
            let ax = axis(-extent, extent, n)?;
            Some(wigner(&reduced, &ax, &ax)?.min())
        }
        None => None,
    };
    let mut mean_occupations = BTreeMap::new();
    for label in retrieved.space().labels() {
        let n = number(retrieved.space(), label)?;
        mean_occupations.insert(label.to_string(), retrieved.expectation(&n).re);
    }
    Ok(MetricsReport {
        fidelity: root * root,
        root_fidelity: root,
        log_negativity,
        classical_bound: request.bound.map(ClassicalBound::value).transpose()?,
        wigner_min,
        mean_occupations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{fock_ket, superpose, CompositeSpace};
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn fidelity_basics() {
        let s = CompositeSpace::single("a", 3).unwrap();
        let a = fock_ket(&s, &[0]).unwrap();
        let b = fock_ket(&s, &[1]).unwrap();
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(fidelity(&a, &b).unwrap().abs() < 1e-12);
        let psi = superpose(&s, &[(c(0.6, 0.0), vec![0]), (c(0.0, 0.8), vec![2])]).unwrap();
        let mixed = StateMatrix::new(
            s.clone(),
            (a.data() * c(0.5, 0.0)) + (psi.data() * c(0.5, 0.0)),
        )
        .unwrap();
        // pure reference: F = <psi|rho|psi>
        let expect = 0.5 * 0.36 + 0.5;
        assert!((fidelity(&psi, &mixed).unwrap() - expect).abs() < 1e-10, "{} {}", fidelity(&psi, &mixed).unwrap(), psi.data());
        assert!((fidelity(&mixed, &psi).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn fidelity_rejects_space_mismatch() {
        let a = fock_ket(&CompositeSpace::single("a", 2).unwrap(), &[0]).unwrap();
        let b = fock_ket(&CompositeSpace::single("b", 2).unwrap(), &[0]).unwrap();
        assert!(matches!(fidelity(&a, &b), Err(MetricsError::SpaceMismatch(..))));
    }

    #[test]
    fn negative_eigenvalue_rejected() {
        let mut m = CMatrix::identity(2, 2);
        m[(1, 1)] = c(-1e-6, 0.0);
        assert!(matches!(psd_sqrt(&m), Err(MetricsError::NegativeEigenvalue(_))));
        m[(1, 1)] = c(-1e-12, 0.0);
        assert!(psd_sqrt(&m).is_ok());
    }

    #[test]
    fn bell_and_werner_negativity() {
        let s = CompositeSpace::uniform(&["a", "b"], 2).unwrap();
        let bell = superpose(
            &s,
            &[(c(FRAC_1_SQRT_2, 0.0), vec![0, 0]), (c(FRAC_1_SQRT_2, 0.0), vec![1, 1])],
        )
        .unwrap();
        assert!((log_negativity(&bell, &["a"]).unwrap() - 1.0).abs() < 1e-12);
        // w Bell + (1 - w) I/4: partial transpose has one eigenvalue (1 - 3w)/4
        for (w, expect) in [(0.5, 1.25f64.log2()), (2.0 / 3.0, 1.5f64.log2()), (0.3, 0.0)] {
            let werner = StateMatrix::new(
                s.clone(),
                bell.data() * c(w, 0.0) + CMatrix::identity(4, 4) * c((1.0 - w) / 4.0, 0.0),
            )
            .unwrap();
            let en = log_negativity(&werner, &["b"]).unwrap();
            assert!((en - expect).abs() < 1e-12, "w={w}: {en}");
        }
        let product = fock_ket(&s, &[1, 0]).unwrap();
        assert!(log_negativity(&product, &["a"]).unwrap().abs() < 1e-12);
        assert!(log_negativity(&product, &["a", "b"]).is_err());
    }

    #[test]
    fn laguerre_values() {
        assert!((laguerre(2, 0, 1.5) - (1.5f64.powi(2) / 2.0 - 2.0 * 1.5 + 1.0)).abs() < 1e-14);
        assert!((laguerre(1, 3, 0.7) - (4.0 - 0.7)).abs() < 1e-14);
    }

    #[test]
    fn wigner_anchors() {
        let s = CompositeSpace::single("a", 4).unwrap();
        let origin = [0.0];
        let vac = wigner(&fock_ket(&s, &[0]).unwrap(), &origin, &origin).unwrap();
        assert!((vac.values[0][0] - 1.0 / PI).abs() < 1e-14);
        let one = wigner(&fock_ket(&s, &[1]).unwrap(), &origin, &origin).unwrap();
        assert!((one.values[0][0] + 1.0 / PI).abs() < 1e-14);
        let two = CompositeSpace::uniform(&["a", "b"], 2).unwrap();
        let err = wigner(&fock_ket(&two, &[0, 0]).unwrap(), &origin, &origin);
        assert!(matches!(err, Err(MetricsError::NotSingleMode(2))));
    }

    /// `(1/pi) int psi_m(x+y) psi_n(x-y) exp(-2ipy) dy` by quadrature.
    fn hermite_oracle(rho: &StateMatrix, x: f64, p: f64) -> f64 {
        let d = rho.dim();
        let psi = |n: usize, q: f64| -> f64 {
            // normalized Hermite functions by recurrence
            let mut h0 = PI.powf(-0.25) * (-q * q / 2.0).exp();
            if n == 0 {
                return h0;
            }
            let mut h1 = 2f64.sqrt() * q * h0;
            for k in 1..n {
                let k = k as f64;
                let h2 = (2.0 / (k + 1.0)).sqrt() * q * h1 - (k / (k + 1.0)).sqrt() * h0;
                h0 = h1;
                h1 = h2;
            }
            h1
        };
        let (lo, hi, steps) = (-8.0, 8.0, 4000);
        let dy = (hi - lo) / steps as f64;
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..=steps {
            let y = lo + k as f64 * dy;
            let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
            let phase = C64::from_polar(1.0, -2.0 * p * y);
            for m in 0..d {
                for n in 0..d {
                    acc += rho.data()[(m, n)] * psi(m, x + y) * psi(n, x - y) * phase * (w * dy);
                }
            }
        }
        acc.re / PI
    }

    #[test]
    fn wigner_matches_position_representation() {
        let s = CompositeSpace::single("a", 4).unwrap();
        let rho = superpose(
            &s,
            &[(c(0.5, 0.0), vec![0]), (c(0.3, 0.4), vec![1]), (c(0.0, -0.5), vec![3])],
        )
        .unwrap();
        let pts = [(0.3, -0.7), (-1.1, 0.4), (0.9, 1.3)];
        for (x, p) in pts {
            let w = wigner(&rho, &[x], &[p]).unwrap().values[0][0];
            let o = hermite_oracle(&rho, x, p);
            assert!((w - o).abs() < 1e-9, "({x},{p}): {w} vs {o}");
        }
    }

    #[test]
    fn wigner_normalized() {
        let s = CompositeSpace::single("a", 3).unwrap();
        let rho = superpose(&s, &[(c(0.6, 0.0), vec![1]), (c(0.0, 0.8), vec![2])]).unwrap();
        let ax = axis(-5.0, 5.0, 201).unwrap();
        let grid = wigner(&rho, &ax, &ax).unwrap();
        assert!((grid.integral() - 1.0).abs() < 1e-3);
        assert!(grid.min() < 0.0);
    }

    #[test]
    fn classical_bounds() {
        assert_eq!(ClassicalBound::QubitMemory(1).value().unwrap(), 2.0 / 3.0);
        assert_eq!(ClassicalBound::Teleport(4).value().unwrap(), 2.0 / 5.0);
        assert!(ClassicalBound::QubitMemory(0).value().is_err());
        assert!(ClassicalBound::Teleport(1).value().is_err());
        let seq: Vec<f64> = (1..50)
            .map(|n| ClassicalBound::QubitMemory(n).value().unwrap())
            .collect();
        assert!(seq.windows(2).all(|w| w[1] > w[0] && w[1] < 1.0));
    }

    #[test]
    fn report_fields() {
        let s = CompositeSpace::uniform(&["a", "b"], 2).unwrap();
        let bell = superpose(
            &s,
            &[(c(FRAC_1_SQRT_2, 0.0), vec![0, 1]), (c(FRAC_1_SQRT_2, 0.0), vec![1, 0])],
        )
        .unwrap();
        let req = MetricsRequest {
            bipartition: Some(vec!["a".into()]),
            wigner_mode: Some("a".into()),
            wigner_extent: Some((4.0, 41)),
            bound: Some(ClassicalBound::Teleport(4)),
        };
        let r = evaluate(&bell, &bell, &req).unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-12);
        assert!((r.log_negativity.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.beats_classical(), Some(true));
        assert!((r.mean_occupations["a"] - 0.5).abs() < 1e-12);
        // half vacuum, half |1>: W(0) = 0
        assert!(r.wigner_min.unwrap() <= 1e-12);
    }
}
