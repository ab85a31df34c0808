//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's metric code.

#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use oam_memory::hilbert::{CompositeSpace, StateMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type M = DMatrix<C64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> M {
    M::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Full-rank mixed state `W W^dagger / Tr`.
pub fn random_density(rng: &mut ChaCha8Rng, n: usize) -> M {
    let w = random_matrix(rng, n);
    let rho = &w * w.adjoint();
    let tr = rho.trace();
    rho / tr
}

pub fn random_state(rng: &mut ChaCha8Rng, space: &CompositeSpace) -> StateMatrix {
    StateMatrix::new(space.clone(), random_density(rng, space.dim())).expect("valid state")
}

/// `exp(i H)` for a random Hermitian `H`.
pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> M {
    let w = random_matrix(rng, n);
    let h = (&w + w.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let phases = M::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, l)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

fn hermitian_sqrt(m: &M) -> M {
    let eig = m.clone().symmetric_eigen();
    let roots = M::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0)));
    &eig.eigenvectors * roots * eig.eigenvectors.adjoint()
}

/// `(Tr sqrt(sqrt(a) b sqrt(a)))^2` by two eigendecompositions.
pub fn fidelity_oracle(a: &M, b: &M) -> f64 {
    let s = hermitian_sqrt(a);
    let inner = &s * b * &s;
    let inner = (&inner + inner.adjoint()) * C64::new(0.5, 0.0);
    let t: f64 = inner.symmetric_eigen().eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    t * t
}

/// `log2 || rho^{T_A} ||_1` for a bipartition `A (dim_a) x B (dim_b)` with
/// `A` the slow index.
pub fn log_negativity_oracle(rho: &M, dim_a: usize, dim_b: usize) -> f64 {
    let n = dim_a * dim_b;
    let mut pt = M::zeros(n, n);
    for i in 0..dim_a {
        for j in 0..dim_b {
            for k in 0..dim_a {
                for l in 0..dim_b {
                    pt[(i * dim_b + j, k * dim_b + l)] = rho[(k * dim_b + j, i * dim_b + l)];
                }
            }
        }
    }
    let norm: f64 = pt.symmetric_eigen().eigenvalues.iter().map(|l| l.abs()).sum();
    norm.log2()
}

/// `Tr(rho a_i^dagger a_j)` from the Fock-basis matrix elements.
pub fn two_point(state: &StateMatrix, i: &str, j: &str) -> C64 {
    let space = state.space();
    let (pi, pj) = (space.position(i).unwrap(), space.position(j).unwrap());
    let rho = state.data();
    let mut acc = C64::new(0.0, 0.0);
    // <m| a_i^dagger a_j |n> rho_nm
    for n in 0..space.dim() {
        let mut occ = space.occupations_of(n);
        if occ[pj] == 0 {
            continue;
        }
        let mut amp = (occ[pj] as f64).sqrt();
        occ[pj] -= 1;
        occ[pi] += 1;
        if occ[pi] >= space.dims()[pi] {
            continue;
        }
        amp *= (occ[pi] as f64).sqrt();
        let m = space.index_of(&occ).unwrap();
        acc += rho[(n, m)] * amp;
    }
    acc
}
