//! Building blocks: truncated ladder operators on a two-mode space, their
//! commutator, a beamsplitter acting on a Fock state, and a partial trace.

use num_complex::Complex64 as C64;
use oam_memory::hilbert::{annihilation, creation, fock_ket, number, CompositeSpace, OperatorMatrix};
use oam_memory::metrics::log_negativity;
use oam_memory::protocols::{beamsplitter_transform, make_entangled_input};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = CompositeSpace::uniform(&["a", "b"], 4)?;
    println!("space {space}, dim {}", space.dim());

    let a = annihilation(&space, "a")?;
    let ad = creation(&space, "a")?;
    // [a, a+] = 1 except on the top Fock level of the truncation
    let comm = &(&a * &ad) - &(&ad * &a);
    let diag: Vec<f64> = (0..space.dim()).map(|i| comm.data()[(i, i)].re).collect();
    println!("diag [a, a+] = {diag:?}");

    let n_a = number(&space, "a")?;
    let n_b = number(&space, "b")?;
    let total = &n_a + &n_b;
    let psi = fock_ket(&space, &[1, 1])?;
    let out = beamsplitter_transform(&psi, "a", "b")?;
    println!("<n_a + n_b> before {:.3}, after {:.3}", psi.expectation(&total).re, out.expectation(&total).re);
    for (i, p) in out.populations().iter().enumerate() {
        if *p > 1e-12 {
            println!("  {:?} {p:.3}", space.occupations_of(i));
        }
    }

    let reduced = out.partial_trace(&["a"])?;
    println!("reduced state of a: purity {:.4}, populations {:?}", reduced.purity(), reduced.populations());

    let hop = OperatorMatrix::identity(&space).scale(C64::new(0.0, 1.0));
    println!("i*1 hermitian: {}", hop.is_hermitian(1e-12));

    let bell = make_entangled_input()?;
    let labels = bell.space().labels().into_iter().map(str::to_owned).collect::<Vec<_>>();
    let en = log_negativity(&bell, &[labels[0].as_str(), labels[1].as_str()])?;
    println!("entangled input over {}: log-negativity {en:.6}", bell.space());
    Ok(())
}
