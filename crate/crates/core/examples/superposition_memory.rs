//! Stores the equal-weight OAM superposition and prints the retrieved
//! density matrix in the computational basis, then scans storage time.

use oam_memory::model::PhysicalParams;
use oam_memory::protocols::{map_to_qubit_basis, run_protocol, ScenarioConfig, ScenarioKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Superposition);
    cfg.physical = PhysicalParams::strong_coupling();
    cfg.coupling_ratio = Some(8.0);
    cfg.storage_time = 0.5;

    let r = run_protocol(&cfg)?;
    let q = map_to_qubit_basis(&r.rho_retrieved)?;
    println!("retrieved state, real part:");
    for i in 0..4 {
        let row: Vec<String> = (0..4).map(|j| format!("{:7.4}", q.matrix[(i, j)].re)).collect();
        println!("  {} {}", q.labels[i], row.join(" "));
    }
    println!(
        "fidelity {:.4} (root {:.4}), classical bound {:.4}",
        r.metrics.fidelity,
        r.metrics.root_fidelity,
        r.metrics.classical_bound.unwrap_or(f64::NAN)
    );

    println!("\nstorage_time_s  fidelity  root_fidelity");
    for t in [1e-3, 0.01, 0.1, 0.5, 1.0, 1.9] {
        cfg.storage_time = t;
        let r = run_protocol(&cfg)?;
        println!("{t:>14.3e}  {:.5}   {:.5}", r.metrics.fidelity, r.metrics.root_fidelity);
    }
    Ok(())
}
