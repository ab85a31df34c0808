//! Wigner function of a retrieved single photon, printed as a coarse
//! character map. Negative cells are marked with '-'.

use oam_memory::metrics::{axis, wigner};
use oam_memory::protocols::{run_protocol, ScenarioConfig, ScenarioKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ScenarioConfig::new(ScenarioKind::Single);
    cfg.storage_time = 1e-3;
    let r = run_protocol(&cfg)?;
    let grid = axis(-3.0, 3.0, 31)?;
    for (name, rho) in [("input", &r.rho_initial), ("retrieved", &r.rho_retrieved)] {
        let w = wigner(rho, &grid, &grid)?;
        println!("{name}: min {:.4}, max {:.4}, integral {:.4}", w.min(), w.max(), w.integral());
        let scale = w.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for row in w.values.iter().rev() {
            let line: String = row
                .iter()
                .map(|&v| match v / scale {
                    x if x < -0.2 => '-',
                    x if x < 0.05 => ' ',
                    x if x < 0.3 => '.',
                    x if x < 0.6 => 'o',
                    _ => '#',
                })
                .collect();
            println!("  |{line}|");
        }
    }
    Ok(())
}
