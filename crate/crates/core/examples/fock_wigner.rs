//! Retrieves Fock states and Fock superpositions after 1 ms of storage and
//! prints the Wigner minimum before and after.

use oam_memory::metrics::{axis, wigner};
use oam_memory::protocols::{run_protocol, AmplitudeTerm, InitialState, ScenarioConfig, ScenarioKind};

fn term(re: f64, n: usize) -> AmplitudeTerm {
    AmplitudeTerm { re, im: 0.0, occupations: vec![n] }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let inputs = [
        ("|1>", InitialState::Occupations { occupations: vec![1] }),
        ("|2>", InitialState::Occupations { occupations: vec![2] }),
        ("(|0>+|1>)/sqrt2", InitialState::Amplitudes { terms: vec![term(h, 0), term(h, 1)] }),
        ("(|1>+|2>)/sqrt2", InitialState::Amplitudes { terms: vec![term(h, 1), term(h, 2)] }),
    ];
    let grid = axis(-4.0, 4.0, 161)?;
    println!("{:<16} {:>10} {:>10} {:>9} {:>14}", "input", "W_min(0)", "W_min(T)", "fidelity", "phase-aligned");
    for (name, init) in inputs {
        let mut cfg = ScenarioConfig::new(ScenarioKind::FockSeries);
        cfg.coupling_ratio = Some(4.1);
        cfg.storage_time = 1e-3;
        cfg.initial_state = init;
        let r = run_protocol(&cfg)?;
        let before = wigner(&r.rho_initial, &grid, &grid)?.min();
        println!(
            "{name:<16} {before:>10.4} {:>10.4} {:>9.4} {:>14.4}",
            r.metrics.wigner_min.unwrap_or(f64::NAN),
            r.metrics.fidelity,
            r.fidelity_phase_corrected
        );
    }
    Ok(())
}
