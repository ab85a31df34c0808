//! Derived frequencies and couplings for the shipped parameter sets, the
//! five regime checks, and how the coupling follows the winding number at
//! fixed control power.

use std::f64::consts::PI;

use oam_memory::model::{check_constraints, derive, required_control_power, PhysicalParams};

fn show(name: &str, p: &PhysicalParams) -> Result<(), Box<dyn std::error::Error>> {
    let d = derive(p)?;
    let hz = |w: f64| w / (2.0 * PI);
    println!("== {name}");
    println!("  omega_c/2pi {:>10.1} Hz   omega_d/2pi {:>10.1} Hz", hz(d.omega_c), hz(d.omega_d));
    println!("  G/2pi {:.3} Hz, alpha {:.1}, G~/gamma0 {:.3}", hz(d.bare_coupling), d.steady_amplitude, d.boosted_coupling / p.cavity_decay);
    println!("  4 g~ N / 2pi {:.2} Hz, swap time {:.2} us", hz(d.interaction_shift), d.swap_time * 1e6);
    for ratio in [4.0, 8.0] {
        let power = required_control_power(p, ratio * p.cavity_decay)?;
        println!("  control power for G~/gamma0 = {ratio}: {power:.3e} W");
    }
    let report = check_constraints(p, &d.with_boosted_coupling(p, 4.0 * p.cavity_decay)?);
    for (label, c) in report.checks() {
        println!("  {label:<18} {} margin {:>10.3} (needs > {})", if c.ok { "ok  " } else { "FAIL" }, c.margin, c.threshold);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    show("default set", &PhysicalParams::reference())?;
    show("strong-coupling set", &PhysicalParams::strong_coupling())?;

    println!("\nwinding number scan at fixed control power");
    let mut p = PhysicalParams::reference();
    for lp in [5, 10, 20, 40, 80] {
        p.winding_number = lp;
        let d = derive(&p)?;
        println!("  L_p {lp:>3}: G~/gamma0 {:.3}", d.boosted_coupling / p.cavity_decay);
    }
    Ok(())
}
