//! Single photon through a Mach-Zehnder interferometer: output port
//! populations as the arm phase is scanned, then a two-photon input.

use oam_memory::protocols::{run_mach_zehnder, LinearOpticsNetwork};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>8} {:>10} {:>10} {:>12}", "theta", "P(bright)", "P(dark)", "(1+cos)/2");
    for k in 0..=8 {
        let theta = std::f64::consts::PI * k as f64 / 4.0;
        let out = run_mach_zehnder(&LinearOpticsNetwork::mach_zehnder(Some(theta)), &[0, 1])?;
        let space = out.space();
        let pops = out.populations();
        let bright = pops[space.index_of(&[1, 0])?];
        let dark = pops[space.index_of(&[0, 1])?];
        println!("{theta:>8.4} {bright:>10.6} {dark:>10.6} {:>12.6}", (1.0 + theta.cos()) / 2.0);
    }

    // one photon per input port: both photons leave together
    let out = run_mach_zehnder(&LinearOpticsNetwork::mach_zehnder(Some(std::f64::consts::FRAC_PI_2)), &[1, 1])?;
    let space = out.space();
    println!("\ntwo photons, theta = pi/2");
    for (i, p) in out.populations().iter().enumerate() {
        if *p > 1e-12 {
            println!("  {:?} {p:.6}", space.occupations_of(i));
        }
    }
    Ok(())
}
