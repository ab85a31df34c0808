//! Write/store/read of a single OAM photon with the default parameter set.
//! Prints the schedule and where the side-mode and retrieved-photon
//! occupations peak.

use oam_memory::dynamics::modes;
use oam_memory::protocols::{run_protocol, ScenarioConfig};

fn argmax(times: &[f64], values: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .fold((f64::NAN, f64::NEG_INFINITY), |best, (&t, &v)| if v > best.1 { (t, v) } else { best })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ScenarioConfig::default();
    let started = std::time::Instant::now();
    let r = run_protocol(&cfg)?;
    let t = r.timing;
    let tr = &r.trajectory;
    println!("G~/2pi = {:.1} Hz, step {:.3e} s", r.derived.boosted_coupling / (2.0 * std::f64::consts::PI), tr.max_step);
    println!("t_off {:.2} us, t_on {:.2} us, t_read {:.2} us", t.t_off * 1e6, t.t_on * 1e6, t.t_read * 1e6);

    let (tc, nc) = argmax(&tr.times, tr.occupation(modes::C).unwrap(), 0.0, t.t_on);
    let (ta, na) = argmax(&tr.times, tr.occupation(modes::A_ELL).unwrap(), t.t_on, t.t_read);
    println!("<n_c> peaks at {:.2} us ({:.4}), {:+.2} steps from t_off", tc * 1e6, nc, (tc - t.t_off) / tr.max_step);
    println!("<n_a> peaks at {:.2} us ({:.4}), {:+.2} steps from t_read", ta * 1e6, na, (ta - t.t_read) / tr.max_step);
    println!("fidelity {:.4}, Wigner minimum {:.4}", r.metrics.fidelity, r.metrics.wigner_min.unwrap());
    for w in &r.warnings {
        println!("warning: {w}");
    }
    println!("ran in {:.2?}", started.elapsed());
    Ok(())
}
