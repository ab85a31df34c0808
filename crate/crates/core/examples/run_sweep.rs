//! Drives the batch runner from code: a small coupling-ratio by storage-time
//! sweep over the superposition scenario, written to a scratch directory.

use oam_memory::cli::{load_config_str, run};

const CONFIG: &str = r#"
[scenario]
kind = "superposition"
storage_samples = 5

[sweep]
coupling_ratio = [2.0, 4.0, 8.0]
storage_time = { log_start = 1e-5, log_end = 1e-1, per_decade = 1 }

[output]
density_matrices = false
trajectories = false

[output.plot]
x = "storage_time"
y = ["root_fidelity"]
series = "coupling_ratio"
log_x = true
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = load_config_str(CONFIG, None)?;
    let out = std::env::temp_dir().join("oam_memory_sweep");
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let manifest = run(&config, &out, workers, 0)?;
    println!("digest {}", manifest.config_digest);
    println!("{} points, {} failed, {:.2} s", manifest.points_total, manifest.points_failed, manifest.wall_time_s);
    print!("{}", std::fs::read_to_string(out.join("runs.csv"))?);
    println!("outputs in {}: {:?}", out.display(), manifest.outputs);
    Ok(())
}
