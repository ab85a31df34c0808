//! Batch runner behind the `simulate` binary: loads a config, expands the
//! sweep, runs every point on a bounded worker pool and writes CSV, JSON and
//! SVG outputs plus a manifest.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

pub use config::{load_config, load_config_str, RunConfig, SweepPoint};
use output::{num, opt_num, Band, Csv, Level, LinePlot, Series};

use crate::model::ConstraintReport;
use crate::protocols::{run_protocol, ProtocolResult};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Pool(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "simulate", about = "Run OAM memory scenarios and sweeps")]
pub struct Args {
    /// TOML run configuration.
    pub config: PathBuf,
    #[arg(long, env = "OAM_OUT_DIR", default_value = "out")]
    pub out: PathBuf,
    /// Base profile, overriding the `profile` key in the file.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long, env = "OAM_WORKERS")]
    pub workers: Option<usize>,
    /// Recorded in the manifest; the dynamics themselves are deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Partial,
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::Partial => 3,
            RunStatus::Failed => 4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub config_digest: String,
    pub profile: String,
    pub status: RunStatus,
    pub points_total: usize,
    pub points_failed: usize,
    pub failures: Vec<PointFailure>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    /// Constraint report of the unswept scenario.
    pub constraints: Option<ConstraintReport>,
    pub wall_time_s: f64,
    pub workers: usize,
    pub seed: u64,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNS_FILE: &str = "runs.csv";

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Writer<'_> {
    fn put(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|source| CliError::Io { path, source })?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs every sweep point of `config` and writes results into `out_dir`.
/// Point failures are recorded in the manifest rather than returned.
pub fn run(config: &RunConfig, out_dir: &Path, workers: usize, seed: u64) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let points = config.points()?;
    let workers = workers.max(1);
    std::fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    info!("{} point(s) on {workers} worker(s)", points.len());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let results: Vec<Result<ProtocolResult, String>> = pool.install(|| {
        use rayon::prelude::*;
        points
            .par_iter()
            .map(|p| run_protocol(&p.scenario).map_err(|e| e.to_string()))
            .collect()
    });

    let mut w = Writer {
        dir: out_dir,
        written: vec![],
    };
    let failures: Vec<PointFailure> = results
        .iter()
        .enumerate()
        .filter_map(|(index, r)| {
            r.as_ref().err().map(|e| PointFailure {
                index,
                error: e.clone(),
            })
        })
        .collect();
    for f in &failures {
        warn!("point {} failed: {}", f.index, f.error);
    }

    w.put(RUNS_FILE, &runs_table(config, &points, &results)?)?;
    for (k, r) in results.iter().enumerate() {
        let Ok(r) = r else { continue };
        for warning in &r.warnings {
            warn!("point {k}: {warning}");
        }
        if config.output.trajectories {
            w.put(&format!("trajectory_{k}.csv"), &trajectory_table(r))?;
            w.put(&format!("trajectory_{k}.svg"), &trajectory_plot(r, k))?;
        }
        if config.output.density_matrices {
            for (tag, rho) in [("initial", &r.rho_initial), ("retrieved", &r.rho_retrieved)] {
                let file = output::density_matrix_file(rho);
                let json = serde_json::to_string_pretty(&file).expect("serializable");
                w.put(&format!("density_{tag}_{k}.json"), &json)?;
                w.put(
                    &format!("density_{tag}_{k}.svg"),
                    &output::density_bars(&format!("{tag} state, point {k}"), &file),
                )?;
            }
        }
    }
    if let Some(svg) = sweep_plot(config, &points, &results)? {
        w.put("plot.svg", &svg)?;
    }

    let failed = failures.len();
    let status = match failed {
        0 => RunStatus::Ok,
        n if n == points.len() => RunStatus::Failed,
        _ => RunStatus::Partial,
    };
    let constraints = config
        .scenario
        .derived()
        .ok()
        .map(|d| crate::model::check_constraints(&config.scenario.physical, &d));
    let mut manifest = RunManifest {
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: config.digest(),
        profile: config.profile.clone(),
        status,
        points_total: points.len(),
        points_failed: failed,
        failures,
        outputs: w.written.clone(),
        constraints,
        wall_time_s: 0.0,
        workers,
        seed,
    };
    manifest.outputs.push(MANIFEST_FILE.into());
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    w.put(
        MANIFEST_FILE,
        &serde_json::to_string_pretty(&manifest).expect("serializable"),
    )?;
    Ok(manifest)
}

/// Result columns available to plots, in `runs.csv` order.
pub const RESULT_COLUMNS: &[&str] = &[
    "fidelity",
    "root_fidelity",
    "fidelity_phase_corrected",
    "log_negativity",
    "classical_bound",
    "wigner_min",
    "t_off",
    "t_on",
    "t_read",
];

fn result_values(r: &ProtocolResult) -> Vec<Option<f64>> {
    let m = &r.metrics;
    vec![
        Some(m.fidelity),
        Some(m.root_fidelity),
        Some(r.fidelity_phase_corrected),
        m.log_negativity,
        m.classical_bound,
        m.wigner_min,
        Some(r.timing.t_off),
        Some(r.timing.t_on),
        Some(r.timing.t_read),
    ]
}

fn coordinate_text(v: &config::AxisValue) -> String {
    use config::AxisValue::*;
    match v {
        Number(x) => num(*x),
        Integer(i) => i.to_string(),
        Flag(b) => b.to_string(),
        Label(s) => s.clone(),
    }
}

/// Shortest round-trip form, for legends.
fn short_text(v: &config::AxisValue) -> String {
    match v {
        config::AxisValue::Number(x) => x.to_string(),
        other => coordinate_text(other),
    }
}

fn runs_table(
    config: &RunConfig,
    points: &[SweepPoint],
    results: &[Result<ProtocolResult, String>],
) -> Result<String, CliError> {
    let axes = config.sweep.axis_names()?;
    let mut header = vec!["point".to_string()];
    header.extend(axes.iter().cloned());
    header.push("status".into());
    header.extend(RESULT_COLUMNS.iter().map(|c| c.to_string()));
    header.push("constraints_ok".into());
    header.push("error".into());
    let mut csv = Csv::new(&header);
    for (k, (p, r)) in points.iter().zip(results).enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(p.coordinates.iter().map(|(_, v)| coordinate_text(v)));
        match r {
            Ok(r) => {
                row.push("ok".into());
                row.extend(result_values(r).into_iter().map(opt_num));
                row.push(r.constraints.all_ok().to_string());
                row.push(String::new());
            }
            Err(e) => {
                row.push("failed".into());
                row.extend(RESULT_COLUMNS.iter().map(|_| String::new()));
                row.push(String::new());
                row.push(e.replace('\n', " "));
            }
        }
        csv.row(&row);
    }
    Ok(csv.finish())
}

fn trajectory_table(r: &ProtocolResult) -> String {
    let t = &r.trajectory;
    let occupations: Vec<&String> = t.observables.keys().filter(|k| k.starts_with("n_")).collect();
    let mut header = vec!["t".to_string()];
    header.extend(occupations.iter().map(|s| s.to_string()));
    header.push("trace".into());
    let mut csv = Csv::new(&header);
    let trace = t.series("trace").expect("trace is always recorded");
    for (i, time) in t.times.iter().enumerate() {
        let mut row = vec![num(*time)];
        row.extend(occupations.iter().map(|k| num(t.observables[*k][i])));
        row.push(num(trace[i]));
        csv.row(&row);
    }
    csv.finish()
}

fn trajectory_plot(r: &ProtocolResult, k: usize) -> String {
    let t = &r.trajectory;
    let series = t
        .observables
        .iter()
        .filter(|(name, _)| name.starts_with("n_"))
        .map(|(name, values)| Series {
            label: format!("<{name}>"),
            points: t.times.iter().copied().zip(values.iter().copied()).collect(),
        })
        .collect();
    let tm = &r.timing;
    let title = format!("{} scenario, point {k}", r.config.kind.name());
    LinePlot {
        title: &title,
        x_label: "t [s]",
        y_label: "occupation",
        log_x: false,
        series,
        levels: vec![],
        bands: vec![
            Band {
                label: "write".into(),
                fill: "#dde8f5",
                x0: 0.0,
                x1: tm.t_off,
            },
            Band {
                label: "store".into(),
                fill: "#f2f2f2",
                x0: tm.t_off,
                x1: tm.t_on,
            },
            Band {
                label: "read".into(),
                fill: "#f6e0dc",
                x0: tm.t_on,
                x1: tm.t_read,
            },
        ],
    }
    .render()
}

fn sweep_plot(
    config: &RunConfig,
    points: &[SweepPoint],
    results: &[Result<ProtocolResult, String>],
) -> Result<Option<String>, CliError> {
    let Some(spec) = &config.output.plot else {
        return Ok(None);
    };
    let columns: Vec<usize> = spec
        .y
        .iter()
        .map(|c| {
            RESULT_COLUMNS
                .iter()
                .position(|r| r == c)
                .ok_or_else(|| CliError::Config(format!("unknown plot column `{c}`")))
        })
        .collect::<Result<_, _>>()?;
    let coord = |p: &SweepPoint, name: &str| {
        p.coordinates
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
    };
    // group keys in first-appearance order
    let mut groups: Vec<(String, Vec<(usize, f64)>)> = vec![];
    for (k, p) in points.iter().enumerate() {
        let key = spec
            .series
            .as_deref()
            .and_then(|s| coord(p, s).map(|v| format!("{s}={}", short_text(&v))))
            .unwrap_or_default();
        let x = coord(p, &spec.x).and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
        match groups.iter_mut().find(|(g, _)| *g == key) {
            Some((_, v)) => v.push((k, x)),
            None => groups.push((key, vec![(k, x)])),
        }
    }
    let mut series = vec![];
    for &c in &columns {
        for (key, members) in &groups {
            let pts: Vec<(f64, f64)> = members
                .iter()
                .filter_map(|&(k, x)| {
                    let r = results[k].as_ref().ok()?;
                    Some((x, result_values(r)[c]?))
                })
                .collect();
            let label = if key.is_empty() {
                RESULT_COLUMNS[c].to_string()
            } else {
                format!("{} {key}", RESULT_COLUMNS[c])
            };
            series.push(Series { label, points: pts });
        }
    }
    let bound = results
        .iter()
        .find_map(|r| r.as_ref().ok().and_then(|r| r.metrics.classical_bound));
    let levels = bound
        .map(|y| Level {
            label: format!("classical {y:.3}"),
            y,
        })
        .into_iter()
        .collect();
    let title = if spec.title.is_empty() {
        config.profile.clone()
    } else {
        spec.title.clone()
    };
    Ok(Some(
        LinePlot {
            title: &title,
            x_label: &spec.x,
            y_label: &spec.y.join(", "),
            log_x: spec.log_x,
            series,
            levels,
            bands: vec![],
        }
        .render(),
    ))
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = load_config(&args.config, args.profile.as_deref()).and_then(|config| {
        run(
            &config,
            &args.out,
            args.workers.unwrap_or_else(default_workers),
            args.seed,
        )
    });
    match outcome {
        Ok(m) => {
            eprintln!(
                "{}: {} of {} point(s) ok, outputs in {}",
                m.profile,
                m.points_total - m.points_failed,
                m.points_total,
                args.out.display()
            );
            m.status.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
