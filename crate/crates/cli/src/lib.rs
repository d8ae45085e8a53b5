//! Command-line front end for the `endqt` simulations.
//!
//! `endqt <scenario> [--config file.json] [--seed N] [--out dir]
//! [--batch-seeds n] [--<parameter> value …]`
//!
//! Exit status is 0 on success, 1 on a runtime failure and 2 on a
//! configuration error. Artifacts are byte-identical for identical
//! configurations; the run report (with wall-clock time) goes to stdout.

// `!(x > 0.0)` style checks reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
mod scenarios;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use endqt::decoherence::DecoherenceTrace;
use serde::Serialize;

pub use config::{parse_args, ArgsError, CliError, Invocation, Scenario, ScenarioConfig};
pub use report::{ArtifactSink, RunReport};
pub use scenarios::example_dag;

/// Writes the `t,abs_z` plot series of a trace.
pub fn emit_plot_data(trace: &DecoherenceTrace, path: &Path) -> endqt::Result<()> {
    if trace.is_empty() {
        return Err(endqt::Error::EmptyTrace);
    }
    let mut w = BufWriter::new(File::create(path)?);
    trace.write_abs_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Runs one scenario and writes its artifacts.
pub fn run(cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut sink = ArtifactSink::create(&cfg.output_dir())?;
    let mut headlines = report::Headlines::default();
    scenarios::dispatch(cfg, &mut sink, &mut headlines)?;
    let headlines = headlines.into_map();
    sink.write_json(
        "summary.json",
        &serde_json::json!({
            "scenario": cfg.scenario,
            "seed": cfg.seed,
            "parameters": cfg.parameters,
            "headlines": headlines,
        }),
    )?;
    Ok(RunReport {
        config: cfg.clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
        artifacts: sink.into_files(),
        headlines,
    })
}

/// Reports for a `--batch-seeds` fan-out, in seed order.
#[derive(Debug, Serialize)]
pub struct BatchReport {
    pub wall_seconds: f64,
    pub runs: Vec<RunReport>,
}

/// Runs `count` seeds starting at the configured one, each into
/// `<output_dir>/seed-<s>`, on at most `threads` workers.
pub fn run_batch(cfg: &ScenarioConfig, count: u64, threads: Option<usize>) -> Result<BatchReport, CliError> {
    if count == 0 {
        return Err(CliError::config("batch_seeds", "must be at least 1"));
    }
    let base = cfg.require_seed()?;
    let root = cfg.output_dir();
    let configs: Vec<ScenarioConfig> = (0..count)
        .map(|k| {
            let seed = base.wrapping_add(k);
            let mut c = cfg.clone();
            c.seed = Some(seed);
            c.output_dir = Some(root.join(format!("seed-{seed}")));
            c
        })
        .collect();
    let start = Instant::now();
    let runs = run_all(&configs, threads)?;
    Ok(BatchReport {
        wall_seconds: start.elapsed().as_secs_f64(),
        runs,
    })
}

#[cfg(feature = "parallel")]
fn run_all(configs: &[ScenarioConfig], threads: Option<usize>) -> Result<Vec<RunReport>, CliError> {
    use rayon::prelude::*;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| configs.par_iter().map(run).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_all(configs: &[ScenarioConfig], _threads: Option<usize>) -> Result<Vec<RunReport>, CliError> {
    configs.iter().map(run).collect()
}

/// Reads `ENDQT_THREADS`; unset means machine parallelism.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("ENDQT_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::config(
                "ENDQT_THREADS",
                format!("expected a positive integer, got `{s}`"),
            )),
        },
    }
}

fn execute(inv: &Invocation) -> Result<serde_json::Value, CliError> {
    let cfg = inv.resolve()?;
    let threads = thread_cap()?;
    let value = match inv.cli.batch_seeds {
        Some(n) => serde_json::to_value(run_batch(&cfg, n, threads)?),
        None => serde_json::to_value(with_threads(threads, || run(&cfg))??),
    };
    value.map_err(|e| CliError::Runtime(e.to_string()))
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(_threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    Ok(f())
}

/// Full CLI entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let inv = match parse_args(args) {
        Ok(inv) => inv,
        Err(ArgsError::Clap(e)) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
        Err(ArgsError::Config(e)) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    match execute(&inv) {
        Ok(report) => {
            let stdout = std::io::stdout();
            let mut out = stdout.lock();
            if serde_json::to_writer_pretty(&mut out, &report).is_err() || writeln!(out).is_err() {
                return 1;
            }
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
