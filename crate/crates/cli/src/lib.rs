//! Command-line driver: `simulate`, `analyze`, `benchmark` and `rerun`.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;

use anyhow::{Context, Result};

use args::{Cli, Command};

/// Runs a parsed command on a pool of `cli.threads` workers and returns the
/// process exit code (0 success, 2 degraded analysis). Errors map to 1.
pub fn run(cli: Cli) -> Result<i32> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .context("starting worker threads")?;
    pool.install(|| match &cli.command {
        Command::Simulate(a) => {
            let (settings, inputs) = commands::plan_simulate(a)?;
            commands::execute(settings, inputs, &a.out)
        }
        Command::Analyze(a) => {
            let (settings, inputs) = commands::plan_analyze(a)?;
            commands::execute(settings, inputs, &a.out)
        }
        Command::Benchmark(a) => {
            let (settings, inputs) = commands::plan_benchmark(a)?;
            commands::execute(settings, inputs, &a.out)
        }
        Command::Rerun(a) => commands::rerun(&a.manifest, &a.out),
    })
}
