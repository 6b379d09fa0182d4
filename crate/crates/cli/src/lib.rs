//! Campaign orchestration for the latent-space differential testing engine:
//! command-line surface, archive persistence and reports.

pub mod campaign;
pub mod cli;
pub mod commands;
pub mod error;
pub mod lock;
pub mod manifest;
pub mod pnm;
pub mod truth;

use anyhow::Context;

pub use cli::Cli;

/// Runs one parsed command line inside a worker pool of the requested size.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            anyhow::bail!("worker count must be positive");
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;
    pool.install(|| match &cli.command {
        cli::Command::Generate(a) => commands::generate(a),
        cli::Command::Filter(a) => commands::filter(a),
        cli::Command::Dedup(a) => commands::dedup(a),
        cli::Command::Metrics(a) => commands::metrics(a),
        cli::Command::Select(cli::SelectCommand::Train(a)) => commands::select_train(a),
        cli::Command::Select(cli::SelectCommand::Eval(a)) => commands::select_eval(a),
        cli::Command::Report(a) => commands::report(a),
    })
}
