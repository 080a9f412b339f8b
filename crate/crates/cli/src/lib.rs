//! The `sdl` command-line tool: evaluation, tuning, synthetic data, SVG reports,
//! and the workbench API server.

pub mod cli;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod serve;
pub mod svg;

use std::path::Path;

use clap::Parser;

use crate::cli::{Cli, Command};
use crate::error::{Failure, Outcome, ResultExt};
use crate::manifest::RunManifest;

pub fn run(cli: Cli) -> Result<Outcome, Failure> {
    match cli.command {
        Command::Eval(a) => commands::cmd_eval(&a),
        Command::Tune(a) => commands::cmd_tune(&a),
        Command::Synth(a) => commands::cmd_synth(&a),
        Command::Report(a) => commands::cmd_report(&a),
        Command::Serve(a) => {
            if let (Some(net), Some(data)) = (&a.net, &a.data) {
                if a.state.join("network.json").exists() {
                    return Err(Failure::Input(anyhow::anyhow!(
                        "{} already holds a session; drop --net/--data to resume it",
                        a.state.display()
                    )));
                }
                serve::init_state(&a.state, net, data, a.config.as_deref()).input()?;
            }
            let rt = tokio::runtime::Runtime::new().internal()?;
            rt.block_on(serve::serve(&a.state, a.port)).input()?;
            Ok(Outcome::Ok)
        }
        Command::Rerun(a) => {
            let m = RunManifest::load(&a.manifest).input()?;
            m.verify_inputs().input()?;
            let out = a.out.unwrap_or_else(|| m.out.clone().into());
            rerun(&m, &out)
        }
    }
}

/// Replay a manifest's command into `out`.
pub fn rerun(m: &RunManifest, out: &Path) -> Result<Outcome, Failure> {
    let argv = m.argv_with_out(out);
    let cli = Cli::try_parse_from(std::iter::once("sdl".to_string()).chain(argv))
        .map_err(|e| Failure::Input(anyhow::anyhow!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Serve(_) | Command::Rerun(_)) {
        return Err(Failure::Input(anyhow::anyhow!("manifest command `{}` cannot be replayed", m.command)));
    }
    run(cli)
}
