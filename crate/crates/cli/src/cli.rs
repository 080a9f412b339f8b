use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sdl", version, about = "Evaluate, blame, and retune rule networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a network over a labeled dataset and log every decision
    Eval(EvalArgs),
    /// Run learning rounds and keep the best network
    Tune(TuneArgs),
    /// Generate a seeded synthetic dataset from a reference network
    Synth(SynthArgs),
    /// Render benefit curves from a tune run as SVG
    Report(ReportArgs),
    /// Serve the workbench API over a state directory
    Serve(ServeArgs),
    /// Replay a run from its manifest
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub net: PathBuf,
    /// Dataset in JSON Lines, one frame per line
    #[arg(long)]
    pub data: PathBuf,
    /// Learner config; only the class weights are used
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `max_rounds` from the config
    #[arg(long)]
    pub max_rounds: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario file; defaults apply when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reference network; falls back to the scenario's `network`, then the bundled sample
    #[arg(long)]
    pub net: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of a `tune` run
    pub run: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory holding network.json, data.jsonl and optionally learner.json
    pub state: PathBuf,
    #[arg(long, default_value_t = 8787)]
    pub port: u16,
    /// Seed a new state directory with this network (requires --data)
    #[arg(long, requires = "data")]
    pub net: Option<PathBuf>,
    #[arg(long, requires = "net")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "net")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    /// A manifest.json or the directory containing one
    pub manifest: PathBuf,
    /// Write here instead of the recorded output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn s(p: &std::path::Path) -> String {
    p.display().to_string()
}

impl EvalArgs {
    pub fn argv(&self) -> Vec<String> {
        let mut v = vec!["eval".into(), "--net".into(), s(&self.net), "--data".into(), s(&self.data)];
        if let Some(c) = &self.config {
            v.extend(["--config".into(), s(c)]);
        }
        v.extend(["--out".into(), s(&self.out)]);
        v
    }
}

impl TuneArgs {
    pub fn argv(&self) -> Vec<String> {
        let mut v = vec!["tune".into(), "--net".into(), s(&self.net), "--data".into(), s(&self.data)];
        if let Some(c) = &self.config {
            v.extend(["--config".into(), s(c)]);
        }
        if let Some(m) = self.max_rounds {
            v.extend(["--max-rounds".into(), m.to_string()]);
        }
        v.extend(["--out".into(), s(&self.out)]);
        v
    }
}

impl SynthArgs {
    pub fn argv(&self) -> Vec<String> {
        let mut v = vec!["synth".into()];
        if let Some(c) = &self.config {
            v.extend(["--config".into(), s(c)]);
        }
        if let Some(n) = &self.net {
            v.extend(["--net".into(), s(n)]);
        }
        v.extend(["--seed".into(), self.seed.to_string(), "--out".into(), s(&self.out)]);
        v
    }
}

impl ReportArgs {
    pub fn argv(&self) -> Vec<String> {
        vec!["report".into(), s(&self.run), "--out".into(), s(&self.out)]
    }
}
