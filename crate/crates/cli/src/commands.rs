use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;

use sdl_core::learner::report::{curve_rows, read_rows, summary_rows, write_rows, CurveRow, SummaryRow};
use sdl_core::learner::{tune, LearnerConfig, RoundReport};
use sdl_core::network::synth::{synth_dataset, Scenario};
use sdl_core::network::{
    eval_dataset, parse_network, read_jsonl, sample_network, write_jsonl, Class, ErrorSummary, Frame,
    NetworkSpec,
};

use crate::cli::{EvalArgs, ReportArgs, SynthArgs, TuneArgs};
use crate::error::{Failure, Outcome, ResultExt};
use crate::manifest::RunManifest;
use crate::svg::render_curve;

pub fn load_network(path: &Path) -> Result<NetworkSpec, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read network {}", path.display()))
        .input()?;
    parse_network(&text)
        .with_context(|| format!("invalid network {}", path.display()))
        .input()
}

pub fn load_frames(path: &Path) -> Result<Vec<Frame>, Failure> {
    let f = fs::File::open(path)
        .with_context(|| format!("cannot read dataset {}", path.display()))
        .input()?;
    read_jsonl(BufReader::new(f))
        .with_context(|| format!("invalid dataset {}", path.display()))
        .input()
}

pub fn load_config(path: Option<&Path>) -> Result<LearnerConfig, Failure> {
    let Some(path) = path else {
        return Ok(LearnerConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .input()?;
    let cfg: LearnerConfig = serde_json::from_str(&text)
        .with_context(|| format!("invalid learner config {}", path.display()))
        .input()?;
    cfg.validate()
        .map_err(|e| anyhow!("invalid learner config {}: {e}", path.display()))
        .input()?;
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .input()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).internal()?;
    text.push('\n');
    fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .internal()
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes)
        .with_context(|| format!("cannot write {}", path.display()))
        .internal()
}

#[derive(Debug, Serialize)]
pub struct Rates {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub tn: f64,
}

#[derive(Debug, Serialize)]
pub struct EvalSummary {
    #[serde(flatten)]
    pub counts: ErrorSummary,
    pub w_fp: f64,
    pub w_fn: f64,
    pub per_1000_frames: Rates,
}

pub fn eval_summary(s: ErrorSummary, cfg: &LearnerConfig) -> EvalSummary {
    EvalSummary {
        counts: s,
        w_fp: cfg.weights.w_fp,
        w_fn: cfg.weights.w_fn,
        per_1000_frames: Rates {
            tp: s.rate_per_1000(Class::TP),
            fp: s.rate_per_1000(Class::FP),
            fn_: s.rate_per_1000(Class::FN),
            tn: s.rate_per_1000(Class::TN),
        },
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<Outcome, Failure> {
    let net = load_network(&a.net)?;
    let frames = load_frames(&a.data)?;
    let cfg = load_config(a.config.as_deref())?;
    let log = eval_dataset(&net, &frames).context("evaluation failed").input()?;
    create_out(&a.out)?;

    let f = fs::File::create(a.out.join("decisions.csv")).internal()?;
    let mut w = BufWriter::new(f);
    log.write_csv(&net, &mut w).internal()?;
    w.flush().internal()?;
    let s = log.summary(&cfg.weights);
    write_json(&a.out.join("summary.json"), &eval_summary(s, &cfg))?;

    let mut m = RunManifest::new("eval", &a.out, None, a.argv());
    m.input("network", &a.net).internal()?;
    m.input("dataset", &a.data).internal()?;
    if let Some(c) = &a.config {
        m.input("config", c).internal()?;
    }
    m.write(&a.out).internal()?;

    println!(
        "{} frames: TP {} FP {} FN {} TN {}, weighted error {}",
        s.frames, s.tp, s.fp, s.fn_, s.tn, s.weighted_error
    );
    Ok(Outcome::Ok)
}

#[derive(Debug, Serialize)]
struct RoundSummary<'a> {
    round: u32,
    before: ErrorSummary,
    after: ErrorSummary,
    updates: &'a [sdl_core::learner::ParamUpdate],
}

#[derive(Debug, Serialize)]
struct TuneSummary<'a> {
    rounds_applied: usize,
    best_round: u32,
    initial_error: f64,
    best_error: f64,
    initial: ErrorSummary,
    rounds: Vec<RoundSummary<'a>>,
}

pub fn round_dir(out: &Path, round: u32) -> PathBuf {
    out.join("rounds").join(format!("round-{round:02}"))
}

/// Curve and summary CSVs for one round, named against the network the round started from.
pub fn write_round(dir: &Path, net: &NetworkSpec, r: &RoundReport) -> Result<(), Failure> {
    create_out(dir)?;
    let mut buf = Vec::new();
    write_rows(&mut buf, &curve_rows(net, &r.curves)).internal()?;
    write_file(&dir.join("curves.csv"), buf)?;
    let mut buf = Vec::new();
    write_rows(&mut buf, &summary_rows(net, r)).internal()?;
    write_file(&dir.join("summary.csv"), buf)
}

pub fn cmd_tune(a: &TuneArgs) -> Result<Outcome, Failure> {
    let net = load_network(&a.net)?;
    let frames = load_frames(&a.data)?;
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(m) = a.max_rounds {
        cfg.max_rounds = m;
        cfg.validate().map_err(|e| anyhow!(e)).input()?;
    }
    let r = tune(&net, &frames, &cfg).context("tuning failed").input()?;
    create_out(&a.out)?;

    for (i, rep) in r.history.iter().enumerate() {
        let dir = round_dir(&a.out, rep.round);
        write_round(&dir, &r.networks[i], rep)?;
        write_file(&dir.join("network.json"), r.networks[i + 1].to_json())?;
    }
    write_file(&a.out.join("network.json"), r.best_network.to_json())?;
    let summary = TuneSummary {
        rounds_applied: r.history.len(),
        best_round: r.best_round,
        initial_error: r.initial.weighted_error,
        best_error: r.best_error,
        initial: r.initial,
        rounds: r
            .history
            .iter()
            .map(|h| RoundSummary {
                round: h.round,
                before: h.before,
                after: h.after,
                updates: &h.updates,
            })
            .collect(),
    };
    write_json(&a.out.join("summary.json"), &summary)?;

    let mut m = RunManifest::new("tune", &a.out, None, a.argv());
    m.input("network", &a.net).internal()?;
    m.input("dataset", &a.data).internal()?;
    if let Some(c) = &a.config {
        m.input("config", c).internal()?;
    }
    m.write(&a.out).internal()?;

    println!(
        "{} rounds applied; best round {}: weighted error {} -> {}",
        r.history.len(),
        r.best_round,
        r.initial.weighted_error,
        r.best_error
    );
    Ok(if r.best_round == 0 {
        Outcome::NoImprovement
    } else {
        Outcome::Ok
    })
}

pub fn cmd_synth(a: &SynthArgs) -> Result<Outcome, Failure> {
    let sc: Scenario = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read scenario {}", p.display()))
                .input()?;
            serde_json::from_str(&text)
                .with_context(|| format!("invalid scenario {}", p.display()))
                .input()?
        }
        None => Scenario::default(),
    };
    let net_path: Option<PathBuf> = a.net.clone().or_else(|| {
        let rel = PathBuf::from(sc.network.as_ref()?);
        let base = a.config.as_ref().and_then(|c| c.parent()).unwrap_or(Path::new(""));
        Some(if rel.is_absolute() { rel } else { base.join(rel) })
    });
    let reference = match &net_path {
        Some(p) => load_network(p)?,
        None => sample_network(),
    };
    let out = synth_dataset(&reference, &sc, a.seed)
        .context("synthesis failed")
        .input()?;
    create_out(&a.out)?;

    let f = fs::File::create(a.out.join("data.jsonl")).internal()?;
    let mut w = BufWriter::new(f);
    write_jsonl(&mut w, &out.frames).internal()?;
    w.flush().internal()?;
    write_file(&a.out.join("reference.json"), out.reference.to_json())?;
    if let Some(p) = &out.perturbed {
        write_file(&a.out.join("perturbed.json"), p.to_json())?;
    }

    let mut m = RunManifest::new("synth", &a.out, Some(a.seed), a.argv());
    if let Some(c) = &a.config {
        m.input("scenario", c).internal()?;
    }
    if let Some(p) = &net_path {
        m.input("network", p).internal()?;
    }
    m.write(&a.out).internal()?;

    let positives = out.frames.iter().filter(|f| f.label).count();
    println!(
        "{} episodes, {} frames ({} positive){}",
        sc.episodes,
        out.frames.len(),
        positives,
        if out.perturbed.is_some() { ", perturbed network written" } else { "" }
    );
    Ok(Outcome::Ok)
}

pub fn cmd_report(a: &ReportArgs) -> Result<Outcome, Failure> {
    let rounds = a.run.join("rounds");
    let mut dirs: Vec<PathBuf> = fs::read_dir(&rounds)
        .with_context(|| format!("no round reports under {}", rounds.display()))
        .input()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("curves.csv").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Failure::Input(anyhow!("no round reports under {}", rounds.display())));
    }
    create_out(&a.out)?;
    let mut m = RunManifest::new("report", &a.out, None, a.argv());
    let mut plots = 0;
    for dir in &dirs {
        let name = dir.file_name().expect("round dir has a name");
        let curves_path = dir.join("curves.csv");
        let summary_path = dir.join("summary.csv");
        let curves: Vec<CurveRow> = read_rows(
            fs::File::open(&curves_path).input()?,
        )
        .with_context(|| format!("malformed {}", curves_path.display()))
        .input()?;
        let summary: Vec<SummaryRow> = read_rows(
            fs::File::open(&summary_path)
                .with_context(|| format!("missing {}", summary_path.display()))
                .input()?,
        )
        .with_context(|| format!("malformed {}", summary_path.display()))
        .input()?;
        m.input("curves", &curves_path).internal()?;
        m.input("summary", &summary_path).internal()?;

        let target = a.out.join(name);
        create_out(&target)?;
        fs::copy(&curves_path, target.join("curves.csv")).internal()?;
        fs::copy(&summary_path, target.join("summary.csv")).internal()?;
        for s in &summary {
            let rows: Vec<&CurveRow> = curves.iter().filter(|c| c.param == s.param).collect();
            write_file(&target.join(format!("{}.svg", s.param)), render_curve(s, &rows))?;
            plots += 1;
        }
    }
    m.write(&a.out).internal()?;
    println!("{} plots from {} rounds", plots, dirs.len());
    Ok(Outcome::Ok)
}
