//! Workbench HTTP/JSON API over a state directory.
//!
//! The directory holds `network.json`, `data.jsonl`, an optional `learner.json`,
//! and `journal.jsonl`, to which every mutation is appended (and synced) before
//! it is acknowledged. Opening a directory replays its journal.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use anyhow::{anyhow, bail, Context};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use sdl_core::learner::{
    accumulate, benefit_curve, propose_tolerance, propose_update, tune_round, BenefitCurve, LearnerConfig,
    ParamUpdate, ValueProposal,
};
use sdl_core::network::{eval_dataset, Class, DecisionLog, ErrorSummary, Feature, Frame, NetworkSpec};
use sdl_core::{ParamId, ParamSpec};

use crate::commands::{load_config, load_frames, load_network};

pub const JOURNAL_FILE: &str = "journal.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum JournalEntry {
    Set {
        param: String,
        #[serde(flatten)]
        edit: ParamEdit,
    },
    Round {
        updates: Vec<ParamUpdate>,
        before: ErrorSummary,
        after: ErrorSummary,
        vetoed: Vec<String>,
    },
    Rollback {
        to: u32,
        before: ErrorSummary,
        after: ErrorSummary,
    },
}

/// Body of `POST /params/{id}`: any subset of a manual edit and the veto flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEdit {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_neg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_pos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub veto: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: u32,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rollback_to: Option<u32>,
    pub before: ErrorSummary,
    pub after: ErrorSummary,
    pub updates: Vec<ParamUpdate>,
    pub vetoed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proposal {
    pub value: Option<ValueProposal>,
    pub tolerance: Option<(f64, f64)>,
}

/// Everything derived from evaluating the current network.
#[derive(Debug, Clone)]
struct View {
    log: DecisionLog,
    summary: ErrorSummary,
    curves: Vec<BenefitCurve>,
    proposals: Vec<Proposal>,
}

pub struct Session {
    dir: PathBuf,
    frames: Vec<Frame>,
    cfg: LearnerConfig,
    net: NetworkSpec,
    vetoes: BTreeSet<ParamId>,
    /// Network at each round; index 0 is the starting network.
    snapshots: Vec<NetworkSpec>,
    history: Vec<HistoryEntry>,
    view: View,
    journal: Option<File>,
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, msg) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (code, Json(serde_json::json!({ "error": msg }))).into_response()
    }
}

fn view_of(net: &NetworkSpec, frames: &[Frame], cfg: &LearnerConfig) -> anyhow::Result<View> {
    let log = eval_dataset(net, frames)?;
    let summary = log.summary(&cfg.weights);
    let hists = accumulate(&log, net)?;
    let curves: Vec<BenefitCurve> = hists.entries.iter().map(|h| benefit_curve(h, &cfg.weights)).collect();
    let proposals = curves
        .iter()
        .map(|c| {
            let p = net.param(c.param);
            let value = propose_update(c, p, cfg);
            let tolerance = value.as_ref().and_then(|_| propose_tolerance(c, p, cfg));
            Proposal { value, tolerance }
        })
        .collect();
    Ok(View {
        log,
        summary,
        curves,
        proposals,
    })
}

impl Session {
    /// Load a state directory and replay its journal.
    pub fn open(dir: &Path) -> anyhow::Result<Session> {
        let net = load_network(&dir.join("network.json")).map_err(|e| anyhow!("{e}"))?;
        let frames = load_frames(&dir.join("data.jsonl")).map_err(|e| anyhow!("{e}"))?;
        let cfg_path = dir.join("learner.json");
        let cfg = load_config(cfg_path.is_file().then_some(cfg_path.as_path())).map_err(|e| anyhow!("{e}"))?;
        let net = match cfg.bins_per_side {
            Some(b) if b != net.bins_per_side() => net.with_bins_per_side(b),
            _ => net,
        };
        let mut s = Session {
            dir: dir.to_path_buf(),
            view: view_of(&net, &frames, &cfg)?,
            frames,
            cfg,
            snapshots: vec![net.clone()],
            net,
            vetoes: BTreeSet::new(),
            history: Vec::new(),
            journal: None,
        };
        let jpath = dir.join(JOURNAL_FILE);
        if jpath.is_file() {
            let f = File::open(&jpath)?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: JournalEntry = serde_json::from_str(&line)
                    .with_context(|| format!("corrupt journal {} line {}", jpath.display(), i + 1))?;
                s.apply(&e)
                    .with_context(|| format!("journal {} line {} does not replay", jpath.display(), i + 1))?;
            }
            s.refresh()?;
        }
        s.journal = Some(OpenOptions::new().create(true).append(true).open(&jpath)?);
        Ok(s)
    }

    fn refresh(&mut self) -> anyhow::Result<()> {
        self.view = view_of(&self.net, &self.frames, &self.cfg)?;
        Ok(())
    }

    fn record(&mut self, e: &JournalEntry) -> anyhow::Result<()> {
        if let Some(j) = &mut self.journal {
            let mut line = serde_json::to_string(e)?;
            line.push('\n');
            j.write_all(line.as_bytes())?;
            j.sync_data()?;
        }
        Ok(())
    }

    fn param_id(&self, name: &str) -> Result<ParamId, ApiError> {
        self.net
            .param_id(name)
            .ok_or_else(|| ApiError::NotFound(format!("unknown parameter `{name}`")))
    }

    fn names(&self, ids: impl IntoIterator<Item = ParamId>) -> Vec<String> {
        ids.into_iter().map(|id| self.net.param_name(id).to_string()).collect()
    }

    fn round(&self) -> u32 {
        (self.snapshots.len() - 1) as u32
    }

    /// Apply a journal entry to the in-memory state (without re-evaluating).
    fn apply(&mut self, e: &JournalEntry) -> anyhow::Result<()> {
        match e {
            JournalEntry::Set { param, edit } => {
                let id = self
                    .net
                    .param_id(param)
                    .ok_or_else(|| anyhow!("unknown parameter `{param}`"))?;
                let mut spec: ParamSpec = self.net.param(id).clone();
                if let Some(v) = edit.value {
                    spec.value = spec.snap(v);
                    if !spec.in_bounds(spec.value) {
                        bail!("value {v} is outside [{}, {}]", spec.lo, spec.hi);
                    }
                }
                if let Some(t) = edit.tol_neg {
                    spec.tol_neg = t;
                }
                if let Some(t) = edit.tol_pos {
                    spec.tol_pos = t;
                }
                self.net = self.net.with_param_spec(id, spec)?;
                match edit.veto {
                    Some(true) => {
                        self.vetoes.insert(id);
                    }
                    Some(false) => {
                        self.vetoes.remove(&id);
                    }
                    None => {}
                }
            }
            JournalEntry::Round {
                updates,
                before,
                after,
                vetoed,
            } => {
                let mut next = self.net.clone();
                for u in updates {
                    let mut spec = next.param(u.param).clone();
                    spec.value = u.new_value;
                    (spec.tol_neg, spec.tol_pos) = u.new_tol;
                    next = next.with_param_spec(u.param, spec)?;
                }
                self.net = next;
                self.snapshots.push(self.net.clone());
                self.history.push(HistoryEntry {
                    round: self.round(),
                    kind: "round".into(),
                    rollback_to: None,
                    before: *before,
                    after: *after,
                    updates: updates.clone(),
                    vetoed: vetoed.clone(),
                });
            }
            JournalEntry::Rollback { to, before, after } => {
                let target = self
                    .snapshots
                    .get(*to as usize)
                    .ok_or_else(|| anyhow!("no round {to}"))?
                    .clone();
                self.net = target;
                self.snapshots.push(self.net.clone());
                self.history.push(HistoryEntry {
                    round: self.round(),
                    kind: "rollback".into(),
                    rollback_to: Some(*to),
                    before: *before,
                    after: *after,
                    updates: Vec::new(),
                    vetoed: Vec::new(),
                });
            }
        }
        Ok(())
    }

    pub fn edit_param(&mut self, name: &str, edit: ParamEdit) -> Result<ParamView, ApiError> {
        self.param_id(name)?;
        let e = JournalEntry::Set {
            param: name.to_string(),
            edit,
        };
        let saved = (self.net.clone(), self.vetoes.clone());
        if let Err(err) = self.apply(&e) {
            (self.net, self.vetoes) = saved;
            return Err(ApiError::BadRequest(format!("{err:#}")));
        }
        if let Err(err) = self.record(&e) {
            (self.net, self.vetoes) = saved;
            return Err(ApiError::Internal(err.to_string()));
        }
        self.refresh().map_err(|e| ApiError::Internal(e.to_string()))?;
        self.param_view(name, false)
    }

    pub fn run_round(&mut self) -> Result<HistoryEntry, ApiError> {
        let (report, _) = tune_round(&self.net, &self.frames, &self.cfg, &self.vetoes)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        let e = JournalEntry::Round {
            updates: report.updates,
            before: report.before,
            after: report.after,
            vetoed: self.names(report.vetoed),
        };
        self.record(&e).map_err(|e| ApiError::Internal(e.to_string()))?;
        self.apply(&e).map_err(|e| ApiError::Internal(e.to_string()))?;
        self.refresh().map_err(|e| ApiError::Internal(e.to_string()))?;
        Ok(self.history.last().expect("round recorded").clone())
    }

    pub fn rollback(&mut self, to: u32) -> Result<StateView, ApiError> {
        if to > self.round() {
            return Err(ApiError::NotFound(format!("no round {to}")));
        }
        let target = view_of(&self.snapshots[to as usize], &self.frames, &self.cfg)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        let e = JournalEntry::Rollback {
            to,
            before: self.view.summary,
            after: target.summary,
        };
        self.record(&e).map_err(|e| ApiError::Internal(e.to_string()))?;
        self.apply(&e).map_err(|e| ApiError::Internal(e.to_string()))?;
        self.view = target;
        Ok(self.state_view())
    }

    pub fn network(&self) -> &NetworkSpec {
        &self.net
    }

    pub fn state_view(&self) -> StateView {
        StateView {
            round: self.round(),
            state_dir: self.dir.display().to_string(),
            weights: (self.cfg.weights.w_fp, self.cfg.weights.w_fn),
            error: self.view.summary,
            vetoes: self.names(self.vetoes.iter().copied()),
            params: self.net.params().len(),
            history: self.history.clone(),
        }
    }

    pub fn param_view(&self, name: &str, with_curve: bool) -> Result<ParamView, ApiError> {
        let id = self.param_id(name)?;
        Ok(ParamView {
            id: name.to_string(),
            index: id.0,
            owner: self.net.owner_of(id).to_string(),
            spec: self.net.param(id).clone(),
            vetoed: self.vetoes.contains(&id),
            proposal: self.view.proposals[id.index()].clone(),
            curve: with_curve.then(|| self.view.curves[id.index()].clone()),
        })
    }

    pub fn frames_view(&self, q: &FrameQuery) -> Result<FramesView, ApiError> {
        let class: Option<Class> = match &q.class {
            Some(c) => Some(
                c.parse()
                    .map_err(|_| ApiError::BadRequest(format!("unknown class `{c}`")))?,
            ),
            None => None,
        };
        let matching: Vec<_> = self
            .view
            .log
            .iter()
            .filter(|e| class.is_none_or(|c| e.class == c))
            .collect();
        let offset = q.offset.unwrap_or(0);
        let limit = q.limit.unwrap_or(100).min(10_000);
        let frames = matching
            .iter()
            .skip(offset)
            .take(limit)
            .map(|e| {
                let f = &self.frames[e.index];
                FrameView {
                    index: e.index,
                    id: f.id(),
                    decision: e.decision,
                    label: e.label,
                    class: e.class.as_str().to_string(),
                    score: e.score,
                    suspect: e.attribution.map(|a| self.net.param_name(a.param).to_string()),
                    alternate: e.attribution.map(|a| a.alternate),
                    margin: e.attribution.map(|a| a.margin),
                    features: f
                        .features
                        .iter()
                        .filter_map(|(k, v)| match v {
                            Feature::Scalar(x) => Some((k.clone(), *x)),
                            Feature::Samples(_) => None,
                        })
                        .collect(),
                    objects: f.objects.len(),
                }
            })
            .collect();
        Ok(FramesView {
            total: matching.len(),
            offset,
            frames,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StateView {
    pub round: u32,
    pub state_dir: String,
    pub weights: (f64, f64),
    pub error: ErrorSummary,
    pub vetoes: Vec<String>,
    pub params: usize,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamView {
    pub id: String,
    pub index: u32,
    pub owner: String,
    pub spec: ParamSpec,
    pub vetoed: bool,
    pub proposal: Proposal,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<BenefitCurve>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FrameQuery {
    pub class: Option<String>,
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameView {
    pub index: usize,
    pub id: String,
    pub decision: bool,
    pub label: bool,
    pub class: String,
    pub score: f64,
    pub suspect: Option<String>,
    pub alternate: Option<f64>,
    pub margin: Option<f64>,
    pub features: std::collections::BTreeMap<String, f64>,
    pub objects: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FramesView {
    pub total: usize,
    pub offset: usize,
    pub frames: Vec<FrameView>,
}

pub type Shared = Arc<RwLock<Session>>;

fn read(s: &Shared) -> std::sync::RwLockReadGuard<'_, Session> {
    s.read().unwrap_or_else(|e| e.into_inner())
}

/// Run a mutation off the async workers; the write lock serializes mutations.
async fn mutate<T: Send + 'static>(
    s: Shared,
    f: impl FnOnce(&mut Session) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || {
        let mut guard = s.write().unwrap_or_else(|e| e.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn get_state(State(s): State<Shared>) -> Json<StateView> {
    Json(read(&s).state_view())
}

async fn get_params(State(s): State<Shared>) -> Result<Json<Vec<ParamView>>, ApiError> {
    let g = read(&s);
    let names: Vec<String> = g.net.params().keys().cloned().collect();
    names
        .iter()
        .map(|n| g.param_view(n, true))
        .collect::<Result<_, _>>()
        .map(Json)
}

async fn get_curve(State(s): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<ParamView>, ApiError> {
    read(&s).param_view(&id, true).map(Json)
}

async fn post_param(
    State(s): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Json(edit): Json<ParamEdit>,
) -> Result<Json<ParamView>, ApiError> {
    mutate(s, move |g| g.edit_param(&id, edit)).await.map(Json)
}

async fn post_round(State(s): State<Shared>) -> Result<Json<HistoryEntry>, ApiError> {
    mutate(s, |g| g.run_round()).await.map(Json)
}

async fn post_rollback(State(s): State<Shared>, UrlPath(round): UrlPath<u32>) -> Result<Json<StateView>, ApiError> {
    mutate(s, move |g| g.rollback(round)).await.map(Json)
}

async fn get_frames(State(s): State<Shared>, Query(q): Query<FrameQuery>) -> Result<Json<FramesView>, ApiError> {
    read(&s).frames_view(&q).map(Json)
}

async fn get_network(State(s): State<Shared>) -> Response {
    (
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        read(&s).net.to_json(),
    )
        .into_response()
}

pub fn router(s: Shared) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/network", get(get_network))
        .route("/params", get(get_params))
        .route("/params/{id}", post(post_param))
        .route("/params/{id}/curve", get(get_curve))
        .route("/round", post(post_round))
        .route("/rollback/{round}", post(post_rollback))
        .route("/frames", get(get_frames))
        .with_state(s)
}

/// Serve on localhost until interrupted.
pub async fn serve(dir: &Path, port: u16) -> anyhow::Result<()> {
    if !dir.is_dir() {
        bail!("state directory {} does not exist", dir.display());
    }
    let session = Session::open(dir)?;
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
        .await
        .with_context(|| format!("cannot bind 127.0.0.1:{port}"))?;
    eprintln!("serving {} on http://{}", dir.display(), listener.local_addr()?);
    axum::serve(listener, router(Arc::new(RwLock::new(session))))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// Copy the inputs a session needs into a fresh state directory.
pub fn init_state(dir: &Path, net: &Path, data: &Path, config: Option<&Path>) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let copy = |from: &Path, to: &str| {
        fs::copy(from, dir.join(to)).with_context(|| format!("cannot copy {}", from.display()))
    };
    copy(net, "network.json")?;
    copy(data, "data.jsonl")?;
    if let Some(c) = config {
        copy(c, "learner.json")?;
    }
    Ok(())
}
