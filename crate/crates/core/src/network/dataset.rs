//! Frames and the JSON-lines dataset format.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{AggregateError, MaskDoc, MaskGrid};

/// A frame-level feature: a single measurement or a list of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Feature {
    Scalar(f64),
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Object {
    pub features: BTreeMap<String, f64>,
}

/// One time step of one episode, with its ground-truth decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameDoc", into = "FrameDoc")]
pub struct Frame {
    pub episode: u64,
    pub t: u64,
    pub features: BTreeMap<String, Feature>,
    pub objects: Vec<Object>,
    pub masks: BTreeMap<String, MaskGrid>,
    pub label: bool,
}

#[derive(Serialize, Deserialize)]
struct FrameDoc {
    episode: u64,
    t: u64,
    #[serde(default)]
    features: BTreeMap<String, Feature>,
    #[serde(default)]
    objects: Vec<Object>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    masks: BTreeMap<String, MaskDoc>,
    label: bool,
}

impl TryFrom<FrameDoc> for Frame {
    type Error = AggregateError;

    fn try_from(d: FrameDoc) -> Result<Self, Self::Error> {
        let masks = d
            .masks
            .into_iter()
            .map(|(k, m)| Ok((k, MaskGrid::try_from(m)?)))
            .collect::<Result<_, AggregateError>>()?;
        Ok(Frame {
            episode: d.episode,
            t: d.t,
            features: d.features,
            objects: d.objects,
            masks,
            label: d.label,
        })
    }
}

impl From<Frame> for FrameDoc {
    fn from(f: Frame) -> Self {
        FrameDoc {
            episode: f.episode,
            t: f.t,
            features: f.features,
            objects: f.objects,
            masks: f.masks.iter().map(|(k, m)| (k.clone(), MaskDoc::from(m))).collect(),
            label: f.label,
        }
    }
}

impl Frame {
    pub fn new(episode: u64, t: u64, label: bool) -> Self {
        Frame {
            episode,
            t,
            features: BTreeMap::new(),
            objects: Vec::new(),
            masks: BTreeMap::new(),
            label,
        }
    }

    pub fn with_feature(mut self, name: &str, v: f64) -> Self {
        self.features.insert(name.to_string(), Feature::Scalar(v));
        self
    }

    pub fn with_samples(mut self, name: &str, v: Vec<f64>) -> Self {
        self.features.insert(name.to_string(), Feature::Samples(v));
        self
    }

    pub fn with_object(mut self, features: &[(&str, f64)]) -> Self {
        self.objects.push(Object {
            features: features.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        });
        self
    }

    pub fn with_mask(mut self, name: &str, mask: MaskGrid) -> Self {
        self.masks.insert(name.to_string(), mask);
        self
    }

    /// `"episode:t"`, the frame identifier used in exported logs.
    pub fn id(&self) -> String {
        format!("{}:{}", self.episode, self.t)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_jsonl(r: impl BufRead) -> Result<Vec<Frame>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Frame = serde_json::from_str(&line).map_err(|e| DatasetError::Line {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(f);
    }
    Ok(out)
}

pub fn write_jsonl(mut w: impl Write, frames: &[Frame]) -> Result<(), DatasetError> {
    for f in frames {
        serde_json::to_writer(&mut w, f).map_err(|e| DatasetError::Line {
            line: 0,
            msg: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
