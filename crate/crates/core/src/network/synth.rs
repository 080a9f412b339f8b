//! Seeded synthetic scenarios with ground truth produced by a reference network.
//!
//! Every leaf unit (scalar threshold, fraction test, region test) is driven by a
//! latent "pass margin" `z` measured in tolerance widths: `z > 0` passes, `z < 0`
//! fails, `|z| < 1` lands inside the tolerance band. Frame-level leaves follow
//! AR(1) processes over an episode. Object-level leaves come from a few
//! persistent "real" object tracks that appear while a latent presence state is
//! on, plus independent distractor objects.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::MaskGrid;
use crate::network::dataset::{Feature, Frame, Object};
use crate::network::eval::{eval_episode, EvalError};
use crate::network::spec::{NetworkError, NetworkSpec, Op, Scope};
use crate::param::ParamSpec;

/// Distribution of a latent pass margin, in tolerance widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Margin {
    pub mean: f64,
    pub sd: f64,
    /// Frame-to-frame correlation; 0 draws independently every frame.
    #[serde(default)]
    pub rho: f64,
}

impl Margin {
    fn start(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.mean + self.sd * normal(rng)
    }

    fn step(&self, prev: f64, rng: &mut ChaCha8Rng) -> f64 {
        let rho = self.rho.clamp(0.0, 0.999_999);
        self.mean + rho * (prev - self.mean) + self.sd * (1.0 - rho * rho).sqrt() * normal(rng)
    }
}

/// A requested shift of one parameter, in units of its tolerance on the side
/// of the shift (so `0.5` moves halfway to the upper tolerance edge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub param: String,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub episodes: u32,
    pub frames_per_episode: u32,
    /// Probability that a ground-truth label is flipped.
    pub label_noise: f64,
    /// Per-frame probability that an absent target appears.
    pub presence_on: f64,
    /// Per-frame probability that a present target disappears.
    pub presence_off: f64,
    /// Number of persistent object tracks shown while the target is present.
    pub real_objects: u32,
    /// Probability that a real object is missing from a single frame.
    pub dropout: f64,
    /// Maximum number of distractor objects per frame (uniform 0..=max).
    pub distractors: u32,
    pub real: Margin,
    pub distractor: Margin,
    pub frame: Margin,
    /// Per-unit margin overrides keyed by leaf unit id.
    pub units: BTreeMap<String, Margin>,
    /// Samples per frame for fraction units.
    pub samples_per_frame: u32,
    pub mask_width: u32,
    pub mask_height: u32,
    /// Fill probability of the strips just outside region bounds.
    pub edge_density: f64,
    pub perturb: Vec<Perturbation>,
    /// Optional path to the reference network, resolved by the caller.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network: Option<String>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            episodes: 50,
            frames_per_episode: 2000,
            label_noise: 0.0,
            presence_on: 0.01,
            presence_off: 0.01,
            real_objects: 2,
            dropout: 0.05,
            distractors: 3,
            real: Margin {
                mean: 1.2,
                sd: 0.8,
                rho: 0.9,
            },
            distractor: Margin {
                mean: 0.5,
                sd: 1.5,
                rho: 0.0,
            },
            frame: Margin {
                mean: 1.5,
                sd: 1.0,
                rho: 0.97,
            },
            units: BTreeMap::new(),
            samples_per_frame: 100,
            mask_width: 64,
            mask_height: 32,
            edge_density: 0.3,
            perturb: Vec::new(),
            network: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("perturbation of `{param}` by {shift} tolerances is outside the tolerance band")]
    OutsideTolerance { param: String, shift: f64 },
    #[error("perturbation of `{param}` rounds to no change")]
    NoChange { param: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub frames: Vec<Frame>,
    pub reference: NetworkSpec,
    pub perturbed: Option<NetworkSpec>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Apply a list of perturbations to a network.
pub fn perturb(net: &NetworkSpec, list: &[Perturbation]) -> Result<NetworkSpec, SynthError> {
    let mut out = net.clone();
    for pt in list {
        let id = out
            .param_id(&pt.param)
            .ok_or_else(|| NetworkError::NoSuchParam(pt.param.clone()))?;
        if !pt.shift.is_finite() || pt.shift.abs() > 1.0 {
            return Err(SynthError::OutsideTolerance {
                param: pt.param.clone(),
                shift: pt.shift,
            });
        }
        let p = out.param(id).clone();
        let tol = if pt.shift >= 0.0 { p.tol_pos } else { p.tol_neg };
        let v = p.snap(p.value + pt.shift * tol);
        if (v - p.value).abs() > tol {
            return Err(SynthError::OutsideTolerance {
                param: pt.param.clone(),
                shift: pt.shift,
            });
        }
        if v == p.value && pt.shift != 0.0 {
            return Err(SynthError::NoChange {
                param: pt.param.clone(),
            });
        }
        out = out.substitute(id, v)?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum LeafKind {
    Above { feature: String },
    Below { feature: String },
    Fraction { feature: String, cut: f64 },
    Region { mask: String, bounds: [ParamSpec; 4] },
}

#[derive(Debug, Clone)]
struct Leaf {
    kind: LeafKind,
    param: ParamSpec,
    margin: Margin,
}

impl Leaf {
    /// Feature value placing this leaf at pass margin `z`.
    fn scalar(&self, z: f64) -> f64 {
        let p = &self.param;
        match self.kind {
            LeafKind::Above { .. } => {
                p.value + z * if z >= 0.0 { p.tol_pos } else { p.tol_neg }
            }
            LeafKind::Below { .. } => {
                p.value - z * if z >= 0.0 { p.tol_neg } else { p.tol_pos }
            }
            _ => unreachable!("scalar leaf"),
        }
    }

    fn target(&self, z: f64) -> f64 {
        let p = &self.param;
        p.value + z * if z >= 0.0 { p.tol_pos } else { p.tol_neg }
    }
}

fn collect_leaves(net: &NetworkSpec, sc: &Scenario) -> (Vec<Leaf>, Vec<Leaf>) {
    let mut obj = Vec::new();
    let mut frame = Vec::new();
    for u in &net.units {
        let (kind, param) = match &u.op {
            Op::Above { feature, param } => (
                LeafKind::Above {
                    feature: feature.clone(),
                },
                *param,
            ),
            Op::Below { feature, param } => (
                LeafKind::Below {
                    feature: feature.clone(),
                },
                *param,
            ),
            Op::Fraction {
                feature,
                cut,
                param,
            } => (
                LeafKind::Fraction {
                    feature: feature.clone(),
                    cut: *cut,
                },
                *param,
            ),
            Op::Region {
                mask,
                bounds,
                param,
            } => (
                LeafKind::Region {
                    mask: mask.clone(),
                    bounds: bounds.map(|b| net.param(b).clone()),
                },
                *param,
            ),
            _ => continue,
        };
        let default = if u.scope == Scope::Object {
            sc.real
        } else {
            sc.frame
        };
        let leaf = Leaf {
            kind,
            param: net.param(param).clone(),
            margin: sc.units.get(&u.id).copied().unwrap_or(default),
        };
        if u.scope == Scope::Object {
            obj.push(leaf);
        } else {
            frame.push(leaf);
        }
    }
    (obj, frame)
}

/// Scalar features from leaf margins; a feature read by several leaves takes
/// its value from the most binding (smallest margin) one.
fn scalar_features<'a>(leaves: &'a [Leaf], zs: &[f64]) -> BTreeMap<&'a str, f64> {
    let mut best: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (leaf, &z) in leaves.iter().zip(zs) {
        let f = match &leaf.kind {
            LeafKind::Above { feature } | LeafKind::Below { feature } => feature.as_str(),
            _ => continue,
        };
        let v = leaf.scalar(z);
        best.entry(f)
            .and_modify(|e| {
                if z < e.0 {
                    *e = (z, v)
                }
            })
            .or_insert((z, v));
    }
    best.into_iter().map(|(k, (_, v))| (k, v)).collect()
}

fn round_feature(v: f64) -> f64 {
    // keep the dataset compact and exactly reproducible through JSON
    (v * 1e4).round() / 1e4
}

fn region_mask(
    leaf: &Leaf,
    bounds: &[ParamSpec; 4],
    z: f64,
    sc: &Scenario,
    rng: &mut ChaCha8Rng,
) -> MaskGrid {
    let (w, h) = (sc.mask_width as usize, sc.mask_height as usize);
    let mut bits = vec![false; w * h];
    let clampu = |v: f64, max: usize| (v.max(0.0) as usize).min(max);
    let x0 = clampu(bounds[0].value, w);
    let x1 = clampu(bounds[1].value, w);
    let y0 = clampu(bounds[2].value, h);
    let y1 = clampu(bounds[3].value, h);
    let area = (x1.saturating_sub(x0)) * (y1.saturating_sub(y0));
    let target = (leaf.target(z).round().max(0.0) as usize).min(area);
    let rw = x1.saturating_sub(x0);
    if area > 0 {
        for cell in sample_indices(rng, area, target).into_iter() {
            let (dx, dy) = (cell % rw, cell / rw);
            bits[(y0 + dy) * w + x0 + dx] = true;
        }
    }
    // strips just outside each edge so that moving a bound has something to find
    let strip = |tol: f64| tol.ceil() as usize + 1;
    let mut fill = |xa: usize, xb: usize, ya: usize, yb: usize, rng: &mut ChaCha8Rng| {
        for y in ya..yb.min(h) {
            for x in xa..xb.min(w) {
                if rng.random::<f64>() < sc.edge_density {
                    bits[y * w + x] = true;
                }
            }
        }
    };
    fill(x0.saturating_sub(strip(bounds[0].tol_neg)), x0, y0, y1, rng);
    fill(x1, x1 + strip(bounds[1].tol_pos), y0, y1, rng);
    fill(x0, x1, y0.saturating_sub(strip(bounds[2].tol_neg)), y0, rng);
    fill(x0, x1, y1, y1 + strip(bounds[3].tol_pos), rng);
    MaskGrid::new(w, h, bits).expect("sizes agree")
}

fn fraction_samples(leaf: &Leaf, cut: f64, z: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let pct = leaf.target(z).clamp(0.0, 100.0);
    let below = ((pct * n as f64 / 100.0).round() as usize).min(n);
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let off = 1.0 + 40.0 * rng.random::<f64>();
            round_feature(if i < below { cut - off } else { cut + off })
        })
        .collect();
    // deterministic shuffle
    for i in (1..out.len()).rev() {
        let j = rng.random_range(0..=i);
        out.swap(i, j);
    }
    out
}

fn episode_seed(seed: u64, episode: u64) -> u64 {
    // splitmix64 over (seed, episode)
    let mut x = seed ^ episode.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn gen_episode(
    sc: &Scenario,
    obj_leaves: &[Leaf],
    frame_leaves: &[Leaf],
    episode: u64,
    seed: u64,
) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed, episode));
    let mut present = rng.random::<f64>() < sc.presence_on / (sc.presence_on + sc.presence_off).max(1e-12);
    let mut frame_z: Vec<f64> = frame_leaves.iter().map(|l| l.margin.start(&mut rng)).collect();
    let mut tracks: Vec<Vec<f64>> = (0..sc.real_objects)
        .map(|_| obj_leaves.iter().map(|l| l.margin.start(&mut rng)).collect())
        .collect();

    let mut frames = Vec::with_capacity(sc.frames_per_episode as usize);
    for t in 0..sc.frames_per_episode as u64 {
        if t > 0 {
            let flip = if present { sc.presence_off } else { sc.presence_on };
            if rng.random::<f64>() < flip {
                present = !present;
            }
            for (z, leaf) in frame_z.iter_mut().zip(frame_leaves) {
                *z = leaf.margin.step(*z, &mut rng);
            }
            for track in tracks.iter_mut() {
                for (z, leaf) in track.iter_mut().zip(obj_leaves) {
                    *z = leaf.margin.step(*z, &mut rng);
                }
            }
        }
        let mut frame = Frame::new(episode, t, false);

        for (name, v) in scalar_features(frame_leaves, &frame_z) {
            frame.features.insert(name.to_string(), Feature::Scalar(round_feature(v)));
        }
        for (leaf, &z) in frame_leaves.iter().zip(&frame_z) {
            match &leaf.kind {
                LeafKind::Fraction { feature, cut } => {
                    let s = fraction_samples(leaf, *cut, z, sc.samples_per_frame as usize, &mut rng);
                    frame.features.insert(feature.clone(), Feature::Samples(s));
                }
                LeafKind::Region { mask, bounds } => {
                    let m = region_mask(leaf, bounds, z, sc, &mut rng);
                    frame.masks.insert(mask.clone(), m);
                }
                _ => {}
            }
        }

        if present {
            for track in &tracks {
                if rng.random::<f64>() < sc.dropout {
                    continue;
                }
                frame.objects.push(object_from(obj_leaves, track));
            }
        }
        let n_dis = if sc.distractors > 0 {
            rng.random_range(0..=sc.distractors)
        } else {
            0
        };
        for _ in 0..n_dis {
            let zs: Vec<f64> = obj_leaves
                .iter()
                .map(|_| sc.distractor.mean + sc.distractor.sd * normal(&mut rng))
                .collect();
            frame.objects.push(object_from(obj_leaves, &zs));
        }
        frames.push(frame);
    }
    frames
}

fn object_from(leaves: &[Leaf], zs: &[f64]) -> Object {
    Object {
        features: scalar_features(leaves, zs)
            .into_iter()
            .map(|(k, v)| (k.to_string(), round_feature(v)))
            .collect(),
    }
}

/// Generate a labeled dataset from `reference`, plus the perturbed network
/// requested by the scenario (if any).
pub fn synth_dataset(
    reference: &NetworkSpec,
    sc: &Scenario,
    seed: u64,
) -> Result<SynthOutput, SynthError> {
    if sc.frames_per_episode == 0 {
        return Err(SynthError::Scenario("frames_per_episode must be positive".into()));
    }
    if !(0.0..=1.0).contains(&sc.label_noise) {
        return Err(SynthError::Scenario("label_noise must lie in [0, 1]".into()));
    }
    let perturbed = if sc.perturb.is_empty() {
        None
    } else {
        Some(perturb(reference, &sc.perturb)?)
    };
    let (obj_leaves, frame_leaves) = collect_leaves(reference, sc);

    let episodes: Vec<Vec<Frame>> = (0..sc.episodes as u64)
        .into_par_iter()
        .map(|e| -> Result<Vec<Frame>, SynthError> {
            let mut frames = gen_episode(sc, &obj_leaves, &frame_leaves, e, seed);
            let log = eval_episode(reference, &frames, 0)?;
            let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(seed ^ 0x5A5A_5A5A, e));
            for (f, entry) in frames.iter_mut().zip(log) {
                let noisy = sc.label_noise > 0.0 && rng.random::<f64>() < sc.label_noise;
                f.label = entry.decision ^ noisy;
            }
            Ok(frames)
        })
        .collect::<Result<_, _>>()?;

    Ok(SynthOutput {
        frames: episodes.into_iter().flatten().collect(),
        reference: reference.clone(),
        perturbed,
    })
}
