use std::collections::{BTreeMap, BTreeSet};

use sdl_core::learner::{tune, tune_round, LearnerConfig};
use sdl_core::network::synth::{perturb, synth_dataset, Perturbation, Scenario};
use sdl_core::network::{
    eval_dataset, eval_episode, parse_network, read_jsonl, sample_network, write_jsonl, EvalError, Frame,
    NetworkError,
};

const THRESHOLD: &str = r#"{
  "params": {"thr": {"value": 5.0, "tol_neg": 2.0, "tol_pos": 2.0, "kind": "real", "lo": -100, "hi": 100}},
  "units": [{"id": "t", "type": "above", "feature": "x", "param": "thr"}],
  "output": "t"
}"#;

fn with_units(params: &str, units: &str, output: &str) -> String {
    format!(r#"{{"params": {{{params}}}, "units": [{units}], "output": "{output}"}}"#)
}

const P: &str = r#""a": {"value": 1.0, "tol_neg": 1, "tol_pos": 1, "kind": "real", "lo": -9, "hi": 9}"#;

#[test]
fn sample_network_parses_and_round_trips() {
    let net = sample_network();
    assert!(net.params().len() >= 20);
    let types: BTreeSet<&str> = net.unit_ids().filter_map(|u| net.unit_type(u)).collect();
    assert_eq!(types.len(), 9, "{types:?}");
    let again = parse_network(&net.to_json()).unwrap();
    assert_eq!(again, net);
}

#[test]
fn unknown_unit_type_is_reported_with_location() {
    let text = with_units(P, r#"{"id": "u", "type": "xor", "inputs": []}"#, "u");
    let err = parse_network(&text).unwrap_err();
    assert!(matches!(err, NetworkError::UnknownType { ref ty, .. } if ty == "xor"), "{err}");
}

#[test]
fn cycles_are_rejected() {
    let units = r#"{"id": "t", "type": "above", "feature": "x", "param": "a"},
                   {"id": "g", "type": "and", "inputs": ["t", "h"]},
                   {"id": "h", "type": "or", "inputs": ["g"]}"#;
    let err = parse_network(&with_units(P, units, "g")).unwrap_err();
    assert!(matches!(err, NetworkError::Cycle(_)), "{err}");
}

#[test]
fn shared_parameters_are_rejected() {
    let units = r#"{"id": "t", "type": "above", "feature": "x", "param": "a"},
                   {"id": "u", "type": "below", "feature": "y", "param": "a"},
                   {"id": "g", "type": "and", "inputs": ["t", "u"]}"#;
    let err = parse_network(&with_units(P, units, "g")).unwrap_err();
    assert!(matches!(err, NetworkError::ParamSharing { n: 2, .. }), "{err}");
}

#[test]
fn unknown_references_are_rejected() {
    let units = r#"{"id": "t", "type": "above", "feature": "x", "param": "zz"}"#;
    assert!(matches!(
        parse_network(&with_units(P, units, "t")).unwrap_err(),
        NetworkError::UnknownParam { .. }
    ));
    let units = r#"{"id": "t", "type": "above", "feature": "x", "param": "a"},
                   {"id": "g", "type": "and", "inputs": ["t", "nope"]}"#;
    assert!(matches!(
        parse_network(&with_units(P, units, "g")).unwrap_err(),
        NetworkError::UnknownInput { .. }
    ));
    let units = r#"{"id": "t", "type": "above", "feature": "x", "param": "a"}"#;
    assert!(matches!(
        parse_network(&with_units(P, units, "q")).unwrap_err(),
        NetworkError::UnknownOutput(_)
    ));
}

#[test]
fn scope_rules_are_enforced() {
    // a count over a frame-level input
    let params = format!(r#"{P}, "n": {{"value": 2, "tol_neg": 1, "tol_pos": 1, "kind": "integer", "lo": 1, "hi": 9}}"#);
    let units = r#"{"id": "t", "type": "above", "feature": "x", "param": "a"},
                   {"id": "c", "type": "count", "input": "t", "param": "n"}"#;
    assert!(matches!(
        parse_network(&with_units(&params, units, "c")).unwrap_err(),
        NetworkError::Scope { .. }
    ));
    // an object-level output
    let units = r#"{"id": "t", "type": "above", "scope": "object", "feature": "x", "param": "a"}"#;
    assert!(parse_network(&with_units(P, units, "t")).is_err());
}

#[test]
fn time_constants_must_be_integers() {
    let params = format!(r#"{P}, "v": {{"value": 2.0, "tol_neg": 1, "tol_pos": 1, "kind": "real", "lo": 1, "hi": 9}}"#);
    let units = r#"{"id": "t", "type": "above", "feature": "x", "param": "a"},
                   {"id": "s", "type": "smooth", "input": "t", "param": "v"}"#;
    assert!(matches!(
        parse_network(&with_units(&params, units, "s")).unwrap_err(),
        NetworkError::ParamKindMismatch { .. }
    ));
}

#[test]
fn substitution_respects_bounds_and_kind() {
    let net = sample_network();
    let m = net.substitute_param("hold_m", 12.4).unwrap();
    assert_eq!(m.param(m.param_id("hold_m").unwrap()).value, 12.0);
    assert!(matches!(
        net.substitute_param("hold_m", 1000.0),
        Err(NetworkError::SubstituteOutOfBounds { .. })
    ));
    assert!(matches!(net.substitute_param("nope", 1.0), Err(NetworkError::NoSuchParam(_))));
}

#[test]
fn missing_features_are_errors() {
    let net = parse_network(THRESHOLD).unwrap();
    let frames = vec![Frame::new(0, 0, false)];
    let err = eval_dataset(&net, &frames).unwrap_err();
    assert!(matches!(err, EvalError::MissingFeature { .. }), "{err}");
}

#[test]
fn split_and_gapped_episodes_are_errors() {
    let net = parse_network(THRESHOLD).unwrap();
    let f = |e, t| Frame::new(e, t, false).with_feature("x", 1.0);
    assert!(matches!(
        eval_dataset(&net, &[f(0, 0), f(1, 0), f(0, 1)]),
        Err(EvalError::EpisodeSplit(0))
    ));
    assert!(matches!(
        eval_dataset(&net, &[f(0, 0), f(0, 2)]),
        Err(EvalError::NonContiguous { .. })
    ));
}

fn small_scenario() -> Scenario {
    Scenario {
        episodes: 4,
        frames_per_episode: 400,
        ..Scenario::default()
    }
}

#[test]
fn synthetic_data_is_seed_deterministic() {
    let net = sample_network();
    let a = synth_dataset(&net, &small_scenario(), 3).unwrap();
    let b = synth_dataset(&net, &small_scenario(), 3).unwrap();
    let c = synth_dataset(&net, &small_scenario(), 4).unwrap();
    assert_eq!(a.frames, b.frames);
    assert_ne!(a.frames, c.frames);
    // reference labels reproduce exactly
    let log = eval_dataset(&net, &a.frames).unwrap();
    assert_eq!(log.summary(&Default::default()).errors(), 0);
}

#[test]
fn datasets_round_trip_through_jsonl() {
    let net = sample_network();
    let out = synth_dataset(&net, &Scenario { episodes: 1, frames_per_episode: 30, ..small_scenario() }, 1).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &out.frames).unwrap();
    let back = read_jsonl(&buf[..]).unwrap();
    assert_eq!(back, out.frames);
}

#[test]
fn perturbations_stay_within_tolerance() {
    let net = sample_network();
    let moved = perturb(&net, &[Perturbation { param: "speed_min".into(), shift: 0.5 }]).unwrap();
    assert_eq!(moved.param(moved.param_id("speed_min").unwrap()).value, 29.0);
    assert!(perturb(&net, &[Perturbation { param: "speed_min".into(), shift: 1.5 }]).is_err());
}

#[test]
fn attributed_decisions_flip_on_a_small_run() {
    let net = sample_network();
    let out = synth_dataset(&net, &small_scenario(), 9).unwrap();
    let log = eval_dataset(&net, &out.frames).unwrap();
    let mut groups: BTreeMap<(u64, u32, u64), Vec<usize>> = BTreeMap::new();
    for e in log.iter() {
        if let Some(a) = e.attribution {
            groups.entry((e.episode, a.param.0, a.alternate.to_bits())).or_default().push(e.index);
        }
    }
    assert!(!groups.is_empty());
    let fpe = small_scenario().frames_per_episode as usize;
    for ((ep, p, alt), idx) in groups {
        let moved = net.substitute(sdl_core::ParamId(p), f64::from_bits(alt)).unwrap();
        let start = ep as usize * fpe;
        let relog = eval_episode(&moved, &out.frames[start..start + fpe], start).unwrap();
        for i in idx {
            assert_ne!(relog[i - start].decision, log.entries[i].decision, "frame {i}");
        }
    }
}

#[test]
fn zero_error_start_returns_round_zero() {
    let net = sample_network();
    let out = synth_dataset(&net, &small_scenario(), 5).unwrap();
    let r = tune(&net, &out.frames, &LearnerConfig::default()).unwrap();
    assert_eq!(r.best_round, 0);
    assert!(r.history.is_empty());
    assert_eq!(r.best_network, net);
}

#[test]
fn shifted_threshold_moves_toward_the_reference() {
    let net = sample_network();
    let sc = Scenario {
        perturb: vec![Perturbation { param: "speed_min".into(), shift: 0.75 }],
        episodes: 8,
        frames_per_episode: 800,
        ..Scenario::default()
    };
    let out = synth_dataset(&net, &sc, 21).unwrap();
    let start = out.perturbed.unwrap();
    let id = start.param_id("speed_min").unwrap();
    let (report, next) = tune_round(&start, &out.frames, &LearnerConfig::default(), &BTreeSet::new()).unwrap();
    let before = start.param(id).value;
    let after = next.param(id).value;
    assert!(after < before, "speed_min {before} -> {after}");
    assert!(report.after.weighted_error < report.before.weighted_error);
}

#[test]
fn vetoed_parameters_are_left_alone() {
    let net = sample_network();
    let sc = Scenario {
        perturb: vec![Perturbation { param: "speed_min".into(), shift: 0.75 }],
        ..small_scenario()
    };
    let out = synth_dataset(&net, &sc, 21).unwrap();
    let start = out.perturbed.unwrap();
    let all: BTreeSet<_> = start.param_ids().collect();
    let (report, next) = tune_round(&start, &out.frames, &LearnerConfig::default(), &all).unwrap();
    assert!(report.updates.is_empty());
    assert_eq!(next, start);
    assert_eq!(report.after, report.before);
}

#[test]
fn max_rounds_is_respected() {
    let net = sample_network();
    let sc = Scenario {
        perturb: vec![
            Perturbation { param: "speed_min".into(), shift: 0.75 },
            Perturbation { param: "ambient_max".into(), shift: -0.6 },
        ],
        ..small_scenario()
    };
    let out = synth_dataset(&net, &sc, 2).unwrap();
    let start = out.perturbed.unwrap();
    let cfg = LearnerConfig { max_rounds: 1, ..Default::default() };
    let r = tune(&start, &out.frames, &cfg).unwrap();
    assert_eq!(r.history.len(), 1);
    assert!(r.best_error <= r.initial.weighted_error);
}
