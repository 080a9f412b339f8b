use std::collections::BTreeSet;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};

use sdl_core::learner::{accumulate, benefit_curve, tune_round, ClassWeights, LearnerConfig};
use sdl_core::network::synth::{synth_dataset, Perturbation, Scenario};
use sdl_core::{eval_dataset, sample_network, Frame, NetworkSpec};

fn fixture() -> (NetworkSpec, Vec<Frame>) {
    let sc = Scenario {
        episodes: 10,
        frames_per_episode: 1000,
        perturb: vec![
            Perturbation {
                param: "speed_min".into(),
                shift: 0.6,
            },
            Perturbation {
                param: "red_min".into(),
                shift: 0.75,
            },
        ],
        ..Scenario::default()
    };
    let out = synth_dataset(&sample_network(), &sc, 7).expect("synthesis");
    (out.perturbed.expect("perturbed network"), out.frames)
}

fn engine(c: &mut Criterion) {
    let (net, frames) = fixture();
    let cfg = LearnerConfig::default();
    let log = eval_dataset(&net, &frames).expect("eval");

    let mut g = c.benchmark_group("engine");
    g.sample_size(10);
    g.throughput(Throughput::Elements(frames.len() as u64));
    g.bench_function("eval_dataset", |b| b.iter(|| eval_dataset(black_box(&net), black_box(&frames))));
    g.bench_function("accumulate_and_curves", |b| {
        b.iter(|| {
            let h = accumulate(black_box(&log), &net).expect("accumulate");
            h.entries
                .iter()
                .map(|p| benefit_curve(p, &ClassWeights::default()))
                .collect::<Vec<_>>()
        })
    });
    g.bench_function("tune_round", |b| {
        b.iter(|| tune_round(black_box(&net), black_box(&frames), &cfg, &BTreeSet::new()))
    });
    g.finish();
}

criterion_group!(benches, engine);
criterion_main!(benches);
