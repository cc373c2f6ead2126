use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use artic_core::fitting::{fit_track, FitConfig};
use artic_core::synth::{generate_sequence, SceneConfig};
use artic_core::tracking::{greedy_track, AssociationMetric};
use artic_core::Exec;

fn fit_scenes(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_track");
    group.sample_size(10);
    for (name, cfg) in [("door", SceneConfig::door()), ("drawer", SceneConfig::drawer())] {
        let seq = generate_sequence(&cfg, 0).unwrap();
        let track = greedy_track(seq.detections, 0.5, AssociationMetric::Mask).remove(0);
        let fit_cfg = FitConfig::default();
        for exec in [Exec::Sequential, Exec::Parallel] {
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), name), &track, |b, t| {
                b.iter(|| fit_track(black_box(t), &cfg.camera, &fit_cfg, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn track_scene(c: &mut Criterion) {
    let seq = generate_sequence(&SceneConfig::door(), 0).unwrap();
    c.bench_function("greedy_track/door", |b| {
        b.iter(|| greedy_track(black_box(seq.detections.clone()), 0.5, AssociationMetric::Mask))
    });
}

criterion_group!(benches, fit_scenes, track_scene);
criterion_main!(benches);
