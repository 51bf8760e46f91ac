//! End-to-end stage timings: oracle labeling, depth rendering, patch
//! extraction, model forward, and one meta-training step.

use std::hint::black_box;
use std::time::Duration;

use condex_bench::{collect_params, model, object, observations, physics, pools, SEED};
use condex_core::collect::sample_grasp_candidates;
use condex_core::condex::{train_condex, TrainConfig};
use condex_core::physics::grasp_outcome;
use condex_core::render::{extract_grasp_patch, render_depth, RenderConfig, Sampling};
use condex_core::rng::{rng_from, salts};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn bench_oracle(c: &mut Criterion) {
    let obj = object(0);
    let pp = physics();
    let mut rng = rng_from(SEED, &[salts::GRASP, 0]);
    let candidates = sample_grasp_candidates(&obj, 64, &pp, 0.005, &mut rng).unwrap();
    c.bench_function("oracle_label_64_grasps", |b| {
        b.iter(|| {
            let mut hits = 0u32;
            for g in &candidates {
                hits += u32::from(grasp_outcome(black_box(&obj), g, &pp).unwrap());
            }
            hits
        })
    });
}

fn bench_render(c: &mut Criterion) {
    let obj = object(1);
    let rc = RenderConfig::default();
    c.bench_function("render_depth_192px", |b| {
        b.iter(|| render_depth(black_box(&obj), &rc).unwrap())
    });

    let img = render_depth(&obj, &rc).unwrap();
    let pp = physics();
    let mut rng = rng_from(SEED, &[salts::GRASP, 1]);
    let grasp = sample_grasp_candidates(&obj, 1, &pp, 0.005, &mut rng).unwrap()[0];
    c.bench_function("extract_patch_32px", |b| {
        b.iter(|| extract_grasp_patch(black_box(&img), &grasp, 32, Sampling::Bilinear).unwrap())
    });
}

fn bench_collect(c: &mut Criterion) {
    let obj = object(2);
    let pp = physics();
    let rc = RenderConfig::default();
    let cp = collect_params(30);
    c.bench_function("collect_30_observations", |b| {
        b.iter_batched(
            || rng_from(SEED, &[salts::COLLECT, 2, 0]),
            |mut rng| {
                condex_core::collect::collect_observations(&obj, &cp, &pp, &rc, &mut rng).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_model(c: &mut Criterion) {
    let m = model();
    let obs = observations(3, 23);
    let context = &obs[..15];
    let targets: Vec<_> = obs[15..].iter().map(|o| o.patch.clone()).collect();
    c.bench_function("forward_k15_t8", |b| {
        b.iter(|| m.predict_targets(black_box(context), &targets).unwrap())
    });

    let pools = pools(4, 30);
    let cfg = TrainConfig {
        steps: 1,
        batch_tasks: 4,
        targets_per_task: 4,
        k_interval: (1, 5),
        seed: SEED,
        ..TrainConfig::default()
    };
    c.bench_function("train_step_4_tasks", |b| {
        b.iter_batched(
            || model(),
            |mut m| train_condex(&mut m, &pools, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default()
        .sample_size(10)
        .warm_up_time(Duration::from_millis(300))
        .measurement_time(Duration::from_secs(2));
    targets = bench_oracle, bench_render, bench_collect, bench_model
}
criterion_main!(benches);
