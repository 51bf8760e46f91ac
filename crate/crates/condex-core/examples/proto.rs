//! Scratch run sizing the cross-category context-benefit experiment.

use std::time::Instant;

use condex_core::collect::{collect_dataset, make_episode, CollectParams};
use condex_core::condex::{
    train_condex, train_dexnet, Aggregator, Architecture, CondexModel, DexnetModel, TrainConfig,
};
use condex_core::eval::error_vs_context_curve;
use condex_core::objgen::{build_dataset, DatasetParams, SplitSet};
use condex_core::physics::PhysicsParams;
use condex_core::render::RenderConfig;
use condex_core::rng::{derive_seed, rng_from, salts};
use condex_core::EvalSplit;

fn main() {
    let params = DatasetParams {
        categories: (0..10).collect(),
        instances_per_category: 24,
        seed: 42,
        flip_augment: false,
    };
    let (objects, split) = build_dataset(&params).unwrap();
    let pp = PhysicsParams::default();
    let cp = CollectParams { grasps_per_object: 30, patch_size: 32, ..CollectParams::default() };
    let rc = RenderConfig::default();

    let t0 = Instant::now();
    let pools = collect_dataset(&objects, &cp, &pp, &rc, 42).unwrap();
    let pos: usize = pools
        .iter()
        .map(|p| p.observations.iter().filter(|o| o.label == 1).count())
        .sum();
    let total: usize = pools.iter().map(|p| p.observations.len()).sum();
    println!(
        "pools: {} objects, {} obs, positive rate {:.3}, {:?}",
        pools.len(),
        total,
        pos as f64 / total as f64,
        t0.elapsed()
    );

    let train_pools: Vec<_> = pools.iter().filter(|p| split.is_train(p.key)).cloned().collect();
    let cross_pools: Vec<_> = pools
        .iter()
        .filter(|p| split.assignment(p.key) == Some(SplitSet::CrossCategory))
        .cloned()
        .collect();
    println!("train {} cross {}", train_pools.len(), cross_pools.len());

    let mut episodes = Vec::new();
    for p in &cross_pools {
        for e in 0..9u64 {
            let mut rng = rng_from(42, &[salts::EPISODE, p.key.category as u64, p.key.instance, e]);
            episodes.push(make_episode(&p.observations, (20, 20), 8, &mut rng).unwrap());
        }
    }

    let arch = Architecture {
        patch_size: 32,
        conv1_channels: 8,
        conv1_kernel: 7,
        conv2_channels: 8,
        conv2_kernel: 5,
        hidden: 32,
        repr_dim: 16,
    };

    for seed in 0..3u64 {
        let mut model = CondexModel::init(arch, Aggregator::Mean, seed).unwrap();
        let mut dex = DexnetModel::init(arch, seed).unwrap();
        for chunk in 0..6u64 {
            let cfg = TrainConfig {
                steps: 500,
                seed: derive_seed(seed, &[77, chunk]),
                ..TrainConfig::default()
            };
            let t0 = Instant::now();
            let log = train_condex(&mut model, &train_pools, &cfg).unwrap();
            let tc = t0.elapsed();
            if chunk < 2 {
                train_dexnet(&mut dex, &train_pools, &cfg).unwrap();
            }
            let curve = error_vs_context_curve(
                &model, "condex", EvalSplit::Cross, &episodes, &[0, 5, 15, 20], seed,
            )
            .unwrap();
            let errs: Vec<f64> = curve.records.iter().map(|r| r.error_rate.unwrap()).collect();
            let dcurve = error_vs_context_curve(
                &dex, "dexnet", EvalSplit::Cross, &episodes, &[15], seed,
            )
            .unwrap();
            println!(
                "seed {seed} steps {}: loss {:.3} k0 {:.4} k5 {:.4} k15 {:.4} k20 {:.4} dexnet {:.4} ({tc:?})",
                (chunk + 1) * 500,
                log.losses.last().unwrap(),
                errs[0], errs[1], errs[2], errs[3],
                dcurve.records[0].error_rate.unwrap(),
            );
        }
    }
}
