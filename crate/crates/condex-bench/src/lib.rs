//! Shared fixtures for the pipeline benches: one letter object, its labeled
//! observations, and a deliberately small model so timings stay in the
//! millisecond range.

use condex_core::collect::{collect_observations, CollectParams, GraspObservation, ObjectObservations};
use condex_core::condex::{Aggregator, Architecture, CondexModel};
use condex_core::objgen::{generate_letter_object, HeterogeneousObject};
use condex_core::physics::PhysicsParams;
use condex_core::render::RenderConfig;
use condex_core::rng::{rng_from, salts};

pub const SEED: u64 = 17;

pub fn bench_arch() -> Architecture {
    Architecture {
        patch_size: 32,
        conv1_channels: 8,
        conv1_kernel: 7,
        conv2_channels: 8,
        conv2_kernel: 5,
        hidden: 32,
        repr_dim: 16,
    }
}

pub fn object(category: u32) -> HeterogeneousObject {
    generate_letter_object(category, SEED).expect("letter object")
}

pub fn physics() -> PhysicsParams {
    PhysicsParams { clamp_force: 300.0, ..PhysicsParams::default() }
}

pub fn collect_params(n: usize) -> CollectParams {
    CollectParams { grasps_per_object: n, patch_size: 32, ..CollectParams::default() }
}

pub fn observations(category: u32, n: usize) -> Vec<GraspObservation> {
    let obj = object(category);
    let mut rng = rng_from(SEED, &[salts::COLLECT, u64::from(category), 0]);
    collect_observations(&obj, &collect_params(n), &physics(), &RenderConfig::default(), &mut rng)
        .expect("observation pool")
}

pub fn pools(n_objects: u32, per_object: usize) -> Vec<ObjectObservations> {
    (0..n_objects)
        .map(|cat| ObjectObservations {
            key: object(cat).key(),
            provenance_seed: SEED,
            observations: observations(cat, per_object),
        })
        .collect()
}

pub fn model() -> CondexModel {
    CondexModel::init(bench_arch(), Aggregator::Mean, SEED).expect("model init")
}
