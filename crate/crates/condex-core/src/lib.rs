//! Few-shot grasp-quality prediction on objects with heterogeneous physical
//! properties.
//!
//! The pipeline, end to end:
//!
//! 1. [`objgen`] synthesizes planar cell-grid objects whose mass density and
//!    friction vary *within* each object (the Letters and Bottles sets).
//! 2. [`physics`] is a deterministic analytic oracle deciding whether a
//!    parallel-jaw grasp lifts a given object.
//! 3. [`render`] produces orthographic top-down depth images and
//!    grasp-aligned crops.
//! 4. [`collect`] samples grasp candidates, labels them through the oracle,
//!    and assembles context/target episodes for meta-learning.
//! 5. [`nncore`] is a small f64 reverse-mode autodiff engine with the conv
//!    and dense ops the models need.
//! 6. [`condex`] holds the conditional-neural-process grasp model plus the
//!    context-free and MAML-style baselines.
//! 7. [`eval`] computes metrics, error-vs-context curves, grasping
//!    benchmarks, and the clamp-force calibration.
//!
//! Everything is seeded and deterministic: identical configuration and seeds
//! reproduce byte-identical artifacts regardless of worker count.

pub mod collect;
pub mod condex;
pub mod config;
pub mod error;
pub mod eval;
pub mod nncore;
pub mod objgen;
pub mod physics;
pub mod render;
pub mod rng;

pub use collect::{Episode, GraspObservation, GraspScorer};
pub use config::{ExperimentConfig, ModelKind};
pub use error::{CoreError, Result};
pub use eval::{EpisodeScorer, EvalSplit, MetricRecord};
pub use objgen::{Cell, DatasetSplit, HeterogeneousObject, ObjectKey, PlanarPose};
pub use physics::{ContactInfo, GraspCandidate, PhysicsParams};
pub use render::{DepthImage, GraspPatch, RenderConfig, Sampling};
