//! Episodic training loops for all three model kinds.
//!
//! Every loop is single-threaded and seeded: step s draws its batch from a
//! fresh stream derived from (seed, s), so the whole run is a pure function
//! of config + data and checkpoint hashes reproduce exactly.

use rand::Rng;

use crate::collect::{make_episode, task_augment, Episode, ObjectObservations};
use crate::error::{CoreError, Result};
use crate::nncore::{Adam, Graph};
use crate::render::GraspPatch;
use crate::rng::{rng_from, salts};

use super::baselines::{baseline_forward, DexnetModel, IgmlModel};
use super::{predict_nodes, stage_params, write_back_grads, CondexModel};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    /// Tasks (objects) per batch.
    pub batch_tasks: usize,
    /// Target grasps per task.
    pub targets_per_task: usize,
    /// Context size is drawn uniformly from this inclusive interval.
    pub k_interval: (usize, usize),
    pub lr: f64,
    /// Whole-episode label inversion with probability 1/2.
    pub augment: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_tasks: 16,
            targets_per_task: 8,
            k_interval: (1, 15),
            lr: 1e-3,
            augment: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_tasks == 0 || self.targets_per_task == 0 {
            return Err(CoreError::Config("steps, tasks, and targets must be >= 1".into()));
        }
        if self.k_interval.0 > self.k_interval.1 {
            return Err(CoreError::Config(format!(
                "context interval [{}, {}] is reversed",
                self.k_interval.0, self.k_interval.1
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CoreError::Config(format!("learning rate {} must be > 0", self.lr)));
        }
        Ok(())
    }
}

/// Per-step training losses.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub losses: Vec<f64>,
}

impl TrainLog {
    /// Trailing moving average, one value per step from `window` onward.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        if window == 0 || self.losses.len() < window {
            return Vec::new();
        }
        self.losses
            .windows(window)
            .map(|w| w.iter().sum::<f64>() / window as f64)
            .collect()
    }
}

/// First `t` indices of a seeded partial shuffle of 0..n: a batch of
/// distinct task indices.
fn sample_tasks(n: usize, t: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Vec<usize>> {
    if n < t {
        return Err(CoreError::InsufficientData(format!(
            "batch of {t} tasks from {n} objects"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..t {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    idx.truncate(t);
    Ok(idx)
}

fn batch_episodes(
    pools: &[ObjectObservations],
    cfg: &TrainConfig,
    step: usize,
) -> Result<Vec<Episode>> {
    let mut rng = rng_from(cfg.seed, &[salts::TRAIN, step as u64]);
    let tasks = sample_tasks(pools.len(), cfg.batch_tasks, &mut rng)?;
    let mut episodes = Vec::with_capacity(tasks.len());
    for ti in tasks {
        let ep = make_episode(
            &pools[ti].observations,
            cfg.k_interval,
            cfg.targets_per_task,
            &mut rng,
        )?;
        episodes.push(task_augment(&ep, cfg.augment, &mut rng));
    }
    Ok(episodes)
}

/// Meta-train the process model: per step, one episode per sampled task,
/// cross-entropy averaged over every target of every task.
pub fn train_condex(
    model: &mut CondexModel,
    pools: &[ObjectObservations],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    let mut opt = Adam::new(cfg.lr)?;
    let mut log = TrainLog::default();
    for step in 0..cfg.steps {
        let episodes = batch_episodes(pools, cfg, step)?;
        let mut g = Graph::new();
        let staged = stage_params(&mut g, &model.params)?;
        let mut terms = Vec::with_capacity(cfg.batch_tasks * cfg.targets_per_task);
        for ep in &episodes {
            let targets: Vec<&GraspPatch> = ep.target.iter().map(|o| &o.patch).collect();
            let probs = predict_nodes(
                &mut g,
                &staged,
                model.arch,
                model.aggregator,
                &ep.context,
                &targets,
            )?;
            for (p, obs) in probs.iter().zip(&ep.target) {
                terms.push(g.cross_entropy(*p, obs.y())?);
            }
        }
        let sum = g.add_n(&terms)?;
        let loss = g.scale(sum, 1.0 / terms.len() as f64)?;
        g.backward(loss)?;
        write_back_grads(&g, &staged, &mut model.params);
        opt.step(&mut model.params)?;
        log.losses.push(g.value(loss));
    }
    Ok(log)
}

/// Train the context-free baseline on the same pools, flattened to plain
/// labeled grasps; batches match the process model's target count.
pub fn train_dexnet(
    model: &mut DexnetModel,
    pools: &[ObjectObservations],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    let flat: Vec<(usize, usize)> = pools
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.observations.len()).map(move |j| (i, j)))
        .collect();
    if flat.is_empty() {
        return Err(CoreError::InsufficientData("no observations to train on".into()));
    }
    let batch = cfg.batch_tasks * cfg.targets_per_task;
    let mut opt = Adam::new(cfg.lr)?;
    let mut log = TrainLog::default();
    for step in 0..cfg.steps {
        let mut rng = rng_from(cfg.seed, &[salts::TRAIN, step as u64]);
        let mut g = Graph::new();
        let staged = stage_params(&mut g, &model.params)?;
        let mut terms = Vec::with_capacity(batch);
        for _ in 0..batch {
            let (i, j) = flat[rng.gen_range(0..flat.len())];
            let obs = &pools[i].observations[j];
            let p = baseline_forward(&mut g, &staged, &model.arch, &obs.patch)?;
            terms.push(g.cross_entropy(p, obs.y())?);
        }
        let sum = g.add_n(&terms)?;
        let loss = g.scale(sum, 1.0 / terms.len() as f64)?;
        g.backward(loss)?;
        write_back_grads(&g, &staged, &mut model.params);
        opt.step(&mut model.params)?;
        log.losses.push(g.value(loss));
    }
    Ok(log)
}

/// First-order meta-training for the adaptation baseline: adapt on each
/// episode's context, take the target-set gradient at the adapted weights,
/// and average those gradients into the shared initialization.
pub fn train_igml(
    model: &mut IgmlModel,
    pools: &[ObjectObservations],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    let mut opt = Adam::new(cfg.lr)?;
    let mut log = TrainLog::default();
    for step in 0..cfg.steps {
        let episodes = batch_episodes(pools, cfg, step)?;
        let loss = model.accumulate_meta_grads(&episodes)?;
        opt.step(&mut model.params)?;
        log.losses.push(loss);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::super::tests::tiny_arch;
    use super::*;
    use crate::collect::GraspObservation;
    use crate::condex::{Aggregator, CondexModel};
    use crate::objgen::ObjectKey;
    use crate::physics::GraspCandidate;

    /// Tasks where geometry alone is useless: the patch shows one of two
    /// textures, and the label is that texture xor a per-object hidden bit.
    /// Context observations reveal the bit; nothing else does.
    pub(crate) fn xor_pools(objects: usize, per_object: usize) -> Vec<ObjectObservations> {
        (0..objects)
            .map(|i| {
                let hidden = (i % 2) as u8;
                let observations = (0..per_object)
                    .map(|j| {
                        let texture = (j % 2) as u8;
                        let mut pixels = vec![0.0; 16 * 16];
                        for y in 0..16 {
                            for x in 0..16 {
                                let lit = if texture == 0 { x < 8 } else { x >= 8 };
                                if lit {
                                    pixels[y * 16 + x] = 0.08;
                                }
                            }
                        }
                        // Small per-observation wiggle so patches are unique.
                        pixels[(i * 7 + j * 3) % 256] += 0.004;
                        GraspObservation {
                            object_key: ObjectKey { category: 0, instance: i as u64 },
                            patch: crate::render::GraspPatch {
                                size: 16,
                                pixels,
                                grasp_z: 0.03,
                            },
                            grasp: GraspCandidate {
                                position: (0.0, 0.0),
                                angle: 0.0,
                                jaw_opening: 0.08,
                                z: 0.03,
                            },
                            label: texture ^ hidden,
                        }
                    })
                    .collect();
                ObjectObservations {
                    key: ObjectKey { category: 0, instance: i as u64 },
                    provenance_seed: i as u64,
                    observations,
                }
            })
            .collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            steps: 3,
            batch_tasks: 3,
            targets_per_task: 3,
            k_interval: (1, 4),
            lr: 1e-3,
            augment: true,
            seed: 7,
        }
    }

    #[test]
    fn same_seed_gives_identical_checkpoints() {
        let pools = xor_pools(6, 12);
        let cfg = small_cfg();
        let mut runs = Vec::new();
        for _ in 0..2 {
            let mut m = CondexModel::init(tiny_arch(), Aggregator::Mean, 1).unwrap();
            train_condex(&mut m, &pools, &cfg).unwrap();
            runs.push(m.params.content_hash());
        }
        assert_eq!(runs[0], runs[1]);

        let mut hashes = Vec::new();
        for _ in 0..2 {
            let mut m = DexnetModel::init(tiny_arch(), 1).unwrap();
            train_dexnet(&mut m, &pools, &cfg).unwrap();
            hashes.push(m.params.content_hash());
        }
        assert_eq!(hashes[0], hashes[1]);

        let mut ig = Vec::new();
        for _ in 0..2 {
            let mut m = IgmlModel::init(tiny_arch(), 1, 0.05, 1).unwrap();
            train_igml(&mut m, &pools, &cfg).unwrap();
            ig.push(m.params.content_hash());
        }
        assert_eq!(ig[0], ig[1]);
    }

    #[test]
    fn augmentation_changes_the_learned_weights() {
        let pools = xor_pools(6, 12);
        let mut with = CondexModel::init(tiny_arch(), Aggregator::Mean, 2).unwrap();
        let mut without = with.clone();
        let cfg = small_cfg();
        train_condex(&mut with, &pools, &cfg).unwrap();
        train_condex(&mut without, &pools, &TrainConfig { augment: false, ..cfg }).unwrap();
        assert_ne!(with.params.content_hash(), without.params.content_hash());
    }

    #[test]
    fn batches_want_enough_tasks_and_pool_depth() {
        let pools = xor_pools(2, 12);
        let mut m = CondexModel::init(tiny_arch(), Aggregator::Mean, 3).unwrap();
        let cfg = TrainConfig { batch_tasks: 5, ..small_cfg() };
        assert!(matches!(
            train_condex(&mut m, &pools, &cfg),
            Err(CoreError::InsufficientData(_))
        ));
        let shallow = xor_pools(6, 3);
        assert!(matches!(
            train_condex(&mut m, &shallow, &small_cfg()),
            Err(CoreError::InsufficientData(_))
        ));
    }

    /// The core meta-learning claim at toy scale: with context the process
    /// model solves tasks that are information-theoretically closed to the
    /// context-free baseline.
    #[test]
    fn context_solves_tasks_the_context_free_net_cannot() {
        let pools = xor_pools(8, 20);
        let held_out = xor_pools(10, 20);
        let cfg = TrainConfig {
            steps: 400,
            batch_tasks: 4,
            targets_per_task: 4,
            k_interval: (2, 6),
            lr: 1e-2,
            augment: true,
            seed: 11,
        };

        let mut cnp = CondexModel::init(tiny_arch(), Aggregator::Mean, 20).unwrap();
        let log = train_condex(&mut cnp, &pools, &cfg).unwrap();
        let early: f64 = log.losses[..20].iter().sum::<f64>() / 20.0;
        let late: f64 = log.losses[log.losses.len() - 20..].iter().sum::<f64>() / 20.0;
        assert!(late < early * 0.6, "loss did not trend down: {early} -> {late}");

        let mut dex = DexnetModel::init(tiny_arch(), 20).unwrap();
        train_dexnet(&mut dex, &pools, &cfg).unwrap();

        let mut rng = rng_from(99, &[salts::EVAL]);
        let (mut cnp_err, mut dex_err, mut total) = (0.0, 0.0, 0.0);
        for pool in &held_out[2..] {
            let ep = make_episode(&pool.observations, (6, 6), 6, &mut rng).unwrap();
            let targets: Vec<_> = ep.target.iter().map(|o| o.patch.clone()).collect();
            let cp = cnp.predict_targets(&ep.context, &targets).unwrap();
            let dp = dex.predict_batch(&targets).unwrap();
            for (i, obs) in ep.target.iter().enumerate() {
                total += 1.0;
                if (cp[i] >= 0.5) != (obs.label == 1) {
                    cnp_err += 1.0;
                }
                if (dp[i] >= 0.5) != (obs.label == 1) {
                    dex_err += 1.0;
                }
            }
        }
        let (cnp_err, dex_err) = (cnp_err / total, dex_err / total);
        assert!(cnp_err < 0.15, "process model error {cnp_err}");
        assert!(dex_err > 0.30, "context-free error {dex_err} should stay near chance");
    }

    #[test]
    fn meta_trained_adaptation_reduces_context_loss_on_held_out_tasks() {
        let pools = xor_pools(8, 20);
        let cfg = TrainConfig {
            steps: 60,
            batch_tasks: 4,
            targets_per_task: 4,
            k_interval: (2, 6),
            lr: 3e-3,
            augment: false,
            seed: 13,
        };
        let mut igml = IgmlModel::init(tiny_arch(), 1, 0.05, 21).unwrap();
        train_igml(&mut igml, &pools, &cfg).unwrap();

        let held_out = xor_pools(12, 20);
        let mut rng = rng_from(5, &[salts::EVAL, 1]);
        let mut reduced = 0;
        let mut n = 0;
        for pool in &held_out {
            let ep = make_episode(&pool.observations, (6, 6), 4, &mut rng).unwrap();
            let (_, before, after) = igml.adapt(&ep.context).unwrap();
            n += 1;
            if after < before {
                reduced += 1;
            }
        }
        assert!(
            reduced * 10 >= n * 9,
            "adaptation reduced context loss on only {reduced}/{n} episodes"
        );
    }

    #[test]
    fn moving_average_smooths_the_log() {
        let log = TrainLog { losses: vec![4.0, 2.0, 3.0, 1.0] };
        assert_eq!(log.moving_average(2), vec![3.0, 2.5, 2.0]);
        assert!(log.moving_average(9).is_empty());
    }
}
