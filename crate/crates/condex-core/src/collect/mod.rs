//! Grasp rollout engine: candidate sampling, oracle labeling, episode
//! assembly, and the model-guided accumulated collection strategy.

mod shard;

pub use shard::{
    load_object_observations, read_manifest, write_shards, Manifest, ManifestEntry, ShardHeader,
    MANIFEST_FILE,
};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::objgen::{HeterogeneousObject, ObjectKey};
use crate::physics::{grasp_outcome, GraspCandidate, PhysicsParams};
use crate::render::{extract_grasp_patch, render_depth, GraspPatch, RenderConfig, PATCH_SIZES};
use crate::rng::{rng_from, salts};

/// Collection-stage knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollectParams {
    /// Random grasps executed per object.
    pub grasps_per_object: usize,
    /// Side length of the stored crops (32 or 64).
    pub patch_size: usize,
    /// Fingertips descend this far below the surface at the grasp point, m.
    pub finger_descent: f64,
}

impl Default for CollectParams {
    fn default() -> Self {
        CollectParams {
            grasps_per_object: 30,
            patch_size: 64,
            finger_descent: 0.005,
        }
    }
}

impl CollectParams {
    pub fn validate(&self) -> Result<()> {
        if self.grasps_per_object == 0 {
            return Err(CoreError::Config("grasps_per_object must be > 0".into()));
        }
        if !PATCH_SIZES.contains(&self.patch_size) {
            return Err(CoreError::Config(format!(
                "patch_size {} not in {PATCH_SIZES:?}",
                self.patch_size
            )));
        }
        if !(self.finger_descent >= 0.0) {
            return Err(CoreError::Config("finger_descent must be >= 0".into()));
        }
        Ok(())
    }
}

/// One labeled grasp trial: the crop the model sees, the outcome, and the
/// raw grasp so the label can be re-derived from provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspObservation {
    pub object_key: ObjectKey,
    pub patch: GraspPatch,
    pub grasp: GraspCandidate,
    pub label: u8,
}

impl GraspObservation {
    /// Normalized grasp-to-gripper distance (the scalar model input).
    pub fn z(&self) -> f64 {
        self.patch.grasp_z
    }

    pub fn y(&self) -> f64 {
        f64::from(self.label)
    }
}

/// All observations for one object, with the seed that regenerates it.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectObservations {
    pub key: ObjectKey,
    pub provenance_seed: u64,
    pub observations: Vec<GraspObservation>,
}

/// A meta-learning task sample: disjoint context and target sets drawn from
/// one object's observation pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub object_key: ObjectKey,
    pub context: Vec<GraspObservation>,
    pub target: Vec<GraspObservation>,
}

/// Anything that can rank a grasp crop given already-observed context;
/// implemented by the trained models.
pub trait GraspScorer {
    fn score(&self, context: &[GraspObservation], candidate: &GraspPatch) -> Result<f64>;
}

/// Table height at a world point: the cell cube height if the point is on
/// the object, else 0.
pub fn surface_height_at(obj: &HeterogeneousObject, world: (f64, f64)) -> f64 {
    let local = obj.pose.to_local(world);
    let gc = (local.0 / obj.cell_size).floor();
    let gr = (local.1 / obj.cell_size).floor();
    if gc < 0.0 || gr < 0.0 || gc >= obj.cols as f64 || gr >= obj.rows as f64 {
        return 0.0;
    }
    let cell = obj.cell(gr as usize, gc as usize);
    if cell.occupied {
        cell.height
    } else {
        0.0
    }
}

/// Sample grasp attempts uniformly over the object's silhouette, with
/// uniform closing angle and surface-derived z. Cells have equal area, so a
/// uniform cell pick plus a uniform in-cell offset is area-uniform.
pub fn sample_grasp_candidates(
    obj: &HeterogeneousObject,
    n: usize,
    params: &PhysicsParams,
    finger_descent: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GraspCandidate>> {
    if n == 0 {
        return Err(CoreError::invalid("candidate count must be >= 1"));
    }
    if obj.occupied_count() == 0 {
        return Err(CoreError::DegenerateObject(
            "cannot sample grasps on an empty silhouette".into(),
        ));
    }
    let cells: Vec<(usize, usize)> = obj.occupied_cells().map(|(r, c, _)| (r, c)).collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (r, c) = cells[rng.gen_range(0..cells.len())];
        let local = (
            (c as f64 + rng.gen_range(0.0..1.0)) * obj.cell_size,
            (r as f64 + rng.gen_range(0.0..1.0)) * obj.cell_size,
        );
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let position = obj.pose.to_world(local);
        let z = (surface_height_at(obj, position) - finger_descent).max(0.0);
        out.push(GraspCandidate {
            position,
            angle,
            jaw_opening: params.max_jaw_opening,
            z,
        });
    }
    Ok(out)
}

/// Run `grasps_per_object` random grasps on one object: render, crop, label.
pub fn collect_observations(
    obj: &HeterogeneousObject,
    cp: &CollectParams,
    pp: &PhysicsParams,
    rc: &RenderConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GraspObservation>> {
    cp.validate()?;
    let candidates = sample_grasp_candidates(obj, cp.grasps_per_object, pp, cp.finger_descent, rng)?;
    let img = render_depth(obj, rc)?;
    let key = obj.key();
    candidates
        .into_iter()
        .map(|grasp| {
            let patch = extract_grasp_patch(&img, &grasp, cp.patch_size, rc.sampling)?;
            let label = u8::from(grasp_outcome(obj, &grasp, pp)?);
            Ok(GraspObservation {
                object_key: key,
                patch,
                grasp,
                label,
            })
        })
        .collect()
}

/// Collect every object's pool. Each object draws from its own derived seed,
/// so the result is identical no matter how the work is scheduled.
pub fn collect_dataset(
    objects: &[HeterogeneousObject],
    cp: &CollectParams,
    pp: &PhysicsParams,
    rc: &RenderConfig,
    base_seed: u64,
) -> Result<Vec<ObjectObservations>> {
    objects
        .par_iter()
        .map(|obj| {
            let key = obj.key();
            let mut rng = rng_from(base_seed, &[salts::COLLECT, key.category as u64, key.instance]);
            let observations = collect_observations(obj, cp, pp, rc, &mut rng)?;
            Ok(ObjectObservations {
                key,
                provenance_seed: obj.provenance_seed,
                observations,
            })
        })
        .collect()
}

/// Label statistics for a collection pass that skips patch extraction (the
/// labels do not depend on imagery).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabelStats {
    pub total: usize,
    pub positives: usize,
    /// (category, positives, total) per category, ordered by category id.
    pub per_category: Vec<(u32, usize, usize)>,
}

impl LabelStats {
    pub fn positive_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.positives as f64 / self.total as f64
        }
    }
}

/// Sample and label the whole dataset without building patches; used for
/// calibration and dataset statistics. Draws the same candidate streams as
/// [`collect_dataset`], so the rates match the stored shards exactly.
pub fn dataset_label_stats(
    objects: &[HeterogeneousObject],
    cp: &CollectParams,
    pp: &PhysicsParams,
    base_seed: u64,
) -> Result<LabelStats> {
    let per_object: Vec<(u32, usize, usize)> = objects
        .par_iter()
        .map(|obj| {
            let key = obj.key();
            let mut rng = rng_from(base_seed, &[salts::COLLECT, key.category as u64, key.instance]);
            let candidates =
                sample_grasp_candidates(obj, cp.grasps_per_object, pp, cp.finger_descent, &mut rng)?;
            let mut pos = 0;
            for grasp in &candidates {
                pos += usize::from(grasp_outcome(obj, grasp, pp)?);
            }
            Ok((key.category, pos, candidates.len()))
        })
        .collect::<Result<_>>()?;

    let mut stats = LabelStats::default();
    let mut by_cat: std::collections::BTreeMap<u32, (usize, usize)> = Default::default();
    for (cat, pos, n) in per_object {
        stats.total += n;
        stats.positives += pos;
        let e = by_cat.entry(cat).or_default();
        e.0 += pos;
        e.1 += n;
    }
    stats.per_category = by_cat.into_iter().map(|(c, (p, n))| (c, p, n)).collect();
    Ok(stats)
}

/// Draw a fresh context/target split from one object's pool: K uniform in
/// `k_interval` inclusive, then `m` targets disjoint from the context.
pub fn make_episode(
    pool: &[GraspObservation],
    k_interval: (usize, usize),
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    let (k_min, k_max) = k_interval;
    if k_min > k_max {
        return Err(CoreError::invalid(format!(
            "context interval [{k_min}, {k_max}] is reversed"
        )));
    }
    if m == 0 {
        return Err(CoreError::invalid("target size must be >= 1"));
    }
    if pool.len() < k_max + m {
        return Err(CoreError::InsufficientData(format!(
            "pool of {} cannot supply K_max {} + M {}",
            pool.len(),
            k_max,
            m
        )));
    }
    let key = pool[0].object_key;
    if pool.iter().any(|o| o.object_key != key) {
        return Err(CoreError::invalid("episode pool mixes objects"));
    }
    let k = rng.gen_range(k_min..=k_max);
    // Partial Fisher-Yates over the pool indices: first k + m slots.
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    for i in 0..(k + m) {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    Ok(Episode {
        object_key: key,
        context: idx[..k].iter().map(|&i| pool[i].clone()).collect(),
        target: idx[k..k + m].iter().map(|&i| pool[i].clone()).collect(),
    })
}

/// Synthetic-task augmentation: with probability 1/2, invert every label in
/// the episode (context and target), yielding a consistent sibling task.
pub fn task_augment(episode: &Episode, enabled: bool, rng: &mut ChaCha8Rng) -> Episode {
    if !enabled || !rng.gen_bool(0.5) {
        return episode.clone();
    }
    let flip = |obs: &GraspObservation| GraspObservation {
        label: 1 - obs.label,
        ..obs.clone()
    };
    Episode {
        object_key: episode.object_key,
        context: episode.context.iter().map(flip).collect(),
        target: episode.target.iter().map(flip).collect(),
    }
}

/// Model-in-the-loop context gathering: at each step, score a fresh pool of
/// candidates conditioned on everything gathered so far and execute the
/// best-ranked one. Ties keep the earliest candidate.
pub fn accumulated_context_collection(
    scorer: &dyn GraspScorer,
    obj: &HeterogeneousObject,
    t_max: usize,
    pool_size: usize,
    cp: &CollectParams,
    pp: &PhysicsParams,
    rc: &RenderConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<GraspObservation>> {
    if t_max == 0 || pool_size == 0 {
        return Err(CoreError::invalid(
            "accumulated collection needs t_max >= 1 and a non-empty pool",
        ));
    }
    let img = render_depth(obj, rc)?;
    let key = obj.key();
    let mut gathered: Vec<GraspObservation> = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        let candidates = sample_grasp_candidates(obj, pool_size, pp, cp.finger_descent, rng)?;
        let mut best: Option<(usize, f64)> = None;
        let mut patches = Vec::with_capacity(candidates.len());
        for (i, grasp) in candidates.iter().enumerate() {
            let patch = extract_grasp_patch(&img, grasp, cp.patch_size, rc.sampling)?;
            let s = scorer.score(&gathered, &patch)?;
            if !s.is_finite() {
                return Err(CoreError::NonFinite("grasp score".into()));
            }
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((i, s));
            }
            patches.push(patch);
        }
        let (pick, _) = best.expect("non-empty candidate pool");
        let grasp = candidates[pick];
        let label = u8::from(grasp_outcome(obj, &grasp, pp)?);
        gathered.push(GraspObservation {
            object_key: key,
            patch: patches.swap_remove(pick),
            grasp,
            label,
        });
    }
    Ok(gathered)
}
