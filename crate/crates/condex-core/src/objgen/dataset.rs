//! Dataset assembly and train/eval splitting.

use rand::seq::SliceRandom;

use super::letters::{flip_object, generate_letter_object, letter_category_count};
use super::{HeterogeneousObject, ObjectKey};
use crate::error::{CoreError, Result};
use crate::rng::{derive_seed, rng_from, salts};

/// Fraction of training-category instances held out for within-category eval.
const INTRA_HOLDOUT_FRACTION: f64 = 0.05;
/// Number of categories reserved entirely for cross-category eval.
const CROSS_CATEGORY_COUNT: usize = 2;

/// How to build a cube-composite dataset.
#[derive(Clone, Debug)]
pub struct DatasetParams {
    /// Shape categories, in order; the last two become cross-category eval.
    pub categories: Vec<u32>,
    pub instances_per_category: usize,
    pub seed: u64,
    /// When set, the second half of each category's instances are mirror
    /// copies of the first half instead of fresh samples.
    pub flip_augment: bool,
}

impl DatasetParams {
    /// The full-scale build: all 10 categories, 210 instances each.
    pub fn canonical(seed: u64) -> DatasetParams {
        DatasetParams {
            categories: (0..letter_category_count()).collect(),
            instances_per_category: 210,
            seed,
            flip_augment: false,
        }
    }
}

/// Which partition an object belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitSet {
    Train,
    IntraHoldout,
    CrossCategory,
}

/// Partition of a dataset into train, within-category holdout and
/// cross-category eval. Membership is exclusive by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train_categories: Vec<u32>,
    pub cross_categories: Vec<u32>,
    /// Sorted keys of held-out instances from training categories.
    pub intra_holdout: Vec<ObjectKey>,
}

impl DatasetSplit {
    /// Classify a key. `None` when the category is not part of this dataset.
    pub fn assignment(&self, key: ObjectKey) -> Option<SplitSet> {
        if self.cross_categories.contains(&key.category) {
            return Some(SplitSet::CrossCategory);
        }
        if !self.train_categories.contains(&key.category) {
            return None;
        }
        if self.intra_holdout.binary_search(&key).is_ok() {
            Some(SplitSet::IntraHoldout)
        } else {
            Some(SplitSet::Train)
        }
    }

    pub fn is_train(&self, key: ObjectKey) -> bool {
        self.assignment(key) == Some(SplitSet::Train)
    }
}

/// Generate all objects for the given parameters together with their split.
/// Objects come back in (category, instance) order; each object can be
/// regenerated from its provenance seed alone.
pub fn build_dataset(params: &DatasetParams) -> Result<(Vec<HeterogeneousObject>, DatasetSplit)> {
    validate(params)?;
    let n = params.instances_per_category;
    let fresh = if params.flip_augment { n / 2 } else { n };

    let mut objects = Vec::with_capacity(params.categories.len() * n);
    for &cat in &params.categories {
        let mut originals = Vec::with_capacity(fresh);
        for idx in 0..fresh {
            let obj_seed = derive_seed(params.seed, &[salts::INSTANCE, cat as u64, idx as u64]);
            let mut obj = generate_letter_object(cat, obj_seed)?;
            obj.instance_id = idx as u64;
            originals.push(obj);
        }
        if params.flip_augment {
            let mirrored: Vec<_> = originals.iter().map(flip_object).collect();
            originals.extend(mirrored);
        }
        objects.extend(originals);
    }

    let cross_at = params.categories.len() - CROSS_CATEGORY_COUNT;
    let train_categories = params.categories[..cross_at].to_vec();
    let cross_categories = params.categories[cross_at..].to_vec();

    let train_keys: Vec<ObjectKey> = objects
        .iter()
        .filter(|o| train_categories.contains(&o.category_id))
        .map(|o| o.key())
        .collect();
    let holdout_count = (INTRA_HOLDOUT_FRACTION * train_keys.len() as f64).round() as usize;
    let mut rng = rng_from(params.seed, &[salts::SPLIT]);
    let mut intra_holdout: Vec<ObjectKey> = train_keys
        .choose_multiple(&mut rng, holdout_count)
        .copied()
        .collect();
    intra_holdout.sort();

    Ok((
        objects,
        DatasetSplit {
            train_categories,
            cross_categories,
            intra_holdout,
        },
    ))
}

/// Full-scale build with the parameter ranges pinned: exactly the 10 shape
/// categories and 200..=250 instances per category.
pub fn build_canonical_dataset(
    params: &DatasetParams,
) -> Result<(Vec<HeterogeneousObject>, DatasetSplit)> {
    let all = letter_category_count() as usize;
    let mut seen = params.categories.clone();
    seen.sort();
    seen.dedup();
    if params.categories.len() != all || seen.len() != all || seen != (0..all as u32).collect::<Vec<_>>() {
        return Err(CoreError::Config(format!(
            "canonical build needs all {all} shape categories, got {:?}",
            params.categories
        )));
    }
    if !(200..=250).contains(&params.instances_per_category) {
        return Err(CoreError::Config(format!(
            "canonical build wants 200..=250 instances per category, got {}",
            params.instances_per_category
        )));
    }
    build_dataset(params)
}

fn validate(params: &DatasetParams) -> Result<()> {
    if params.categories.len() < CROSS_CATEGORY_COUNT + 1 {
        return Err(CoreError::Config(format!(
            "need at least {} categories (2 cross + 1 train), got {}",
            CROSS_CATEGORY_COUNT + 1,
            params.categories.len()
        )));
    }
    let mut seen = params.categories.clone();
    seen.sort();
    seen.dedup();
    if seen.len() != params.categories.len() {
        return Err(CoreError::Config("duplicate categories in dataset".into()));
    }
    if params.instances_per_category == 0 {
        return Err(CoreError::Config("instances_per_category must be > 0".into()));
    }
    if params.flip_augment && params.instances_per_category % 2 != 0 {
        return Err(CoreError::Config(
            "flip augmentation needs an even instance count".into(),
        ));
    }
    Ok(())
}
