//! Command implementations. Every command loads the experiment config,
//! binds it to the run directory (mixed-config artifact trees are rejected)
//! and prints a one-line summary on success.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use condex_core::collect::{
    collect_dataset, load_object_observations, make_episode, read_manifest, write_shards,
    Manifest, ObjectObservations, MANIFEST_FILE,
};
use condex_core::condex::{
    train_condex, train_dexnet, train_igml, AnyModel, CondexModel, DexnetModel, IgmlModel,
    TrainLog,
};
use condex_core::config::{hash_hex, ExperimentConfig, ModelKind};
use condex_core::eval::{
    benchmark_grasping, calibrate_clamp_force, error_vs_context_curve, line_chart,
    random_grasp_floor, write_metrics_csv, ChartSeries, EvalSplit, MetricRecord,
};
use condex_core::nncore::ModelParams;
use condex_core::objgen::{build_dataset, category_name, DatasetSplit, SplitSet};
use condex_core::rng::{rng_from, salts};
use condex_core::{CoreError, Episode, HeterogeneousObject, Result};

const CATALOG_MAGIC: &str = "condex-objects";
const RUN_CONFIG: &str = "config.toml";
const OBJECTS_PER_SHARD: usize = 128;

struct Run {
    root: PathBuf,
    cfg: ExperimentConfig,
    hash: [u8; 32],
}

impl Run {
    /// Load the config, then create or verify the run-level binding: the
    /// canonical config is stored at the run root so later commands cannot
    /// mix artifacts from different configurations.
    fn open(config: &Option<PathBuf>, out: &Path) -> Result<Run> {
        let cfg = match config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let hash = cfg.content_hash()?;
        fs::create_dir_all(out)?;
        let bound = out.join(RUN_CONFIG);
        let canonical = cfg.to_toml_string()?;
        if bound.exists() {
            let existing = ExperimentConfig::load(&bound)?;
            let got = existing.content_hash()?;
            if got != hash {
                return Err(CoreError::Config(format!(
                    "run directory {} holds artifacts for a different config ({} vs {}); \
                     pick a fresh --out or the original config",
                    out.display(),
                    hash_hex(&got),
                    hash_hex(&hash)
                )));
            }
        } else {
            fs::write(&bound, canonical)?;
        }
        Ok(Run {
            root: out.to_path_buf(),
            cfg,
            hash,
        })
    }

    fn ensure(&self, sub: &str) -> Result<PathBuf> {
        let dir = self.root.join(sub);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn require(&self, rel: impl AsRef<Path>, producer: &str) -> Result<PathBuf> {
        let path = self.root.join(rel.as_ref());
        if !path.exists() {
            return Err(CoreError::Config(format!(
                "{} is missing; run `condex {producer}` on this run directory first",
                path.display()
            )));
        }
        Ok(path)
    }

    fn catalog_path(&self) -> PathBuf {
        self.root.join("objects").join("catalog.txt")
    }

    fn default_checkpoint(&self) -> Result<PathBuf> {
        let kind = self.cfg.model_kind()?;
        Ok(self.root.join("checkpoints").join(format!(
            "{kind}-seed{}.ckpt",
            self.cfg.training.seed
        )))
    }

    /// Regenerate the dataset; it is a pure function of the config.
    fn dataset(&self) -> Result<(Vec<HeterogeneousObject>, DatasetSplit)> {
        build_dataset(&self.cfg.dataset_params())
    }

    fn manifest(&self) -> Result<Manifest> {
        let dir = self.root.join("shards");
        self.require(Path::new("shards").join(MANIFEST_FILE), "collect")?;
        let manifest = read_manifest(&dir)?;
        if manifest.config_hash != self.hash {
            return Err(CoreError::Config(format!(
                "shards under {} were collected with config {}, not {}; rerun `condex collect`",
                dir.display(),
                hash_hex(&manifest.config_hash),
                hash_hex(&self.hash)
            )));
        }
        Ok(manifest)
    }

    /// Load every pool whose object belongs to `set`, in manifest order.
    fn pools_in(&self, manifest: &Manifest, split: &DatasetSplit, set: SplitSet)
        -> Result<Vec<ObjectObservations>> {
        let dir = self.root.join("shards");
        manifest
            .objects
            .iter()
            .filter(|e| split.assignment(e.key) == Some(set))
            .map(|e| load_object_observations(&dir, manifest, e))
            .collect()
    }
}

fn split_set(split: EvalSplit) -> SplitSet {
    match split {
        EvalSplit::Intra => SplitSet::IntraHoldout,
        EvalSplit::Cross => SplitSet::CrossCategory,
    }
}

fn split_label(split: &DatasetSplit, key: condex_core::ObjectKey) -> &'static str {
    match split.assignment(key) {
        Some(SplitSet::Train) => "train",
        Some(SplitSet::IntraHoldout) => "holdout",
        Some(SplitSet::CrossCategory) => "cross",
        None => "none",
    }
}

pub fn gen_objects(config: &Option<PathBuf>, out: &Path) -> Result<()> {
    let run = Run::open(config, out)?;
    let (objects, split) = run.dataset()?;
    run.ensure("objects")?;

    let mut text = String::new();
    let _ = writeln!(text, "{CATALOG_MAGIC} 1");
    let _ = writeln!(text, "config {}", hash_hex(&run.hash));
    let _ = writeln!(text, "objects {}", objects.len());
    let mut counts = [0_usize; 3];
    for obj in &objects {
        let key = obj.key();
        let label = split_label(&split, key);
        match label {
            "train" => counts[0] += 1,
            "holdout" => counts[1] += 1,
            _ => counts[2] += 1,
        }
        let _ = writeln!(
            text,
            "{} {} {} {} {label}",
            key.category,
            key.instance,
            obj.provenance_seed,
            obj.occupied_count()
        );
    }
    fs::write(run.catalog_path(), text)?;
    println!(
        "wrote {} objects ({} train, {} intra-holdout, {} cross) to {}",
        objects.len(),
        counts[0],
        counts[1],
        counts[2],
        run.catalog_path().display()
    );
    Ok(())
}

fn check_catalog(run: &Run) -> Result<()> {
    let path = run.require(Path::new("objects").join("catalog.txt"), "gen-objects")?;
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let head = lines.next().unwrap_or("");
    if head.split_whitespace().next() != Some(CATALOG_MAGIC) {
        return Err(CoreError::Format(format!("{} is not an object catalog", path.display())));
    }
    let config_line = lines.next().unwrap_or("");
    let want = format!("config {}", hash_hex(&run.hash));
    if config_line != want {
        return Err(CoreError::Config(format!(
            "{} belongs to a different config; rerun `condex gen-objects`",
            path.display()
        )));
    }
    Ok(())
}

pub fn collect(config: &Option<PathBuf>, out: &Path) -> Result<()> {
    let run = Run::open(config, out)?;
    check_catalog(&run)?;
    let (objects, _) = run.dataset()?;
    let cp = run.cfg.collect_params();
    let pp = run.cfg.physics_params();
    let rc = run.cfg.render_config();
    let pools = collect_dataset(&objects, &cp, &pp, &rc, run.cfg.dataset.seed)?;

    let mut total = 0_usize;
    let mut positives = 0_usize;
    for pool in &pools {
        total += pool.observations.len();
        positives += pool.observations.iter().filter(|o| o.label == 1).count();
    }

    let dir = run.ensure("shards")?;
    let manifest = write_shards(&dir, &pools, cp.patch_size, run.hash, OBJECTS_PER_SHARD)?;
    println!(
        "collected {} observations across {} objects ({:.1}% positive) into {} shard(s) under {}",
        total,
        pools.len(),
        100.0 * positives as f64 / total.max(1) as f64,
        manifest.shards.len(),
        dir.display()
    );
    Ok(())
}

pub fn stats(config: &Option<PathBuf>, out: &Path) -> Result<()> {
    let run = Run::open(config, out)?;
    let manifest = run.manifest()?;
    let dir = run.root.join("shards");

    let mut by_cat: std::collections::BTreeMap<u32, (usize, usize)> = Default::default();
    for entry in &manifest.objects {
        let pool = load_object_observations(&dir, &manifest, entry)?;
        let e = by_cat.entry(entry.key.category).or_default();
        e.0 += pool.observations.iter().filter(|o| o.label == 1).count();
        e.1 += pool.observations.len();
    }
    let mut positives = 0_usize;
    let mut total = 0_usize;
    for (&cat, &(pos, n)) in &by_cat {
        let name = category_name(cat).unwrap_or("?");
        println!(
            "category {cat} ({name}): {n} obs, {:.1}% positive",
            100.0 * pos as f64 / n.max(1) as f64
        );
        positives += pos;
        total += n;
    }
    println!(
        "total: {total} observations, {:.1}% positive ({} categories, {} objects)",
        100.0 * positives as f64 / total.max(1) as f64,
        by_cat.len(),
        manifest.objects.len()
    );
    Ok(())
}

pub fn calibrate(
    config: &Option<PathBuf>,
    out: &Path,
    sample: usize,
    target: f64,
    tolerance: f64,
) -> Result<()> {
    let run = Run::open(config, out)?;
    if sample == 0 {
        return Err(CoreError::invalid("sample must be >= 1"));
    }
    let (objects, _) = run.dataset()?;
    let n = sample.min(objects.len());
    // Evenly spaced across the (category, instance)-ordered dataset.
    let picked: Vec<HeterogeneousObject> = (0..n)
        .map(|i| objects[i * objects.len() / n].clone())
        .collect();
    let cp = run.cfg.collect_params();
    let pp = run.cfg.physics_params();
    let got = calibrate_clamp_force(&picked, &cp, &pp, target, tolerance, run.cfg.dataset.seed)?;

    let dir = run.ensure("metrics")?;
    let path = dir.join("calibration.txt");
    let mut text = String::new();
    let _ = writeln!(text, "condex-calibration 1");
    let _ = writeln!(text, "config {}", hash_hex(&run.hash));
    let _ = writeln!(text, "clamp_force {}", got.clamp_force);
    let _ = writeln!(text, "achieved_rate {}", got.achieved_rate);
    let _ = writeln!(text, "target {target}");
    let _ = writeln!(text, "tolerance {tolerance}");
    let _ = writeln!(text, "bisection_steps {}", got.bisection_steps);
    let _ = writeln!(text, "sample_objects {n}");
    fs::write(&path, text)?;
    println!(
        "clamp force {:.3} N gives positive rate {:.4} after {} bisection step(s) \
         (target {target} +- {tolerance}); set physics.clamp_force to adopt it",
        got.clamp_force, got.achieved_rate, got.bisection_steps
    );
    Ok(())
}

fn model_id(model: &AnyModel) -> String {
    match model {
        AnyModel::Condex(m) => format!("condex-{}", m.aggregator),
        _ => model.kind_name().to_string(),
    }
}

pub fn train(config: &Option<PathBuf>, out: &Path, seed: Option<u64>) -> Result<()> {
    let run = Run::open(config, out)?;
    let manifest = run.manifest()?;
    let (_, split) = run.dataset()?;
    let pools = run.pools_in(&manifest, &split, SplitSet::Train)?;
    if pools.is_empty() {
        return Err(CoreError::InsufficientData("no training pools in the shards".into()));
    }

    let mut tc = run.cfg.train_config();
    if let Some(s) = seed {
        tc.seed = s;
    }
    let arch = run.cfg.architecture()?;
    let kind = run.cfg.model_kind()?;
    let (params, log, id) = match kind {
        ModelKind::Condex => {
            let agg = run.cfg.aggregator()?;
            let mut model = CondexModel::init(arch, agg, tc.seed)?;
            let log = train_condex(&mut model, &pools, &tc)?;
            (model.params, log, format!("condex-{agg}"))
        }
        ModelKind::Dexnet => {
            let mut model = DexnetModel::init(arch, tc.seed)?;
            let log = train_dexnet(&mut model, &pools, &tc)?;
            (model.params, log, "dexnet".to_string())
        }
        ModelKind::Igml => {
            let mut model = IgmlModel::init(
                arch,
                run.cfg.training.adapt_steps,
                run.cfg.training.inner_lr,
                tc.seed,
            )?;
            let log = train_igml(&mut model, &pools, &tc)?;
            (model.params, log, "igml".to_string())
        }
    };
    let dir = run.ensure("checkpoints")?;
    let path = dir.join(format!("{kind}-seed{}.ckpt", tc.seed));
    params.save(&path)?;
    finish_train(&run, &params, log, &path, &tc, &id)
}

fn finish_train(
    run: &Run,
    params: &ModelParams,
    log: TrainLog,
    ckpt: &Path,
    tc: &condex_core::condex::TrainConfig,
    id: &str,
) -> Result<()> {
    let dir = run.ensure("metrics")?;
    let mut csv = String::from("step,loss\n");
    for (i, loss) in log.losses.iter().enumerate() {
        let _ = writeln!(csv, "{i},{loss}");
    }
    let loss_path = dir.join(format!("train-{id}-seed{}.csv", tc.seed));
    fs::write(&loss_path, csv)?;
    let first = log.losses.first().copied().unwrap_or(f64::NAN);
    let last = log.losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {id} for {} steps: loss {first:.4} -> {last:.4}, checkpoint {} (params {})",
        tc.steps,
        ckpt.display(),
        hash_hex(&params.content_hash())
            .chars()
            .take(12)
            .collect::<String>()
    );
    Ok(())
}

fn load_model(run: &Run, checkpoint: &Option<PathBuf>) -> Result<(AnyModel, PathBuf)> {
    let path = match checkpoint {
        Some(p) => {
            if !p.exists() {
                return Err(CoreError::Config(format!(
                    "checkpoint {} does not exist; run `condex train` first",
                    p.display()
                )));
            }
            p.clone()
        }
        None => {
            let p = run.default_checkpoint()?;
            if !p.exists() {
                return Err(CoreError::Config(format!(
                    "checkpoint {} is missing; run `condex train` on this run directory first",
                    p.display()
                )));
            }
            p
        }
    };
    let model = AnyModel::from_params(ModelParams::load(&path)?)?;
    Ok((model, path))
}

/// Build one evaluation episode per object: fixed-size context plus disjoint
/// targets, drawn deterministically from the object's own seed stream.
fn build_episodes(
    pools: &[ObjectObservations],
    k: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<Episode>> {
    pools
        .iter()
        .map(|pool| {
            let mut rng = rng_from(
                seed,
                &[salts::EVAL, pool.key.category as u64, pool.key.instance],
            );
            make_episode(&pool.observations, (k, k), m, &mut rng)
        })
        .collect()
}

fn offline_split_records(
    run: &Run,
    model: &AnyModel,
    id: &str,
    manifest: &Manifest,
    dataset_split: &DatasetSplit,
    split: EvalSplit,
    k_values: &[usize],
    seed: u64,
) -> Result<(Vec<MetricRecord>, usize)> {
    let arch = model.architecture();
    if arch.patch_size != manifest.patch_size {
        return Err(CoreError::Config(format!(
            "checkpoint expects {} px patches but the shards hold {} px",
            arch.patch_size, manifest.patch_size
        )));
    }
    let pools = run.pools_in(manifest, dataset_split, split_set(split))?;
    if pools.is_empty() {
        return Ok((Vec::new(), 0));
    }
    let kmax = *k_values.iter().max().expect("k_values checked non-empty");
    let m = run.cfg.eval.targets_per_episode;
    let episodes = build_episodes(&pools, kmax, m, seed)?;
    let out = error_vs_context_curve(model, id, split, &episodes, k_values, seed)?;
    for (k, key) in &out.skipped {
        eprintln!(
            "warning: object {}/{} has too few observations for K={k}; skipped",
            key.category, key.instance
        );
    }
    Ok((out.records, episodes.len()))
}

pub fn eval_error(
    config: &Option<PathBuf>,
    out: &Path,
    seed: u64,
    checkpoint: &Option<PathBuf>,
    k: Option<usize>,
) -> Result<()> {
    let run = Run::open(config, out)?;
    let manifest = run.manifest()?;
    let (_, dataset_split) = run.dataset()?;
    let (model, _) = load_model(&run, checkpoint)?;
    let id = model_id(&model);
    let k = k.unwrap_or(run.cfg.training.k_max);

    let mut records = Vec::new();
    let mut summary = format!("eval-error {id} K={k}:");
    for split in [EvalSplit::Cross, EvalSplit::Intra] {
        let (recs, n) =
            offline_split_records(&run, &model, &id, &manifest, &dataset_split, split, &[k], seed)?;
        if recs.is_empty() {
            let _ = write!(summary, " {split} (no objects)");
            continue;
        }
        let err = recs[0].error_rate.unwrap_or(f64::NAN);
        let _ = write!(summary, " {split} {err:.4} ({n} episodes)");
        records.extend(recs);
    }
    if records.is_empty() {
        return Err(CoreError::EmptyMetric("no split had evaluable objects".into()));
    }
    let dir = run.ensure("metrics")?;
    let path = dir.join(format!("eval-error-{id}-seed{seed}.csv"));
    write_metrics_csv(&path, &records)?;
    println!("{summary} -> {}", path.display());
    Ok(())
}

pub fn curve(
    config: &Option<PathBuf>,
    out: &Path,
    seed: u64,
    checkpoint: &Option<PathBuf>,
    split: &str,
) -> Result<()> {
    let run = Run::open(config, out)?;
    let manifest = run.manifest()?;
    let (_, dataset_split) = run.dataset()?;
    let (model, _) = load_model(&run, checkpoint)?;
    let id = model_id(&model);
    let split: EvalSplit = split.parse()?;
    let k_values = run.cfg.eval.k_values.clone();

    let (records, n) = offline_split_records(
        &run,
        &model,
        &id,
        &manifest,
        &dataset_split,
        split,
        &k_values,
        seed,
    )?;
    if records.is_empty() {
        return Err(CoreError::EmptyMetric(format!("no objects in split {split}")));
    }
    let dir = run.ensure("metrics")?;
    let csv_path = dir.join(format!("curve-{id}-{split}-seed{seed}.csv"));
    write_metrics_csv(&csv_path, &records)?;
    let points: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.k as f64, r.error_rate.unwrap_or(f64::NAN)))
        .collect();
    let svg = line_chart(
        &format!("{id} on {split} episodes"),
        "context size K",
        "error rate",
        &[ChartSeries {
            label: id.clone(),
            points,
        }],
    )?;
    let svg_path = dir.join(format!("curve-{id}-{split}-seed{seed}.svg"));
    fs::write(&svg_path, svg)?;
    let first = &records[0];
    let last = &records[records.len() - 1];
    println!(
        "curve {id} {split}: K={} err {:.4} -> K={} err {:.4} over {n} episodes -> {}",
        first.k,
        first.error_rate.unwrap_or(f64::NAN),
        last.k,
        last.error_rate.unwrap_or(f64::NAN),
        csv_path.display()
    );
    Ok(())
}

pub fn eval_grasp(
    config: &Option<PathBuf>,
    out: &Path,
    seed: u64,
    checkpoint: &Option<PathBuf>,
    object_count: usize,
    split: &str,
) -> Result<()> {
    let run = Run::open(config, out)?;
    let (model, _) = load_model(&run, checkpoint)?;
    let id = model_id(&model);
    let split: EvalSplit = split.parse()?;
    if object_count == 0 {
        return Err(CoreError::invalid("need >= 1 benchmark object"));
    }

    let (objects, dataset_split) = run.dataset()?;
    let eligible: Vec<&HeterogeneousObject> = objects
        .iter()
        .filter(|o| dataset_split.assignment(o.key()) == Some(split_set(split)))
        .collect();
    if eligible.is_empty() {
        return Err(CoreError::EmptyMetric(format!("no objects in split {split}")));
    }
    let n = object_count.min(eligible.len());
    let picked: Vec<HeterogeneousObject> = (0..n)
        .map(|i| eligible[i * eligible.len() / n].clone())
        .collect();

    // The benchmark renders its own patches, so it follows the checkpoint.
    let mut cp = run.cfg.collect_params();
    cp.patch_size = model.architecture().patch_size;
    let pp = run.cfg.physics_params();
    let rc = run.cfg.render_config();
    let bench_cfg = run.cfg.benchmark_config(seed)?;
    let bench = benchmark_grasping(&model, &id, split, &picked, &bench_cfg, &cp, &pp, &rc)?;
    let floor = random_grasp_floor(&picked, split, bench_cfg.trials, &cp, &pp, seed)?;

    let dir = run.ensure("metrics")?;
    let path = dir.join(format!(
        "eval-grasp-{id}-{}-seed{seed}.csv",
        bench_cfg.strategy
    ));
    let records = vec![bench.record.clone(), floor.clone()];
    write_metrics_csv(&path, &records)?;
    println!(
        "eval-grasp {id} {} {split}: accuracy {:.3}, robust {:.3}, context positives {}, \
         random floor {:.3} ({n} objects) -> {}",
        bench_cfg.strategy,
        bench.record.grasp_accuracy.unwrap_or(f64::NAN),
        bench.record.robust_rate.unwrap_or(f64::NAN),
        bench
            .context_positive_rate
            .map_or("n/a".to_string(), |r| format!("{r:.3}")),
        floor.grasp_accuracy.unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

pub fn export(config: &Option<PathBuf>, out: &Path) -> Result<()> {
    let run = Run::open(config, out)?;
    let dir = run.ensure("export")?;

    // Merge every metrics CSV, keeping one header.
    let metrics_dir = run.root.join("metrics");
    let mut names: Vec<PathBuf> = Vec::new();
    if metrics_dir.is_dir() {
        for entry in fs::read_dir(&metrics_dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "csv") {
                names.push(path);
            }
        }
    }
    names.sort();
    let mut merged = String::from(condex_core::eval::CSV_HEADER);
    merged.push('\n');
    let mut rows = 0_usize;
    for path in &names {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == condex_core::eval::CSV_HEADER => {}
            _ => continue, // not a metrics table (e.g. a loss curve)
        }
        for line in lines {
            merged.push_str(line);
            merged.push('\n');
            rows += 1;
        }
    }
    fs::write(dir.join("metrics.csv"), merged)?;
    fs::write(dir.join(RUN_CONFIG), run.cfg.to_toml_string()?)?;

    // Inventory of everything in the run, export dir excluded.
    let mut listing = Vec::new();
    walk(&run.root, &run.root, &dir, &mut listing)?;
    listing.sort();
    let mut inventory = String::new();
    let _ = writeln!(inventory, "config {}", hash_hex(&run.hash));
    for (rel, bytes) in &listing {
        let _ = writeln!(inventory, "{bytes:>12} {rel}");
    }
    fs::write(dir.join("inventory.txt"), inventory)?;
    println!(
        "exported {rows} metric row(s) and {} file(s) to {}",
        listing.len(),
        dir.display()
    );
    Ok(())
}

fn walk(root: &Path, dir: &Path, skip: &Path, out: &mut Vec<(String, u64)>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path == skip {
            continue;
        }
        if path.is_dir() {
            walk(root, &path, skip, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            out.push((rel, path.metadata()?.len()));
        }
    }
    Ok(())
}
