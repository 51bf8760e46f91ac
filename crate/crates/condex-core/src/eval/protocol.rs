//! Evaluation protocols: error-vs-context curves, desk benchmark runs and
//! clamp-force calibration.

use rayon::prelude::*;

use crate::collect::{
    accumulated_context_collection, dataset_label_stats, sample_grasp_candidates, CollectParams,
    Episode, GraspObservation, GraspScorer,
};
use crate::error::{CoreError, Result};
use crate::eval::{
    error_rate, grasp_accuracy, robust_grasping_rate, EpisodeScorer, EvalSplit, MetricRecord,
};
use crate::objgen::{HeterogeneousObject, ObjectKey};
use crate::physics::{grasp_outcome, PhysicsParams};
use crate::render::{extract_grasp_patch, render_depth, GraspPatch, RenderConfig};
use crate::rng::{rng_from, salts};

/// Adapts batch scoring to the one-candidate interface the collector wants.
struct BatchScorer<'a, S: EpisodeScorer + ?Sized>(&'a S);

impl<S: EpisodeScorer + ?Sized> GraspScorer for BatchScorer<'_, S> {
    fn score(&self, context: &[GraspObservation], candidate: &GraspPatch) -> Result<f64> {
        Ok(self
            .0
            .score_targets(context, std::slice::from_ref(candidate))?[0])
    }
}

/// Curve records plus the episodes each context size had to leave out.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveOutput {
    pub records: Vec<MetricRecord>,
    /// (context size, object) pairs whose pool was smaller than the request.
    pub skipped: Vec<(usize, ObjectKey)>,
}

/// Error rate as a function of context size. Each episode keeps its targets
/// fixed and conditions on the first K context observations, so the curve
/// isolates the effect of added context. Episodes too small for a given K
/// are skipped and reported; a K nobody can serve produces no record.
pub fn error_vs_context_curve<S: EpisodeScorer + ?Sized>(
    scorer: &S,
    model_id: &str,
    split: EvalSplit,
    episodes: &[Episode],
    k_values: &[usize],
    seed: u64,
) -> Result<CurveOutput> {
    if episodes.is_empty() {
        return Err(CoreError::EmptyMetric("curve over no episodes".into()));
    }
    if k_values.is_empty() {
        return Err(CoreError::invalid("curve needs at least one context size"));
    }
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for &k in k_values {
        let mut usable = Vec::with_capacity(episodes.len());
        for ep in episodes {
            if ep.context.len() >= k {
                usable.push(ep);
            } else {
                skipped.push((k, ep.object_key));
            }
        }
        if usable.is_empty() {
            continue;
        }
        let scored: Vec<(Vec<f64>, Vec<u8>)> = usable
            .par_iter()
            .map(|ep| {
                let patches: Vec<GraspPatch> =
                    ep.target.iter().map(|o| o.patch.clone()).collect();
                let preds = scorer.score_targets(&ep.context[..k], &patches)?;
                let labels = ep.target.iter().map(|o| o.label).collect();
                Ok((preds, labels))
            })
            .collect::<Result<_>>()?;
        let mut predictions = Vec::new();
        let mut labels = Vec::new();
        for (p, l) in scored {
            predictions.extend(p);
            labels.extend(l);
        }
        records.push(MetricRecord {
            model_id: model_id.to_string(),
            split,
            k,
            error_rate: Some(error_rate(&predictions, &labels)?),
            grasp_accuracy: None,
            robust_rate: None,
            n_episodes: usable.len(),
            seed,
        });
    }
    Ok(CurveOutput { records, skipped })
}

/// How the benchmark gathers context before its scored trials.
#[derive(Clone, Copy, Debug, Eq, PartialEq)]
pub enum ContextStrategy {
    /// Uniform random grasps, labeled and handed over as-is.
    Random,
    /// Model-in-the-loop: each step executes the best-scored candidate.
    Accumulated,
}

impl ContextStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextStrategy::Random => "random",
            ContextStrategy::Accumulated => "accumulated",
        }
    }
}

impl std::fmt::Display for ContextStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ContextStrategy {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(ContextStrategy::Random),
            "accumulated" => Ok(ContextStrategy::Accumulated),
            other => Err(CoreError::invalid(format!("unknown strategy '{other}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkConfig {
    /// Scored grasp attempts per object.
    pub trials: usize,
    /// Candidates ranked per attempt.
    pub pool_size: usize,
    /// Context observations gathered per object before the trials.
    /// Zero means every trial is scored with an empty context.
    pub context_budget: usize,
    pub strategy: ContextStrategy,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            trials: 30,
            pool_size: 20,
            context_budget: 15,
            strategy: ContextStrategy::Random,
            seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.pool_size == 0 {
            return Err(CoreError::invalid(
                "benchmark needs >= 1 trial and a non-empty candidate pool",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkOutput {
    pub record: MetricRecord,
    /// Positive fraction of all gathered context labels; `None` when the
    /// context budget is zero.
    pub context_positive_rate: Option<f64>,
    /// Success rate per object, in input order.
    pub per_object: Vec<(ObjectKey, f64)>,
}

struct ObjectRun {
    key: ObjectKey,
    context_labels: Vec<u8>,
    outcomes: Vec<u8>,
    chosen_scores: Vec<f64>,
}

fn run_object<S: EpisodeScorer + ?Sized>(
    scorer: &S,
    obj: &HeterogeneousObject,
    cfg: &BenchmarkConfig,
    cp: &CollectParams,
    pp: &PhysicsParams,
    rc: &RenderConfig,
) -> Result<ObjectRun> {
    let key = obj.key();
    let mut rng = rng_from(cfg.seed, &[salts::EVAL, key.category as u64, key.instance]);
    let img = render_depth(obj, rc)?;

    let context: Vec<GraspObservation> = if cfg.context_budget == 0 {
        Vec::new()
    } else {
        match cfg.strategy {
            ContextStrategy::Random => {
                let cands = sample_grasp_candidates(
                    obj,
                    cfg.context_budget,
                    pp,
                    cp.finger_descent,
                    &mut rng,
                )?;
                cands
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
                    .collect::<Result<_>>()?
            }
            ContextStrategy::Accumulated => accumulated_context_collection(
                &BatchScorer(scorer),
                obj,
                cfg.context_budget,
                cfg.pool_size,
                cp,
                pp,
                rc,
                &mut rng,
            )?,
        }
    };

    let mut outcomes = Vec::with_capacity(cfg.trials);
    let mut chosen_scores = Vec::with_capacity(cfg.trials);
    for _ in 0..cfg.trials {
        let cands = sample_grasp_candidates(obj, cfg.pool_size, pp, cp.finger_descent, &mut rng)?;
        let patches: Vec<GraspPatch> = cands
            .iter()
            .map(|c| extract_grasp_patch(&img, c, cp.patch_size, rc.sampling))
            .collect::<Result<_>>()?;
        let scores = scorer.score_targets(&context, &patches)?;
        if scores.len() != cands.len() {
            return Err(CoreError::Contract("scorer dropped candidates".into()));
        }
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if !s.is_finite() {
                return Err(CoreError::NonFinite("grasp score".into()));
            }
            if s > scores[best] {
                best = i;
            }
        }
        outcomes.push(u8::from(grasp_outcome(obj, &cands[best], pp)?));
        chosen_scores.push(scores[best]);
    }

    Ok(ObjectRun {
        key,
        context_labels: context.iter().map(|o| o.label).collect(),
        outcomes,
        chosen_scores,
    })
}

/// Desk benchmark: per object, gather context by the configured strategy,
/// then run scored grasp trials against the oracle. Objects evaluate in
/// parallel on per-object seeds, so results do not depend on scheduling.
pub fn benchmark_grasping<S: EpisodeScorer + ?Sized>(
    scorer: &S,
    model_id: &str,
    split: EvalSplit,
    objects: &[HeterogeneousObject],
    cfg: &BenchmarkConfig,
    cp: &CollectParams,
    pp: &PhysicsParams,
    rc: &RenderConfig,
) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    if objects.is_empty() {
        return Err(CoreError::EmptyMetric("benchmark over no objects".into()));
    }
    let runs: Vec<ObjectRun> = objects
        .par_iter()
        .map(|obj| run_object(scorer, obj, cfg, cp, pp, rc))
        .collect::<Result<_>>()?;

    let mut outcomes = Vec::new();
    let mut scores = Vec::new();
    let mut context_labels = Vec::new();
    let mut per_object = Vec::with_capacity(runs.len());
    for run in &runs {
        per_object.push((run.key, grasp_accuracy(&run.outcomes)?));
        outcomes.extend_from_slice(&run.outcomes);
        scores.extend_from_slice(&run.chosen_scores);
        context_labels.extend_from_slice(&run.context_labels);
    }
    let context_positive_rate = if context_labels.is_empty() {
        None
    } else {
        Some(grasp_accuracy(&context_labels)?)
    };
    let record = MetricRecord {
        model_id: model_id.to_string(),
        split,
        k: cfg.context_budget,
        error_rate: None,
        grasp_accuracy: Some(grasp_accuracy(&outcomes)?),
        robust_rate: Some(robust_grasping_rate(&scores)?),
        n_episodes: objects.len(),
        seed: cfg.seed,
    };
    record.validate()?;
    Ok(BenchmarkOutput {
        record,
        context_positive_rate,
        per_object,
    })
}

/// Score-free floor: every trial executes one uniformly sampled grasp.
pub fn random_grasp_floor(
    objects: &[HeterogeneousObject],
    split: EvalSplit,
    trials: usize,
    cp: &CollectParams,
    pp: &PhysicsParams,
    seed: u64,
) -> Result<MetricRecord> {
    if trials == 0 {
        return Err(CoreError::invalid("floor needs >= 1 trial"));
    }
    if objects.is_empty() {
        return Err(CoreError::EmptyMetric("floor over no objects".into()));
    }
    let outcomes: Vec<Vec<u8>> = objects
        .par_iter()
        .map(|obj| {
            let key = obj.key();
            let mut rng = rng_from(seed, &[salts::EVAL, key.category as u64, key.instance]);
            let cands = sample_grasp_candidates(obj, trials, pp, cp.finger_descent, &mut rng)?;
            cands
                .iter()
                .map(|c| Ok(u8::from(grasp_outcome(obj, c, pp)?)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let flat: Vec<u8> = outcomes.into_iter().flatten().collect();
    let record = MetricRecord {
        model_id: "random".into(),
        split,
        k: 0,
        error_rate: None,
        grasp_accuracy: Some(grasp_accuracy(&flat)?),
        robust_rate: None,
        n_episodes: objects.len(),
        seed,
    };
    record.validate()?;
    Ok(record)
}

/// Clamp-force search result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibrated {
    pub clamp_force: f64,
    pub achieved_rate: f64,
    pub bisection_steps: usize,
}

const FORCE_LO: f64 = 1e-3;
const FORCE_HI: f64 = 2000.0;
const MAX_BISECTIONS: usize = 30;

/// Find the per-jaw clamp force whose random-grasp positive rate lands
/// within `tolerance` of `target_rate`. The candidate stream is fixed by the
/// seed, so the rate is exactly monotone in the force and bisection applies.
pub fn calibrate_clamp_force(
    objects: &[HeterogeneousObject],
    cp: &CollectParams,
    base: &PhysicsParams,
    target_rate: f64,
    tolerance: f64,
    seed: u64,
) -> Result<Calibrated> {
    if objects.is_empty() {
        return Err(CoreError::EmptyMetric("calibration over no objects".into()));
    }
    if !(0.0..1.0).contains(&target_rate) || target_rate == 0.0 {
        return Err(CoreError::invalid(format!(
            "target rate {target_rate} outside (0, 1)"
        )));
    }
    if !(tolerance > 0.0) {
        return Err(CoreError::invalid("tolerance must be positive"));
    }
    let rate = |force: f64| -> Result<f64> {
        let pp = PhysicsParams {
            clamp_force: force,
            ..*base
        };
        let stats = dataset_label_stats(objects, cp, &pp, seed)?;
        Ok(stats.positives as f64 / stats.total as f64)
    };

    let mut lo = FORCE_LO;
    let mut hi = FORCE_HI;
    let mut rate_lo = rate(lo)?;
    let mut rate_hi = rate(hi)?;
    for (force, r) in [(lo, rate_lo), (hi, rate_hi)] {
        if (r - target_rate).abs() <= tolerance {
            return Ok(Calibrated {
                clamp_force: force,
                achieved_rate: r,
                bisection_steps: 0,
            });
        }
    }
    if target_rate > rate_hi || target_rate < rate_lo {
        return Err(CoreError::Calibration {
            target: target_rate,
            low: rate_lo,
            high: rate_hi,
        });
    }

    for step in 1..=MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let r = rate(mid)?;
        if (r - target_rate).abs() <= tolerance {
            return Ok(Calibrated {
                clamp_force: mid,
                achieved_rate: r,
                bisection_steps: step,
            });
        }
        if r < target_rate {
            lo = mid;
            rate_lo = r;
        } else {
            hi = mid;
            rate_hi = r;
        }
    }
    Err(CoreError::Calibration {
        target: target_rate,
        low: rate_lo,
        high: rate_hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collect::collect_observations;
    use crate::objgen::generate_letter_object;

    fn letters(n: usize) -> Vec<HeterogeneousObject> {
        (0..n)
            .map(|i| generate_letter_object(i as u32 % 10, 1000 + i as u64).unwrap())
            .collect()
    }

    fn setup() -> (CollectParams, PhysicsParams, RenderConfig) {
        let cp = CollectParams {
            grasps_per_object: 12,
            patch_size: 32,
            ..CollectParams::default()
        };
        (cp, PhysicsParams::default(), RenderConfig::default())
    }

    /// Reads the label planted in the first pixel, but only once any context
    /// is available; blind otherwise.
    struct CheatScorer;

    impl EpisodeScorer for CheatScorer {
        fn score_targets(
            &self,
            context: &[GraspObservation],
            targets: &[GraspPatch],
        ) -> Result<Vec<f64>> {
            Ok(targets
                .iter()
                .map(|t| {
                    if context.is_empty() {
                        0.9
                    } else if t.pixels[0] > 0.5 {
                        0.9
                    } else {
                        0.1
                    }
                })
                .collect())
        }
    }

    struct ConstantScorer(f64);

    impl EpisodeScorer for ConstantScorer {
        fn score_targets(
            &self,
            _context: &[GraspObservation],
            targets: &[GraspPatch],
        ) -> Result<Vec<f64>> {
            Ok(vec![self.0; targets.len()])
        }
    }

    fn planted_obs(label: u8, n: usize) -> Vec<GraspObservation> {
        let (_, pp, _) = setup();
        (0..n)
            .map(|i| GraspObservation {
                object_key: ObjectKey {
                    category: 0,
                    instance: i as u64,
                },
                patch: GraspPatch {
                    size: 2,
                    pixels: vec![label as f64, 0.0, 0.0, 0.0],
                    grasp_z: 0.01,
                },
                grasp: crate::physics::GraspCandidate {
                    position: (0.0, 0.0),
                    angle: 0.0,
                    jaw_opening: pp.max_jaw_opening,
                    z: 0.0,
                },
                label,
            })
            .collect()
    }

    #[test]
    fn curve_conditions_on_prefixes_and_reports_skips() {
        // 4 episodes, context 4, three targets: one negative, two positive.
        let episodes: Vec<Episode> = (0..4)
            .map(|i| {
                let mut target = planted_obs(0, 1);
                target.extend(planted_obs(1, 2));
                Episode {
                    object_key: ObjectKey {
                        category: 0,
                        instance: i,
                    },
                    context: planted_obs(1, 4),
                    target,
                }
            })
            .collect();
        let out = error_vs_context_curve(
            &CheatScorer,
            "cheat",
            EvalSplit::Intra,
            &episodes,
            &[0, 2, 4, 9],
            5,
        )
        .unwrap();

        // K = 9 exceeds every pool: skipped entirely, no record.
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.skipped.len(), 4);
        assert!(out.skipped.iter().all(|&(k, _)| k == 9));

        // Blind at K = 0 the scorer calls everything positive: one miss in 3.
        let at = |k: usize| {
            out.records
                .iter()
                .find(|r| r.k == k)
                .unwrap()
                .error_rate
                .unwrap()
        };
        assert!((at(0) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(at(2), 0.0);
        assert_eq!(at(4), 0.0);
        for r in &out.records {
            assert_eq!(r.n_episodes, 4);
            assert_eq!(r.model_id, "cheat");
            assert_eq!(r.seed, 5);
            r.validate().unwrap();
        }
    }

    #[test]
    fn curve_rejects_empty_inputs() {
        assert!(matches!(
            error_vs_context_curve(&CheatScorer, "m", EvalSplit::Intra, &[], &[0], 0),
            Err(CoreError::EmptyMetric(_))
        ));
        let episodes: Vec<Episode> = vec![Episode {
            object_key: ObjectKey {
                category: 0,
                instance: 0,
            },
            context: planted_obs(1, 1),
            target: planted_obs(1, 1),
        }];
        assert!(error_vs_context_curve(&CheatScorer, "m", EvalSplit::Intra, &episodes, &[], 0)
            .is_err());
    }

    #[test]
    fn benchmark_is_deterministic_and_respects_the_budget() {
        let objects = letters(3);
        let (cp, pp, rc) = setup();
        let cfg = BenchmarkConfig {
            trials: 5,
            pool_size: 4,
            context_budget: 3,
            strategy: ContextStrategy::Random,
            seed: 9,
        };
        let a = benchmark_grasping(
            &ConstantScorer(0.7),
            "const",
            EvalSplit::Cross,
            &objects,
            &cfg,
            &cp,
            &pp,
            &rc,
        )
        .unwrap();
        let b = benchmark_grasping(
            &ConstantScorer(0.7),
            "const",
            EvalSplit::Cross,
            &objects,
            &cfg,
            &cp,
            &pp,
            &rc,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.record.n_episodes, 3);
        assert_eq!(a.record.k, 3);
        assert_eq!(a.per_object.len(), 3);
        // Every chosen score is 0.7, so the whole run counts as robust.
        assert_eq!(a.record.robust_rate, Some(1.0));
        let rate = a.context_positive_rate.unwrap();
        assert!((0.0..=1.0).contains(&rate));
        a.record.validate().unwrap();

        let no_ctx = BenchmarkConfig {
            context_budget: 0,
            ..cfg
        };
        let c = benchmark_grasping(
            &ConstantScorer(0.3),
            "const",
            EvalSplit::Cross,
            &objects,
            &no_ctx,
            &cp,
            &pp,
            &rc,
        )
        .unwrap();
        assert_eq!(c.context_positive_rate, None);
        assert_eq!(c.record.robust_rate, Some(0.0));
    }

    #[test]
    fn accumulated_strategy_runs_the_collector() {
        let objects = letters(2);
        let (cp, pp, rc) = setup();
        let cfg = BenchmarkConfig {
            trials: 3,
            pool_size: 4,
            context_budget: 2,
            strategy: ContextStrategy::Accumulated,
            seed: 1,
        };
        let out = benchmark_grasping(
            &ConstantScorer(0.6),
            "const",
            EvalSplit::Intra,
            &objects,
            &cfg,
            &cp,
            &pp,
            &rc,
        )
        .unwrap();
        // 2 objects x 2 gathered observations feed the context rate.
        assert!(out.context_positive_rate.is_some());
        assert_eq!(out.record.grasp_accuracy.map(|a| (0.0..=1.0).contains(&a)), Some(true));
    }

    #[test]
    fn floor_runs_without_a_model() {
        let objects = letters(3);
        let (cp, pp, _) = setup();
        let a = random_grasp_floor(&objects, EvalSplit::Cross, 6, &cp, &pp, 2).unwrap();
        let b = random_grasp_floor(&objects, EvalSplit::Cross, 6, &cp, &pp, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.model_id, "random");
        assert_eq!(a.robust_rate, None);
        assert!(a.grasp_accuracy.is_some());
    }

    #[test]
    fn label_rate_is_monotone_in_clamp_force() {
        let objects = letters(6);
        let (cp, pp, _) = setup();
        let rate = |f: f64| {
            let p = PhysicsParams {
                clamp_force: f,
                ..pp
            };
            let s = dataset_label_stats(&objects, &cp, &p, 3).unwrap();
            s.positives as f64 / s.total as f64
        };
        let (r10, r40, r160) = (rate(10.0), rate(40.0), rate(160.0));
        assert!(r10 <= r40 && r40 <= r160, "{r10} {r40} {r160}");
        assert!(rate(FORCE_LO) == 0.0);
    }

    #[test]
    fn calibration_converges_within_the_step_budget() {
        let objects = letters(8);
        let (cp, pp, _) = setup();
        // Aim inside the reachable band so the search must succeed.
        let ceiling = {
            let p = PhysicsParams {
                clamp_force: FORCE_HI,
                ..pp
            };
            let s = dataset_label_stats(&objects, &cp, &p, 3).unwrap();
            s.positives as f64 / s.total as f64
        };
        let target = 0.6 * ceiling;
        let got = calibrate_clamp_force(&objects, &cp, &pp, target, 0.08, 3).unwrap();
        assert!(got.bisection_steps <= MAX_BISECTIONS);
        assert!((got.achieved_rate - target).abs() <= 0.08);
        assert!(got.clamp_force > 0.0);

        // Same seed, same answer.
        let again = calibrate_clamp_force(&objects, &cp, &pp, target, 0.08, 3).unwrap();
        assert_eq!(got, again);
    }

    #[test]
    fn unreachable_targets_report_the_achieved_range() {
        let objects = letters(4);
        let (cp, pp, _) = setup();
        match calibrate_clamp_force(&objects, &cp, &pp, 0.999, 1e-4, 3) {
            Err(CoreError::Calibration { target, low, high }) => {
                assert_eq!(target, 0.999);
                assert!(low <= high);
                assert!(high < 0.999);
            }
            other => panic!("expected a calibration error, got {other:?}"),
        }
        assert!(calibrate_clamp_force(&objects, &cp, &pp, 0.0, 0.1, 3).is_err());
        assert!(calibrate_clamp_force(&[], &cp, &pp, 0.4, 0.1, 3).is_err());
    }

    #[test]
    fn curve_and_collector_agree_on_observation_shapes() {
        // End-to-end smoke: real observations through the curve path.
        let obj = generate_letter_object(2, 7).unwrap();
        let (cp, pp, rc) = setup();
        let mut rng = rng_from(11, &[salts::EVAL]);
        let pool = collect_observations(&obj, &cp, &pp, &rc, &mut rng).unwrap();
        let episodes = vec![Episode {
            object_key: obj.key(),
            context: pool[..6].to_vec(),
            target: pool[6..10].to_vec(),
        }];
        let out = error_vs_context_curve(
            &ConstantScorer(0.8),
            "const",
            EvalSplit::Intra,
            &episodes,
            &[0, 3, 6],
            11,
        )
        .unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.skipped.is_empty());
        // A constant positive scorer's error is the negative fraction.
        let negatives = pool[6..10].iter().filter(|o| o.label == 0).count() as f64;
        for r in &out.records {
            assert!((r.error_rate.unwrap() - negatives / 4.0).abs() < 1e-12);
        }
    }
}
