//! Metrics, evaluation records and the report emitters built on top of them.

mod protocol;
mod svg;

pub use protocol::{
    benchmark_grasping, calibrate_clamp_force, error_vs_context_curve, random_grasp_floor,
    BenchmarkConfig, BenchmarkOutput, Calibrated, ContextStrategy, CurveOutput,
};
pub use svg::{line_chart, ChartSeries};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::collect::GraspObservation;
use crate::condex::{AnyModel, CondexModel, DexnetModel, IgmlModel};
use crate::error::{CoreError, Result};
use crate::render::GraspPatch;

/// Which side of the category split a record was measured on.
#[derive(Clone, Copy, Debug, Eq, PartialEq)]
pub enum EvalSplit {
    /// Held-out instances from training categories.
    Intra,
    /// Instances from categories never seen in training.
    Cross,
}

impl EvalSplit {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalSplit::Intra => "intra",
            EvalSplit::Cross => "cross",
        }
    }
}

impl fmt::Display for EvalSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalSplit {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intra" => Ok(EvalSplit::Intra),
            "cross" => Ok(EvalSplit::Cross),
            other => Err(CoreError::invalid(format!("unknown split '{other}'"))),
        }
    }
}

/// One evaluation measurement. Rates that a given protocol does not produce
/// stay `None` and serialize as empty CSV fields.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub model_id: String,
    pub split: EvalSplit,
    /// Context size the measurement was taken at.
    pub k: usize,
    pub error_rate: Option<f64>,
    pub grasp_accuracy: Option<f64>,
    pub robust_rate: Option<f64>,
    /// Episodes (offline) or objects (benchmark) that contributed.
    pub n_episodes: usize,
    pub seed: u64,
}

impl MetricRecord {
    pub fn validate(&self) -> Result<()> {
        if self.n_episodes == 0 {
            return Err(CoreError::invalid("a metric record needs >= 1 episode"));
        }
        for (name, rate) in [
            ("error_rate", self.error_rate),
            ("grasp_accuracy", self.grasp_accuracy),
            ("robust_rate", self.robust_rate),
        ] {
            if let Some(r) = rate {
                if !(0.0..=1.0).contains(&r) {
                    return Err(CoreError::invalid(format!("{name} {r} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Classification threshold: a prediction counts as positive at exactly 0.5.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Misclassification rate of thresholded success probabilities,
/// (false positives + false negatives) / all.
pub fn error_rate(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(CoreError::invalid(format!(
            "{} predictions against {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(CoreError::EmptyMetric("error rate over no predictions".into()));
    }
    let mut wrong = 0_usize;
    for (&p, &y) in predictions.iter().zip(labels) {
        if !p.is_finite() {
            return Err(CoreError::NonFinite("prediction".into()));
        }
        if y > 1 {
            return Err(CoreError::invalid(format!("label {y} is not 0/1")));
        }
        let decided = u8::from(p >= DECISION_THRESHOLD);
        wrong += usize::from(decided != y);
    }
    Ok(wrong as f64 / predictions.len() as f64)
}

/// Fraction of executed grasp trials that held the object.
pub fn grasp_accuracy(outcomes: &[u8]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(CoreError::EmptyMetric("accuracy over no trials".into()));
    }
    let mut ok = 0_usize;
    for &y in outcomes {
        if y > 1 {
            return Err(CoreError::invalid(format!("outcome {y} is not 0/1")));
        }
        ok += usize::from(y == 1);
    }
    Ok(ok as f64 / outcomes.len() as f64)
}

/// Fraction of predictions strictly above 0.5; exactly 0.5 does not count.
pub fn robust_grasping_rate(predictions: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(CoreError::EmptyMetric("robust rate over no predictions".into()));
    }
    for &p in predictions {
        if !p.is_finite() {
            return Err(CoreError::NonFinite("prediction".into()));
        }
    }
    let n = predictions.iter().filter(|&&p| p > DECISION_THRESHOLD).count();
    Ok(n as f64 / predictions.len() as f64)
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `wins + losses` fair coin flips. Ties must be dropped by the caller.
pub fn one_sided_sign_test(wins: usize, losses: usize) -> Result<f64> {
    let n = wins + losses;
    if n == 0 {
        return Err(CoreError::EmptyMetric("sign test over no pairs".into()));
    }
    if n > 62 {
        return Err(CoreError::invalid("sign test supports at most 62 pairs"));
    }
    let total = (1_u64 << n) as f64;
    let mut tail = 0.0;
    for i in wins..=n {
        tail += binomial(n, i) as f64;
    }
    Ok(tail / total)
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc = 1_u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}

/// Batch grasp scoring conditioned on a shared observation context.
/// The trained models implement this; evaluation code only sees the trait.
pub trait EpisodeScorer: Sync {
    fn score_targets(
        &self,
        context: &[GraspObservation],
        targets: &[GraspPatch],
    ) -> Result<Vec<f64>>;
}

impl EpisodeScorer for CondexModel {
    fn score_targets(
        &self,
        context: &[GraspObservation],
        targets: &[GraspPatch],
    ) -> Result<Vec<f64>> {
        self.predict_targets(context, targets)
    }
}

impl EpisodeScorer for DexnetModel {
    fn score_targets(
        &self,
        _context: &[GraspObservation],
        targets: &[GraspPatch],
    ) -> Result<Vec<f64>> {
        self.predict_batch(targets)
    }
}

impl EpisodeScorer for IgmlModel {
    fn score_targets(
        &self,
        context: &[GraspObservation],
        targets: &[GraspPatch],
    ) -> Result<Vec<f64>> {
        self.predict_targets(context, targets)
    }
}

impl EpisodeScorer for AnyModel {
    fn score_targets(
        &self,
        context: &[GraspObservation],
        targets: &[GraspPatch],
    ) -> Result<Vec<f64>> {
        self.predict_targets(context, targets)
    }
}

/// Column order of every metrics CSV this crate writes.
pub const CSV_HEADER: &str = "model_id,split,k,error_rate,grasp_accuracy,robust_rate,n_episodes,seed";

fn csv_rate(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{r}"),
        None => String::new(),
    }
}

/// Render records as CSV, one row per record, header first.
pub fn metrics_to_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.model_id,
            r.split,
            r.k,
            csv_rate(r.error_rate),
            csv_rate(r.grasp_accuracy),
            csv_rate(r.robust_rate),
            r.n_episodes,
            r.seed
        ));
    }
    out
}

/// Validate and write records to a CSV file.
pub fn write_metrics_csv(path: &Path, records: &[MetricRecord]) -> Result<()> {
    for r in records {
        r.validate()?;
    }
    std::fs::write(path, metrics_to_csv(records))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_rate_counts_both_kinds_of_mistakes() {
        // 30 grasps: 2 false positives, 1 false negative.
        let mut predictions = vec![0.9; 10];
        predictions.extend(vec![0.1; 20]);
        let mut labels = vec![1_u8; 10];
        labels.extend(vec![0_u8; 20]);
        predictions[0] = 0.2; // false negative
        predictions[10] = 0.8; // false positive
        predictions[11] = 0.51; // false positive
        assert_eq!(error_rate(&predictions, &labels).unwrap(), 0.1);
    }

    #[test]
    fn threshold_is_inclusive_so_a_constant_half_predictor_misses_negatives() {
        let predictions = vec![0.5; 10];
        let labels = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let got = error_rate(&predictions, &labels).unwrap();
        assert_eq!(got, 0.7); // exactly the fraction of negatives
    }

    #[test]
    fn accuracy_is_successes_over_trials() {
        let mut outcomes = vec![1_u8; 18];
        outcomes.extend(vec![0_u8; 12]);
        assert_eq!(grasp_accuracy(&outcomes).unwrap(), 0.6);
    }

    #[test]
    fn robust_rate_is_strict_at_the_threshold() {
        assert_eq!(robust_grasping_rate(&[0.5, 0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(robust_grasping_rate(&[0.500001, 0.4, 0.9, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn empty_inputs_are_rejected_not_defaulted() {
        assert!(matches!(error_rate(&[], &[]), Err(CoreError::EmptyMetric(_))));
        assert!(matches!(grasp_accuracy(&[]), Err(CoreError::EmptyMetric(_))));
        assert!(matches!(robust_grasping_rate(&[]), Err(CoreError::EmptyMetric(_))));
        assert!(error_rate(&[0.5], &[1, 0]).is_err());
        assert!(error_rate(&[f64::NAN], &[1]).is_err());
        assert!(grasp_accuracy(&[2]).is_err());
    }

    #[test]
    fn five_out_of_five_wins_is_significant_four_is_not() {
        let p5 = one_sided_sign_test(5, 0).unwrap();
        assert!((p5 - 0.03125).abs() < 1e-12);
        assert!(p5 < 0.05);
        let p4 = one_sided_sign_test(4, 1).unwrap();
        assert!((p4 - 0.1875).abs() < 1e-12);
        assert!(p4 >= 0.05);
        // Sanity: the tail at zero wins is the whole distribution.
        assert!((one_sided_sign_test(0, 5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout_is_stable() {
        let records = vec![
            MetricRecord {
                model_id: "condex-mean".into(),
                split: EvalSplit::Cross,
                k: 5,
                error_rate: Some(0.125),
                grasp_accuracy: None,
                robust_rate: None,
                n_episodes: 400,
                seed: 7,
            },
            MetricRecord {
                model_id: "dexnet".into(),
                split: EvalSplit::Intra,
                k: 0,
                error_rate: None,
                grasp_accuracy: Some(0.6),
                robust_rate: Some(0.5),
                n_episodes: 50,
                seed: 7,
            },
        ];
        for r in &records {
            r.validate().unwrap();
        }
        let csv = metrics_to_csv(&records);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "condex-mean,cross,5,0.125,,,400,7");
        assert_eq!(lines.next().unwrap(), "dexnet,intra,0,,0.6,0.5,50,7");
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn record_invariants_hold() {
        let mut r = MetricRecord {
            model_id: "m".into(),
            split: EvalSplit::Intra,
            k: 0,
            error_rate: Some(0.0),
            grasp_accuracy: None,
            robust_rate: None,
            n_episodes: 1,
            seed: 0,
        };
        r.validate().unwrap();
        r.error_rate = Some(1.5);
        assert!(r.validate().is_err());
        r.error_rate = Some(1.0);
        r.n_episodes = 0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn split_names_round_trip() {
        for s in [EvalSplit::Intra, EvalSplit::Cross] {
            assert_eq!(s.to_string().parse::<EvalSplit>().unwrap(), s);
        }
        assert!("extra".parse::<EvalSplit>().is_err());
    }
}
