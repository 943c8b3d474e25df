//! Sample-wise classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `C x C` counts; rows are true classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.classes + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Shape(format!(
                "confusion matrix: {} counts for {classes} classes",
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    /// Merge another matrix into this one.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Shape(format!(
                "confusion merge: {} vs {} classes",
                other.classes, self.classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Count (truth, prediction) pairs over valid positions only.
pub fn confusion(
    pred: &[usize],
    truth: &[usize],
    valid: &[bool],
    classes: usize,
) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() || pred.len() != valid.len() {
        return Err(Error::Shape(format!(
            "confusion: lengths pred {} truth {} valid {}",
            pred.len(),
            truth.len(),
            valid.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for ((&p, &t), &v) in pred.iter().zip(truth).zip(valid) {
        if v {
            if p >= classes || t >= classes {
                return Err(Error::Shape(format!(
                    "confusion: label {}/{} out of range for {classes} classes",
                    t, p
                )));
            }
            cm.add(t, p);
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class precision/recall/F1. A zero denominator yields 0; classes
/// absent from both truth and prediction come back as `None`.
pub fn per_class_scores(cm: &ConfusionMatrix) -> Vec<Option<ClassScores>> {
    let c = cm.classes();
    (0..c)
        .map(|k| {
            let tp = cm.get(k, k) as f64;
            let mut fp = 0.0;
            let mut fn_ = 0.0;
            for j in 0..c {
                if j != k {
                    fp += cm.get(j, k) as f64;
                    fn_ += cm.get(k, j) as f64;
                }
            }
            if tp + fp + fn_ == 0.0 {
                return None;
            }
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            let support = (0..c).map(|j| cm.get(k, j)).sum();
            Some(ClassScores { precision, recall, f1, support })
        })
        .collect()
}

/// Macro-averaged F1. Classes absent from both truth and prediction are
/// excluded from the average; `exclude_null` additionally removes the
/// null class.
pub fn mean_f1(cm: &ConfusionMatrix, exclude_null: bool, null_class: Option<usize>) -> Result<f64> {
    if cm.total() == 0 {
        return Err(Error::Eval("mean_f1 of an empty confusion matrix".into()));
    }
    let scores = per_class_scores(cm);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, s) in scores.iter().enumerate() {
        if exclude_null && Some(k) == null_class {
            continue;
        }
        if let Some(s) = s {
            sum += s.f1;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Eval("mean_f1: no class present in truth or prediction".into()));
    }
    Ok(sum / n as f64)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Eval("accuracy of an empty confusion matrix".into()));
    }
    let trace: u64 = (0..cm.classes()).map(|k| cm.get(k, k)).sum();
    Ok(trace as f64 / total as f64)
}

/// Best sensitivity subject to specificity >= `target_spec`, sweeping
/// thresholds over the observed score values plus `+inf`. A sample is
/// positive when `score >= threshold`; ties between thresholds resolve
/// to the higher threshold. No interpolation.
pub fn sensitivity_at_specificity(
    scores: &[f64],
    labels: &[bool],
    target_spec: f64,
) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "sensitivity_at_specificity: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Eval(
            "sensitivity_at_specificity needs both classes present".into(),
        ));
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let mut best: Option<(f64, f64)> = None; // (sensitivity, threshold)
    for &th in &thresholds {
        let mut tp = 0usize;
        let mut tn = 0usize;
        for (&s, &l) in scores.iter().zip(labels) {
            let predicted_pos = s >= th;
            if l && predicted_pos {
                tp += 1;
            }
            if !l && !predicted_pos {
                tn += 1;
            }
        }
        let spec = tn as f64 / neg as f64;
        if spec >= target_spec {
            let sens = tp as f64 / pos as f64;
            let better = match best {
                None => true,
                Some((bs, bt)) => sens > bs || (sens == bs && th > bt),
            };
            if better {
                best = Some((sens, th));
            }
        }
    }
    // +inf always satisfies the constraint (everything negative).
    Ok(best.expect("infinite threshold qualifies"))
}

/// JSON-serializable metrics report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: u64,
    pub accuracy: f64,
    pub mean_f1: f64,
    pub mean_f1_excl_null: Option<f64>,
    pub per_class: Vec<Option<ClassScores>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binary: Option<BinaryReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinaryReport {
    pub positive_class: usize,
    pub target_specificity: f64,
    pub sensitivity: f64,
    pub threshold: f64,
}

pub fn report(cm: &ConfusionMatrix, null_class: Option<usize>) -> Result<MetricsReport> {
    Ok(MetricsReport {
        samples: cm.total(),
        accuracy: accuracy(cm)?,
        mean_f1: mean_f1(cm, false, null_class)?,
        mean_f1_excl_null: match null_class {
            Some(_) => mean_f1(cm, true, null_class).ok(),
            None => None,
        },
        per_class: per_class_scores(cm),
        binary: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let truth = vec![0, 1, 2, 1, 0];
        let cm = confusion(&truth, &truth, &[true; 5], 3).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                if t != p {
                    assert_eq!(cm.get(t, p), 0);
                }
            }
        }
        assert_eq!(mean_f1(&cm, false, None).unwrap(), 1.0);
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
    }

    #[test]
    fn all_invalid_is_zero_matrix() {
        let cm = confusion(&[0, 1], &[1, 0], &[false, false], 2).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(mean_f1(&cm, false, None).is_err());
        assert!(accuracy(&cm).is_err());
    }

    #[test]
    fn confusion_matches_pair_counting_oracle() {
        let mut rng = RngStream::new(3, 3);
        let n = 500;
        let truth: Vec<usize> = (0..n).map(|_| rng.index(4).unwrap()).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.index(4).unwrap()).collect();
        let valid: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.8).collect();
        let cm = confusion(&pred, &truth, &valid, 4).unwrap();
        for t in 0..4 {
            for p in 0..4 {
                let expect = (0..n)
                    .filter(|&i| valid[i] && truth[i] == t && pred[i] == p)
                    .count() as u64;
                assert_eq!(cm.get(t, p), expect);
            }
        }
    }

    #[test]
    fn binary_hand_example_is_eleven_fifteenths() {
        // cm [[5,5],[0,10]]: class0 P=1, R=.5, F1=2/3; class1 P=2/3, R=1, F1=0.8.
        let cm = ConfusionMatrix::from_counts(2, vec![5, 5, 0, 10]).unwrap();
        let scores = per_class_scores(&cm);
        let s0 = scores[0].as_ref().unwrap();
        let s1 = scores[1].as_ref().unwrap();
        assert_eq!(s0.precision, 1.0);
        assert_eq!(s0.recall, 0.5);
        assert!((s0.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((s1.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s1.recall, 1.0);
        assert!((s1.f1 - 0.8).abs() < 1e-15);
        let m = mean_f1(&cm, false, None).unwrap();
        assert!((m - 11.0 / 15.0).abs() < 1e-15, "mean {m}");
    }

    #[test]
    fn absent_class_excluded_but_unpredicted_class_scores_zero() {
        // Class 2 never appears anywhere: excluded. Class 1 appears in
        // truth but never predicted: contributes F1 = 0.
        let cm = ConfusionMatrix::from_counts(3, vec![4, 0, 0, 2, 0, 0, 0, 0, 0]).unwrap();
        let scores = per_class_scores(&cm);
        assert!(scores[2].is_none());
        assert_eq!(scores[1].as_ref().unwrap().f1, 0.0);
        let m = mean_f1(&cm, false, None).unwrap();
        let f0 = scores[0].as_ref().unwrap().f1;
        assert!((m - f0 / 2.0).abs() < 1e-15);
    }

    fn mean_f1_bruteforce(cm: &ConfusionMatrix, exclude_null: bool, null: Option<usize>) -> Option<f64> {
        let c = cm.classes();
        let mut f1s = Vec::new();
        for k in 0..c {
            if exclude_null && Some(k) == null {
                continue;
            }
            let tp = cm.get(k, k) as f64;
            let truth_total: f64 = (0..c).map(|j| cm.get(k, j) as f64).sum();
            let pred_total: f64 = (0..c).map(|j| cm.get(j, k) as f64).sum();
            if truth_total == 0.0 && pred_total == 0.0 {
                continue;
            }
            let p = if pred_total > 0.0 { tp / pred_total } else { 0.0 };
            let r = if truth_total > 0.0 { tp / truth_total } else { 0.0 };
            f1s.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        }
        if f1s.is_empty() {
            None
        } else {
            Some(f1s.iter().sum::<f64>() / f1s.len() as f64)
        }
    }

    #[test]
    fn mean_f1_matches_bruteforce_on_random_cases() {
        let mut rng = RngStream::new(10, 1);
        for case in 0..100 {
            let c = 2 + rng.index(4).unwrap();
            let counts: Vec<u64> = (0..c * c)
                .map(|_| if rng.next_f64() < 0.3 { 0 } else { rng.index(20).unwrap() as u64 })
                .collect();
            let cm = ConfusionMatrix::from_counts(c, counts).unwrap();
            if cm.total() == 0 {
                continue;
            }
            for exclude in [false, true] {
                let expect = mean_f1_bruteforce(&cm, exclude, Some(0));
                let got = mean_f1(&cm, exclude, Some(0)).ok();
                match (expect, got) {
                    (Some(e), Some(g)) => assert_eq!(e, g, "case {case}"),
                    (None, None) => {}
                    other => panic!("case {case}: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn separated_scores_reach_full_sensitivity() {
        let scores = vec![0.1, 0.2, 0.3, 0.8, 0.9, 0.95];
        let labels = vec![false, false, false, true, true, true];
        let (sens, th) = sensitivity_at_specificity(&scores, &labels, 0.9).unwrap();
        assert_eq!(sens, 1.0);
        assert!(th > 0.3 && th <= 0.8);
    }

    #[test]
    fn hopeless_scores_fall_back_to_infinite_threshold() {
        // Positives strictly below every negative: any finite threshold
        // classifying a positive also misclassifies all negatives.
        let scores = vec![0.9, 0.95, 0.1, 0.2];
        let labels = vec![false, false, true, true];
        let (sens, th) = sensitivity_at_specificity(&scores, &labels, 0.9).unwrap();
        assert_eq!(sens, 0.0);
        assert!(th.is_infinite());
        assert!(sensitivity_at_specificity(&[0.1], &[true], 0.9).is_err());
    }

    fn sens_at_spec_bruteforce(scores: &[f64], labels: &[bool], target: f64) -> (f64, f64) {
        // Exhaustive: every score value and +inf as threshold candidates,
        // recomputing counts from scratch.
        let mut cands: Vec<f64> = scores.to_vec();
        cands.push(f64::INFINITY);
        let pos = labels.iter().filter(|&&l| l).count() as f64;
        let neg = labels.len() as f64 - pos;
        let mut best = (-1.0, f64::NEG_INFINITY);
        for &th in &cands {
            let tp = scores
                .iter()
                .zip(labels)
                .filter(|(&s, &l)| l && s >= th)
                .count() as f64;
            let tn = scores
                .iter()
                .zip(labels)
                .filter(|(&s, &l)| !l && s < th)
                .count() as f64;
            if tn / neg >= target {
                let sens = tp / pos;
                if sens > best.0 || (sens == best.0 && th > best.1) {
                    best = (sens, th);
                }
            }
        }
        best
    }

    #[test]
    fn sensitivity_matches_exhaustive_sweep() {
        let mut rng = RngStream::new(12, 0);
        for case in 0..100 {
            let n = 20 + rng.index(180).unwrap();
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.uniform(0.0, 1.0).unwrap() * 8.0).floor() / 8.0)
                .collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.4).collect();
            if !labels.contains(&true) {
                labels[0] = true;
            }
            if !labels.contains(&false) {
                labels[1] = false;
            }
            let got = sensitivity_at_specificity(&scores, &labels, 0.9).unwrap();
            let expect = sens_at_spec_bruteforce(&scores, &labels, 0.9);
            assert_eq!(got, expect, "case {case}");
        }
    }

    #[test]
    fn adding_a_correct_positive_never_hurts() {
        let mut rng = RngStream::new(13, 0);
        for _ in 0..50 {
            let n = 30;
            let scores: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0).unwrap()).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.5).collect();
            labels[0] = true;
            labels[1] = false;
            let (base, th) = sensitivity_at_specificity(&scores, &labels, 0.9).unwrap();
            let mut scores2 = scores.clone();
            let mut labels2 = labels.clone();
            scores2.push(if th.is_finite() { th } else { 1.0 });
            labels2.push(true);
            let (plus, _) = sensitivity_at_specificity(&scores2, &labels2, 0.9).unwrap();
            assert!(plus + 1e-12 >= base * (labels.iter().filter(|&&l| l).count() as f64)
                / (labels2.iter().filter(|&&l| l).count() as f64));
        }
    }

    #[test]
    fn accuracy_examples() {
        let cm = ConfusionMatrix::from_counts(2, vec![1, 1, 1, 1]).unwrap();
        assert_eq!(accuracy(&cm).unwrap(), 0.5);
        let mut rng = RngStream::new(14, 0);
        for _ in 0..20 {
            let n = 100;
            let truth: Vec<usize> = (0..n).map(|_| rng.index(3).unwrap()).collect();
            let pred: Vec<usize> = (0..n).map(|_| rng.index(3).unwrap()).collect();
            let cm = confusion(&pred, &truth, &[true; 100], 3).unwrap();
            let direct =
                truth.iter().zip(&pred).filter(|(t, p)| t == p).count() as f64 / n as f64;
            assert_eq!(accuracy(&cm).unwrap(), direct);
        }
    }

    #[test]
    fn metrics_invariant_to_order() {
        let truth = vec![0, 1, 0, 1, 1, 0, 1];
        let pred = vec![0, 1, 1, 1, 0, 0, 1];
        let cm1 = confusion(&pred, &truth, &[true; 7], 2).unwrap();
        let perm = [6, 2, 4, 0, 5, 1, 3];
        let truth2: Vec<usize> = perm.iter().map(|&i| truth[i]).collect();
        let pred2: Vec<usize> = perm.iter().map(|&i| pred[i]).collect();
        let cm2 = confusion(&pred2, &truth2, &[true; 7], 2).unwrap();
        assert_eq!(cm1, cm2);
    }
}
