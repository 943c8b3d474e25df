//! Delay and inverse training-strategy transforms.
//!
//! Both variants leave the LSTM untouched and act on the data instead.
//! The delay variant trains the network to emit, at input step `s`, the
//! label of timestamp `s - delta`: targets shift forward by `delta`
//! samples and the first `delta` steps of each recording are masked.
//! At inference the prediction from input step `s` is assigned back to
//! timestamp `s - delta`, so the last `delta` timestamps of a recording
//! carry no prediction. The inverse variant is pure time reversal:
//! train and predict on the reversed sequence, then reverse the
//! probability rows so index `t` means timestamp `t` again; each
//! prediction is then conditioned on the timeline's future.

use serde::{Deserialize, Serialize};

use crate::data::batcher::TrainSequence;
use crate::data::Recording;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Delay interval. The sample count is derived from seconds at a given
/// rate with round-half-away-from-zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub delta_seconds: f64,
}

impl DelaySpec {
    pub fn new(delta_seconds: f64) -> Self {
        DelaySpec { delta_seconds }
    }

    pub fn samples(&self, sample_rate: f64) -> usize {
        delta_to_samples(self.delta_seconds, sample_rate)
    }
}

/// Seconds to samples, rounding half away from zero.
pub fn delta_to_samples(delta_seconds: f64, sample_rate: f64) -> usize {
    (delta_seconds * sample_rate).round() as usize
}

/// Per-timestamp class probabilities for one recording, with a validity
/// mask: timestamps without a defined prediction (the delay tail) are
/// invalid and excluded from every metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbSeries {
    /// `T x C`; invalid rows hold the uniform distribution as a finite filler.
    pub probs: Matrix,
    pub valid: Vec<bool>,
}

impl ProbSeries {
    pub fn all_valid(probs: Matrix) -> ProbSeries {
        let t = probs.rows();
        ProbSeries { probs, valid: vec![true; t] }
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.probs.cols()
    }

    /// Argmax class per valid timestamp (`None` where invalid). Ties take
    /// the lowest class index.
    pub fn argmax_labels(&self) -> Vec<Option<usize>> {
        (0..self.len())
            .map(|t| {
                if !self.valid[t] {
                    return None;
                }
                let row = self.probs.row(t);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                Some(best)
            })
            .collect()
    }
}

/// Training-side delay transform for one label sequence.
///
/// Input step `s` gets the target `labels[s - delta]`; the first `delta`
/// steps are masked out of the loss.
pub fn delay_targets(labels: &[usize], delta_samples: usize) -> Result<(Vec<usize>, Vec<bool>)> {
    let t = labels.len();
    if delta_samples >= t && !(delta_samples == 0 && t == 0) {
        return Err(Error::InvalidArg(format!(
            "delay of {delta_samples} samples >= sequence length {t}"
        )));
    }
    let mut targets = vec![0usize; t];
    let mut mask = vec![false; t];
    for s in delta_samples..t {
        targets[s] = labels[s - delta_samples];
        mask[s] = true;
    }
    Ok((targets, mask))
}

/// Delay view of a recording for the batcher: same features, shifted
/// targets, masked head.
pub fn delay_sequence(rec: &Recording, delta_samples: usize) -> Result<TrainSequence> {
    let (targets, mask) = delay_targets(&rec.labels, delta_samples)?;
    Ok(TrainSequence {
        features: rec.features.clone(),
        targets,
        mask,
        sample_rate: rec.sample_rate,
    })
}

/// Inference-side delay re-alignment: raw per-input-step probabilities
/// become per-timestamp probabilities; the last `delta` timestamps are
/// invalid.
pub fn delay_align_probs(raw: &Matrix, delta_samples: usize) -> Result<ProbSeries> {
    let t = raw.rows();
    let c = raw.cols();
    if delta_samples >= t {
        return Err(Error::InvalidArg(format!(
            "delay of {delta_samples} samples >= sequence length {t}"
        )));
    }
    let uniform = 1.0 / c as f64;
    let mut probs = Matrix::from_fn(t, c, |_, _| uniform);
    let mut valid = vec![false; t];
    for s in delta_samples..t {
        let ts = s - delta_samples;
        probs.row_mut(ts).copy_from_slice(raw.row(s));
        valid[ts] = true;
    }
    Ok(ProbSeries { probs, valid })
}

/// Reverse a recording in time (features and labels).
pub fn invert_recording(rec: &Recording) -> Recording {
    let t_len = rec.len();
    let d = rec.channels();
    let mut features = Matrix::zeros(t_len, d);
    for t in 0..t_len {
        features.row_mut(t).copy_from_slice(rec.features.row(t_len - 1 - t));
    }
    let labels = rec.labels.iter().rev().copied().collect();
    Recording { features, labels, ..rec.clone() }
}

/// Undo the time reversal on a probability series so index `t` refers to
/// timestamp `t` of the original recording.
pub fn uninvert_probs(p: &ProbSeries) -> ProbSeries {
    let t_len = p.len();
    let c = p.classes();
    let mut probs = Matrix::zeros(t_len, c);
    for t in 0..t_len {
        probs.row_mut(t).copy_from_slice(p.probs.row(t_len - 1 - t));
    }
    let valid = p.valid.iter().rev().copied().collect();
    ProbSeries { probs, valid }
}

/// Per-timestamp alignment of several probability series.
#[derive(Debug, Clone)]
pub struct AlignedScores {
    /// Mean over the valid members at each timestamp (uniform filler where
    /// no member is valid).
    pub mean: Matrix,
    /// Valid where at least one member is valid.
    pub valid: Vec<bool>,
    /// Valid where every member is valid.
    pub joint_valid: Vec<bool>,
    /// Number of members contributing per timestamp.
    pub counts: Vec<usize>,
}

/// Align members for score fusion: per timestamp, average over the
/// members that have a valid prediction there (renormalizing by count).
pub fn align_for_fusion(members: &[&ProbSeries]) -> Result<AlignedScores> {
    let first = members
        .first()
        .ok_or_else(|| Error::InvalidArg("align_for_fusion: no members".into()))?;
    let t_len = first.len();
    let c = first.classes();
    for (i, m) in members.iter().enumerate() {
        if m.len() != t_len || m.classes() != c {
            return Err(Error::Shape(format!(
                "align_for_fusion: member {i} is {}x{}, expected {t_len}x{c}",
                m.len(),
                m.classes()
            )));
        }
    }
    let uniform = 1.0 / c as f64;
    let mut mean = Matrix::zeros(t_len, c);
    let mut counts = vec![0usize; t_len];
    for m in members {
        for t in 0..t_len {
            if m.valid[t] {
                counts[t] += 1;
                let row = m.probs.row(t);
                let acc = mean.row_mut(t);
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
    }
    let mut valid = vec![false; t_len];
    let mut joint_valid = vec![false; t_len];
    for t in 0..t_len {
        if counts[t] > 0 {
            valid[t] = true;
            joint_valid[t] = counts[t] == members.len();
            let inv = 1.0 / counts[t] as f64;
            for v in mean.row_mut(t) {
                *v *= inv;
            }
        } else {
            for v in mean.row_mut(t) {
                *v = uniform;
            }
        }
    }
    Ok(AlignedScores { mean, valid, joint_valid, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn delta_conversion_examples() {
        assert_eq!(delta_to_samples(0.5, 30.0), 15);
        assert_eq!(delta_to_samples(0.0, 30.0), 0);
        assert_eq!(delta_to_samples(0.1, 33.0), 3); // 3.3 rounds down
        assert_eq!(delta_to_samples(0.1, 30.0), 3);
        assert_eq!(delta_to_samples(1.5, 30.0), 45);
    }

    #[test]
    fn delay_targets_shift_and_mask() {
        let labels = vec![10, 11, 12, 13, 14];
        let (targets, mask) = delay_targets(&labels, 2).unwrap();
        assert_eq!(mask, vec![false, false, true, true, true]);
        assert_eq!(&targets[2..], &[10, 11, 12]);
        assert_eq!(mask.iter().filter(|&&m| m).count(), labels.len() - 2);

        let (t0, m0) = delay_targets(&labels, 0).unwrap();
        assert_eq!(t0, labels);
        assert!(m0.iter().all(|&m| m));

        assert!(delay_targets(&labels, 5).is_err());
    }

    #[test]
    fn delay_alignment_invalidates_tail() {
        let raw = Matrix::from_fn(10, 2, |t, c| if c == 0 { t as f64 } else { 1.0 - t as f64 });
        let p = delay_align_probs(&raw, 3).unwrap();
        assert_eq!(p.valid.iter().filter(|&&v| v).count(), 7);
        assert!(!p.valid[7] && !p.valid[8] && !p.valid[9]);
        // Timestamp t holds the prediction emitted at input step t + delta.
        assert_eq!(p.probs.get(0, 0), 3.0);
        assert_eq!(p.probs.get(6, 0), 9.0);
    }

    fn random_recording(seed: u64, t_len: usize) -> Recording {
        let mut rng = RngStream::new(seed, 0);
        Recording {
            id: "r".into(),
            subject: "1".into(),
            run: "1".into(),
            features: Matrix::from_fn(t_len, 3, |_, _| rng.uniform(-1.0, 1.0).unwrap()),
            labels: (0..t_len).map(|t| t % 4).collect(),
            sample_rate: 30.0,
        }
    }

    #[test]
    fn invert_is_involutive() {
        let rec = random_recording(5, 17);
        let back = invert_recording(&invert_recording(&rec));
        assert_eq!(rec, back);
        let inv = invert_recording(&rec);
        assert_eq!(inv.labels[0], rec.labels[16]);
    }

    #[test]
    fn labels_reverse() {
        let mut rec = random_recording(1, 3);
        rec.labels = vec![1, 2, 3];
        assert_eq!(invert_recording(&rec).labels, vec![3, 2, 1]);
    }

    #[test]
    fn uninvert_reverses_rows_and_validity() {
        let probs = Matrix::from_fn(4, 2, |t, c| (t * 2 + c) as f64);
        let p = ProbSeries { probs, valid: vec![true, true, false, true] };
        let u = uninvert_probs(&p);
        assert_eq!(u.valid, vec![true, false, true, true]);
        assert_eq!(u.probs.row(0), &[6.0, 7.0]);
        assert_eq!(uninvert_probs(&u), p);
    }

    #[test]
    fn fusion_counts_and_means() {
        let a = ProbSeries::all_valid(Matrix::from_rows(&[vec![0.6, 0.4], vec![0.5, 0.5]]).unwrap());
        let b = ProbSeries::all_valid(Matrix::from_rows(&[vec![0.2, 0.8], vec![0.5, 0.5]]).unwrap());
        let al = align_for_fusion(&[&a, &b]).unwrap();
        assert_eq!(al.counts, vec![2, 2]);
        assert!((al.mean.get(0, 0) - 0.4).abs() < 1e-15);
        assert!((al.mean.get(0, 1) - 0.6).abs() < 1e-15);
        assert!(al.joint_valid.iter().all(|&v| v));
    }

    #[test]
    fn fusion_with_delay_tail_counts_single_member() {
        let t_len = 10;
        let full = ProbSeries::all_valid(Matrix::from_fn(t_len, 2, |_, c| {
            if c == 0 {
                0.7
            } else {
                0.3
            }
        }));
        let raw = Matrix::from_fn(t_len, 2, |_, c| if c == 0 { 0.1 } else { 0.9 });
        let delayed = delay_align_probs(&raw, 3).unwrap();
        let al = align_for_fusion(&[&full, &delayed]).unwrap();
        for t in 0..7 {
            assert_eq!(al.counts[t], 2);
        }
        for t in 7..10 {
            assert_eq!(al.counts[t], 1);
            assert!((al.mean.get(t, 0) - 0.7).abs() < 1e-15, "tail averages the valid member");
        }
        assert_eq!(al.joint_valid.iter().filter(|&&v| v).count(), 7);
    }

    #[test]
    fn staggered_masks_match_bruteforce_counts() {
        let mut rng = RngStream::new(44, 2);
        let t_len = 40;
        let members: Vec<ProbSeries> = (0..3)
            .map(|_| {
                let m = Matrix::from_fn(t_len, 3, |_, _| rng.uniform(0.01, 1.0).unwrap());
                // normalize rows
                let mut probs = m.clone();
                for t in 0..t_len {
                    let s: f64 = m.row(t).iter().sum();
                    for (j, v) in probs.row_mut(t).iter_mut().enumerate() {
                        *v = m.row(t)[j] / s;
                    }
                }
                ProbSeries {
                    probs,
                    valid: (0..t_len).map(|_| rng.next_f64() < 0.7).collect(),
                }
            })
            .collect();
        let refs: Vec<&ProbSeries> = members.iter().collect();
        let al = align_for_fusion(&refs).unwrap();
        for t in 0..t_len {
            let expect = members.iter().filter(|m| m.valid[t]).count();
            assert_eq!(al.counts[t], expect);
            if expect > 0 {
                let row_sum: f64 = al.mean.row(t).iter().sum();
                assert!((row_sum - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn fusion_shape_mismatch_rejected() {
        let a = ProbSeries::all_valid(Matrix::zeros(4, 2));
        let b = ProbSeries::all_valid(Matrix::zeros(5, 2));
        assert!(align_for_fusion(&[&a, &b]).is_err());
        assert!(align_for_fusion(&[]).is_err());
    }
}
