//! Stateful mini-batch construction with hyper-parameters as variables.
//!
//! The training timeline is the concatenation of all training sequences.
//! Per epoch, a batch size `B` is drawn and the timeline split into `B`
//! contiguous, near-equal lanes; each lane walks forward through its
//! span, carrying LSTM state. Per batch, a window length is drawn and
//! every lane advances that many samples. Lanes that hit a recording
//! boundary truncate the window (remainder masked) and start the next
//! recording with a state reset. Randomizing window length, batch size
//! and lane offsets per epoch ("hyper-parameter as variable") diversifies
//! the epoch snapshots that later become ensemble members.

use serde::{Deserialize, Serialize};

use crate::data::Recording;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::RngStream;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypavConfig {
    /// Window length range in seconds, sampled per batch.
    pub window_len_range: (f64, f64),
    /// Batch size candidates, sampled once per epoch.
    pub batch_size_choices: Vec<usize>,
    /// Draw a fresh initial offset per lane per epoch.
    pub resample_offsets: bool,
    /// Overrides `window_len_range` when set (seconds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_window_len: Option<f64>,
    /// Overrides `batch_size_choices` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_batch_size: Option<usize>,
}

impl Default for HypavConfig {
    fn default() -> Self {
        HypavConfig {
            window_len_range: (0.5, 2.0),
            batch_size_choices: vec![64, 96, 128, 192, 256],
            resample_offsets: true,
            fixed_window_len: None,
            fixed_batch_size: None,
        }
    }
}

impl HypavConfig {
    /// Fixed window and batch size; no randomization at all.
    pub fn fixed(window_seconds: f64, batch_size: usize) -> Self {
        HypavConfig {
            window_len_range: (window_seconds, window_seconds),
            batch_size_choices: vec![batch_size],
            resample_offsets: false,
            fixed_window_len: Some(window_seconds),
            fixed_batch_size: Some(batch_size),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.window_len_range.0 <= self.window_len_range.1) || self.window_len_range.0 <= 0.0
        {
            return Err(Error::Config(format!(
                "bad window_len_range [{}, {}]",
                self.window_len_range.0, self.window_len_range.1
            )));
        }
        if self.fixed_batch_size.is_none() && self.batch_size_choices.is_empty() {
            return Err(Error::Config("batch_size_choices is empty".into()));
        }
        if self.batch_size_choices.iter().any(|&b| b == 0)
            || self.fixed_batch_size == Some(0)
        {
            return Err(Error::Config("batch size 0".into()));
        }
        if let Some(w) = self.fixed_window_len {
            if w <= 0.0 {
                return Err(Error::Config(format!("fixed_window_len {w} <= 0")));
            }
        }
        Ok(())
    }
}

/// A training view of one recording: features plus (possibly transformed)
/// targets and a per-step validity mask. The delay variant shifts targets
/// and masks the head of each recording; the plain view is the identity.
#[derive(Debug, Clone)]
pub struct TrainSequence {
    pub features: Matrix,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
    pub sample_rate: f64,
}

impl TrainSequence {
    pub fn from_recording(rec: &Recording) -> TrainSequence {
        TrainSequence {
            features: rec.features.clone(),
            targets: rec.labels.clone(),
            mask: vec![true; rec.labels.len()],
            sample_rate: rec.sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// One training window for all lanes.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `window_len` matrices of shape `B x D`.
    pub x: Vec<Matrix>,
    /// `[step][lane]` target class ids.
    pub targets: Vec<Vec<usize>>,
    /// `[step][lane]`; false entries contribute no loss or gradient.
    pub loss_mask: Vec<Vec<bool>>,
    /// Per lane: zero this lane's state before feeding the batch.
    pub reset: Vec<bool>,
}

impl Batch {
    pub fn lanes(&self) -> usize {
        self.reset.len()
    }

    pub fn window_len(&self) -> usize {
        self.x.len()
    }
}

fn window_samples(seconds: f64, rate: f64) -> usize {
    ((seconds * rate).round() as usize).max(1)
}

struct Lane {
    cursor: usize,
    end: usize,
    pending_reset: bool,
}

/// Build one epoch of stateful batches.
///
/// Draw order (all from the stream named `batcher` under
/// `(epoch_seed, epoch_index)`): batch size, first window length, per-lane
/// offsets, then one window length per subsequent batch.
pub fn stateful_batches(
    seqs: &[TrainSequence],
    hypav: &HypavConfig,
    epoch_seed: u64,
    epoch_index: u64,
) -> Result<Vec<Batch>> {
    hypav.validate()?;
    if seqs.is_empty() {
        return Err(Error::Config("stateful_batches: no sequences".into()));
    }
    let d = seqs[0].features.cols();
    let rate = seqs[0].sample_rate;
    let mut prefix = vec![0usize];
    for (i, s) in seqs.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::Config(format!("sequence {i} is empty")));
        }
        if s.features.cols() != d || s.sample_rate != rate {
            return Err(Error::Config(format!(
                "sequence {i} shape/rate differs from sequence 0"
            )));
        }
        prefix.push(prefix.last().unwrap() + s.len());
    }
    let total = *prefix.last().unwrap();

    let max_window = match hypav.fixed_window_len {
        Some(w) => window_samples(w, rate),
        None => window_samples(hypav.window_len_range.1, rate),
    };
    let shortest = seqs.iter().map(TrainSequence::len).min().unwrap();
    if max_window > shortest {
        return Err(Error::Config(format!(
            "window of {max_window} samples exceeds shortest recording ({shortest} samples)"
        )));
    }

    let mut rng = RngStream::named(epoch_seed, "batcher").substream(epoch_index);
    let lanes_n = match hypav.fixed_batch_size {
        Some(b) => b,
        None => hypav.batch_size_choices[rng.index(hypav.batch_size_choices.len())?],
    };

    let draw_window = |rng: &mut RngStream| -> Result<usize> {
        match hypav.fixed_window_len {
            Some(w) => Ok(window_samples(w, rate)),
            None => {
                let secs = rng.uniform(hypav.window_len_range.0, hypav.window_len_range.1)?;
                Ok(window_samples(secs, rate))
            }
        }
    };
    let first_window = draw_window(&mut rng)?;

    let mut lanes: Vec<Lane> = Vec::with_capacity(lanes_n);
    for b in 0..lanes_n {
        let start = b * total / lanes_n;
        let end = (b + 1) * total / lanes_n;
        let offset = if hypav.resample_offsets { rng.index(first_window)? } else { 0 };
        lanes.push(Lane {
            cursor: (start + offset).min(end),
            end,
            pending_reset: true,
        });
    }

    // global position -> sequence index
    let seq_of = |g: usize| -> usize {
        match prefix.binary_search(&g) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    };

    let mut batches = Vec::new();
    let mut window = first_window;
    loop {
        if lanes.iter().any(|l| l.end.saturating_sub(l.cursor) < window) {
            break;
        }
        let mut x = vec![Matrix::zeros(lanes_n, d); window];
        let mut targets = vec![vec![0usize; lanes_n]; window];
        let mut loss_mask = vec![vec![false; lanes_n]; window];
        let mut reset = vec![false; lanes_n];
        for (b, lane) in lanes.iter_mut().enumerate() {
            reset[b] = lane.pending_reset;
            lane.pending_reset = false;
            let s = seq_of(lane.cursor);
            let boundary = prefix[s + 1];
            let fill = window.min(boundary - lane.cursor);
            let local0 = lane.cursor - prefix[s];
            for step in 0..fill {
                let t = local0 + step;
                x[step].row_mut(b).copy_from_slice(seqs[s].features.row(t));
                targets[step][b] = seqs[s].targets[t];
                loss_mask[step][b] = seqs[s].mask[t];
            }
            if fill < window {
                // Window hit the recording boundary: remainder stays
                // masked/zero, next batch starts the new recording fresh.
                lane.cursor = boundary;
                lane.pending_reset = true;
            } else {
                lane.cursor += window;
            }
        }
        batches.push(Batch { x, targets, loss_mask, reset });
        window = draw_window(&mut rng)?;
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Encode (sequence index, time) into the single feature channel so
    /// tests can recover provenance from batch contents.
    fn tagged_seqs(lens: &[usize], rate: f64) -> Vec<TrainSequence> {
        lens.iter()
            .enumerate()
            .map(|(i, &t_len)| TrainSequence {
                features: Matrix::from_fn(t_len, 1, |t, _| (i * 1_000_000 + t) as f64),
                targets: (0..t_len).map(|t| t % 3).collect(),
                mask: vec![true; t_len],
                sample_rate: rate,
            })
            .collect()
    }

    #[test]
    fn single_lane_tiles_one_recording() {
        let seqs = tagged_seqs(&[12], 1.0);
        let hypav = HypavConfig::fixed(4.0, 1);
        let batches = stateful_batches(&seqs, &hypav, 1, 0).unwrap();
        assert_eq!(batches.len(), 3);
        assert!(batches[0].reset[0]);
        assert!(!batches[1].reset[0] && !batches[2].reset[0]);
        let mut seen = Vec::new();
        for batch in &batches {
            for step in 0..batch.window_len() {
                assert!(batch.loss_mask[step][0]);
                seen.push(batch.x[step].get(0, 0) as usize);
            }
        }
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn boundary_truncates_masks_and_resets() {
        let seqs = tagged_seqs(&[10, 10], 1.0);
        let hypav = HypavConfig::fixed(4.0, 1);
        let batches = stateful_batches(&seqs, &hypav, 1, 0).unwrap();
        // [0..4) [4..8) [8..10)+2 masked, then recording 2 restarts.
        assert_eq!(batches.len(), 5);
        let resets: Vec<usize> = batches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.reset[0])
            .map(|(i, _)| i)
            .collect();
        assert_eq!(resets, vec![0, 3]);
        let b2 = &batches[2];
        assert_eq!(
            (0..4).map(|s| b2.loss_mask[s][0]).collect::<Vec<_>>(),
            vec![true, true, false, false]
        );
        assert_eq!(b2.x[1].get(0, 0) as usize, 9);
        assert_eq!(b2.x[2].get(0, 0), 0.0); // masked steps zero-filled
        assert_eq!(batches[3].x[0].get(0, 0) as usize, 1_000_000);
    }

    #[test]
    fn window_longer_than_shortest_recording_rejected() {
        let seqs = tagged_seqs(&[30, 8], 1.0);
        let hypav = HypavConfig::fixed(10.0, 1);
        let err = stateful_batches(&seqs, &hypav, 1, 0).unwrap_err().to_string();
        assert!(err.contains("shortest"), "{err}");
    }

    #[test]
    fn epochs_are_deterministic_and_vary_by_index() {
        let seqs = tagged_seqs(&[500, 400, 450], 10.0);
        let hypav = HypavConfig {
            window_len_range: (0.5, 2.0),
            batch_size_choices: vec![2, 3, 4],
            resample_offsets: true,
            fixed_window_len: None,
            fixed_batch_size: None,
        };
        let a = stateful_batches(&seqs, &hypav, 9, 4).unwrap();
        let b = stateful_batches(&seqs, &hypav, 9, 4).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.reset, y.reset);
            assert_eq!(x.targets, y.targets);
        }
        let c = stateful_batches(&seqs, &hypav, 9, 5).unwrap();
        let geometry_a: Vec<(usize, usize)> =
            a.iter().map(|b| (b.lanes(), b.window_len())).collect();
        let geometry_c: Vec<(usize, usize)> =
            c.iter().map(|b| (b.lanes(), b.window_len())).collect();
        assert_ne!(geometry_a, geometry_c, "epoch index must perturb draws");
    }

    #[test]
    fn unmasked_steps_are_unique_and_cover_90_percent() {
        let seqs = tagged_seqs(&[2300, 1700, 2000], 10.0);
        for lanes in [2usize, 4] {
            let hypav = HypavConfig {
                window_len_range: (0.5, 2.0),
                batch_size_choices: vec![lanes],
                resample_offsets: true,
                fixed_window_len: None,
                fixed_batch_size: None,
            };
            let batches = stateful_batches(&seqs, &hypav, 33, 0).unwrap();
            let total: usize = seqs.iter().map(TrainSequence::len).sum();
            let mut seen = std::collections::HashSet::new();
            for batch in &batches {
                for step in 0..batch.window_len() {
                    for lane in 0..batch.lanes() {
                        if batch.loss_mask[step][lane] {
                            let tag = batch.x[step].get(lane, 0) as usize;
                            assert!(seen.insert(tag), "duplicate sample {tag}");
                            // Target must match the tagged provenance.
                            let (s, t) = (tag / 1_000_000, tag % 1_000_000);
                            assert_eq!(batch.targets[step][lane], seqs[s].targets[t]);
                        }
                    }
                }
            }
            let coverage = seen.len() as f64 / total as f64;
            assert!(coverage >= 0.90, "B={lanes}: coverage {coverage:.3}");
        }
    }

    #[test]
    fn lanes_never_mix_recordings_without_reset() {
        let seqs = tagged_seqs(&[137, 211, 97], 10.0);
        let hypav = HypavConfig {
            window_len_range: (0.5, 1.5),
            batch_size_choices: vec![3],
            resample_offsets: true,
            fixed_window_len: None,
            fixed_batch_size: None,
        };
        for epoch in 0..5 {
            let batches = stateful_batches(&seqs, &hypav, 7, epoch).unwrap();
            for batch in &batches {
                for lane in 0..batch.lanes() {
                    let recs: Vec<usize> = (0..batch.window_len())
                        .filter(|&s| batch.loss_mask[s][lane])
                        .map(|s| batch.x[s].get(lane, 0) as usize / 1_000_000)
                        .collect();
                    assert!(
                        recs.windows(2).all(|w| w[0] == w[1]),
                        "window mixes recordings {recs:?}"
                    );
                }
            }
        }
    }
}
