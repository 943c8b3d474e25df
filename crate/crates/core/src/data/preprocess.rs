//! Channel normalization, NaN imputation and integer decimation.

use crate::data::{Dataset, Recording, ResolvedSplit};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-channel moments fitted on the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

const SD_FLOOR: f64 = 1e-12;

/// Fit per-channel mean/sd over the given recordings.
///
/// NaN runs are resolved the same way `apply_normalizer` will see them:
/// forward-fill within each recording, leading NaNs skipped (they get
/// the channel mean later, which is neutral for the fit).
pub fn fit_normalizer(recordings: &[&Recording]) -> Result<ChannelStats> {
    let d = recordings
        .first()
        .map(|r| r.channels())
        .ok_or_else(|| Error::Config("fit_normalizer: no recordings".into()))?;
    let mut count = vec![0u64; d];
    let mut sum = vec![0.0f64; d];
    let mut sumsq = vec![0.0f64; d];
    for rec in recordings {
        let mut last = vec![f64::NAN; d];
        for t in 0..rec.len() {
            let row = rec.features.row(t);
            for j in 0..d {
                let v = if row[j].is_nan() { last[j] } else { row[j] };
                if !v.is_nan() {
                    last[j] = v;
                    count[j] += 1;
                    sum[j] += v;
                    sumsq[j] += v * v;
                }
            }
        }
    }
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for j in 0..d {
        if count[j] == 0 {
            // channel is entirely NaN; mean 0 / sd 0 passes values through
            continue;
        }
        let n = count[j] as f64;
        mean[j] = sum[j] / n;
        let var = (sumsq[j] / n - mean[j] * mean[j]).max(0.0);
        sd[j] = var.sqrt();
    }
    Ok(ChannelStats { mean, sd })
}

/// Impute then z-score one recording.
///
/// NaNs are forward-filled within the recording; leading NaNs take the
/// fitted channel mean. Channels with sd below 1e-12 are centered only.
pub fn apply_normalizer(rec: &Recording, stats: &ChannelStats) -> Result<Recording> {
    let d = rec.channels();
    if stats.mean.len() != d {
        return Err(Error::Shape(format!(
            "apply_normalizer: stats for {} channels, recording has {d}",
            stats.mean.len()
        )));
    }
    let t_len = rec.len();
    let mut out = Matrix::zeros(t_len, d);
    let mut last = vec![f64::NAN; d];
    for t in 0..t_len {
        let row = rec.features.row(t);
        for j in 0..d {
            let raw = if row[j].is_nan() { last[j] } else { row[j] };
            let filled = if raw.is_nan() { stats.mean[j] } else { raw };
            if !row[j].is_nan() {
                last[j] = row[j];
            }
            let v = if stats.sd[j] < SD_FLOOR {
                filled - stats.mean[j]
            } else {
                (filled - stats.mean[j]) / stats.sd[j]
            };
            out.set(t, j, v);
        }
    }
    Ok(Recording { features: out, ..rec.clone() })
}

/// Normalize a whole dataset with stats fitted on its training split only.
pub fn normalize_for_split(ds: &Dataset, split: &ResolvedSplit) -> Result<Dataset> {
    let train: Vec<&Recording> = split.train.iter().map(|&i| &ds.recordings[i]).collect();
    let stats = fit_normalizer(&train)?;
    let recordings = ds
        .recordings
        .iter()
        .map(|r| apply_normalizer(r, &stats))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { recordings, ..ds.clone() })
}

/// Keep samples at indices `0, factor, 2*factor, ...`; labels come from
/// the kept indices and the stored rate divides by `factor`.
pub fn decimate(rec: &Recording, factor: usize) -> Result<Recording> {
    if factor < 1 {
        return Err(Error::InvalidArg(format!("decimate factor {factor} < 1")));
    }
    if factor == 1 {
        return Ok(rec.clone());
    }
    let kept: Vec<usize> = (0..rec.len()).step_by(factor).collect();
    let d = rec.channels();
    let mut features = Matrix::zeros(kept.len(), d);
    let mut labels = Vec::with_capacity(kept.len());
    for (i, &t) in kept.iter().enumerate() {
        features.row_mut(i).copy_from_slice(rec.features.row(t));
        labels.push(rec.labels[t]);
    }
    Ok(Recording {
        features,
        labels,
        sample_rate: rec.sample_rate / factor as f64,
        ..rec.clone()
    })
}
