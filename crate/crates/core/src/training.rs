//! Cross-entropy training with Adam, per-epoch validation snapshots, and
//! variant-aware target construction.
//!
//! The delay and inverse strategies are realized purely as data
//! transforms: the delay variant trains on shifted targets (head of each
//! recording masked), the inverse variant trains on time-reversed
//! recordings. Training is deterministic given `(config, seed)`; every
//! random draw flows through named streams derived from the config seed.

use serde::{Deserialize, Serialize};

use crate::data::batcher::{stateful_batches, HypavConfig, TrainSequence};
use crate::data::{Dataset, Recording, SplitSpec};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{mean_f1, sensitivity_at_specificity, ConfusionMatrix};
use crate::network::{
    backward_window, forward_window, init_params, zero_states, Dims, ForwardMode, NetworkParams,
};
use crate::optim::{adam_step, clip_global_norm, AdamState};
use crate::rng::RngStream;
use crate::variants::{
    delay_align_probs, delay_sequence, invert_recording, uninvert_probs, DelaySpec, ProbSeries,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantSpec {
    Standard,
    Delay(DelaySpec),
    Inverse,
}

impl VariantSpec {
    pub fn delay(delta_seconds: f64) -> Self {
        VariantSpec::Delay(DelaySpec::new(delta_seconds))
    }

    pub fn name(&self) -> &'static str {
        match self {
            VariantSpec::Standard => "standard",
            VariantSpec::Delay(_) => "delay",
            VariantSpec::Inverse => "inverse",
        }
    }
}

fn default_lr() -> f64 {
    0.001
}

fn default_dropout() -> f64 {
    0.5
}

fn default_clip() -> f64 {
    10.0
}

fn default_hidden() -> usize {
    256
}

fn default_layers() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: VariantSpec,
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_dropout")]
    pub dropout_p: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hypav: HypavConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate {} <= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config(format!("clip_norm {} <= 0", self.clip_norm)));
        }
        if self.hidden == 0 || self.layers == 0 {
            return Err(Error::Config("hidden and layers must be >= 1".into()));
        }
        if let VariantSpec::Delay(spec) = &self.variant {
            if !(spec.delta_seconds >= 0.0) {
                return Err(Error::Config(format!(
                    "delay interval {} must be >= 0",
                    spec.delta_seconds
                )));
            }
        }
        Ok(())
    }
}

/// Validation metric selection, mirroring the dataset task type:
/// macro mean-F1 for multiclass runs, sensitivity at fixed specificity
/// for binary runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    Multiclass {
        #[serde(default)]
        exclude_null: bool,
    },
    Binary {
        positive_class: usize,
        #[serde(default = "default_target_spec")]
        target_specificity: f64,
    },
}

fn default_target_spec() -> f64 {
    0.9
}

impl Default for MetricMode {
    fn default() -> Self {
        MetricMode::Multiclass { exclude_null: false }
    }
}

/// Frozen parameters after one epoch plus the validation score that
/// ranks them; the unit of epoch-wise bagging.
#[derive(Debug, Clone)]
pub struct EpochSnapshot {
    /// 1-based epoch index.
    pub epoch: usize,
    pub params: NetworkParams,
    pub val_score: f64,
    pub train_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub snapshots: Vec<EpochSnapshot>,
    /// Index into `snapshots` of the best validation score (ties: earlier
    /// epoch).
    pub best: usize,
}

impl TrainOutcome {
    pub fn best_snapshot(&self) -> &EpochSnapshot {
        &self.snapshots[self.best]
    }
}

/// Pool predictions and truths into one confusion matrix.
pub fn confusion_over(
    series: &[ProbSeries],
    recordings: &[&Recording],
    classes: usize,
) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(classes);
    for (p, rec) in series.iter().zip(recordings) {
        let preds = p.argmax_labels();
        if preds.len() != rec.len() {
            return Err(Error::Shape(format!(
                "prediction length {} vs recording length {}",
                preds.len(),
                rec.len()
            )));
        }
        for (t, pred) in preds.iter().enumerate() {
            if let Some(pred) = pred {
                cm.add(rec.labels[t], *pred);
            }
        }
    }
    Ok(cm)
}

/// Score a set of probability series against recording labels.
pub fn score_series(
    series: &[ProbSeries],
    recordings: &[&Recording],
    mode: &MetricMode,
    classes: usize,
    null_class: Option<usize>,
) -> Result<f64> {
    match mode {
        MetricMode::Multiclass { exclude_null } => {
            let cm = confusion_over(series, recordings, classes)?;
            mean_f1(&cm, *exclude_null, null_class)
        }
        MetricMode::Binary { positive_class, target_specificity } => {
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for (p, rec) in series.iter().zip(recordings) {
                for t in 0..p.len() {
                    if p.valid[t] {
                        scores.push(p.probs.get(t, *positive_class));
                        labels.push(rec.labels[t] == *positive_class);
                    }
                }
            }
            Ok(sensitivity_at_specificity(&scores, &labels, *target_specificity)?.0)
        }
    }
}

fn infer_probs(params: &NetworkParams, features: &Matrix) -> Result<Matrix> {
    let t_len = features.rows();
    let x: Vec<Matrix> = (0..t_len)
        .map(|t| Matrix::from_vec(1, features.cols(), features.row(t).to_vec()))
        .collect::<Result<_>>()?;
    let state0 = zero_states(params, 1);
    let (probs, _, _) = forward_window(params, &x, &state0, ForwardMode::Infer)?;
    let mut out = Matrix::zeros(t_len, params.dims.classes);
    for (t, p) in probs.iter().enumerate() {
        out.row_mut(t).copy_from_slice(p.row(0));
    }
    Ok(out)
}

/// Stream each recording through the network (fresh zero state per
/// recording, dropout off) under the variant's inference semantics.
pub fn evaluate_model(
    params: &NetworkParams,
    recordings: &[&Recording],
    variant: &VariantSpec,
) -> Result<Vec<ProbSeries>> {
    recordings
        .iter()
        .map(|rec| {
            if rec.channels() != params.dims.input {
                return Err(Error::Shape(format!(
                    "recording {} has {} channels, network expects {}",
                    rec.id,
                    rec.channels(),
                    params.dims.input
                )));
            }
            match variant {
                VariantSpec::Standard => Ok(ProbSeries::all_valid(infer_probs(params, &rec.features)?)),
                VariantSpec::Delay(spec) => {
                    let delta = spec.samples(rec.sample_rate);
                    let raw = infer_probs(params, &rec.features)?;
                    delay_align_probs(&raw, delta)
                }
                VariantSpec::Inverse => {
                    let inv = invert_recording(rec);
                    let raw = infer_probs(params, &inv.features)?;
                    Ok(uninvert_probs(&ProbSeries::all_valid(raw)))
                }
            }
        })
        .collect()
}

fn build_sequences(
    recordings: &[&Recording],
    variant: &VariantSpec,
    sample_rate: f64,
) -> Result<Vec<TrainSequence>> {
    recordings
        .iter()
        .map(|rec| match variant {
            VariantSpec::Standard => Ok(TrainSequence::from_recording(rec)),
            VariantSpec::Delay(spec) => delay_sequence(rec, spec.samples(sample_rate)),
            VariantSpec::Inverse => Ok(TrainSequence::from_recording(&invert_recording(rec))),
        })
        .collect()
}

/// Full training loop: per epoch, iterate [`stateful_batches`], run
/// truncated BPTT with Adam, then score the validation split and record
/// a snapshot. Returns all snapshots; `best` is the argmax validation
/// score with ties resolved to the earlier epoch.
pub fn train(
    config: &TrainConfig,
    dataset: &Dataset,
    split: &SplitSpec,
    val_metric: &MetricMode,
) -> Result<TrainOutcome> {
    config.validate()?;
    dataset.validate()?;
    let resolved = split.resolve(dataset)?;
    if resolved.train.is_empty() || resolved.validation.is_empty() {
        return Err(Error::Config(
            "split must select at least one training and one validation recording".into(),
        ));
    }
    let train_recs: Vec<&Recording> =
        resolved.train.iter().map(|&i| &dataset.recordings[i]).collect();
    let val_recs: Vec<&Recording> =
        resolved.validation.iter().map(|&i| &dataset.recordings[i]).collect();

    let dims = Dims::new(
        dataset.channels(),
        config.hidden,
        dataset.classes(),
        config.layers,
    );
    let mut params = init_params(dims, config.seed);
    let mut adam = AdamState::new(&params);
    let seqs = build_sequences(&train_recs, &config.variant, dataset.sample_rate)?;

    let mut snapshots = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let batches = stateful_batches(&seqs, &config.hypav, config.seed, epoch as u64 - 1)?;
        if batches.is_empty() {
            return Err(Error::Config(format!(
                "epoch {epoch} produced no batches; lanes are shorter than the window"
            )));
        }
        let lanes = batches[0].lanes();
        let mut states = zero_states(&params, lanes);
        let mut dropout_rng = RngStream::named(config.seed, "dropout").substream(epoch as u64 - 1);

        let mut loss_sum = 0.0;
        for batch in &batches {
            for (lane, &reset) in batch.reset.iter().enumerate() {
                if reset {
                    for s in &mut states {
                        s.reset_lane(lane);
                    }
                }
            }
            let (_, next_states, cache) = forward_window(
                &params,
                &batch.x,
                &states,
                ForwardMode::Train { dropout_p: config.dropout_p, rng: &mut dropout_rng },
            )?;
            states = next_states;
            let cache = cache.expect("train mode builds a cache");
            let (mut grads, loss) =
                backward_window(&params, &cache, &batch.targets, &batch.loss_mask)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("loss diverged in epoch {epoch}")));
            }
            loss_sum += loss;
            clip_global_norm(&mut grads, config.clip_norm);
            adam_step(&mut params, &grads, &mut adam, config.learning_rate)?;
        }
        let train_loss = loss_sum / batches.len() as f64;

        let val_series = evaluate_model(&params, &val_recs, &config.variant)?;
        let val_score = score_series(
            &val_series,
            &val_recs,
            val_metric,
            dataset.classes(),
            dataset.null_class,
        )?;
        snapshots.push(EpochSnapshot { epoch, params: params.clone(), val_score, train_loss });
    }

    let mut best = 0;
    for (i, s) in snapshots.iter().enumerate() {
        if s.val_score > snapshots[best].val_score {
            best = i;
        }
    }
    Ok(TrainOutcome { snapshots, best })
}
