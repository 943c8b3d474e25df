//! Shared plumbing between commands: dataset loading, run directories,
//! and report rendering.

use std::fs;
use std::path::Path;

use sporal_core::checkpoint;
use sporal_core::data::preprocess::normalize_for_split;
use sporal_core::data::{Dataset, Manifest, Recording, ResolvedSplit, SplitSpec};
use sporal_core::ensemble::TrainedRun;
use sporal_core::metrics::{report, sensitivity_at_specificity, BinaryReport, MetricsReport};
use sporal_core::training::{
    confusion_over, EpochSnapshot, MetricMode, TrainConfig, TrainOutcome,
};
use sporal_core::variants::ProbSeries;
use sporal_core::{Error, Result};

use crate::config::{config_hash, load_json, save_json, RunConfig, SnapshotMeta};

/// Load a manifest-backed dataset and z-score it with stats fitted on the
/// split's training recordings.
pub fn load_normalized(manifest_path: &Path, split: &SplitSpec) -> Result<(Dataset, ResolvedSplit)> {
    let manifest = Manifest::load(manifest_path)?;
    let dataset = manifest.load_dataset(manifest_path)?;
    let resolved = split.resolve(&dataset)?;
    let normalized = normalize_for_split(&dataset, &resolved)?;
    Ok((normalized, resolved))
}

pub fn split_recordings<'a>(ds: &'a Dataset, idx: &[usize]) -> Vec<&'a Recording> {
    idx.iter().map(|&i| &ds.recordings[i]).collect()
}

pub fn snapshot_filename(epoch: usize) -> String {
    format!("epoch_{epoch:03}.ckpt")
}

/// Persist a finished run: one checkpoint + JSON sidecar per epoch plus
/// the resolved run config.
pub fn save_run(dir: &Path, run_config: &RunConfig, outcome: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let hash = config_hash(&run_config.train);
    for snap in &outcome.snapshots {
        let ckpt = dir.join(snapshot_filename(snap.epoch));
        checkpoint::save(&snap.params, &ckpt)?;
        let meta = SnapshotMeta {
            epoch: snap.epoch,
            val_score: snap.val_score,
            train_loss: snap.train_loss,
            config_hash: hash.clone(),
        };
        save_json(&dir.join(format!("epoch_{:03}.json", snap.epoch)), &meta)?;
    }
    // The destination directory is not part of the training definition;
    // dropping it keeps run dirs relocatable and byte-comparable.
    let mut persisted = run_config.clone();
    persisted.out_dir = None;
    save_json(&dir.join("run.json"), &persisted)?;
    Ok(())
}

/// Reload a run directory written by [`save_run`].
pub fn load_run(dir: &Path) -> Result<(RunConfig, TrainedRun)> {
    let run_config: RunConfig = load_json(&dir.join("run.json"))?;
    let mut snapshots = Vec::new();
    for epoch in 1..=run_config.train.epochs {
        let ckpt = dir.join(snapshot_filename(epoch));
        if !ckpt.exists() {
            break;
        }
        let params = checkpoint::load(&ckpt)?;
        let meta: SnapshotMeta = load_json(&dir.join(format!("epoch_{epoch:03}.json")))?;
        snapshots.push(EpochSnapshot {
            epoch,
            params,
            val_score: meta.val_score,
            train_loss: meta.train_loss,
        });
    }
    if snapshots.is_empty() {
        return Err(Error::Data(format!("{}: no snapshots found", dir.display())));
    }
    let variant = run_config.train.variant.clone();
    Ok((run_config, TrainedRun { variant, snapshots }))
}

/// Metrics report for predictions over a set of recordings.
pub fn evaluate_series(
    series: &[ProbSeries],
    recordings: &[&Recording],
    metric: &MetricMode,
    classes: usize,
    null_class: Option<usize>,
) -> Result<MetricsReport> {
    let cm = confusion_over(series, recordings, classes)?;
    let mut rep = report(&cm, null_class)?;
    if let MetricMode::Binary { positive_class, target_specificity } = metric {
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
        let (sensitivity, threshold) =
            sensitivity_at_specificity(&scores, &labels, *target_specificity)?;
        rep.binary = Some(BinaryReport {
            positive_class: *positive_class,
            target_specificity: *target_specificity,
            sensitivity,
            threshold,
        });
    }
    Ok(rep)
}

/// Plain-text table for a metrics report.
pub fn render_report(rep: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("samples            {}\n", rep.samples));
    out.push_str(&format!("accuracy           {:.4}\n", rep.accuracy));
    out.push_str(&format!("mean-F1            {:.4}\n", rep.mean_f1));
    if let Some(m) = rep.mean_f1_excl_null {
        out.push_str(&format!("mean-F1 (no null)  {m:.4}\n"));
    }
    if let Some(b) = &rep.binary {
        out.push_str(&format!(
            "sensitivity        {:.4} (specificity >= {:.2}, threshold {:.6})\n",
            b.sensitivity, b.target_specificity, b.threshold
        ));
    }
    out.push_str("class  precision  recall  f1      support\n");
    for (k, s) in rep.per_class.iter().enumerate() {
        match s {
            Some(s) => out.push_str(&format!(
                "{k:<6} {:<10.4} {:<7.4} {:<7.4} {}\n",
                s.precision, s.recall, s.f1, s.support
            )),
            None => out.push_str(&format!("{k:<6} absent\n")),
        }
    }
    out
}

/// Log line for one finished epoch; identical format on stdout and in
/// the run's train.log.
pub fn epoch_log_line(snap: &EpochSnapshot) -> String {
    format!(
        "epoch {:03} train_loss {:.6} val_score {:.6}",
        snap.epoch, snap.train_loss, snap.val_score
    )
}

/// Describe the delay conversion for logging.
pub fn describe_variant(config: &TrainConfig, sample_rate: f64) -> String {
    match &config.variant {
        sporal_core::training::VariantSpec::Delay(spec) => format!(
            "delay delta_seconds {} delta_samples {}",
            spec.delta_seconds,
            spec.samples(sample_rate)
        ),
        v => v.name().to_string(),
    }
}
