//! Score-level fusion and epoch-wise bagging.
//!
//! An ensemble member is an epoch snapshot evaluated under its own
//! variant semantics; fusion is the unweighted mean of the members'
//! probability rows (over the members valid at each timestamp), taken
//! before the argmax. Averaging probabilities can only help the
//! cross-entropy: by Jensen's inequality on `-ln`, the fused CE is
//! never above the mean member CE.

use serde::{Deserialize, Serialize};

use crate::data::Recording;
use crate::error::{Error, Result};
use crate::training::{evaluate_model, EpochSnapshot, VariantSpec};
use crate::variants::{align_for_fusion, ProbSeries};

/// One source of base learners inside a multi-source ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSource {
    /// Key into the map of training runs.
    pub run: String,
    /// How many snapshots this source contributes.
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Highest validation score; ties resolve to the earlier epoch.
    #[default]
    TopM,
    /// The last M epochs.
    LastM,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub sources: Vec<EnsembleSource>,
    #[serde(default)]
    pub rule: SelectionRule,
}

impl EnsembleSpec {
    pub fn total_members(&self) -> usize {
        self.sources.iter().map(|s| s.count).sum()
    }

    /// Compact description like `LSTM(6)+DLY(7)+INV(7)`.
    pub fn describe(&self, variant_of: impl Fn(&str) -> String) -> String {
        self.sources
            .iter()
            .map(|s| format!("{}({})", variant_of(&s.run), s.count))
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Mean of the members' probability rows over the valid members at each
/// timestamp; valid wherever at least one member predicts.
pub fn fuse_scores(members: &[&ProbSeries]) -> Result<ProbSeries> {
    if members.is_empty() {
        return Err(Error::InvalidArg("fuse_scores: empty member list".into()));
    }
    let aligned = align_for_fusion(members)?;
    Ok(ProbSeries { probs: aligned.mean, valid: aligned.valid })
}

/// Cross-entropy of the fused series and of every member, over the
/// timestamps where all members are valid.
pub fn fused_ce(members: &[&ProbSeries], targets: &[usize]) -> Result<(f64, Vec<f64>)> {
    if members.is_empty() {
        return Err(Error::InvalidArg("fused_ce: empty member list".into()));
    }
    let aligned = align_for_fusion(members)?;
    if targets.len() != aligned.mean.rows() {
        return Err(Error::Shape(format!(
            "fused_ce: {} targets for {} timestamps",
            targets.len(),
            aligned.mean.rows()
        )));
    }
    let joint: Vec<usize> = (0..targets.len()).filter(|&t| aligned.joint_valid[t]).collect();
    if joint.is_empty() {
        return Err(Error::Eval("fused_ce: no jointly valid timestamps".into()));
    }
    let n = joint.len() as f64;
    let fused = joint
        .iter()
        .map(|&t| -aligned.mean.get(t, targets[t]).ln())
        .sum::<f64>()
        / n;
    let member_ces = members
        .iter()
        .map(|m| {
            joint
                .iter()
                .map(|&t| -m.probs.get(t, targets[t]).ln())
                .sum::<f64>()
                / n
        })
        .collect();
    Ok((fused, member_ces))
}

/// The `m` snapshots with the highest validation score (ties: earlier
/// epoch), returned in epoch order.
pub fn select_bagged(snapshots: &[EpochSnapshot], m: usize) -> Result<Vec<&EpochSnapshot>> {
    if m > snapshots.len() {
        return Err(Error::InvalidArg(format!(
            "cannot select {m} of {} snapshots",
            snapshots.len()
        )));
    }
    let mut order: Vec<usize> = (0..snapshots.len()).collect();
    order.sort_by(|&a, &b| {
        snapshots[b]
            .val_score
            .partial_cmp(&snapshots[a].val_score)
            .expect("finite scores")
            .then(snapshots[a].epoch.cmp(&snapshots[b].epoch))
    });
    let mut chosen: Vec<usize> = order.into_iter().take(m).collect();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| &snapshots[i]).collect())
}

/// The last `m` epochs, in epoch order.
pub fn select_last(snapshots: &[EpochSnapshot], m: usize) -> Result<Vec<&EpochSnapshot>> {
    if m > snapshots.len() {
        return Err(Error::InvalidArg(format!(
            "cannot select {m} of {} snapshots",
            snapshots.len()
        )));
    }
    Ok(snapshots[snapshots.len() - m..].iter().collect())
}

/// A finished training run: the variant its members evaluate under, plus
/// all epoch snapshots.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub variant: VariantSpec,
    pub snapshots: Vec<EpochSnapshot>,
}

/// A fused predictor assembled from several training runs.
pub struct MultiSourcePredictor<'a> {
    members: Vec<(&'a EpochSnapshot, &'a VariantSpec)>,
}

/// Select each source's members from its run and bundle them into one
/// fused predictor.
pub fn build_multi_source<'a>(
    spec: &EnsembleSpec,
    runs: &'a [(String, TrainedRun)],
) -> Result<MultiSourcePredictor<'a>> {
    let mut members = Vec::with_capacity(spec.total_members());
    for source in &spec.sources {
        if source.count == 0 {
            continue;
        }
        let run = runs
            .iter()
            .find(|(id, _)| id == &source.run)
            .map(|(_, r)| r)
            .ok_or_else(|| Error::Config(format!("ensemble source run {:?} unknown", source.run)))?;
        if run.snapshots.len() < source.count {
            return Err(Error::Config(format!(
                "ensemble source {:?} wants {} members but the run has {} snapshots",
                source.run,
                source.count,
                run.snapshots.len()
            )));
        }
        let chosen = match spec.rule {
            SelectionRule::TopM => select_bagged(&run.snapshots, source.count)?,
            SelectionRule::LastM => select_last(&run.snapshots, source.count)?,
        };
        members.extend(chosen.into_iter().map(|s| (s, &run.variant)));
    }
    if members.is_empty() {
        return Err(Error::Config("ensemble selects no members".into()));
    }
    Ok(MultiSourcePredictor { members })
}

impl MultiSourcePredictor<'_> {
    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    /// Fused probability series for one recording: every member predicts
    /// under its own variant semantics, then scores are averaged.
    pub fn predict(&self, recording: &Recording) -> Result<ProbSeries> {
        let series: Vec<ProbSeries> = self
            .members
            .iter()
            .map(|(snap, variant)| {
                Ok(evaluate_model(&snap.params, &[recording], variant)?.remove(0))
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&ProbSeries> = series.iter().collect();
        fuse_scores(&refs)
    }

    pub fn predict_all(&self, recordings: &[&Recording]) -> Result<Vec<ProbSeries>> {
        recordings.iter().map(|r| self.predict(r)).collect()
    }
}
