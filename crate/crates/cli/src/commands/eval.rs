use std::fs;
use std::path::{Path, PathBuf};

use sporal_core::checkpoint;
use sporal_core::data::Recording;
use sporal_core::ensemble::build_multi_source;
use sporal_core::training::evaluate_model;
use sporal_core::variants::ProbSeries;
use sporal_core::{Error, Result};

use crate::commands::train::resolve_relative;
use crate::config::{load_json, EvalConfig, EvalSource, EvalSplit};
use crate::pipeline::{evaluate_series, load_normalized, load_run, render_report, split_recordings};

/// Evaluate checkpoints or an ensemble on a dataset split and write a
/// metrics report.
pub fn run(config_path: &Path, out_override: Option<&Path>) -> Result<()> {
    let config: EvalConfig = load_json(config_path)?;
    let dataset_path = resolve_relative(config_path, &config.dataset);
    let (dataset, resolved) = load_normalized(&dataset_path, &config.split)?;
    let idx = match config.eval_split {
        EvalSplit::Train => &resolved.train,
        EvalSplit::Validation => &resolved.validation,
        EvalSplit::Test => &resolved.test,
    };
    if idx.is_empty() {
        return Err(Error::Config(format!(
            "eval split {:?} selects no recordings",
            config.eval_split
        )));
    }
    let recs: Vec<&Recording> = split_recordings(&dataset, idx);

    let series: Vec<ProbSeries> = match &config.source {
        EvalSource::Checkpoints(refs) => {
            if refs.is_empty() {
                return Err(Error::Config("no checkpoints to evaluate".into()));
            }
            // Score-fuse when several checkpoints are given.
            let mut member_series: Vec<Vec<ProbSeries>> = Vec::new();
            for r in refs {
                let path = resolve_relative(config_path, &r.path);
                let params = checkpoint::load(&path)?;
                if params.dims.input != dataset.channels()
                    || params.dims.classes != dataset.classes()
                {
                    return Err(Error::Data(format!(
                        "checkpoint {} is {}ch/{}cls, dataset is {}ch/{}cls",
                        path.display(),
                        params.dims.input,
                        params.dims.classes,
                        dataset.channels(),
                        dataset.classes()
                    )));
                }
                member_series.push(evaluate_model(&params, &recs, &r.variant)?);
            }
            fuse_across(member_series)?
        }
        EvalSource::Ensemble { spec, runs } => {
            let mut loaded = Vec::new();
            for (id, dir) in runs {
                let (_, run) = load_run(&resolve_relative(config_path, dir))?;
                loaded.push((id.clone(), run));
            }
            let predictor = build_multi_source(spec, &loaded)?;
            println!(
                "ensemble {} ({} members)",
                spec.describe(|id| {
                    loaded
                        .iter()
                        .find(|(rid, _)| rid == id)
                        .map(|(_, r)| variant_label(&r.variant).to_string())
                        .unwrap_or_else(|| id.to_uppercase())
                }),
                predictor.member_count()
            );
            predictor.predict_all(&recs)?
        }
    };

    let rep = evaluate_series(
        &series,
        &recs,
        &config.metric,
        dataset.classes(),
        dataset.null_class,
    )?;
    let table = render_report(&rep);
    print!("{table}");

    let out = out_override
        .map(PathBuf::from)
        .or_else(|| config.out.as_ref().map(|o| resolve_relative(config_path, o)));
    if let Some(out) = out {
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(out.display().to_string(), e))?;
            }
        }
        let json = serde_json::to_string_pretty(&rep)
            .map_err(|e| Error::Config(format!("serialize report: {e}")))?;
        fs::write(&out, json).map_err(|e| Error::io(out.display().to_string(), e))?;
        fs::write(out.with_extension("txt"), table)
            .map_err(|e| Error::io(out.display().to_string(), e))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

/// Conventional source labels: LSTM for the plain forward model, DLY for
/// delay, INV for inverse.
pub fn variant_label(variant: &sporal_core::training::VariantSpec) -> &'static str {
    use sporal_core::training::VariantSpec::*;
    match variant {
        Standard => "LSTM",
        Delay(_) => "DLY",
        Inverse => "INV",
    }
}

fn fuse_across(member_series: Vec<Vec<ProbSeries>>) -> Result<Vec<ProbSeries>> {
    if member_series.len() == 1 {
        return Ok(member_series.into_iter().next().unwrap());
    }
    let recs = member_series[0].len();
    (0..recs)
        .map(|i| {
            let members: Vec<&ProbSeries> = member_series.iter().map(|s| &s[i]).collect();
            sporal_core::ensemble::fuse_scores(&members)
        })
        .collect()
}
