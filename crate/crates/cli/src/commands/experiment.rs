//! End-to-end experiment pipelines at desk scale (built-in synthetic
//! datasets) or full scale (user-supplied CSV exports behind
//! `--full-scale`).

use std::fs;
use std::path::PathBuf;

use serde::Deserialize;

use sporal_core::data::batcher::HypavConfig;
use sporal_core::data::preprocess::normalize_for_split;
use sporal_core::data::synthetic::{make_synthetic, LabelMode, SyntheticConfig};
use sporal_core::data::{Dataset, Manifest, Recording, SplitSpec, SubjectRun};
use sporal_core::ensemble::{
    build_multi_source, fuse_scores, EnsembleSource, EnsembleSpec, SelectionRule, TrainedRun,
};
use sporal_core::training::{
    evaluate_model, score_series, train, MetricMode, TrainConfig, TrainOutcome, VariantSpec,
};
use sporal_core::variants::{delta_to_samples, ProbSeries};
use sporal_core::{Error, Result};

use crate::commands::train::resolve_relative;
use crate::config::load_json;

pub struct ExperimentArgs {
    pub name: String,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub seeds: Option<usize>,
    pub out: Option<PathBuf>,
    pub full_scale: bool,
    pub delta: Option<f64>,
}

/// Full-scale experiments point at a real dataset manifest; the hold-out
/// split and metric come from the dataset name.
#[derive(Debug, Clone, Deserialize)]
struct FullScaleConfig {
    dataset: PathBuf,
    /// `opp`, `dg` or `pamap2`.
    dataset_name: String,
    #[serde(default)]
    epochs: Option<usize>,
    #[serde(default)]
    hidden: Option<usize>,
}

fn sel(pairs: &[(&str, &str)]) -> Vec<SubjectRun> {
    pairs
        .iter()
        .map(|(s, r)| SubjectRun { subject: s.to_string(), run: r.to_string() })
        .collect()
}

/// Hold-out protocols for the public datasets. For DG, subjects without
/// target incidents (4 and 10) are expected to be absent from the
/// manifest.
fn holdout_split(dataset_name: &str) -> Result<SplitSpec> {
    match dataset_name {
        "opp" => Ok(SplitSpec {
            train: vec![],
            validation: sel(&[("1", "2")]),
            test: sel(&[("2", "4"), ("2", "5"), ("3", "4"), ("3", "5")]),
        }),
        "dg" => Ok(SplitSpec {
            train: vec![],
            validation: sel(&[("9", "1")]),
            test: sel(&[("2", "1"), ("2", "2")]),
        }),
        "pamap2" => Ok(SplitSpec {
            train: vec![],
            validation: sel(&[("5", "1"), ("5", "2")]),
            test: sel(&[("6", "1"), ("6", "2")]),
        }),
        other => Err(Error::Config(format!(
            "unknown dataset name {other:?} (opp|dg|pamap2)"
        ))),
    }
}

struct ExpContext {
    dataset: Dataset,
    split: SplitSpec,
    metric: MetricMode,
    /// Template config; experiments override variant/seed/hypav.
    base: TrainConfig,
    default_delta: f64,
    hypav_on: HypavConfig,
    hypav_off: HypavConfig,
}

/// Desk-scale synthetic dataset with lookahead-only label cues.
fn desk_sweep_dataset(seed: u64) -> Result<Dataset> {
    make_synthetic(
        &SyntheticConfig {
            channels: 3,
            classes: 3,
            recordings: 10,
            samples_per_recording: 1800,
            sample_rate: 30.0,
            event_rate: 0.5,
            event_len_range: (4, 8),
            noise_sd: 0.1,
            label_mode: Some(LabelMode::PreOnset(5)),
            class_label_modes: None,
        },
        seed,
    )
}

/// Desk-scale dataset mixing a lookahead cue class with a causal cue
/// class, where forward and inverse models are complementary.
fn desk_mixed_dataset(seed: u64) -> Result<Dataset> {
    make_synthetic(
        &SyntheticConfig {
            channels: 3,
            classes: 3,
            recordings: 10,
            samples_per_recording: 1800,
            sample_rate: 30.0,
            event_rate: 0.7,
            event_len_range: (4, 8),
            noise_sd: 0.1,
            label_mode: None,
            class_label_modes: Some(vec![LabelMode::PreOnset(5), LabelMode::PostOffset(5)]),
        },
        seed,
    )
}

fn desk_split() -> SplitSpec {
    SplitSpec {
        train: vec![],
        validation: sel(&[("7", "1"), ("8", "1")]),
        test: sel(&[("9", "1"), ("10", "1")]),
    }
}

fn context(args: &ExperimentArgs, mixed: bool) -> Result<ExpContext> {
    if args.full_scale {
        let path = args.config.as_ref().ok_or_else(|| {
            Error::Config("--full-scale needs --config pointing at a dataset descriptor".into())
        })?;
        let fs_cfg: FullScaleConfig = load_json(path)?;
        let manifest_path = resolve_relative(path, &fs_cfg.dataset);
        let manifest = Manifest::load(&manifest_path)?;
        let dataset = manifest.load_dataset(&manifest_path)?;
        let split = holdout_split(&fs_cfg.dataset_name)?;
        let resolved = split.resolve(&dataset)?;
        let dataset = normalize_for_split(&dataset, &resolved)?;
        let metric = if fs_cfg.dataset_name == "dg" {
            MetricMode::Binary { positive_class: 1, target_specificity: 0.9 }
        } else {
            MetricMode::Multiclass { exclude_null: false }
        };
        let base = TrainConfig {
            variant: VariantSpec::Standard,
            epochs: fs_cfg.epochs.unwrap_or(30),
            learning_rate: 0.001,
            dropout_p: 0.5,
            clip_norm: 10.0,
            hidden: fs_cfg.hidden.unwrap_or(256),
            layers: 2,
            seed: args.seed,
            hypav: HypavConfig::fixed(1.0, 128),
        };
        Ok(ExpContext {
            dataset,
            split,
            metric,
            base,
            default_delta: 0.5,
            hypav_on: HypavConfig::default(),
            hypav_off: HypavConfig::fixed(1.0, 128),
        })
    } else {
        let dataset = if mixed {
            desk_mixed_dataset(500 + args.seed)?
        } else {
            desk_sweep_dataset(100 + args.seed)?
        };
        let base = TrainConfig {
            variant: VariantSpec::Standard,
            epochs: 22,
            learning_rate: 0.0025,
            dropout_p: 0.15,
            clip_norm: 10.0,
            hidden: 24,
            layers: 2,
            seed: args.seed,
            hypav: HypavConfig::fixed(1.0, 8),
        };
        Ok(ExpContext {
            dataset,
            split: desk_split(),
            metric: MetricMode::Multiclass { exclude_null: false },
            base,
            default_delta: 5.0 / 30.0,
            hypav_on: HypavConfig {
                window_len_range: (0.5, 1.5),
                batch_size_choices: vec![6, 8, 12],
                resample_offsets: true,
                fixed_window_len: None,
                fixed_batch_size: None,
            },
            hypav_off: HypavConfig::fixed(1.0, 8),
        })
    }
}

fn test_recordings(ctx: &ExpContext) -> Result<Vec<&Recording>> {
    let resolved = ctx.split.resolve(&ctx.dataset)?;
    Ok(resolved.test.iter().map(|i| &ctx.dataset.recordings[*i]).collect())
}

fn run_one(ctx: &ExpContext, variant: VariantSpec, seed: u64, hypav: &HypavConfig) -> Result<TrainOutcome> {
    let config = TrainConfig {
        variant,
        seed,
        hypav: hypav.clone(),
        ..ctx.base.clone()
    };
    train(&config, &ctx.dataset, &ctx.split, &ctx.metric)
}

fn test_score(ctx: &ExpContext, series: &[ProbSeries], recs: &[&Recording]) -> Result<f64> {
    score_series(series, recs, &ctx.metric, ctx.dataset.classes(), ctx.dataset.null_class)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn emit(args: &ExperimentArgs, name: &str, table: &str) -> Result<()> {
    print!("{table}");
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
        let path = out.join(format!("{name}.txt"));
        fs::write(&path, table).map_err(|e| Error::io(path.display().to_string(), e))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// One row per delay interval: train a delay model, report the best
/// validation score and the hold-out test score.
fn delay_sweep(args: &ExperimentArgs) -> Result<()> {
    let ctx = context(args, false)?;
    let recs = test_recordings(&ctx)?;
    let grid: Vec<f64> = if args.full_scale {
        vec![0.0, 0.1, 0.3, 0.5, 0.7, 1.0, 1.5]
    } else {
        vec![0.0, 0.1, 1.0 / 6.0, 0.3, 0.5]
    };
    let mut table = String::from("delta_s  delta_samples  val_best  test\n");
    for &delta in &grid {
        let samples = delta_to_samples(delta, ctx.dataset.sample_rate);
        let outcome = run_one(&ctx, VariantSpec::delay(delta), args.seed, &ctx.base.hypav)?;
        let best = outcome.best_snapshot();
        let series = evaluate_model(&best.params, &recs, &VariantSpec::delay(delta))?;
        let test = test_score(&ctx, &series, &recs)?;
        table.push_str(&format!(
            "{delta:<8.3} {samples:<14} {:<9.4} {test:.4}\n",
            best.val_score
        ));
    }
    emit(args, "delay-sweep", &table)
}

/// Forward vs inverse vs their score-level fusion on the test split.
fn inverse_fusion(args: &ExperimentArgs) -> Result<()> {
    let ctx = context(args, true)?;
    let recs = test_recordings(&ctx)?;
    let lstm = run_one(&ctx, VariantSpec::Standard, args.seed, &ctx.base.hypav)?;
    let inv = run_one(&ctx, VariantSpec::Inverse, args.seed, &ctx.base.hypav)?;
    let s_lstm = evaluate_model(&lstm.best_snapshot().params, &recs, &VariantSpec::Standard)?;
    let s_inv = evaluate_model(&inv.best_snapshot().params, &recs, &VariantSpec::Inverse)?;
    let fused: Vec<ProbSeries> = s_lstm
        .iter()
        .zip(&s_inv)
        .map(|(a, b)| fuse_scores(&[a, b]))
        .collect::<Result<_>>()?;
    let mut table = String::from("model         test\n");
    table.push_str(&format!("LSTM          {:.4}\n", test_score(&ctx, &s_lstm, &recs)?));
    table.push_str(&format!("Inverse       {:.4}\n", test_score(&ctx, &s_inv, &recs)?));
    table.push_str(&format!("LSTM&Inverse  {:.4}\n", test_score(&ctx, &fused, &recs)?));
    emit(args, "inverse-fusion", &table)
}

/// Randomized window/batch/offset training vs fixed hyper-parameters,
/// repeated over seeds and reported as mean +/- std.
fn hypav(args: &ExperimentArgs) -> Result<()> {
    let ctx = context(args, true)?;
    let recs = test_recordings(&ctx)?;
    let n = args.seeds.unwrap_or(30);
    if n == 0 {
        return Err(Error::Config("--seeds must be >= 1".into()));
    }
    let delta = args.delta.unwrap_or(ctx.default_delta);

    let delay_run = |hypav: &HypavConfig, seed: u64| -> Result<f64> {
        let out = run_one(&ctx, VariantSpec::delay(delta), seed, hypav)?;
        let s = evaluate_model(&out.best_snapshot().params, &recs, &VariantSpec::delay(delta))?;
        test_score(&ctx, &s, &recs)
    };
    let fusion_run = |hypav: &HypavConfig, seed: u64| -> Result<f64> {
        let lstm = run_one(&ctx, VariantSpec::Standard, seed, hypav)?;
        let inv = run_one(&ctx, VariantSpec::Inverse, seed, hypav)?;
        let a = evaluate_model(&lstm.best_snapshot().params, &recs, &VariantSpec::Standard)?;
        let b = evaluate_model(&inv.best_snapshot().params, &recs, &VariantSpec::Inverse)?;
        let fused: Vec<ProbSeries> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| fuse_scores(&[x, y]))
            .collect::<Result<_>>()?;
        test_score(&ctx, &fused, &recs)
    };

    let mut table = String::from("strategy      w/ HYPAV           w/o\n");
    for (label, runner) in [
        ("Delay", &delay_run as &dyn Fn(&HypavConfig, u64) -> Result<f64>),
        ("LSTM&Inverse", &fusion_run),
    ] {
        let with: Vec<f64> = (0..n)
            .map(|i| runner(&ctx.hypav_on, args.seed + i as u64))
            .collect::<Result<_>>()?;
        let (mean, std) = mean_std(&with);
        let without = runner(&ctx.hypav_off, args.seed)?;
        table.push_str(&format!("{label:<13} {mean:.4} +/- {std:.4}  {without:.4}\n"));
    }
    table.push_str(&format!("({n} seeds, delay interval {delta:.4} s)\n"));
    emit(args, "hypav", &table)
}

/// The seven 20-member ensemble compositions over the three training
/// sources, reported as mean +/- std over seeds.
fn multi_source(args: &ExperimentArgs) -> Result<()> {
    let ctx = context(args, true)?;
    let recs = test_recordings(&ctx)?;
    let n = args.seeds.unwrap_or(3);
    if n == 0 {
        return Err(Error::Config("--seeds must be >= 1".into()));
    }
    let delta = args.delta.unwrap_or(ctx.default_delta);
    // Every run needs at least 20 snapshots for the single-source rows.
    let epochs = ctx.base.epochs.max(22);

    let compositions: Vec<(&str, Vec<(&str, usize)>)> = vec![
        ("LSTM(20)", vec![("lstm", 20)]),
        ("DLY(20)", vec![("dly", 20)]),
        ("INV(20)", vec![("inv", 20)]),
        ("LSTM(10)+DLY(10)", vec![("lstm", 10), ("dly", 10)]),
        ("LSTM(10)+INV(10)", vec![("lstm", 10), ("inv", 10)]),
        ("DLY(10)+INV(10)", vec![("dly", 10), ("inv", 10)]),
        ("LSTM(6)+DLY(7)+INV(7)", vec![("lstm", 6), ("dly", 7), ("inv", 7)]),
    ];
    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); compositions.len()];

    for i in 0..n {
        let seed = args.seed + i as u64;
        let mk = |variant: VariantSpec| -> Result<TrainOutcome> {
            let config = TrainConfig {
                variant,
                seed,
                epochs,
                hypav: ctx.hypav_on.clone(),
                ..ctx.base.clone()
            };
            train(&config, &ctx.dataset, &ctx.split, &ctx.metric)
        };
        let runs = vec![
            ("lstm".to_string(), TrainedRun {
                variant: VariantSpec::Standard,
                snapshots: mk(VariantSpec::Standard)?.snapshots,
            }),
            ("dly".to_string(), TrainedRun {
                variant: VariantSpec::delay(delta),
                snapshots: mk(VariantSpec::delay(delta))?.snapshots,
            }),
            ("inv".to_string(), TrainedRun {
                variant: VariantSpec::Inverse,
                snapshots: mk(VariantSpec::Inverse)?.snapshots,
            }),
        ];
        for (slot, (_, sources)) in compositions.iter().enumerate() {
            let spec = EnsembleSpec {
                sources: sources
                    .iter()
                    .map(|(run, count)| EnsembleSource { run: run.to_string(), count: *count })
                    .collect(),
                rule: SelectionRule::TopM,
            };
            let predictor = build_multi_source(&spec, &runs)?;
            let series = predictor.predict_all(&recs)?;
            scores[slot].push(test_score(&ctx, &series, &recs)?);
        }
    }

    let mut table = String::from("ensemble                test\n");
    for ((label, _), xs) in compositions.iter().zip(&scores) {
        let (mean, std) = mean_std(xs);
        table.push_str(&format!("{label:<23} {mean:.4} +/- {std:.4}\n"));
    }
    table.push_str(&format!("({n} seeds, 20 members each, delay interval {delta:.4} s)\n"));
    emit(args, "multi-source", &table)
}

pub fn run(args: &ExperimentArgs) -> Result<()> {
    match args.name.as_str() {
        "delay-sweep" => delay_sweep(args),
        "inverse-fusion" => inverse_fusion(args),
        "hypav" => hypav(args),
        "multi-source" => multi_source(args),
        other => Err(Error::Config(format!(
            "unknown experiment {other:?} (delay-sweep|inverse-fusion|hypav|multi-source)"
        ))),
    }
}

/// Registered experiment names with their repetition defaults.
pub fn registry() -> Vec<(&'static str, usize)> {
    vec![
        ("delay-sweep", 1),
        ("inverse-fusion", 1),
        ("hypav", 30),
        ("multi-source", 3),
    ]
}

/// The seven ensemble compositions reported by `multi-source`.
pub fn multi_source_compositions() -> Vec<&'static str> {
    vec![
        "LSTM(20)",
        "DLY(20)",
        "INV(20)",
        "LSTM(10)+DLY(10)",
        "LSTM(10)+INV(10)",
        "DLY(10)+INV(10)",
        "LSTM(6)+DLY(7)+INV(7)",
    ]
}
