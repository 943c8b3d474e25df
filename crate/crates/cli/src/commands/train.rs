use std::fs;
use std::path::{Path, PathBuf};

use sporal_core::training::{train, VariantSpec};
use sporal_core::{Error, Result};

use crate::config::{load_json, RunConfig};
use crate::pipeline::{describe_variant, epoch_log_line, load_normalized, save_run};

pub struct TrainOverrides {
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub variant: Option<String>,
    pub out: Option<PathBuf>,
}

fn apply_overrides(config: &mut RunConfig, ov: &TrainOverrides) -> Result<()> {
    if let Some(seed) = ov.seed {
        config.train.seed = seed;
    }
    if let Some(delta) = ov.delta {
        config.train.variant = VariantSpec::delay(delta);
    }
    match ov.variant.as_deref() {
        None => {}
        Some("standard") => config.train.variant = VariantSpec::Standard,
        Some("inverse") => config.train.variant = VariantSpec::Inverse,
        Some("delay") => match (&config.train.variant, ov.delta) {
            (VariantSpec::Delay(_), _) => {}
            (_, Some(delta)) => config.train.variant = VariantSpec::delay(delta),
            (_, None) => {
                return Err(Error::Config(
                    "--variant delay needs --delta SECONDS (or a delay variant in the config)"
                        .into(),
                ))
            }
        },
        Some(other) => {
            return Err(Error::Config(format!(
                "unknown variant {other:?} (standard|delay|inverse)"
            )))
        }
    }
    if let Some(out) = &ov.out {
        config.out_dir = Some(out.clone());
    }
    Ok(())
}

/// Train one run and persist every epoch snapshot.
pub fn run(config_path: &Path, overrides: &TrainOverrides) -> Result<()> {
    let mut config: RunConfig = load_json(config_path)?;
    apply_overrides(&mut config, overrides)?;
    let out_dir = config
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory (set out_dir or pass --out)".into()))?;

    let dataset_path = resolve_relative(config_path, &config.dataset);
    let (dataset, _) = load_normalized(&dataset_path, &config.split)?;
    println!("variant {}", describe_variant(&config.train, dataset.sample_rate));

    let outcome = train(&config.train, &dataset, &config.split, &config.metric)?;

    let mut log = String::new();
    for snap in &outcome.snapshots {
        let line = epoch_log_line(snap);
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    }
    let best = outcome.best_snapshot();
    let best_line = format!("best epoch {:03} val_score {:.6}", best.epoch, best.val_score);
    println!("{best_line}");
    log.push_str(&best_line);
    log.push('\n');

    save_run(&out_dir, &config, &outcome)?;
    fs::write(out_dir.join("train.log"), log)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    println!("wrote {} snapshots to {}", outcome.snapshots.len(), out_dir.display());
    Ok(())
}

/// Dataset paths in a config are relative to the config file.
pub fn resolve_relative(config_path: &Path, target: &Path) -> PathBuf {
    if target.is_absolute() {
        target.to_path_buf()
    } else {
        config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(target)
    }
}
