use std::fs;
use std::path::Path;

use sporal_core::data::csv::write_csv;
use sporal_core::data::synthetic::{make_synthetic, SyntheticConfig};
use sporal_core::data::{Manifest, ManifestEntry};
use sporal_core::{Error, Result};

use crate::config::load_json;

/// Generate a synthetic dataset: one CSV per recording plus a manifest.
pub fn run(config_path: &Path, seed: u64, out_dir: &Path) -> Result<()> {
    let cfg: SyntheticConfig = load_json(config_path)?;
    let dataset = make_synthetic(&cfg, seed)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let mut entries = Vec::with_capacity(dataset.recordings.len());
    for rec in &dataset.recordings {
        let file = format!("subject{}_run{}.csv", rec.subject, rec.run);
        write_csv(&out_dir.join(&file), rec)?;
        entries.push(ManifestEntry {
            path: file,
            subject: rec.subject.clone(),
            run: rec.run.clone(),
        });
    }
    let manifest = Manifest {
        class_names: dataset.class_names.clone(),
        null_class: dataset.null_class,
        sample_rate: dataset.sample_rate,
        recordings: entries,
    };
    manifest.save(&out_dir.join("manifest.json"))?;

    let total: usize = dataset.recordings.iter().map(|r| r.len()).sum();
    println!(
        "wrote {} recordings ({} samples, {} channels, {} classes) to {}",
        dataset.recordings.len(),
        total,
        dataset.channels(),
        dataset.classes(),
        out_dir.display()
    );
    Ok(())
}
