//! Dataset model, ingestion, preprocessing, synthesis and batching.

pub mod batcher;
pub mod csv;
pub mod preprocess;
pub mod synthetic;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A labeled multichannel time series for one (subject, run).
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub id: String,
    pub subject: String,
    pub run: String,
    /// `T x D` feature rows.
    pub features: Matrix,
    /// One class id per timestamp, values in `[0, C)`.
    pub labels: Vec<usize>,
    pub sample_rate: f64,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.features.rows() != self.labels.len() {
            return Err(Error::Data(format!(
                "recording {}: {} feature rows vs {} labels",
                self.id,
                self.features.rows(),
                self.labels.len()
            )));
        }
        if self.labels.is_empty() {
            return Err(Error::Data(format!("recording {} is empty", self.id)));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Data(format!(
                "recording {}: label {bad} out of range for {classes} classes",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub recordings: Vec<Recording>,
    pub class_names: Vec<String>,
    pub null_class: Option<usize>,
    pub sample_rate: f64,
}

impl Dataset {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn channels(&self) -> usize {
        self.recordings.first().map_or(0, |r| r.channels())
    }

    pub fn validate(&self) -> Result<()> {
        if self.recordings.is_empty() {
            return Err(Error::Data("dataset has no recordings".into()));
        }
        let d = self.channels();
        for r in &self.recordings {
            r.validate(self.classes())?;
            if r.channels() != d {
                return Err(Error::Data(format!(
                    "recording {} has {} channels, expected {d}",
                    r.id,
                    r.channels()
                )));
            }
            if r.sample_rate != self.sample_rate {
                return Err(Error::Data(format!(
                    "recording {} sample rate {} differs from dataset rate {}",
                    r.id, r.sample_rate, self.sample_rate
                )));
            }
        }
        Ok(())
    }
}

/// JSON manifest describing a dataset on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub class_names: Vec<String>,
    pub null_class: Option<usize>,
    pub sample_rate: f64,
    pub recordings: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub subject: String,
    pub run: String,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("manifest {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("manifest serialize: {e}")))?;
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Load every recording referenced by the manifest. Relative paths
    /// resolve against the manifest's directory.
    pub fn load_dataset(&self, manifest_path: &Path) -> Result<Dataset> {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let schema = csv::CsvSchema::infer_labels(&self.class_names);
        let mut recordings = Vec::with_capacity(self.recordings.len());
        for entry in &self.recordings {
            let p: PathBuf = if Path::new(&entry.path).is_absolute() {
                PathBuf::from(&entry.path)
            } else {
                base.join(&entry.path)
            };
            let mut rec = csv::load_csv(&p, &schema)?;
            rec.subject = entry.subject.clone();
            rec.run = entry.run.clone();
            rec.sample_rate = self.sample_rate;
            recordings.push(rec);
        }
        let ds = Dataset {
            recordings,
            class_names: self.class_names.clone(),
            null_class: self.null_class,
            sample_rate: self.sample_rate,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// (subject, run) selector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubjectRun {
    pub subject: String,
    pub run: String,
}

/// Hold-out split. An empty `train` list means "everything not selected
/// by validation or test".
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(default)]
    pub train: Vec<SubjectRun>,
    #[serde(default)]
    pub validation: Vec<SubjectRun>,
    #[serde(default)]
    pub test: Vec<SubjectRun>,
}

/// Indices into `dataset.recordings` for each role.
#[derive(Debug, Clone)]
pub struct ResolvedSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn resolve(&self, dataset: &Dataset) -> Result<ResolvedSplit> {
        for (name, a, b) in [
            ("train/validation", &self.train, &self.validation),
            ("train/test", &self.train, &self.test),
            ("validation/test", &self.validation, &self.test),
        ] {
            if let Some(dup) = a.iter().find(|s| b.contains(s)) {
                return Err(Error::Config(format!(
                    "split selectors overlap ({name}): subject {} run {}",
                    dup.subject, dup.run
                )));
            }
        }
        let find = |sel: &[SubjectRun]| -> Result<Vec<usize>> {
            let mut out = Vec::new();
            for s in sel {
                let matches: Vec<usize> = dataset
                    .recordings
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.subject == s.subject && r.run == s.run)
                    .map(|(i, _)| i)
                    .collect();
                if matches.is_empty() {
                    return Err(Error::Config(format!(
                        "split selector subject {} run {} matches no recording",
                        s.subject, s.run
                    )));
                }
                out.extend(matches);
            }
            Ok(out)
        };
        let validation = find(&self.validation)?;
        let test = find(&self.test)?;
        let train = if self.train.is_empty() {
            (0..dataset.recordings.len())
                .filter(|i| !validation.contains(i) && !test.contains(i))
                .collect()
        } else {
            find(&self.train)?
        };
        Ok(ResolvedSplit { train, validation, test })
    }
}
