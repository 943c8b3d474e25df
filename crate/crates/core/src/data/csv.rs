//! CSV ingestion for labeled multichannel recordings.
//!
//! Expected layout: UTF-8, header row, optional `timestamp` column
//! (ignored for modeling), feature columns, and a `label` column
//! holding either a class id or a class name. Missing feature cells
//! become NaN sentinels for the imputation pass in `preprocess`.

use std::fs;
use std::path::Path;

use crate::data::Recording;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone)]
pub struct CsvSchema {
    /// Feature column names, in model channel order. Empty means "every
    /// column that is not the label or timestamp, in file order".
    pub feature_cols: Vec<String>,
    pub label_col: String,
    pub timestamp_col: Option<String>,
    /// Class catalog; label cells must parse as an index into it or
    /// match one of these names.
    pub class_names: Vec<String>,
}

impl CsvSchema {
    pub fn infer_labels(class_names: &[String]) -> CsvSchema {
        CsvSchema {
            feature_cols: Vec::new(),
            label_col: "label".into(),
            timestamp_col: Some("timestamp".into()),
            class_names: class_names.to_vec(),
        }
    }

    fn parse_label(&self, cell: &str) -> Option<usize> {
        if let Some(pos) = self.class_names.iter().position(|n| n == cell) {
            return Some(pos);
        }
        match cell.parse::<usize>() {
            Ok(id) if id < self.class_names.len() => Some(id),
            _ => None,
        }
    }
}

fn parse_feature(cell: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") || cell.eq_ignore_ascii_case("na") {
        return Ok(f64::NAN);
    }
    cell.parse::<f64>()
        .map_err(|_| Error::Data(format!("unparseable feature value {cell:?}")))
}

/// Parse one recording. Row numbers in errors are 1-based physical line
/// numbers (the header is line 1).
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Recording> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();

    let label_idx = cols
        .iter()
        .position(|c| *c == schema.label_col)
        .ok_or_else(|| {
            Error::Data(format!(
                "{}: missing label column {:?}",
                path.display(),
                schema.label_col
            ))
        })?;
    let ts_idx = schema
        .timestamp_col
        .as_ref()
        .and_then(|name| cols.iter().position(|c| c == name));

    let feature_idx: Vec<usize> = if schema.feature_cols.is_empty() {
        (0..cols.len())
            .filter(|&i| i != label_idx && Some(i) != ts_idx)
            .collect()
    } else {
        let mut idx = Vec::with_capacity(schema.feature_cols.len());
        for name in &schema.feature_cols {
            let i = cols.iter().position(|c| c == name).ok_or_else(|| {
                Error::Data(format!("{}: missing feature column {name:?}", path.display()))
            })?;
            idx.push(i);
        }
        idx
    };
    let d = feature_idx.len();
    if d == 0 {
        return Err(Error::Data(format!("{}: no feature columns", path.display())));
    }

    let mut data: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row_no = line_no + 1; // 1-based physical line
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(Error::Data(format!(
                "{}: ragged row {row_no}: {} cells, header has {}",
                path.display(),
                cells.len(),
                cols.len()
            )));
        }
        for &i in &feature_idx {
            let v = parse_feature(cells[i]).map_err(|e| {
                Error::Data(format!("{}: row {row_no}: {e}", path.display()))
            })?;
            data.push(v);
        }
        let label_cell = cells[label_idx];
        let label = schema.parse_label(label_cell).ok_or_else(|| {
            Error::Data(format!(
                "{}: unknown label {label_cell:?} on row {row_no}",
                path.display()
            ))
        })?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let t = labels.len();
    let features = Matrix::from_vec(t, d, data)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(Recording {
        id,
        subject: String::new(),
        run: String::new(),
        features,
        labels,
        sample_rate: 0.0,
    })
}

/// Write a recording in the `f0..f{D-1},label` layout read by
/// [`load_csv`]. Floats use shortest round-trip formatting.
pub fn write_csv(path: &Path, rec: &Recording) -> Result<()> {
    let d = rec.channels();
    let mut out = String::new();
    for j in 0..d {
        out.push_str(&format!("f{j},"));
    }
    out.push_str("label\n");
    for t in 0..rec.len() {
        for &v in rec.features.row(t) {
            if v.is_nan() {
                out.push_str("NaN,");
            } else {
                out.push_str(&format!("{v},"));
            }
        }
        out.push_str(&format!("{}\n", rec.labels[t]));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes() -> Vec<String> {
        vec!["null".into(), "walk".into(), "freeze".into()]
    }

    fn write_tmp(name: &str, content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("sporal-csv-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn three_row_file_parses() {
        let p = write_tmp("ok.csv", "f0,f1,label\n1.0,2.0,0\n3.5,-1.0,walk\n0.25,0.5,2\n");
        let rec = load_csv(&p, &CsvSchema::infer_labels(&classes())).unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.channels(), 2);
        assert_eq!(rec.labels, vec![0, 1, 2]);
        assert_eq!(rec.features.get(1, 0), 3.5);
    }

    #[test]
    fn unknown_label_cites_row_number() {
        let mut content = String::from("f0,label\n");
        for _ in 0..5 {
            content.push_str("0.0,null\n");
        }
        content.push_str("0.0,jog\n"); // physical line 7
        let p = write_tmp("badlabel.csv", &content);
        let err = load_csv(&p, &CsvSchema::infer_labels(&classes())).unwrap_err().to_string();
        assert!(err.contains("row 7") && err.contains("jog"), "{err}");
    }

    #[test]
    fn ragged_and_empty_files_rejected() {
        let p = write_tmp("ragged.csv", "f0,f1,label\n1.0,0\n");
        assert!(load_csv(&p, &CsvSchema::infer_labels(&classes())).is_err());
        let p = write_tmp("empty.csv", "");
        assert!(load_csv(&p, &CsvSchema::infer_labels(&classes())).is_err());
        let p = write_tmp("headeronly.csv", "f0,label\n");
        assert!(load_csv(&p, &CsvSchema::infer_labels(&classes())).is_err());
    }

    #[test]
    fn missing_cells_become_nan() {
        let p = write_tmp("gaps.csv", "f0,f1,label\n,2.0,0\nNaN,3.0,1\n1.0,4.0,0\n");
        let rec = load_csv(&p, &CsvSchema::infer_labels(&classes())).unwrap();
        assert!(rec.features.get(0, 0).is_nan());
        assert!(rec.features.get(1, 0).is_nan());
        assert_eq!(rec.features.get(2, 0), 1.0);
    }

    #[test]
    fn timestamp_column_ignored() {
        let p = write_tmp("ts.csv", "timestamp,f0,label\n0.0,1.0,0\n0.1,2.0,1\n");
        let rec = load_csv(&p, &CsvSchema::infer_labels(&classes())).unwrap();
        assert_eq!(rec.channels(), 1);
        assert_eq!(rec.features.get(1, 0), 2.0);
    }

    #[test]
    fn round_trip_preserves_fields() {
        let p = write_tmp(
            "rt_src.csv",
            "f0,f1,label\n1.25,-3.5,0\n0.0078125,1e10,2\nNaN,0.1,1\n",
        );
        let schema = CsvSchema::infer_labels(&classes());
        let rec = load_csv(&p, &schema).unwrap();
        let p2 = write_tmp("rt_dst.csv", "");
        write_csv(&p2, &rec).unwrap();
        let rec2 = load_csv(&p2, &schema).unwrap();
        assert_eq!(rec.labels, rec2.labels);
        assert_eq!(rec.features.shape(), rec2.features.shape());
        for (a, b) in rec.features.data().iter().zip(rec2.features.data()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }
}
