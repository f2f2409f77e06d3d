//! Columnar text export/import of generated datasets.
//!
//! One header row (`f0,f1,...,label`), one example per line: feature values
//! first, then the label, or a blank field for unlabeled data. Floats are
//! written in shortest round-trip form, so export followed by import
//! reproduces a batch bit-exactly.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Batch, Tensor};

/// Serializes a batch in the columnar text format.
pub fn dataset_to_string(batch: &Batch) -> String {
    let d = batch.features.cols();
    let mut out = String::new();
    for j in 0..d {
        out.push_str(&format!("f{j},"));
    }
    out.push_str("label\n");
    for r in 0..batch.len() {
        for v in batch.features.row(r) {
            out.push_str(&format!("{v},"));
        }
        if let Some(labels) = &batch.labels {
            out.push_str(&labels[r].to_string());
        }
        out.push('\n');
    }
    out
}

/// Writes a batch to `path` in the columnar text format.
pub fn write_dataset(batch: &Batch, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_string(batch))?;
    Ok(())
}

/// Reads a dataset file written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<Batch> {
    let text = fs::read_to_string(path)?;
    parse_dataset_str(&text)
}

/// Parses the columnar text format.
///
/// The parser is strict: the header must declare `f0..f{d-1},label` in
/// order, every row must have exactly `d + 1` fields with finite feature
/// values, and rows must be uniformly labeled or uniformly unlabeled.
pub fn parse_dataset_str(text: &str) -> Result<Batch> {
    let err = |line: usize, reason: String| Error::DatasetFormatError { line, reason };
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "missing header row".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 2 || columns[columns.len() - 1] != "label" {
        return Err(err(1, "header must end with a `label` column".into()));
    }
    let d = columns.len() - 1;
    for (j, name) in columns[..d].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(err(1, format!("expected column `f{j}`, found `{name}`")));
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    let mut labeled: Option<bool> = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            return Err(err(line_no, "empty line".into()));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(err(
                line_no,
                format!("expected {} fields, found {}", d + 1, fields.len()),
            ));
        }
        let mut row = Vec::with_capacity(d);
        for (j, field) in fields[..d].iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(line_no, format!("field f{j} is not a number: `{field}`")))?;
            if !v.is_finite() {
                return Err(err(line_no, format!("field f{j} is not finite")));
            }
            row.push(v);
        }
        let label_field = fields[d];
        let has_label = !label_field.is_empty();
        match labeled {
            None => labeled = Some(has_label),
            Some(expected) if expected != has_label => {
                return Err(err(
                    line_no,
                    "rows mix labeled and unlabeled examples".into(),
                ));
            }
            _ => {}
        }
        if has_label {
            let l: u32 = label_field
                .parse()
                .map_err(|_| err(line_no, format!("invalid label `{label_field}`")))?;
            labels.push(l);
        }
        rows.push(row);
    }

    let n = rows.len();
    let features = if n == 0 {
        Tensor::zeros(vec![0, d])
    } else {
        Tensor::from_rows(&rows).map_err(|e| err(0, e.to_string()))?
    };
    Ok(if labeled == Some(true) {
        Batch::labeled(features, labels)
    } else {
        Batch::unlabeled(features)
    })
}
