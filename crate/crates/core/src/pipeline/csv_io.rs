//! CSV ingestion: UTF-8, comma separated, header row required, one sample per
//! row, feature columns followed by an optional integer `label` column.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{DataMatrix, LabeledDataset, UNLABELED};

pub const LABEL_COLUMN: &str = "label";

/// Reads a dataset. With `has_labels`, the last header field must be
/// `label`; without it, a trailing `label` column is skipped and every
/// sample is marked unlabeled.
pub fn load_csv(path: impl AsRef<Path>, has_labels: bool) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, has_labels)
}

pub fn read_csv<R: std::io::Read>(reader: R, has_labels: bool) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let width = header.len();
    let label_present = header
        .iter()
        .next_back()
        .map(|h| h.trim() == LABEL_COLUMN)
        .unwrap_or(false);
    if has_labels && !label_present {
        return Err(Error::Parse {
            row: 1,
            col: width,
            msg: format!("expected a final `{LABEL_COLUMN}` column"),
        });
    }
    let n_features = if label_present { width - 1 } else { width };
    if n_features == 0 {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            msg: "no feature columns".into(),
        });
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 2);
        if rec.len() != width {
            return Err(Error::InconsistentWidth {
                row: line,
                expected: width,
                found: rec.len(),
            });
        }
        for (c, field) in rec.iter().take(n_features).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: line,
                col: c + 1,
                msg: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    col: c + 1,
                    msg: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        let label = if label_present && has_labels {
            let field = rec.get(width - 1).unwrap_or("").trim();
            field.parse::<i64>().map_err(|_| Error::Parse {
                row: line,
                col: width,
                msg: format!("`{field}` is not an integer label"),
            })?
        } else {
            UNLABELED
        };
        labels.push(label);
        ids.push(format!("row{}", i + 1));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDomain("csv file has no data rows"));
    }
    // Row-major samples become columns.
    let features = DMatrix::from_column_slice(n_features, labels.len(), &values);
    LabeledDataset::new(DataMatrix::with_ids(features, ids)?, labels)
}

/// Writes a dataset with headers `x0, x1, …` and, if requested, `label`.
pub fn write_csv(path: impl AsRef<Path>, data: &LabeledDataset, with_labels: bool) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv_to(file, data, with_labels)
}

pub fn write_csv_to<W: std::io::Write>(writer: W, data: &LabeledDataset, with_labels: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let d = data.data.dim();
    let mut header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    if with_labels {
        header.push(LABEL_COLUMN.into());
    }
    w.write_record(&header)?;
    let x = data.data.features();
    for j in 0..data.len() {
        let mut row: Vec<String> = x.column(j).iter().map(|v| format!("{v:?}")).collect();
        if with_labels {
            row.push(data.labels[j].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
