//! CSV interchange: header `id,label[,true_label],f0..f{d-1}`.
//!
//! Values are written with the shortest representation that parses back to
//! the same `f64` (at most 17 significant digits).

use std::io::{Read, Write};

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

/// Parse a feature CSV. With `num_classes = None` the class count is taken as
/// one more than the largest label seen.
pub fn read_csv<R: Read>(reader: R, num_classes: Option<usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "id" || cols[1] != "label" {
        return Err(Error::format("CSV header must start with `id,label`"));
    }
    let has_truth = cols.get(2) == Some(&"true_label");
    let first_feature = if has_truth { 3 } else { 2 };
    let d = cols.len() - first_feature;
    for (j, name) in cols[first_feature..].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(Error::format(format!("expected feature column f{j}, found `{name}`")));
        }
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut truth = Vec::new();
    let mut values = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != cols.len() {
            return Err(Error::format(format!(
                "row {line} has {} fields, header has {}",
                record.len(),
                cols.len()
            )));
        }
        let field = |j: usize| record.get(j).unwrap().trim();
        ids.push(
            field(0)
                .parse::<u64>()
                .map_err(|e| Error::format(format!("row {line} id: {e}")))?,
        );
        labels.push(
            field(1)
                .parse::<usize>()
                .map_err(|e| Error::format(format!("row {line} label: {e}")))?,
        );
        if has_truth {
            truth.push(
                field(2)
                    .parse::<usize>()
                    .map_err(|e| Error::format(format!("row {line} true_label: {e}")))?,
            );
        }
        for j in first_feature..cols.len() {
            values.push(
                field(j)
                    .parse::<f64>()
                    .map_err(|e| Error::format(format!("row {line} column {j}: {e}")))?,
            );
        }
    }
    let n = ids.len();
    let features = Array2::from_shape_vec((n, d), values).expect("row lengths checked");
    let num_classes = match num_classes {
        Some(c) => c,
        None => labels.iter().chain(truth.iter()).max().map_or(1, |&m| m + 1),
    };
    Dataset::new(features, labels, has_truth.then_some(truth), num_classes, ids)
}

pub fn write_csv<W: Write>(d: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "label".to_string()];
    if d.true_labels().is_some() {
        header.push("true_label".into());
    }
    header.extend((0..d.dim()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..d.len() {
        row.clear();
        row.push(d.ids()[i].to_string());
        row.push(d.labels()[i].to_string());
        if let Some(t) = d.true_labels() {
            row.push(t[i].to_string());
        }
        row.extend(d.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
