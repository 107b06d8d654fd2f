//! CSV point files and their JSON metadata sidecar.
//!
//! Header: `x_1,...,x_n` followed by one `label_<name>` column per label.
//! Values are written with 17 significant digits, which round-trips `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use super::dataset::{Dataset, DatasetMeta};
use crate::error::{CaeError, Result};

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let header: Vec<String> = (1..=data.dim())
        .map(|j| format!("x_{j}"))
        .chain(data.label_names().iter().map(|n| format!("label_{n}")))
        .collect();
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    for i in 0..data.len() {
        let row: Vec<String> = data
            .point(i)
            .iter()
            .chain(data.labels_of(i))
            .map(|v| format_f64(*v))
            .collect();
        w.write_record(&row).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CaeError::io(path, e))?;
    Ok(())
}

fn csv_io(path: &Path, e: csv::Error) -> CaeError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CaeError::io(path, io),
        other => CaeError::Parse {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CaeError::io(path, e))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(parse_err(1, e.to_string())),
        None => return Err(parse_err(1, "missing header".into())),
    };
    let mut dim = 0;
    let mut label_names = Vec::new();
    for (j, name) in header.iter().enumerate() {
        let name = name.trim();
        if let Some(label) = name.strip_prefix("label_") {
            label_names.push(label.to_string());
        } else if name == format!("x_{}", j + 1) && label_names.is_empty() {
            dim += 1;
        } else {
            return Err(parse_err(1, format!("unexpected header column `{name}`")));
        }
    }
    if dim == 0 {
        return Err(parse_err(1, "missing header: no `x_1` column".into()));
    }
    let width = dim + label_names.len();

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(line, format!("expected {width} fields, found {}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("non-numeric cell `{cell}` in column {}", j + 1)))?;
            if j < dim {
                points.push(v);
            } else {
                labels.push(v);
            }
        }
    }
    if points.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }
    Dataset::with_labels(points, dim, labels, label_names)
}

fn parse_err(line: usize, message: String) -> CaeError {
    CaeError::Parse { line, message }
}

/// `data.csv` -> `data.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    save_csv(data, path)?;
    let meta = serde_json::to_string_pretty(&data.meta)?;
    fs::write(sidecar_path(path), meta).map_err(|e| CaeError::io(sidecar_path(path), e))
}

/// Loads the CSV and, when present, its metadata sidecar.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut data = load_csv(path)?;
    let side = sidecar_path(path);
    if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| CaeError::io(&side, e))?;
        data.meta = serde_json::from_str::<DatasetMeta>(&text)?;
    }
    Ok(data)
}
