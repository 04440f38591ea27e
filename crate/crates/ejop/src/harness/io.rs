//! Dataset ingestion (CSV and IDX) and bit-stable text serialization of
//! fitted metrics.
//!
//! All float output uses 17 significant digits (`{:.16e}`), which
//! round-trips every f64 exactly; exporting the same object twice yields
//! byte-identical files.

use std::fs;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;

use crate::data::{validate_dataset, EjopMatrix, LabeledDataset};
use crate::error::{EjopError, Result};
use crate::harness::config::DatasetFormat;
use crate::spectral::MetricTransform;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Load a dataset. For `Csv`, `labels_path` is ignored; for `Idx`, `path`
/// is the image file and `labels_path` the label file.
pub fn load_dataset(
    path: &Path,
    format: DatasetFormat,
    labels_path: Option<&Path>,
) -> Result<LabeledDataset> {
    match format {
        DatasetFormat::Csv => load_csv(path),
        DatasetFormat::Idx => {
            let labels = labels_path.ok_or_else(|| {
                EjopError::Format("idx format needs a labels_path".to_string())
            })?;
            load_idx(path, labels)
        }
    }
}

/// CSV: one row per point, final column an integer label.
pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() < 2 {
            return Err(EjopError::Format(format!(
                "{}:{}: need at least one feature and a label",
                path.display(),
                lineno + 1
            )));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(EjopError::Format(format!(
                    "{}:{}: ragged row ({} fields, expected {w})",
                    path.display(),
                    lineno + 1,
                    fields.len()
                )))
            }
            _ => {}
        }
        let label: i64 = fields[fields.len() - 1].parse().map_err(|_| {
            EjopError::Format(format!(
                "{}:{}: bad label {}",
                path.display(),
                lineno + 1,
                fields[fields.len() - 1]
            ))
        })?;
        let feats: Vec<f64> = fields[..fields.len() - 1]
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    EjopError::Format(format!(
                        "{}:{}: bad feature {f}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        rows.push(feats);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(EjopError::EmptyDataset);
    }
    let d = rows[0].len();
    let mut points = Array2::zeros((rows.len(), d));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            points[[i, j]] = v;
        }
    }
    validate_dataset(points, &labels)
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| EjopError::Format(format!("truncated header reading {what}")))
}

/// IDX image/label pair: big-endian magic 0x00000803 for images (flattened
/// to `d = rows * cols`, bytes scaled to `[0, 1]`) and 0x00000801 for
/// labels. Counts must agree.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let mut images = Vec::new();
    fs::File::open(images_path)?.read_to_end(&mut images)?;
    let magic = read_u32_be(&images, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(EjopError::Format(format!(
            "{}: bad image magic {magic:#010x}",
            images_path.display()
        )));
    }
    let n = read_u32_be(&images, 4, "image count")? as usize;
    let rows = read_u32_be(&images, 8, "image rows")? as usize;
    let cols = read_u32_be(&images, 12, "image cols")? as usize;
    let d = rows * cols;
    let payload = &images[16.min(images.len())..];
    if payload.len() < n * d {
        return Err(EjopError::Format(format!(
            "{}: payload shorter than header promises ({} < {})",
            images_path.display(),
            payload.len(),
            n * d
        )));
    }

    let mut labels_bytes = Vec::new();
    fs::File::open(labels_path)?.read_to_end(&mut labels_bytes)?;
    let magic = read_u32_be(&labels_bytes, 0, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(EjopError::Format(format!(
            "{}: bad label magic {magic:#010x}",
            labels_path.display()
        )));
    }
    let n_labels = read_u32_be(&labels_bytes, 4, "label count")? as usize;
    if n_labels != n {
        return Err(EjopError::Format(format!(
            "image/label count mismatch: {n} images vs {n_labels} labels"
        )));
    }
    let label_payload = &labels_bytes[8.min(labels_bytes.len())..];
    if label_payload.len() < n {
        return Err(EjopError::Format(format!(
            "{}: payload shorter than header promises ({} < {n})",
            labels_path.display(),
            label_payload.len()
        )));
    }

    let mut points = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            points[[i, j]] = payload[i * d + j] as f64 / 255.0;
        }
    }
    let labels: Vec<i64> = label_payload[..n].iter().map(|&b| b as i64).collect();
    validate_dataset(points, &labels)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Save a dataset as CSV with exact-round-trip features and the original
/// (pre-remap) labels.
pub fn save_dataset_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..ds.n() {
        let feats: Vec<String> = ds.point(i).iter().map(|&v| fmt17(v)).collect();
        out.push_str(&feats.join(","));
        out.push(',');
        out.push_str(&ds.label_map()[ds.label(i)].to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Export an EJOP matrix: documented header, row-major entries, 17
/// significant digits.
pub fn export_ejop_matrix(g: &EjopMatrix, path: &Path) -> Result<()> {
    let mut out = String::from("ejop matrix v1\n");
    out.push_str(&format!("d {}\n", g.dim()));
    for row in g.matrix().outer_iter() {
        let fields: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_ejop_matrix(path: &Path) -> Result<EjopMatrix> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "ejop matrix v1" {
        return Err(EjopError::Format(format!("bad matrix header {header:?}")));
    }
    let d = parse_header_usize(lines.next(), "d")?;
    let mut g = Array2::zeros((d, d));
    for i in 0..d {
        let line = lines
            .next()
            .ok_or_else(|| EjopError::Format(format!("missing matrix row {i}")))?;
        fill_row(line, &mut g, i, d)?;
    }
    EjopMatrix::new(g)
}

/// Export a metric transform: eigenvalues then eigenvector rows, with the
/// dimension and the exponent in the header.
pub fn export_transform(t: &MetricTransform, path: &Path) -> Result<()> {
    let mut out = String::from("ejop transform v1\n");
    out.push_str(&format!("d {}\n", t.dim()));
    out.push_str(&format!("power {}\n", fmt17(t.power())));
    let eigvals: Vec<String> = t.eigvals().iter().map(|&v| fmt17(v)).collect();
    out.push_str("eigvals ");
    out.push_str(&eigvals.join(" "));
    out.push('\n');
    for row in t.eigvecs().outer_iter() {
        let fields: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_transform(path: &Path) -> Result<MetricTransform> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "ejop transform v1" {
        return Err(EjopError::Format(format!(
            "bad transform header {header:?}"
        )));
    }
    let d = parse_header_usize(lines.next(), "d")?;
    let power_line = lines
        .next()
        .ok_or_else(|| EjopError::Format("missing power line".to_string()))?;
    let power: f64 = power_line
        .strip_prefix("power ")
        .ok_or_else(|| EjopError::Format(format!("bad power line {power_line:?}")))?
        .parse()
        .map_err(|_| EjopError::Format(format!("bad power value in {power_line:?}")))?;
    let eig_line = lines
        .next()
        .ok_or_else(|| EjopError::Format("missing eigvals line".to_string()))?;
    let eigvals: Vec<f64> = eig_line
        .strip_prefix("eigvals ")
        .ok_or_else(|| EjopError::Format(format!("bad eigvals line {eig_line:?}")))?
        .split_whitespace()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| EjopError::Format(format!("bad eigenvalue {v}")))
        })
        .collect::<Result<_>>()?;
    if eigvals.len() != d {
        return Err(EjopError::Format(format!(
            "expected {d} eigenvalues, got {}",
            eigvals.len()
        )));
    }
    let mut eigvecs = Array2::zeros((d, d));
    for i in 0..d {
        let line = lines
            .next()
            .ok_or_else(|| EjopError::Format(format!("missing eigenvector row {i}")))?;
        fill_row(line, &mut eigvecs, i, d)?;
    }
    MetricTransform::new(eigvecs, eigvals, power)
}

/// Export diagonal metric weights in the text format the harness consumes.
pub fn export_diag_weights(weights: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("ejop diag v1\n");
    out.push_str(&format!("d {}\n", weights.len()));
    let fields: Vec<String> = weights.iter().map(|&v| fmt17(v)).collect();
    out.push_str(&fields.join(" "));
    out.push('\n');
    fs::write(path, out)?;
    Ok(())
}

pub fn load_diag_weights(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "ejop diag v1" {
        return Err(EjopError::Format(format!("bad diag header {header:?}")));
    }
    let d = parse_header_usize(lines.next(), "d")?;
    let line = lines
        .next()
        .ok_or_else(|| EjopError::Format("missing weights line".to_string()))?;
    let weights: Vec<f64> = line
        .split_whitespace()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| EjopError::Format(format!("bad weight {v}")))
        })
        .collect::<Result<_>>()?;
    if weights.len() != d {
        return Err(EjopError::Format(format!(
            "expected {d} weights, got {}",
            weights.len()
        )));
    }
    Ok(weights)
}

fn parse_header_usize(line: Option<&str>, key: &str) -> Result<usize> {
    let line = line.ok_or_else(|| EjopError::Format(format!("missing {key} line")))?;
    line.strip_prefix(&format!("{key} "))
        .ok_or_else(|| EjopError::Format(format!("bad {key} line {line:?}")))?
        .parse()
        .map_err(|_| EjopError::Format(format!("bad {key} value in {line:?}")))
}

fn fill_row(line: &str, target: &mut Array2<f64>, row: usize, d: usize) -> Result<()> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| EjopError::Format(format!("bad value {v}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != d {
        return Err(EjopError::Format(format!(
            "row {row}: expected {d} values, got {}",
            values.len()
        )));
    }
    for (j, v) in values.into_iter().enumerate() {
        target[[row, j]] = v;
    }
    Ok(())
}
