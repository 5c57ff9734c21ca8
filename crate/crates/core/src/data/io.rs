//! Line-delimited JSON dataset files.
//!
//! One record per line:
//!
//! ```text
//! {"id": "s1", "text": "i love mondays", "ocr": "monday again", "patches": [[0.1, ...], ...], "label": 1}
//! ```
//!
//! `patches` may be replaced by `patches_ref`, a path (relative to the
//! dataset file) of a JSON file holding the row-major patch matrix. `ocr`
//! is optional. `origin`, `source_id` and `planted` are written for
//! augmented and synthetic samples and read back when present.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{MiclError, Result};
use crate::tensor::Matrix;

use super::sample::{Dataset, Origin, PatchGrid, Planted, Sample, Split};
use super::vocab::tokenize;

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ocr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    patches: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    patches_ref: Option<String>,
    label: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<Origin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    planted: Option<Planted>,
}

/// Reads and validates a dataset file. All malformed records are reported
/// together.
pub fn load_dataset(path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| MiclError::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut samples = Vec::new();
    let mut problems = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(line, lineno + 1, &base) {
            Ok(s) => samples.push(s),
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(MiclError::MalformedDataset {
            path: path.to_path_buf(),
            count: problems.len(),
            report: problems.join("\n"),
        });
    }
    Dataset::new(samples, split)
}

fn parse_record(line: &str, lineno: usize, base: &Path) -> Result<Sample> {
    let schema = |record: &str, message: String| MiclError::Schema {
        record: record.to_string(),
        message,
    };
    let value: Value =
        serde_json::from_str(line).map_err(|e| schema(&format!("line {lineno}"), e.to_string()))?;
    let name = value
        .get("id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("line {lineno}"));
    if value.get("label").is_none_or(Value::is_null) {
        return Err(schema(&name, "missing label".into()));
    }
    let rec: Record = serde_json::from_value(value).map_err(|e| schema(&name, e.to_string()))?;

    let label = match rec.label {
        0 => 0u8,
        1 => 1u8,
        other => return Err(schema(&name, format!("label {other} is not 0 or 1"))),
    };
    let text = tokenize(&rec.text);
    if text.is_empty() {
        return Err(schema(&name, "text is empty".into()));
    }
    let ocr = rec.ocr.map(|o| tokenize(&o)).filter(|o| !o.is_empty());

    let rows = match (rec.patches, rec.patches_ref) {
        (Some(rows), _) => rows,
        (None, Some(reference)) => {
            let p = base.join(&reference);
            let raw = fs::read_to_string(&p).map_err(|e| MiclError::io(&p, e))?;
            serde_json::from_str(&raw).map_err(|e| schema(&name, format!("{reference}: {e}")))?
        }
        (None, None) => return Err(schema(&name, "neither patches nor patches_ref given".into())),
    };
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(schema(&name, "non-finite patch values".into()));
    }
    let matrix = Matrix::from_rows(&rows).map_err(|e| schema(&name, e.to_string()))?;
    let image = PatchGrid::new(matrix).map_err(|e| schema(&name, e.to_string()))?;

    let sample = Sample {
        id: rec.id,
        text,
        ocr,
        image,
        label,
        origin: rec.origin.unwrap_or(Origin::Original),
        source_id: rec.source_id,
        planted: rec.planted,
    };
    sample.validate()?;
    Ok(sample)
}

fn to_record(s: &Sample) -> Record {
    Record {
        id: s.id.clone(),
        text: s.text.join(" "),
        ocr: s.ocr.as_ref().map(|o| o.join(" ")),
        patches: Some(s.image.patches().to_rows()),
        patches_ref: None,
        label: i64::from(s.label),
        origin: s.origin.is_augmented().then_some(s.origin),
        source_id: s.source_id.clone(),
        planted: s.planted,
    }
}

/// Writes `dataset` as line-delimited JSON with inline patches.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| MiclError::io(dir, e))?;
    }
    let mut out = Vec::new();
    for s in &dataset.samples {
        serde_json::to_writer(&mut out, &to_record(s))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| MiclError::io(path, e))?;
    f.write_all(&out).map_err(|e| MiclError::io(path, e))?;
    Ok(())
}

/// Conventional split file name inside a dataset directory.
pub fn split_path(dir: impl AsRef<Path>, split: Split) -> PathBuf {
    dir.as_ref().join(format!("{}.jsonl", split.as_str()))
}
