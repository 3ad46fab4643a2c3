//! Counts and timing statistics over an extracted dataset.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::extract::{Counts, Summary, SCHEMA_VERSION, SUMMARY_FILE};
use crate::goals::GoalAnswer;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Distribution {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub median: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 { sorted[m] } else { (sorted[m - 1] + sorted[m]) / 2.0 };
        Distribution { mean, variance, median }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileStats {
    pub file: String,
    pub steps: usize,
    pub proofs: usize,
    pub proof_steps: usize,
    /// From the summary, if there is one.
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetStats {
    pub files: Vec<FileStats>,
    pub proofs: usize,
    pub steps: usize,
    pub proof_steps: usize,
    pub steps_per_file: Distribution,
    pub proofs_per_file: Distribution,
    pub seconds: Distribution,
    pub exec_seconds: Distribution,
    /// Outcome counts from the summary, including skipped files.
    pub counts: Counts,
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedDataset { path: path.to_path_buf(), reason: reason.into() }
}

fn usize_field(doc: &Value, key: &str, path: &Path) -> Result<usize> {
    doc.get(key).and_then(Value::as_u64).map(|n| n as usize).ok_or_else(|| malformed(path, format!("missing `{key}`")))
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| malformed(path, e.to_string()))
}

/// Check one per-file document and count its contents.
fn file_stats(path: &Path) -> Result<FileStats> {
    let doc = read_json(path)?;
    if doc.get("schema_version").and_then(Value::as_u64) != Some(SCHEMA_VERSION as u64) {
        return Err(malformed(path, "unsupported or missing schema_version"));
    }
    let file = doc.get("file").and_then(Value::as_str).ok_or_else(|| malformed(path, "missing `file`"))?;
    let steps = usize_field(&doc, "step_count", path)?;
    let proofs = doc.get("proofs").and_then(Value::as_array).ok_or_else(|| malformed(path, "missing `proofs`"))?;
    let mut proof_steps = 0;
    for p in proofs {
        let psteps = p.get("steps").and_then(Value::as_array).ok_or_else(|| malformed(path, "proof without steps"))?;
        for s in psteps {
            let goals = s.get("goals").cloned().ok_or_else(|| malformed(path, "step without goals"))?;
            serde_json::from_value::<GoalAnswer>(goals).map_err(|e| malformed(path, format!("bad goals: {e}")))?;
            if !s.get("context").is_some_and(Value::is_array) {
                return Err(malformed(path, "step without context"));
            }
        }
        proof_steps += psteps.len();
    }
    Ok(FileStats { file: file.to_string(), steps, proofs: proofs.len(), proof_steps, seconds: None })
}

fn documents(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = vec![];
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io(e.into()))?;
        let p = entry.path();
        if entry.file_type().is_file()
            && p.extension().is_some_and(|e| e == "json")
            && !(entry.depth() == 1 && p.file_name().is_some_and(|n| n == SUMMARY_FILE))
        {
            out.push(p.to_path_buf());
        }
    }
    Ok(out)
}

/// Statistics over the dataset in `dir`.
pub fn stats(dir: &Path) -> Result<DatasetStats> {
    if !dir.is_dir() {
        return Err(malformed(dir, "not a directory"));
    }
    let mut files = documents(dir)?.iter().map(|p| file_stats(p)).collect::<Result<Vec<_>>>()?;
    files.sort_by(|a, b| a.file.cmp(&b.file));
    let summary_path = dir.join(SUMMARY_FILE);
    let summary: Option<Summary> = if summary_path.exists() {
        Some(serde_json::from_value(read_json(&summary_path)?).map_err(|e| malformed(&summary_path, e.to_string()))?)
    } else {
        None
    };
    let mut seconds = vec![];
    let mut exec_seconds = vec![];
    if let Some(s) = &summary {
        for f in &mut files {
            if let Some(row) = s.files.iter().find(|r| r.file == f.file) {
                f.seconds = Some(row.seconds);
                seconds.push(row.seconds);
                exec_seconds.push(row.exec_seconds);
            }
        }
    }
    let steps: Vec<f64> = files.iter().map(|f| f.steps as f64).collect();
    let proofs: Vec<f64> = files.iter().map(|f| f.proofs as f64).collect();
    Ok(DatasetStats {
        proofs: files.iter().map(|f| f.proofs).sum(),
        steps: files.iter().map(|f| f.steps).sum(),
        proof_steps: files.iter().map(|f| f.proof_steps).sum(),
        steps_per_file: Distribution::of(&steps),
        proofs_per_file: Distribution::of(&proofs),
        seconds: Distribution::of(&seconds),
        exec_seconds: Distribution::of(&exec_seconds),
        counts: summary.map(|s| s.counts).unwrap_or_default(),
        files,
    })
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<40} {:>8} {:>8} {:>12} {:>10}", "file", "steps", "proofs", "proof steps", "seconds")?;
        for r in &self.files {
            let secs = r.seconds.map_or("-".to_string(), |s| format!("{s:.3}"));
            writeln!(f, "{:<40} {:>8} {:>8} {:>12} {:>10}", r.file, r.steps, r.proofs, r.proof_steps, secs)?;
        }
        writeln!(f)?;
        writeln!(f, "files: {}  proofs: {}  steps: {}  proof steps: {}", self.files.len(), self.proofs, self.steps, self.proof_steps)?;
        let c = &self.counts;
        writeln!(f, "outcomes: ok {}  coq_errors {}  timeout {}  failed {}", c.ok, c.coq_errors, c.timeout, c.failed)?;
        for (label, d) in [
            ("steps per file", self.steps_per_file),
            ("proofs per file", self.proofs_per_file),
            ("seconds", self.seconds),
            ("exec seconds", self.exec_seconds),
        ] {
            writeln!(f, "{label:<16} mean {:.3}  variance {:.3}  median {:.3}", d.mean, d.variance, d.median)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_by_hand() {
        // mean 5, squared deviations 9+1+1+9 = 20, /4 = 5, median (4+6)/2
        let d = Distribution::of(&[2.0, 4.0, 6.0, 8.0]);
        assert_eq!(d, Distribution { mean: 5.0, variance: 5.0, median: 5.0 });
        assert_eq!(Distribution::of(&[3.0, 1.0, 2.0]).median, 2.0);
        assert_eq!(Distribution::of(&[]), Distribution::default());
    }
}
