// SPDX-License-Identifier: MIT OR Apache-2.0

//! On-disk artifact formats.
//!
//! Primary artifacts are pretty-printed JSON with exact numerics written as
//! rational strings; each one records the SHA-256 of the artifact it was
//! derived from. Wall-clock data goes to a `*.meta.json` sidecar so the
//! primary files are byte-stable across runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuit::{Edge, Node};
use crate::error::{Error, Result};
use crate::exact::ExactScalar;
use crate::tasks::TaskName;
use crate::verify::{Property, PropertyResult, Verdict};

/// Paths of every artifact under one output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("checkpoint.json")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }

    pub fn circuit(&self, task: TaskName) -> PathBuf {
        self.root.join("circuits").join(format!("{task}.json"))
    }

    pub fn result(&self, task: TaskName, property: Property) -> PathBuf {
        self.root
            .join("results")
            .join(task.as_str())
            .join(format!("{}.json", property.as_str()))
    }

    pub fn summary_json(&self) -> PathBuf {
        self.root.join("results").join("summary.json")
    }

    pub fn summary_txt(&self) -> PathBuf {
        self.root.join("results").join("summary.txt")
    }

    pub fn distill(&self, task: TaskName, family: &str) -> PathBuf {
        self.root.join("distill").join(format!("{task}.{family}.json"))
    }

    pub fn distill_dir(&self) -> PathBuf {
        self.root.join("distill")
    }

    pub fn smt_dir(&self, task: TaskName) -> PathBuf {
        self.root.join("smt").join(task.as_str())
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.txt")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `bytes` (creating parent directories) and returns their hash.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<String> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(sha256_hex(bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    write_bytes(path, &to_json_bytes(value)?)
}

/// Reads an artifact, mapping absence to a message naming the command
/// that produces it. Returns the value and the hash of the file bytes.
pub fn read_json<T: DeserializeOwned>(path: &Path, command: &'static str) -> Result<(T, String)> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingArtifact {
                path: path.to_path_buf(),
                command,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let value = serde_json::from_slice(&bytes).map_err(|e| Error::MalformedArtifact {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok((value, sha256_hex(&bytes)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub command: String,
    pub finished_unix_secs: u64,
    pub duration_secs: f64,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("artifact");
    path.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_meta(path: &Path, command: &str, duration: Duration) -> Result<()> {
    let meta = Meta {
        command: command.into(),
        finished_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        duration_secs: duration.as_secs_f64(),
    };
    write_json(&meta_path(path), &meta)?;
    Ok(())
}

/// Agreement between float and exact evaluation of the extracted circuit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SanityCheck {
    /// Exact circuit decisions equal the float decisions used to extract it.
    pub float_exact_agree: bool,
    /// Exact circuit decisions equal the exact full-model decisions.
    pub faithful: bool,
    /// Exact circuit decisions equal the task reference program.
    pub matches_reference: bool,
}

impl SanityCheck {
    pub fn passed(&self) -> bool {
        self.float_exact_agree && self.faithful && self.matches_reference
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitArtifact {
    pub task: TaskName,
    pub checkpoint_sha256: String,
    pub inputs: usize,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub full_edges: usize,
    pub witnesses: BTreeMap<Edge, Option<Vec<u32>>>,
    pub greedy_passes: usize,
    pub diagnostics: Vec<String>,
    pub sanity: SanityCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultArtifact {
    pub task: TaskName,
    pub circuit_sha256: String,
    pub epsilon: Option<ExactScalar>,
    pub result: PropertyResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: TaskName,
    pub inputs: usize,
    pub edges: usize,
    pub sanity_check: bool,
    pub verdicts: BTreeMap<Property, Verdict>,
    pub circuit_sha256: String,
    /// Robustness radius used, with a float rendering for reading.
    pub epsilon: ExactScalar,
    pub epsilon_approx: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub checkpoint_sha256: String,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    /// Columns: task, inputs, edges, sanity check, then one per property.
    pub fn render(&self) -> String {
        let mut header = vec!["task".to_string(), "inputs".into(), "edges".into(), "sanity".into()];
        header.extend(Property::ALL.iter().map(|p| p.as_str().to_string()));
        let mut rows = vec![header];
        for r in &self.rows {
            let mut line = vec![
                r.task.to_string(),
                r.inputs.to_string(),
                r.edges.to_string(),
                if r.sanity_check { "pass".into() } else { "fail".into() },
            ];
            line.extend(
                Property::ALL
                    .iter()
                    .map(|p| r.verdicts.get(p).map_or("-", |v| v.as_str()).to_string()),
            );
            rows.push(line);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&rule.join("  "));
                out.push('\n');
            }
        }
        for r in &self.rows {
            out.push_str(&format!("{}: epsilon ~ {:.6e}\n", r.task, r.epsilon_approx));
        }
        out
    }
}
