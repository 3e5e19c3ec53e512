//! JSON-lines point-cloud datasets: one sample per line with positions,
//! per-node features, optional velocities, and a target that is either a
//! scalar vector (graph regression) or per-node positions (trajectory
//! prediction).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Regression target: a flat scalar vector for graph-level tasks or one
/// row per node for trajectory tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Scalars(Vec<f64>),
    Positions(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricSample {
    pub pos: Vec<Vec<f64>>,
    pub feat: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vel: Option<Vec<Vec<f64>>>,
    pub target: Target,
}

impl GeometricSample {
    pub fn num_points(&self) -> usize {
        self.pos.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.pos.first().map_or(0, Vec::len)
    }

    pub fn feature_width(&self) -> usize {
        self.feat.first().map_or(0, Vec::len)
    }

    /// Checks counts, widths, and finiteness; the error text names the
    /// offending field.
    pub fn validate(&self) -> Result<(), String> {
        if self.pos.is_empty() {
            return Err("sample has no points".into());
        }
        let ambient = self.ambient_dim();
        if ambient == 0 {
            return Err("points need at least one coordinate".into());
        }
        let finite = |rows: &[Vec<f64>]| rows.iter().flatten().all(|v| v.is_finite());
        if self.pos.iter().any(|p| p.len() != ambient) {
            return Err("pos rows have mixed widths".into());
        }
        if !finite(&self.pos) {
            return Err("pos contains non-finite values".into());
        }
        if self.feat.len() != self.pos.len() {
            return Err(format!(
                "{} feat rows for {} points",
                self.feat.len(),
                self.pos.len()
            ));
        }
        let fw = self.feature_width();
        if fw == 0 || self.feat.iter().any(|f| f.len() != fw) {
            return Err("feat rows must share one positive width".into());
        }
        if !finite(&self.feat) {
            return Err("feat contains non-finite values".into());
        }
        if let Some(vel) = &self.vel {
            if vel.len() != self.pos.len() || vel.iter().any(|v| v.len() != ambient) {
                return Err("vel must be one ambient-width row per point".into());
            }
            if !finite(vel) {
                return Err("vel contains non-finite values".into());
            }
        }
        match &self.target {
            Target::Scalars(y) => {
                if y.is_empty() {
                    return Err("target is empty".into());
                }
                if !y.iter().all(|v| v.is_finite()) {
                    return Err("target contains non-finite values".into());
                }
            }
            Target::Positions(rows) => {
                if rows.len() != self.pos.len() || rows.iter().any(|r| r.len() != ambient) {
                    return Err("target positions must match pos in shape".into());
                }
                if !finite(rows) {
                    return Err("target contains non-finite values".into());
                }
            }
        }
        Ok(())
    }
}

/// Parses a JSON-lines dataset; blank lines are skipped, any malformed or
/// inconsistent line is reported with its 1-based number.
pub fn load_pointcloud(path: &Path) -> Result<Vec<GeometricSample>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample: GeometricSample =
            serde_json::from_str(line).map_err(|e| HarnessError::Data {
                path: path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
        sample.validate().map_err(|msg| HarnessError::Data {
            path: path.display().to_string(),
            line: i + 1,
            msg,
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Writes samples as JSON lines.
pub fn save_pointcloud(path: &Path, samples: &[GeometricSample]) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = fs::File::create(path)?;
    for s in samples {
        serde_json::to_writer(&mut out, s).map_err(crate::nn::NnError::from)?;
        writeln!(out)?;
    }
    Ok(())
}
