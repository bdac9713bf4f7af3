//! POVM description files.
//!
//! A file is one JSON document:
//!
//! ```json
//! {
//!   "dim": 2,
//!   "measurements": [
//!     { "label": "Z", "effects": [ [[[1, 0], [0, 0]], [[0, 0], [0, 0]]],
//!                                  [[[0, 0], [0, 0]], [[0, 0], [1, 0]]] ] }
//!   ]
//! }
//! ```
//!
//! Every effect is a `dim x dim` list of rows and every entry a `[re, im]`
//! pair. Measurements with fewer outcomes are padded with zero effects.

use std::path::Path;

use incompat_core::linalg::{c, CMatrix, Hermitian};
use incompat_core::measurement::{pad_assemblage, validate_povm_with, Assemblage, Povm};
use incompat_core::tol::Tolerances;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmFile {
    pub dim: usize,
    pub measurements: Vec<MeasurementEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementEntry {
    pub label: String,
    pub effects: Vec<Vec<Vec<[f64; 2]>>>,
}

fn field_error(path: &str, field: String, message: String) -> CliError {
    CliError::Parse {
        path: path.to_string(),
        location: field,
        message,
    }
}

impl PovmFile {
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            path: path.to_string(),
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    pub fn from_assemblage(a: &Assemblage) -> Self {
        let measurements = a
            .povms()
            .iter()
            .map(|p| MeasurementEntry {
                label: p.label().to_string(),
                effects: p
                    .effects()
                    .iter()
                    .map(|e| {
                        let m = e.matrix();
                        (0..m.rows())
                            .map(|i| {
                                (0..m.cols())
                                    .map(|j| {
                                        let z = m.as_slice()[i * m.cols() + j];
                                        [z.re, z.im]
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        Self {
            dim: a.dim(),
            measurements,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable") + "\n"
    }

    /// Converts to a validated assemblage.
    pub fn to_assemblage(&self, path: &str, tol: &Tolerances) -> Result<Assemblage> {
        let d = self.dim;
        if d == 0 {
            return Err(field_error(path, "dim".into(), "dimension must be positive".into()));
        }
        if self.measurements.is_empty() {
            return Err(field_error(path, "measurements".into(), "no measurements".into()));
        }
        let mut povms = Vec::with_capacity(self.measurements.len());
        for (x, m) in self.measurements.iter().enumerate() {
            if m.effects.is_empty() {
                return Err(field_error(
                    path,
                    format!("measurements[{x}].effects"),
                    "no effects".into(),
                ));
            }
            let mut effects = Vec::with_capacity(m.effects.len());
            for (z, rows) in m.effects.iter().enumerate() {
                let at = format!("measurements[{x}].effects[{z}]");
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(field_error(path, at, format!("expected a {d}x{d} matrix")));
                }
                if rows.iter().flatten().flatten().any(|v| !v.is_finite()) {
                    return Err(field_error(path, at, "non-finite entry".into()));
                }
                let mat = CMatrix::from_fn(d, d, |i, j| c(rows[i][j][0], rows[i][j][1]));
                let h = Hermitian::new(mat).map_err(|e| CliError::Validation {
                    path: path.to_string(),
                    index: x,
                    label: m.label.clone(),
                    invariant: format!("hermiticity of effect {z}: {e}"),
                })?;
                effects.push(h);
            }
            let p = Povm::new_unchecked(m.label.clone(), effects);
            let report = validate_povm_with(&p, tol.psd, tol.completeness);
            if let Some(v) = report.violations.first() {
                return Err(CliError::Validation {
                    path: path.to_string(),
                    index: x,
                    label: m.label.clone(),
                    invariant: v.to_string(),
                });
            }
            povms.push(p);
        }
        Ok(pad_assemblage(povms)?)
    }
}

pub fn parse_povm_str(text: &str, path: &str, tol: &Tolerances) -> Result<Assemblage> {
    PovmFile::parse(text, path)?.to_assemblage(path, tol)
}

pub fn parse_povm_file(path: &Path, tol: &Tolerances) -> Result<Assemblage> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: name.clone(),
        source: e,
    })?;
    parse_povm_str(&text, &name, tol)
}
