//! JSON problem files.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BoxSet, EqualityConstraints, Objective, Problem, ProblemError, Term, TermKind};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Invalid(#[from] ProblemError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TermSpec {
    Neglog {
        row: Vec<f64>,
        #[serde(default)]
        offset: f64,
        lo: f64,
        hi: f64,
    },
    Quadratic {
        modulus: f64,
        rows: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    Linear {
        row: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObjectiveSpec {
    Quadratic { h: Vec<Vec<f64>>, q: Vec<f64> },
    Separable { terms: Vec<TermSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// On-disk form of a [`Problem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub objective: ObjectiveSpec,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(rename = "box")]
    pub bounds: BoxSpec,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

fn matrix(rows: &[Vec<f64>], cols: usize, what: &'static str) -> Result<DMatrix<f64>, ProblemError> {
    for r in rows {
        if r.len() != cols {
            return Err(ProblemError::Dimension {
                what,
                expected: cols,
                got: r.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

impl ProblemFile {
    pub fn from_problem(p: &Problem) -> Self {
        let objective = match p.objective() {
            Objective::Quadratic { h, q } => ObjectiveSpec::Quadratic {
                h: nested(h),
                q: q.as_slice().to_vec(),
            },
            Objective::Separable { terms } => ObjectiveSpec::Separable {
                terms: terms
                    .iter()
                    .map(|t| match t.kind {
                        TermKind::NegLog { lo, hi } => TermSpec::Neglog {
                            row: t.rows.row(0).iter().cloned().collect(),
                            offset: t.offset[0],
                            lo,
                            hi,
                        },
                        TermKind::Quadratic { modulus } => TermSpec::Quadratic {
                            modulus,
                            rows: nested(&t.rows),
                            offset: t.offset.as_slice().to_vec(),
                        },
                        TermKind::Linear => TermSpec::Linear {
                            row: t.rows.row(0).iter().cloned().collect(),
                            offset: t.offset[0],
                        },
                    })
                    .collect(),
            },
        };
        Self {
            objective,
            a: nested(p.a()),
            b: p.b().as_slice().to_vec(),
            bounds: BoxSpec {
                lo: p.bounds().lo().as_slice().to_vec(),
                hi: p.bounds().hi().as_slice().to_vec(),
            },
            meta: p.meta().clone(),
        }
    }

    pub fn into_problem(self) -> Result<Problem, ProblemError> {
        let n = self.bounds.lo.len();
        let bounds = BoxSet::new(DVector::from_vec(self.bounds.lo), DVector::from_vec(self.bounds.hi))?;
        let a = matrix(&self.a, n, "A row")?;
        let cons = EqualityConstraints::new(a, DVector::from_vec(self.b))?;
        let objective = match self.objective {
            ObjectiveSpec::Quadratic { h, q } => Objective::Quadratic {
                h: matrix(&h, n, "H row")?,
                q: DVector::from_vec(q),
            },
            ObjectiveSpec::Separable { terms } => Objective::Separable {
                terms: terms
                    .into_iter()
                    .map(|t| {
                        Ok(match t {
                            TermSpec::Neglog { row, offset, lo, hi } => {
                                Term::neg_log(DVector::from_vec(row), offset, lo, hi)
                            }
                            TermSpec::Quadratic {
                                modulus,
                                rows,
                                offset,
                            } => Term::quadratic(
                                modulus,
                                matrix(&rows, n, "term row")?,
                                DVector::from_vec(offset),
                            ),
                            TermSpec::Linear { row, offset } => {
                                Term::linear(DVector::from_vec(row), offset)
                            }
                        })
                    })
                    .collect::<Result<Vec<_>, ProblemError>>()?,
            },
        };
        Ok(Problem::new(objective, cons, bounds)?.with_meta(self.meta))
    }
}

impl Problem {
    pub fn from_json_str(s: &str) -> Result<Problem, LoadError> {
        let file: ProblemFile = serde_json::from_str(s).map_err(|e| LoadError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Ok(file.into_problem()?)
    }

    pub fn load(path: &Path) -> Result<Problem, LoadError> {
        let s = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ProblemFile::from_problem(self))
            .expect("problem data serializes")
    }
}
