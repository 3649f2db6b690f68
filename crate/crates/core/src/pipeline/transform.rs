//! Invertible elementwise transforms for dataset values.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    /// `x -> log10(x + 1)`.
    Log10Shift,
    Log10,
    /// Per-feature `(x - mean) / std` with statistics from fitting.
    Zscore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transform {
    pub kind: TransformKind,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Transform {
    pub fn log10_shift() -> Self {
        Transform {
            kind: TransformKind::Log10Shift,
            mean: Vec::new(),
            std: Vec::new(),
        }
    }

    pub fn log10() -> Self {
        Transform {
            kind: TransformKind::Log10,
            mean: Vec::new(),
            std: Vec::new(),
        }
    }

    /// Fits per-feature statistics over `rows`; constant features get unit
    /// scale.
    pub fn fit_zscore<T: AsRef<[f64]>>(rows: &[T]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Shape("no rows to fit".into()))?;
        let m = first.as_ref().len();
        if rows.iter().any(|r| r.as_ref().len() != m) {
            return Err(Error::Shape("rows differ in length".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; m];
        for r in rows {
            for (a, x) in mean.iter_mut().zip(r.as_ref()) {
                *a += x;
            }
        }
        mean.iter_mut().for_each(|a| *a /= n);
        let mut var = vec![0.0; m];
        for r in rows {
            for ((v, x), mu) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *v += (x - mu) * (x - mu);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Transform {
            kind: TransformKind::Zscore,
            mean,
            std,
        })
    }

    fn check_width(&self, row: &[f64]) -> Result<()> {
        if self.kind == TransformKind::Zscore && row.len() != self.mean.len() {
            return Err(Error::Shape(format!(
                "row of {} values for a transform fitted on {} features",
                row.len(),
                self.mean.len()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_width(row)?;
        row.iter()
            .enumerate()
            .map(|(j, &x)| match self.kind {
                TransformKind::Log10Shift if x > -1.0 => Ok((x + 1.0).log10()),
                TransformKind::Log10 if x > 0.0 => Ok(x.log10()),
                TransformKind::Zscore if x.is_finite() => Ok((x - self.mean[j]) / self.std[j]),
                _ => Err(Error::Domain {
                    value: x,
                    detail: format!("{:?} at feature {j}", self.kind),
                }),
            })
            .collect()
    }

    pub fn invert(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_width(row)?;
        row.iter()
            .enumerate()
            .map(|(j, &y)| {
                if !y.is_finite() {
                    return Err(Error::Domain {
                        value: y,
                        detail: format!("inverse {:?} at feature {j}", self.kind),
                    });
                }
                Ok(match self.kind {
                    TransformKind::Log10Shift => 10f64.powf(y) - 1.0,
                    TransformKind::Log10 => 10f64.powf(y),
                    TransformKind::Zscore => y * self.std[j] + self.mean[j],
                })
            })
            .collect()
    }
}
