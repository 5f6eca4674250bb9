//! Closed-form sample families. Planar families read the first two
//! coordinates as `z = x1 + i x2`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{QvlError, Result};
use crate::grid::GridDomain;
use crate::qfield::QField;
use crate::qspace::QPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Every node takes `value`.
    Constant { value: QPoint },
    /// `Q[[A x + b]]` with `A` stored row-major as `n x m`.
    Linear { a: Vec<f64>, b: Vec<f64> },
    /// `Re z^k`.
    Harmonic { k: u32 },
    /// `{+Re z^{k/2}, -Re z^{k/2}}`.
    BranchPair { k: u32 },
    /// `{+z^{k/2}, -z^{k/2}}` in the plane.
    ComplexBranchPair { k: u32 },
}

impl Family {
    pub fn id(&self) -> &'static str {
        match self {
            Family::Constant { .. } => "constant",
            Family::Linear { .. } => "linear",
            Family::Harmonic { .. } => "harmonic",
            Family::BranchPair { .. } => "branch_pair",
            Family::ComplexBranchPair { .. } => "complex_branch_pair",
        }
    }

    pub fn q(&self) -> usize {
        match self {
            Family::Constant { value } => value.q(),
            Family::Linear { .. } | Family::Harmonic { .. } => 1,
            Family::BranchPair { .. } | Family::ComplexBranchPair { .. } => 2,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Family::Constant { value } => value.n(),
            Family::Linear { b, .. } => b.len(),
            Family::Harmonic { .. } | Family::BranchPair { .. } => 1,
            Family::ComplexBranchPair { .. } => 2,
        }
    }

    /// Degree of homogeneity about the origin, when there is one.
    pub fn degree(&self) -> Option<f64> {
        match self {
            Family::Constant { .. } => Some(0.0),
            Family::Linear { b, .. } => b.iter().all(|v| *v == 0.0).then_some(1.0),
            Family::Harmonic { k } => Some(*k as f64),
            Family::BranchPair { k } | Family::ComplexBranchPair { k } => Some(*k as f64 / 2.0),
        }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            Family::Constant { .. } => Ok(()),
            Family::Linear { a, b } => {
                if b.is_empty() || a.len() != b.len() * m {
                    Err(QvlError::Shape(format!("linear family needs an n x {m} matrix and n offsets")))
                } else {
                    Ok(())
                }
            }
            Family::Harmonic { k } | Family::BranchPair { k } | Family::ComplexBranchPair { k } => {
                if m < 2 {
                    Err(QvlError::Domain("planar families need m >= 2".into()))
                } else if *k == 0 {
                    Err(QvlError::Parameter("degree parameter k must be positive".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<QPoint> {
        self.validate(x.len())?;
        match self {
            Family::Constant { value } => Ok(value.clone()),
            Family::Linear { a, b } => {
                let m = x.len();
                let v = b.iter().enumerate().map(|(c, bc)| bc + (0..m).map(|k| a[c * m + k] * x[k]).sum::<f64>()).collect();
                QPoint::new(vec![v])
            }
            Family::Harmonic { k } => {
                let (r, t) = polar(x);
                QPoint::new(vec![vec![r.powi(*k as i32) * (*k as f64 * t).cos()]])
            }
            Family::BranchPair { k } => {
                let (r, t) = polar(x);
                let v = r.powf(*k as f64 / 2.0) * (*k as f64 * t / 2.0).cos();
                QPoint::new(vec![vec![v], vec![-v]])
            }
            Family::ComplexBranchPair { k } => {
                let (r, t) = polar(x);
                let s = r.powf(*k as f64 / 2.0);
                let a = *k as f64 * t / 2.0;
                let v = vec![s * a.cos(), s * a.sin()];
                QPoint::new(vec![v.clone(), v.iter().map(|c| -c).collect()])
            }
        }
    }

    pub fn sample(&self, domain: Arc<GridDomain>) -> Result<QField> {
        self.validate(domain.m())?;
        QField::from_fn(domain, |_, x| self.eval(x))
    }
}

/// `(|z|, arg z)` with the angle in `[0, 2 pi)`.
fn polar(x: &[f64]) -> (f64, f64) {
    let r = x[0].hypot(x[1]);
    let t = x[1].atan2(x[0]);
    (r, if t < 0.0 { t + std::f64::consts::TAU } else { t })
}
