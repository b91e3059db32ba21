//! Vertical sources `f >= 0` poured onto the container.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{dist, DomainSpec, Point};
use crate::grid::Grid;

/// Named analytic source densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `(N + alpha) |x - center|^alpha`.
    PowerLaw {
        alpha: f64,
        #[serde(default)]
        center: Point,
    },
    /// `coefficient * |x - center|^exponent`.
    Monomial {
        coefficient: f64,
        exponent: f64,
        #[serde(default)]
        center: Point,
    },
    /// `value` on the closed box `[lo, hi]` (an interval in 1D), zero elsewhere.
    Indicator {
        lo: Vec<f64>,
        hi: Vec<f64>,
        #[serde(default = "one")]
        value: f64,
    },
    /// `value` on the closed disk, zero elsewhere.
    Disk {
        center: Point,
        radius: f64,
        #[serde(default = "one")]
        value: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl SourceSpec {
    /// Density at `p` for a domain of dimension `n`.
    pub fn eval(&self, n: usize, p: Point) -> f64 {
        match self {
            SourceSpec::Zero => 0.0,
            SourceSpec::Constant { value } => *value,
            SourceSpec::PowerLaw { alpha, center } => (n as f64 + alpha) * dist(p, *center).powf(*alpha),
            SourceSpec::Monomial {
                coefficient,
                exponent,
                center,
            } => coefficient * dist(p, *center).powf(*exponent),
            SourceSpec::Indicator { lo, hi, value } => {
                let inside = (0..n).all(|k| {
                    let (a, b) = (lo.get(k).copied().unwrap_or(0.0), hi.get(k).copied().unwrap_or(0.0));
                    p[k] >= a && p[k] <= b
                });
                if inside {
                    *value
                } else {
                    0.0
                }
            }
            SourceSpec::Disk { center, radius, value } => {
                if dist(p, *center) <= *radius {
                    *value
                } else {
                    0.0
                }
            }
        }
    }

    /// Radial profile `r -> f(r e)` when the source is radially symmetric about the origin.
    pub fn radial_profile(&self, n: usize) -> Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>> {
        let origin = [0.0, 0.0];
        match self.clone() {
            SourceSpec::Zero => Some(Arc::new(|_| 0.0)),
            SourceSpec::Constant { value } => Some(Arc::new(move |_| value)),
            SourceSpec::PowerLaw { alpha, center } if center == origin => {
                let c = n as f64 + alpha;
                Some(Arc::new(move |r: f64| c * r.powf(alpha)))
            }
            SourceSpec::Monomial {
                coefficient,
                exponent,
                center,
            } if center == origin => Some(Arc::new(move |r: f64| coefficient * r.powf(exponent))),
            _ => None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Data(msg));
        match self {
            SourceSpec::Constant { value } if !(*value >= 0.0 && value.is_finite()) => {
                bad(format!("constant source {value} must be nonnegative"))
            }
            SourceSpec::PowerLaw { alpha, .. } if !(*alpha > 0.0 && alpha.is_finite()) => {
                bad(format!("power-law exponent {alpha} must be positive"))
            }
            SourceSpec::Monomial {
                coefficient,
                exponent,
                ..
            } if !(*coefficient >= 0.0 && *exponent >= 0.0) => {
                bad("monomial source needs nonnegative coefficient and exponent".into())
            }
            SourceSpec::Indicator { lo, hi, value } => {
                if lo.len() < n || hi.len() < n {
                    bad(format!("indicator bounds need {n} coordinates"))
                } else if !(*value >= 0.0) {
                    bad(format!("indicator value {value} must be nonnegative"))
                } else {
                    Ok(())
                }
            }
            SourceSpec::Disk { radius, value, .. } if !(*radius > 0.0 && *value >= 0.0) => {
                bad("disk source needs positive radius and nonnegative value".into())
            }
            _ => Ok(()),
        }
    }
}

/// Samples `f_fn` at every cell center.
pub fn discretize_source(domain: &DomainSpec, grid: &Arc<Grid>, f_fn: impl Fn(Point) -> f64) -> Result<ScalarField> {
    if domain.dimension != grid.dimension() {
        return Err(Error::GridMismatch);
    }
    let mut values = Vec::with_capacity(grid.len());
    for (i, &p) in grid.coords().iter().enumerate() {
        let v = f_fn(p);
        if !v.is_finite() {
            return Err(Error::Data(format!("source is not finite at {p:?}")));
        }
        if v < 0.0 {
            return Err(Error::Data(format!("source is negative ({v}) at cell {i} {p:?}")));
        }
        values.push(v);
    }
    ScalarField::new(grid.clone(), values)
}
