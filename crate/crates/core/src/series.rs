//! Time-series container, differencing, returns and the nonlinear
//! transforms applied to price data before multifractal analysis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default moving-volatility window, in samples (transaction days).
pub const DEFAULT_VOLATILITY_WINDOW: usize = 21;

/// Records the last transform applied to a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Raw,
    Increments,
    AbsIncrements,
    SquaredIncrements,
    Returns,
    AbsReturns,
    MovingMeanAbsreturn,
    MovingStddev,
}

impl TransformKind {
    /// The six series studied for every price input, in report order.
    pub const ANALYSED: [TransformKind; 6] = [
        TransformKind::Increments,
        TransformKind::AbsIncrements,
        TransformKind::SquaredIncrements,
        TransformKind::AbsReturns,
        TransformKind::MovingMeanAbsreturn,
        TransformKind::MovingStddev,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Raw => "raw",
            TransformKind::Increments => "increments",
            TransformKind::AbsIncrements => "abs_increments",
            TransformKind::SquaredIncrements => "squared_increments",
            TransformKind::Returns => "returns",
            TransformKind::AbsReturns => "abs_returns",
            TransformKind::MovingMeanAbsreturn => "moving_mean_absreturn",
            TransformKind::MovingStddev => "moving_stddev",
        }
    }

    /// The primary series a transform is computed from: increments for the
    /// increment family, log returns for the return family.
    pub fn base(self) -> TransformKind {
        match self {
            TransformKind::Raw => TransformKind::Raw,
            TransformKind::Increments
            | TransformKind::AbsIncrements
            | TransformKind::SquaredIncrements => TransformKind::Increments,
            TransformKind::Returns
            | TransformKind::AbsReturns
            | TransformKind::MovingMeanAbsreturn
            | TransformKind::MovingStddev => TransformKind::Returns,
        }
    }

    pub fn needs_window(self) -> bool {
        matches!(
            self,
            TransformKind::MovingMeanAbsreturn | TransformKind::MovingStddev
        )
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.trim() {
            "raw" => TransformKind::Raw,
            "increments" | "dx" => TransformKind::Increments,
            "abs_increments" | "absdx" => TransformKind::AbsIncrements,
            "squared_increments" | "dx2" => TransformKind::SquaredIncrements,
            "returns" | "r" => TransformKind::Returns,
            "abs_returns" | "absr" => TransformKind::AbsReturns,
            "moving_mean_absreturn" | "mu" => TransformKind::MovingMeanAbsreturn,
            "moving_stddev" | "v" => TransformKind::MovingStddev,
            other => return Err(Error::UnknownTransform(other.to_string())),
        };
        Ok(kind)
    }
}

/// Window length for the moving-volatility transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolatilityWindow(usize);

impl VolatilityWindow {
    pub fn new(s: usize) -> Result<Self> {
        if s < 2 {
            return Err(Error::InvalidParameter(format!(
                "volatility window must be at least 2, got {s}"
            )));
        }
        Ok(Self(s))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl Default for VolatilityWindow {
    fn default() -> Self {
        Self(DEFAULT_VOLATILITY_WINDOW)
    }
}

/// Ordered finite samples plus the transform that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    label: TransformKind,
    source_id: String,
}

impl TimeSeries {
    /// Builds a series, rejecting NaN and infinite samples.
    pub fn new(values: Vec<f64>, label: TransformKind, source_id: impl Into<String>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { index });
        }
        Ok(Self {
            values,
            label,
            source_id: source_id.into(),
        })
    }

    pub fn raw(values: Vec<f64>, source_id: impl Into<String>) -> Result<Self> {
        Self::new(values, TransformKind::Raw, source_id)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn label(&self) -> TransformKind {
        self.label
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn derived(&self, values: Vec<f64>, label: TransformKind) -> TimeSeries {
        TimeSeries {
            values,
            label,
            source_id: self.source_id.clone(),
        }
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Result<TimeSeries> {
        TimeSeries::new(values, self.label, self.source_id.clone())
    }

    fn require_len(&self, needed: usize) -> Result<()> {
        if self.values.len() < needed {
            return Err(Error::SeriesTooShort {
                needed,
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// First differences `x[i+1] - x[i]`.
pub fn increments(x: &TimeSeries) -> Result<TimeSeries> {
    x.require_len(2)?;
    let dx = x.values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(x.derived(dx, TransformKind::Increments))
}

/// Logarithmic returns `ln(x[i+1] / x[i])`; every price must be positive.
pub fn log_returns(x: &TimeSeries) -> Result<TimeSeries> {
    x.require_len(2)?;
    if let Some((index, &value)) = x.values.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(Error::NonPositiveValue { index, value });
    }
    let r = x.values.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    Ok(x.derived(r, TransformKind::Returns))
}

/// Rebuilds a price path `start, start + dx[0], ...` from increments.
pub fn prices_from_increments(dx: &TimeSeries, start: f64) -> Result<TimeSeries> {
    let mut values = Vec::with_capacity(dx.len() + 1);
    let mut level = start;
    values.push(level);
    for v in &dx.values {
        level += v;
        values.push(level);
    }
    TimeSeries::new(values, TransformKind::Raw, dx.source_id.clone())
}

/// Applies `kind` to `x`.
///
/// Increment-family kinds accept either raw prices or an increment series;
/// return-family kinds accept raw prices or a log-return series. Asking for
/// the series' own base kind returns it unchanged.
pub fn transform(
    x: &TimeSeries,
    kind: TransformKind,
    window: Option<VolatilityWindow>,
) -> Result<TimeSeries> {
    if kind == TransformKind::Raw {
        return if x.label == TransformKind::Raw {
            Ok(x.clone())
        } else {
            Err(Error::WrongInputKind {
                kind: kind.as_str(),
                label: x.label.as_str(),
            })
        };
    }

    let base_kind = kind.base();
    let base = match x.label {
        TransformKind::Raw if base_kind == TransformKind::Increments => increments(x)?,
        TransformKind::Raw => log_returns(x)?,
        label if label == base_kind => x.clone(),
        label => {
            return Err(Error::WrongInputKind {
                kind: kind.as_str(),
                label: label.as_str(),
            })
        }
    };

    let values = match kind {
        TransformKind::Increments | TransformKind::Returns => return Ok(base),
        TransformKind::AbsIncrements | TransformKind::AbsReturns => {
            base.values.iter().map(|v| v.abs()).collect()
        }
        TransformKind::SquaredIncrements => base.values.iter().map(|v| v * v).collect(),
        TransformKind::MovingMeanAbsreturn | TransformKind::MovingStddev => {
            let s = window.ok_or(Error::MissingWindow)?.get();
            if s >= base.len() {
                return Err(Error::InvalidWindow {
                    window: s,
                    len: base.len(),
                });
            }
            if kind == TransformKind::MovingMeanAbsreturn {
                moving_mean_abs(&base.values, s)
            } else {
                moving_stddev(&base.values, s)
            }
        }
        TransformKind::Raw => unreachable!(),
    };
    Ok(base.derived(values, kind))
}

// Full windows only: output[j] covers r[j..j+s].
fn moving_mean_abs(r: &[f64], s: usize) -> Vec<f64> {
    r.windows(s)
        .map(|w| w.iter().map(|v| v.abs()).sum::<f64>() / s as f64)
        .collect()
}

fn moving_stddev(r: &[f64], s: usize) -> Vec<f64> {
    r.windows(s)
        .map(|w| {
            let mean = w.iter().sum::<f64>() / s as f64;
            let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s as f64;
            var.sqrt()
        })
        .collect()
}
