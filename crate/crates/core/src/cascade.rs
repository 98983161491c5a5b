//! Binomial random cascades and their closed-form generalized Hurst
//! exponents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{TimeSeries, TransformKind};

pub const MIN_DEPTH: u32 = 4;
// 2^26 samples is already far beyond desk-scale analysis.
pub const MAX_DEPTH: u32 = 26;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    pub a: f64,
    pub depth: u32,
    pub seed: u64,
}

impl CascadeParams {
    /// `a` must lie in `[0.5, 1)`; `a = 0.5` is the degenerate uniform
    /// measure.
    pub fn new(a: f64, depth: u32, seed: u64) -> Result<Self> {
        if !(0.5..1.0).contains(&a) {
            return Err(Error::InvalidParameter(format!(
                "cascade parameter a must be in [0.5, 1), got {a}"
            )));
        }
        if !(MIN_DEPTH..=MAX_DEPTH).contains(&depth) {
            return Err(Error::InvalidParameter(format!(
                "cascade depth must be in {MIN_DEPTH}..={MAX_DEPTH}, got {depth}"
            )));
        }
        Ok(Self { a, depth, seed })
    }

    pub fn len(&self) -> usize {
        1 << self.depth
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn build(a: f64, depth: u32, mut left_gets_a: impl FnMut() -> bool) -> Vec<f64> {
    let mut cells = vec![1.0];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(cells.len() * 2);
        for &w in &cells {
            let (l, r) = if left_gets_a() { (a, 1.0 - a) } else { (1.0 - a, a) };
            next.push(w * l);
            next.push(w * r);
        }
        cells = next;
    }
    cells
}

/// Multiplicative cascade of `2^depth` cells. At every split one child
/// receives the factor `a` and the other `1 - a`, with the side chosen at
/// random. The values sum to 1.
pub fn generate(params: &CascadeParams) -> Result<TimeSeries> {
    let params = CascadeParams::new(params.a, params.depth, params.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let values = build(params.a, params.depth, || rng.random::<bool>());
    TimeSeries::new(
        values,
        TransformKind::Increments,
        format!("cascade(a={},depth={},seed={})", params.a, params.depth, params.seed),
    )
}

/// Cascade with the factor `a` always given to the left child. Any depth
/// from 1 up is accepted.
pub fn generate_left_heavy(a: f64, depth: u32) -> Result<TimeSeries> {
    CascadeParams::new(a, depth.clamp(MIN_DEPTH, MAX_DEPTH), 0)?;
    let values = build(a, depth, || true);
    TimeSeries::new(values, TransformKind::Increments, format!("cascade(a={a},left)"))
}

fn check_a(a: f64) -> Result<()> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidParameter(format!("a must be in (0, 1), got {a}")));
    }
    Ok(())
}

/// Closed-form `h(q)` of the binomial cascade:
/// `(1 - log2(a^q + (1-a)^q)) / q`, and `-(log2 a + log2(1-a)) / 2` at 0.
pub fn analytic_h(a: f64, q: f64) -> Result<f64> {
    check_a(a)?;
    if !q.is_finite() {
        return Err(Error::InvalidParameter(format!("q must be finite, got {q}")));
    }
    if q == 0.0 {
        return Ok(-0.5 * (a.log2() + (1.0 - a).log2()));
    }
    // log2(a^q + b^q) evaluated in log space so |q| up to hundreds is safe
    let (la, lb) = (q * a.ln(), q * (1.0 - a).ln());
    let m = la.max(lb);
    let log2_sum = (m + ((la - m).exp() + (lb - m).exp()).ln()) / std::f64::consts::LN_2;
    Ok((1.0 - log2_sum) / q)
}

/// Theoretical spread `h(-Q) - h(Q)`.
pub fn analytic_spread(a: f64, max_q: f64) -> Result<f64> {
    if !(max_q > 0.0) {
        return Err(Error::InvalidParameter(format!("Q must be positive, got {max_q}")));
    }
    Ok(analytic_h(a, -max_q)? - analytic_h(a, max_q)?)
}
