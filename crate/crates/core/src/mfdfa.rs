//! Multifractal detrended fluctuation analysis.
//!
//! The engine splits the (optionally integrated) series into `2N`
//! non-overlapping windows of size `tau` (N from the start, N from the end),
//! removes a least-squares polynomial from each, and aggregates the residual
//! variances into q-order fluctuation functions `F(q, tau)`. Scaling
//! exponents come from log-log OLS fits over `tau`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, log_sum_exp, LineFit};
use crate::series::TimeSeries;

/// Tolerance when matching a requested q against grid values.
pub const Q_MATCH_TOL: f64 = 1e-9;

pub const DEFAULT_MAX_Q: f64 = 15.0;
pub const DEFAULT_Q_STEP: f64 = 0.25;
pub const DEFAULT_TAU_COUNT: usize = 20;
pub const DEFAULT_MIN_TAU: usize = 10;

/// Minimum number of tau points for any log-log fit.
pub const MIN_FIT_POINTS: usize = 4;

/// Fraction of zero segment variances tolerated for non-positive moments.
pub const MAX_ZERO_FRACTION: f64 = 0.10;

// Residual variances below this fraction of the window's own variance are
// rounding noise from an exact polynomial fit and are stored as 0.
const ZERO_VARIANCE_RTOL: f64 = 1e-20;

/// Symmetric moment-order grid `{-Q, -Q + step, ..., Q}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QGrid {
    max_q: f64,
    step: f64,
    values: Vec<f64>,
}

impl QGrid {
    /// `Q` must be an integer multiple of `step`, at least 2, and `2` must
    /// fall on the grid.
    pub fn new(max_q: f64, step: f64) -> Result<Self> {
        if !(max_q.is_finite() && step.is_finite() && step > 0.0 && max_q >= 2.0) {
            return Err(Error::InvalidGrid(format!(
                "need Q >= 2 and step > 0, got Q = {max_q}, step = {step}"
            )));
        }
        let half = (max_q / step).round();
        let two = (2.0 / step).round();
        if (half * step - max_q).abs() > Q_MATCH_TOL || (two * step - 2.0).abs() > Q_MATCH_TOL {
            return Err(Error::InvalidGrid(format!(
                "Q = {max_q} and 2 must be multiples of step {step}"
            )));
        }
        let half = half as i64;
        let values = (-half..=half).map(|k| k as f64 * step).collect();
        Ok(Self {
            max_q,
            step,
            values,
        })
    }

    pub fn max_q(&self) -> f64 {
        self.max_q
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, q: f64) -> Option<usize> {
        self.values.iter().position(|v| (v - q).abs() <= Q_MATCH_TOL)
    }
}

impl Default for QGrid {
    fn default() -> Self {
        QGrid::new(DEFAULT_MAX_Q, DEFAULT_Q_STEP).expect("default q grid")
    }
}

/// Window sizes, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TauGrid {
    values: Vec<usize>,
}

impl TauGrid {
    pub fn new(values: Vec<usize>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("empty tau grid".into()));
        }
        if values[0] == 0 || values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "tau grid must be strictly increasing positive integers".into(),
            ));
        }
        Ok(Self { values })
    }

    /// About `count` log-spaced integers in `[min, max]`; duplicates after
    /// rounding are dropped.
    pub fn log_spaced(min: usize, max: usize, count: usize) -> Result<Self> {
        if min == 0 || max < min || count < 2 {
            return Err(Error::InvalidGrid(format!(
                "cannot build log-spaced grid on [{min}, {max}] with {count} points"
            )));
        }
        let (lo, hi) = ((min as f64).ln(), (max as f64).ln());
        let mut values: Vec<usize> = (0..count)
            .map(|i| {
                let t = i as f64 / (count - 1) as f64;
                ((lo + t * (hi - lo)).exp().round() as usize).clamp(min, max)
            })
            .collect();
        values.dedup();
        Self::new(values)
    }

    /// Default grid for a series of `len` samples: `[max(10, m + 2), len / 4]`.
    pub fn default_for(len: usize, cfg: &DetrendConfig) -> Result<Self> {
        let min = DEFAULT_MIN_TAU.max(cfg.min_tau());
        let max = len / 4;
        if max < min {
            return Err(Error::SeriesTooShort {
                needed: 4 * min,
                got: len,
            });
        }
        Self::log_spaced(min, max, DEFAULT_TAU_COUNT)
    }

    /// Checks the grid against a series length and detrending order.
    pub fn validate_for(&self, len: usize, cfg: &DetrendConfig) -> Result<()> {
        if self.values[0] < cfg.min_tau() {
            return Err(Error::WindowTooSmall {
                tau: self.values[0],
                order: cfg.poly_order,
            });
        }
        let max = *self.values.last().unwrap();
        if max > len / 4 {
            return Err(Error::InvalidGrid(format!(
                "largest tau {max} exceeds a quarter of the series length {len}"
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn full_range(&self) -> (usize, usize) {
        (self.values[0], *self.values.last().unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetrendConfig {
    pub poly_order: usize,
    /// Replace the series by the cumulative sum of its mean-subtracted values
    /// before segmentation.
    pub integrate_profile: bool,
}

impl DetrendConfig {
    pub const MAX_ORDER: usize = 5;

    pub fn new(poly_order: usize, integrate_profile: bool) -> Result<Self> {
        if poly_order > Self::MAX_ORDER {
            return Err(Error::InvalidParameter(format!(
                "detrending order must be in 0..={}, got {poly_order}",
                Self::MAX_ORDER
            )));
        }
        Ok(Self {
            poly_order,
            integrate_profile,
        })
    }

    pub fn min_tau(&self) -> usize {
        self.poly_order + 2
    }
}

impl Default for DetrendConfig {
    fn default() -> Self {
        Self {
            poly_order: 2,
            integrate_profile: true,
        }
    }
}

/// `F(q, tau)` over a q grid (rows) and tau grid (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationGrid {
    q_grid: QGrid,
    tau_grid: TauGrid,
    // row-major, q index first; NaN where invalid
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl FluctuationGrid {
    /// Assembles a grid from row-major values (q rows, tau columns). Cells
    /// that are non-finite or non-positive are marked invalid.
    pub fn from_values(q_grid: QGrid, tau_grid: TauGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != q_grid.len() * tau_grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} cells, got {}",
                q_grid.len() * tau_grid.len(),
                values.len()
            )));
        }
        let valid: Vec<bool> = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        let values = values
            .into_iter()
            .zip(&valid)
            .map(|(v, ok)| if *ok { v } else { f64::NAN })
            .collect();
        Ok(Self {
            q_grid,
            tau_grid,
            values,
            valid,
        })
    }

    pub fn q_grid(&self) -> &QGrid {
        &self.q_grid
    }

    pub fn tau_grid(&self) -> &TauGrid {
        &self.tau_grid
    }

    /// `(|q_grid|, |tau_grid|)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.q_grid.len(), self.tau_grid.len())
    }

    pub fn get(&self, qi: usize, ti: usize) -> Option<f64> {
        let k = qi * self.tau_grid.len() + ti;
        self.valid[k].then_some(self.values[k])
    }

    pub fn is_valid(&self, qi: usize, ti: usize) -> bool {
        self.valid[qi * self.tau_grid.len() + ti]
    }

    /// Row of `F(q, .)` with `None` for invalid cells.
    pub fn row(&self, qi: usize) -> Vec<Option<f64>> {
        (0..self.tau_grid.len()).map(|ti| self.get(qi, ti)).collect()
    }

    fn tau_indices_in(&self, (lo, hi): (usize, usize)) -> Vec<usize> {
        self.tau_grid
            .values()
            .iter()
            .enumerate()
            .filter(|(_, t)| **t >= lo && **t <= hi)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Fitted generalized Hurst exponents `h(q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstProfile {
    pub q_grid: QGrid,
    pub h: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fit_tau_range: (usize, usize),
}

impl HurstProfile {
    pub fn new(
        q_grid: QGrid,
        h: Vec<f64>,
        stderr: Vec<f64>,
        fit_tau_range: (usize, usize),
    ) -> Result<Self> {
        if h.len() != q_grid.len() || stderr.len() != q_grid.len() {
            return Err(Error::GridMismatch);
        }
        if h.iter().any(|v| !v.is_finite()) || stderr.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter(
                "profile exponents must be finite and stderr nonnegative".into(),
            ));
        }
        Ok(Self {
            q_grid,
            h,
            stderr,
            fit_tau_range,
        })
    }

    /// Profile with `h(q) = f(q)` and zero stderr.
    pub fn from_fn(q_grid: QGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = q_grid.values().iter().map(|q| f(*q)).collect();
        let stderr = vec![0.0; q_grid.len()];
        Self::new(q_grid, h, stderr, (0, 0))
    }

    pub fn h_at(&self, q: f64) -> Option<f64> {
        self.q_grid.index_of(q).map(|i| self.h[i])
    }

    pub fn stderr_at(&self, q: f64) -> Option<f64> {
        self.q_grid.index_of(q).map(|i| self.stderr[i])
    }
}

/// Orthonormal polynomial basis (degrees 0..=order) on `tau` equally spaced
/// points, built by twice-applied modified Gram-Schmidt.
fn poly_basis(tau: usize, order: usize) -> Vec<Vec<f64>> {
    let center = (tau as f64 - 1.0) / 2.0;
    let scale = tau as f64;
    let t: Vec<f64> = (0..tau).map(|j| (j as f64 - center) / scale).collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order + 1);
    for deg in 0..=order {
        let mut v: Vec<f64> = t.iter().map(|x| x.powi(deg as i32)).collect();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
                v.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    basis
}

fn window_residual_variance(window: &[f64], basis: &[Vec<f64>], resid: &mut Vec<f64>) -> f64 {
    let tau = window.len() as f64;
    resid.clear();
    resid.extend_from_slice(window);
    for b in basis {
        let coef: f64 = resid.iter().zip(b).map(|(y, p)| y * p).sum();
        resid.iter_mut().zip(b).for_each(|(y, p)| *y -= coef * p);
    }
    let var = resid.iter().map(|r| r * r).sum::<f64>() / tau;

    let mean = window.iter().sum::<f64>() / tau;
    let spread = window.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / tau;
    if var <= ZERO_VARIANCE_RTOL * spread || spread == 0.0 {
        0.0
    } else {
        var
    }
}

/// Series the windows are cut from.
enum Profile<'a> {
    /// Used as is, or globally integrated after removing the mean.
    Global(Vec<f64>),
    /// Integrated afresh inside every window. For detrending order >= 1 this
    /// gives the same residuals as the global profile (the offset and the
    /// mean's linear trend lie in the polynomial span) without rounding
    /// increments that are tiny next to the running sum.
    Local(&'a [f64]),
}

fn analysis_profile<'a>(x: &'a [f64], cfg: &DetrendConfig) -> Profile<'a> {
    if !cfg.integrate_profile {
        return Profile::Global(x.to_vec());
    }
    if cfg.poly_order >= 1 {
        return Profile::Local(x);
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    Profile::Global(
        x.iter()
            .scan(0.0, |acc, v| {
                *acc += v - mean;
                Some(*acc)
            })
            .collect(),
    )
}

fn variances_of_profile(profile: &Profile<'_>, tau: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let (len, n) = match profile {
        Profile::Global(y) => (y.len(), y.len() / tau),
        Profile::Local(x) => (x.len(), x.len() / tau),
    };
    let starts = (0..n).map(|k| k * tau).chain((0..n).map(|k| len - (k + 1) * tau));
    let mut resid = Vec::with_capacity(tau);
    let mut local = Vec::with_capacity(tau);
    starts
        .map(|s| match profile {
            Profile::Global(y) => window_residual_variance(&y[s..s + tau], basis, &mut resid),
            Profile::Local(x) => {
                local.clear();
                let mut acc = 0.0;
                local.extend(x[s..s + tau].iter().map(|v| {
                    acc += v;
                    acc
                }));
                window_residual_variance(&local, basis, &mut resid)
            }
        })
        .collect()
}

fn check_window(len: usize, tau: usize, cfg: &DetrendConfig) -> Result<()> {
    if tau < cfg.min_tau() {
        return Err(Error::WindowTooSmall {
            tau,
            order: cfg.poly_order,
        });
    }
    if len < 2 * tau {
        return Err(Error::SeriesTooShort {
            needed: 2 * tau,
            got: len,
        });
    }
    Ok(())
}

/// Residual variances of the `2N` detrended windows of size `tau`: the
/// first `N` windows tile the series from the start, the last `N` from the
/// end.
pub fn segment_variances(x: &TimeSeries, tau: usize, cfg: &DetrendConfig) -> Result<Vec<f64>> {
    check_window(x.len(), tau, cfg)?;
    let y = analysis_profile(x.values(), cfg);
    let basis = poly_basis(tau, cfg.poly_order);
    Ok(variances_of_profile(&y, tau, &basis))
}

/// Summary of the log-variances entering a moment computation.
struct LogVariances {
    logs: Vec<f64>,
    total: usize,
}

impl LogVariances {
    fn new(variances: &[f64]) -> Result<Self> {
        if let Some(v) = variances.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::NegativeVarianceInput(*v));
        }
        let logs: Vec<f64> = variances.iter().filter(|v| **v > 0.0).map(|v| v.ln()).collect();
        if logs.is_empty() {
            return Err(Error::AllZeroVariances);
        }
        Ok(Self {
            logs,
            total: variances.len(),
        })
    }

    fn moment(&self, q: f64) -> Result<f64> {
        let excluded = self.total - self.logs.len();
        if q <= 0.0 && excluded as f64 > MAX_ZERO_FRACTION * self.total as f64 {
            return Err(Error::ExcessiveZeroVariances {
                excluded,
                total: self.total,
            });
        }
        let n = self.logs.len() as f64;
        let log_f = if q == 0.0 {
            0.5 * self.logs.iter().sum::<f64>() / n
        } else {
            let half = 0.5 * q;
            (log_sum_exp(self.logs.iter().map(|l| half * l)) - n.ln()) / q
        };
        Ok(log_f.exp())
    }
}

/// q-order fluctuation function of a set of segment variances.
///
/// `q != 0`: `(mean(v^(q/2)))^(1/q)`; `q == 0`: `exp(mean(ln v) / 2)`.
/// Zero variances are left out of the average. For `q <= 0` the result is
/// an error when more than 10% of the windows are zero.
pub fn fluctuation(variances: &[f64], q: f64) -> Result<f64> {
    LogVariances::new(variances)?.moment(q)
}

/// `F(q, tau)` for every grid cell. Cells whose moment cannot be formed are
/// marked invalid; the call fails only if a whole tau column is invalid.
pub fn fluctuation_grid(
    x: &TimeSeries,
    q_grid: &QGrid,
    tau_grid: &TauGrid,
    cfg: &DetrendConfig,
) -> Result<FluctuationGrid> {
    tau_grid.validate_for(x.len(), cfg)?;
    let y = analysis_profile(x.values(), cfg);

    let columns: Vec<Vec<f64>> = tau_grid
        .values()
        .par_iter()
        .map(|&tau| {
            let basis = poly_basis(tau, cfg.poly_order);
            let variances = variances_of_profile(&y, tau, &basis);
            let column: Vec<f64> = match LogVariances::new(&variances) {
                Ok(lv) => q_grid
                    .values()
                    .iter()
                    .map(|q| lv.moment(*q).unwrap_or(f64::NAN))
                    .collect(),
                Err(_) => vec![f64::NAN; q_grid.len()],
            };
            if column.iter().all(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidTauRow { tau });
            }
            Ok(column)
        })
        .collect::<Result<_>>()?;

    let nt = tau_grid.len();
    let mut values = vec![f64::NAN; q_grid.len() * nt];
    for (ti, column) in columns.iter().enumerate() {
        for (qi, v) in column.iter().enumerate() {
            values[qi * nt + ti] = *v;
        }
    }
    FluctuationGrid::from_values(q_grid.clone(), tau_grid.clone(), values)
}

fn fit_log_log(taus: &[usize], values: &[f64]) -> LineFit {
    let lx: Vec<f64> = taus.iter().map(|t| (*t as f64).ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    numeric::ols(&lx, &ly)
}

fn collect_points(
    grid: &FluctuationGrid,
    indices: &[usize],
    f: impl Fn(usize) -> Option<f64>,
) -> (Vec<usize>, Vec<f64>) {
    indices
        .iter()
        .filter_map(|&ti| f(ti).map(|v| (grid.tau_grid.values()[ti], v)))
        .unzip()
}

/// Per-q OLS slope of `ln F(q, tau)` on `ln tau` over the valid cells with
/// `tau` in the inclusive `fit_range`.
pub fn fit_profile(grid: &FluctuationGrid, fit_range: (usize, usize)) -> Result<HurstProfile> {
    let indices = grid.tau_indices_in(fit_range);
    let mut h = Vec::with_capacity(grid.q_grid.len());
    let mut stderr = Vec::with_capacity(grid.q_grid.len());
    for (qi, &q) in grid.q_grid.values().iter().enumerate() {
        let (taus, vals) = collect_points(grid, &indices, |ti| grid.get(qi, ti));
        if taus.len() < MIN_FIT_POINTS {
            return Err(Error::InsufficientFitPoints {
                q,
                have: taus.len(),
                needed: MIN_FIT_POINTS,
            });
        }
        let fit = fit_log_log(&taus, &vals);
        h.push(fit.slope);
        stderr.push(fit.slope_stderr);
    }
    HurstProfile::new(grid.q_grid.clone(), h, stderr, fit_range)
}

/// `F(q,tau) / sigma_tau` for `q <= 2` and `sigma_tau / F(q,tau)` for
/// `q > 2`, where `sigma_tau = F(2, tau)`.
pub fn normalized_fluctuation(grid: &FluctuationGrid) -> Result<FluctuationGrid> {
    let i2 = grid.q_grid.index_of(2.0).ok_or(Error::MissingVarianceColumn)?;
    let (nq, nt) = grid.shape();
    let mut out = vec![f64::NAN; nq * nt];
    for ti in 0..nt {
        let sigma = grid.get(i2, ti).ok_or(Error::MissingVarianceColumn)?;
        for (qi, &q) in grid.q_grid.values().iter().enumerate() {
            if let Some(f) = grid.get(qi, ti) {
                out[qi * nt + ti] = if q <= 2.0 { f / sigma } else { sigma / f };
            }
        }
    }
    FluctuationGrid::from_values(grid.q_grid.clone(), grid.tau_grid.clone(), out)
}

/// Scaling exponent of the geometric mean of the squared normalized
/// fluctuations over the whole q grid.
///
/// The mean is trapezoid-weighted in log space,
/// `ln G(tau) = (1/2Q) * integral of ln F~^2(q, tau) dq`, which is the
/// continuum limit of the equally weighted product. Only tau columns where
/// every q cell is valid contribute to the fit.
pub fn gmfdfa_exponent(grid: &FluctuationGrid, fit_range: (usize, usize)) -> Result<f64> {
    Ok(gmfdfa_fit(grid, fit_range)?.slope)
}

pub fn gmfdfa_fit(grid: &FluctuationGrid, fit_range: (usize, usize)) -> Result<LineFit> {
    let norm = normalized_fluctuation(grid)?;
    let qs = grid.q_grid.values();
    let span = qs[qs.len() - 1] - qs[0];
    let indices = grid.tau_indices_in(fit_range);
    let (taus, vals) = collect_points(grid, &indices, |ti| {
        let logs: Option<Vec<f64>> = (0..qs.len())
            .map(|qi| norm.get(qi, ti).map(|f| 2.0 * f.ln()))
            .collect();
        logs.map(|l| (numeric::trapezoid(qs, &l) / span).exp())
    });
    if taus.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientFitPoints {
            q: f64::NAN,
            have: taus.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    Ok(fit_log_log(&taus, &vals))
}

/// Slope of `ln[F(-Q, tau) / F(Q, tau)]` against `ln tau`, over tau values
/// where both edge cells are valid.
pub fn ratio_exponent(grid: &FluctuationGrid, max_q: f64, fit_range: (usize, usize)) -> Result<f64> {
    let lo = grid
        .q_grid
        .index_of(-max_q)
        .ok_or(Error::InvalidEdgeColumn(-max_q))?;
    let hi = grid
        .q_grid
        .index_of(max_q)
        .ok_or(Error::InvalidEdgeColumn(max_q))?;
    let indices = grid.tau_indices_in(fit_range);
    let (taus, vals) = collect_points(grid, &indices, |ti| {
        Some(grid.get(lo, ti)? / grid.get(hi, ti)?)
    });
    if taus.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidEdgeColumn(max_q));
    }
    Ok(fit_log_log(&taus, &vals).slope)
}

/// Everything needed to turn a series into a fitted profile. Real data and
/// its surrogates must share one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub q_grid: QGrid,
    pub tau_grid: TauGrid,
    pub detrend: DetrendConfig,
    pub fit_range: (usize, usize),
}

impl AnalysisParams {
    /// Default tau grid for `len` samples, fitted over its full range.
    pub fn for_length(len: usize, q_grid: QGrid, detrend: DetrendConfig) -> Result<Self> {
        let tau_grid = TauGrid::default_for(len, &detrend)?;
        let fit_range = tau_grid.full_range();
        Ok(Self {
            q_grid,
            tau_grid,
            detrend,
            fit_range,
        })
    }
}

/// Fluctuation grid plus fitted profile.
pub fn hurst_profile(x: &TimeSeries, params: &AnalysisParams) -> Result<(FluctuationGrid, HurstProfile)> {
    let grid = fluctuation_grid(x, &params.q_grid, &params.tau_grid, &params.detrend)?;
    let profile = fit_profile(&grid, params.fit_range)?;
    Ok((grid, profile))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::TransformKind;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(v: Vec<f64>) -> TimeSeries {
        TimeSeries::new(v, TransformKind::Increments, "t").unwrap()
    }

    fn no_integration(order: usize) -> DetrendConfig {
        DetrendConfig::new(order, false).unwrap()
    }

    #[test]
    fn q_grid_shape() {
        let g = QGrid::default();
        assert_eq!(g.len(), 121);
        assert_eq!(g.values()[0], -15.0);
        assert_eq!(g.values()[120], 15.0);
        assert_eq!(g.values().iter().filter(|q| **q == 0.0).count(), 1);
        assert_eq!(g.values().iter().filter(|q| **q == 2.0).count(), 1);
        assert!(g.values().windows(2).all(|w| w[1] > w[0]));
        assert!(QGrid::new(15.0, 0.4).is_err());
        assert!(QGrid::new(1.0, 0.25).is_err());
    }

    #[test]
    fn tau_grid_defaults() {
        let g = TauGrid::default_for(1 << 16, &DetrendConfig::default()).unwrap();
        assert_eq!(g.values()[0], 10);
        assert_eq!(*g.values().last().unwrap(), 1 << 14);
        assert!(g.len() >= 18 && g.len() <= 20);
        assert!(TauGrid::new(vec![5, 5]).is_err());
        assert!(TauGrid::default_for(30, &DetrendConfig::default()).is_err());
        let bad = TauGrid::new(vec![3, 8]).unwrap();
        assert!(matches!(
            bad.validate_for(100, &DetrendConfig::default()),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn linear_and_quadratic_windows_detrend_to_zero() {
        let x = series((0..64).map(|i| 3.0 - 0.25 * i as f64).collect());
        let v = segment_variances(&x, 8, &no_integration(1)).unwrap();
        assert_eq!(v.len(), 16);
        assert!(v.iter().all(|v| *v == 0.0));

        let x = series((0..40).map(|i| 0.5 * (i * i) as f64 - 2.0 * i as f64 + 7.0).collect());
        let v = segment_variances(&x, 10, &no_integration(2)).unwrap();
        assert!(v.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn segment_errors() {
        let x = series(vec![1.0; 20]);
        assert!(matches!(
            segment_variances(&x, 3, &DetrendConfig::default()),
            Err(Error::WindowTooSmall { .. })
        ));
        assert!(matches!(
            segment_variances(&x, 11, &DetrendConfig::default()),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    // Oracle: normal equations on raw monomials of the window index.
    fn normal_equations_variance(w: &[f64], order: usize) -> f64 {
        let n = order + 1;
        let mut a = vec![vec![0.0; n + 1]; n];
        for (j, y) in w.iter().enumerate() {
            let t = j as f64;
            for r in 0..n {
                for c in 0..n {
                    a[r][c] += t.powi((r + c) as i32);
                }
                a[r][n] += t.powi(r as i32) * y;
            }
        }
        // Gaussian elimination with partial pivoting
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        let coef: Vec<f64> = (0..n).map(|r| a[r][n] / a[r][r]).collect();
        w.iter()
            .enumerate()
            .map(|(j, y)| {
                let fit: f64 = coef.iter().enumerate().map(|(k, c)| c * (j as f64).powi(k as i32)).sum();
                (y - fit).powi(2)
            })
            .sum::<f64>()
            / w.len() as f64
    }

    #[test]
    fn white_noise_variances_match_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..64).map(|_| rng.random::<f64>() - 0.5).collect();
        let cfg = DetrendConfig::default();
        let v = segment_variances(&series(x.clone()), 8, &cfg).unwrap();
        assert_eq!(v.len(), 16);

        let mean = x.iter().sum::<f64>() / 64.0;
        let mut acc = 0.0;
        let y: Vec<f64> = x.iter().map(|v| { acc += v - mean; acc }).collect();
        for k in 0..8 {
            let expect = normal_equations_variance(&y[8 * k..8 * k + 8], 2);
            assert_relative_eq!(v[k], expect, max_relative = 1e-9);
            // 64 = 8 * 8, so the backward windows retrace the same ones reversed
            assert_relative_eq!(v[8 + k], normal_equations_variance(&y[64 - 8 * (k + 1)..64 - 8 * k], 2), max_relative = 1e-9);
        }
    }

    #[test]
    fn backward_windows_cover_the_tail() {
        // length 70, tau 8: forward windows stop at 64, backward start at 6
        let mut v: Vec<f64> = (0..70).map(|i| (i as f64 * 0.37).sin()).collect();
        v[69] = 50.0;
        let var = segment_variances(&series(v), 8, &no_integration(1)).unwrap();
        assert_eq!(var.len(), 16);
        let fwd_max = var[..8].iter().cloned().fold(0.0, f64::max);
        assert!(var[8] > 10.0 * fwd_max);
    }

    #[test]
    fn constant_variances_give_sqrt() {
        for q in [-15.0, -1.0, 0.0, 0.5, 2.0, 15.0] {
            assert_relative_eq!(fluctuation(&[4.0; 10], q).unwrap(), 2.0, max_relative = 1e-12);
        }
        assert_relative_eq!(fluctuation(&[1.0, 4.0], 2.0).unwrap(), 2.5f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn fluctuation_errors() {
        assert!(matches!(fluctuation(&[0.0, 0.0], 2.0), Err(Error::AllZeroVariances)));
        assert!(matches!(fluctuation(&[1.0, -1.0], 2.0), Err(Error::NegativeVarianceInput(_))));
        let mut v = vec![1.0; 10];
        v[0] = 0.0;
        assert!(fluctuation(&v, -2.0).is_ok());
        v[1] = 0.0;
        assert!(matches!(
            fluctuation(&v, -2.0),
            Err(Error::ExcessiveZeroVariances { excluded: 2, total: 10 })
        ));
        assert!(fluctuation(&v, 2.0).is_ok());
    }

    #[test]
    fn fluctuation_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..20).map(|_| 0.1 + 2.0 * rng.random::<f64>()).collect();
        for q in [-15.0, -1.0, 1.0, 2.0, 15.0] {
            let direct = (v.iter().map(|x| x.powf(q / 2.0)).sum::<f64>() / 20.0).powf(1.0 / q);
            assert_relative_eq!(fluctuation(&v, q).unwrap(), direct, max_relative = 1e-12);
        }
        let direct0 = (v.iter().map(|x| x.ln()).sum::<f64>() / 40.0).exp();
        let f0 = fluctuation(&v, 0.0).unwrap();
        assert_relative_eq!(f0, direct0, max_relative = 1e-12);
        for q in [1e-6, -1e-6] {
            assert!((fluctuation(&v, q).unwrap() / f0 - 1.0).abs() < 1e-4);
        }
    }

    fn small_grid() -> (TimeSeries, FluctuationGrid) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = series((0..512).map(|_| rng.random::<f64>() - 0.5).collect());
        let q = QGrid::new(4.0, 0.5).unwrap();
        let t = TauGrid::new(vec![8, 16, 32, 64, 128]).unwrap();
        let g = fluctuation_grid(&x, &q, &t, &DetrendConfig::default()).unwrap();
        (x, g)
    }

    #[test]
    fn grid_cells_match_manual_composition() {
        let (x, g) = small_grid();
        assert_eq!(g.shape(), (17, 5));
        let cfg = DetrendConfig::default();
        for (qi, ti) in [(0, 0), (8, 3), (12, 4), (16, 1)] {
            let tau = g.tau_grid().values()[ti];
            let q = g.q_grid().values()[qi];
            let v = segment_variances(&x, tau, &cfg).unwrap();
            assert_relative_eq!(g.get(qi, ti).unwrap(), fluctuation(&v, q).unwrap(), max_relative = 1e-13);
        }
        // q = 2 column is plain DFA: sqrt of mean variance
        let i2 = g.q_grid().index_of(2.0).unwrap();
        for (ti, &tau) in g.tau_grid().values().iter().enumerate() {
            let v = segment_variances(&x, tau, &cfg).unwrap();
            let dfa = (v.iter().sum::<f64>() / v.len() as f64).sqrt();
            assert_relative_eq!(g.get(i2, ti).unwrap(), dfa, max_relative = 1e-13);
        }
    }

    fn power_grid(q_grid: QGrid, h: impl Fn(f64) -> f64) -> FluctuationGrid {
        let taus = TauGrid::new(vec![10, 20, 40, 80, 160, 320]).unwrap();
        let mut values = Vec::new();
        for &q in q_grid.values() {
            for &t in taus.values() {
                values.push((t as f64).powf(h(q)) * (1.0 + 0.1 * q.abs()));
            }
        }
        FluctuationGrid::from_values(q_grid, taus, values).unwrap()
    }

    #[test]
    fn exact_power_law_profile() {
        let g = power_grid(QGrid::new(4.0, 1.0).unwrap(), |_| 0.7);
        let p = fit_profile(&g, g.tau_grid().full_range()).unwrap();
        for (h, s) in p.h.iter().zip(&p.stderr) {
            assert_relative_eq!(*h, 0.7, epsilon = 1e-12);
            assert!(*s < 1e-10);
        }
        assert!(gmfdfa_exponent(&g, (10, 320)).unwrap().abs() < 1e-12);
        assert!(ratio_exponent(&g, 4.0, (10, 320)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn insufficient_points() {
        let g = power_grid(QGrid::new(4.0, 1.0).unwrap(), |_| 0.7);
        assert!(matches!(
            fit_profile(&g, (10, 40)),
            Err(Error::InsufficientFitPoints { have: 3, .. })
        ));
        assert!(matches!(ratio_exponent(&g, 3.5, (10, 320)), Err(Error::InvalidEdgeColumn(_))));
    }

    #[test]
    fn normalized_grid() {
        let (_, g) = small_grid();
        let n = normalized_fluctuation(&g).unwrap();
        let i2 = g.q_grid().index_of(2.0).unwrap();
        for ti in 0..g.shape().1 {
            assert_relative_eq!(n.get(i2, ti).unwrap(), 1.0, epsilon = 1e-15);
            let sigma = g.get(i2, ti).unwrap();
            for (qi, &q) in g.q_grid().values().iter().enumerate() {
                let f = g.get(qi, ti).unwrap();
                let expect = if q <= 2.0 { f / sigma } else { sigma / f };
                assert_eq!(n.get(qi, ti).unwrap(), expect);
                assert!(expect > 0.0);
            }
        }
    }

    #[test]
    fn gmfdfa_of_linear_profile_matches_integral() {
        // h(q) = 0.9 - 0.02 q on [-15, 15]
        let q_grid = QGrid::default();
        let g = power_grid(q_grid.clone(), |q| 0.9 - 0.02 * q);
        // oracle: fine midpoint rule of (1/Q) * integral |h(q) - h(2)| dq
        let n = 300_000;
        let dq = 30.0 / n as f64;
        let oracle: f64 = (0..n)
            .map(|k| {
                let q = -15.0 + (k as f64 + 0.5) * dq;
                (0.02 * (q - 2.0)).abs() * dq
            })
            .sum::<f64>()
            / 15.0;
        assert_relative_eq!(oracle, 0.02 * (225.0 + 4.0) / 15.0, epsilon = 1e-8);
        let e = gmfdfa_exponent(&g, g.tau_grid().full_range()).unwrap();
        assert!((e - oracle).abs() < 1e-9, "{e} vs {oracle}");
    }

    #[test]
    fn ratio_exponent_is_edge_difference() {
        let (_, g) = small_grid();
        let range = g.tau_grid().full_range();
        let p = fit_profile(&g, range).unwrap();
        let r = ratio_exponent(&g, 4.0, range).unwrap();
        assert!((r - (p.h_at(-4.0).unwrap() - p.h_at(4.0).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn invalid_cells_are_flagged() {
        // piecewise-linear profile: most windows detrend exactly
        let mut v: Vec<f64> = (0..400).map(|i| i as f64).collect();
        v[5] += 1.0;
        let x = series(v);
        let q = QGrid::new(2.0, 1.0).unwrap();
        let t = TauGrid::new(vec![10, 20, 50]).unwrap();
        let g = fluctuation_grid(&x, &q, &t, &no_integration(1)).unwrap();
        let i0 = q.index_of(-2.0).unwrap();
        let i2 = q.index_of(2.0).unwrap();
        assert!(!g.is_valid(i0, 0));
        assert!(g.is_valid(i2, 0));
    }

    #[test]
    fn generalized_mean_monotone_in_q() {
        let (_, g) = small_grid();
        for ti in 0..g.shape().1 {
            let col: Vec<f64> = (0..g.shape().0).map(|qi| g.get(qi, ti).unwrap()).collect();
            assert!(col.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
        }
    }
}
