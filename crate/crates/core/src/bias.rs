//! Monte-Carlo estimate of the multifractal bias ribbon.
//!
//! Each replica replaces the base series (increments or returns) by a
//! surrogate, applies the same transform as the real data, and runs the full
//! MFDFA fit. The ribbon is built from the replica profiles either as a
//! per-q central interval or as a band that holds a fraction `c` of whole
//! profiles (the default).
//!
//! Phase randomization is the default null: it keeps the power spectrum, so
//! the ribbon sits around the data's own `h(2)` and only nonlinear structure
//! is tested. Shuffling and Gaussian draws also destroy linear correlations.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::measures::{BiasRibbon, DEFAULT_CONFIDENCE};
use crate::mfdfa::{hurst_profile, AnalysisParams, HurstProfile};
use crate::numeric::quantile_sorted;
use crate::series::{transform, TimeSeries, TransformKind, VolatilityWindow};

pub const MIN_REPLICAS: usize = 20;
pub const DEFAULT_REPLICAS: usize = 100;
/// Largest tolerated fraction of failed replicas.
pub const MAX_FAILED_FRACTION: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateMethod {
    /// Random permutation: keeps the value distribution, destroys ordering.
    Shuffle,
    /// i.i.d. normal draws with the sample mean and variance.
    GaussianMatched,
    /// Fourier amplitudes kept, phases drawn uniformly: keeps the power
    /// spectrum (and so the linear correlations) of the data.
    PhaseRandomized,
}

impl SurrogateMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SurrogateMethod::Shuffle => "shuffle",
            SurrogateMethod::GaussianMatched => "gaussian_matched",
            SurrogateMethod::PhaseRandomized => "phase_randomized",
        }
    }
}

impl fmt::Display for SurrogateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SurrogateMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "shuffle" => Ok(SurrogateMethod::Shuffle),
            "gaussian_matched" | "gaussian" => Ok(SurrogateMethod::GaussianMatched),
            "phase_randomized" | "phase" => Ok(SurrogateMethod::PhaseRandomized),
            other => Err(Error::Config(format!("unknown surrogate method '{other}'"))),
        }
    }
}

/// How replica profiles are turned into a ribbon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    /// Per-q empirical `(1-c)/2` and `(1+c)/2` quantiles.
    Pointwise,
    /// The pointwise band scaled about the per-q median until a fraction
    /// `c` of whole replica profiles (conformal rank) lies inside it.
    Simultaneous,
}

impl Envelope {
    pub fn as_str(self) -> &'static str {
        match self {
            Envelope::Pointwise => "pointwise",
            Envelope::Simultaneous => "simultaneous",
        }
    }
}

impl FromStr for Envelope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pointwise" => Ok(Envelope::Pointwise),
            "simultaneous" => Ok(Envelope::Simultaneous),
            other => Err(Error::Config(format!("unknown envelope '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub n_replicas: usize,
    pub method: SurrogateMethod,
    /// Applied to each surrogate before analysis.
    pub transform_kind: TransformKind,
    pub window: Option<VolatilityWindow>,
    pub confidence: f64,
    pub envelope: Envelope,
    pub seed: u64,
}

impl SurrogateConfig {
    pub fn new(n_replicas: usize, method: SurrogateMethod, transform_kind: TransformKind, seed: u64) -> Self {
        Self {
            n_replicas,
            method,
            transform_kind,
            window: transform_kind.needs_window().then(VolatilityWindow::default),
            confidence: DEFAULT_CONFIDENCE,
            envelope: Envelope::Simultaneous,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_replicas < MIN_REPLICAS {
            return Err(Error::InvalidParameter(format!(
                "at least {MIN_REPLICAS} surrogate replicas required, got {}",
                self.n_replicas
            )));
        }
        if !(self.confidence > 0.5 && self.confidence < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence must be in (0.5, 1), got {}",
                self.confidence
            )));
        }
        if self.transform_kind.needs_window() && self.window.is_none() {
            return Err(Error::MissingWindow);
        }
        Ok(())
    }
}

/// RNG for replica `index` of a run seeded with `seed`; independent of the
/// order in which replicas are evaluated.
pub fn replica_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn surrogate_values(x: &[f64], method: SurrogateMethod, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match method {
        SurrogateMethod::Shuffle => {
            let mut v = x.to_vec();
            v.shuffle(rng);
            v
        }
        SurrogateMethod::GaussianMatched => {
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            match Normal::new(mean, sd) {
                Ok(normal) => (0..x.len()).map(|_| normal.sample(rng)).collect(),
                Err(_) => vec![mean; x.len()],
            }
        }
        SurrogateMethod::PhaseRandomized => phase_randomize(x, rng),
    }
}

fn phase_randomize(x: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    // bins 1..=(n-1)/2 get random phases, mirrored bins their conjugates;
    // the mean and (even n) Nyquist bins stay real
    for k in 1..=(n - 1) / 2 {
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        let z = Complex::from_polar(buf[k].norm(), phase);
        buf[k] = z;
        buf[n - k] = z.conj();
    }
    if n % 2 == 0 {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        buf[n / 2] = Complex::new(sign * buf[n / 2].norm(), 0.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

pub fn make_surrogate(x: &TimeSeries, method: SurrogateMethod, seed: u64) -> Result<TimeSeries> {
    if x.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            got: x.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.with_values(surrogate_values(x.values(), method, &mut rng))
}

/// Profiles of every replica that analysed successfully, in replica order.
///
/// `base` is the series the transform is computed from: increments for the
/// increment family, log returns for the return family.
pub fn replica_profiles(
    base: &TimeSeries,
    cfg: &SurrogateConfig,
    params: &AnalysisParams,
) -> Result<Vec<HurstProfile>> {
    cfg.validate()?;
    if base.len() < 2 {
        return Err(Error::SeriesTooShort {
            needed: 2,
            got: base.len(),
        });
    }
    let results: Vec<Result<HurstProfile>> = (0..cfg.n_replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(cfg.seed, i as u64);
            let surrogate = base.with_values(surrogate_values(base.values(), cfg.method, &mut rng))?;
            let series = transform(&surrogate, cfg.transform_kind, cfg.window)?;
            Ok(hurst_profile(&series, params)?.1)
        })
        .collect();

    let total = results.len();
    let mut profiles = Vec::with_capacity(total);
    let mut last_error = None;
    for r in results {
        match r {
            Ok(p) => profiles.push(p),
            Err(e) => last_error = Some(e),
        }
    }
    let failed = total - profiles.len();
    if failed as f64 > MAX_FAILED_FRACTION * total as f64 {
        return Err(Error::TooManyFailedReplicas {
            failed,
            total,
            last: last_error.map(|e| e.to_string()).unwrap_or_default(),
        });
    }
    Ok(profiles)
}

/// Ribbon from replica profiles; see [`Envelope`].
pub fn ribbon_from_profiles(
    profiles: &[HurstProfile],
    confidence: f64,
    envelope: Envelope,
) -> Result<BiasRibbon> {
    let first = profiles.first().ok_or_else(|| {
        Error::InvalidParameter("cannot build a ribbon from zero replicas".into())
    })?;
    let q_grid = first.q_grid.clone();
    if profiles.iter().any(|p| p.q_grid != q_grid) {
        return Err(Error::GridMismatch);
    }
    let (p_lo, p_hi) = ((1.0 - confidence) / 2.0, (1.0 + confidence) / 2.0);
    let nq = q_grid.len();
    let mut lower = Vec::with_capacity(nq);
    let mut upper = Vec::with_capacity(nq);
    let mut median = Vec::with_capacity(nq);
    let mut column = Vec::with_capacity(profiles.len());
    for qi in 0..nq {
        column.clear();
        column.extend(profiles.iter().map(|p| p.h[qi]));
        column.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&column, p_lo));
        upper.push(quantile_sorted(&column, p_hi));
        median.push(quantile_sorted(&column, 0.5));
    }

    if envelope == Envelope::Simultaneous {
        let scale = simultaneous_scale(profiles, &median, &lower, &upper, confidence);
        for qi in 0..nq {
            lower[qi] = median[qi] - scale * (median[qi] - lower[qi]);
            upper[qi] = median[qi] + scale * (upper[qi] - median[qi]);
        }
    }
    BiasRibbon::new(q_grid, lower, upper, confidence)
}

// Smallest factor k such that the band median -/+ k * (pointwise
// half-widths) holds the ceil(c * (n + 1))-th ranked replica profile.
fn simultaneous_scale(
    profiles: &[HurstProfile],
    median: &[f64],
    lower: &[f64],
    upper: &[f64],
    confidence: f64,
) -> f64 {
    let tiny = f64::MIN_POSITIVE;
    let mut excess: Vec<f64> = profiles
        .iter()
        .map(|p| {
            p.h.iter()
                .enumerate()
                .map(|(qi, h)| {
                    let dev = h - median[qi];
                    if dev > 0.0 {
                        dev / (upper[qi] - median[qi]).max(tiny)
                    } else {
                        -dev / (median[qi] - lower[qi]).max(tiny)
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    excess.sort_by(f64::total_cmp);
    let n = excess.len();
    let rank = ((confidence * (n + 1) as f64).ceil() as usize).clamp(1, n);
    excess[rank - 1]
}

pub fn estimate_ribbon(
    base: &TimeSeries,
    cfg: &SurrogateConfig,
    params: &AnalysisParams,
) -> Result<BiasRibbon> {
    let profiles = replica_profiles(base, cfg, params)?;
    ribbon_from_profiles(&profiles, cfg.confidence, cfg.envelope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mfdfa::{DetrendConfig, QGrid};

    fn inc(v: &[f64]) -> TimeSeries {
        TimeSeries::new(v.to_vec(), TransformKind::Increments, "t").unwrap()
    }

    #[test]
    fn shuffle_preserves_multiset() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.731).sin()).collect();
        let s = make_surrogate(&inc(&x), SurrogateMethod::Shuffle, 5).unwrap();
        assert_ne!(s.values(), &x[..]);
        let mut a = s.into_values();
        let mut b = x.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
    }

    #[test]
    fn shuffle_of_two_values() {
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..64 {
            let s = make_surrogate(&inc(&[2.0, -1.0]), SurrogateMethod::Shuffle, seed).unwrap();
            seen.insert(format!("{:?}", s.values()));
        }
        let expect: std::collections::BTreeSet<String> =
            ["[2.0, -1.0]", "[-1.0, 2.0]"].iter().map(|s| s.to_string()).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn gaussian_surrogate_matches_moments() {
        let x: Vec<f64> = (0..4000).map(|i| 3.0 + (i as f64 * 0.37).sin()).collect();
        let s = make_surrogate(&inc(&x), SurrogateMethod::GaussianMatched, 9).unwrap();
        assert_eq!(s.len(), x.len());
        assert_eq!(s.label(), TransformKind::Increments);
        let m = s.values().iter().sum::<f64>() / 4000.0;
        assert!((m - 3.0).abs() < 0.05);
    }

    #[test]
    fn surrogate_errors() {
        assert!(matches!(
            make_surrogate(&inc(&[1.0]), SurrogateMethod::Shuffle, 0),
            Err(Error::SeriesTooShort { .. })
        ));
        let mut cfg = SurrogateConfig::new(10, SurrogateMethod::Shuffle, TransformKind::Increments, 0);
        assert!(cfg.validate().is_err());
        cfg.n_replicas = 20;
        cfg.confidence = 0.4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ribbon_is_ordered_and_deterministic() {
        let x: Vec<f64> = (0..2048).map(|i| ((i * 7919) % 104729) as f64 / 104729.0 - 0.5).collect();
        let base = inc(&x);
        let params = AnalysisParams::for_length(2048, QGrid::new(4.0, 0.5).unwrap(), DetrendConfig::default()).unwrap();
        let cfg = SurrogateConfig::new(20, SurrogateMethod::Shuffle, TransformKind::AbsIncrements, 17);
        let r1 = estimate_ribbon(&base, &cfg, &params).unwrap();
        let r2 = estimate_ribbon(&base, &cfg, &params).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.lower.iter().zip(&r1.upper).all(|(l, u)| l <= u));
    }

    #[test]
    fn replica_streams_differ() {
        use rand::Rng;
        let a: u64 = replica_rng(1, 0).random();
        let b: u64 = replica_rng(1, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, replica_rng(1, 0).random::<u64>());
    }

    #[test]
    fn too_many_failures() {
        // constant series: every replica has zero variance everywhere
        let base = inc(&[1.0; 512]);
        let params = AnalysisParams::for_length(512, QGrid::new(2.0, 1.0).unwrap(), DetrendConfig::default()).unwrap();
        let cfg = SurrogateConfig::new(20, SurrogateMethod::Shuffle, TransformKind::Increments, 0);
        assert!(matches!(
            estimate_ribbon(&base, &cfg, &params),
            Err(Error::TooManyFailedReplicas { failed: 20, total: 20, .. })
        ));
    }

    #[test]
    fn phase_randomization_keeps_spectrum() {
        let x: Vec<f64> = (0..257).map(|i| (i as f64 * 0.3).sin() + 0.2 * (i as f64 * 1.7).cos() + 1.5).collect();
        for n in [256, 257] {
            let s = make_surrogate(&inc(&x[..n]), SurrogateMethod::PhaseRandomized, 4).unwrap();
            assert_ne!(s.values(), &x[..n]);
            let amp = |v: &[f64]| {
                let mut buf: Vec<Complex<f64>> = v.iter().map(|t| Complex::new(*t, 0.0)).collect();
                FftPlanner::<f64>::new().plan_fft_forward(v.len()).process(&mut buf);
                buf.iter().map(|z| z.norm()).collect::<Vec<_>>()
            };
            for (a, b) in amp(&x[..n]).iter().zip(amp(s.values())) {
                assert!((a - b).abs() < 1e-9 * (1.0 + a));
            }
            let m0 = x[..n].iter().sum::<f64>() / n as f64;
            let m1 = s.values().iter().sum::<f64>() / n as f64;
            assert!((m0 - m1).abs() < 1e-12);
        }
    }

    #[test]
    fn simultaneous_band_contains_pointwise_band() {
        let x: Vec<f64> = (0..2048).map(|i| ((i * 7919) % 104729) as f64 / 104729.0 - 0.5).collect();
        let params = AnalysisParams::for_length(2048, QGrid::new(4.0, 0.5).unwrap(), DetrendConfig::default()).unwrap();
        let cfg = SurrogateConfig::new(40, SurrogateMethod::Shuffle, TransformKind::Increments, 2);
        let profiles = replica_profiles(&inc(&x), &cfg, &params).unwrap();
        let pw = ribbon_from_profiles(&profiles, 0.9, Envelope::Pointwise).unwrap();
        let sim = ribbon_from_profiles(&profiles, 0.9, Envelope::Simultaneous).unwrap();
        for qi in 0..pw.lower.len() {
            assert!(sim.lower[qi] <= pw.lower[qi] + 1e-15 && sim.upper[qi] >= pw.upper[qi] - 1e-15);
        }
        let inside = profiles
            .iter()
            .filter(|p| p.h.iter().enumerate().all(|(qi, h)| *h >= sim.lower[qi] - 1e-12 && *h <= sim.upper[qi] + 1e-12))
            .count();
        // conformal rank ceil(0.9 * 41) = 37
        assert!(inside >= 37, "{inside}");
    }
}
