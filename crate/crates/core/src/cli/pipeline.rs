//! End-to-end analysis: load prices, build every requested transform, fit
//! profiles, estimate bias ribbons and collect the measures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{estimate_ribbon, SurrogateConfig, SurrogateMethod};
use crate::cascade::{analytic_spread, generate, CascadeParams};
use crate::error::{Error, Result};
use crate::measures::{build_report, delta_h, delta_h2, BiasRibbon, Flag, MultifractalReport, PERSISTENCE_WARNING};
use crate::mfdfa::{
    gmfdfa_exponent, hurst_profile, ratio_exponent, AnalysisParams, DetrendConfig, HurstProfile, QGrid, TauGrid,
    DEFAULT_MIN_TAU,
};
use crate::series::{log_returns, increments, prices_from_increments, transform, TimeSeries, TransformKind};

use super::config::AnalysisConfig;
use super::ingest::ingest_csv;

/// Prices and their increments. Kept together so that a generated cascade
/// is analysed from its exact values rather than re-differenced prices.
#[derive(Debug, Clone)]
pub struct PriceSeries {
    pub prices: TimeSeries,
    pub increments: TimeSeries,
}

impl PriceSeries {
    pub fn from_prices(prices: TimeSeries) -> Result<Self> {
        let increments = increments(&prices)?;
        Ok(Self { prices, increments })
    }

    /// Prices `start + cumsum(dx)`.
    pub fn from_increments(dx: TimeSeries, start: f64) -> Result<Self> {
        let prices = prices_from_increments(&dx, start)?;
        Ok(Self {
            prices,
            increments: dx,
        })
    }

    fn base(&self, kind: TransformKind) -> Result<TimeSeries> {
        match kind.base() {
            TransformKind::Returns => log_returns(&self.prices),
            _ => Ok(self.increments.clone()),
        }
    }
}

/// Result for one transform of the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformResult {
    pub transform: TransformKind,
    pub series_length: usize,
    pub params: AnalysisParams,
    pub report: MultifractalReport,
    /// Slope of the q-averaged normalized fluctuation.
    pub gmfdfa_exponent: Option<f64>,
    /// Slope of `F(-Q) / F(Q)`.
    pub ratio_exponent: Option<f64>,
    pub profile: HurstProfile,
    pub ribbon: Option<BiasRibbon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub source_id: String,
    pub input_length: usize,
    pub seed: u64,
    pub config: AnalysisConfig,
}

/// Everything a run produces. Serializes to `report.json`; contains no
/// timing so that equal inputs give byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub metadata: RunMetadata,
    pub results: Vec<TransformResult>,
}

impl ReportBundle {
    pub fn result(&self, kind: TransformKind) -> Option<&TransformResult> {
        self.results.iter().find(|r| r.transform == kind)
    }
}

/// Loads the CSV or generates the cascade named by the config.
pub fn load_source(cfg: &AnalysisConfig) -> Result<PriceSeries> {
    match (&cfg.input, cfg.cascade_a) {
        (Some(path), None) => PriceSeries::from_prices(ingest_csv(path, &cfg.csv_options())?),
        (None, Some(a)) => {
            let dx = generate(&CascadeParams::new(a, cfg.cascade_depth, cfg.seed)?)?;
            PriceSeries::from_increments(dx, 1.0)
        }
        _ => Err(Error::Config("exactly one of input and cascade_a must be set".into())),
    }
}

/// Tau grid and fit range for a series of `len` samples.
pub fn params_for(len: usize, cfg: &AnalysisConfig) -> Result<AnalysisParams> {
    let q_grid = cfg.q_grid()?;
    let detrend = cfg.detrend()?;
    let min = cfg.tau_min.unwrap_or(DEFAULT_MIN_TAU.max(detrend.min_tau()));
    let max = cfg.tau_max.unwrap_or(len / 4);
    if cfg.tau_max.is_none() && max < min {
        return Err(Error::SeriesTooShort {
            needed: 4 * min,
            got: len,
        });
    }
    let tau_grid = TauGrid::log_spaced(min, max, cfg.tau_count)?;
    tau_grid.validate_for(len, &detrend)?;
    let (lo, hi) = tau_grid.full_range();
    let fit_range = (cfg.fit_min.unwrap_or(lo), cfg.fit_max.unwrap_or(hi));
    Ok(AnalysisParams {
        q_grid,
        tau_grid,
        detrend,
        fit_range,
    })
}

// Independent surrogate seed per transform.
fn surrogate_seed(seed: u64, kind: TransformKind) -> u64 {
    let k = TransformKind::ANALYSED.iter().position(|t| *t == kind).unwrap_or(7) as u64;
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k + 1))
}

/// Analyses one transform of `data`.
pub fn analyze_transform(data: &PriceSeries, kind: TransformKind, cfg: &AnalysisConfig) -> Result<TransformResult> {
    let name = kind.as_str();
    let window = kind.needs_window().then(|| cfg.volatility_window()).transpose()?;
    let base = data.base(kind).map_err(|e| e.at_stage(name, "transform"))?;
    let series = transform(&base, kind, window).map_err(|e| e.at_stage(name, "transform"))?;
    let params = params_for(series.len(), cfg).map_err(|e| e.at_stage(name, "grid"))?;
    let (grid, profile) = hurst_profile(&series, &params).map_err(|e| e.at_stage(name, "mfdfa"))?;

    let ribbon = if cfg.replicas > 0 {
        let mut sc = SurrogateConfig::new(cfg.replicas, cfg.surrogate, kind, surrogate_seed(cfg.seed, kind));
        sc.window = window;
        sc.confidence = cfg.confidence;
        sc.envelope = cfg.envelope;
        Some(estimate_ribbon(&base, &sc, &params).map_err(|e| e.at_stage(name, "bias"))?)
    } else {
        None
    };

    let max_q = params.q_grid.max_q();
    let mut report = build_report(&profile, ribbon.as_ref(), max_q).map_err(|e| e.at_stage(name, "measures"))?;
    if ribbon.is_some() && cfg.surrogate != SurrogateMethod::PhaseRandomized && report.hurst > PERSISTENCE_WARNING {
        report.flags.insert(Flag::PersistentSignal);
    }
    Ok(TransformResult {
        transform: kind,
        series_length: series.len(),
        gmfdfa_exponent: gmfdfa_exponent(&grid, params.fit_range).ok(),
        ratio_exponent: ratio_exponent(&grid, max_q, params.fit_range).ok(),
        params,
        report,
        profile,
        ribbon,
    })
}

/// Runs every configured transform on already loaded data.
pub fn analyze_prices(data: &PriceSeries, cfg: &AnalysisConfig) -> Result<ReportBundle> {
    cfg.q_grid()?;
    let results = cfg
        .transforms
        .iter()
        .map(|kind| analyze_transform(data, *kind, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReportBundle {
        metadata: RunMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            source_id: data.prices.source_id().to_string(),
            input_length: data.prices.len(),
            seed: cfg.seed,
            config: cfg.clone(),
        },
        results,
    })
}

pub fn run_analysis(cfg: &AnalysisConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let data = load_source(cfg)?;
    analyze_prices(&data, cfg)
}

/// One cascade parameter of a sweep: theory plus medians over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub a: f64,
    pub delta_h_theory: f64,
    pub delta_h: f64,
    pub delta_h2: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub a_values: Vec<f64>,
    pub depth: u32,
    pub seeds: usize,
    pub base_seed: u64,
    pub q_grid: QGrid,
    pub detrend: DetrendConfig,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `Δh` and `Δ_h^(2)` of cascade increments against the closed-form spread.
pub fn cascade_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.seeds == 0 || cfg.a_values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one a value and one seed".into()));
    }
    let max_q = cfg.q_grid.max_q();
    let len = 1usize << cfg.depth;
    let params = AnalysisParams::for_length(len, cfg.q_grid.clone(), cfg.detrend)?;
    cfg.a_values
        .iter()
        .map(|&a| {
            let runs = (0..cfg.seeds as u64)
                .into_par_iter()
                .map(|s| {
                    let x = generate(&CascadeParams::new(a, cfg.depth, cfg.base_seed.wrapping_add(s))?)?;
                    let (_, p) = hurst_profile(&x, &params)?;
                    Ok((delta_h(&p, max_q)?, delta_h2(&p, max_q)?))
                })
                .collect::<Result<Vec<(f64, f64)>>>()?;
            Ok(SweepRow {
                a,
                delta_h_theory: analytic_spread(a, max_q)?,
                delta_h: median(runs.iter().map(|r| r.0).collect()),
                delta_h2: median(runs.iter().map(|r| r.1).collect()),
                seeds: cfg.seeds,
            })
        })
        .collect()
}
