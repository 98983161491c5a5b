use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use gmfdfa::bias::{estimate_ribbon as core_ribbon, Envelope, SurrogateConfig, SurrogateMethod};
use gmfdfa::cascade::{self, CascadeParams};
use gmfdfa::cli::{analyze_prices, run_analysis, AnalysisConfig, PriceSeries};
use gmfdfa::measures::{self, build_report};
use gmfdfa::mfdfa::{self as core_mfdfa, hurst_profile as core_profile};
use gmfdfa::{AnalysisParams, BiasRibbon, DetrendConfig, ErrorClass, HurstProfile, QGrid, TimeSeries, TransformKind, VolatilityWindow};

fn py_err(e: gmfdfa::Error) -> PyErr {
    match e.class() {
        ErrorClass::Numerical => PyArithmeticError::new_err(e.to_string()),
        ErrorClass::Config | ErrorClass::Data => PyValueError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for gmfdfa::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse<T: std::str::FromStr<Err = gmfdfa::Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

fn params(len: usize, max_q: f64, q_step: f64, detrend_order: usize, integrate: bool) -> PyResult<AnalysisParams> {
    let q = QGrid::new(max_q, q_step).py()?;
    let d = DetrendConfig::new(detrend_order, integrate).py()?;
    AnalysisParams::for_length(len, q, d).py()
}

fn series(values: Vec<f64>, kind: &str) -> PyResult<TimeSeries> {
    TimeSeries::new(values, parse(kind)?, "python").py()
}

/// Fitted generalized Hurst exponents on a symmetric q grid.
#[pyclass(name = "HurstProfile", module = "gmfdfa_py", frozen)]
#[derive(Clone)]
struct PyHurstProfile {
    inner: HurstProfile,
    gmfdfa_exponent: f64,
    ratio_exponent: f64,
}

#[pymethods]
impl PyHurstProfile {
    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.q_grid.values().to_vec()
    }

    #[getter]
    fn h(&self) -> Vec<f64> {
        self.inner.h.clone()
    }

    #[getter]
    fn stderr(&self) -> Vec<f64> {
        self.inner.stderr.clone()
    }

    #[getter]
    fn max_q(&self) -> f64 {
        self.inner.q_grid.max_q()
    }

    #[getter]
    fn fit_tau_range(&self) -> (usize, usize) {
        self.inner.fit_tau_range
    }

    /// Exponent of the geometric mean of the squared fluctuation ratios.
    #[getter]
    fn gmfdfa_exponent(&self) -> f64 {
        self.gmfdfa_exponent
    }

    #[getter]
    fn ratio_exponent(&self) -> f64 {
        self.ratio_exponent
    }

    fn h_at(&self, q: f64) -> Option<f64> {
        self.inner.h_at(q)
    }

    fn delta_h(&self) -> PyResult<f64> {
        measures::delta_h(&self.inner, self.inner.q_grid.max_q()).py()
    }

    fn delta_h2(&self) -> PyResult<f64> {
        measures::delta_h2(&self.inner, self.inner.q_grid.max_q()).py()
    }

    fn __len__(&self) -> usize {
        self.inner.h.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "HurstProfile(max_q={}, points={}, h2={:?})",
            self.inner.q_grid.max_q(),
            self.inner.h.len(),
            self.inner.h_at(2.0)
        )
    }
}

#[pyclass(name = "BiasRibbon", module = "gmfdfa_py", frozen)]
#[derive(Clone)]
struct PyBiasRibbon {
    inner: BiasRibbon,
}

#[pymethods]
impl PyBiasRibbon {
    #[getter]
    fn q(&self) -> Vec<f64> {
        self.inner.q_grid.values().to_vec()
    }

    #[getter]
    fn lower(&self) -> Vec<f64> {
        self.inner.lower.clone()
    }

    #[getter]
    fn upper(&self) -> Vec<f64> {
        self.inner.upper.clone()
    }

    #[getter]
    fn confidence(&self) -> f64 {
        self.inner.confidence
    }

    fn __repr__(&self) -> String {
        format!("BiasRibbon(points={}, confidence={})", self.inner.lower.len(), self.inner.confidence)
    }
}

#[pyclass(name = "Report", module = "gmfdfa_py", frozen, get_all)]
#[derive(Clone)]
struct PyReport {
    hurst: f64,
    delta_h_obs: f64,
    delta_h_b: Option<f64>,
    delta_h_unb: Option<f64>,
    delta_h2: f64,
    delta_h: Option<f64>,
    flags: Vec<String>,
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        let dh = self.delta_h.map_or("None".to_string(), |v| format!("{v:.4}"));
        format!(
            "Report(hurst={:.4}, delta_h_obs={:.4}, delta_h2={:.4}, delta_h={dh}, flags={:?})",
            self.hurst, self.delta_h_obs, self.delta_h2, self.flags
        )
    }
}

#[pyfunction]
fn analytic_h(a: f64, q: f64) -> PyResult<f64> {
    cascade::analytic_h(a, q).py()
}

#[pyfunction]
#[pyo3(signature = (a, max_q = 15.0))]
fn analytic_spread(a: f64, max_q: f64) -> PyResult<f64> {
    cascade::analytic_spread(a, max_q).py()
}

/// Increments of a randomly ordered binomial cascade of length `2**depth`.
#[pyfunction]
#[pyo3(signature = (a, depth = 16, seed = 0))]
fn binomial_cascade(a: f64, depth: u32, seed: u64) -> PyResult<Vec<f64>> {
    let p = CascadeParams::new(a, depth, seed).py()?;
    Ok(cascade::generate(&p).py()?.into_values())
}

#[pyfunction]
#[pyo3(signature = (values, max_q = 15.0, q_step = 0.25, detrend_order = 2, integrate = true, kind = "increments"))]
fn hurst_profile(
    values: Vec<f64>,
    max_q: f64,
    q_step: f64,
    detrend_order: usize,
    integrate: bool,
    kind: &str,
) -> PyResult<PyHurstProfile> {
    let x = series(values, kind)?;
    let p = params(x.len(), max_q, q_step, detrend_order, integrate)?;
    let (grid, inner) = core_profile(&x, &p).py()?;
    Ok(PyHurstProfile {
        gmfdfa_exponent: core_mfdfa::gmfdfa_exponent(&grid, p.fit_range).py()?,
        ratio_exponent: core_mfdfa::ratio_exponent(&grid, max_q, p.fit_range).py()?,
        inner,
    })
}

/// Surrogate ribbon for `transform` of the increment series `values`.
#[pyfunction]
#[pyo3(signature = (
    values,
    transform = "increments",
    replicas = 100,
    method = "phase_randomized",
    envelope = "simultaneous",
    confidence = 0.95,
    window = 21,
    seed = 0,
    max_q = 15.0,
    q_step = 0.25,
    detrend_order = 2,
))]
#[allow(clippy::too_many_arguments)]
fn estimate_ribbon(
    values: Vec<f64>,
    transform: &str,
    replicas: usize,
    method: &str,
    envelope: &str,
    confidence: f64,
    window: usize,
    seed: u64,
    max_q: f64,
    q_step: f64,
    detrend_order: usize,
) -> PyResult<PyBiasRibbon> {
    let kind: TransformKind = parse(transform)?;
    let base = series(values, kind.base().as_str())?;
    let mut cfg = SurrogateConfig::new(replicas, parse::<SurrogateMethod>(method)?, kind, seed);
    cfg.envelope = parse::<Envelope>(envelope)?;
    cfg.confidence = confidence;
    cfg.window = kind.needs_window().then(|| VolatilityWindow::new(window)).transpose().py()?;
    cfg.validate().py()?;
    let p = params(base.len(), max_q, q_step, detrend_order, true)?;
    Ok(PyBiasRibbon {
        inner: core_ribbon(&base, &cfg, &p).py()?,
    })
}

#[pyfunction]
#[pyo3(signature = (profile, ribbon = None))]
fn report(profile: &PyHurstProfile, ribbon: Option<&PyBiasRibbon>) -> PyResult<PyReport> {
    let r = build_report(&profile.inner, ribbon.map(|r| &r.inner), profile.inner.q_grid.max_q()).py()?;
    Ok(PyReport {
        hurst: r.hurst,
        delta_h_obs: r.delta_h_obs,
        delta_h_b: r.delta_h_b,
        delta_h_unb: r.delta_h_unb,
        delta_h2: r.delta_h2,
        delta_h: r.delta_h,
        flags: r.flags.iter().map(|f| f.as_str().to_string()).collect(),
    })
}

/// Full analysis from `key = value` configuration text; returns the JSON report.
#[pyfunction]
fn run(config: &str) -> PyResult<String> {
    let cfg = AnalysisConfig::from_text(config).py()?;
    let bundle = run_analysis(&cfg).py()?;
    serde_json::to_string(&bundle).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Full analysis of an in-memory price series. Source keys in `config` are ignored.
#[pyfunction]
#[pyo3(signature = (prices, config = ""))]
fn analyze(prices: Vec<f64>, config: &str) -> PyResult<String> {
    let mut cfg = AnalysisConfig::from_text(config).py()?;
    cfg.input = None;
    cfg.cascade_a = None;
    let data = PriceSeries::from_prices(TimeSeries::raw(prices, "python").py()?).py()?;
    let bundle = analyze_prices(&data, &cfg).py()?;
    serde_json::to_string(&bundle).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn gmfdfa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHurstProfile>()?;
    m.add_class::<PyBiasRibbon>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(analytic_h, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_spread, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_cascade, m)?)?;
    m.add_function(wrap_pyfunction!(hurst_profile, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_ribbon, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
