//! Run configuration: a flat `key = value` file whose entries can be
//! overridden one by one from the command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bias::{Envelope, SurrogateMethod, DEFAULT_REPLICAS, MIN_REPLICAS};
use crate::cascade::CascadeParams;
use crate::error::{Error, Result};
use crate::measures::DEFAULT_CONFIDENCE;
use crate::mfdfa::{DetrendConfig, QGrid, DEFAULT_MAX_Q, DEFAULT_Q_STEP, DEFAULT_TAU_COUNT};
use crate::series::{TransformKind, VolatilityWindow, DEFAULT_VOLATILITY_WINDOW};

use super::ingest::{ColumnSelector, CsvOptions, HeaderMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// CSV file of prices in temporal order.
    pub input: Option<PathBuf>,
    pub column: ColumnSelector,
    pub delimiter: char,
    pub header: HeaderMode,
    /// Analyse a generated cascade instead of a file.
    pub cascade_a: Option<f64>,
    pub cascade_depth: u32,
    pub transforms: Vec<TransformKind>,
    pub max_q: f64,
    pub q_step: f64,
    pub tau_min: Option<usize>,
    pub tau_max: Option<usize>,
    pub tau_count: usize,
    pub fit_min: Option<usize>,
    pub fit_max: Option<usize>,
    pub detrend_order: usize,
    pub integrate: bool,
    pub window: usize,
    pub surrogate: SurrogateMethod,
    /// Zero skips the bias estimate.
    pub replicas: usize,
    pub confidence: f64,
    pub envelope: Envelope,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            input: None,
            column: ColumnSelector::Last,
            delimiter: ',',
            header: HeaderMode::Auto,
            cascade_a: None,
            cascade_depth: 16,
            transforms: TransformKind::ANALYSED.to_vec(),
            max_q: DEFAULT_MAX_Q,
            q_step: DEFAULT_Q_STEP,
            tau_min: None,
            tau_max: None,
            tau_count: DEFAULT_TAU_COUNT,
            fit_min: None,
            fit_max: None,
            detrend_order: 2,
            integrate: true,
            window: DEFAULT_VOLATILITY_WINDOW,
            surrogate: SurrogateMethod::PhaseRandomized,
            replicas: DEFAULT_REPLICAS,
            confidence: DEFAULT_CONFIDENCE,
            envelope: Envelope::Simultaneous,
            seed: 0,
            output_dir: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.is_empty() || value == "auto" || value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid value '{value}' for {key}"))),
    }
}

fn opt_text<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|t| t.to_string()).unwrap_or_else(|| "auto".into())
}

impl AnalysisConfig {
    /// Reads a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input" => self.input = (!value.is_empty()).then(|| PathBuf::from(value)),
            "column" => self.column = value.parse()?,
            "delimiter" => {
                self.delimiter = match value {
                    "tab" | "\\t" => '\t',
                    "comma" => ',',
                    "semicolon" => ';',
                    _ => {
                        let mut chars = value.chars();
                        match (chars.next(), chars.next()) {
                            (Some(c), None) if c.is_ascii() => c,
                            _ => return Err(Error::Config(format!("invalid delimiter '{value}'"))),
                        }
                    }
                }
            }
            "header" => self.header = value.parse()?,
            "cascade_a" => self.cascade_a = parse_opt(key, value)?,
            "cascade_depth" => self.cascade_depth = parse(key, value)?,
            "transforms" => {
                self.transforms = if value == "all" {
                    TransformKind::ANALYSED.to_vec()
                } else {
                    value
                        .split(',')
                        .map(|s| s.trim().parse())
                        .collect::<Result<Vec<TransformKind>>>()
                        .map_err(|e| Error::Config(e.to_string()))?
                }
            }
            "max_q" => self.max_q = parse(key, value)?,
            "q_step" => self.q_step = parse(key, value)?,
            "tau_min" => self.tau_min = parse_opt(key, value)?,
            "tau_max" => self.tau_max = parse_opt(key, value)?,
            "tau_count" => self.tau_count = parse(key, value)?,
            "fit_min" => self.fit_min = parse_opt(key, value)?,
            "fit_max" => self.fit_max = parse_opt(key, value)?,
            "detrend_order" => self.detrend_order = parse(key, value)?,
            "integrate" => self.integrate = parse_bool(key, value)?,
            "window" => self.window = parse(key, value)?,
            "surrogate" => {
                self.surrogate = value.parse().map_err(|e: Error| Error::Config(e.to_string()))?
            }
            "replicas" => self.replicas = parse(key, value)?,
            "confidence" => self.confidence = parse(key, value)?,
            "envelope" => self.envelope = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "output_dir" => self.output_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            // accepted for readability; the source follows from input / cascade_a
            "source" => match value {
                "csv" => self.cascade_a = None,
                "cascade" => self.input = None,
                _ => return Err(Error::Config(format!("unknown source '{value}'"))),
            },
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Serializes to the file format; `from_text(to_text())` reproduces the
    /// config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let transforms: Vec<&str> = self.transforms.iter().map(|t| t.as_str()).collect();
        let delimiter = match self.delimiter {
            '\t' => "tab".to_string(),
            c => c.to_string(),
        };
        let lines: [(&str, String); 23] = [
            ("input", path(&self.input)),
            ("column", self.column.to_string()),
            ("delimiter", delimiter),
            ("header", self.header.as_str().into()),
            ("cascade_a", self.cascade_a.map(|a| a.to_string()).unwrap_or_else(|| "none".into())),
            ("cascade_depth", self.cascade_depth.to_string()),
            ("transforms", transforms.join(",")),
            ("max_q", self.max_q.to_string()),
            ("q_step", self.q_step.to_string()),
            ("tau_min", opt_text(&self.tau_min)),
            ("tau_max", opt_text(&self.tau_max)),
            ("tau_count", self.tau_count.to_string()),
            ("fit_min", opt_text(&self.fit_min)),
            ("fit_max", opt_text(&self.fit_max)),
            ("detrend_order", self.detrend_order.to_string()),
            ("integrate", self.integrate.to_string()),
            ("window", self.window.to_string()),
            ("surrogate", self.surrogate.as_str().into()),
            ("replicas", self.replicas.to_string()),
            ("confidence", self.confidence.to_string()),
            ("envelope", self.envelope.as_str().into()),
            ("seed", self.seed.to_string()),
            ("output_dir", path(&self.output_dir)),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Checks every value that can be checked without the data.
    pub fn validate(&self) -> Result<()> {
        match (&self.input, self.cascade_a) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("set either input or cascade_a, not both".into()))
            }
            (None, None) => return Err(Error::Config("no input file or cascade_a given".into())),
            (None, Some(a)) => {
                CascadeParams::new(a, self.cascade_depth, self.seed)?;
            }
            (Some(_), None) => {}
        }
        if self.transforms.is_empty() {
            return Err(Error::Config("no transforms selected".into()));
        }
        if let Some(t) = self.transforms.iter().find(|t| **t == TransformKind::Raw) {
            return Err(Error::Config(format!("transform '{t}' cannot be analysed")));
        }
        self.q_grid()?;
        self.detrend()?;
        self.volatility_window()?;
        if self.tau_count < 2 {
            return Err(Error::Config("tau_count must be at least 2".into()));
        }
        if let (Some(lo), Some(hi)) = (self.fit_min, self.fit_max) {
            if lo >= hi {
                return Err(Error::Config("fit_min must be below fit_max".into()));
            }
        }
        if self.replicas != 0 && self.replicas < MIN_REPLICAS {
            return Err(Error::InvalidParameter(format!(
                "replicas must be 0 or at least {MIN_REPLICAS}, got {}",
                self.replicas
            )));
        }
        if !(self.confidence > 0.5 && self.confidence < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence must be in (0.5, 1), got {}",
                self.confidence
            )));
        }
        Ok(())
    }

    pub fn q_grid(&self) -> Result<QGrid> {
        QGrid::new(self.max_q, self.q_step)
    }

    pub fn detrend(&self) -> Result<DetrendConfig> {
        DetrendConfig::new(self.detrend_order, self.integrate)
    }

    pub fn volatility_window(&self) -> Result<VolatilityWindow> {
        VolatilityWindow::new(self.window)
    }

    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            column: self.column.clone(),
            delimiter: self.delimiter as u8,
            header: self.header,
        }
    }
}
