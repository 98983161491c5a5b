//! Multifractal detrended fluctuation analysis (MFDFA), its geometric-mean
//! variant (GMFDFA), and whole-profile multifractality measures with
//! surrogate-based bias ribbons.

pub mod bias;
pub mod cascade;
pub mod cli;
pub mod error;
pub mod measures;
pub mod mfdfa;
pub mod numeric;
pub mod series;

pub use error::{Error, ErrorClass, Result};
pub use measures::{BiasRibbon, Flag, MultifractalReport};
pub use mfdfa::{AnalysisParams, DetrendConfig, FluctuationGrid, HurstProfile, QGrid, TauGrid};
pub use series::{TimeSeries, TransformKind, VolatilityWindow};
