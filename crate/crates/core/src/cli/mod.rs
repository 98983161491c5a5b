//! Configuration, input, pipeline and output layers behind the command-line
//! tool.

pub mod config;
pub mod ingest;
pub mod output;
pub mod pipeline;

pub use config::AnalysisConfig;
pub use ingest::{ingest_csv, ColumnSelector, CsvOptions, HeaderMode};
pub use output::{emit_outputs, render_table};
pub use pipeline::{analyze_prices, cascade_sweep, run_analysis, PriceSeries, ReportBundle, SweepConfig, SweepRow};
