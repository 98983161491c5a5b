//! Writing run results: the JSON report, a text table, per-transform
//! profile CSVs, sweep tables and the timing sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;

use super::ingest::write_columns;
use super::pipeline::{ReportBundle, SweepRow, TransformResult};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const TIMING_JSON: &str = "timing.json";
pub const SWEEP_CSV: &str = "sweep.csv";

pub fn profile_file_name(result: &TransformResult) -> String {
    format!("profile_{}.csv", result.transform.as_str())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "x".into())
}

/// Measures as a table: one column per transform, one row per measure.
/// Undefined values print as `x`.
pub fn render_table(bundle: &ReportBundle) -> String {
    let rows: [(&str, fn(&TransformResult) -> Option<f64>); 6] = [
        ("h(2)", |r| Some(r.report.hurst)),
        ("dh_obs", |r| Some(r.report.delta_h_obs)),
        ("dh_bias", |r| r.report.delta_h_b),
        ("dh_unbiased", |r| r.report.delta_h_unb),
        ("dh_l2", |r| Some(r.report.delta_h2)),
        ("dh_bias_aware", |r| r.report.delta_h),
    ];
    let width = bundle
        .results
        .iter()
        .map(|r| r.transform.as_str().len())
        .max()
        .unwrap_or(0)
        .max(6);
    let mut s = String::new();
    let _ = write!(s, "{:<14}", "measure");
    for r in &bundle.results {
        let _ = write!(s, " {:>width$}", r.transform.as_str());
    }
    s.push('\n');
    for (name, get) in rows {
        let _ = write!(s, "{name:<14}");
        for r in &bundle.results {
            let _ = write!(s, " {:>width$}", cell(get(r)));
        }
        s.push('\n');
    }
    for r in &bundle.results {
        if !r.report.flags.is_empty() {
            let flags: Vec<&str> = r.report.flags.iter().map(|f| f.as_str()).collect();
            let _ = writeln!(s, "flags[{}]: {}", r.transform, flags.join(", "));
        }
    }
    s
}

/// Columns `q, h, stderr, ribbon_lower, ribbon_upper`; the ribbon columns
/// are left out when no ribbon was estimated.
pub fn write_profile_csv(path: &Path, result: &TransformResult) -> Result<()> {
    let p = &result.profile;
    match &result.ribbon {
        Some(r) => write_columns(
            path,
            &[
                ("q", p.q_grid.values()),
                ("h", &p.h),
                ("stderr", &p.stderr),
                ("ribbon_lower", &r.lower),
                ("ribbon_upper", &r.upper),
            ],
        ),
        None => write_columns(path, &[("q", p.q_grid.values()), ("h", &p.h), ("stderr", &p.stderr)]),
    }
}

/// Writes `report.json`, `report.txt` and one profile CSV per transform into
/// `dir`, creating it if needed. Returns the written paths.
pub fn emit_outputs(bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let json = dir.join(REPORT_JSON);
    fs::write(&json, serde_json::to_string_pretty(bundle)? + "\n")?;
    written.push(json);

    let txt = dir.join(REPORT_TXT);
    fs::write(&txt, render_table(bundle))?;
    written.push(txt);

    for r in &bundle.results {
        let path = dir.join(profile_file_name(r));
        write_profile_csv(&path, r)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let col = |f: fn(&SweepRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let (a, th, dh, d2, n) = (
        col(|r| r.a),
        col(|r| r.delta_h_theory),
        col(|r| r.delta_h),
        col(|r| r.delta_h2),
        col(|r| r.seeds as f64),
    );
    write_columns(
        path,
        &[("a", &a), ("delta_h_theory", &th), ("delta_h", &dh), ("delta_h2", &d2), ("seeds", &n)],
    )
}

/// Wall time lives next to the report, not inside it.
pub fn write_timing(dir: &Path, seconds: f64) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(TIMING_JSON);
    fs::write(&path, serde_json::to_string_pretty(&serde_json::json!({ "wall_time_seconds": seconds }))? + "\n")?;
    Ok(path)
}
