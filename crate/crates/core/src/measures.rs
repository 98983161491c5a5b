//! Multifractality measures computed from a fitted `h(q)` profile and,
//! optionally, a bias ribbon.
//!
//! * `delta_h`: the classical edge spread `h(-Q) - h(Q)`.
//! * `delta_h2`: mean absolute deviation of `h(q)` from `h(2)` over `[-Q, Q]`.
//! * `delta_h_bias_aware`: mean distance of `h(q)` outside the ribbon.
//! * `decompose`: splits the edge spread into bias and unbiased parts.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mfdfa::{HurstProfile, QGrid};
use crate::numeric::trapezoid;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Per-q envelope `[lower(q), upper(q)]` of profiles attributable to bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRibbon {
    pub q_grid: QGrid,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub confidence: f64,
}

impl BiasRibbon {
    pub fn new(q_grid: QGrid, lower: Vec<f64>, upper: Vec<f64>, confidence: f64) -> Result<Self> {
        if lower.len() != q_grid.len() || upper.len() != q_grid.len() {
            return Err(Error::GridMismatch);
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "confidence must be in (0, 1), got {confidence}"
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidParameter(
                "ribbon lower edge must not exceed upper edge".into(),
            ));
        }
        Ok(Self {
            q_grid,
            lower,
            upper,
            confidence,
        })
    }

    /// Ribbon of zero width along `center(q)`.
    pub fn degenerate(q_grid: QGrid, center: impl Fn(f64) -> f64) -> Self {
        let c: Vec<f64> = q_grid.values().iter().map(|q| center(*q)).collect();
        Self {
            q_grid,
            lower: c.clone(),
            upper: c,
            confidence: DEFAULT_CONFIDENCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// `h(-Q) < h(Q)`: the classical spread is negative.
    InvertedEdges,
    /// `h(-Q)` lies below the ribbon; the unbiased spread is undefined.
    LowerEdgeBelowRibbon,
    /// `h(Q)` lies above the ribbon; the unbiased spread is undefined.
    UpperEdgeAboveRibbon,
    /// `h(-Q)` lies inside the ribbon; its increment counts as zero.
    LowerEdgeInsideRibbon,
    /// `h(Q)` lies inside the ribbon; its increment counts as zero.
    UpperEdgeInsideRibbon,
    /// The whole profile lies inside the ribbon.
    FullyBiased,
    /// Fitted `h(2)` above 0.65: a shuffle null understates the ribbon.
    PersistentSignal,
}

impl Flag {
    pub fn as_str(self) -> &'static str {
        match self {
            Flag::InvertedEdges => "inverted_edges",
            Flag::LowerEdgeBelowRibbon => "lower_edge_below_ribbon",
            Flag::UpperEdgeAboveRibbon => "upper_edge_above_ribbon",
            Flag::LowerEdgeInsideRibbon => "lower_edge_inside_ribbon",
            Flag::UpperEdgeInsideRibbon => "upper_edge_inside_ribbon",
            Flag::FullyBiased => "fully_biased",
            Flag::PersistentSignal => "persistent_signal",
        }
    }

    /// Flags describing where the profile edges sit relative to the ribbon.
    pub fn is_edge_flag(self) -> bool {
        matches!(
            self,
            Flag::LowerEdgeBelowRibbon
                | Flag::UpperEdgeAboveRibbon
                | Flag::LowerEdgeInsideRibbon
                | Flag::UpperEdgeInsideRibbon
        )
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn q_index(grid: &QGrid, q: f64) -> Result<usize> {
    grid.index_of(q).ok_or(Error::QNotOnGrid(q))
}

fn edge_indices(grid: &QGrid, max_q: f64) -> Result<(usize, usize)> {
    if !(max_q > 0.0) {
        return Err(Error::InvalidParameter(format!("Q must be positive, got {max_q}")));
    }
    Ok((q_index(grid, -max_q)?, q_index(grid, max_q)?))
}

fn check_aligned(profile: &HurstProfile, ribbon: &BiasRibbon) -> Result<()> {
    if profile.q_grid != ribbon.q_grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// `h(-Q) - h(Q)`; negative for inverted profiles.
pub fn delta_h(profile: &HurstProfile, max_q: f64) -> Result<f64> {
    let (lo, hi) = edge_indices(&profile.q_grid, max_q)?;
    Ok(profile.h[lo] - profile.h[hi])
}

/// `(1/Q) * integral over [-Q, Q] of |h(q) - h(2)| dq`, trapezoid rule on
/// the profile's q grid.
pub fn delta_h2(profile: &HurstProfile, max_q: f64) -> Result<f64> {
    let (lo, hi) = edge_indices(&profile.q_grid, max_q)?;
    let h2 = profile.h_at(2.0).ok_or(Error::MissingH2)?;
    let qs = &profile.q_grid.values()[lo..=hi];
    let dev: Vec<f64> = profile.h[lo..=hi].iter().map(|h| (h - h2).abs()).collect();
    Ok(trapezoid(qs, &dev) / max_q)
}

fn distance_at(h: f64, lower: f64, upper: f64) -> f64 {
    if h > upper {
        h - upper
    } else if h < lower {
        lower - h
    } else {
        0.0
    }
}

/// Distance of `h(q)` from the ribbon; zero inside it, boundary included.
pub fn distance(profile: &HurstProfile, ribbon: &BiasRibbon, q: f64) -> Result<f64> {
    let i = profile.q_grid.index_of(q).ok_or(Error::GridMismatch)?;
    let j = ribbon.q_grid.index_of(q).ok_or(Error::GridMismatch)?;
    Ok(distance_at(profile.h[i], ribbon.lower[j], ribbon.upper[j]))
}

/// `(1/Q) * integral over [-Q, Q] of distance(q) dq`.
pub fn delta_h_bias_aware(profile: &HurstProfile, ribbon: &BiasRibbon, max_q: f64) -> Result<f64> {
    check_aligned(profile, ribbon)?;
    let (lo, hi) = edge_indices(&profile.q_grid, max_q)?;
    let d: Vec<f64> = (lo..=hi)
        .map(|i| distance_at(profile.h[i], ribbon.lower[i], ribbon.upper[i]))
        .collect();
    Ok(trapezoid(&profile.q_grid.values()[lo..=hi], &d) / max_q)
}

/// Edge-spread decomposition `delta_h_obs = delta_h_b + delta_h_unb`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub delta_h_obs: f64,
    /// Bias level `upper(-Q) - lower(Q)`.
    pub delta_h_b: f64,
    /// `None` when an edge lies on the wrong side of the ribbon.
    pub delta_h_unb: Option<f64>,
    pub flags: BTreeSet<Flag>,
}

/// Splits the observed edge spread into the bias level and the increments
/// of the edges beyond the ribbon. An edge inside the ribbon contributes a
/// zero increment; an edge beyond the ribbon on the wrong side (`h(-Q)`
/// below it, `h(Q)` above it) leaves the unbiased spread undefined.
pub fn decompose(profile: &HurstProfile, ribbon: &BiasRibbon, max_q: f64) -> Result<Decomposition> {
    check_aligned(profile, ribbon)?;
    let (lo, hi) = edge_indices(&profile.q_grid, max_q)?;
    let (h_minus, h_plus) = (profile.h[lo], profile.h[hi]);
    let (up_minus, down_minus) = (ribbon.upper[lo], ribbon.lower[lo]);
    let (up_plus, down_plus) = (ribbon.upper[hi], ribbon.lower[hi]);

    let delta_h_obs = h_minus - h_plus;
    let delta_h_b = up_minus - down_plus;

    let mut flags = BTreeSet::new();
    if delta_h_obs < 0.0 {
        flags.insert(Flag::InvertedEdges);
    }
    if h_minus < down_minus {
        flags.insert(Flag::LowerEdgeBelowRibbon);
    } else if h_minus < up_minus {
        flags.insert(Flag::LowerEdgeInsideRibbon);
    }
    if h_plus > up_plus {
        flags.insert(Flag::UpperEdgeAboveRibbon);
    } else if h_plus > down_plus {
        flags.insert(Flag::UpperEdgeInsideRibbon);
    }

    let undefined =
        flags.contains(&Flag::LowerEdgeBelowRibbon) || flags.contains(&Flag::UpperEdgeAboveRibbon);
    let delta_h_unb = if undefined {
        None
    } else if flags.iter().any(|f| f.is_edge_flag()) {
        Some((h_minus - up_minus).max(0.0) + (down_plus - h_plus).max(0.0))
    } else {
        Some(delta_h_obs - delta_h_b)
    };

    Ok(Decomposition {
        delta_h_obs,
        delta_h_b,
        delta_h_unb,
        flags,
    })
}

/// All measures for one analysed series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultifractalReport {
    pub hurst: f64,
    pub delta_h_obs: f64,
    pub delta_h_b: Option<f64>,
    pub delta_h_unb: Option<f64>,
    pub delta_h2: f64,
    /// Bias-aware measure; `None` only when no ribbon was supplied.
    pub delta_h: Option<f64>,
    pub flags: BTreeSet<Flag>,
}

/// Threshold on fitted `h(2)` above which a shuffle null is flagged.
pub const PERSISTENCE_WARNING: f64 = 0.65;

pub fn build_report(
    profile: &HurstProfile,
    ribbon: Option<&BiasRibbon>,
    max_q: f64,
) -> Result<MultifractalReport> {
    let hurst = profile.h_at(2.0).ok_or(Error::MissingH2)?;
    let delta_h2 = delta_h2(profile, max_q)?;
    let mut report = MultifractalReport {
        hurst,
        delta_h_obs: delta_h(profile, max_q)?,
        delta_h_b: None,
        delta_h_unb: None,
        delta_h2,
        delta_h: None,
        flags: BTreeSet::new(),
    };
    if report.delta_h_obs < 0.0 {
        report.flags.insert(Flag::InvertedEdges);
    }
    if let Some(ribbon) = ribbon {
        let dec = decompose(profile, ribbon, max_q)?;
        let dh = delta_h_bias_aware(profile, ribbon, max_q)?;
        report.delta_h_b = Some(dec.delta_h_b);
        report.delta_h_unb = dec.delta_h_unb;
        report.delta_h = Some(dh);
        report.flags.extend(dec.flags);
        if dh == 0.0 {
            report.flags.insert(Flag::FullyBiased);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{analytic_h, analytic_spread};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid() -> QGrid {
        QGrid::default()
    }

    fn profile(f: impl Fn(f64) -> f64) -> HurstProfile {
        HurstProfile::from_fn(grid(), f).unwrap()
    }

    fn ribbon(lo: impl Fn(f64) -> f64, hi: impl Fn(f64) -> f64) -> BiasRibbon {
        let g = grid();
        let lower = g.values().iter().map(|q| lo(*q)).collect();
        let upper = g.values().iter().map(|q| hi(*q)).collect();
        BiasRibbon::new(g, lower, upper, 0.95).unwrap()
    }

    #[test]
    fn flat_profile() {
        let p = profile(|_| 0.7);
        assert_eq!(delta_h(&p, 15.0).unwrap(), 0.0);
        assert_eq!(delta_h2(&p, 15.0).unwrap(), 0.0);
    }

    #[test]
    fn spread_of_analytic_cascade() {
        let p = profile(|q| analytic_h(0.65, q).unwrap());
        assert_relative_eq!(delta_h(&p, 15.0).unwrap(), analytic_spread(0.65, 15.0).unwrap(), epsilon = 1e-14);
        assert!((delta_h(&p, 15.0).unwrap() - 0.760).abs() < 1e-3);
    }

    #[test]
    fn inverted_edges_are_returned() {
        let p = profile(|q| 0.5 + q / 150.0);
        assert_relative_eq!(delta_h(&p, 15.0).unwrap(), -0.2, epsilon = 1e-14);
        let r = build_report(&p, None, 15.0).unwrap();
        assert!(r.flags.contains(&Flag::InvertedEdges));
    }

    #[test]
    fn linear_profile_closed_form() {
        let beta = 0.02;
        let p = profile(|q| 0.9 - beta * q);
        let closed = beta * (15.0f64.powi(2) + 4.0) / 15.0;
        // q = 2 lies on the grid, so the trapezoid is exact for |linear|
        assert_relative_eq!(delta_h2(&p, 15.0).unwrap(), closed, epsilon = 1e-12);
        assert!((closed - 0.3053).abs() < 1e-4);
        // independent quadrature oracle
        let n = 200_000;
        let dq = 30.0 / n as f64;
        let mid: f64 = (0..n).map(|k| (beta * (2.0 - (-15.0 + (k as f64 + 0.5) * dq))).abs() * dq).sum();
        assert!((mid / 15.0 - closed).abs() < 1e-8);
    }

    #[test]
    fn smaller_q_uses_subrange() {
        let p = profile(|q| 0.9 - 0.02 * q);
        let closed = 0.02 * (25.0 + 4.0) / 5.0;
        assert_relative_eq!(delta_h2(&p, 5.0).unwrap(), closed, epsilon = 1e-12);
        assert!(matches!(delta_h2(&p, 15.1), Err(Error::QNotOnGrid(_))));
    }

    #[test]
    fn distance_branches() {
        let p = profile(|q| if q == 0.0 { 1.0 } else if q == 1.0 { 0.3 } else { 0.8 });
        let r = ribbon(|q| if q == 1.0 { 0.45 } else { 0.5 }, |_| 0.8);
        assert_eq!(distance(&p, &r, 2.0).unwrap(), 0.0);
        assert_relative_eq!(distance(&p, &r, 0.0).unwrap(), 0.2, epsilon = 1e-15);
        assert_relative_eq!(distance(&p, &r, 1.0).unwrap(), 0.15, epsilon = 1e-15);
        assert!(matches!(distance(&p, &r, 0.1), Err(Error::GridMismatch)));
    }

    #[test]
    fn inside_ribbon_is_fully_biased() {
        let p = profile(|q| 0.6 - 0.005 * q);
        let r = ribbon(|_| 0.4, |_| 0.8);
        assert_eq!(delta_h_bias_aware(&p, &r, 15.0).unwrap(), 0.0);
        let rep = build_report(&p, Some(&r), 15.0).unwrap();
        assert!(rep.flags.contains(&Flag::FullyBiased));
        assert_eq!(rep.delta_h_unb, Some(0.0));
    }

    #[test]
    fn zero_width_ribbon_reduces_to_delta_h2() {
        let p = profile(|q| analytic_h(0.7, q).unwrap());
        let h2 = p.h_at(2.0).unwrap();
        let r = BiasRibbon::degenerate(grid(), |_| h2);
        let a = delta_h_bias_aware(&p, &r, 15.0).unwrap();
        let b = delta_h2(&p, 15.0).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch() {
        let p = HurstProfile::from_fn(QGrid::new(10.0, 0.5).unwrap(), |_| 0.5).unwrap();
        let r = ribbon(|_| 0.4, |_| 0.6);
        assert!(matches!(delta_h_bias_aware(&p, &r, 10.0), Err(Error::GridMismatch)));
        assert!(matches!(decompose(&p, &r, 10.0), Err(Error::GridMismatch)));
    }

    #[test]
    fn decomposition_cases() {
        // edges outside on the expected sides
        let p = profile(|q| 0.9 - 0.03 * q);
        let r = ribbon(|_| 0.6, |_| 1.0);
        let d = decompose(&p, &r, 15.0).unwrap();
        assert!(d.flags.is_empty());
        assert!((d.delta_h_obs - d.delta_h_b - d.delta_h_unb.unwrap()).abs() < 1e-12);

        // both edges inside
        let r = ribbon(|_| 0.0, |_| 2.0);
        let d = decompose(&p, &r, 15.0).unwrap();
        assert_eq!(d.delta_h_unb, Some(0.0));
        assert!(d.flags.contains(&Flag::LowerEdgeInsideRibbon));
        assert!(d.flags.contains(&Flag::UpperEdgeInsideRibbon));

        // h(-Q) below the ribbon
        let p = profile(|q| 0.5 + 0.01 * q);
        let r = ribbon(|_| 0.4, |_| 0.6);
        let d = decompose(&p, &r, 15.0).unwrap();
        assert!(d.flags.contains(&Flag::LowerEdgeBelowRibbon));
        assert!(d.flags.contains(&Flag::UpperEdgeAboveRibbon));
        assert!(d.flags.contains(&Flag::InvertedEdges));
        assert_eq!(d.delta_h_unb, None);
    }

    #[test]
    fn report_serializes_flags_as_strings() {
        let p = profile(|q| 0.5 + q / 100.0);
        let r = ribbon(|_| 0.55, |_| 0.6);
        let rep = build_report(&p, Some(&r), 15.0).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"lower_edge_below_ribbon\""));
        assert!(json.contains("\"upper_edge_above_ribbon\""));
        assert!(json.contains("\"delta_h_unb\":null"));
    }

    fn arb_profile() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-0.5f64..0.5, 5).prop_map(|c| {
            grid()
                .values()
                .iter()
                .map(|q| {
                    let t = q / 15.0;
                    0.8 + c[0] + c[1] * t + c[2] * t * t + c[3] * (3.0 * t).sin() + c[4] * t.powi(3)
                })
                .collect()
        })
    }

    fn arb_ribbon() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (arb_profile(), prop::collection::vec(0.0f64..0.4, 3)).prop_map(|(center, w)| {
            let g = grid();
            let width: Vec<f64> = g
                .values()
                .iter()
                .map(|q| w[0] + w[1] * (q / 15.0).abs() + w[2] * (q / 15.0).powi(2))
                .collect();
            let lower = center.iter().zip(&width).map(|(c, w)| c - w).collect();
            let upper = center.iter().zip(&width).map(|(c, w)| c + w).collect();
            (lower, upper)
        })
    }

    proptest! {
        #[test]
        fn bias_aware_measure_nonnegative(h in arb_profile(), (lo, up) in arb_ribbon()) {
            let p = HurstProfile::new(grid(), h, vec![0.0; 121], (0, 0)).unwrap();
            let r = BiasRibbon::new(grid(), lo, up, 0.95).unwrap();
            let dh = delta_h_bias_aware(&p, &r, 15.0).unwrap();
            prop_assert!(dh >= 0.0);
            let inside = p.h.iter().zip(r.lower.iter().zip(&r.upper)).all(|(h, (l, u))| l <= h && h <= u);
            prop_assert_eq!(dh == 0.0, inside);
        }

        #[test]
        fn widening_never_increases(h in arb_profile(), w in prop::collection::vec(0.0f64..0.3, 2)) {
            let p = HurstProfile::new(grid(), h, vec![0.0; 121], (0, 0)).unwrap();
            let h2 = p.h_at(2.0).unwrap();
            let r = ribbon(|q| h2 - w[0] - w[1] * (q / 15.0).abs(), |q| h2 + w[1] + w[0] * (q / 15.0).abs());
            prop_assert!(delta_h_bias_aware(&p, &r, 15.0).unwrap() <= delta_h2(&p, 15.0).unwrap() + 1e-15);
        }

        #[test]
        fn delta_h2_shift_invariant(h in arb_profile(), c in -2.0f64..2.0) {
            let p = HurstProfile::new(grid(), h.clone(), vec![0.0; 121], (0, 0)).unwrap();
            let shifted = HurstProfile::new(grid(), h.iter().map(|v| v + c).collect(), vec![0.0; 121], (0, 0)).unwrap();
            prop_assert!((delta_h2(&p, 15.0).unwrap() - delta_h2(&shifted, 15.0).unwrap()).abs() < 1e-12);
        }
    }
}
