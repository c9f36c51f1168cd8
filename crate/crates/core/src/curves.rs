//! Regime-boundary curves: where the antipodal pair stops being optimal,
//! and where the average-power waterfilling solution stops using the second
//! antenna.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    TwoPointBoundary,
    WaterfillingBoundary,
}

impl std::fmt::Display for CurveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CurveKind::TwoPointBoundary => write!(f, "two_point_boundary"),
            CurveKind::WaterfillingBoundary => write!(f, "waterfilling_boundary"),
        }
    }
}

/// Sampled boundary curve in the `(r_p, r_m)` plane, ascending in `r_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCurve {
    pub kind: CurveKind,
    pub samples: Vec<(f64, f64)>,
}

impl RegimeCurve {
    /// CSV with header `r_p,r_m`, 12 significant digits, LF-terminated.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"r_p,r_m\n")?;
        for &(r_p, r_m) in &self.samples {
            writeln!(w, "{},{}", fmt_sig12(r_p), fmt_sig12(r_m))?;
        }
        Ok(())
    }
}

/// 12 significant digits, scientific.
pub fn fmt_sig12(v: f64) -> String {
    format!("{v:.11e}")
}

/// Closed-form two-channel waterfilling split of unit total power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterfillingSolution {
    pub p1: f64,
    pub p2: f64,
    /// Water level.
    pub nu: f64,
}

/// Gap function of the antipodal-pair optimality condition:
/// `RHS - r_m^2 / 2`, positive exactly when the pair `(+-r_p, 0)` is
/// capacity-achieving, where
/// `RHS = Int (phi(y - r_p) - phi(y)) log(1 / (phi(y-r_p) + phi(y+r_p))) dy`.
///
/// The implementation evaluates the mixture with its 1/2 weight; the
/// dropped constant integrates to zero against the difference of densities,
/// so the value is unchanged.
pub fn two_point_gap(r_p: f64, r_m: f64, rule: &QuadratureRule) -> Result<f64> {
    Ok(threshold_integral(r_p, rule)? - 0.5 * r_m * r_m)
}

/// `RHS` above, as `E[g(Z + r_p)] - E[g(Z)]` with
/// `g = -log((phi(. - r_p) + phi(. + r_p)) / 2)`; the linear part of the
/// difference integrates to zero exactly, leaving
/// `r_p^2/2 - E[ln cosh(r_p (Z + r_p))] + E[ln cosh(r_p Z)]`.
fn threshold_integral(r_p: f64, rule: &QuadratureRule) -> Result<f64> {
    if !(r_p > 0.0) || !r_p.is_finite() {
        return Err(Error::InvalidRadii { r_p, r_m: f64::NAN });
    }
    let ln_cosh = |t: f64| {
        let a = t.abs();
        a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
    };
    let shifted = rule.expect_gaussian_1d(|z| ln_cosh(r_p * (z + r_p)), 0.0)?;
    let centered = rule.expect_gaussian_1d(|z| ln_cosh(r_p * z), 0.0)?;
    Ok(0.5 * r_p * r_p - shifted + centered)
}

/// Largest `r_m` for which the antipodal pair is optimal at this `r_p`.
/// The threshold is explicit: the integral does not depend on `r_m`, so
/// `r_m* = min(sqrt(2 RHS), r_p)`.
pub fn two_point_threshold(r_p: f64, tol: f64, rule: &QuadratureRule) -> Result<f64> {
    let rhs = threshold_integral(r_p, rule)?;
    if rhs < -tol.abs() {
        return Err(Error::ThresholdIntegralNegative { r_p, value: rhs });
    }
    Ok((2.0 * rhs.max(0.0)).sqrt().min(r_p))
}

/// Waterfilling power split for channel gains `(r_p, r_m)`.
pub fn waterfilling_split(r_p: f64, r_m: f64) -> Result<WaterfillingSolution> {
    if !(r_p > 0.0) || !(r_m >= 0.0) || r_m > r_p || !r_p.is_finite() || !r_m.is_finite() {
        return Err(Error::InvalidRadii { r_p, r_m });
    }
    let inv_p = 1.0 / (r_p * r_p);
    if r_m == 0.0 || 1.0 + inv_p <= 1.0 / (r_m * r_m) {
        Ok(WaterfillingSolution { p1: 1.0, p2: 0.0, nu: 1.0 + inv_p })
    } else {
        let inv_m = 1.0 / (r_m * r_m);
        let nu = 0.5 * (1.0 + inv_p + inv_m);
        Ok(WaterfillingSolution {
            p1: nu - inv_p,
            p2: nu - inv_m,
            nu,
        })
    }
}

/// Largest `r_m` with `p2 = 0`: the single-antenna boundary
/// `r_p / sqrt(1 + r_p^2)`.
pub fn waterfilling_boundary(r_p: f64) -> f64 {
    assert!(r_p > 0.0, "waterfilling_boundary needs r_p > 0");
    r_p / (1.0 + r_p * r_p).sqrt()
}

/// Samples the requested boundary curve at `n` uniformly spaced `r_p`
/// values.
pub fn trace_curve(
    kind: CurveKind,
    r_p_min: f64,
    r_p_max: f64,
    n: usize,
    rule: &QuadratureRule,
) -> Result<RegimeCurve> {
    if !(r_p_min > 0.0) || !(r_p_max > r_p_min) || n < 2 {
        return Err(Error::InvalidOptions(format!(
            "curve range needs 0 < r_p_min < r_p_max and n >= 2 (got {r_p_min}, {r_p_max}, {n})"
        )));
    }
    let step = (r_p_max - r_p_min) / (n - 1) as f64;
    let samples: Result<Vec<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let r_p = r_p_min + step * i as f64;
            let r_m = match kind {
                CurveKind::TwoPointBoundary => two_point_threshold(r_p, 1e-12, rule)
                    .map_err(|e| Error::CurveSample { r_p, source: Box::new(e) })?,
                CurveKind::WaterfillingBoundary => waterfilling_boundary(r_p),
            };
            Ok((r_p, r_m))
        })
        .collect();
    Ok(RegimeCurve { kind, samples: samples? })
}
