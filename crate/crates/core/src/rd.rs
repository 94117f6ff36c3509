//! Closed-form rate expressions and theoretical R-D curves.
//!
//! Rates are in bits per pixel and use base-2 logarithms. Each stream's
//! Gaussian rate is clamped at zero once the distortion reaches the
//! stream's (effective) variance.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RdSource {
    TheoryActive,
    TheoryInactive,
    TheoryCombined,
    Empirical,
}

impl RdSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RdSource::TheoryActive => "theory-active",
            RdSource::TheoryInactive => "theory-inactive",
            RdSource::TheoryCombined => "theory-combined",
            RdSource::Empirical => "empirical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    /// Per-pixel mean squared error.
    pub distortion: f64,
    /// Bits per pixel.
    pub rate: f64,
    pub source: RdSource,
}

/// Which motion activity a curve is drawn for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMode {
    /// The measured `lambda_m`.
    Combined,
    /// `lambda_m = 1`: upper edge of the R-D region.
    AllActive,
    /// `lambda_m = 0`: lower edge of the R-D region.
    AllInactive,
}

impl CurveMode {
    pub fn source(self) -> RdSource {
        match self {
            CurveMode::Combined => RdSource::TheoryCombined,
            CurveMode::AllActive => RdSource::TheoryActive,
            CurveMode::AllInactive => RdSource::TheoryInactive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    /// Sorted by increasing distortion.
    pub points: Vec<RdPoint>,
    /// Parameters the curve was evaluated with (`lambda_m` already forced
    /// for the all-active and all-inactive modes).
    pub params: ModelParams,
}

fn check_distortion(d: f64, name: &str) -> Result<()> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("{name} must be positive and finite, got {d}")));
    }
    Ok(())
}

fn check_variance(v: f64, name: &str) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

/// Rate of the DFD stream: `max(0, log2(sigma2_a / d_a) / 2)`.
pub fn rate_active(sigma2_a: f64, d_a: f64) -> Result<f64> {
    check_distortion(d_a, "d_a")?;
    check_variance(sigma2_a, "sigma2_a")?;
    Ok((0.5 * (sigma2_a / d_a).log2()).max(0.0))
}

/// Rate of the FD stream under a first-order Gauss-Markov model:
/// `max(0, log2((1 - rho_i^2) sigma2_i / d_i) / 2)`.
pub fn rate_inactive(sigma2_i: f64, rho_i: f64, d_i: f64) -> Result<f64> {
    check_distortion(d_i, "d_i")?;
    check_variance(sigma2_i, "sigma2_i")?;
    if !(rho_i.abs() < 1.0) {
        return Err(Error::Domain(format!("|rho_i| must be < 1, got {rho_i}")));
    }
    Ok((0.5 * ((1.0 - rho_i * rho_i) * sigma2_i / d_i).log2()).max(0.0))
}

/// Motion-vector rate spread over the block: `b_m / (block_w * block_h)`.
pub fn rate_motion(b_m: f64, block_w: usize, block_h: usize) -> Result<f64> {
    if block_w == 0 || block_h == 0 {
        return Err(Error::Domain(format!("block area is zero ({block_w}x{block_h})")));
    }
    if !(b_m >= 0.0) || !b_m.is_finite() {
        return Err(Error::Domain(format!("b_m must be finite and >= 0, got {b_m}")));
    }
    Ok(b_m / (block_w * block_h) as f64)
}

/// Total rate at per-stream distortions `d_a` and `d_i`.
///
/// With `include_mv` this is the weighted sum
/// `lambda (R_A + R_M) + (1 - lambda) R_I`. Without it, the motion term is
/// dropped and the rate is evaluated as the single logarithm
/// `log2[(sigma2_a/d_a)^(lambda/2) ((1-rho^2) sigma2_i/d_i)^((1-lambda)/2)]`,
/// with each ratio floored at 1 to match the per-stream clamp.
pub fn rate_combined(params: &ModelParams, d_a: f64, d_i: f64, include_mv: bool) -> Result<f64> {
    params.validate()?;
    let lambda = params.lambda_m;
    if include_mv {
        let r_a = rate_active(params.sigma2_a, d_a)?;
        let r_i = rate_inactive(params.sigma2_i, params.rho_i, d_i)?;
        let r_m = rate_motion(params.b_m, params.block_w, params.block_h)?;
        return Ok(lambda * (r_a + r_m) + (1.0 - lambda) * r_i);
    }
    // The single-stream formulas are exact at the endpoints.
    if lambda == 0.0 {
        return rate_inactive(params.sigma2_i, params.rho_i, d_i);
    }
    if lambda == 1.0 {
        return rate_active(params.sigma2_a, d_a);
    }
    check_distortion(d_a, "d_a")?;
    check_distortion(d_i, "d_i")?;
    let active_ratio = (params.sigma2_a / d_a).max(1.0);
    let inactive_ratio = ((1.0 - params.rho_i * params.rho_i) * params.sigma2_i / d_i).max(1.0);
    let product = active_ratio.powf(lambda / 2.0) * inactive_ratio.powf((1.0 - lambda) / 2.0);
    Ok(product.log2())
}

/// `n` log-spaced distortions from `d_min` to `d_max` inclusive.
pub fn log_grid(d_min: f64, d_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(d_min > 0.0) || !(d_max > d_min) || !d_max.is_finite() {
        return Err(Error::Domain(format!(
            "distortion grid needs 0 < d_min < d_max, got [{d_min}, {d_max}]"
        )));
    }
    if n < 2 {
        return Err(Error::Domain(format!("distortion grid needs at least 2 points, got {n}")));
    }
    let (lo, hi) = (d_min.ln(), d_max.ln());
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| match i {
            0 => d_min,
            i if i == n - 1 => d_max,
            i => (lo + step * i as f64).exp(),
        })
        .collect())
}

/// Theoretical curve over a log-spaced distortion grid with `d_a = d_i = D`.
pub fn generate_curve(
    params: &ModelParams,
    d_min: f64,
    d_max: f64,
    n: usize,
    mode: CurveMode,
    include_mv: bool,
) -> Result<RdCurve> {
    params.validate()?;
    let params = ModelParams {
        lambda_m: match mode {
            CurveMode::Combined => params.lambda_m,
            CurveMode::AllActive => 1.0,
            CurveMode::AllInactive => 0.0,
        },
        ..*params
    };
    let source = mode.source();
    let points = log_grid(d_min, d_max, n)?
        .into_iter()
        .map(|d| {
            Ok(RdPoint {
                distortion: d,
                rate: rate_combined(&params, d, d, include_mv)?,
                source,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RdCurve { points, params })
}

/// One row of the curve CSV schema.
#[derive(Debug, Clone, Serialize)]
pub struct CurveRow {
    pub distortion: f64,
    pub rate: f64,
    pub source: RdSource,
    pub lambda_m: f64,
    pub rho_i: f64,
    pub sigma2_a: f64,
    pub sigma2_i: f64,
}

impl RdCurve {
    /// Rows in the curve CSV schema.
    pub fn rows(&self) -> impl Iterator<Item = CurveRow> + '_ {
        self.points.iter().map(|p| CurveRow {
            distortion: p.distortion,
            rate: p.rate,
            source: p.source,
            lambda_m: self.params.lambda_m,
            rho_i: self.params.rho_i,
            sigma2_a: self.params.sigma2_a,
            sigma2_i: self.params.sigma2_i,
        })
    }
}

/// Writes curves as CSV with header
/// `distortion,rate,source,lambda_m,rho_i,sigma2_a,sigma2_i`.
pub fn write_curves_csv<W: Write>(curves: &[RdCurve], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut empty = true;
    for row in curves.iter().flat_map(RdCurve::rows) {
        w.serialize(row)?;
        empty = false;
    }
    if empty {
        w.write_record(["distortion", "rate", "source", "lambda_m", "rho_i", "sigma2_a", "sigma2_i"])?;
    }
    w.flush()?;
    Ok(())
}
