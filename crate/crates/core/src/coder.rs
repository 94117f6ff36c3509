//! Quantize-and-measure coder producing empirical (R, D) points.
//!
//! Residuals go through a uniform midtread quantizer and the rate is the
//! zeroth-order entropy of the quantizer indices, computed separately for
//! the DFD and FD streams and mixed by the fraction of active blocks.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::activity::ActivityMap;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::motion::{extract_residuals, motion_compensate, MotionField, ResidualSet};
use crate::rd::{rate_motion, RdSource};
use crate::stats::ModelParams;

/// Uniform midtread scalar quantizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    pub step: f64,
}

impl QuantizerSpec {
    pub fn new(step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Config(format!("quantizer step must be positive, got {step}")));
        }
        Ok(Self { step })
    }

    #[inline]
    pub fn index(&self, sample: f64) -> i64 {
        (sample / self.step).round() as i64
    }

    #[inline]
    pub fn reconstruct(&self, index: i64) -> f64 {
        index as f64 * self.step
    }
}

/// Quantizer output for both residual streams.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Quantized {
    pub dfd_indices: Vec<i64>,
    pub fd_indices: Vec<i64>,
    pub dfd_reconstructed: Vec<f64>,
    pub fd_reconstructed: Vec<f64>,
}

pub fn quantize(res: &ResidualSet, q: &QuantizerSpec) -> Quantized {
    let run = |samples: &[f64]| -> (Vec<i64>, Vec<f64>) {
        samples
            .iter()
            .map(|&s| {
                let i = q.index(s);
                (i, q.reconstruct(i))
            })
            .unzip()
    };
    let (dfd_indices, dfd_reconstructed) = run(&res.dfd_samples);
    let (fd_indices, fd_reconstructed) = run(&res.fd_samples);
    Quantized {
        dfd_indices,
        fd_indices,
        dfd_reconstructed,
        fd_reconstructed,
    }
}

/// Zeroth-order empirical entropy in bits per symbol.
pub fn entropy_rate(indices: &[i64]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InsufficientData("symbol stream is empty".into()));
    }
    // BTreeMap keeps the summation order fixed.
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &i in indices {
        *counts.entry(i).or_default() += 1;
    }
    let n = indices.len() as f64;
    let h = counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

fn stream_entropy(indices: &[i64]) -> f64 {
    if indices.is_empty() {
        0.0
    } else {
        entropy_rate(indices).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalPoint {
    /// Bits per pixel, `rate_mv + rate_residual`.
    pub rate_total: f64,
    pub rate_mv: f64,
    pub rate_residual: f64,
    /// Mean squared error of the reconstructed target.
    pub distortion: f64,
}

impl EmpiricalPoint {
    /// Sample-weighted average of several points.
    pub fn pooled(points: &[(EmpiricalPoint, usize)]) -> Option<EmpiricalPoint> {
        let total: usize = points.iter().map(|(_, w)| w).sum();
        if total == 0 {
            return None;
        }
        let avg = |f: fn(&EmpiricalPoint) -> f64| {
            points.iter().map(|(p, w)| f(p) * *w as f64).sum::<f64>() / total as f64
        };
        let rate_mv = avg(|p| p.rate_mv);
        let rate_residual = avg(|p| p.rate_residual);
        Some(EmpiricalPoint {
            rate_total: rate_mv + rate_residual,
            rate_mv,
            rate_residual,
            distortion: avg(|p| p.distortion),
        })
    }
}

/// Codes the target of one frame pair and reports its rate and distortion.
///
/// The target is reconstructed as the prediction (motion-compensated for
/// active blocks, copied for inactive ones) plus dequantized residuals, and
/// distortion is measured over the block grid.
pub fn measure(
    anchor: &Frame,
    target: &Frame,
    map: &ActivityMap,
    field: &MotionField,
    q: &QuantizerSpec,
) -> Result<EmpiricalPoint> {
    let res = extract_residuals(anchor, target, map, field)?;
    let quantized = quantize(&res, q);
    let prediction = motion_compensate(anchor, field)?;

    let grid = map.grid;
    let (mut dfd, mut fd) = (quantized.dfd_reconstructed.iter(), quantized.fd_reconstructed.iter());
    let mut sse = 0.0;
    for (b, class) in map.labels.iter().enumerate() {
        let (x0, y0) = grid.origin(b);
        let stream = if class.is_active() { &mut dfd } else { &mut fd };
        for y in y0..y0 + grid.block_h {
            for x in x0..x0 + grid.block_w {
                let r = stream
                    .next()
                    .ok_or_else(|| Error::Invariant("residual stream shorter than the grid".into()))?;
                let err = prediction.get(x, y) + r - target.get(x, y);
                sse += err * err;
            }
        }
    }
    let pixels = (grid.block_count() * grid.block_area()) as f64;

    let lambda = map.lambda_m;
    let rate_residual =
        lambda * stream_entropy(&quantized.dfd_indices) + (1.0 - lambda) * stream_entropy(&quantized.fd_indices);
    let rate_mv = if map.active_count() > 0 {
        lambda * rate_motion(f64::from(field.b_m), grid.block_w, grid.block_h)?
    } else {
        0.0
    };
    Ok(EmpiricalPoint {
        rate_total: rate_mv + rate_residual,
        rate_mv,
        rate_residual,
        distortion: sse / pixels,
    })
}

/// One row of the empirical sweep CSV: the curve columns followed by
/// `step,rate_mv,rate_residual`. Theoretical rows leave the last three
/// columns empty.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub distortion: f64,
    pub rate: f64,
    pub source: RdSource,
    pub lambda_m: f64,
    pub rho_i: f64,
    pub sigma2_a: f64,
    pub sigma2_i: f64,
    pub step: Option<f64>,
    pub rate_mv: Option<f64>,
    pub rate_residual: Option<f64>,
}

impl SweepRow {
    pub fn empirical(point: &EmpiricalPoint, step: f64, params: &ModelParams) -> Self {
        Self {
            distortion: point.distortion,
            rate: point.rate_total,
            source: RdSource::Empirical,
            lambda_m: params.lambda_m,
            rho_i: params.rho_i,
            sigma2_a: params.sigma2_a,
            sigma2_i: params.sigma2_i,
            step: Some(step),
            rate_mv: Some(point.rate_mv),
            rate_residual: Some(point.rate_residual),
        }
    }

    pub fn theory(row: crate::rd::CurveRow) -> Self {
        Self {
            distortion: row.distortion,
            rate: row.rate,
            source: row.source,
            lambda_m: row.lambda_m,
            rho_i: row.rho_i,
            sigma2_a: row.sigma2_a,
            sigma2_i: row.sigma2_i,
            step: None,
            rate_mv: None,
            rate_residual: None,
        }
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "distortion",
            "rate",
            "source",
            "lambda_m",
            "rho_i",
            "sigma2_a",
            "sigma2_i",
            "step",
            "rate_mv",
            "rate_residual",
        ])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
