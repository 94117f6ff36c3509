//! Model parameter estimation from residual streams, and the check of how
//! well a zero-mean Gaussian describes the FD stream.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::activity::{ActivityMap, BlockGrid};
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::motion::{MotionField, ResidualSet};

/// Correlation estimates are clamped to this magnitude so the model's
/// `1 - rho^2` factor stays positive.
pub const MAX_ABS_RHO: f64 = 1.0 - 1e-9;

/// Default number of regular histogram bins in [`fit_gauss_markov`].
pub const DEFAULT_BINS: usize = 64;

/// Half-width of the histogram support in standard deviations.
const SUPPORT_SIGMAS: f64 = 4.0;

/// Every parameter of the rate model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Variance of the DFD stream (active blocks).
    pub sigma2_a: f64,
    /// Variance of the FD stream (inactive blocks).
    pub sigma2_i: f64,
    /// Lag-1 correlation of the FD stream.
    pub rho_i: f64,
    /// Fraction of active blocks.
    pub lambda_m: f64,
    /// Bits per motion vector.
    pub b_m: f64,
    pub block_w: usize,
    pub block_h: usize,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Domain(format!("{what} in {self:?}")));
        if !(self.sigma2_a >= 0.0) || !self.sigma2_a.is_finite() {
            return bad("sigma2_a must be finite and >= 0");
        }
        if !(self.sigma2_i >= 0.0) || !self.sigma2_i.is_finite() {
            return bad("sigma2_i must be finite and >= 0");
        }
        if !(self.rho_i.abs() < 1.0) {
            return bad("|rho_i| must be < 1");
        }
        if !(0.0..=1.0).contains(&self.lambda_m) {
            return bad("lambda_m must lie in [0, 1]");
        }
        if !(self.b_m >= 0.0) || !self.b_m.is_finite() {
            return bad("b_m must be finite and >= 0");
        }
        if self.block_w == 0 || self.block_h == 0 {
            return bad("block dimensions must be positive");
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: ModelParams = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }
}

/// Sample counts behind one set of estimates, used as pooling weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SampleCounts {
    pub dfd: usize,
    pub fd: usize,
    pub blocks: usize,
}

impl SampleCounts {
    pub fn of(res: &ResidualSet, map: &ActivityMap) -> Self {
        Self {
            dfd: res.dfd_samples.len(),
            fd: res.fd_samples.len(),
            blocks: map.labels.len(),
        }
    }
}

/// Sample-weighted combination of per-pair estimates: variances of each
/// stream and `rho_i` are weighted by that stream's sample count, `lambda_m`
/// by block count. Returns `None` for an empty slice.
pub fn pool_params(items: &[(ModelParams, SampleCounts)]) -> Option<ModelParams> {
    let (first, _) = items.first()?;
    let weighted = |value: fn(&ModelParams) -> f64, weight: fn(&SampleCounts) -> usize| {
        let total: usize = items.iter().map(|(_, c)| weight(c)).sum();
        if total == 0 {
            return 0.0;
        }
        items.iter().map(|(p, c)| value(p) * weight(c) as f64).sum::<f64>() / total as f64
    };
    Some(ModelParams {
        sigma2_a: weighted(|p| p.sigma2_a, |c| c.dfd),
        sigma2_i: weighted(|p| p.sigma2_i, |c| c.fd),
        rho_i: weighted(|p| p.rho_i, |c| c.fd).clamp(-MAX_ABS_RHO, MAX_ABS_RHO),
        lambda_m: weighted(|p| p.lambda_m, |c| c.blocks),
        b_m: first.b_m,
        block_w: first.block_w,
        block_h: first.block_h,
    })
}

/// Population variance about the sample mean; 0 for an empty slice.
pub fn population_variance(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Pearson correlation of a set of pairs, produced twice by `pairs` (once
/// for the means, once for the moments). `None` when there are no pairs or
/// either coordinate has zero spread.
fn pearson<I>(pairs: impl Fn() -> I) -> Option<f64>
where
    I: Iterator<Item = (f64, f64)>,
{
    let (mut n, mut sx, mut sy) = (0usize, 0.0, 0.0);
    for (x, y) in pairs() {
        n += 1;
        sx += x;
        sy += y;
    }
    if n == 0 {
        return None;
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs() {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Horizontal and vertical lag-1 correlations over neighbour pairs inside
/// each block of a stream laid out block by block.
pub fn within_block_lag1(samples: &[f64], block_w: usize, block_h: usize) -> (Option<f64>, Option<f64>) {
    let area = block_w * block_h;
    if area == 0 {
        return (None, None);
    }
    let blocks = || samples.chunks_exact(area);
    let horizontal = pearson(|| {
        blocks().flat_map(move |blk| {
            blk.chunks_exact(block_w)
                .flat_map(|row| row.windows(2).map(|w| (w[0], w[1])))
        })
    });
    let vertical = pearson(|| {
        blocks().flat_map(move |blk| {
            (0..block_h.saturating_sub(1))
                .flat_map(move |r| (0..block_w).map(move |c| (blk[r * block_w + c], blk[(r + 1) * block_w + c])))
        })
    });
    (horizontal, vertical)
}

/// Estimates the model parameters of one frame pair.
///
/// Variances are population variances of each stream; `rho_i` averages the
/// horizontal and vertical lag-1 correlations of FD samples, counting only
/// neighbour pairs inside the same block. Empty or flat streams give zeros.
pub fn estimate_params(res: &ResidualSet, map: &ActivityMap, field: &MotionField) -> ModelParams {
    let grid: BlockGrid = map.grid;
    debug_assert_eq!(grid, field.grid);
    let (h, v) = within_block_lag1(&res.fd_samples, grid.block_w, grid.block_h);
    let defined: Vec<f64> = [h, v].into_iter().flatten().collect();
    let rho_i = if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    ModelParams {
        sigma2_a: population_variance(&res.dfd_samples),
        sigma2_i: population_variance(&res.fd_samples),
        rho_i: rho_i.clamp(-MAX_ABS_RHO, MAX_ABS_RHO),
        lambda_m: map.lambda_m,
        b_m: f64::from(field.b_m),
        block_w: grid.block_w,
        block_h: grid.block_h,
    }
}

/// Frame-to-frame correlation between anchor and target samples at the
/// pixels of inactive blocks. Reported for inspection only; 0 when
/// undefined.
pub fn temporal_correlation(anchor: &Frame, target: &Frame, map: &ActivityMap) -> f64 {
    let grid = map.grid;
    let pixels = || {
        map.labels
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_active())
            .flat_map(move |(b, _)| {
                let (x0, y0) = grid.origin(b);
                (y0..y0 + grid.block_h)
                    .flat_map(move |y| (x0..x0 + grid.block_w).map(move |x| (anchor.get(x, y), target.get(x, y))))
            })
    };
    pearson(pixels).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    /// Lower edge; `-inf` for the lower overflow bin.
    pub lo: f64,
    /// Upper edge; `+inf` for the upper overflow bin.
    pub hi: f64,
    /// Fraction of samples falling in the bin.
    pub mass: f64,
    /// Mass the fitted Gaussian assigns to the bin.
    pub gaussian_mass: f64,
}

impl HistogramBin {
    pub fn is_overflow(&self) -> bool {
        !self.lo.is_finite() || !self.hi.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Lower overflow bin, the regular bins, then the upper overflow bin.
    /// Masses sum to 1.
    pub histogram: Vec<HistogramBin>,
    pub fitted_sigma2: f64,
    /// `sum p ln(p / q)` over non-empty bins, in nats.
    pub kl_divergence: f64,
    /// Set when every sample is identical. The histogram then holds a
    /// single bin and the divergence is reported as 0.
    pub degenerate: bool,
}

#[derive(Serialize)]
struct FitRow {
    bin_center: f64,
    empirical_density: f64,
    gaussian_density: f64,
}

impl FitReport {
    /// CSV with `bin_center,empirical_density,gaussian_density`, one row per
    /// regular bin. Overflow bins have no finite width and are omitted.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut wrote = false;
        for bin in self.histogram.iter().filter(|b| !b.is_overflow()) {
            let width = bin.hi - bin.lo;
            let (emp, gau) = if width > 0.0 {
                (bin.mass / width, bin.gaussian_mass / width)
            } else {
                (bin.mass, bin.gaussian_mass)
            };
            w.serialize(FitRow {
                bin_center: 0.5 * (bin.lo + bin.hi),
                empirical_density: emp,
                gaussian_density: gau,
            })?;
            wrote = true;
        }
        if !wrote {
            w.write_record(["bin_center", "empirical_density", "gaussian_density"])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn normal_cdf(x: f64, sigma: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(-x / (sigma * std::f64::consts::SQRT_2))
}

/// Histograms the FD stream over `[-4 sigma, 4 sigma]` with `bins` regular
/// bins plus two overflow bins, and measures its divergence from the
/// zero-mean Gaussian with the stream's variance.
pub fn fit_gauss_markov(res: &ResidualSet, bins: usize) -> Result<FitReport> {
    let samples = &res.fd_samples;
    if samples.is_empty() {
        return Err(Error::InsufficientData("FD stream is empty".into()));
    }
    if bins < 8 {
        return Err(Error::Config(format!("need at least 8 bins, got {bins}")));
    }
    let sigma2 = population_variance(samples);
    if sigma2 <= 0.0 {
        let v = samples[0];
        return Ok(FitReport {
            histogram: vec![HistogramBin {
                lo: v,
                hi: v,
                mass: 1.0,
                gaussian_mass: if v == 0.0 { 1.0 } else { 0.0 },
            }],
            fitted_sigma2: 0.0,
            kl_divergence: 0.0,
            degenerate: true,
        });
    }
    let sigma = sigma2.sqrt();
    let half = SUPPORT_SIGMAS * sigma;
    let width = 2.0 * half / bins as f64;

    // counts[0] and counts[bins + 1] are the overflow bins.
    let mut counts = vec![0usize; bins + 2];
    for &s in samples {
        let slot = if s < -half {
            0
        } else if s >= half {
            bins + 1
        } else {
            1 + (((s + half) / width) as usize).min(bins - 1)
        };
        counts[slot] += 1;
    }

    let edge = |i: usize| -half + i as f64 * width;
    let n = samples.len() as f64;
    let histogram: Vec<HistogramBin> = counts
        .iter()
        .enumerate()
        .map(|(slot, &c)| {
            let (lo, hi) = match slot {
                0 => (f64::NEG_INFINITY, -half),
                s if s == bins + 1 => (half, f64::INFINITY),
                s => (edge(s - 1), if s == bins { half } else { edge(s) }),
            };
            HistogramBin {
                lo,
                hi,
                mass: c as f64 / n,
                gaussian_mass: normal_cdf(hi, sigma) - normal_cdf(lo, sigma),
            }
        })
        .collect();

    let kl_divergence = histogram
        .iter()
        .filter(|b| b.mass > 0.0)
        .map(|b| {
            if b.gaussian_mass > 0.0 {
                b.mass * (b.mass / b.gaussian_mass).ln()
            } else {
                f64::INFINITY
            }
        })
        .sum::<f64>()
        .max(0.0);

    Ok(FitReport {
        histogram,
        fitted_sigma2: sigma2,
        kl_divergence,
        degenerate: false,
    })
}
