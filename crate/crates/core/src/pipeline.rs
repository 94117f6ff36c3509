//! End-to-end runs: classification, motion search, residual statistics,
//! theoretical curves and the empirical sweep, with their file outputs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::activity::{classify, difference_image, ActivityMap, BlockGrid, Thresholds, DEFAULT_T_G};
use crate::coder::{measure, write_sweep_csv, EmpiricalPoint, QuantizerSpec, SweepRow};
use crate::error::{Error, Result};
use crate::frame::{read_raw_yuv420, VideoSequence};
use crate::motion::{default_bits_per_vector, estimate_motion, extract_residuals, MotionField, DEFAULT_SEARCH_RANGE};
use crate::rd::{generate_curve, rate_combined, write_curves_csv, CurveMode, RdCurve};
use crate::stats::{
    estimate_params, fit_gauss_markov, pool_params, temporal_correlation, FitReport, ModelParams, SampleCounts,
    DEFAULT_BINS,
};
use crate::synth::{synthesize, SyntheticSpec};

pub const DEFAULT_BLOCK: usize = 16;
pub const DEFAULT_STEPS: [f64; 10] = [0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0];
pub const DEFAULT_D_GRID: (f64, f64, usize) = (0.1, 100.0, 50);
pub const DEFAULT_SLACK: f64 = 0.05;
pub const DEFAULT_SYNTH_FRAMES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    /// Raw planar 8-bit 4:2:0 file.
    Raw(PathBuf),
    /// Generated source and the number of frames to generate.
    Synthetic { spec: SyntheticSpec, frames: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: InputSource,
    pub width: usize,
    pub height: usize,
    /// Square block size in pixels.
    pub block: usize,
    pub t_g: f64,
    /// Defaults to an eighth of the block area.
    pub t_p: Option<usize>,
    pub range: u32,
    /// Defaults to a fixed-length code for the search range.
    pub b_m: Option<u32>,
    pub steps: Vec<f64>,
    /// `(d_min, d_max, n)`.
    pub d_grid: (f64, f64, usize),
    pub output_dir: PathBuf,
    /// Overrides the synthetic spec's seed when set.
    pub seed: Option<u64>,
    pub bins: usize,
    /// Allowed shortfall of an empirical rate below the theoretical bound.
    pub slack: f64,
    /// Also write per-pair parameters.
    pub per_pair: bool,
    /// Also write every activity map and motion field.
    pub dump_fields: bool,
}

impl RunConfig {
    pub fn new(input: InputSource, width: usize, height: usize, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            input,
            width,
            height,
            block: DEFAULT_BLOCK,
            t_g: DEFAULT_T_G,
            t_p: None,
            range: DEFAULT_SEARCH_RANGE,
            b_m: None,
            steps: DEFAULT_STEPS.to_vec(),
            d_grid: DEFAULT_D_GRID,
            output_dir: output_dir.into(),
            seed: None,
            bins: DEFAULT_BINS,
            slack: DEFAULT_SLACK,
            per_pair: false,
            dump_fields: false,
        }
    }

    pub fn bits_per_vector(&self) -> u32 {
        self.b_m.unwrap_or_else(|| default_bits_per_vector(self.range))
    }

    pub fn grid(&self) -> Result<BlockGrid> {
        BlockGrid::for_frame(self.width, self.height, self.block, self.block)
    }

    pub fn thresholds(&self, grid: &BlockGrid) -> Thresholds {
        Thresholds {
            t_g: self.t_g,
            t_p: self.t_p.unwrap_or(grid.block_area() / 8),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.thresholds(&grid).validate(&grid)?;
        for &s in &self.steps {
            QuantizerSpec::new(s)?;
        }
        let (d_min, d_max, n) = self.d_grid;
        crate::rd::log_grid(d_min, d_max, n)?;
        if !(self.slack >= 0.0) {
            return Err(Error::Config(format!("slack must be >= 0, got {}", self.slack)));
        }
        Ok(())
    }

    pub fn load(&self) -> Result<VideoSequence> {
        let seq = match &self.input {
            InputSource::Raw(path) => read_raw_yuv420(path, self.width, self.height)?,
            InputSource::Synthetic { spec, frames } => {
                let mut spec = spec.clone();
                if let Some(seed) = self.seed {
                    spec.seed = seed;
                }
                synthesize(&spec, self.width, self.height, *frames)?
            }
        };
        if seq.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 frames for analysis, got {}",
                seq.len()
            )));
        }
        Ok(seq)
    }
}

/// Everything computed for one consecutive frame pair.
#[derive(Debug, Clone)]
pub struct PairAnalysis {
    pub map: ActivityMap,
    pub field: MotionField,
    pub params: ModelParams,
    pub counts: SampleCounts,
    pub temporal_rho: f64,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    /// Sample-weighted pooled parameters.
    pub params: ModelParams,
    /// Fit of the pooled FD stream; `None` when no inactive block exists.
    pub fit: Option<FitReport>,
    pub pairs: Vec<PairAnalysis>,
}

/// Runs classification, motion search and parameter estimation on every
/// consecutive pair of `seq`.
pub fn analyze_sequence(seq: &VideoSequence, cfg: &RunConfig) -> Result<Analysis> {
    cfg.validate()?;
    if seq.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 frames".into()));
    }
    let (w, h) = seq.dims().unwrap_or((0, 0));
    let grid = BlockGrid::for_frame(w, h, cfg.block, cfg.block)?;
    let th = cfg.thresholds(&grid);
    let b_m = cfg.bits_per_vector();

    let frames = seq.frames();
    let per_pair = (1..frames.len())
        .into_par_iter()
        .map(|k| {
            let (anchor, target) = (&frames[k - 1], &frames[k]);
            let map = classify(&difference_image(anchor, target)?, &grid, &th)?;
            let field = estimate_motion(anchor, target, &map, cfg.range, b_m)?;
            let res = extract_residuals(anchor, target, &map, &field)?;
            let params = estimate_params(&res, &map, &field);
            let pair = PairAnalysis {
                counts: SampleCounts::of(&res, &map),
                temporal_rho: temporal_correlation(anchor, target, &map),
                map,
                field,
                params,
            };
            Ok((pair, res.fd_samples))
        })
        .collect::<Result<Vec<_>>>()?;

    let pooled = pool_params(&per_pair.iter().map(|(p, _)| (p.params, p.counts)).collect::<Vec<_>>())
        .ok_or_else(|| Error::InsufficientData("no frame pairs".into()))?;
    let mut fd_all = Vec::with_capacity(per_pair.iter().map(|(_, fd)| fd.len()).sum());
    let mut pairs = Vec::with_capacity(per_pair.len());
    for (pair, fd) in per_pair {
        fd_all.extend(fd);
        pairs.push(pair);
    }
    let fit = if fd_all.is_empty() {
        None
    } else {
        Some(fit_gauss_markov(
            &crate::motion::ResidualSet {
                dfd_samples: Vec::new(),
                fd_samples: fd_all,
            },
            cfg.bins,
        )?)
    };
    Ok(Analysis {
        params: pooled,
        fit,
        pairs,
    })
}

#[derive(Serialize)]
struct PairJson<'a> {
    pair: usize,
    params: &'a ModelParams,
    dfd_samples: usize,
    fd_samples: usize,
    temporal_rho: f64,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn write_analysis(analysis: &Analysis, cfg: &RunConfig) -> Result<()> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    write_text(&dir.join("params.json"), &(analysis.params.to_json()? + "\n"))?;
    let fit_file = fs::File::create(dir.join("fit.csv"))?;
    match &analysis.fit {
        Some(fit) => fit.write_csv(fit_file)?,
        None => FitReport {
            histogram: Vec::new(),
            fitted_sigma2: 0.0,
            kl_divergence: 0.0,
            degenerate: true,
        }
        .write_csv(fit_file)?,
    }
    if cfg.per_pair {
        let rows: Vec<PairJson> = analysis
            .pairs
            .iter()
            .enumerate()
            .map(|(i, p)| PairJson {
                pair: i,
                params: &p.params,
                dfd_samples: p.counts.dfd,
                fd_samples: p.counts.fd,
                temporal_rho: p.temporal_rho,
            })
            .collect();
        write_text(&dir.join("pairs.json"), &(serde_json::to_string_pretty(&rows)? + "\n"))?;
    }
    if cfg.dump_fields {
        for (i, p) in analysis.pairs.iter().enumerate() {
            write_text(&dir.join(format!("pair_{i:04}_activity.json")), &(p.map.to_json()? + "\n"))?;
            write_text(&dir.join(format!("pair_{i:04}_motion.json")), &(p.field.to_json()? + "\n"))?;
        }
    }
    Ok(())
}

/// Loads the input, analyzes every frame pair and writes `params.json` and
/// `fit.csv` (plus optional per-pair files) to the output directory.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<Analysis> {
    cfg.validate()?;
    let seq = cfg.load()?;
    let analysis = analyze_sequence(&seq, cfg)?;
    write_analysis(&analysis, cfg)?;
    Ok(analysis)
}

/// The combined, all-active and all-inactive curves over `d_grid`.
pub fn theory_curves(params: &ModelParams, d_grid: (f64, f64, usize), include_mv: bool) -> Result<Vec<RdCurve>> {
    let (d_min, d_max, n) = d_grid;
    [CurveMode::Combined, CurveMode::AllActive, CurveMode::AllInactive]
        .into_iter()
        .map(|mode| generate_curve(params, d_min, d_max, n, mode, include_mv))
        .collect()
}

/// Writes the three theoretical curves to `path` as CSV.
pub fn cmd_curves(params: &ModelParams, d_grid: (f64, f64, usize), include_mv: bool, path: &Path) -> Result<Vec<RdCurve>> {
    params.validate()?;
    let curves = theory_curves(params, d_grid, include_mv)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_curves_csv(&curves, fs::File::create(path)?)?;
    Ok(curves)
}

/// One quantizer step of the empirical sweep with its bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCheck {
    pub step: f64,
    pub point: EmpiricalPoint,
    /// Theoretical combined rate (motion term included) at the measured
    /// distortion; `None` for a zero-distortion point.
    pub theory_rate: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub analysis: Analysis,
    pub curves: Vec<RdCurve>,
    pub sweep: Vec<SweepCheck>,
    pub slack: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.sweep.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SweepCheck> {
        self.sweep.iter().filter(|c| !c.passed)
    }
}

/// Measures one pooled empirical point per quantizer step.
pub fn empirical_sweep(seq: &VideoSequence, analysis: &Analysis, steps: &[f64]) -> Result<Vec<(f64, EmpiricalPoint)>> {
    let frames = seq.frames();
    steps
        .iter()
        .map(|&step| {
            let q = QuantizerSpec::new(step)?;
            let points = analysis
                .pairs
                .par_iter()
                .enumerate()
                .map(|(k, pair)| {
                    let p = measure(&frames[k], &frames[k + 1], &pair.map, &pair.field, &q)?;
                    Ok((p, pair.map.grid.block_count() * pair.map.grid.block_area()))
                })
                .collect::<Result<Vec<_>>>()?;
            let pooled = EmpiricalPoint::pooled(&points)
                .ok_or_else(|| Error::InsufficientData("no pixels to measure".into()))?;
            Ok((step, pooled))
        })
        .collect()
}

/// Checks `rate >= theory(distortion) - slack` for every sweep point.
pub fn check_sweep(params: &ModelParams, sweep: &[(f64, EmpiricalPoint)], slack: f64) -> Result<Vec<SweepCheck>> {
    sweep
        .iter()
        .map(|&(step, point)| {
            if point.distortion <= 0.0 {
                return Ok(SweepCheck {
                    step,
                    point,
                    theory_rate: None,
                    passed: true,
                });
            }
            let theory = rate_combined(params, point.distortion, point.distortion, true)?;
            Ok(SweepCheck {
                step,
                point,
                theory_rate: Some(theory),
                passed: point.rate_total >= theory - slack,
            })
        })
        .collect()
}

/// Full validation run: analysis, theoretical curves, the empirical sweep
/// and the bound check. Writes `params.json`, `fit.csv` and `validate.csv`.
pub fn cmd_validate(cfg: &RunConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    let seq = cfg.load()?;
    let analysis = analyze_sequence(&seq, cfg)?;
    write_analysis(&analysis, cfg)?;

    let curves = theory_curves(&analysis.params, cfg.d_grid, true)?;
    let raw = empirical_sweep(&seq, &analysis, &cfg.steps)?;
    let sweep = check_sweep(&analysis.params, &raw, cfg.slack)?;

    let mut rows: Vec<SweepRow> = curves.iter().flat_map(RdCurve::rows).map(SweepRow::theory).collect();
    rows.extend(
        sweep
            .iter()
            .map(|c| SweepRow::empirical(&c.point, c.step, &analysis.params)),
    );
    write_sweep_csv(&rows, fs::File::create(cfg.output_dir.join("validate.csv"))?)?;

    Ok(ValidationReport {
        analysis,
        curves,
        sweep,
        slack: cfg.slack,
    })
}
