//! `rdmotion` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when `validate`
//! finds an empirical point below the theoretical bound.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rdmotion_core::pipeline::{
    cmd_analyze, cmd_curves, cmd_validate, Analysis, InputSource, RunConfig, DEFAULT_BLOCK, DEFAULT_D_GRID,
    DEFAULT_SLACK, DEFAULT_STEPS, DEFAULT_SYNTH_FRAMES,
};
use rdmotion_core::stats::DEFAULT_BINS;
use rdmotion_core::{synthesize, write_raw_yuv420, ModelParams, SourceKind, SyntheticSpec};

const RATE_NOTE: &str = "rates are bits per luminance pixel; divide by 1.5 for bits per 4:2:0 sample";

#[derive(Parser, Debug)]
#[command(name = "rdmotion", version, about = "Rate-distortion analysis of motion-compensated video")]
#[command(after_help = "Rates are reported in bits per luminance pixel. A rate normalized by the full \
4:2:0 file size (luma plus chroma) is smaller by a fixed factor of 1.5.\n\n\
Exit codes: 0 success, 1 usage or input error, 2 validation failure.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate model parameters; writes params.json and fit.csv.
    Analyze(RunArgs),
    /// Theoretical curves (combined, all-active, all-inactive) from params.json.
    Curves(CurvesArgs),
    /// Analysis, curves and an empirical quantizer sweep checked against the bound.
    Validate(RunArgs),
    /// Write a synthetic sequence as a raw 4:2:0 file.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "source")]
struct SourceArgs {
    /// Raw planar 8-bit 4:2:0 input file
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Synthetic source spec (JSON) used instead of a file
    #[arg(long, value_name = "SPEC.json")]
    synth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Frame width in pixels
    #[arg(long)]
    width: usize,
    /// Frame height in pixels
    #[arg(long)]
    height: usize,
    /// Frames to generate with --synth
    #[arg(long, default_value_t = DEFAULT_SYNTH_FRAMES)]
    frames: usize,
    /// Square block size in pixels
    #[arg(long, default_value_t = DEFAULT_BLOCK)]
    block: usize,
    /// Pixel threshold on |target - anchor|
    #[arg(long, default_value_t = rdmotion_core::activity::DEFAULT_T_G)]
    t_g: f64,
    /// Changed-pixel count above which a block is active [default: block area / 8]
    #[arg(long)]
    t_p: Option<usize>,
    /// Motion search range in pixels
    #[arg(long, default_value_t = rdmotion_core::motion::DEFAULT_SEARCH_RANGE)]
    range: u32,
    /// Bits per motion vector [default: fixed-length code for the range]
    #[arg(long)]
    bits_per_mv: Option<u32>,
    /// Quantizer steps for the empirical sweep
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_STEPS.to_vec())]
    steps: Vec<f64>,
    /// Smallest distortion of the theoretical grid
    #[arg(long, default_value_t = DEFAULT_D_GRID.0)]
    d_min: f64,
    /// Largest distortion of the theoretical grid
    #[arg(long, default_value_t = DEFAULT_D_GRID.1)]
    d_max: f64,
    /// Number of grid points
    #[arg(long, default_value_t = DEFAULT_D_GRID.2)]
    n: usize,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Overrides the seed of the synthetic spec
    #[arg(long)]
    seed: Option<u64>,
    /// Histogram bins for the Gauss-Markov fit
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Allowed shortfall below the theoretical rate, bits per pixel
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    slack: f64,
    /// Also write per-pair parameters to pairs.json
    #[arg(long)]
    per_pair: bool,
    /// Also write every activity map and motion field
    #[arg(long)]
    dump_fields: bool,
}

#[derive(Args, Debug)]
struct CurvesArgs {
    /// Parameters as written by `analyze`
    #[arg(long, value_name = "FILE")]
    params: PathBuf,
    #[arg(long, default_value_t = DEFAULT_D_GRID.0)]
    d_min: f64,
    #[arg(long, default_value_t = DEFAULT_D_GRID.1)]
    d_max: f64,
    #[arg(long, default_value_t = DEFAULT_D_GRID.2)]
    n: usize,
    /// Add the motion-vector rate to the active stream
    #[arg(long)]
    include_mv: bool,
    /// Output CSV file
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Spec file; the flags below are used when absent
    #[arg(long, value_name = "SPEC.json")]
    spec: Option<PathBuf>,
    /// ar1-field, moving-rect, white-noise or constant
    #[arg(long, default_value = "ar1-field", value_parser = parse_kind)]
    kind: SourceKind,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 25.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 128.0)]
    mean: f64,
    /// Per-frame rectangle displacement "dx,dy"
    #[arg(long, default_value = "0,0", value_parser = parse_motion, allow_hyphen_values = true)]
    motion: (i32, i32),
    /// Seed; overrides the spec file's seed when given
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long, default_value_t = DEFAULT_SYNTH_FRAMES)]
    frames: usize,
    /// Output raw 4:2:0 file
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn parse_kind(s: &str) -> Result<SourceKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|_| format!("unknown source kind `{s}`"))
}

fn parse_motion(s: &str) -> Result<(i32, i32), String> {
    let (dx, dy) = s.split_once(',').ok_or("expected dx,dy")?;
    let p = |t: &str| t.trim().parse::<i32>().map_err(|e| format!("{t}: {e}"));
    Ok((p(dx)?, p(dy)?))
}

fn read_spec(path: &Path) -> anyhow::Result<SyntheticSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec: SyntheticSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(spec)
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let input = match (&self.source.input, &self.source.synth) {
            (Some(path), None) => InputSource::Raw(path.clone()),
            (None, Some(spec)) => InputSource::Synthetic {
                spec: read_spec(spec)?,
                frames: self.frames,
            },
            _ => bail!("exactly one of --input or --synth is required"),
        };
        let mut cfg = RunConfig::new(input, self.width, self.height, &self.out);
        cfg.block = self.block;
        cfg.t_g = self.t_g;
        cfg.t_p = self.t_p;
        cfg.range = self.range;
        cfg.b_m = self.bits_per_mv;
        cfg.steps = self.steps.clone();
        cfg.d_grid = (self.d_min, self.d_max, self.n);
        cfg.seed = self.seed;
        cfg.bins = self.bins;
        cfg.slack = self.slack;
        cfg.per_pair = self.per_pair;
        cfg.dump_fields = self.dump_fields;
        Ok(cfg)
    }
}

fn print_analysis(a: &Analysis) {
    let p = &a.params;
    println!("pairs      {}", a.pairs.len());
    println!("lambda_m   {:.6}", p.lambda_m);
    println!("sigma2_a   {:.6}", p.sigma2_a);
    println!("sigma2_i   {:.6}", p.sigma2_i);
    println!("rho_i      {:.6}", p.rho_i);
    println!("b_m        {}", p.b_m);
    if let Some(fit) = &a.fit {
        println!("fd fit     sigma2 {:.6}  kl {:.6}", fit.fitted_sigma2, fit.kl_divergence);
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Analyze(args) => {
            let cfg = args.config()?;
            let analysis = cmd_analyze(&cfg)?;
            print_analysis(&analysis);
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Curves(args) => {
            let text = fs::read_to_string(&args.params).with_context(|| format!("reading {}", args.params.display()))?;
            let params = ModelParams::from_json(&text)?;
            let curves = cmd_curves(&params, (args.d_min, args.d_max, args.n), args.include_mv, &args.out)?;
            let rows: usize = curves.iter().map(|c| c.points.len()).sum();
            println!("wrote {} rows to {} ({RATE_NOTE})", rows, args.out.display());
        }
        Command::Validate(args) => {
            let cfg = args.config()?;
            let report = cmd_validate(&cfg)?;
            print_analysis(&report.analysis);
            println!("{RATE_NOTE}");
            println!("{:>8} {:>12} {:>12} {:>12} {:>6}", "step", "distortion", "rate", "bound", "ok");
            for c in &report.sweep {
                let bound = c.theory_rate.map_or_else(|| "-".to_owned(), |t| format!("{t:.6}"));
                println!(
                    "{:>8} {:>12.6} {:>12.6} {:>12} {:>6}",
                    c.step, c.point.distortion, c.point.rate_total, bound, c.passed
                );
            }
            println!("wrote {}", cfg.output_dir.display());
            if !report.passed() {
                for c in report.failures() {
                    eprintln!(
                        "bound violated: step {} distortion {:.6} rate {:.6} < bound {:.6} - slack {}",
                        c.step,
                        c.point.distortion,
                        c.point.rate_total,
                        c.theory_rate.unwrap_or(f64::NAN),
                        report.slack
                    );
                }
                return Ok(ExitCode::from(2));
            }
        }
        Command::Synth(args) => {
            let mut spec = match &args.spec {
                Some(path) => read_spec(path)?,
                None => SyntheticSpec {
                    kind: args.kind,
                    rho: args.rho,
                    sigma2: args.sigma2,
                    mean: args.mean,
                    motion: args.motion,
                    seed: 0,
                },
            };
            if let Some(seed) = args.seed {
                spec.seed = seed;
            }
            let seq = synthesize(&spec, args.width, args.height, args.frames)?;
            write_raw_yuv420(&seq, &args.out)?;
            println!("wrote {} frames to {}", seq.len(), args.out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
