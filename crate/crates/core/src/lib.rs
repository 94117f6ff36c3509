//! Conditional motion estimation and rate-distortion modeling for
//! motion-compensated video.
//!
//! The crate is organized along the analysis pipeline:
//!
//! * [`frame`] and [`synth`]: luminance frames, raw 4:2:0 I/O and synthetic
//!   sources with known statistics.
//! * [`activity`]: difference images and active/inactive block labels.
//! * [`motion`]: diamond-search block matching, motion compensation and
//!   residual extraction.
//! * [`stats`]: model parameter estimation and the Gauss-Markov fit check.
//! * [`rd`]: closed-form rate expressions and theoretical R-D curves.
//! * [`coder`]: a quantize-and-measure coder producing empirical R-D points.
//! * [`pipeline`]: end-to-end orchestration used by the command-line tool.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activity;
pub mod coder;
mod error;
pub mod frame;
pub mod motion;
pub mod pipeline;
pub mod rd;
pub mod stats;
pub mod synth;

pub use activity::{classify, difference_image, ActivityMap, BlockClass, BlockGrid, Thresholds};
pub use coder::{entropy_rate, measure, quantize, EmpiricalPoint, Quantized, QuantizerSpec};
pub use error::{Error, Result};
pub use frame::{read_raw_yuv420, write_raw_yuv420, Frame, VideoSequence};
pub use motion::{
    diamond_search, estimate_motion, extract_residuals, motion_compensate, MotionField,
    MotionVector, ResidualSet,
};
pub use rd::{
    generate_curve, rate_active, rate_combined, rate_inactive, rate_motion, CurveMode, RdCurve,
    RdPoint, RdSource,
};
pub use stats::{estimate_params, fit_gauss_markov, FitReport, ModelParams};
pub use synth::{synthesize, SourceKind, SyntheticSpec};
