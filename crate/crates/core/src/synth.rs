//! Synthetic sources with known statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoSequence};

/// Intensity offset of the rectangle drawn by [`SourceKind::MovingRect`].
pub const RECT_CONTRAST: f64 = 96.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// First-order Gauss-Markov field, drawn independently for every frame.
    Ar1Field,
    /// A bright rectangle moving over a flat background, with optional
    /// additive Gauss-Markov noise drawn fresh for every frame.
    MovingRect,
    /// I.i.d. Gaussian samples, drawn independently for every frame.
    WhiteNoise,
    /// Every sample equals `mean`.
    Constant,
}

/// Description of a synthetic source. Deserializes from JSON with these
/// field names; omitted fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SourceKind,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub sigma2: f64,
    #[serde(default = "default_mean")]
    pub mean: f64,
    /// Integer `(dx, dy)` displacement per frame.
    #[serde(default)]
    pub motion: (i32, i32),
    #[serde(default)]
    pub seed: u64,
}

fn default_mean() -> f64 {
    128.0
}

impl SyntheticSpec {
    pub fn new(kind: SourceKind) -> Self {
        Self {
            kind,
            rho: 0.0,
            sigma2: 0.0,
            mean: default_mean(),
            motion: (0, 0),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::Config(format!("sigma2 must be >= 0, got {}", self.sigma2)));
        }
        if !self.mean.is_finite() {
            return Err(Error::Config("mean must be finite".into()));
        }
        Ok(())
    }
}

/// Size of the moving rectangle for a `width` x `height` frame.
pub fn rect_size(width: usize, height: usize) -> (usize, usize) {
    ((width / 4).max(1), (height / 4).max(1))
}

/// Top-left corner of the moving rectangle in frame `index`. May lie
/// partly or wholly outside the frame once the rectangle has drifted.
pub fn rect_origin(spec: &SyntheticSpec, width: usize, height: usize, index: usize) -> (i64, i64) {
    let (x0, y0) = ((width / 4) as i64, (height / 4) as i64);
    let k = index as i64;
    (x0 + k * i64::from(spec.motion.0), y0 + k * i64::from(spec.motion.1))
}

/// Separable first-order Gauss-Markov field with unit lag-1 correlation
/// `rho` along both rows and columns and marginal variance `sigma2`.
/// Row 0 and column 0 are stationary 1-D AR(1) scans; the interior follows
/// `x[r][c] = rho*x[r][c-1] + rho*x[r-1][c] - rho^2*x[r-1][c-1] + (1-rho^2)*sigma*w`.
fn gauss_markov_field(
    rng: &mut ChaCha8Rng,
    width: usize,
    height: usize,
    rho: f64,
    sigma2: f64,
) -> Vec<f64> {
    let sigma = sigma2.sqrt();
    let edge_gain = (1.0 - rho * rho).sqrt() * sigma;
    let inner_gain = (1.0 - rho * rho) * sigma;
    let mut draw = || -> f64 { StandardNormal.sample(rng) };
    let mut x = vec![0.0; width * height];
    for r in 0..height {
        for c in 0..width {
            let w = draw();
            let v = match (r, c) {
                (0, 0) => sigma * w,
                (0, _) => rho * x[c - 1] + edge_gain * w,
                (_, 0) => rho * x[(r - 1) * width] + edge_gain * w,
                _ => {
                    let left = x[r * width + c - 1];
                    let up = x[(r - 1) * width + c];
                    let diag = x[(r - 1) * width + c - 1];
                    rho * left + rho * up - rho * rho * diag + inner_gain * w
                }
            };
            x[r * width + c] = v;
        }
    }
    x
}

/// Generates `n_frames` frames of the described source. Output is a pure
/// function of `(spec, width, height, n_frames)`.
pub fn synthesize(spec: &SyntheticSpec, width: usize, height: usize, n_frames: usize) -> Result<VideoSequence> {
    spec.validate()?;
    if n_frames == 0 {
        return Err(Error::Config("n_frames must be at least 1".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::Config(format!("frame dimensions must be positive, got {width}x{height}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut frames = Vec::with_capacity(n_frames);
    for index in 0..n_frames {
        let samples = match spec.kind {
            SourceKind::Constant => vec![spec.mean; width * height],
            SourceKind::WhiteNoise => {
                let sigma = spec.sigma2.sqrt();
                (0..width * height)
                    .map(|_| {
                        let w: f64 = StandardNormal.sample(&mut rng);
                        spec.mean + sigma * w
                    })
                    .collect()
            }
            SourceKind::Ar1Field => gauss_markov_field(&mut rng, width, height, spec.rho, spec.sigma2)
                .into_iter()
                .map(|v| v + spec.mean)
                .collect(),
            SourceKind::MovingRect => {
                let mut samples = if spec.sigma2 > 0.0 {
                    gauss_markov_field(&mut rng, width, height, spec.rho, spec.sigma2)
                        .into_iter()
                        .map(|v| v + spec.mean)
                        .collect()
                } else {
                    vec![spec.mean; width * height]
                };
                let (rw, rh) = rect_size(width, height);
                let (ox, oy) = rect_origin(spec, width, height, index);
                let xs = ox.max(0)..(ox + rw as i64).min(width as i64);
                let ys = oy.max(0)..(oy + rh as i64).min(height as i64);
                for y in ys {
                    for x in xs.clone() {
                        samples[y as usize * width + x as usize] += RECT_CONTRAST;
                    }
                }
                samples
            }
        };
        frames.push(Frame::new(width, height, samples)?);
    }
    VideoSequence::new(frames, VideoSequence::DEFAULT_FRAME_RATE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan_lag1(samples: &[f64]) -> f64 {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var: f64 = samples.iter().map(|v| (v - mean).powi(2)).sum();
        let cov: f64 = samples.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        cov / var
    }

    #[test]
    fn constant_source() {
        let mut spec = SyntheticSpec::new(SourceKind::Constant);
        spec.mean = 77.0;
        let seq = synthesize(&spec, 8, 6, 3).unwrap();
        assert_eq!(seq.len(), 3);
        assert!(seq.frames().iter().all(|f| f.samples().iter().all(|&v| v == 77.0)));
    }

    #[test]
    fn ar1_scan_correlation() {
        let spec = SyntheticSpec {
            kind: SourceKind::Ar1Field,
            rho: 0.9,
            sigma2: 25.0,
            mean: 0.0,
            motion: (0, 0),
            seed: 11,
        };
        let seq = synthesize(&spec, 512, 512, 1).unwrap();
        let r = scan_lag1(seq.frames()[0].samples());
        assert!((r - 0.9).abs() < 0.02, "lag-1 = {r}");
    }

    #[test]
    fn ar1_with_zero_rho_is_uncorrelated() {
        let spec = SyntheticSpec {
            kind: SourceKind::Ar1Field,
            rho: 0.0,
            sigma2: 25.0,
            mean: 0.0,
            motion: (0, 0),
            seed: 5,
        };
        let seq = synthesize(&spec, 512, 512, 1).unwrap();
        let r = scan_lag1(seq.frames()[0].samples());
        assert!(r.abs() < 0.02, "lag-1 = {r}");
    }

    #[test]
    fn moving_rect_origin_advances() {
        let mut spec = SyntheticSpec::new(SourceKind::MovingRect);
        spec.motion = (3, 2);
        spec.mean = 50.0;
        let seq = synthesize(&spec, 64, 64, 2).unwrap();
        let first_bright = |f: &Frame| {
            (0..64)
                .flat_map(|y| (0..64).map(move |x| (x, y)))
                .find(|&(x, y)| f.get(x, y) > 100.0)
                .unwrap()
        };
        let (x1, y1) = first_bright(&seq.frames()[0]);
        let (x2, y2) = first_bright(&seq.frames()[1]);
        assert_eq!((x2 - x1, y2 - y1), (3, 2));
        assert_eq!(rect_origin(&spec, 64, 64, 1), (16 + 3, 16 + 2));
    }

    #[test]
    fn same_seed_same_output() {
        let spec = SyntheticSpec {
            kind: SourceKind::MovingRect,
            rho: 0.5,
            sigma2: 9.0,
            mean: 100.0,
            motion: (1, -1),
            seed: 42,
        };
        let a = synthesize(&spec, 32, 32, 3).unwrap();
        let b = synthesize(&spec, 32, 32, 3).unwrap();
        assert_eq!(a, b);
        let other = synthesize(&SyntheticSpec { seed: 43, ..spec }, 32, 32, 3).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn rejects_invalid_spec() {
        let mut spec = SyntheticSpec::new(SourceKind::Ar1Field);
        spec.rho = 1.0;
        assert!(synthesize(&spec, 8, 8, 1).is_err());
        spec.rho = 0.5;
        spec.sigma2 = -1.0;
        assert!(synthesize(&spec, 8, 8, 1).is_err());
        spec.sigma2 = 1.0;
        assert!(synthesize(&spec, 8, 8, 0).is_err());
    }

    #[test]
    fn spec_json_field_names() {
        let spec: SyntheticSpec = serde_json::from_str(
            r#"{"kind":"ar1-field","rho":0.9,"sigma2":25,"mean":0,"motion":[3,2],"seed":7}"#,
        )
        .unwrap();
        assert_eq!(spec.kind, SourceKind::Ar1Field);
        assert_eq!(spec.motion, (3, 2));
        let minimal: SyntheticSpec = serde_json::from_str(r#"{"kind":"constant"}"#).unwrap();
        assert_eq!(minimal.mean, 128.0);
    }
}
