//! Luminance frames and raw planar 4:2:0 file I/O.
//!
//! Samples are kept as `f64` so residuals and synthetic draws can be signed
//! and fractional. Conversion to 8-bit only happens when writing files.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A single luminance plane stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if samples.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} frame needs {} samples, got {}",
                width * height,
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    /// Frame with every sample set to `value`.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a frame by evaluating `f(x, y)` at every location.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::new(width, height, samples)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.samples[y * self.width + x] = value;
    }

    /// Row `y` as a slice.
    #[inline]
    pub fn row(&self, y: usize) -> &[f64] {
        &self.samples[y * self.width..(y + 1) * self.width]
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Rounds and clamps every sample to `0..=255`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.samples
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// An ordered list of equally sized frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Frame>,
    /// Frames per second. Carried along as metadata only.
    pub frame_rate: f64,
}

impl VideoSequence {
    pub const DEFAULT_FRAME_RATE: f64 = 30.0;

    pub fn new(frames: Vec<Frame>, frame_rate: f64) -> Result<Self> {
        if let Some(first) = frames.first() {
            if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| !f.same_dims(first)) {
                return Err(Error::Shape(format!(
                    "frame {i} is {}x{}, expected {}x{}",
                    f.width(),
                    f.height(),
                    first.width(),
                    first.height()
                )));
            }
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` of the frames, if there are any.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.frames.first().map(|f| (f.width(), f.height()))
    }

    /// Consecutive `(anchor, target)` pairs.
    pub fn pairs(&self) -> impl Iterator<Item = (&Frame, &Frame)> {
        self.frames.windows(2).map(|w| (&w[0], &w[1]))
    }
}

fn check_420_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Config(format!(
            "frame dimensions must be positive, got {width}x{height}"
        )));
    }
    if !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "4:2:0 input needs even dimensions, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Bytes occupied by one 8-bit 4:2:0 frame.
pub fn yuv420_frame_bytes(width: usize, height: usize) -> usize {
    width * height + 2 * (width / 2) * (height / 2)
}

/// Decodes the luminance planes of an in-memory 4:2:0 stream.
pub fn parse_yuv420(bytes: &[u8], width: usize, height: usize) -> Result<VideoSequence> {
    check_420_dims(width, height)?;
    let frame_bytes = yuv420_frame_bytes(width, height);
    if !bytes.len().is_multiple_of(frame_bytes) {
        let frames = bytes.len() / frame_bytes;
        return Err(Error::MalformedInput(format!(
            "{width}x{height} 4:2:0 stream must be a multiple of {frame_bytes} bytes; \
             expected {} or {} bytes, got {}",
            frames * frame_bytes,
            (frames + 1) * frame_bytes,
            bytes.len()
        )));
    }
    let luma = width * height;
    let frames = bytes
        .chunks_exact(frame_bytes)
        .map(|chunk| Frame::new(width, height, chunk[..luma].iter().map(|&b| f64::from(b)).collect()))
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(frames, VideoSequence::DEFAULT_FRAME_RATE)
}

/// Reads a raw planar 4:2:0 file (Y, then U, then V per frame) and keeps
/// only the luminance planes.
pub fn read_raw_yuv420(path: impl AsRef<Path>, width: usize, height: usize) -> Result<VideoSequence> {
    check_420_dims(width, height)?;
    let bytes = fs::read(path)?;
    parse_yuv420(&bytes, width, height)
}

/// Encodes a sequence as 8-bit 4:2:0 with neutral (128) chroma.
pub fn encode_yuv420(seq: &VideoSequence) -> Result<Vec<u8>> {
    let Some((width, height)) = seq.dims() else {
        return Ok(Vec::new());
    };
    check_420_dims(width, height)?;
    let chroma = 2 * (width / 2) * (height / 2);
    let mut out = Vec::with_capacity(seq.len() * yuv420_frame_bytes(width, height));
    for frame in seq.frames() {
        out.extend(frame.to_u8());
        out.extend(std::iter::repeat_n(128u8, chroma));
    }
    Ok(out)
}

/// Writes a sequence as raw 8-bit 4:2:0, clamping samples to `0..=255`.
pub fn write_raw_yuv420(seq: &VideoSequence, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_yuv420(seq)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}
