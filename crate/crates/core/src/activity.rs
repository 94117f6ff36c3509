//! Difference images and active/inactive block classification.
//!
//! A pixel is active when its absolute frame difference exceeds `t_g`; a
//! block is active when its count of active pixels exceeds `t_p`. Both
//! comparisons are strict. Frames whose dimensions are not multiples of the
//! block size are cropped at the right and bottom edges, and the cropped
//! remainder takes no part in any statistic.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame::Frame;

/// Default pixel-level threshold.
pub const DEFAULT_T_G: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Pixel threshold on the absolute frame difference.
    pub t_g: f64,
    /// Block threshold on the number of active pixels.
    pub t_p: usize,
}

impl Thresholds {
    /// `t_g = 15`, `t_p = block_area / 8`.
    pub fn default_for(grid: &BlockGrid) -> Self {
        Self {
            t_g: DEFAULT_T_G,
            t_p: grid.block_area() / 8,
        }
    }

    pub fn validate(&self, grid: &BlockGrid) -> Result<()> {
        if !(self.t_g >= 0.0) {
            return Err(Error::Config(format!("t_g must be >= 0, got {}", self.t_g)));
        }
        if self.t_p > grid.block_area() {
            return Err(Error::Config(format!(
                "t_p = {} exceeds the block area {}",
                self.t_p,
                grid.block_area()
            )));
        }
        Ok(())
    }
}

/// Tiling of the usable (cropped) part of a frame into equal blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BlockGrid {
    pub block_w: usize,
    pub block_h: usize,
    pub cols: usize,
    pub rows: usize,
}

impl BlockGrid {
    /// Largest grid of `block_w` x `block_h` blocks that fits in the frame.
    pub fn for_frame(width: usize, height: usize, block_w: usize, block_h: usize) -> Result<Self> {
        if block_w == 0 || block_h == 0 {
            return Err(Error::Config("block dimensions must be positive".into()));
        }
        if block_w > width || block_h > height {
            return Err(Error::Config(format!(
                "{block_w}x{block_h} block does not fit in a {width}x{height} frame"
            )));
        }
        Ok(Self {
            block_w,
            block_h,
            cols: width / block_w,
            rows: height / block_h,
        })
    }

    #[inline]
    pub fn block_area(&self) -> usize {
        self.block_w * self.block_h
    }

    #[inline]
    pub fn block_count(&self) -> usize {
        self.cols * self.rows
    }

    pub fn usable_width(&self) -> usize {
        self.cols * self.block_w
    }

    pub fn usable_height(&self) -> usize {
        self.rows * self.block_h
    }

    /// Pixel origin of block `index` (raster order).
    #[inline]
    pub fn origin(&self, index: usize) -> (usize, usize) {
        ((index % self.cols) * self.block_w, (index / self.cols) * self.block_h)
    }

    /// Checks that the grid is covered by a `width` x `height` frame.
    pub fn check_frame(&self, frame: &Frame) -> Result<()> {
        if self.usable_width() > frame.width() || self.usable_height() > frame.height() {
            return Err(Error::Shape(format!(
                "{}x{} grid of {}x{} blocks does not fit in a {}x{} frame",
                self.cols,
                self.rows,
                self.block_w,
                self.block_h,
                frame.width(),
                frame.height()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockClass {
    Active,
    Inactive,
}

impl BlockClass {
    #[inline]
    pub fn is_active(self) -> bool {
        self == BlockClass::Active
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMap {
    pub grid: BlockGrid,
    /// Per-block labels in raster order.
    pub labels: Vec<BlockClass>,
    /// Per-pixel activity over the full frame; the cropped remainder is
    /// always inactive.
    pub pixel_mask: Vec<bool>,
    /// Fraction of active blocks.
    pub lambda_m: f64,
}

#[derive(Serialize)]
struct ActivityMapJson {
    block_w: usize,
    block_h: usize,
    cols: usize,
    rows: usize,
    labels: Vec<Vec<u8>>,
    lambda_m: f64,
}

impl ActivityMap {
    /// Map with every block set to `class`.
    pub fn uniform(grid: BlockGrid, width: usize, height: usize, class: BlockClass) -> Self {
        let mut pixel_mask = vec![false; width * height];
        if class.is_active() {
            for y in 0..grid.usable_height() {
                pixel_mask[y * width..y * width + grid.usable_width()].fill(true);
            }
        }
        let lambda_m = if class.is_active() { 1.0 } else { 0.0 };
        Self {
            grid,
            labels: vec![class; grid.block_count()],
            pixel_mask,
            lambda_m,
        }
    }

    pub fn active_count(&self) -> usize {
        self.labels.iter().filter(|c| c.is_active()).count()
    }

    pub fn inactive_count(&self) -> usize {
        self.labels.len() - self.active_count()
    }

    /// JSON document with grid dimensions, a 0/1 label matrix and `lambda_m`.
    pub fn to_json(&self) -> Result<String> {
        let labels = self
            .labels
            .chunks(self.grid.cols)
            .map(|row| row.iter().map(|c| u8::from(c.is_active())).collect())
            .collect();
        let doc = ActivityMapJson {
            block_w: self.grid.block_w,
            block_h: self.grid.block_h,
            cols: self.grid.cols,
            rows: self.grid.rows,
            labels,
            lambda_m: self.lambda_m,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Per-pixel absolute difference `|target - anchor|`.
pub fn difference_image(anchor: &Frame, target: &Frame) -> Result<Frame> {
    if !anchor.same_dims(target) {
        return Err(Error::Shape(format!(
            "anchor is {}x{}, target is {}x{}",
            anchor.width(),
            anchor.height(),
            target.width(),
            target.height()
        )));
    }
    let samples = anchor
        .samples()
        .iter()
        .zip(target.samples())
        .map(|(a, t)| (t - a).abs())
        .collect();
    Frame::new(anchor.width(), anchor.height(), samples)
}

/// Labels every block of `grid` from a difference image.
pub fn classify(diff: &Frame, grid: &BlockGrid, th: &Thresholds) -> Result<ActivityMap> {
    if grid.block_w > diff.width() || grid.block_h > diff.height() {
        return Err(Error::Config(format!(
            "{}x{} block is larger than the {}x{} frame",
            grid.block_w,
            grid.block_h,
            diff.width(),
            diff.height()
        )));
    }
    grid.check_frame(diff)?;
    th.validate(grid)?;

    let width = diff.width();
    let mut pixel_mask = vec![false; width * diff.height()];
    for y in 0..grid.usable_height() {
        let row = &diff.row(y)[..grid.usable_width()];
        for (m, &d) in pixel_mask[y * width..].iter_mut().zip(row) {
            *m = d > th.t_g;
        }
    }

    let labels: Vec<BlockClass> = (0..grid.block_count())
        .map(|b| {
            let (x0, y0) = grid.origin(b);
            let count: usize = (y0..y0 + grid.block_h)
                .map(|y| {
                    pixel_mask[y * width + x0..y * width + x0 + grid.block_w]
                        .iter()
                        .filter(|&&m| m)
                        .count()
                })
                .sum();
            if count > th.t_p {
                BlockClass::Active
            } else {
                BlockClass::Inactive
            }
        })
        .collect();

    let active = labels.iter().filter(|c| c.is_active()).count();
    Ok(ActivityMap {
        grid: *grid,
        lambda_m: active as f64 / grid.block_count() as f64,
        labels,
        pixel_mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid16(w: usize, h: usize) -> BlockGrid {
        BlockGrid::for_frame(w, h, 16, 16).unwrap()
    }

    #[test]
    fn identical_frames_give_zero_difference() {
        let f = Frame::from_fn(8, 8, |x, y| (x * 7 + y * 3) as f64).unwrap();
        let d = difference_image(&f, &f).unwrap();
        assert!(d.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_difference() {
        let a = Frame::filled(8, 8, 100.0).unwrap();
        let t = Frame::filled(8, 8, 97.0).unwrap();
        let d = difference_image(&a, &t).unwrap();
        assert!(d.samples().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn difference_shape_mismatch() {
        let a = Frame::filled(8, 8, 0.0).unwrap();
        let t = Frame::filled(8, 4, 0.0).unwrap();
        assert!(matches!(difference_image(&a, &t), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_difference_all_inactive() {
        let d = Frame::filled(32, 32, 0.0).unwrap();
        let g = grid16(32, 32);
        let map = classify(&d, &g, &Thresholds::default_for(&g)).unwrap();
        assert_eq!(map.active_count(), 0);
        assert_eq!(map.lambda_m, 0.0);
    }

    fn forty_hot_pixels() -> Frame {
        // 40 pixels of difference 255 in the top-left 16x16 block.
        let mut d = Frame::filled(32, 32, 0.0).unwrap();
        for i in 0..40 {
            d.set(i % 16, i / 16, 255.0);
        }
        d
    }

    #[test]
    fn block_threshold_strict_count() {
        let d = forty_hot_pixels();
        let g = grid16(32, 32);
        let map = classify(&d, &g, &Thresholds { t_g: 10.0, t_p: 32 }).unwrap();
        assert_eq!(map.labels[0], BlockClass::Active);
        assert_eq!(map.active_count(), 1);
        assert_eq!(map.lambda_m, 0.25);

        let map = classify(&d, &g, &Thresholds { t_g: 10.0, t_p: 48 }).unwrap();
        assert_eq!(map.labels[0], BlockClass::Inactive);

        // 40 > 39 but not 40 > 40.
        assert_eq!(classify(&d, &g, &Thresholds { t_g: 10.0, t_p: 39 }).unwrap().active_count(), 1);
        assert_eq!(classify(&d, &g, &Thresholds { t_g: 10.0, t_p: 40 }).unwrap().active_count(), 0);
    }

    #[test]
    fn pixel_threshold_is_strict() {
        let d = Frame::filled(16, 16, 10.0).unwrap();
        let g = grid16(16, 16);
        let map = classify(&d, &g, &Thresholds { t_g: 10.0, t_p: 0 }).unwrap();
        assert!(map.pixel_mask.iter().all(|&m| !m));
        let map = classify(&d, &g, &Thresholds { t_g: 9.5, t_p: 0 }).unwrap();
        assert_eq!(map.lambda_m, 1.0);
    }

    #[test]
    fn cropped_edges_ignored() {
        // 40x20 frame: one row of two 16x16 blocks; columns 32.. and rows 16.. are cropped.
        let mut d = Frame::filled(40, 20, 0.0).unwrap();
        for y in 0..20 {
            for x in 32..40 {
                d.set(x, y, 255.0);
            }
        }
        for x in 0..40 {
            for y in 16..20 {
                d.set(x, y, 255.0);
            }
        }
        let g = grid16(40, 20);
        assert_eq!((g.cols, g.rows), (2, 1));
        let map = classify(&d, &g, &Thresholds { t_g: 0.0, t_p: 0 }).unwrap();
        assert_eq!(map.active_count(), 0);
        assert!(map.pixel_mask.iter().all(|&m| !m));
    }

    #[test]
    fn oversized_block_is_config_error() {
        assert!(matches!(BlockGrid::for_frame(8, 8, 16, 16), Err(Error::Config(_))));
        let d = Frame::filled(8, 8, 0.0).unwrap();
        let g = BlockGrid { block_w: 16, block_h: 16, cols: 1, rows: 1 };
        assert!(matches!(classify(&d, &g, &Thresholds { t_g: 0.0, t_p: 0 }), Err(Error::Config(_))));
    }

    #[test]
    fn t_p_above_area_rejected() {
        let d = Frame::filled(16, 16, 0.0).unwrap();
        let g = grid16(16, 16);
        assert!(classify(&d, &g, &Thresholds { t_g: 0.0, t_p: 257 }).is_err());
    }

    #[test]
    fn json_export() {
        let d = forty_hot_pixels();
        let g = grid16(32, 32);
        let map = classify(&d, &g, &Thresholds { t_g: 10.0, t_p: 32 }).unwrap();
        let v: serde_json::Value = serde_json::from_str(&map.to_json().unwrap()).unwrap();
        assert_eq!(v["labels"], serde_json::json!([[1, 0], [0, 0]]));
        assert_eq!(v["lambda_m"], 0.25);
        assert_eq!(v["cols"], 2);
    }
}
