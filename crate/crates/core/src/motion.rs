//! Block matching, motion compensation and residual extraction.
//!
//! A motion vector `(dx, dy)` for the block at `(x, y)` predicts that block
//! from the anchor block at `(x + dx, y + dy)`. Only active blocks are
//! searched; inactive blocks keep the zero vector.

use rayon::prelude::*;
use serde::Serialize;

use crate::activity::{ActivityMap, BlockGrid};
use crate::error::{Error, Result};
use crate::frame::Frame;

/// Default search range in pixels.
pub const DEFAULT_SEARCH_RANGE: u32 = 15;

/// Large diamond: the centre plus eight points at distance two.
const LARGE_DIAMOND: [(i32, i32); 8] = [
    (0, -2),
    (-1, -1),
    (1, -1),
    (-2, 0),
    (2, 0),
    (-1, 1),
    (1, 1),
    (0, 2),
];

/// Small diamond: the centre plus its four neighbours.
const SMALL_DIAMOND: [(i32, i32); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct MotionVector {
    pub dx: i32,
    pub dy: i32,
}

impl MotionVector {
    pub const ZERO: MotionVector = MotionVector { dx: 0, dy: 0 };

    pub fn new(dx: i32, dy: i32) -> Self {
        Self { dx, dy }
    }

    /// Ordering used to break cost ties: smaller `|dx| + |dy|`, then smaller
    /// `dy`, then smaller `dx`.
    fn tie_key(self) -> (i32, i32, i32) {
        (self.dx.abs() + self.dy.abs(), self.dy, self.dx)
    }
}

/// Fixed-length code size for one vector: `2 * ceil(log2(2 * range + 1))`.
pub fn default_bits_per_vector(range: u32) -> u32 {
    let symbols = 2 * u64::from(range) + 1;
    let bits = u64::BITS - (symbols - 1).leading_zeros();
    2 * bits
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionField {
    pub grid: BlockGrid,
    /// One entry per block in raster order; `Some` exactly for active blocks.
    pub vectors: Vec<Option<MotionVector>>,
    pub search_range: u32,
    /// Bits spent on each transmitted vector.
    pub b_m: u32,
}

#[derive(Serialize)]
struct MotionFieldJson<'a> {
    block_w: usize,
    block_h: usize,
    cols: usize,
    rows: usize,
    search_range: u32,
    b_m: u32,
    vectors: &'a [Option<MotionVector>],
}

impl MotionField {
    /// A field with no active blocks.
    pub fn empty(grid: BlockGrid, search_range: u32, b_m: u32) -> Self {
        Self {
            grid,
            vectors: vec![None; grid.block_count()],
            search_range,
            b_m,
        }
    }

    /// Vector applied to block `index`; inactive blocks use zero motion.
    #[inline]
    pub fn applied(&self, index: usize) -> MotionVector {
        self.vectors[index].unwrap_or(MotionVector::ZERO)
    }

    /// JSON document with grid dimensions and per-block `{dx, dy}` or `null`.
    pub fn to_json(&self) -> Result<String> {
        let doc = MotionFieldJson {
            block_w: self.grid.block_w,
            block_h: self.grid.block_h,
            cols: self.grid.cols,
            rows: self.grid.rows,
            search_range: self.search_range,
            b_m: self.b_m,
            vectors: &self.vectors,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Residuals of one frame pair (or several, concatenated).
///
/// Samples are stored block by block in raster order of the blocks they
/// come from, row-major inside each block.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResidualSet {
    /// `target - compensated anchor` over active blocks.
    pub dfd_samples: Vec<f64>,
    /// `target - anchor` over inactive blocks.
    pub fd_samples: Vec<f64>,
}

/// Sum of squared differences between the target block at `(x0, y0)` and the
/// anchor block displaced by `mv`. `None` when the displaced block leaves the
/// anchor.
fn block_ssd(anchor: &Frame, target: &Frame, x0: usize, y0: usize, bw: usize, bh: usize, mv: MotionVector) -> Option<f64> {
    let ax = x0 as i64 + i64::from(mv.dx);
    let ay = y0 as i64 + i64::from(mv.dy);
    if ax < 0 || ay < 0 || ax as usize + bw > anchor.width() || ay as usize + bh > anchor.height() {
        return None;
    }
    let (ax, ay) = (ax as usize, ay as usize);
    let mut ssd = 0.0;
    for r in 0..bh {
        let t = &target.row(y0 + r)[x0..x0 + bw];
        let a = &anchor.row(ay + r)[ax..ax + bw];
        ssd += t.iter().zip(a).map(|(t, a)| (t - a) * (t - a)).sum::<f64>();
    }
    Some(ssd)
}

#[inline]
fn better(a: (f64, MotionVector), b: (f64, MotionVector)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1.tie_key() < b.1.tie_key())
}

/// Two-stage diamond search for the block whose top-left corner is
/// `block_origin`. Returns the chosen vector and its SSD.
///
/// The large diamond is re-centred on its best point until the centre wins,
/// then one small-diamond step refines the result. Candidates beyond
/// `range` or reading outside the anchor are skipped.
pub fn diamond_search(
    anchor: &Frame,
    target: &Frame,
    block_origin: (usize, usize),
    grid: &BlockGrid,
    range: u32,
) -> Result<(MotionVector, f64)> {
    if !anchor.same_dims(target) {
        return Err(Error::Shape("anchor and target dimensions differ".into()));
    }
    let (x0, y0) = block_origin;
    let (bw, bh) = (grid.block_w, grid.block_h);
    if x0 + bw > target.width() || y0 + bh > target.height() {
        return Err(Error::Shape(format!(
            "{bw}x{bh} block at ({x0}, {y0}) lies outside the {}x{} frame",
            target.width(),
            target.height()
        )));
    }
    let range = i32::try_from(range).map_err(|_| Error::Config("search range too large".into()))?;
    let eval = |mv: MotionVector| -> Option<f64> {
        if mv.dx.abs() > range || mv.dy.abs() > range {
            return None;
        }
        block_ssd(anchor, target, x0, y0, bw, bh, mv)
    };

    let zero_cost = eval(MotionVector::ZERO)
        .ok_or_else(|| Error::Invariant("zero displacement must be a valid candidate".into()))?;
    let mut best = (zero_cost, MotionVector::ZERO);

    // Each move strictly improves (cost, tie key), so the walk cannot cycle.
    loop {
        let centre = best.1;
        for &(ox, oy) in &LARGE_DIAMOND {
            let mv = MotionVector::new(centre.dx + ox, centre.dy + oy);
            if let Some(c) = eval(mv) {
                if better((c, mv), best) {
                    best = (c, mv);
                }
            }
        }
        if best.1 == centre {
            break;
        }
    }

    let centre = best.1;
    for &(ox, oy) in &SMALL_DIAMOND {
        let mv = MotionVector::new(centre.dx + ox, centre.dy + oy);
        if let Some(c) = eval(mv) {
            if better((c, mv), best) {
                best = (c, mv);
            }
        }
    }
    Ok((best.1, best.0))
}

/// Runs [`diamond_search`] on every active block of `map`.
pub fn estimate_motion(anchor: &Frame, target: &Frame, map: &ActivityMap, range: u32, b_m: u32) -> Result<MotionField> {
    let grid = map.grid;
    grid.check_frame(anchor)?;
    grid.check_frame(target)?;
    let vectors = map
        .labels
        .par_iter()
        .enumerate()
        .map(|(b, class)| {
            if class.is_active() {
                diamond_search(anchor, target, grid.origin(b), &grid, range).map(|(mv, _)| Some(mv))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MotionField {
        grid,
        vectors,
        search_range: range,
        b_m,
    })
}

/// Builds the motion-compensated prediction of the target from the anchor.
/// Pixels outside the block grid are copied from the anchor unchanged.
pub fn motion_compensate(anchor: &Frame, field: &MotionField) -> Result<Frame> {
    let grid = field.grid;
    grid.check_frame(anchor)?;
    if field.vectors.len() != grid.block_count() {
        return Err(Error::Shape(format!(
            "motion field has {} vectors for {} blocks",
            field.vectors.len(),
            grid.block_count()
        )));
    }
    let mut out = anchor.clone();
    for (b, mv) in field.vectors.iter().enumerate() {
        let Some(mv) = *mv else { continue };
        if mv == MotionVector::ZERO {
            continue;
        }
        let (x0, y0) = grid.origin(b);
        let ax = x0 as i64 + i64::from(mv.dx);
        let ay = y0 as i64 + i64::from(mv.dy);
        if ax < 0 || ay < 0 || ax as usize + grid.block_w > anchor.width() || ay as usize + grid.block_h > anchor.height() {
            return Err(Error::Invariant(format!(
                "vector ({}, {}) for block at ({x0}, {y0}) reads outside the anchor",
                mv.dx, mv.dy
            )));
        }
        let (ax, ay) = (ax as usize, ay as usize);
        let width = anchor.width();
        for r in 0..grid.block_h {
            let src = &anchor.row(ay + r)[ax..ax + grid.block_w];
            let dst_start = (y0 + r) * width + x0;
            out.samples_mut()[dst_start..dst_start + grid.block_w].copy_from_slice(src);
        }
    }
    Ok(out)
}

fn check_consistent(anchor: &Frame, target: &Frame, map: &ActivityMap, field: &MotionField) -> Result<()> {
    if !anchor.same_dims(target) {
        return Err(Error::Shape("anchor and target dimensions differ".into()));
    }
    if map.grid != field.grid {
        return Err(Error::Shape("activity map and motion field use different grids".into()));
    }
    map.grid.check_frame(anchor)?;
    if map.labels.len() != map.grid.block_count() || field.vectors.len() != map.grid.block_count() {
        return Err(Error::Shape("per-block data does not match the grid".into()));
    }
    if let Some(b) = map
        .labels
        .iter()
        .zip(&field.vectors)
        .position(|(c, v)| c.is_active() != v.is_some())
    {
        return Err(Error::Shape(format!(
            "block {b}: motion vectors must be present exactly for active blocks"
        )));
    }
    Ok(())
}

/// Splits the prediction error into the DFD stream (active blocks, motion
/// compensated) and the FD stream (inactive blocks, zero motion).
pub fn extract_residuals(anchor: &Frame, target: &Frame, map: &ActivityMap, field: &MotionField) -> Result<ResidualSet> {
    check_consistent(anchor, target, map, field)?;
    let prediction = motion_compensate(anchor, field)?;
    let grid = map.grid;
    let area = grid.block_area();
    let active = map.active_count();
    let mut res = ResidualSet {
        dfd_samples: Vec::with_capacity(active * area),
        fd_samples: Vec::with_capacity((grid.block_count() - active) * area),
    };
    for (b, class) in map.labels.iter().enumerate() {
        let (x0, y0) = grid.origin(b);
        let sink = if class.is_active() {
            &mut res.dfd_samples
        } else {
            &mut res.fd_samples
        };
        for r in 0..grid.block_h {
            let t = &target.row(y0 + r)[x0..x0 + grid.block_w];
            let p = &prediction.row(y0 + r)[x0..x0 + grid.block_w];
            sink.extend(t.iter().zip(p).map(|(t, p)| t - p));
        }
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::{classify, difference_image, BlockClass, Thresholds};

    fn textured(w: usize, h: usize, shift: (i32, i32)) -> Frame {
        // Smooth pattern sampled at (x + sx, y + sy).
        Frame::from_fn(w, h, |x, y| {
            let fx = x as f64 + f64::from(shift.0);
            let fy = y as f64 + f64::from(shift.1);
            128.0 + 50.0 * (fx / 6.0).sin() + 40.0 * (fy / 7.5).cos() + 20.0 * ((fx + fy) / 9.0).sin()
        })
        .unwrap()
    }

    #[test]
    fn bits_per_vector() {
        assert_eq!(default_bits_per_vector(15), 10); // 31 symbols -> 5 bits each
        assert_eq!(default_bits_per_vector(7), 8); // 15 -> 4
        assert_eq!(default_bits_per_vector(8), 10); // 17 -> 5
        assert_eq!(default_bits_per_vector(0), 0);
        assert_eq!(default_bits_per_vector(1), 4); // 3 -> 2
    }

    #[test]
    fn static_block() {
        let f = textured(64, 64, (0, 0));
        let grid = BlockGrid::for_frame(64, 64, 16, 16).unwrap();
        let (mv, cost) = diamond_search(&f, &f, (16, 16), &grid, 7).unwrap();
        assert_eq!(mv, MotionVector::ZERO);
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn shifted_block_found() {
        let anchor = textured(64, 64, (0, 0));
        let target = textured(64, 64, (3, 2));
        let grid = BlockGrid::for_frame(64, 64, 16, 16).unwrap();
        let (mv, cost) = diamond_search(&anchor, &target, (16, 16), &grid, 7).unwrap();
        assert_eq!(mv, MotionVector::new(3, 2));
        assert!(cost < 1e-9);
    }

    #[test]
    fn block_outside_frame() {
        let f = textured(32, 32, (0, 0));
        let grid = BlockGrid::for_frame(32, 32, 16, 16).unwrap();
        assert!(matches!(diamond_search(&f, &f, (20, 0), &grid, 7), Err(Error::Shape(_))));
    }

    #[test]
    fn corner_block_never_reads_outside() {
        let anchor = textured(32, 32, (0, 0));
        let target = textured(32, 32, (-3, -3));
        let grid = BlockGrid::for_frame(32, 32, 16, 16).unwrap();
        let (mv, _) = diamond_search(&anchor, &target, (0, 0), &grid, 7).unwrap();
        assert!(mv.dx >= 0 && mv.dy >= 0);
    }

    #[test]
    fn ties_prefer_short_vectors() {
        let f = Frame::filled(48, 48, 9.0).unwrap();
        let grid = BlockGrid::for_frame(48, 48, 16, 16).unwrap();
        let (mv, cost) = diamond_search(&f, &f, (16, 16), &grid, 15).unwrap();
        assert_eq!((mv, cost), (MotionVector::ZERO, 0.0));
    }

    #[test]
    fn zero_field_is_identity() {
        let f = textured(40, 40, (0, 0));
        let grid = BlockGrid::for_frame(40, 40, 16, 16).unwrap();
        let field = MotionField::empty(grid, 7, 8);
        assert_eq!(motion_compensate(&f, &field).unwrap(), f);
    }

    #[test]
    fn single_vector_copies_displaced_block() {
        let f = Frame::from_fn(48, 48, |x, y| (x + 100 * y) as f64).unwrap();
        let grid = BlockGrid::for_frame(48, 48, 16, 16).unwrap();
        let mut field = MotionField::empty(grid, 7, 8);
        field.vectors[4] = Some(MotionVector::new(3, 2));
        let out = motion_compensate(&f, &field).unwrap();
        for y in 16..32 {
            for x in 16..32 {
                assert_eq!(out.get(x, y), f.get(x + 3, y + 2));
            }
        }
        assert_eq!(out.get(0, 0), f.get(0, 0));
    }

    #[test]
    fn out_of_bounds_vector_is_invariant_error() {
        let f = Frame::filled(32, 32, 0.0).unwrap();
        let grid = BlockGrid::for_frame(32, 32, 16, 16).unwrap();
        let mut field = MotionField::empty(grid, 7, 8);
        field.vectors[0] = Some(MotionVector::new(-1, 0));
        assert!(matches!(motion_compensate(&f, &field), Err(Error::Invariant(_))));
    }

    #[test]
    fn identical_frames_all_inactive() {
        let f = textured(32, 32, (0, 0));
        let grid = BlockGrid::for_frame(32, 32, 16, 16).unwrap();
        let map = classify(&difference_image(&f, &f).unwrap(), &grid, &Thresholds::default_for(&grid)).unwrap();
        let field = estimate_motion(&f, &f, &map, 7, 8).unwrap();
        let res = extract_residuals(&f, &f, &map, &field).unwrap();
        assert!(res.dfd_samples.is_empty());
        assert_eq!(res.fd_samples.len(), 32 * 32);
        assert!(res.fd_samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn compensated_block_has_zero_dfd() {
        let anchor = textured(48, 48, (0, 0));
        let target = textured(48, 48, (3, 2));
        let grid = BlockGrid::for_frame(48, 48, 16, 16).unwrap();
        let mut map = ActivityMap::uniform(grid, 48, 48, BlockClass::Inactive);
        map.labels[4] = BlockClass::Active;
        map.lambda_m = 1.0 / 9.0;
        let field = estimate_motion(&anchor, &target, &map, 7, 8).unwrap();
        assert_eq!(field.vectors[4], Some(MotionVector::new(3, 2)));
        let res = extract_residuals(&anchor, &target, &map, &field).unwrap();
        assert_eq!(res.dfd_samples.len(), 256);
        assert_eq!(res.fd_samples.len(), 8 * 256);
        assert!(res.dfd_samples.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn residuals_match_per_pixel_oracle() {
        // 8x8 frames with 4x4 blocks; block 1 active with vector (-2, 1).
        let anchor = Frame::from_fn(8, 8, |x, y| ((x * 37 + y * 11) % 23) as f64).unwrap();
        let target = Frame::from_fn(8, 8, |x, y| ((x * 13 + y * 29) % 31) as f64).unwrap();
        let grid = BlockGrid::for_frame(8, 8, 4, 4).unwrap();
        let mut map = ActivityMap::uniform(grid, 8, 8, BlockClass::Inactive);
        map.labels[1] = BlockClass::Active;
        let mut field = MotionField::empty(grid, 2, 6);
        field.vectors[1] = Some(MotionVector::new(-2, 1));
        let res = extract_residuals(&anchor, &target, &map, &field).unwrap();

        let mut dfd = Vec::new();
        for y in 0..4 {
            for x in 4..8 {
                dfd.push(target.get(x, y) - anchor.get(x - 2, y + 1));
            }
        }
        let mut fd = Vec::new();
        for (bx, by) in [(0, 0), (0, 4), (4, 4)] {
            for y in by..by + 4 {
                for x in bx..bx + 4 {
                    fd.push(target.get(x, y) - anchor.get(x, y));
                }
            }
        }
        assert_eq!(res.dfd_samples, dfd);
        assert_eq!(res.fd_samples, fd);
    }

    #[test]
    fn inconsistent_field_rejected() {
        let f = Frame::filled(32, 32, 0.0).unwrap();
        let grid = BlockGrid::for_frame(32, 32, 16, 16).unwrap();
        let map = ActivityMap::uniform(grid, 32, 32, BlockClass::Active);
        let field = MotionField::empty(grid, 7, 8);
        assert!(matches!(extract_residuals(&f, &f, &map, &field), Err(Error::Shape(_))));
    }

    #[test]
    fn field_json() {
        let grid = BlockGrid::for_frame(32, 16, 16, 16).unwrap();
        let mut field = MotionField::empty(grid, 7, 8);
        field.vectors[1] = Some(MotionVector::new(3, -2));
        let v: serde_json::Value = serde_json::from_str(&field.to_json().unwrap()).unwrap();
        assert_eq!(v["vectors"], serde_json::json!([null, {"dx": 3, "dy": -2}]));
        assert_eq!(v["b_m"], 8);
    }
}
