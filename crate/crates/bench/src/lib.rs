//! Shared inputs for the `rdmotion` benchmarks.

use rdmotion_core::{
    classify, difference_image, estimate_motion, synthesize, ActivityMap, BlockGrid, Frame, MotionField, SourceKind,
    SyntheticSpec, Thresholds, VideoSequence,
};

pub const SEARCH_RANGE: u32 = 15;
pub const BITS_PER_MV: u32 = 10;

/// A moving rectangle over correlated noise.
pub fn moving_rect(width: usize, height: usize, frames: usize) -> VideoSequence {
    let spec = SyntheticSpec {
        kind: SourceKind::MovingRect,
        rho: 0.9,
        sigma2: 25.0,
        mean: 100.0,
        motion: (3, 2),
        seed: 2024,
    };
    synthesize(&spec, width, height, frames).expect("valid synthetic spec")
}

/// A textured anchor and the same texture displaced by `(3, 2)`.
pub fn shifted_pair(width: usize, height: usize) -> (Frame, Frame) {
    let mut spec = SyntheticSpec::new(SourceKind::Ar1Field);
    spec.rho = 0.9;
    spec.sigma2 = 400.0;
    spec.seed = 7;
    let big = synthesize(&spec, width + 8, height + 8, 1).expect("valid synthetic spec");
    let tex = &big.frames()[0];
    let anchor = Frame::from_fn(width, height, |x, y| tex.get(x, y)).expect("non-empty");
    let target = Frame::from_fn(width, height, |x, y| tex.get(x + 3, y + 2)).expect("non-empty");
    (anchor, target)
}

/// Classification and motion field of one pair with default thresholds.
pub fn analyzed_pair(anchor: &Frame, target: &Frame, block: usize) -> (ActivityMap, MotionField) {
    let grid = BlockGrid::for_frame(anchor.width(), anchor.height(), block, block).expect("block fits");
    let diff = difference_image(anchor, target).expect("same dims");
    let map = classify(&diff, &grid, &Thresholds::default_for(&grid)).expect("valid thresholds");
    let field = estimate_motion(anchor, target, &map, SEARCH_RANGE, BITS_PER_MV).expect("search");
    (map, field)
}
