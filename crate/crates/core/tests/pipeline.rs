//! End-to-end analysis against geometric and generator oracles.

use std::collections::BTreeSet;

use rdmotion_core::pipeline::{cmd_analyze, cmd_validate, InputSource, RunConfig};
use rdmotion_core::synth::{rect_origin, rect_size};
use rdmotion_core::{SourceKind, SyntheticSpec};

const B: usize = 16;

/// Blocks of a `cols` x `rows` grid overlapping the rectangle `(x0, y0, w, h)`.
fn blocks_touching(x0: i64, y0: i64, w: usize, h: usize, cols: usize, rows: usize) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for by in 0..rows {
        for bx in 0..cols {
            let (bx0, by0) = ((bx * B) as i64, (by * B) as i64);
            let overlap_x = bx0 < x0 + w as i64 && x0 < bx0 + B as i64;
            let overlap_y = by0 < y0 + h as i64 && y0 < by0 + B as i64;
            if overlap_x && overlap_y {
                out.insert((bx, by));
            }
        }
    }
    out
}

fn dilate(set: &BTreeSet<(usize, usize)>, cols: usize, rows: usize) -> BTreeSet<(usize, usize)> {
    let mut out = set.clone();
    for &(bx, by) in set {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (x, y) = (bx as i64 + dx, by as i64 + dy);
                if x >= 0 && y >= 0 && (x as usize) < cols && (y as usize) < rows {
                    out.insert((x as usize, y as usize));
                }
            }
        }
    }
    out
}

/// Blocks whose count of pixels covered by exactly one of the two rectangle
/// positions exceeds `t_p`. Every such pixel differs by the full contrast.
fn changed_blocks(rects: [(i64, i64); 2], w: usize, h: usize, cols: usize, rows: usize, t_p: usize) -> BTreeSet<(usize, usize)> {
    let inside = |(x0, y0): (i64, i64), x: i64, y: i64| x >= x0 && x < x0 + w as i64 && y >= y0 && y < y0 + h as i64;
    let mut out = BTreeSet::new();
    for by in 0..rows {
        for bx in 0..cols {
            let mut count = 0;
            for y in by * B..(by + 1) * B {
                for x in bx * B..(bx + 1) * B {
                    let (x, y) = (x as i64, y as i64);
                    if inside(rects[0], x, y) != inside(rects[1], x, y) {
                        count += 1;
                    }
                }
            }
            if count > t_p {
                out.insert((bx, by));
            }
        }
    }
    out
}

fn moving_rect_case(sigma2: f64, motion: (i32, i32)) {
    let (w, h) = (256, 256);
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        kind: SourceKind::MovingRect,
        rho: 0.0,
        sigma2,
        mean: 100.0,
        motion,
        seed: 5,
    };
    let mut cfg = RunConfig::new(InputSource::Synthetic { spec: spec.clone(), frames: 2 }, w, h, dir.path());
    cfg.dump_fields = true;
    let analysis = cmd_analyze(&cfg).unwrap();
    let pair = &analysis.pairs[0];
    let (cols, rows) = (pair.map.grid.cols, pair.map.grid.rows);

    let (rw, rh) = rect_size(w, h);
    let rects = [rect_origin(&spec, w, h, 0), rect_origin(&spec, w, h, 1)];
    let mut covered = BTreeSet::new();
    for (x0, y0) in rects {
        covered.extend(blocks_touching(x0, y0, rw, rh, cols, rows));
    }
    let oracle = changed_blocks(rects, rw, rh, cols, rows, B * B / 8);
    let active: BTreeSet<(usize, usize)> = pair
        .map
        .labels
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_active())
        .map(|(i, _)| (i % cols, i / cols))
        .collect();

    assert!(!oracle.is_empty());
    assert!(active.is_subset(&dilate(&covered, cols, rows)), "active block away from the rectangle");
    if sigma2 == 0.0 {
        assert_eq!(active, oracle);
    } else {
        assert!(oracle.is_subset(&active));
        assert!(active.is_subset(&dilate(&oracle, cols, rows)));
    }
    let n = (cols * rows) as f64;
    let lambda = analysis.params.lambda_m;
    assert!((lambda - oracle.len() as f64 / n).abs() <= (dilate(&oracle, cols, rows).len() - oracle.len()) as f64 / n);
    assert!(dir.path().join("pair_0000_activity.json").exists());
}

#[test]
fn moving_rect_flat_background() {
    moving_rect_case(0.0, (3, 2));
    moving_rect_case(0.0, (-9, 5));
}

#[test]
fn moving_rect_noisy_background() {
    moving_rect_case(25.0, (6, -4));
}

#[test]
fn ar1_all_inactive_recovers_rho() {
    let dir = tempfile::tempdir().unwrap();
    for rho in [0.5, 0.9] {
        let mut spec = SyntheticSpec::new(SourceKind::Ar1Field);
        spec.rho = rho;
        spec.sigma2 = 25.0;
        spec.seed = 11;
        let mut cfg = RunConfig::new(InputSource::Synthetic { spec, frames: 3 }, 256, 256, dir.path());
        cfg.t_g = 1e6;
        let a = cmd_analyze(&cfg).unwrap();
        assert_eq!(a.params.lambda_m, 0.0);
        assert!((a.params.rho_i - rho).abs() < 0.02, "rho {} vs {rho}", a.params.rho_i);
        // Difference of two independent fields.
        assert!((a.params.sigma2_i / 50.0 - 1.0).abs() < 0.1, "sigma2_i {}", a.params.sigma2_i);
        let fit = a.fit.unwrap();
        assert!(fit.kl_divergence < 0.05, "kl {}", fit.kl_divergence);
    }
}

#[test]
fn validate_ar1_default_steps_pass() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SyntheticSpec::new(SourceKind::Ar1Field);
    spec.rho = 0.9;
    spec.sigma2 = 25.0;
    spec.seed = 21;
    let cfg = RunConfig::new(InputSource::Synthetic { spec, frames: 3 }, 256, 256, dir.path());
    let report = cmd_validate(&cfg).unwrap();
    assert_eq!(report.sweep.len(), 10);
    assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
    let csv = std::fs::read_to_string(dir.path().join("validate.csv")).unwrap();
    assert!(csv.starts_with("distortion,rate,source,lambda_m,rho_i,sigma2_a,sigma2_i,step,rate_mv,rate_residual"));
}

#[test]
fn validate_zero_slack_tiny_sample_is_reported() {
    // May fail by construction; only the report's consistency is checked.
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SyntheticSpec::new(SourceKind::WhiteNoise);
    spec.sigma2 = 25.0;
    let mut cfg = RunConfig::new(InputSource::Synthetic { spec, frames: 2 }, 16, 16, dir.path());
    cfg.slack = 0.0;
    let report = cmd_validate(&cfg).unwrap();
    for c in &report.sweep {
        if let Some(t) = c.theory_rate {
            assert_eq!(c.passed, c.point.rate_total >= t);
        }
    }
    assert_eq!(report.passed(), report.failures().count() == 0);
}
