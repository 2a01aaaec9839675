//! Strike minima from filtered persistence diagrams, the reference height
//! they define, and the regression plane through them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::persistence::{Diagram, PersistencePair};
use crate::scoring::{cap_by_birth, histogram_keep, Filtered};

/// Reduces a dim-0 diagram to exactly `n_expected` strike minima.
///
/// 1. Rice-histogram lifetime cutoff with `n_expected` as the bin limit.
/// 2. If `drop_zero_births`, pairs born at exactly 0 (clipped artifacts) go.
/// 3. Pairs with the largest births go until `n_expected` remain.
///
/// The essential class competes like any other feature.
pub fn filter_minima(d: &Diagram, n_expected: usize, drop_zero_births: bool) -> Result<Filtered> {
    if n_expected == 0 {
        return Err(Error::Argument("expected minima count must be positive".into()));
    }
    let mut log = Vec::new();
    let pairs: Vec<PersistencePair> = d.dim(0).copied().collect();
    let finite: Vec<f64> = pairs
        .iter()
        .filter(|p| !p.is_essential())
        .map(PersistencePair::lifetime)
        .collect();
    let mut finite_keep = histogram_keep(&finite, n_expected, &mut log).into_iter();
    let mut kept: Vec<PersistencePair> = pairs
        .into_iter()
        .filter(|p| p.is_essential() || finite_keep.next().expect("one flag per finite pair"))
        .collect();

    if drop_zero_births {
        let before = kept.len();
        kept.retain(|p| p.birth != 0.0);
        log.push(format!("zero births: removed {}, kept {}", before - kept.len(), kept.len()));
    }
    if kept.len() < n_expected {
        return Err(Error::Filter {
            message: format!(
                "only {} candidate minima remain, {n_expected} expected",
                kept.len()
            ),
            log,
        });
    }
    let before = kept.len();
    let kept = cap_by_birth(kept, n_expected);
    log.push(format!(
        "birth cap: removed {} largest-birth pairs, kept {}",
        before - kept.len(),
        kept.len()
    ));
    Ok(Filtered {
        diagram: Diagram {
            pairs: kept,
            rows: d.rows,
            cols: d.cols,
        },
        log,
    })
}

/// Mean birth of the filtered minima.
pub fn reference_height(filtered: &Diagram) -> Result<f64> {
    if filtered.is_empty() {
        return Err(Error::Degenerate("no minima to average".into()));
    }
    Ok(filtered.pairs.iter().map(|p| p.birth).sum::<f64>() / filtered.len() as f64)
}

/// Minima as `(i_x, i_y, z)`: column, row (downward), birth height.
pub fn minima_points(filtered: &Diagram) -> Vec<(f64, f64, f64)> {
    filtered
        .pairs
        .iter()
        .map(|p| (p.birth_pixel.1 as f64, p.birth_pixel.0 as f64, p.birth))
        .collect()
}

/// Least-squares plane `z = c0 + c1 i_x + c2 i_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlaneFit {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub residual_rms: f64,
}

/// Ordinary least squares via centered normal equations.
pub fn fit_plane(points: &[(f64, f64, f64)]) -> Result<PlaneFit> {
    let n = points.len() as f64;
    if points.len() < 3 {
        return Err(Error::Degenerate(format!("plane fit needs 3 points, got {}", points.len())));
    }
    let mean = |f: fn(&(f64, f64, f64)) -> f64| points.iter().map(f).sum::<f64>() / n;
    let (mx, my, mz) = (mean(|p| p.0), mean(|p| p.1), mean(|p| p.2));
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, z) in points {
        let (dx, dy, dz) = (x - mx, y - my, z - mz);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    if !(det > 1e-12 * sxx * syy) {
        return Err(Error::Degenerate("plane fit points are collinear".into()));
    }
    let c1 = (sxz * syy - syz * sxy) / det;
    let c2 = (syz * sxx - sxz * sxy) / det;
    let c0 = mz - c1 * mx - c2 * my;
    let sse: f64 = points
        .iter()
        .map(|&(x, y, z)| (z - c0 - c1 * x - c2 * y).powi(2))
        .sum();
    Ok(PlaneFit {
        c0,
        c1,
        c2,
        residual_rms: (sse / n).sqrt(),
    })
}

/// Per-pixel slopes of a normalized surface to µm/mm: `c * depth_max * P / W`.
pub fn slopes_physical(c1: f64, c2: f64, depth_max_um: f64, width_mm: f64, pixels: f64) -> Result<(f64, f64)> {
    if !(depth_max_um > 0.0 && width_mm > 0.0 && pixels > 0.0) {
        return Err(Error::Argument(
            "depth, width and pixel count must be positive".into(),
        ));
    }
    let k = depth_max_um * pixels / width_mm;
    Ok((c1 * k, c2 * k))
}
