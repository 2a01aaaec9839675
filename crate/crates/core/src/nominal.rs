//! Closed-form heights, radii and expected persistence distributions of an
//! ideal square lattice of spherical strikes.
//!
//! Heights are measured up from the strike bottom. Lengths may be in mm or
//! normalized (`R = 1`); every function is homogeneous in `R`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scoring::LifetimeDistribution;
use crate::synth::ProcessParams;

/// Overlap ratio `(2 - sqrt 2) / 2` above which diagonal neighbours overlap.
pub fn critical_overlap() -> f64 {
    (2.0 - std::f64::consts::SQRT_2) / 2.0
}

/// Strike radius in mm from the feed speed (mm/min) and frequency (Hz).
pub fn nominal_radius(params: &ProcessParams) -> Result<f64> {
    if params.frequency_hz <= 0.0 || !params.frequency_hz.is_finite() {
        return Err(Error::Argument(format!(
            "frequency must be positive, got {}",
            params.frequency_hz
        )));
    }
    Ok(params.speed_x / (120.0 * params.frequency_hz))
}

fn check_overlap(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::Domain(format!("overlap ratio {r} outside [0, 1)")))
    }
}

/// Height at which adjacent strikes along one axis merge:
/// `R (1 - sqrt((2 - r) r))`.
pub fn merge_height(r: f64, radius: f64) -> Result<f64> {
    check_overlap(r)?;
    Ok(radius * (1.0 - ((2.0 - r) * r).sqrt()))
}

/// Radius of the strike cross-section at height `t` above its bottom.
pub fn sigma_at(t: f64, radius: f64) -> Result<f64> {
    if !(0.0..=2.0 * radius).contains(&t) {
        return Err(Error::Domain(format!("threshold {t} outside [0, 2R] for R = {radius}")));
    }
    Ok(((2.0 * radius - t) * t).sqrt())
}

/// Height in the distance-transformed image at which the gap between two
/// overlapping cross-sections opens: `sqrt(sigma^2 - R^2 (1 - r)^2)`.
pub fn intersection_height_a(t: f64, radius: f64, r: f64) -> Result<f64> {
    check_overlap(r)?;
    let sigma = sigma_at(t, radius)?;
    let half_spacing = radius * (1.0 - r);
    let sq = sigma * sigma - half_spacing * half_spacing;
    // Tolerate rounding at exact tangency.
    if sq < -1e-12 * half_spacing * half_spacing {
        return Err(Error::Domain(format!(
            "cross-sections of radius {sigma} at spacing {} do not overlap",
            2.0 * half_spacing
        )));
    }
    Ok(sq.max(0.0).sqrt())
}

/// Merge height along the lattice diagonal. Equal to `R` while diagonal
/// neighbours do not overlap (`r <= r*`).
pub fn diagonal_height(r: f64, radius: f64) -> Result<f64> {
    check_overlap(r)?;
    let k = 2.0 * (1.0 - r) * (1.0 - r);
    if k >= 1.0 {
        Ok(radius)
    } else {
        Ok(radius * (1.0 - (1.0 - k).sqrt()))
    }
}

/// Diagonal center spacing of a square lattice, `2 sqrt 2 R (1 - r)`.
pub fn diagonal_spacing(r: f64, radius: f64) -> f64 {
    2.0 * std::f64::consts::SQRT_2 * radius * (1.0 - r)
}

/// Pixel count to physical length for an image `width` wide and `pixels` across.
pub fn px_to_mm(n_pixels: f64, width: f64, pixels: f64) -> Result<f64> {
    if pixels <= 0.0 {
        return Err(Error::Argument(format!("pixel count must be positive, got {pixels}")));
    }
    Ok(n_pixels * width / pixels)
}

/// Nominal strike lattice: radius, per-axis overlap, and strike counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NominalModel {
    pub radius: f64,
    pub overlap_x: f64,
    pub overlap_y: f64,
    /// Strike rows (`p`).
    pub rows: usize,
    /// Strike columns (`q`).
    pub cols: usize,
}

impl NominalModel {
    pub fn square(radius: f64, overlap: f64, n: usize) -> Result<Self> {
        Self::new(radius, overlap, overlap, n, n)
    }

    pub fn new(radius: f64, overlap_x: f64, overlap_y: f64, rows: usize, cols: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Argument(format!("radius must be positive, got {radius}")));
        }
        for r in [overlap_x, overlap_y] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Argument(format!("overlap ratio {r} outside [0, 1)")));
            }
        }
        if rows == 0 || cols == 0 {
            return Err(Error::Argument("strike counts must be positive".into()));
        }
        Ok(Self {
            radius,
            overlap_x,
            overlap_y,
            rows,
            cols,
        })
    }

    pub fn from_params(params: &ProcessParams) -> Result<Self> {
        Self::new(
            nominal_radius(params)?,
            params.overlap_x,
            params.overlap_y,
            params.strikes,
            params.strikes,
        )
    }

    pub fn strikes(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-direction merge height in the model's units.
    pub fn merge_height_x(&self) -> f64 {
        merge_height(self.overlap_x, self.radius).expect("validated overlap")
    }

    pub fn merge_height_y(&self) -> f64 {
        merge_height(self.overlap_y, self.radius).expect("validated overlap")
    }

    /// The height at which every strike has merged with a neighbour.
    pub fn merge_height(&self) -> f64 {
        self.merge_height_x().min(self.merge_height_y())
    }

    pub fn diagonal_height(&self) -> f64 {
        diagonal_height(self.overlap_x, self.radius).expect("validated overlap")
    }

    pub fn center_spacing(&self) -> f64 {
        2.0 * self.radius * (1.0 - self.overlap_x)
    }
}

/// Nominal dim-0 lifetimes on a normalized (`R = 1`) surface.
///
/// Square lattices give a point mass at `h`. With unequal overlaps the mass is
/// split `p/(p+q)` at `h_x` and `q/(p+q)` at `h_y`.
pub fn expected_depth_distribution(model: &NominalModel) -> LifetimeDistribution {
    let hx = merge_height(model.overlap_x, 1.0).expect("validated overlap");
    let hy = merge_height(model.overlap_y, 1.0).expect("validated overlap");
    if hx == hy {
        return LifetimeDistribution::point_mass(hx);
    }
    let (p, q) = (model.rows as f64, model.cols as f64);
    LifetimeDistribution::weighted(&[(hx, p / (p + q)), (hy, q / (p + q))])
        .expect("positive weights")
}

/// Nominal dim-1 lifetimes (in the model's length unit) of the distance
/// transform of the lattice thresholded at height `t` above the strike
/// bottom. Uses the square-lattice theory with `overlap_x`.
///
/// 1. `t` below the merge height: every strike is a separate disk, lifetime `sigma`.
/// 2. Otherwise one loop lives `sigma` and the other `n^2 - 1` live `sigma - a`.
/// 3. Above the diagonal merge height of a lattice with `r > r*`, all loops
///    collapse into one of zero lifetime.
pub fn expected_roundness_distribution(t: f64, model: &NominalModel) -> Result<LifetimeDistribution> {
    let radius = model.radius;
    if !(0.0..=radius).contains(&t) {
        return Err(Error::Domain(format!("threshold {t} outside [0, R] for R = {radius}")));
    }
    let r = model.overlap_x;
    if r > critical_overlap() && t > model.diagonal_height() {
        return Ok(LifetimeDistribution::point_mass(0.0));
    }
    let sigma = sigma_at(t, radius)?;
    if t < merge_height(r, radius)? {
        return Ok(LifetimeDistribution::point_mass(sigma));
    }
    let a = intersection_height_a(t, radius, r)?;
    let n2 = model.strikes() as f64;
    if n2 == 1.0 {
        return Ok(LifetimeDistribution::point_mass(sigma));
    }
    LifetimeDistribution::weighted(&[(sigma, 1.0 / n2), (sigma - a, (n2 - 1.0) / n2)])
}
