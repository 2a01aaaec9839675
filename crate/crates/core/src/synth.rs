//! Analytic test surfaces: ideal spherical strike lattices, Gaussian bump
//! textures, generalized conic tool fields, and additive sensor noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{normalize, ScalarGrid};
use crate::nominal::nominal_radius;

/// Striking frequency assumed when a pattern is specified by overlap alone.
pub const DEFAULT_FREQUENCY_HZ: f64 = 100.0;

/// Process inputs of a strike lattice and the image that records it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessParams {
    pub frequency_hz: f64,
    /// Feed speeds in mm/min.
    pub speed_x: f64,
    pub speed_y: f64,
    pub overlap_x: f64,
    pub overlap_y: f64,
    /// Strikes per side.
    pub strikes: usize,
    /// Physical image width in mm.
    pub width_mm: f64,
    /// Pixels per side.
    pub pixels: usize,
}

impl ProcessParams {
    /// Square pattern at 100 Hz whose feed speed `3000 (1 - r)` mm/min
    /// produces overlap `r`.
    pub fn from_overlap(overlap: f64, strikes: usize, width_mm: f64, pixels: usize) -> Self {
        let speed = 30.0 * DEFAULT_FREQUENCY_HZ * (1.0 - overlap);
        Self {
            frequency_hz: DEFAULT_FREQUENCY_HZ,
            speed_x: speed,
            speed_y: speed,
            overlap_x: overlap,
            overlap_y: overlap,
            strikes,
            width_mm,
            pixels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.overlap_x, self.overlap_y] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Argument(format!("overlap ratio {r} outside [0, 1)")));
            }
        }
        if self.strikes == 0 || self.pixels == 0 {
            return Err(Error::Argument("strike and pixel counts must be positive".into()));
        }
        if !(self.width_mm > 0.0 && self.width_mm.is_finite()) {
            return Err(Error::Argument(format!("width must be positive, got {}", self.width_mm)));
        }
        nominal_radius(self).map(|_| ())
    }

    pub fn radius(&self) -> Result<f64> {
        nominal_radius(self)
    }

    /// Center spacing `2R(1 - r)` along columns and rows, in mm.
    pub fn spacing(&self) -> Result<(f64, f64)> {
        let radius = self.radius()?;
        Ok((
            2.0 * radius * (1.0 - self.overlap_x),
            2.0 * radius * (1.0 - self.overlap_y),
        ))
    }
}

/// Number of whole strikes per side that fit in a square window, following the
/// lattice extent `(n - 1) d + 2R`.
pub fn strikes_fitting(overlap: f64, window_mm: f64) -> usize {
    let radius = (1.0 - overlap) / 4.0;
    let spacing = 2.0 * radius * (1.0 - overlap);
    if window_mm < 2.0 * radius {
        return 0;
    }
    ((window_mm - 2.0 * radius) / spacing + 1e-9).floor() as usize + 1
}

/// How strike centers map onto the pixel lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Exact spacing `2R(1 - r)`, lattice centered on the image.
    #[default]
    Exact,
    /// Centers on pixel centers and spacing rounded to an even number of
    /// pixels, so strike bottoms and adjacent-strike saddles are sampled
    /// exactly. Shifts the effective overlap by up to a pixel.
    Snapped,
}

/// Strike lattice in pixel coordinates (pixel centers at integers).
#[derive(Debug, Clone, PartialEq)]
pub struct StrikeLattice {
    pub radius_mm: f64,
    pub mm_per_px: f64,
    /// First center and spacing in pixels, per axis: (columns, rows).
    pub first: (f64, f64),
    pub spacing_px: (f64, f64),
    pub strikes: usize,
}

impl StrikeLattice {
    pub fn new(params: &ProcessParams, placement: Placement) -> Result<Self> {
        params.validate()?;
        let radius = params.radius()?;
        let (dx, dy) = params.spacing()?;
        let n = params.strikes;
        let extent = (n as f64 - 1.0) * dx.max(dy) + 2.0 * radius;
        if extent > params.width_mm * (1.0 + 1e-12) {
            return Err(Error::Argument(format!(
                "{n}x{n} lattice spans {extent:.6} mm, wider than the {} mm image",
                params.width_mm
            )));
        }
        let p = params.pixels;
        let mm_per_px = params.width_mm / p as f64;
        let place = |d: f64| -> Result<(f64, f64)> {
            let step = d / mm_per_px;
            match placement {
                Placement::Exact => Ok(((p as f64 - 1.0 - (n as f64 - 1.0) * step) / 2.0, step)),
                Placement::Snapped => {
                    let step = if n > 1 { 2 * ((step / 2.0).round() as usize).max(1) } else { 0 };
                    let span = (n - 1) * step;
                    if span >= p {
                        return Err(Error::Argument(format!(
                            "{p} pixels cannot hold {n} strikes at {step} px spacing"
                        )));
                    }
                    Ok((((p - 1 - span) / 2) as f64, step as f64))
                }
            }
        };
        let (fx, sx) = place(dx)?;
        let (fy, sy) = place(dy)?;
        Ok(Self {
            radius_mm: radius,
            mm_per_px,
            first: (fx, fy),
            spacing_px: (sx, sy),
            strikes: n,
        })
    }

    /// Strike centers as (row, col) pixel coordinates, row-major.
    pub fn centers(&self) -> Vec<(f64, f64)> {
        let n = self.strikes;
        (0..n * n)
            .map(|k| {
                (
                    self.first.1 + (k / n) as f64 * self.spacing_px.1,
                    self.first.0 + (k % n) as f64 * self.spacing_px.0,
                )
            })
            .collect()
    }

    fn nearest(&self, pos: f64, first: f64, step: f64) -> f64 {
        if step == 0.0 {
            return first;
        }
        let k = ((pos - first) / step).round();
        first + k.clamp(0.0, (self.strikes - 1) as f64) * step
    }

    /// Normalized height at a pixel: 0 at strike bottoms, 1 on the untouched
    /// surface.
    pub fn height(&self, row: usize, col: usize) -> f64 {
        let (row, col) = (row as f64, col as f64);
        let dr = (row - self.nearest(row, self.first.1, self.spacing_px.1)) * self.mm_per_px;
        let dc = (col - self.nearest(col, self.first.0, self.spacing_px.0)) * self.mm_per_px;
        let radius = self.radius_mm;
        let cap = (radius * radius - (dr * dr + dc * dc)).max(0.0).sqrt();
        (radius - cap) / radius
    }
}

/// Ideal strike lattice image: each pixel holds the depth profile of the
/// nearest spherical strike of radius `R`, scaled to [0, 1]. Carries the image
/// width and `R` as depth scale.
pub fn spherical_grid(params: &ProcessParams) -> Result<ScalarGrid> {
    spherical_grid_with(params, Placement::Exact)
}

pub fn spherical_grid_with(params: &ProcessParams, placement: Placement) -> Result<ScalarGrid> {
    let lattice = StrikeLattice::new(params, placement)?;
    let p = params.pixels;
    Ok(ScalarGrid::from_fn(p, p, |r, c| lattice.height(r, c))?
        .with_width_mm(params.width_mm)
        .with_depth_scale(Some(lattice.radius_mm)))
}

/// Lattice of Gaussian depressions used for noise studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianBumps {
    pub per_side: usize,
    /// Bump standard deviation in pixels; `None` means a sixth of the spacing.
    pub sigma_px: Option<f64>,
    pub pixels: usize,
}

impl Default for GaussianBumps {
    fn default() -> Self {
        Self {
            per_side: 4,
            sigma_px: None,
            pixels: 300,
        }
    }
}

impl GaussianBumps {
    pub fn spacing_px(&self) -> f64 {
        self.pixels as f64 / self.per_side as f64
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_px.unwrap_or(self.spacing_px() / 6.0)
    }

    /// Bump centers as fractional (row, col) pixel coordinates.
    pub fn centers(&self) -> Vec<(f64, f64)> {
        let m = self.per_side;
        let s = self.spacing_px();
        (0..m * m)
            .map(|k| {
                (
                    ((k / m) as f64 + 0.5) * s - 0.5,
                    ((k % m) as f64 + 0.5) * s - 0.5,
                )
            })
            .collect()
    }
}

/// `1 - normalize(sum of Gaussians)`: depressions of depth 1 at the lattice
/// centers on a surface that rises to 1 away from them.
pub fn gaussian_bump_surface(bumps: &GaussianBumps) -> Result<ScalarGrid> {
    if bumps.per_side == 0 || bumps.pixels == 0 {
        return Err(Error::Argument("bump and pixel counts must be positive".into()));
    }
    let sigma = bumps.sigma();
    if !(sigma > 0.0) {
        return Err(Error::Argument(format!("bump sigma must be positive, got {sigma}")));
    }
    let centers = bumps.centers();
    let scale = -0.5 / (sigma * sigma);
    let p = bumps.pixels;
    let sum = ScalarGrid::from_fn(p, p, |r, c| {
        centers
            .iter()
            .map(|&(cr, cc)| {
                let (dr, dc) = (r as f64 - cr, c as f64 - cc);
                (scale * (dr * dr + dc * dc)).exp()
            })
            .sum()
    })?;
    normalize(&sum).map(|v| 1.0 - v)
}

/// Generalized conic `rho(x) = sum_i alpha_i |x - b_i|_p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizedConic {
    /// Foci as (x, y) in mm, with x along columns and y along rows.
    pub foci: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
    /// Norm order, at least 1; `f64::INFINITY` gives the max norm.
    pub p: f64,
}

impl GeneralizedConic {
    pub fn new(foci: Vec<(f64, f64)>, weights: Vec<f64>, p: f64) -> Result<Self> {
        if foci.is_empty() || foci.len() != weights.len() {
            return Err(Error::Argument(format!(
                "need one weight per focus and at least one focus, got {} foci and {} weights",
                foci.len(),
                weights.len()
            )));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::Argument("conic weights are all zero".into()));
        }
        if p.is_nan() || p < 1.0 {
            return Err(Error::Argument(format!("norm order must be at least 1, got {p}")));
        }
        Ok(Self { foci, weights, p })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.foci
            .iter()
            .zip(&self.weights)
            .map(|(&(bx, by), &w)| w * p_norm(x - bx, y - by, self.p))
            .sum()
    }
}

fn p_norm(dx: f64, dy: f64, p: f64) -> f64 {
    let (ax, ay) = (dx.abs(), dy.abs());
    if p == 1.0 {
        ax + ay
    } else if p == 2.0 {
        ax.hypot(ay)
    } else if p.is_infinite() {
        ax.max(ay)
    } else {
        (ax.powf(p) + ay.powf(p)).powf(p.recip())
    }
}

/// Samples a conic on the centers of a `pixels x pixels` image `width_mm` wide.
/// Values are in mm and unnormalized.
pub fn conic_field(conic: &GeneralizedConic, pixels: usize, width_mm: f64) -> Result<ScalarGrid> {
    let conic = GeneralizedConic::new(conic.foci.clone(), conic.weights.clone(), conic.p)?;
    if pixels == 0 || !(width_mm > 0.0) {
        return Err(Error::Argument("image size must be positive".into()));
    }
    let h = width_mm / pixels as f64;
    Ok(ScalarGrid::from_fn(pixels, pixels, |r, c| {
        conic.eval((c as f64 + 0.5) * h, (r as f64 + 0.5) * h)
    })?
    .with_width_mm(width_mm))
}

/// Noise standard deviation for an amplitude SNR in dB against unit depth.
pub fn noise_sigma(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

/// Adds i.i.d. Gaussian noise with standard deviation `10^(-snr_db / 20)`.
/// An infinite SNR returns the grid unchanged.
pub fn add_gaussian_noise(g: &ScalarGrid, snr_db: f64, seed: u64) -> ScalarGrid {
    if snr_db == f64::INFINITY {
        return g.clone();
    }
    let normal = Normal::new(0.0, noise_sigma(snr_db)).expect("finite positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = g.values().iter().map(|&v| v + normal.sample(&mut rng)).collect();
    g.with_values(values)
}
