//! End-to-end analyses: closed-form verification on generated lattices, the
//! noise study, and scoring of a measured surface.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{downsample, normalize, ScalarGrid};
use crate::nominal::{
    critical_overlap, diagonal_height, diagonal_spacing, expected_depth_distribution, intersection_height_a,
    merge_height, px_to_mm, sigma_at, NominalModel,
};
use crate::persistence::{lifetimes, sublevel_h0, Diagram};
use crate::reference::{filter_minima, fit_plane, minima_points, reference_height, slopes_physical, PlaneFit};
use crate::scoring::{
    denoise_depth_diagram, depth_score, emd, generalized_roundness, roundness_curve, spherical_roundness,
    threshold_loops, LifetimeDistribution, ReferenceSurface, RoundnessCurve, RoundnessOptions, ScoreReport,
};
use crate::synth::{
    add_gaussian_noise, gaussian_bump_surface, spherical_grid_with, strikes_fitting, GaussianBumps, Placement,
    ProcessParams,
};

/// Side of the square window the verification lattices must fit in, mm.
pub const VERIFY_WINDOW_MM: f64 = 2.5;
/// Image width of the verification surfaces, mm.
pub const VERIFY_WIDTH_MM: f64 = 2.55;

/// Closed-form quantities of one pattern, for reporting.
#[derive(Debug, Clone, Serialize)]
pub struct TheorySummary {
    pub overlap: f64,
    pub strikes: usize,
    pub frequency_hz: f64,
    pub speed_mm_per_min: f64,
    pub radius_mm: f64,
    pub spacing_mm: f64,
    pub merge_height_mm: f64,
    pub merge_height_normalized: f64,
    pub diagonal_spacing_mm: f64,
    pub diagonal_height_mm: f64,
    pub critical_overlap: f64,
    pub thresholds: Vec<ThresholdTheory>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdTheory {
    /// Threshold as a multiple of the merge height.
    pub epsilon: f64,
    pub threshold_mm: f64,
    pub sigma_mm: f64,
    /// Present once neighbouring cross-sections overlap.
    pub a_mm: Option<f64>,
}

pub fn theory(params: &ProcessParams, epsilons: &[f64]) -> Result<TheorySummary> {
    let model = NominalModel::from_params(params)?;
    let radius = model.radius;
    let r = model.overlap_x;
    let h = model.merge_height();
    let thresholds = epsilons
        .iter()
        .map(|&epsilon| {
            let t = epsilon * h;
            Ok(ThresholdTheory {
                epsilon,
                threshold_mm: t,
                sigma_mm: sigma_at(t, radius)?,
                a_mm: if t >= h { Some(intersection_height_a(t, radius, r)?) } else { None },
            })
        })
        .collect::<Result<_>>()?;
    Ok(TheorySummary {
        overlap: r,
        strikes: model.rows,
        frequency_hz: params.frequency_hz,
        speed_mm_per_min: params.speed_x,
        radius_mm: radius,
        spacing_mm: model.center_spacing(),
        merge_height_mm: h,
        merge_height_normalized: merge_height(r, 1.0)?,
        diagonal_spacing_mm: diagonal_spacing(r, radius),
        diagonal_height_mm: diagonal_height(r, radius)?,
        critical_overlap: critical_overlap(),
        thresholds,
    })
}

/// Measured value against theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Check {
    pub theory: f64,
    pub measured: f64,
    pub percent_diff: f64,
}

impl Check {
    pub fn new(theory: f64, measured: f64) -> Self {
        Self {
            theory,
            measured,
            percent_diff: 100.0 * (measured - theory).abs() / theory.abs(),
        }
    }

    pub fn within(&self, percent: f64) -> bool {
        self.percent_diff <= percent
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundnessCheck {
    pub epsilon: f64,
    pub loops: usize,
    /// Median positive birth against `a`; absent below the merge height.
    pub birth_mm: Option<Check>,
    /// Median death against `sigma`.
    pub death_mm: Check,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationRow {
    pub overlap: f64,
    pub strikes: usize,
    pub pixels: usize,
    /// Modal finite dim-0 lifetime against the normalized merge height.
    pub depth: Check,
    pub roundness: Vec<RoundnessCheck>,
}

impl VerificationRow {
    pub fn checks(&self) -> impl Iterator<Item = (String, Check)> + '_ {
        std::iter::once(("depth lifetime".to_string(), self.depth)).chain(self.roundness.iter().flat_map(|c| {
            let eps = c.epsilon;
            c.birth_mm
                .map(|b| (format!("birth at eps={eps}"), b))
                .into_iter()
                .chain(std::iter::once((format!("death at eps={eps}"), c.death_mm)))
        }))
    }
}

/// Most frequent exact value; the median when no value repeats.
pub fn modal_value(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (mut best, mut best_len) = (*v.first()?, 1);
    let mut i = 0;
    while i < v.len() {
        let j = i + v[i..].iter().take_while(|&&x| x == v[i]).count();
        if j - i > best_len {
            best = v[i];
            best_len = j - i;
        }
        i = j;
    }
    Some(if best_len > 1 { best } else { v[v.len() / 2] })
}

/// Upper median.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.get(v.len() / 2).copied()
}

/// Depth lifetime check of a generated lattice.
pub fn verify_depth(g: &ScalarGrid, overlap: f64) -> Result<Check> {
    let lt = lifetimes(&sublevel_h0(g), 0, false);
    let measured = modal_value(&lt).ok_or_else(|| Error::Degenerate("no finite dim-0 pairs".into()))?;
    Ok(Check::new(merge_height(overlap, 1.0)?, measured))
}

/// Roundness check at `T = epsilon * h`: loop births and deaths of the
/// distance transform, in mm.
pub fn verify_roundness(g: &ScalarGrid, model: &NominalModel, epsilon: f64) -> Result<RoundnessCheck> {
    let radius = model.radius;
    let t = epsilon * model.merge_height();
    let d = threshold_loops(g, t / radius, Default::default())?;
    let to_mm = |px: f64| px_to_mm(px, g.width_mm, g.cols() as f64);
    let births: Vec<f64> = d.dim(1).map(|p| p.birth).filter(|&b| b > 0.0).map(to_mm).collect::<Result<_>>()?;
    let deaths: Vec<f64> = d.finite(1).map(|p| to_mm(p.death)).collect::<Result<_>>()?;
    let death = median(&deaths).ok_or_else(|| Error::Degenerate(format!("no loops at eps={epsilon}")))?;
    let birth_mm = if t >= model.merge_height() {
        let a = intersection_height_a(t, radius, model.overlap_x)?;
        let measured = median(&births).ok_or_else(|| Error::Degenerate(format!("no positive births at eps={epsilon}")))?;
        Some(Check::new(a, measured))
    } else {
        None
    };
    Ok(RoundnessCheck {
        epsilon,
        loops: deaths.len(),
        birth_mm,
        death_mm: Check::new(sigma_at(t, radius)?, death),
    })
}

/// Generates the snapped lattice for overlap `r` in the verification window and
/// checks depth lifetimes and roundness at each epsilon (thresholds above the
/// merge height are skipped for zero overlap, which has no overlap regime).
pub fn verify_overlap(overlap: f64, pixels: usize, epsilons: &[f64]) -> Result<VerificationRow> {
    let strikes = strikes_fitting(overlap, VERIFY_WINDOW_MM);
    let params = ProcessParams::from_overlap(overlap, strikes, VERIFY_WIDTH_MM, pixels);
    let g = spherical_grid_with(&params, Placement::Snapped)?;
    let model = NominalModel::from_params(&params)?;
    let roundness = epsilons
        .iter()
        .filter(|&&e| e <= 1.0 || overlap > 0.0)
        .map(|&e| verify_roundness(&g, &model, e))
        .collect::<Result<_>>()?;
    Ok(VerificationRow {
        overlap,
        strikes,
        pixels,
        depth: verify_depth(&g, overlap)?,
        roundness,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseStudyConfig {
    pub bumps: GaussianBumps,
    pub snr_db: Vec<f64>,
    pub trials: u64,
    pub roundness: RoundnessOptions,
}

impl Default for NoiseStudyConfig {
    fn default() -> Self {
        let bumps = GaussianBumps::default();
        Self {
            bumps,
            snr_db: vec![10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 50.0],
            trials: 10,
            roundness: RoundnessOptions {
                n_thresholds: 30,
                max_loops: Some(bumps.per_side * bumps.per_side),
                ..RoundnessOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseRow {
    pub snr_db: f64,
    pub depth_mean: f64,
    pub depth_std: f64,
    pub roundness_mean: f64,
    pub roundness_std: f64,
    pub depth_failures: usize,
    pub roundness_failures: usize,
}

pub fn noise_rows_csv(rows: &[NoiseRow]) -> String {
    let mut out =
        String::from("snr_db,depth_mean,depth_std,roundness_mean,roundness_std,depth_failures,roundness_failures\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.snr_db,
            r.depth_mean,
            r.depth_std,
            r.roundness_mean,
            r.roundness_std,
            r.depth_failures,
            r.roundness_failures
        ));
    }
    out
}

/// Mean and sample standard deviation; NaN for an empty sample.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Scores of one surface against the clean bump texture.
pub struct NoiseStudy {
    config: NoiseStudyConfig,
    clean: ScalarGrid,
    depth_nominal: LifetimeDistribution,
    roundness_nominal: ReferenceSurface,
    /// Roundness normalizer: half the bump spacing, in pixels.
    radius: f64,
}

impl NoiseStudy {
    /// Builds the clean surface in pixel units and takes its own depth and
    /// roundness lifetimes as the nominal distributions.
    pub fn new(config: NoiseStudyConfig) -> Result<Self> {
        let p = config.bumps.pixels;
        let clean = gaussian_bump_surface(&config.bumps)?.with_width_mm(p as f64);
        let features = config.bumps.per_side * config.bumps.per_side;
        let d = sublevel_h0(&clean);
        let depth = denoise_depth_diagram(&d, features)?;
        let depth_nominal = LifetimeDistribution::empirical(&lifetimes(&depth.diagram, 0, false))?;
        let h_ref = reference_height(&filter_minima(&d, features, false)?.diagram)?;
        let roundness_nominal = ReferenceSurface::new(clean.clone(), h_ref, config.roundness);
        let radius = config.bumps.spacing_px() / 2.0;
        Ok(Self {
            config,
            clean,
            depth_nominal,
            roundness_nominal,
            radius,
        })
    }

    pub fn clean(&self) -> &ScalarGrid {
        &self.clean
    }

    /// Noisy copy of the clean surface, clipped to the sensor range [0, 1].
    pub fn noisy(&self, snr_db: f64, seed: u64) -> Result<ScalarGrid> {
        add_gaussian_noise(&self.clean, snr_db, seed).map(|v| v.clamp(0.0, 1.0))
    }

    fn features(&self) -> usize {
        self.config.bumps.per_side * self.config.bumps.per_side
    }

    pub fn depth_score(&self, g: &ScalarGrid) -> Result<f64> {
        let depth = denoise_depth_diagram(&sublevel_h0(g), self.features())?;
        let lt = lifetimes(&depth.diagram, 0, false);
        Ok(1.0 - emd(&LifetimeDistribution::empirical(&lt)?, &self.depth_nominal)?)
    }

    pub fn roundness_score(&self, g: &ScalarGrid) -> Result<f64> {
        let h_r = reference_height(&filter_minima(&sublevel_h0(g), self.features(), false)?.diagram)?;
        let curve = roundness_curve(g, &self.roundness_nominal, h_r, &self.config.roundness)?;
        Ok(spherical_roundness(generalized_roundness(&curve)?, self.radius))
    }

    /// Score statistics over the trials at one SNR. Trials whose filter fails
    /// are counted and left out of the statistics.
    pub fn row(&self, snr_db: f64) -> Result<NoiseRow> {
        let mut depth = Vec::new();
        let mut roundness = Vec::new();
        let (mut depth_failures, mut roundness_failures) = (0, 0);
        for seed in 0..self.config.trials {
            let g = self.noisy(snr_db, seed)?;
            match self.depth_score(&g) {
                Ok(v) => depth.push(v),
                Err(_) => depth_failures += 1,
            }
            match self.roundness_score(&g) {
                Ok(v) => roundness.push(v),
                Err(_) => roundness_failures += 1,
            }
        }
        let (depth_mean, depth_std) = mean_std(&depth);
        let (roundness_mean, roundness_std) = mean_std(&roundness);
        Ok(NoiseRow {
            snr_db,
            depth_mean,
            depth_std,
            roundness_mean,
            roundness_std,
            depth_failures,
            roundness_failures,
        })
    }

    pub fn run(&self) -> Result<Vec<NoiseRow>> {
        self.config.snr_db.iter().map(|&s| self.row(s)).collect()
    }
}

/// Inputs of a measured-surface analysis.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeConfig {
    pub overlap: f64,
    pub strikes: usize,
    /// Physical depth of normalized height 1; defaults to the strike radius.
    pub depth_scale_mm: Option<f64>,
    /// Maximum image depth in µm, needed for physical slopes.
    pub depth_max_um: Option<f64>,
    pub drop_zero_births: bool,
    /// Side limit of the image used to locate minima.
    pub minima_pixels: usize,
    pub roundness: RoundnessOptions,
}

impl AnalyzeConfig {
    pub fn new(overlap: f64, strikes: usize) -> Self {
        Self {
            overlap,
            strikes,
            depth_scale_mm: None,
            depth_max_um: None,
            drop_zero_births: true,
            minima_pixels: 300,
            roundness: RoundnessOptions {
                max_loops: Some(strikes * strikes),
                ..RoundnessOptions::default()
            },
        }
    }

    pub fn model(&self, g: &ScalarGrid) -> Result<NominalModel> {
        let params = ProcessParams::from_overlap(self.overlap, self.strikes, g.width_mm, g.cols());
        params.validate()?;
        NominalModel::from_params(&params)
    }
}

/// Strike minima located on a copy downsampled to at most `max_side` pixels,
/// with birth pixels mapped back to block centers of the input grid.
#[derive(Debug, Clone)]
pub struct Minima {
    pub diagram: Diagram,
    pub log: Vec<String>,
    /// (i_x, i_y, z) in input-grid pixel coordinates.
    pub points: Vec<(f64, f64, f64)>,
    pub reference_height: f64,
}

pub fn locate_minima(g: &ScalarGrid, n_expected: usize, drop_zero_births: bool, max_side: usize) -> Result<Minima> {
    let (tr, tc) = (g.rows().min(max_side), g.cols().min(max_side));
    let small = downsample(g, tr, tc)?;
    let filtered = filter_minima(&sublevel_h0(&small), n_expected, drop_zero_births)?;
    let (sr, sc) = (g.rows() as f64 / tr as f64, g.cols() as f64 / tc as f64);
    let points = minima_points(&filtered.diagram)
        .into_iter()
        .map(|(x, y, z)| ((x + 0.5) * sc - 0.5, (y + 0.5) * sr - 0.5, z))
        .collect();
    Ok(Minima {
        reference_height: reference_height(&filtered.diagram)?,
        diagram: filtered.diagram,
        log: filtered.log,
        points,
    })
}

/// Plane through the strike minima and its physical slopes, when the depth
/// range is known.
pub fn slope(g: &ScalarGrid, minima: &Minima, depth_max_um: Option<f64>) -> Result<(PlaneFit, Option<[f64; 2]>)> {
    let fit = fit_plane(&minima.points)?;
    let slopes = depth_max_um
        .map(|d| slopes_physical(fit.c1, fit.c2, d, g.width_mm, g.cols() as f64).map(|(x, y)| [x, y]))
        .transpose()?;
    Ok((fit, slopes))
}

/// Depth score of a surface (normalized first).
pub fn analyze_depth(g: &ScalarGrid, config: &AnalyzeConfig) -> Result<ScoreReport> {
    let g = normalize(g);
    let model = config.model(&g)?;
    let filtered = denoise_depth_diagram(&sublevel_h0(&g), model.strikes())?;
    let lt = lifetimes(&filtered.diagram, 0, false);
    Ok(ScoreReport {
        depth_score: Some(depth_score(&lt, &expected_depth_distribution(&model))?),
        n_pairs_kept: Some(lt.len()),
        filter_log: filtered.log,
        ..ScoreReport::default()
    })
}

/// Roundness scores, reference height and slopes of a surface (normalized
/// first).
pub fn analyze_roundness(g: &ScalarGrid, config: &AnalyzeConfig) -> Result<(ScoreReport, RoundnessCurve)> {
    let model = config.model(g)?;
    let g = normalize(g).with_depth_scale(Some(config.depth_scale_mm.unwrap_or(model.radius)));
    let minima = locate_minima(&g, model.strikes(), config.drop_zero_births, config.minima_pixels)?;
    let curve = roundness_curve(&g, &model, minima.reference_height, &config.roundness)?;
    let rg = generalized_roundness(&curve)?;
    let spherical = spherical_roundness(rg, model.radius);
    let (_, slopes) = slope(&g, &minima, config.depth_max_um)?;
    let mut warnings: Vec<String> = curve
        .gaps
        .iter()
        .map(|(t, why)| format!("threshold {t:.4} skipped: {why}"))
        .collect();
    if spherical < 0.0 {
        warnings.push("spherical roundness is negative: features differ from nominal by more than the quarter-ellipse bound".into());
    }
    let report = ScoreReport {
        roundness_generalized: Some(rg),
        roundness_spherical: Some(spherical),
        reference_height: Some(minima.reference_height),
        slopes_um_per_mm: slopes,
        n_pairs_kept: Some(minima.diagram.len()),
        filter_log: minima.log,
        warnings,
        ..ScoreReport::default()
    };
    Ok((report, curve))
}
