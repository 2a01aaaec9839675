//! Earth mover's distance scores of depth and roundness lifetimes against
//! their nominal distributions.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::dtx::{binarize, distance_transform};
use crate::error::{Error, Result};
use crate::grid::ScalarGrid;
use crate::nominal::{expected_roundness_distribution, px_to_mm, NominalModel};
use crate::persistence::{sublevel_h1_with, Connectivity, Diagram, PersistencePair};

/// Finitely supported probability distribution, atoms sorted by position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifetimeDistribution {
    support: Vec<f64>,
    weights: Vec<f64>,
}

impl LifetimeDistribution {
    pub fn point_mass(x: f64) -> Self {
        Self {
            support: vec![x],
            weights: vec![1.0],
        }
    }

    /// Equal weight on every sample.
    pub fn empirical(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Domain("empirical distribution of no samples".into()));
        }
        let w = 1.0 / samples.len() as f64;
        Self::from_atoms(samples.iter().map(|&x| (x, w)).collect())
    }

    /// Atoms with positive weights, normalized to total mass 1.
    pub fn weighted(atoms: &[(f64, f64)]) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Domain("distribution with no atoms".into()));
        }
        if atoms.iter().any(|&(_, w)| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Domain("atom weights must be positive and finite".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        Self::from_atoms(atoms.iter().map(|&(x, w)| (x, w / total)).collect())
    }

    fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|a| !a.0.is_finite()) {
            return Err(Error::Domain("distribution support must be finite".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (support, weights) = atoms.into_iter().unzip();
        Ok(Self { support, weights })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }
}

/// Histogram bin count `ceil(2 n^(1/3))`, computed exactly as the least `k`
/// with `k^3 >= 8n`.
pub fn rice_bins(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::Argument("Rice's rule needs at least one sample".into()));
    }
    let target = 8 * n as u128;
    let mut k = (2.0 * (n as f64).cbrt()).ceil() as u128;
    while k > 1 && (k - 1).pow(3) >= target {
        k -= 1;
    }
    while k.pow(3) < target {
        k += 1;
    }
    Ok(k as usize)
}

/// Exact 1D Wasserstein-1 distance: the integral of `|F_u - F_v|`.
pub fn emd(u: &LifetimeDistribution, v: &LifetimeDistribution) -> Result<f64> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::Domain("earth mover's distance of an empty distribution".into()));
    }
    let (mut i, mut j) = (0, 0);
    let (mut fu, mut fv) = (0.0f64, 0.0f64);
    let mut x = u.support[0].min(v.support[0]);
    let mut total = 0.0;
    while i < u.len() || j < v.len() {
        let next = match (u.support.get(i), v.support.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        total += (fu - fv).abs() * (next - x);
        x = next;
        while i < u.len() && u.support[i] == x {
            fu += u.weights[i];
            i += 1;
        }
        while j < v.len() && v.support[j] == x {
            fv += v.weights[j];
            j += 1;
        }
    }
    Ok(total)
}

/// Marks lifetimes that survive the Rice-histogram noise cutoff: the cutoff
/// is raised past the highest bin holding more than `limit` lifetimes.
pub(crate) fn histogram_keep(lifetimes: &[f64], limit: usize, log: &mut Vec<String>) -> Vec<bool> {
    let n = lifetimes.len();
    if n == 0 {
        log.push("histogram cutoff: no finite pairs".into());
        return Vec::new();
    }
    let bins = rice_bins(n).expect("non-empty");
    let lo = lifetimes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lifetimes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let bin = |l: f64| {
        if width > 0.0 {
            (((l - lo) / width) as usize).min(bins - 1)
        } else {
            0
        }
    };
    let mut counts = vec![0usize; bins];
    for &l in lifetimes {
        counts[bin(l)] += 1;
    }
    let dense = counts.iter().rposition(|&c| c > limit);
    let keep: Vec<bool> = lifetimes
        .iter()
        .map(|&l| dense.is_none_or(|k| bin(l) > k))
        .collect();
    let kept = keep.iter().filter(|&&k| k).count();
    match dense {
        Some(k) => log.push(format!(
            "histogram cutoff: {bins} bins of width {width:.6}, bin {k} holds {} > {limit}; lifetime cutoff {:.6}, kept {kept} of {n}",
            counts[k],
            lo + (k + 1) as f64 * width
        )),
        None => log.push(format!(
            "histogram cutoff: {bins} bins, none above {limit}; kept {n} of {n}"
        )),
    }
    keep
}

/// Diagram after a filter, with one line per filtering step.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub diagram: Diagram,
    pub log: Vec<String>,
}

/// Keeps the flagged pairs, in order.
fn select(pairs: &[PersistencePair], keep: &[bool]) -> Vec<PersistencePair> {
    pairs.iter().zip(keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect()
}

/// Removes the pairs with the largest births until at most `cap` remain.
pub(crate) fn cap_by_birth(pairs: Vec<PersistencePair>, cap: usize) -> Vec<PersistencePair> {
    if pairs.len() <= cap {
        return pairs;
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].birth.total_cmp(&pairs[b].birth).then(a.cmp(&b)));
    let mut keep = vec![false; pairs.len()];
    for &i in &order[..cap] {
        keep[i] = true;
    }
    select(&pairs, &keep)
}

/// Noise filter for dim-0 strike-depth diagrams.
///
/// Low-lifetime pairs are cut with the Rice histogram rule, then the pairs
/// with the largest births are removed until at most `n_strikes` features
/// remain, the essential class counting as one.
pub fn denoise_depth_diagram(d: &Diagram, n_strikes: usize) -> Result<Filtered> {
    if n_strikes == 0 {
        return Err(Error::Argument("number of strikes must be positive".into()));
    }
    let mut log = Vec::new();
    let essential: Vec<PersistencePair> = d.dim(0).filter(|p| p.is_essential()).copied().collect();
    let finite: Vec<PersistencePair> = d.finite(0).copied().collect();
    let lifetimes: Vec<f64> = finite.iter().map(PersistencePair::lifetime).collect();
    let kept = select(&finite, &histogram_keep(&lifetimes, n_strikes, &mut log));

    let cap = n_strikes.saturating_sub(essential.len());
    let before = kept.len();
    let kept = cap_by_birth(kept, cap);
    log.push(format!(
        "birth cap: removed {} largest-birth pairs, kept {} finite + {} essential",
        before - kept.len(),
        kept.len(),
        essential.len()
    ));
    if kept.is_empty() {
        return Err(Error::Filter {
            message: format!("no finite dim-0 pairs survive denoising for {n_strikes} strikes"),
            log,
        });
    }
    let mut pairs = essential;
    pairs.extend(kept);
    Ok(Filtered {
        diagram: Diagram {
            pairs,
            rows: d.rows,
            cols: d.cols,
        },
        log,
    })
}

/// `1 - emd(lifetimes, nominal)` for lifetimes of a normalized surface.
pub fn depth_score(lifetimes: &[f64], nominal: &LifetimeDistribution) -> Result<f64> {
    if let Some(bad) = lifetimes.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Domain(format!(
            "lifetime {bad} outside [0, 1]; normalize the surface first"
        )));
    }
    Ok(1.0 - emd(&LifetimeDistribution::empirical(lifetimes)?, nominal)?)
}

/// Source of expected roundness lifetimes at a physical threshold height
/// `T` above the reference plane.
pub trait RoundnessNominal: Sync {
    fn expected(&self, height: f64) -> Result<LifetimeDistribution>;
}

impl RoundnessNominal for NominalModel {
    fn expected(&self, height: f64) -> Result<LifetimeDistribution> {
        expected_roundness_distribution(height, self)
    }
}

/// Empirical nominal taken from a reference surface (for textures without a
/// closed-form model): the lifetimes of the reference thresholded at the same
/// height above its own reference plane.
pub struct ReferenceSurface {
    grid: ScalarGrid,
    reference_height: f64,
    options: RoundnessOptions,
    cache: Mutex<BTreeMap<u64, LifetimeDistribution>>,
}

impl ReferenceSurface {
    pub fn new(grid: ScalarGrid, reference_height: f64, options: RoundnessOptions) -> Self {
        Self {
            grid,
            reference_height,
            options,
            cache: Mutex::new(BTreeMap::new()),
        }
    }
}

impl RoundnessNominal for ReferenceSurface {
    fn expected(&self, height: f64) -> Result<LifetimeDistribution> {
        let scale = self.grid.depth_scale.unwrap_or(1.0);
        let t = self.reference_height + height / scale;
        if let Some(d) = self.cache.lock().expect("cache poisoned").get(&t.to_bits()) {
            return Ok(d.clone());
        }
        let d = loop_distribution(&self.grid, t, &self.options)?;
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(t.to_bits(), d.clone());
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundnessOptions {
    pub n_thresholds: usize,
    /// Keep only this many longest-lived loops per threshold.
    pub max_loops: Option<usize>,
    pub connectivity: Connectivity,
}

impl Default for RoundnessOptions {
    fn default() -> Self {
        Self {
            n_thresholds: 50,
            max_loops: None,
            connectivity: Connectivity::Eight,
        }
    }
}

/// Dim-1 diagram of the distance transform of `g` binarized at `t`, in pixels.
pub fn threshold_loops(g: &ScalarGrid, t: f64, connectivity: Connectivity) -> Result<Diagram> {
    let dt = distance_transform(&binarize(g, t))?;
    Ok(sublevel_h1_with(&dt, connectivity))
}

/// Loop lifetimes at threshold `t` converted to the grid's physical units.
/// No loops at all is read as a single zero-lifetime feature.
fn loop_distribution(g: &ScalarGrid, t: f64, options: &RoundnessOptions) -> Result<LifetimeDistribution> {
    let d = threshold_loops(g, t, options.connectivity)?;
    let mut lifetimes: Vec<f64> = d
        .finite(1)
        .map(|p| px_to_mm(p.lifetime(), g.width_mm, g.cols() as f64))
        .collect::<Result<_>>()?;
    if let Some(k) = options.max_loops {
        lifetimes.sort_by(|a, b| b.total_cmp(a));
        lifetimes.truncate(k.max(1));
    }
    if lifetimes.is_empty() {
        return Ok(LifetimeDistribution::point_mass(0.0));
    }
    LifetimeDistribution::empirical(&lifetimes)
}

/// EMD between measured and nominal roundness lifetimes across thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundnessCurve {
    /// (normalized threshold t, EMD in physical units), t strictly increasing.
    pub samples: Vec<(f64, f64)>,
    pub reference_height: f64,
    /// Thresholds skipped because the transform or the nominal was undefined.
    pub gaps: Vec<(f64, String)>,
}

impl RoundnessCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,emd_mm\n");
        for (t, e) in &self.samples {
            out.push_str(&format!("{t},{e}\n"));
        }
        out
    }
}

/// Sweeps `n_thresholds` heights `t_k = h_r + (1 - h_r) k / N`, `k = 1..=N`,
/// comparing loop lifetimes of each distance-transformed threshold image
/// with the nominal at `T = (t - h_r) * depth_scale`.
///
/// The depth scale falls back to `R` for closed-form models via the grid's
/// `depth_scale` metadata; grids without one use 1.
pub fn roundness_curve(
    g: &ScalarGrid,
    nominal: &dyn RoundnessNominal,
    reference_height: f64,
    options: &RoundnessOptions,
) -> Result<RoundnessCurve> {
    if !(0.0..1.0).contains(&reference_height) {
        return Err(Error::Domain(format!(
            "reference height {reference_height} outside [0, 1)"
        )));
    }
    if options.n_thresholds == 0 {
        return Err(Error::Argument("need at least one threshold".into()));
    }
    let scale = g.depth_scale.unwrap_or(1.0);
    let n = options.n_thresholds;
    let points: Vec<Result<std::result::Result<(f64, f64), (f64, String)>>> = (1..=n)
        .into_par_iter()
        .map(|k| {
            let t = reference_height + (1.0 - reference_height) * k as f64 / n as f64;
            let height = (t - reference_height) * scale;
            let measured = match loop_distribution(g, t, options) {
                Ok(d) => d,
                Err(Error::Domain(m)) => return Ok(Err((t, m))),
                Err(e) => return Err(e),
            };
            let expected = match nominal.expected(height) {
                Ok(d) => d,
                Err(Error::Domain(m)) => return Ok(Err((t, m))),
                Err(e) => return Err(e),
            };
            Ok(Ok((t, emd(&measured, &expected)?)))
        })
        .collect();
    let mut curve = RoundnessCurve {
        samples: Vec::with_capacity(n),
        reference_height,
        gaps: Vec::new(),
    };
    for p in points {
        match p? {
            Ok(s) => curve.samples.push(s),
            Err(gap) => curve.gaps.push(gap),
        }
    }
    Ok(curve)
}

/// Area under the EMD curve over `[h_r, 1]` divided by `1 - h_r`.
/// Trapezoidal between samples; the curve is held constant from `h_r` to the
/// first sample.
pub fn generalized_roundness(curve: &RoundnessCurve) -> Result<f64> {
    let s = &curve.samples;
    let Some(&(t0, e0)) = s.first() else {
        return Err(Error::Degenerate("roundness curve has no samples".into()));
    };
    let span = 1.0 - curve.reference_height;
    if !(span > 0.0) {
        return Err(Error::Domain("reference height must be below 1".into()));
    }
    let mut area = (t0 - curve.reference_height).max(0.0) * e0;
    for w in s.windows(2) {
        area += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
    }
    Ok(area / span)
}

/// `1 - 4 R_G / (pi R)`; negative when the curve exceeds the quarter-ellipse
/// bound.
pub fn spherical_roundness(rg: f64, radius: f64) -> f64 {
    1.0 - 4.0 * rg / (std::f64::consts::PI * radius)
}

/// Scores and diagnostics of one analysis run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScoreReport {
    pub depth_score: Option<f64>,
    pub roundness_generalized: Option<f64>,
    pub roundness_spherical: Option<f64>,
    pub reference_height: Option<f64>,
    pub slopes_um_per_mm: Option<[f64; 2]>,
    pub n_pairs_kept: Option<usize>,
    pub filter_log: Vec<String>,
    pub warnings: Vec<String>,
}
