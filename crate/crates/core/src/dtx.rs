//! Threshold binarization and the exact Euclidean distance transform.

use crate::error::{Error, Result};
use crate::grid::{BinaryGrid, ScalarGrid};

/// White (foreground) where the height is strictly below `threshold`, so
/// strike interiors become white disks on a black surround.
pub fn binarize(g: &ScalarGrid, threshold: f64) -> BinaryGrid {
    let values = g.values().iter().map(|&v| v < threshold).collect();
    BinaryGrid::new(g.rows(), g.cols(), values).expect("dimensions come from a valid grid")
}

/// Distance in pixels from every pixel center to the nearest black pixel
/// center. Black pixels map to 0.
///
/// Separable lower-envelope algorithm over squared distances (one column
/// pass, one row pass); squared distances are integers, so the result is
/// exact up to the final square root.
pub fn distance_transform(b: &BinaryGrid) -> Result<ScalarGrid> {
    let squared = squared_distance_transform(b)?;
    let values = squared.into_iter().map(f64::sqrt).collect();
    ScalarGrid::new(b.rows(), b.cols(), values)
}

/// Squared distances, row-major.
pub fn squared_distance_transform(b: &BinaryGrid) -> Result<Vec<f64>> {
    let (rows, cols) = (b.rows(), b.cols());
    if b.values().iter().all(|&white| white) {
        return Err(Error::Domain(
            "distance transform needs at least one black pixel".into(),
        ));
    }
    let mut grid: Vec<f64> = b
        .values()
        .iter()
        .map(|&white| if white { f64::INFINITY } else { 0.0 })
        .collect();

    let mut env = LowerEnvelope::with_capacity(rows.max(cols));
    let mut line = vec![0.0; rows.max(cols)];
    let mut out = vec![0.0; rows.max(cols)];

    for c in 0..cols {
        for r in 0..rows {
            line[r] = grid[r * cols + c];
        }
        env.transform(&line[..rows], &mut out[..rows]);
        for r in 0..rows {
            grid[r * cols + c] = out[r];
        }
    }
    for r in 0..rows {
        let row = &mut grid[r * cols..(r + 1) * cols];
        line[..cols].copy_from_slice(row);
        env.transform(&line[..cols], &mut out[..cols]);
        row.copy_from_slice(&out[..cols]);
    }
    Ok(grid)
}

/// Scratch space for the 1D transform `out[q] = min_p (q - p)^2 + f[p]`.
struct LowerEnvelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl LowerEnvelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        self.sites.clear();
        self.bounds.clear();
        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            loop {
                let Some(&v) = self.sites.last() else {
                    self.sites.push(q);
                    self.bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let s = intersection(f, v, q);
                if s <= *self.bounds.last().expect("one bound per site") {
                    self.sites.pop();
                    self.bounds.pop();
                } else {
                    self.sites.push(q);
                    self.bounds.push(s);
                    break;
                }
            }
        }
        if self.sites.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        self.bounds.push(f64::INFINITY);
        let mut k = 0;
        for (q, slot) in out.iter_mut().enumerate() {
            while self.bounds[k + 1] < q as f64 {
                k += 1;
            }
            let p = self.sites[k];
            let d = q as f64 - p as f64;
            *slot = d * d + f[p];
        }
    }
}

/// Abscissa where the parabolas rooted at `v < q` intersect.
fn intersection(f: &[f64], v: usize, q: usize) -> f64 {
    let (vf, qf) = (v as f64, q as f64);
    ((f[q] + qf * qf) - (f[v] + vf * vf)) / (2.0 * (qf - vf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(b: &BinaryGrid) -> Vec<f64> {
        let (rows, cols) = (b.rows(), b.cols());
        let black: Vec<(i64, i64)> = (0..rows * cols)
            .filter(|&i| !b.values()[i])
            .map(|i| ((i / cols) as i64, (i % cols) as i64))
            .collect();
        (0..rows * cols)
            .map(|i| {
                let (r, c) = ((i / cols) as i64, (i % cols) as i64);
                let best = black
                    .iter()
                    .map(|&(br, bc)| (r - br).pow(2) + (c - bc).pow(2))
                    .min()
                    .unwrap();
                (best as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn binarize_extremes() {
        let g = ScalarGrid::from_rows(&[vec![0.2, 0.5], vec![0.7, 0.9]]).unwrap();
        assert_eq!(binarize(&g, 1.0).count_white(), 4);
        assert_eq!(binarize(&g, 0.2).count_white(), 0);
        assert_eq!(binarize(&g, 0.5).values(), &[true, false, false, false]);
    }

    #[test]
    fn all_black_is_zero() {
        let b = BinaryGrid::new(3, 4, vec![false; 12]).unwrap();
        assert!(distance_transform(&b).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_white_is_a_domain_error() {
        let b = BinaryGrid::new(2, 2, vec![true; 4]).unwrap();
        assert!(matches!(distance_transform(&b), Err(Error::Domain(_))));
    }

    #[test]
    fn single_black_corner() {
        let mut v = vec![true; 9];
        v[0] = false;
        let b = BinaryGrid::new(3, 3, v).unwrap();
        let d = distance_transform(&b).unwrap();
        assert_eq!(d.get(2, 2), 8f64.sqrt());
        assert_eq!(d.values(), brute_force(&b).as_slice());
    }

    #[test]
    fn disk_peak_equals_radius() {
        let k = 12i64;
        let n = 2 * k as usize + 9;
        let center = (n / 2) as i64;
        let b = BinaryGrid::new(
            n,
            n,
            (0..n * n)
                .map(|i| {
                    let (r, c) = ((i / n) as i64 - center, (i % n) as i64 - center);
                    r * r + c * c < k * k
                })
                .collect(),
        )
        .unwrap();
        let d = distance_transform(&b).unwrap();
        assert_eq!(d.max(), k as f64);
        assert_eq!(d.get(center as usize, center as usize), k as f64);
        assert_eq!(d.values(), brute_force(&b).as_slice());
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..60 {
            let rows = rng.random_range(1..=20);
            let cols = rng.random_range(1..=20);
            let density = rng.random_range(0.5..0.99);
            let mut v: Vec<bool> = (0..rows * cols).map(|_| rng.random_bool(density)).collect();
            v[rng.random_range(0..rows * cols)] = false;
            let b = BinaryGrid::new(rows, cols, v).unwrap();
            assert_eq!(distance_transform(&b).unwrap().values(), brute_force(&b).as_slice(), "trial {trial}");
        }
    }

    #[test]
    fn transform_is_one_lipschitz() {
        let b = BinaryGrid::new(
            16,
            16,
            (0..256).map(|i| (i * 7919) % 13 != 0).collect(),
        )
        .unwrap();
        let d = distance_transform(&b).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                if c + 1 < 16 {
                    assert!((d.get(r, c) - d.get(r, c + 1)).abs() <= 1.0);
                }
                if r + 1 < 16 {
                    assert!((d.get(r, c) - d.get(r + 1, c)).abs() <= 1.0);
                }
                if r + 1 < 16 && c + 1 < 16 {
                    assert!((d.get(r, c) - d.get(r + 1, c + 1)).abs() <= 2f64.sqrt() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn foreground_and_distances_grow_with_threshold() {
        let g = ScalarGrid::from_fn(20, 20, |r, c| {
            (((r as f64 - 9.5).powi(2) + (c as f64 - 9.5).powi(2)).sqrt() / 14.0).min(1.0)
        })
        .unwrap();
        let mut previous: Option<(BinaryGrid, ScalarGrid)> = None;
        for t in [0.2, 0.4, 0.6, 0.8] {
            let b = binarize(&g, t);
            let d = distance_transform(&b).unwrap();
            if let Some((pb, pd)) = &previous {
                for i in 0..400 {
                    assert!(!pb.values()[i] || b.values()[i]);
                    if pb.values()[i] {
                        assert!(d.values()[i] >= pd.values()[i]);
                    }
                }
            }
            previous = Some((b, d));
        }
    }
}
