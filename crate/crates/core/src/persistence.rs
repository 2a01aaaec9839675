//! Sublevel-set persistent homology of 2D grids.
//!
//! Pixels are vertices of the filtered complex and enter in ascending value
//! order, ties broken by raster index (lower index is elder). Dimension 0 is
//! computed with a union-find under the elder rule. Dimension 1 is computed by
//! duality: a loop of the sublevel set is a bounded component of the
//! complement, so the superlevel components of the complement are tracked with
//! the complementary connectivity, processing pixels in the exact reverse
//! order, with everything outside the image acting as one eternal component.
//!
//! With [`Connectivity::Eight`] the sublevel complex is the clique complex of
//! the 8-neighbour graph (diagonal neighbours connect, the complement uses
//! 4-connectivity). With [`Connectivity::Four`] it is the cubical complex
//! whose unit squares fill only when all four corners are present.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::grid::ScalarGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub fn dual(self) -> Self {
        match self {
            Connectivity::Four => Connectivity::Eight,
            Connectivity::Eight => Connectivity::Four,
        }
    }

    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        const EIGHT: [(isize, isize); 8] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub dim: u8,
    pub birth: f64,
    /// `f64::INFINITY` for essential classes.
    pub death: f64,
    /// Component minimum (dim 0) or the pixel whose arrival closes the loop (dim 1).
    pub birth_pixel: (usize, usize),
    /// Merge pixel (dim 0) or the last pixel to fill the loop (dim 1).
    pub death_pixel: Option<(usize, usize)>,
}

impl PersistencePair {
    pub fn lifetime(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_essential(&self) -> bool {
        self.death.is_infinite()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagram {
    pub pairs: Vec<PersistencePair>,
    pub rows: usize,
    pub cols: usize,
}

impl Diagram {
    pub fn dim(&self, dim: u8) -> impl Iterator<Item = &PersistencePair> + '_ {
        self.pairs.iter().filter(move |p| p.dim == dim)
    }

    pub fn finite(&self, dim: u8) -> impl Iterator<Item = &PersistencePair> + '_ {
        self.dim(dim).filter(|p| !p.is_essential())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Concatenates the pairs of two diagrams over the same grid.
    pub fn merged(mut self, other: Diagram) -> Diagram {
        self.pairs.extend(other.pairs);
        self
    }

    /// CSV with header `dim,birth,death,birth_row,birth_col`; essential
    /// deaths are written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dim,birth,death,birth_row,birth_col\n");
        for p in &self.pairs {
            let death = if p.is_essential() { "inf".to_string() } else { p.death.to_string() };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.dim, p.birth, death, p.birth_pixel.0, p.birth_pixel.1
            );
        }
        out
    }
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    /// Representative pixel of each root: the eldest member.
    elder: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            elder: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Links two roots, keeping `elder` as the surviving representative.
    fn link(&mut self, a: u32, b: u32, elder: u32) {
        let (big, small) = if self.size[a as usize] >= self.size[b as usize] { (a, b) } else { (b, a) };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.elder[big as usize] = elder;
    }
}

/// Pixel indices in filtration order: ascending value, then raster index.
fn filtration_order(values: &[f64]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..values.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| cmp_pixels(values, a, b));
    order
}

#[inline]
fn cmp_pixels(values: &[f64], a: u32, b: u32) -> Ordering {
    values[a as usize].total_cmp(&values[b as usize]).then(a.cmp(&b))
}

/// Calls `f` on each in-grid neighbour of `p`; returns whether `p` lies on
/// the image border.
#[inline]
fn for_neighbors(rows: usize, cols: usize, p: u32, conn: Connectivity, mut f: impl FnMut(u32)) -> bool {
    let (r, c) = ((p as usize / cols) as isize, (p as usize % cols) as isize);
    let border = r == 0 || c == 0 || r as usize == rows - 1 || c as usize == cols - 1;
    for &(dr, dc) in conn.offsets() {
        let (nr, nc) = (r + dr, c + dc);
        if nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols {
            f((nr as usize * cols + nc as usize) as u32);
        }
    }
    border
}

fn pixel(cols: usize, p: u32) -> (usize, usize) {
    (p as usize / cols, p as usize % cols)
}

/// Dimension-0 sublevel persistence with 8-connectivity.
pub fn sublevel_h0(g: &ScalarGrid) -> Diagram {
    sublevel_h0_with(g, Connectivity::Eight)
}

/// Dimension-1 sublevel persistence of the 8-connected sublevel complex.
pub fn sublevel_h1(g: &ScalarGrid) -> Diagram {
    sublevel_h1_with(g, Connectivity::Eight)
}

/// Both dimensions, sharing one sort.
pub fn sublevel_persistence(g: &ScalarGrid, conn: Connectivity) -> Diagram {
    let order = filtration_order(g.values());
    h0_from_order(g, &order, conn).merged(h1_from_order(g, &order, conn))
}

pub fn sublevel_h0_with(g: &ScalarGrid, conn: Connectivity) -> Diagram {
    h0_from_order(g, &filtration_order(g.values()), conn)
}

pub fn sublevel_h1_with(g: &ScalarGrid, conn: Connectivity) -> Diagram {
    h1_from_order(g, &filtration_order(g.values()), conn)
}

fn h0_from_order(g: &ScalarGrid, order: &[u32], conn: Connectivity) -> Diagram {
    let (rows, cols, values) = (g.rows(), g.cols(), g.values());
    let mut uf = UnionFind::new(values.len());
    let mut seen = vec![false; values.len()];
    let mut pairs = Vec::new();
    let mut neighbors = Vec::with_capacity(8);

    for &p in order {
        seen[p as usize] = true;
        neighbors.clear();
        for_neighbors(rows, cols, p, conn, |q| {
            if seen[q as usize] {
                neighbors.push(q);
            }
        });
        let death = values[p as usize];
        for &q in &neighbors {
            let (rp, rq) = (uf.find(p), uf.find(q));
            if rp == rq {
                continue;
            }
            let (ep, eq) = (uf.elder[rp as usize], uf.elder[rq as usize]);
            let (elder, younger) = if cmp_pixels(values, ep, eq).is_lt() { (ep, eq) } else { (eq, ep) };
            let birth = values[younger as usize];
            // p itself is never the younger root's representative here unless
            // it is still alone, in which case it joins without a pair.
            if younger != p && death > birth {
                pairs.push(PersistencePair {
                    dim: 0,
                    birth,
                    death,
                    birth_pixel: pixel(cols, younger),
                    death_pixel: Some(pixel(cols, p)),
                });
            }
            uf.link(rp, rq, elder);
        }
    }

    if let Some(&first) = order.first() {
        pairs.push(PersistencePair {
            dim: 0,
            birth: values[first as usize],
            death: f64::INFINITY,
            birth_pixel: pixel(cols, first),
            death_pixel: None,
        });
    }
    Diagram { pairs, rows, cols }
}

fn h1_from_order(g: &ScalarGrid, order: &[u32], conn: Connectivity) -> Diagram {
    let (rows, cols, values) = (g.rows(), g.cols(), g.values());
    let n = values.len();
    let outside = n as u32;
    let mut uf = UnionFind::new(n + 1);
    let mut seen = vec![false; n];
    let mut pairs = Vec::new();
    let mut neighbors = Vec::with_capacity(9);
    let complement = conn.dual();

    // Later in the sublevel order means elder in the complement; the outside
    // component is eldest of all.
    let elder_of = |a: u32, b: u32| -> (u32, u32) {
        if a == outside {
            (a, b)
        } else if b == outside || cmp_pixels(values, a, b).is_lt() {
            (b, a)
        } else {
            (a, b)
        }
    };

    for &p in order.iter().rev() {
        seen[p as usize] = true;
        neighbors.clear();
        let border = for_neighbors(rows, cols, p, complement, |q| {
            if seen[q as usize] {
                neighbors.push(q);
            }
        });
        if border {
            neighbors.push(outside);
        }
        let birth = values[p as usize];
        for &q in &neighbors {
            let (rp, rq) = (uf.find(p), uf.find(q));
            if rp == rq {
                continue;
            }
            let (elder, younger) = elder_of(uf.elder[rp as usize], uf.elder[rq as usize]);
            let death = values[younger as usize];
            if younger != p && death > birth {
                pairs.push(PersistencePair {
                    dim: 1,
                    birth,
                    death,
                    birth_pixel: pixel(cols, p),
                    death_pixel: Some(pixel(cols, younger)),
                });
            }
            uf.link(rp, rq, elder);
        }
    }
    Diagram { pairs, rows, cols }
}

/// Lifetimes `death - birth` of the pairs in `dim`. Essential classes
/// contribute `+inf` when included.
pub fn lifetimes(d: &Diagram, dim: u8, include_essential: bool) -> Vec<f64> {
    d.dim(dim)
        .filter(|p| include_essential || !p.is_essential())
        .map(PersistencePair::lifetime)
        .collect()
}

/// Bottleneck distance between the `dim` parts of two diagrams.
///
/// Finite pairs are matched exactly (binary search over the candidate
/// distances with a bipartite perfect-matching test). Essential pairs are
/// matched among themselves by sorted birth; differing essential counts give
/// `+inf`.
pub fn bottleneck(d1: &Diagram, d2: &Diagram, dim: u8) -> f64 {
    let mut e1: Vec<f64> = d1.dim(dim).filter(|p| p.is_essential()).map(|p| p.birth).collect();
    let mut e2: Vec<f64> = d2.dim(dim).filter(|p| p.is_essential()).map(|p| p.birth).collect();
    if e1.len() != e2.len() {
        return f64::INFINITY;
    }
    e1.sort_by(f64::total_cmp);
    e2.sort_by(f64::total_cmp);
    let essential = e1.iter().zip(&e2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let a: Vec<(f64, f64)> = d1.finite(dim).map(|p| (p.birth, p.death)).collect();
    let b: Vec<(f64, f64)> = d2.finite(dim).map(|p| (p.birth, p.death)).collect();
    essential.max(bottleneck_finite(&a, &b))
}

fn linf(x: (f64, f64), y: (f64, f64)) -> f64 {
    (x.0 - y.0).abs().max((x.1 - y.1).abs())
}

fn half_persistence(x: (f64, f64)) -> f64 {
    (x.1 - x.0) / 2.0
}

/// Exact bottleneck distance between two finite point sets above the diagonal.
pub fn bottleneck_finite(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let mut candidates: Vec<f64> = a
        .iter()
        .flat_map(|&x| b.iter().map(move |&y| linf(x, y)))
        .chain(a.iter().chain(b).map(|&x| half_persistence(x)))
        .collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let (mut lo, mut hi) = (0, candidates.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if perfect_matching(a, b, candidates[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    candidates[lo]
}

/// Whether every point of `a` and `b` can be matched (to each other or to the
/// diagonal) within distance `delta`.
///
/// Left vertices: `a` then one diagonal slot per point of `b`. Right vertices:
/// `b` then one diagonal slot per point of `a`.
fn perfect_matching(a: &[(f64, f64)], b: &[(f64, f64)], delta: f64) -> bool {
    let (m, n) = (a.len(), b.len());
    let size = m + n;
    let adjacency: Vec<Vec<usize>> = (0..size)
        .map(|l| {
            let mut adj = Vec::new();
            if l < m {
                let x = a[l];
                adj.extend((0..n).filter(|&j| linf(x, b[j]) <= delta));
                if half_persistence(x) <= delta {
                    adj.push(n + l);
                }
            } else {
                let j = l - m;
                if half_persistence(b[j]) <= delta {
                    adj.push(j);
                }
                adj.extend(n..n + m);
            }
            adj
        })
        .collect();

    let mut match_right: Vec<Option<usize>> = vec![None; size];
    for l in 0..size {
        let mut visited = vec![false; size];
        if !augment(l, &adjacency, &mut match_right, &mut visited) {
            return false;
        }
    }
    true
}

fn augment(l: usize, adjacency: &[Vec<usize>], match_right: &mut [Option<usize>], visited: &mut [bool]) -> bool {
    for &r in &adjacency[l] {
        if visited[r] {
            continue;
        }
        visited[r] = true;
        if match_right[r].is_none_or(|other| augment(other, adjacency, match_right, visited)) {
            match_right[r] = Some(l);
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[Vec<f64>]) -> ScalarGrid {
        ScalarGrid::from_rows(rows).unwrap()
    }

    fn finite_pairs(d: &Diagram, dim: u8) -> Vec<(f64, f64)> {
        let mut v: Vec<_> = d.finite(dim).map(|p| (p.birth, p.death)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn constant_grid_has_one_essential_class() {
        let g = grid(&[vec![0.3; 4], vec![0.3; 4]]);
        let d = sublevel_h0(&g);
        assert_eq!(d.pairs.len(), 1);
        assert_eq!(d.pairs[0].birth, 0.3);
        assert!(d.pairs[0].is_essential());
        assert!(sublevel_h1(&g).is_empty());
    }

    #[test]
    fn row_example_follows_elder_rule() {
        let g = grid(&[vec![0.0, 1.0, 0.2, 1.0, 0.1]]);
        let d = sublevel_h0(&g);
        assert_eq!(finite_pairs(&d, 0), vec![(0.1, 1.0), (0.2, 1.0)]);
        let essential: Vec<_> = d.dim(0).filter(|p| p.is_essential()).collect();
        assert_eq!(essential.len(), 1);
        assert_eq!(essential[0].birth, 0.0);
        assert_eq!(essential[0].birth_pixel, (0, 0));
    }

    #[test]
    fn birth_pixel_holds_birth_value() {
        let g = grid(&[vec![0.5, 0.9, 0.1], vec![0.9, 0.9, 0.9], vec![0.3, 0.9, 0.7]]);
        for p in sublevel_h0(&g).pairs {
            assert_eq!(g.get(p.birth_pixel.0, p.birth_pixel.1), p.birth);
        }
    }

    #[test]
    fn ring_encloses_one_loop() {
        let mut rows = vec![vec![1.0; 7]; 7];
        for i in 1..6 {
            rows[1][i] = 0.0;
            rows[5][i] = 0.0;
            rows[i][1] = 0.0;
            rows[i][5] = 0.0;
        }
        let d = sublevel_h1(&grid(&rows));
        assert_eq!(finite_pairs(&d, 1), vec![(0.0, 1.0)]);
    }

    #[test]
    fn diagonal_gap_does_not_leak_under_eight_connectivity() {
        // A diamond of zeros: closed only through diagonal contacts.
        let mut rows = vec![vec![1.0; 5]; 5];
        for (r, c) in [(0, 2), (1, 1), (1, 3), (2, 0), (2, 4), (3, 1), (3, 3), (4, 2)] {
            rows[r][c] = 0.0;
        }
        let g = grid(&rows);
        assert_eq!(finite_pairs(&sublevel_h1_with(&g, Connectivity::Eight), 1), vec![(0.0, 1.0)]);
        assert!(sublevel_h1_with(&g, Connectivity::Four).is_empty());
        // The same diamond is four components under 4-connectivity.
        assert_eq!(sublevel_h0_with(&g, Connectivity::Four).dim(0).count(), 8);
        assert_eq!(sublevel_h0_with(&g, Connectivity::Eight).dim(0).count(), 1);
    }

    #[test]
    fn lifetimes_examples() {
        let essential_only = Diagram {
            pairs: vec![PersistencePair {
                dim: 0,
                birth: 0.0,
                death: f64::INFINITY,
                birth_pixel: (0, 0),
                death_pixel: None,
            }],
            rows: 1,
            cols: 1,
        };
        assert!(lifetimes(&essential_only, 0, false).is_empty());
        assert_eq!(lifetimes(&essential_only, 0, true), vec![f64::INFINITY]);
        let one = Diagram {
            pairs: vec![PersistencePair {
                dim: 0,
                birth: 0.1,
                death: 0.5,
                birth_pixel: (0, 0),
                death_pixel: Some((0, 1)),
            }],
            rows: 1,
            cols: 2,
        };
        assert_eq!(lifetimes(&one, 0, false), vec![0.4]);
    }

    #[test]
    fn bottleneck_examples() {
        let g = grid(&[vec![0.0, 1.0, 0.2, 1.0, 0.1]]);
        let d = sublevel_h0(&g);
        assert_eq!(bottleneck(&d, &d, 0), 0.0);
        assert_eq!(bottleneck_finite(&[(0.0, 2.0)], &[]), 1.0);
        assert_eq!(bottleneck_finite(&[(0.0, 2.0)], &[(0.0, 2.5)]), 0.5);
        // Matching both to the diagonal (1.0) beats matching each other (3.0).
        assert_eq!(bottleneck_finite(&[(0.0, 2.0)], &[(3.0, 5.0)]), 1.0);
    }

    #[test]
    fn mismatched_essentials_are_infinitely_far() {
        let a = sublevel_h0(&grid(&[vec![0.0, 1.0]]));
        let mut b = a.clone();
        b.pairs.push(b.pairs[0]);
        assert_eq!(bottleneck(&a, &b, 0), f64::INFINITY);
    }

    #[test]
    fn diagram_csv_format() {
        let d = sublevel_h0(&grid(&[vec![0.0, 1.0, 0.5]]));
        assert_eq!(d.to_csv(), "dim,birth,death,birth_row,birth_col\n0,0.5,1,0,2\n0,0,inf,0,0\n");
    }
}
