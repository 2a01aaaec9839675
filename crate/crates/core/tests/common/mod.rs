//! Slow, direct reference implementations used as test oracles.

#![allow(dead_code)]

use std::collections::HashMap;

use topotex::{BinaryGrid, Connectivity, Diagram, ScalarGrid};

/// (dim, birth, death) with zero-persistence pairs removed, sorted.
pub type Triples = Vec<(u8, f64, f64)>;

pub fn triples(d: &Diagram) -> Triples {
    let mut t: Triples = d
        .pairs
        .iter()
        .filter(|p| p.death > p.birth)
        .map(|p| (p.dim, p.birth, p.death))
        .collect();
    sort(&mut t);
    t
}

fn sort(t: &mut Triples) {
    t.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
}

/// Cells of the lower-star complex on the pixel grid, each a sorted list of
/// vertex (raster) indices. With eight-connectivity: the clique complex of
/// the 8-neighbour graph, i.e. every 2x2 block is a solid tetrahedron. With
/// four-connectivity: vertices, 4-edges and unit squares.
pub fn cells(rows: usize, cols: usize, conn: Connectivity) -> Vec<Vec<usize>> {
    let id = |r: usize, c: usize| r * cols + c;
    let mut out: Vec<Vec<usize>> = (0..rows * cols).map(|v| vec![v]).collect();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                out.push(vec![id(r, c), id(r, c + 1)]);
            }
            if r + 1 < rows {
                out.push(vec![id(r, c), id(r + 1, c)]);
            }
        }
    }
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols.saturating_sub(1) {
            let block = [id(r, c), id(r, c + 1), id(r + 1, c), id(r + 1, c + 1)];
            match conn {
                Connectivity::Four => out.push(block.to_vec()),
                Connectivity::Eight => {
                    out.push(vec![block[0], block[3]]);
                    out.push(vec![block[1], block[2]]);
                    for skip in 0..4 {
                        out.push(block.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &v)| v).collect());
                    }
                    out.push(block.to_vec());
                }
            }
        }
    }
    for cell in &mut out {
        cell.sort_unstable();
    }
    out
}

/// Cell dimension: the number of vertices minus one, except that a
/// four-connectivity square is 2-dimensional.
fn cell_dim(cell: &[usize], conn: Connectivity) -> usize {
    match (conn, cell.len()) {
        (Connectivity::Four, 4) => 2,
        (_, n) => n - 1,
    }
}

/// Codimension-one faces.
fn boundary(cell: &[usize], conn: Connectivity, cols: usize) -> Vec<Vec<usize>> {
    match (conn, cell.len()) {
        (_, 1) => vec![],
        (Connectivity::Four, 4) => {
            // Sorted corners of a square: top-left, top-right, bottom-left, bottom-right.
            let [a, b, c, d] = [cell[0], cell[1], cell[2], cell[3]];
            debug_assert_eq!(b, a + 1);
            debug_assert_eq!(c, a + cols);
            vec![vec![a, b], vec![a, c], vec![b, d], vec![c, d]]
        }
        _ => (0..cell.len())
            .map(|skip| cell.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &v)| v).collect())
            .collect(),
    }
}

/// Vertex ranks: ascending value, ties by raster index.
fn ranks(g: &ScalarGrid) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g.values()[a].total_cmp(&g.values()[b]).then(a.cmp(&b)));
    let mut rank = vec![0; g.len()];
    for (k, &v) in order.iter().enumerate() {
        rank[v] = k;
    }
    rank
}

/// Persistence by column reduction of the Z/2 boundary matrix of the
/// lower-star filtration. Cells are ordered by (rank of their highest vertex,
/// dimension). Unpaired 0- and 1-cells give essential classes.
pub fn reduction_diagram(g: &ScalarGrid, conn: Connectivity) -> Triples {
    let cols = g.cols();
    let rank = ranks(g);
    let mut cells = cells(g.rows(), cols, conn);
    let key = |c: &Vec<usize>| (c.iter().map(|&v| rank[v]).max().unwrap(), cell_dim(c, conn));
    cells.sort_by_key(key);
    let index: HashMap<Vec<usize>, usize> = cells.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
    let value = |c: &Vec<usize>| c.iter().map(|&v| g.values()[v]).fold(f64::NEG_INFINITY, f64::max);

    let mut columns: Vec<Vec<usize>> = cells
        .iter()
        .map(|c| {
            let mut col: Vec<usize> = boundary(c, conn, cols).iter().map(|f| index[f]).collect();
            col.sort_unstable();
            col
        })
        .collect();
    let mut low_owner: HashMap<usize, usize> = HashMap::new();
    let mut paired = vec![false; cells.len()];
    let mut out = Triples::new();
    for j in 0..columns.len() {
        while let Some(&low) = columns[j].last() {
            match low_owner.get(&low) {
                Some(&k) => {
                    let other = columns[k].clone();
                    columns[j] = symmetric_difference(&columns[j], &other);
                }
                None => break,
            }
        }
        if let Some(&low) = columns[j].last() {
            low_owner.insert(low, j);
            paired[low] = true;
            paired[j] = true;
            let (b, d) = (value(&cells[low]), value(&cells[j]));
            if d > b {
                out.push((cell_dim(&cells[low], conn) as u8, b, d));
            }
        }
    }
    for (i, c) in cells.iter().enumerate() {
        let dim = cell_dim(c, conn);
        if !paired[i] && dim <= 1 {
            out.push((dim as u8, value(c), f64::INFINITY));
        }
    }
    sort(&mut out);
    out
}

fn symmetric_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                out.push(*x);
                i += 1;
            }
            (Some(_), Some(y)) => {
                out.push(*y);
                j += 1;
            }
            (Some(x), None) => {
                out.push(*x);
                i += 1;
            }
            (None, Some(y)) => {
                out.push(*y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

/// Euler characteristic of the sublevel complex `{v <= t}`.
pub fn euler_characteristic(g: &ScalarGrid, conn: Connectivity, t: f64) -> i64 {
    cells(g.rows(), g.cols(), conn)
        .iter()
        .filter(|c| c.iter().all(|&v| g.values()[v] <= t))
        .map(|c| if cell_dim(c, conn) % 2 == 0 { 1 } else { -1 })
        .sum()
}

/// Distance from every pixel to the nearest black pixel by exhaustive search.
pub fn brute_force_edt(b: &BinaryGrid) -> Vec<f64> {
    let black: Vec<(i64, i64)> = (0..b.rows())
        .flat_map(|r| (0..b.cols()).map(move |c| (r, c)))
        .filter(|&(r, c)| !b.get(r, c))
        .map(|(r, c)| (r as i64, c as i64))
        .collect();
    (0..b.rows())
        .flat_map(|r| (0..b.cols()).map(move |c| (r as i64, c as i64)))
        .map(|(r, c)| {
            let d2 = black.iter().map(|&(br, bc)| (br - r).pow(2) + (bc - c).pow(2)).min().unwrap();
            (d2 as f64).sqrt()
        })
        .collect()
}

/// Earth mover's distance between two atom sets with positive integer
/// weights, solved as a transportation problem by successive shortest
/// augmenting paths (Bellman-Ford on the residual graph) with cost `|x - y|`.
///
/// Both sides are scaled to the common total `W_u * W_v`, so every supply is
/// an integer and each augmentation moves at least one unit.
pub fn transport_emd(u: &[(f64, f64)], v: &[(f64, f64)]) -> f64 {
    let units = |atoms: &[(f64, f64)]| -> Vec<i64> {
        atoms
            .iter()
            .map(|&(_, w)| {
                assert!(w >= 1.0 && w.fract() == 0.0, "transport oracle needs integer weights");
                w as i64
            })
            .collect()
    };
    let (wu, wv) = (units(u), units(v));
    let (total_u, total_v): (i64, i64) = (wu.iter().sum(), wv.iter().sum());
    let (n, m) = (u.len(), v.len());
    let (source, sink) = (0, n + m + 1);
    let nodes = n + m + 2;
    // (from, to, residual capacity, cost); edge k ^ 1 is the reverse of k.
    let mut edges: Vec<(usize, usize, i64, f64)> = Vec::new();
    let mut add = |a: usize, b: usize, cap: i64, cost: f64| {
        edges.push((a, b, cap, cost));
        edges.push((b, a, 0, -cost));
    };
    for i in 0..n {
        add(source, 1 + i, wu[i] * total_v, 0.0);
    }
    for j in 0..m {
        add(1 + n + j, sink, wv[j] * total_u, 0.0);
    }
    for (i, &(x, _)) in u.iter().enumerate() {
        for (j, &(y, _)) in v.iter().enumerate() {
            add(1 + i, 1 + n + j, i64::MAX, (x - y).abs());
        }
    }
    let mut cost = 0.0;
    loop {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for (k, &(a, b, cap, c)) in edges.iter().enumerate() {
                if cap > 0 && dist[a] + c < dist[b] - 1e-12 {
                    dist[b] = dist[a] + c;
                    via[b] = k;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink].is_infinite() {
            return cost / (total_u * total_v) as f64;
        }
        let mut path = Vec::new();
        let mut node = sink;
        while node != source {
            assert!(path.len() < nodes, "residual path revisits a node");
            let k = via[node];
            path.push(k);
            node = edges[k].0;
        }
        let push = path.iter().map(|&k| edges[k].2).min().unwrap();
        for &k in &path {
            edges[k].2 -= push;
            edges[k ^ 1].2 += push;
            cost += push as f64 * edges[k].3;
        }
    }
}
