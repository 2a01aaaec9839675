//! Surface images: scalar height grids, binary masks, and CSV/PGM I/O.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A `rows × cols` height map stored row-major, with the physical metadata
/// needed to convert pixel distances and normalized heights back to units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    /// Physical width of the image along the column axis, in mm.
    pub width_mm: f64,
    /// Physical depth represented by a normalized height of 1, when known.
    pub depth_scale: Option<f64>,
}

impl ScalarGrid {
    /// Builds a grid from row-major values. The physical width defaults to
    /// one unit per column.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Argument("grid dimensions must be positive".into()));
        }
        if values.len() != rows * cols {
            return Err(Error::Argument(format!(
                "expected {} values for a {rows}x{cols} grid, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite value at row {}, col {}",
                i / cols,
                i % cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            width_mm: cols as f64,
            depth_scale: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Argument("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Evaluates `f(row, col)` at every pixel.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self::new(rows, cols, values)
    }

    pub fn with_width_mm(mut self, width_mm: f64) -> Self {
        self.width_mm = width_mm;
        self
    }

    pub fn with_depth_scale(mut self, depth_scale: Option<f64>) -> Self {
        self.depth_scale = depth_scale;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `f` pointwise, keeping dimensions and metadata.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Ok(Self::new(self.rows, self.cols, values)?
            .with_width_mm(self.width_mm)
            .with_depth_scale(self.depth_scale))
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            rows: self.rows,
            cols: self.cols,
            values,
            width_mm: self.width_mm,
            depth_scale: self.depth_scale,
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A thresholded image; `true` is white (foreground).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryGrid {
    rows: usize,
    cols: usize,
    values: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Argument(format!(
                "binary grid of {rows}x{cols} cannot hold {} values",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.values[row * self.cols + col]
    }

    pub fn count_white(&self) -> usize {
        self.values.iter().filter(|&&w| w).count()
    }
}

/// Affine rescale to `[0, 1]`. A constant grid maps to all zeros.
pub fn normalize(g: &ScalarGrid) -> ScalarGrid {
    let (lo, hi) = (g.min(), g.max());
    let span = hi - lo;
    let values = if span > 0.0 {
        g.values.iter().map(|&v| (v - lo) / span).collect()
    } else {
        vec![0.0; g.len()]
    };
    g.with_values(values)
}

/// Partition of `n` source pixels into `m` blocks; the remainder goes to the
/// trailing blocks. Returns the `m + 1` block boundaries.
fn block_edges(n: usize, m: usize) -> Vec<usize> {
    let base = n / m;
    let rem = n % m;
    let mut edges = Vec::with_capacity(m + 1);
    let mut at = 0;
    edges.push(0);
    for k in 0..m {
        at += base + usize::from(k >= m - rem);
        edges.push(at);
    }
    edges
}

/// Block-mean downsampling. `width_mm` and `depth_scale` are preserved.
pub fn downsample(g: &ScalarGrid, target_rows: usize, target_cols: usize) -> Result<ScalarGrid> {
    if target_rows == 0 || target_cols == 0 {
        return Err(Error::Argument("downsample target must be positive".into()));
    }
    if target_rows > g.rows || target_cols > g.cols {
        return Err(Error::Argument(format!(
            "cannot downsample {}x{} to larger {target_rows}x{target_cols}",
            g.rows, g.cols
        )));
    }
    let row_edges = block_edges(g.rows, target_rows);
    let col_edges = block_edges(g.cols, target_cols);
    let mut out = Vec::with_capacity(target_rows * target_cols);
    for br in 0..target_rows {
        for bc in 0..target_cols {
            let mut sum = 0.0;
            for r in row_edges[br]..row_edges[br + 1] {
                let row = &g.values[r * g.cols..(r + 1) * g.cols];
                sum += row[col_edges[bc]..col_edges[bc + 1]].iter().sum::<f64>();
            }
            let count = (row_edges[br + 1] - row_edges[br]) * (col_edges[bc + 1] - col_edges[bc]);
            out.push(sum / count as f64);
        }
    }
    Ok(ScalarGrid::new(target_rows, target_cols, out)?
        .with_width_mm(g.width_mm)
        .with_depth_scale(g.depth_scale))
}

/// On-disk grid encodings.
///
/// Loading a PGM detects P2/P5 and the sample width from the header, so the
/// `maxval` of a `P2`/`P5` format only matters when saving.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    /// Comma-separated reals, one row per line, no header.
    Csv,
    /// ASCII graymap.
    P2 { maxval: u16 },
    /// Binary graymap; 16-bit big-endian samples when `maxval > 255`.
    P5 { maxval: u16 },
}

impl GridFormat {
    /// Guesses from the file extension: `.pgm` saves as 16-bit P5,
    /// everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => GridFormat::P5 { maxval: 65535 },
            _ => GridFormat::Csv,
        }
    }

    fn is_pgm(self) -> bool {
        !matches!(self, GridFormat::Csv)
    }
}

pub fn load_grid(path: impl AsRef<Path>, format: GridFormat) -> Result<ScalarGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if format.is_pgm() {
        parse_pgm(&bytes).map_err(|m| Error::format(path, m))
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "CSV is not UTF-8"))?;
        parse_csv(&text).map_err(|m| Error::format(path, m))
    }
}

/// Writes `g` in the given format. PGM output clamps values to `[0, 1]`
/// before quantizing to `round(v * maxval)`.
pub fn save_grid(g: &ScalarGrid, path: impl AsRef<Path>, format: GridFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        GridFormat::Csv => encode_csv(g).into_bytes(),
        GridFormat::P2 { maxval } | GridFormat::P5 { maxval } => {
            if maxval == 0 {
                return Err(Error::Argument("PGM maxval must be positive".into()));
            }
            encode_pgm(g, maxval, matches!(format, GridFormat::P5 { .. }))
        }
    };
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn parse_csv(text: &str) -> Result<ScalarGrid, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("line {}: bad value {cell:?}", lineno + 1))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!(
                    "line {}: ragged row ({} columns, expected {})",
                    lineno + 1,
                    row.len(),
                    first.len()
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("empty CSV".into());
    }
    ScalarGrid::from_rows(&rows).map_err(|e| e.to_string())
}

fn encode_csv(g: &ScalarGrid) -> String {
    let mut out = String::with_capacity(g.len() * 8);
    for row in g.values.chunks(g.cols) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Header tokens of a PGM file, skipping `#` comments. Returns the tokens
/// and the byte offset just past the single whitespace byte after the last.
fn pgm_header(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize), String> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
            i += 1;
        }
        if start == i {
            return Err("truncated PGM header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    Ok((tokens, i + 1))
}

fn parse_pgm(bytes: &[u8]) -> Result<ScalarGrid, String> {
    let (header, data_start) = pgm_header(bytes, 4)?;
    let magic = header[0].as_str();
    if magic != "P2" && magic != "P5" {
        return Err(format!("unsupported PGM magic {magic:?}"));
    }
    let field = |i: usize, name: &str| {
        header[i]
            .parse::<usize>()
            .map_err(|_| format!("bad PGM {name} {:?}", header[i]))
    };
    let cols = field(1, "width")?;
    let rows = field(2, "height")?;
    let maxval = field(3, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(format!("PGM maxval {maxval} out of range"));
    }
    let n = rows * cols;
    let scale = maxval as f64;
    let values: Vec<f64> = if magic == "P2" {
        let text = std::str::from_utf8(&bytes[data_start.min(bytes.len())..])
            .map_err(|_| "P2 raster is not ASCII".to_string())?;
        let samples = text
            .split_ascii_whitespace()
            .take(n)
            .map(|s| s.parse::<u32>().map_err(|_| format!("bad P2 sample {s:?}")))
            .collect::<Result<Vec<_>, _>>()?;
        if samples.len() != n {
            return Err(format!("P2 raster has {} samples, expected {n}", samples.len()));
        }
        samples.into_iter().map(|s| s as f64 / scale).collect()
    } else {
        let width = if maxval > 255 { 2 } else { 1 };
        let raster = bytes.get(data_start..).unwrap_or(&[]);
        if raster.len() < n * width {
            return Err(format!("P5 raster has {} bytes, expected {}", raster.len(), n * width));
        }
        raster[..n * width]
            .chunks_exact(width)
            .map(|c| {
                let s = if width == 2 { u16::from_be_bytes([c[0], c[1]]) } else { c[0] as u16 };
                s as f64 / scale
            })
            .collect()
    };
    ScalarGrid::new(rows, cols, values).map_err(|e| e.to_string())
}

fn quantize(v: f64, maxval: u16) -> u16 {
    (v.clamp(0.0, 1.0) * maxval as f64).round() as u16
}

fn encode_pgm(g: &ScalarGrid, maxval: u16, binary: bool) -> Vec<u8> {
    let magic = if binary { "P5" } else { "P2" };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", g.cols, g.rows).into_bytes();
    if binary {
        for &v in &g.values {
            let s = quantize(v, maxval);
            if maxval > 255 {
                out.extend_from_slice(&s.to_be_bytes());
            } else {
                out.push(s as u8);
            }
        }
    } else {
        for row in g.values.chunks(g.cols) {
            let line: Vec<String> = row.iter().map(|&v| quantize(v, maxval).to_string()).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("topotex-grid-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn csv_parses_verbatim() {
        let g = parse_csv("0,1\n1,0\n").unwrap();
        assert_eq!(g.values(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!((g.rows(), g.cols()), (2, 2));
    }

    #[test]
    fn ragged_csv_is_a_format_error() {
        let path = tmp("ragged.csv");
        fs::write(&path, "0,1\n1\n").unwrap();
        assert!(matches!(load_grid(&path, GridFormat::Csv), Err(Error::Format { .. })));
    }

    #[test]
    fn p2_divides_by_maxval() {
        let g = parse_pgm(b"P2\n# comment\n2 1\n255\n255 0\n").unwrap();
        assert_eq!(g.values(), &[1.0, 0.0]);
    }

    #[test]
    fn unsupported_magic_rejected() {
        assert!(parse_pgm(b"P3\n1 1\n255\n0 0 0\n").unwrap_err().contains("magic"));
        let path = tmp("bad.pgm");
        fs::write(&path, b"P6\n1 1\n255\n\0\0\0").unwrap();
        assert!(matches!(
            load_grid(&path, GridFormat::P5 { maxval: 255 }),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn p2_save_writes_maxval_for_one() {
        let g = ScalarGrid::new(1, 2, vec![1.0, 0.0]).unwrap();
        let path = tmp("one.pgm");
        save_grid(&g, &path, GridFormat::P2 { maxval: 255 }).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "P2\n2 1\n255\n255 0\n");
    }

    #[test]
    fn p5_round_trip_is_bit_exact_on_quantized_values() {
        let values: Vec<f64> = (0..12).map(|i| (i * 5000) as f64 / 65535.0).collect();
        let g = ScalarGrid::new(3, 4, values).unwrap();
        let path = tmp("exact.pgm");
        save_grid(&g, &path, GridFormat::P5 { maxval: 65535 }).unwrap();
        let back = load_grid(&path, GridFormat::P5 { maxval: 65535 }).unwrap();
        assert_eq!(back.values(), g.values());

        // 8-bit binary path too.
        let g8 = ScalarGrid::new(1, 3, vec![0.0, 128.0 / 255.0, 1.0]).unwrap();
        save_grid(&g8, &path, GridFormat::P5 { maxval: 255 }).unwrap();
        assert_eq!(load_grid(&path, GridFormat::P5 { maxval: 255 }).unwrap().values(), g8.values());
    }

    #[test]
    fn p5_16bit_resolves_one_step() {
        let step = 1.0 / 65535.0;
        let g = ScalarGrid::new(1, 3, vec![0.0, step, 2.0 * step]).unwrap();
        let path = tmp("step.pgm");
        save_grid(&g, &path, GridFormat::P5 { maxval: 65535 }).unwrap();
        let back = load_grid(&path, GridFormat::P5 { maxval: 65535 }).unwrap();
        assert_eq!(back.values(), g.values());
    }

    #[test]
    fn normalize_examples() {
        let g = ScalarGrid::from_rows(&[vec![2.0, 4.0], vec![4.0, 6.0]]).unwrap();
        assert_eq!(normalize(&g).values(), &[0.0, 0.5, 0.5, 1.0]);
        let c = ScalarGrid::from_rows(&[vec![5.0, 5.0]]).unwrap();
        assert_eq!(normalize(&c).values(), &[0.0, 0.0]);
        let unit = ScalarGrid::from_rows(&[vec![0.0, 0.25], vec![1.0, 0.5]]).unwrap();
        assert_eq!(normalize(&unit), unit);
    }

    #[test]
    fn downsample_examples() {
        let c = ScalarGrid::new(4, 4, vec![3.5; 16]).unwrap().with_width_mm(2.0);
        let d = downsample(&c, 2, 2).unwrap();
        assert_eq!(d.values(), &[3.5; 4]);
        assert_eq!(d.width_mm, 2.0);

        let x = ScalarGrid::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(downsample(&x, 1, 1).unwrap().values(), &[0.5]);

        assert!(matches!(downsample(&x, 3, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn uneven_blocks_put_remainder_last() {
        assert_eq!(block_edges(7, 3), vec![0, 2, 4, 7]);
        assert_eq!(block_edges(8, 3), vec![0, 2, 5, 8]);
        assert_eq!(block_edges(6000, 300)[1], 20);
    }

    #[test]
    fn downsample_6000_to_300_uses_20px_blocks() {
        // Only check a strip; the block layout is independent of the row count.
        let g = ScalarGrid::from_fn(20, 6000, |r, c| (r * 6000 + c) as f64).unwrap();
        let d = downsample(&g, 1, 300).unwrap();
        for (b, &v) in d.values().iter().enumerate() {
            let mut sum = 0.0;
            for r in 0..20 {
                for c in 20 * b..20 * (b + 1) {
                    sum += (r * 6000 + c) as f64;
                }
            }
            assert_eq!(v, sum / 400.0);
        }
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in proptest::collection::vec(-1e3f64..1e3, 12)) {
            let g = ScalarGrid::new(3, 4, v).unwrap();
            let once = normalize(&g);
            let twice = normalize(&once);
            for (a, b) in once.values().iter().zip(twice.values()) {
                prop_assert!((a - b).abs() <= 1e-15);
            }
        }

        #[test]
        fn aligned_downsample_composes(v in proptest::collection::vec(0f64..1.0, 144)) {
            let g = ScalarGrid::new(12, 12, v).unwrap();
            let two_step = downsample(&downsample(&g, 6, 6).unwrap(), 3, 3).unwrap();
            let one_step = downsample(&g, 3, 3).unwrap();
            for (a, b) in two_step.values().iter().zip(one_step.values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn csv_round_trip_exact(v in proptest::collection::vec(-1e6f64..1e6, 6)) {
            let g = ScalarGrid::new(2, 3, v).unwrap();
            let back = parse_csv(&encode_csv(&g)).unwrap();
            prop_assert_eq!(back.values(), g.values());
        }

        #[test]
        fn pgm_round_trip_within_quantization(v in proptest::collection::vec(0f64..=1.0, 6)) {
            let g = ScalarGrid::new(2, 3, v).unwrap();
            for (maxval, binary) in [(255u16, false), (255, true), (65535, true)] {
                let back = parse_pgm(&encode_pgm(&g, maxval, binary)).unwrap();
                for (a, b) in g.values().iter().zip(back.values()) {
                    prop_assert!((a - b).abs() <= 0.5 / maxval as f64 + 1e-15);
                }
            }
        }
    }
}
