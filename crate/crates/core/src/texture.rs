//! Grey-level co-occurrence texture.
//!
//! A band is quantized once over its full extent, then a `q x q` window is
//! swept across it. Each window's co-occurrence matrix is updated
//! incrementally as the window moves one column to the right: pairs that
//! touch the departing column are removed and pairs touching the arriving
//! column are added.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Raster, DEFAULT_NODATA};

/// Neighbor direction. Offsets are `(row, col)` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    D0,
    D45,
    D90,
    D135,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::D0, Direction::D45, Direction::D90, Direction::D135];

    pub fn offset(self) -> (isize, isize) {
        match self {
            Direction::D0 => (0, 1),
            Direction::D45 => (-1, 1),
            Direction::D90 => (-1, 0),
            Direction::D135 => (-1, -1),
        }
    }

    /// Parses `all`, `0`, `45`, `90`, `135`, or a comma-separated list.
    pub fn parse_list(s: &str) -> Result<Vec<Direction>> {
        let mut out = Vec::new();
        for tok in s.split(',').map(str::trim) {
            match tok.to_ascii_lowercase().as_str() {
                "all" => out.extend(Direction::ALL),
                "0" => out.push(Direction::D0),
                "45" => out.push(Direction::D45),
                "90" => out.push(Direction::D90),
                "135" => out.push(Direction::D135),
                other => {
                    return Err(Error::InvalidArgument(format!("unknown direction `{other}`")))
                }
            }
        }
        out.sort_by_key(|d| d.offset());
        out.dedup();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlcmConfig {
    pub levels: usize,
    pub window: usize,
    pub directions: Vec<Direction>,
    pub symmetric: bool,
}

impl Default for GlcmConfig {
    fn default() -> Self {
        GlcmConfig {
            levels: 32,
            window: 9,
            directions: Direction::ALL.to_vec(),
            symmetric: true,
        }
    }
}

impl GlcmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 || self.levels > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "grey levels must be in [2, 65535], got {}",
                self.levels
            )));
        }
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if self.directions.is_empty() {
            return Err(Error::InvalidArgument("at least one direction is required".into()));
        }
        Ok(())
    }
}

/// Quantized grid; `None` marks pixels excluded from co-occurrence counting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelGrid {
    pub rows: usize,
    pub cols: usize,
    pub levels: Vec<Option<u16>>,
}

impl LevelGrid {
    pub fn new(rows: usize, cols: usize, levels: Vec<Option<u16>>) -> Result<Self> {
        if levels.len() != rows * cols {
            return Err(Error::LengthMismatch(format!(
                "{rows}x{cols} grid needs {} cells, got {}",
                rows * cols,
                levels.len()
            )));
        }
        Ok(LevelGrid { rows, cols, levels })
    }

    pub fn get(&self, r: usize, c: usize) -> Option<u16> {
        self.levels[r * self.cols + c]
    }
}

/// Linear min-max quantization into `[0, levels)`; the maximum maps to
/// `levels - 1` and a constant band maps to level 0.
pub fn quantize(band: &Raster, levels: usize) -> Result<LevelGrid> {
    if band.bands() != 1 {
        return Err(Error::InvalidArgument("quantize expects a single band".into()));
    }
    if levels < 2 || levels > u16::MAX as usize {
        return Err(Error::InvalidArgument(format!("grey levels must be in [2, 65535], got {levels}")));
    }
    let values = band.band(0);
    let (lo, hi) = values
        .iter()
        .filter(|v| band.is_valid_value(**v))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        });
    if lo > hi {
        return Err(Error::Degenerate("band has no finite values".into()));
    }
    let span = hi - lo;
    let top = (levels - 1) as f64;
    let out = values
        .iter()
        .map(|&v| {
            if !band.is_valid_value(v) {
                None
            } else if span == 0.0 {
                Some(0)
            } else {
                let l = ((v as f64 - lo) * levels as f64 / span).floor();
                Some(l.clamp(0.0, top) as u16)
            }
        })
        .collect();
    LevelGrid::new(band.rows(), band.cols(), out)
}

/// Co-occurrence counts `P(i, j)` over `levels x levels` grey levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlcmMatrix {
    levels: usize,
    counts: Vec<u64>,
    total: u64,
}

impl GlcmMatrix {
    pub fn zeros(levels: usize) -> Self {
        GlcmMatrix {
            levels,
            counts: vec![0; levels * levels],
            total: 0,
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.levels + j]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `R`, the sum of all counts.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn probability(&self, i: usize, j: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(i, j) as f64 / self.total as f64
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.levels).all(|i| (0..i).all(|j| self.count(i, j) == self.count(j, i)))
    }

    #[inline]
    fn add(&mut self, a: u16, b: u16, symmetric: bool) {
        let (a, b) = (a as usize, b as usize);
        self.counts[a * self.levels + b] += 1;
        self.total += 1;
        if symmetric {
            self.counts[b * self.levels + a] += 1;
            self.total += 1;
        }
    }

    #[inline]
    fn remove(&mut self, a: u16, b: u16, symmetric: bool) {
        let (a, b) = (a as usize, b as usize);
        self.counts[a * self.levels + b] -= 1;
        self.total -= 1;
        if symmetric {
            self.counts[b * self.levels + a] -= 1;
            self.total -= 1;
        }
    }
}

/// Rectangular window `[top, top+height) x [left, left+width)`.
#[derive(Debug, Clone, Copy)]
struct Window {
    top: usize,
    left: usize,
    height: usize,
    width: usize,
}

impl Window {
    fn contains(&self, r: isize, c: isize) -> bool {
        r >= self.top as isize
            && c >= self.left as isize
            && r < (self.top + self.height) as isize
            && c < (self.left + self.width) as isize
    }
}

fn pair_levels(grid: &LevelGrid, r: usize, c: usize, dr: isize, dc: isize) -> Option<(u16, u16)> {
    let a = grid.get(r, c)?;
    let b = grid.get((r as isize + dr) as usize, (c as isize + dc) as usize)?;
    Some((a, b))
}

fn fill_window(grid: &LevelGrid, w: Window, cfg: &GlcmConfig, g: &mut GlcmMatrix) {
    for d in &cfg.directions {
        let (dr, dc) = d.offset();
        for r in w.top..w.top + w.height {
            for c in w.left..w.left + w.width {
                if !w.contains(r as isize + dr, c as isize + dc) {
                    continue;
                }
                if let Some((a, b)) = pair_levels(grid, r, c, dr, dc) {
                    g.add(a, b, cfg.symmetric);
                }
            }
        }
    }
}

/// Visits each pair `(p, p + d)` inside `w` with at least one endpoint in
/// column `col`, exactly once.
fn for_pairs_touching_column(
    grid: &LevelGrid,
    w: Window,
    col: usize,
    cfg: &GlcmConfig,
    mut f: impl FnMut(u16, u16),
) {
    for d in &cfg.directions {
        let (dr, dc) = d.offset();
        for r in w.top..w.top + w.height {
            if w.contains(r as isize + dr, col as isize + dc) {
                if let Some((a, b)) = pair_levels(grid, r, col, dr, dc) {
                    f(a, b);
                }
            }
            // `r, col` as the second endpoint; skip pairs already seen above.
            let (pr, pc) = (r as isize - dr, col as isize - dc);
            if pc != col as isize && w.contains(pr, pc) {
                if let Some((a, b)) = pair_levels(grid, pr as usize, pc as usize, dr, dc) {
                    f(a, b);
                }
            }
        }
    }
}

/// Co-occurrence matrix of the whole grid treated as one window.
pub fn compute_glcm(grid: &LevelGrid, cfg: &GlcmConfig) -> Result<GlcmMatrix> {
    if grid.rows == 0 || grid.cols == 0 {
        return Err(Error::InvalidArgument("empty window".into()));
    }
    let levels = cfg.levels;
    if let Some(l) = grid.levels.iter().flatten().find(|&&l| l as usize >= levels) {
        return Err(Error::InvalidArgument(format!("level {l} exceeds {levels} grey levels")));
    }
    let mut g = GlcmMatrix::zeros(levels);
    fill_window(
        grid,
        Window {
            top: 0,
            left: 0,
            height: grid.rows,
            width: grid.cols,
        },
        cfg,
        &mut g,
    );
    Ok(g)
}

/// Inverse difference moment: `sum p(i,j) / (1 + (i-j)^2)`.
pub fn homogeneity(g: &GlcmMatrix) -> Result<f64> {
    if g.total == 0 {
        return Err(Error::Degenerate("co-occurrence matrix is empty".into()));
    }
    let n = g.levels;
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = g.counts[i * n + j];
            if c != 0 {
                let d = i as f64 - j as f64;
                sum += c as f64 / (1.0 + d * d);
            }
        }
    }
    Ok(sum / g.total as f64)
}

/// Sweeps every full window centered on row `center_row`, calling `f` with
/// the center column and the window's matrix.
fn sweep_row(grid: &LevelGrid, cfg: &GlcmConfig, center_row: usize, mut f: impl FnMut(usize, &GlcmMatrix)) {
    let h = cfg.window / 2;
    let q = cfg.window;
    let mut g = GlcmMatrix::zeros(cfg.levels);
    let mut w = Window {
        top: center_row - h,
        left: 0,
        height: q,
        width: q,
    };
    fill_window(grid, w, cfg, &mut g);
    f(h, &g);
    for center_col in h + 1..grid.cols - h {
        let sym = cfg.symmetric;
        for_pairs_touching_column(grid, w, w.left, cfg, |a, b| g.remove(a, b, sym));
        w.left += 1;
        for_pairs_touching_column(grid, w, w.left + q - 1, cfg, |a, b| g.add(a, b, sym));
        f(center_col, &g);
    }
}

fn check_grid(grid: &LevelGrid, cfg: &GlcmConfig) -> Result<()> {
    cfg.validate()?;
    if grid.rows < cfg.window || grid.cols < cfg.window {
        return Err(Error::InvalidArgument(format!(
            "{}x{} image is smaller than the {q}x{q} window",
            grid.rows,
            grid.cols,
            q = cfg.window
        )));
    }
    if let Some(l) = grid.levels.iter().flatten().find(|&&l| l as usize >= cfg.levels) {
        return Err(Error::InvalidArgument(format!("level {l} exceeds {} grey levels", cfg.levels)));
    }
    Ok(())
}

/// Visits the matrix of every full window in row-major order of centers.
pub fn for_each_window(
    grid: &LevelGrid,
    cfg: &GlcmConfig,
    mut f: impl FnMut(usize, usize, &GlcmMatrix),
) -> Result<()> {
    check_grid(grid, cfg)?;
    let h = cfg.window / 2;
    for r in h..grid.rows - h {
        sweep_row(grid, cfg, r, |c, g| f(r, c, g));
    }
    Ok(())
}

/// Homogeneity at every pixel. Border pixels and windows without any
/// valid pair are `None`.
pub fn homogeneity_field(grid: &LevelGrid, cfg: &GlcmConfig) -> Result<Vec<Option<f64>>> {
    check_grid(grid, cfg)?;
    let h = cfg.window / 2;
    let cols = grid.cols;
    let mut out = vec![None; grid.rows * cols];
    out.par_chunks_mut(cols)
        .enumerate()
        .filter(|(r, _)| *r >= h && *r < grid.rows - h)
        .for_each(|(r, row)| {
            sweep_row(grid, cfg, r, |c, g| row[c] = homogeneity(g).ok());
        });
    Ok(out)
}

/// Homogeneity texture band. Quantization runs once over the whole band;
/// the border of width `window / 2` is nodata.
pub fn texture_band(band: &Raster, cfg: &GlcmConfig) -> Result<Raster> {
    if band.bands() != 1 {
        return Err(Error::InvalidArgument("texture_band expects a single band".into()));
    }
    cfg.validate()?;
    if band.rows() < cfg.window || band.cols() < cfg.window {
        return Err(Error::InvalidArgument(format!(
            "{}x{} image is smaller than the {q}x{q} window",
            band.rows(),
            band.cols(),
            q = cfg.window
        )));
    }
    let grid = quantize(band, cfg.levels)?;
    let field = homogeneity_field(&grid, cfg)?;
    let nodata = band.nodata().unwrap_or(DEFAULT_NODATA);
    let data = field.iter().map(|v| v.map_or(nodata, |h| h as f32)).collect();
    Raster::single(
        band.rows(),
        band.cols(),
        format!("{}_homogeneity", band.band_names()[0]),
        data,
        Some(nodata),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, v: &[u16]) -> LevelGrid {
        LevelGrid::new(rows, cols, v.iter().map(|&l| Some(l)).collect()).unwrap()
    }

    fn cfg(levels: usize, dirs: Vec<Direction>, symmetric: bool) -> GlcmConfig {
        GlcmConfig {
            levels,
            window: 3,
            directions: dirs,
            symmetric,
        }
    }

    #[test]
    fn quantize_examples() {
        let b = Raster::single(1, 4, "b", vec![0.0, 1.0, 2.0, 3.0], None).unwrap();
        let g = quantize(&b, 4).unwrap();
        assert_eq!(g.levels, vec![Some(0), Some(1), Some(2), Some(3)]);
        let c = Raster::single(1, 3, "b", vec![5.0; 3], None).unwrap();
        assert_eq!(quantize(&c, 8).unwrap().levels, vec![Some(0); 3]);
        let two = Raster::single(1, 2, "b", vec![0.0, 10.0], None).unwrap();
        assert_eq!(quantize(&two, 2).unwrap().levels, vec![Some(0), Some(1)]);
        let nan = Raster::single(1, 2, "b", vec![f32::NAN; 2], None).unwrap();
        assert_eq!(quantize(&nan, 2).unwrap_err().category(), "degenerate");
    }

    #[test]
    fn glcm_examples() {
        let constant = grid(3, 3, &[0; 9]);
        let g = compute_glcm(&constant, &GlcmConfig { levels: 4, ..cfg(4, Direction::ALL.to_vec(), true) }).unwrap();
        assert_eq!(g.probability(0, 0), 1.0);

        let w = grid(2, 2, &[0, 1, 0, 1]);
        let g = compute_glcm(&w, &cfg(2, vec![Direction::D0], true)).unwrap();
        assert_eq!(g.probability(0, 1), 0.5);
        assert_eq!(g.probability(1, 0), 0.5);
        assert!(g.is_symmetric());
        assert_eq!(homogeneity(&g).unwrap(), 0.5);

        let g = compute_glcm(&w, &cfg(2, vec![Direction::D0], false)).unwrap();
        assert_eq!(g.probability(0, 1), 1.0);
    }

    #[test]
    fn homogeneity_examples() {
        let mut g = GlcmMatrix::zeros(2);
        assert_eq!(homogeneity(&g).unwrap_err().category(), "degenerate");
        g.add(0, 0, false);
        assert_eq!(homogeneity(&g).unwrap(), 1.0);
        let mut u = GlcmMatrix::zeros(2);
        for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            u.add(a, b, false);
        }
        assert_eq!(homogeneity(&u).unwrap(), 0.75);
    }

    #[test]
    fn texture_geometry() {
        let b = Raster::single(9, 9, "vh", vec![1.0; 81], None).unwrap();
        let t = texture_band(&b, &GlcmConfig::default()).unwrap();
        let valid: Vec<f32> = t.band(0).iter().copied().filter(|&v| v != DEFAULT_NODATA).collect();
        assert_eq!(valid, vec![1.0]);
        assert_eq!(t.get(0, 4, 4), 1.0);
        assert_eq!(t.band_names(), &["vh_homogeneity"]);

        let small = Raster::single(5, 5, "vh", vec![1.0; 25], None).unwrap();
        assert_eq!(texture_band(&small, &GlcmConfig::default()).unwrap_err().category(), "invalid_argument");
    }

    #[test]
    fn nodata_window_is_nodata() {
        let mut v = vec![Some(0u16); 25];
        for c in v.iter_mut() {
            *c = None;
        }
        v[12] = Some(1);
        let g = LevelGrid::new(5, 5, v).unwrap();
        let field = homogeneity_field(&g, &cfg(2, Direction::ALL.to_vec(), true)).unwrap();
        assert!(field.iter().all(Option::is_none));
    }

    #[test]
    fn config_validation() {
        assert!(GlcmConfig { window: 4, ..Default::default() }.validate().is_err());
        assert!(GlcmConfig { levels: 1, ..Default::default() }.validate().is_err());
        assert!(GlcmConfig { directions: vec![], ..Default::default() }.validate().is_err());
        assert_eq!(Direction::parse_list("all").unwrap().len(), 4);
        assert_eq!(Direction::parse_list("45").unwrap(), vec![Direction::D45]);
        assert!(Direction::parse_list("30").is_err());
    }
}
