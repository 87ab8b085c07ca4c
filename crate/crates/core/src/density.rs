//! Ground-truth density maps.
//!
//! Every head contributes an isotropic Gaussian integrated over grid cells,
//! truncated at three standard deviations and renormalized to unit mass, so
//! the integral of a map over the whole grid is exactly the head count.

use serde::{Deserialize, Serialize};

use crate::data::Scene;
use crate::{Error, Result};

/// Gaussian support is cut at this many standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

/// Row-major grid of non-negative people-per-cell values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMap {
    width_cells: usize,
    height_cells: usize,
    cell_size: u32,
    values: Vec<f64>,
}

/// Cell-aligned rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> usize {
        self.x1.saturating_sub(self.x0) * self.y1.saturating_sub(self.y0)
    }
}

/// Number of cells needed to cover `extent` pixels.
pub fn cells_for(extent: u32, cell_size: u32) -> usize {
    extent.div_ceil(cell_size) as usize
}

impl DensityMap {
    pub fn zeros(width_cells: usize, height_cells: usize, cell_size: u32) -> Self {
        Self {
            width_cells,
            height_cells,
            cell_size,
            values: vec![0.0; width_cells * height_cells],
        }
    }

    /// Wraps raw values; fails on a length mismatch or a negative / non-finite cell.
    pub fn from_values(
        width_cells: usize,
        height_cells: usize,
        cell_size: u32,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != width_cells * height_cells {
            return Err(Error::shape(format!(
                "{} values for a {width_cells}x{height_cells} grid",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("density value {v} is not a finite non-negative number")));
        }
        Ok(Self {
            width_cells,
            height_cells,
            cell_size,
            values,
        })
    }

    pub fn width_cells(&self) -> usize {
        self.width_cells
    }

    pub fn height_cells(&self) -> usize {
        self.height_cells
    }

    pub fn cell_size(&self) -> u32 {
        self.cell_size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width_cells + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width_cells, self.height_cells)
    }

    pub fn full_region(&self) -> Region {
        Region::new(0, 0, self.width_cells, self.height_cells)
    }

    /// Total mass, i.e. the (estimated) count of the whole scene.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sum of cell values inside `region`.
    pub fn integrate(&self, region: Region) -> Result<f64> {
        if region.x0 > region.x1
            || region.y0 > region.y1
            || region.x1 > self.width_cells
            || region.y1 > self.height_cells
        {
            return Err(Error::invalid(format!(
                "region {region:?} outside {}x{} grid",
                self.width_cells, self.height_cells
            )));
        }
        Ok(self.region_sum(region))
    }

    pub(crate) fn region_sum(&self, r: Region) -> f64 {
        (r.y0..r.y1)
            .map(|y| {
                let row = &self.values[y * self.width_cells..(y + 1) * self.width_cells];
                row[r.x0..r.x1].iter().sum::<f64>()
            })
            .sum()
    }

    /// The `2^level x 2^level` cell-aligned regions covering the grid, row by
    /// row. Each axis is halved recursively with the odd cell going to the
    /// later half, so level `l + 1` always refines level `l`.
    pub fn grid_regions(&self, level: u32) -> Vec<Region> {
        let parts = 1usize << level;
        let xs = split_axis(self.width_cells, parts);
        let ys = split_axis(self.height_cells, parts);
        ys.iter()
            .flat_map(|&(y0, y1)| xs.iter().map(move |&(x0, x1)| Region::new(x0, y0, x1, y1)))
            .collect()
    }

    /// Integrals over [`grid_regions`](Self::grid_regions) in the same order.
    pub fn level_counts(&self, level: u32) -> Vec<f64> {
        self.grid_regions(level)
            .into_iter()
            .map(|r| self.region_sum(r))
            .collect()
    }

    /// Keeps the top-left `width_cells x height_cells` block.
    pub fn crop(&self, width_cells: usize, height_cells: usize) -> Result<Self> {
        if width_cells > self.width_cells || height_cells > self.height_cells {
            return Err(Error::shape("crop larger than map"));
        }
        let mut values = Vec::with_capacity(width_cells * height_cells);
        for y in 0..height_cells {
            let row = y * self.width_cells;
            values.extend_from_slice(&self.values[row..row + width_cells]);
        }
        Ok(Self {
            width_cells,
            height_cells,
            cell_size: self.cell_size,
            values,
        })
    }

    /// Row-major CSV dump, one grid row per line. Debug output only.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.width_cells.max(1)) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

// Recursive halving: each level refines the previous one, and an odd cell
// goes to the second half of its split.
fn split_axis(n: usize, parts: usize) -> Vec<(usize, usize)> {
    let mut spans = vec![(0, n)];
    while spans.len() < parts {
        spans = spans
            .into_iter()
            .flat_map(|(a, b)| {
                let mid = a + (b - a) / 2;
                [(a, mid), (mid, b)]
            })
            .collect();
    }
    spans
}

fn normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// Per-cell Gaussian mass along one axis, truncated and renormalized to sum 1.
/// Returns the first covered cell index and the weights.
fn axis_weights(pos: f64, sigma: f64, cell_size: f64, n_cells: usize) -> (usize, Vec<f64>) {
    let reach = TRUNCATION_SIGMAS * sigma;
    let last = n_cells as isize - 1;
    let lo = (((pos - reach) / cell_size).floor() as isize).clamp(0, last) as usize;
    let hi = (((pos + reach) / cell_size).floor() as isize).clamp(0, last) as usize;
    let mut w: Vec<f64> = (lo..=hi)
        .map(|i| {
            let a = i as f64 * cell_size - pos;
            let b = (i + 1) as f64 * cell_size - pos;
            normal_cdf(b / sigma) - normal_cdf(a / sigma)
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    (lo, w)
}

/// Rasterizes `scene` onto a grid of `cell_size`-pixel cells covering the
/// (padded) scene extent.
pub fn rasterize(scene: &Scene, cell_size: u32, sigma: f64) -> Result<DensityMap> {
    if cell_size == 0 {
        return Err(Error::invalid("cell_size must be positive"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let wc = cells_for(scene.width, cell_size);
    let hc = cells_for(scene.height, cell_size);
    let mut map = DensityMap::zeros(wc, hc, cell_size);
    let cs = cell_size as f64;
    for p in &scene.points {
        let (x0, wx) = axis_weights(p.x, sigma, cs, wc);
        let (y0, wy) = axis_weights(p.y, sigma, cs, hc);
        for (dy, &vy) in wy.iter().enumerate() {
            let row = (y0 + dy) * wc + x0;
            for (dx, &vx) in wx.iter().enumerate() {
                map.values[row + dx] += vy * vx;
            }
        }
    }
    Ok(map)
}
