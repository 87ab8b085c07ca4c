//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Points cross the boundary as flat `[x0, y0, x1, y1, ...]` arrays. Each
//! exported function has a plain Rust twin so the logic is testable natively.

use alac::data::{CountBand, HeadPoint, Scene, SynthSpec};
use alac::density::{rasterize, DensityMap};
use alac::metrics::game;
use alac::partition::{even_breaks, jenks_breaks};
use alac::selection::gdsim;
use wasm_bindgen::prelude::*;

#[wasm_bindgen]
pub struct Raster {
    width_cells: usize,
    height_cells: usize,
    values: Vec<f64>,
}

#[wasm_bindgen]
impl Raster {
    #[wasm_bindgen(getter)]
    pub fn width_cells(&self) -> usize {
        self.width_cells
    }

    #[wasm_bindgen(getter)]
    pub fn height_cells(&self) -> usize {
        self.height_cells
    }

    /// Row-major cell values.
    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// GDSIM and GAME between two scenes, one entry per level `0..=max_level`.
#[wasm_bindgen]
pub struct Comparison {
    gdsim: Vec<f64>,
    game: Vec<f64>,
}

#[wasm_bindgen]
impl Comparison {
    pub fn gdsim(&self) -> Vec<f64> {
        self.gdsim.clone()
    }

    pub fn game(&self) -> Vec<f64> {
        self.game.clone()
    }
}

fn scene_from(points: &[f64], width: u32, height: u32) -> alac::Result<Scene> {
    if !points.len().is_multiple_of(2) {
        return Err(alac::Error::InvalidArgument("point array has odd length".into()));
    }
    let heads = points.chunks(2).map(|p| HeadPoint::new(p[0], p[1])).collect();
    Scene::new("demo", width, height, heads)
}

fn map_of(points: &[f64], width: u32, height: u32, cell_size: u32, sigma: f64) -> alac::Result<DensityMap> {
    rasterize(&scene_from(points, width, height)?, cell_size, sigma)
}

pub fn random_points_impl(seed: u64, width: u32, height: u32, count: usize, clustering: f64) -> alac::Result<Vec<f64>> {
    let spec = SynthSpec {
        n_scenes: 1,
        width,
        height,
        bands: vec![CountBand::new(1.0, count, count)],
        clustering,
        seed,
    };
    let scenes = alac::data::synth_dataset(&spec)?;
    Ok(scenes[0].points.iter().flat_map(|p| [p.x, p.y]).collect())
}

pub fn density_impl(points: &[f64], width: u32, height: u32, cell_size: u32, sigma: f64) -> alac::Result<Raster> {
    let map = map_of(points, width, height, cell_size, sigma)?;
    Ok(Raster {
        width_cells: map.width_cells(),
        height_cells: map.height_cells(),
        values: map.values().to_vec(),
    })
}

pub fn breaks_impl(values: &[f64], k: usize, method: &str) -> alac::Result<Vec<f64>> {
    let set = match method {
        "jenks" => jenks_breaks(values, k)?,
        "even" => even_breaks(values, k)?,
        other => return Err(alac::Error::InvalidArgument(format!("unknown method {other}"))),
    };
    Ok(set.breaks)
}

#[allow(clippy::too_many_arguments)]
pub fn compare_impl(
    a: &[f64],
    b: &[f64],
    width: u32,
    height: u32,
    cell_size: u32,
    sigma: f64,
    max_level: u32,
) -> alac::Result<Comparison> {
    let ma = map_of(a, width, height, cell_size, sigma)?;
    let mb = map_of(b, width, height, cell_size, sigma)?;
    let mut out = Comparison {
        gdsim: Vec::new(),
        game: Vec::new(),
    };
    for level in 0..=max_level {
        out.gdsim.push(gdsim(&ma, &[&mb], level)?);
        out.game.push(game(&ma, &mb, level)?);
    }
    Ok(out)
}

fn js(e: alac::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Clustered random head positions from the synthetic scene generator.
#[wasm_bindgen]
pub fn random_points(seed: u32, width: u32, height: u32, count: usize, clustering: f64) -> Result<Vec<f64>, JsError> {
    random_points_impl(seed as u64, width, height, count, clustering).map_err(js)
}

#[wasm_bindgen]
pub fn density(points: &[f64], width: u32, height: u32, cell_size: u32, sigma: f64) -> Result<Raster, JsError> {
    density_impl(points, width, height, cell_size, sigma).map_err(js)
}

/// Class breaks over `values`; `method` is `"jenks"` or `"even"`.
#[wasm_bindgen]
pub fn breaks(values: &[f64], k: usize, method: &str) -> Result<Vec<f64>, JsError> {
    breaks_impl(values, k, method).map_err(js)
}

#[wasm_bindgen]
pub fn compare(
    a: &[f64],
    b: &[f64],
    width: u32,
    height: u32,
    cell_size: u32,
    sigma: f64,
    max_level: u32,
) -> Result<Comparison, JsError> {
    compare_impl(a, b, width, height, cell_size, sigma, max_level).map_err(js)
}
