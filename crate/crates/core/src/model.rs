//! Desk-scale density regressor.
//!
//! Each grid cell is described by geometric features (square-rooted point
//! density in square windows of several radii plus normalized cell
//! coordinates). A
//! two-stage rectifier extractor maps them to a latent vector, and a linear
//! head maps the latent vector to a cell density clamped at zero. The latent
//! grid is what the distribution classifier and latent MixUp operate on.
//!
//! Gradients are written out by hand and checked against finite differences
//! in the tests.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Scene;
use crate::density::{cells_for, DensityMap};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "alac-regressor";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub cell_size: u32,
    /// Window radii in cells; radius `r` counts points in a `(2r+1)^2` block.
    pub radii: Vec<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            cell_size: 8,
            radii: vec![0, 1, 2],
        }
    }
}

impl FeatureConfig {
    /// Feature vector length: one per radius plus two coordinates.
    pub fn dim(&self) -> usize {
        self.radii.len() + 2
    }
}

/// Per-cell feature vectors, cell-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub width_cells: usize,
    pub height_cells: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl FeatureGrid {
    pub fn n_cells(&self) -> usize {
        self.width_cells * self.height_cells
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

/// Per radius `r`: `sqrt(points in the (2r+1)^2 window / (2r+1)^2)`, where
/// windows are clipped at the border but always divided by the full area.
/// Then the cell centre as a fraction of the grid width and height.
pub fn featurize(scene: &Scene, config: &FeatureConfig) -> Result<FeatureGrid> {
    if config.cell_size == 0 {
        return Err(Error::invalid("cell_size must be positive"));
    }
    let cs = config.cell_size as f64;
    let wc = cells_for(scene.width, config.cell_size);
    let hc = cells_for(scene.height, config.cell_size);

    let mut counts = vec![0.0; wc * hc];
    for p in &scene.points {
        let cx = ((p.x / cs) as usize).min(wc - 1);
        let cy = ((p.y / cs) as usize).min(hc - 1);
        counts[cy * wc + cx] += 1.0;
    }
    // summed-area table with a zero border
    let stride = wc + 1;
    let mut sat = vec![0.0f64; stride * (hc + 1)];
    for y in 0..hc {
        for x in 0..wc {
            sat[(y + 1) * stride + x + 1] =
                counts[y * wc + x] + sat[y * stride + x + 1] + sat[(y + 1) * stride + x]
                    - sat[y * stride + x];
        }
    }
    let window = |x: usize, y: usize, r: usize| {
        let (x0, y0) = (x.saturating_sub(r), y.saturating_sub(r));
        let (x1, y1) = ((x + r + 1).min(wc), (y + r + 1).min(hc));
        sat[y1 * stride + x1] - sat[y0 * stride + x1] - sat[y1 * stride + x0] + sat[y0 * stride + x0]
    };

    let dim = config.dim();
    let mut values = Vec::with_capacity(wc * hc * dim);
    for y in 0..hc {
        for x in 0..wc {
            values.extend(config.radii.iter().map(|&r| {
                let side = (2 * r + 1) as f64;
                (window(x, y, r) / (side * side)).sqrt()
            }));
            values.push((x as f64 + 0.5) / wc as f64);
            values.push((y as f64 + 0.5) / hc as f64);
        }
    }
    Ok(FeatureGrid {
        width_cells: wc,
        height_cells: hc,
        dim,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input: usize,
    pub hidden: usize,
    pub latent: usize,
}

/// All trainable parameters (also used for gradients and momentum buffers).
/// Weight matrices are row-major `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorParams {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: f64,
}

impl RegressorParams {
    pub fn zeros(shape: ModelShape) -> Self {
        let ModelShape {
            input,
            hidden,
            latent,
        } = shape;
        Self {
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; latent * hidden],
            b2: vec![0.0; latent],
            w3: vec![0.0; latent],
            b3: 0.0,
        }
    }

    /// Extractor parameters (`w1, b1, w2, b2`) followed by head parameters.
    pub fn groups(&self) -> [&[f64]; 6] {
        [
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.w3,
            std::slice::from_ref(&self.b3),
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            std::slice::from_mut(&mut self.b3),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    /// L2 norm over all parameters.
    pub fn norm(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn add_scaled(&mut self, other: &RegressorParams, scale: f64) {
        for (a, b) in self.groups_mut().into_iter().zip(other.groups()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorState {
    pub shape: ModelShape,
    pub params: RegressorParams,
    pub momentum: f64,
    /// Gradients with a larger L2 norm are rescaled to this norm before the
    /// momentum update. `None` disables clipping.
    #[serde(default)]
    pub max_grad_norm: Option<f64>,
    velocity: RegressorParams,
}

impl RegressorState {
    pub fn zeros(shape: ModelShape, momentum: f64) -> Self {
        Self {
            shape,
            params: RegressorParams::zeros(shape),
            momentum,
            max_grad_norm: None,
            velocity: RegressorParams::zeros(shape),
        }
    }

    /// He-normal weights for the rectifier stages, small positive head.
    pub fn init(shape: ModelShape, momentum: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = Self::zeros(shape, momentum);
        let mut fill = |w: &mut [f64], fan_in: usize| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            w.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        };
        fill(&mut state.params.w1, shape.input);
        fill(&mut state.params.w2, shape.hidden);
        fill(&mut state.params.w3, shape.latent);
        state.params.b1.iter_mut().for_each(|b| *b = 0.01);
        state.params.b2.iter_mut().for_each(|b| *b = 0.01);
        state.params.w3.iter_mut().for_each(|w| *w = w.abs() * 0.5);
        state
    }

    pub fn with_grad_clip(self, max_grad_norm: Option<f64>) -> Self {
        Self {
            max_grad_norm,
            ..self
        }
    }

    pub fn with_params(&self, params: RegressorParams) -> Self {
        Self {
            params,
            ..self.clone()
        }
    }

    pub fn velocity(&self) -> &RegressorParams {
        &self.velocity
    }

    /// SGD with momentum: `v <- mu v + lr g`, `theta <- theta - v`, after
    /// optional norm clipping of `g`.
    pub(crate) fn apply_gradient(&self, grad: &RegressorParams, lr: f64) -> Result<Self> {
        if !grad.is_finite() {
            return Err(Error::NonFinite("regressor gradient".into()));
        }
        let mut next = self.clone();
        let scale = match self.max_grad_norm {
            Some(max) if grad.norm() > max => lr * max / grad.norm(),
            _ => lr,
        };
        for (v, g) in next.velocity.groups_mut().into_iter().zip(grad.groups()) {
            v.iter_mut().zip(g).for_each(|(v, g)| *v = self.momentum * *v + scale * g);
        }
        next.params.add_scaled(&next.velocity, -1.0);
        if !next.params.is_finite() {
            return Err(Error::NonFinite("regressor parameters after update".into()));
        }
        Ok(next)
    }
}

/// Per-cell latent vectors (the extractor output), cell-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMap {
    pub width_cells: usize,
    pub height_cells: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl LatentMap {
    pub fn n_cells(&self) -> usize {
        self.width_cells * self.height_cells
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Top-left `w x h` block.
    pub fn crop(&self, w: usize, h: usize) -> Result<Self> {
        if w > self.width_cells || h > self.height_cells {
            return Err(Error::shape("latent crop larger than map"));
        }
        let mut values = Vec::with_capacity(w * h * self.dim);
        for y in 0..h {
            let start = y * self.width_cells * self.dim;
            values.extend_from_slice(&self.values[start..start + w * self.dim]);
        }
        Ok(Self {
            width_cells: w,
            height_cells: h,
            dim: self.dim,
            values,
        })
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    features: FeatureGrid,
    hidden_pre: Vec<f64>,
    latent_pre: Vec<f64>,
    out_pre: Vec<f64>,
    pub latent: LatentMap,
}

impl ForwardCache {
    /// Head output before the clamp.
    pub fn raw_output(&self) -> &[f64] {
        &self.out_pre
    }

    /// Every rectifier / clamp input, for kink-proximity checks.
    pub fn preactivations(&self) -> impl Iterator<Item = f64> + '_ {
        self.hidden_pre
            .iter()
            .chain(&self.latent_pre)
            .chain(&self.out_pre)
            .copied()
    }

    pub fn prediction(&self, cell_size: u32) -> DensityMap {
        let values = self.out_pre.iter().map(|v| v.max(0.0)).collect();
        DensityMap::from_values(
            self.features.width_cells,
            self.features.height_cells,
            cell_size,
            values,
        )
        .expect("clamped outputs are finite and non-negative")
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

pub fn forward_cached(state: &RegressorState, features: &FeatureGrid) -> Result<ForwardCache> {
    let ModelShape {
        input,
        hidden,
        latent,
    } = state.shape;
    if features.dim != input {
        return Err(Error::shape(format!(
            "feature dim {} but model expects {input}",
            features.dim
        )));
    }
    if !state.params.is_finite() {
        return Err(Error::NonFinite("regressor parameters".into()));
    }
    let p = &state.params;
    let n = features.n_cells();
    let mut hidden_pre = vec![0.0; n * hidden];
    let mut latent_pre = vec![0.0; n * latent];
    let mut latent_vals = vec![0.0; n * latent];
    let mut out_pre = vec![0.0; n];
    let mut h = vec![0.0; hidden];
    for c in 0..n {
        let f = features.cell(c);
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &p.w1[j * input..(j + 1) * input];
            let pre = p.b1[j] + row.iter().zip(f).map(|(w, x)| w * x).sum::<f64>();
            hidden_pre[c * hidden + j] = pre;
            *hj = relu(pre);
        }
        let mut out = p.b3;
        for k in 0..latent {
            let row = &p.w2[k * hidden..(k + 1) * hidden];
            let pre = p.b2[k] + row.iter().zip(&h).map(|(w, x)| w * x).sum::<f64>();
            latent_pre[c * latent + k] = pre;
            let z = relu(pre);
            latent_vals[c * latent + k] = z;
            out += p.w3[k] * z;
        }
        out_pre[c] = out;
    }
    Ok(ForwardCache {
        features: features.clone(),
        hidden_pre,
        latent_pre,
        out_pre,
        latent: LatentMap {
            width_cells: features.width_cells,
            height_cells: features.height_cells,
            dim: latent,
            values: latent_vals,
        },
    })
}

/// Latent grid and clamped density prediction.
pub fn forward(
    state: &RegressorState,
    features: &FeatureGrid,
    cell_size: u32,
) -> Result<(LatentMap, DensityMap)> {
    let cache = forward_cached(state, features)?;
    let pred = cache.prediction(cell_size);
    Ok((cache.latent, pred))
}

/// Accumulates parameter gradients for one scene given the loss gradient with
/// respect to the raw head output (`d_out`, per cell) and, optionally, an
/// extra gradient arriving directly at the latent cells (`d_latent`,
/// cell-major).
pub(crate) fn backward(
    state: &RegressorState,
    cache: &ForwardCache,
    d_out: Option<&[f64]>,
    d_latent: Option<&[f64]>,
    grad: &mut RegressorParams,
) {
    let ModelShape {
        input,
        hidden,
        latent,
    } = state.shape;
    let p = &state.params;
    let n = cache.features.n_cells();
    let mut dz = vec![0.0; latent];
    let mut dh = vec![0.0; hidden];
    for c in 0..n {
        let go = d_out.map_or(0.0, |d| d[c]);
        if go != 0.0 {
            grad.b3 += go;
            for k in 0..latent {
                grad.w3[k] += go * cache.latent.values[c * latent + k];
            }
        }
        let mut any = false;
        for k in 0..latent {
            let mut g = go * p.w3[k];
            if let Some(dl) = d_latent {
                g += dl[c * latent + k];
            }
            dz[k] = if cache.latent_pre[c * latent + k] > 0.0 { g } else { 0.0 };
            any |= dz[k] != 0.0;
        }
        if !any {
            continue;
        }
        dh.iter_mut().for_each(|v| *v = 0.0);
        let hpre = &cache.hidden_pre[c * hidden..(c + 1) * hidden];
        for k in 0..latent {
            let g = dz[k];
            if g == 0.0 {
                continue;
            }
            grad.b2[k] += g;
            for j in 0..hidden {
                grad.w2[k * hidden + j] += g * relu(hpre[j]);
                dh[j] += g * p.w2[k * hidden + j];
            }
        }
        let f = cache.features.cell(c);
        for j in 0..hidden {
            if hpre[j] <= 0.0 || dh[j] == 0.0 {
                continue;
            }
            let g = dh[j];
            grad.b1[j] += g;
            for (i, x) in f.iter().enumerate() {
                grad.w1[j * input + i] += g * x;
            }
        }
    }
}

fn check_pairs(n_pred: usize, n_gt: usize) -> Result<()> {
    if n_pred != n_gt {
        return Err(Error::shape(format!("{n_pred} predictions for {n_gt} targets")));
    }
    if n_pred == 0 {
        return Err(Error::invalid("empty batch"));
    }
    Ok(())
}

/// Pixel-wise regression loss `1/(2K) * sum_k ||pred_k - gt_k||^2`.
pub fn reg_loss(pred: &[DensityMap], gt: &[DensityMap]) -> Result<f64> {
    check_pairs(pred.len(), gt.len())?;
    let mut total = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        if p.dims() != g.dims() {
            return Err(Error::shape(format!("{:?} vs {:?}", p.dims(), g.dims())));
        }
        total += p
            .values()
            .iter()
            .zip(g.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / (2.0 * pred.len() as f64))
}

/// One training example: features and the ground-truth density on the same grid.
pub type Example<'a> = (&'a FeatureGrid, &'a DensityMap);

/// Regression loss and its gradient over a batch, with the forward caches.
pub(crate) fn reg_loss_grad(
    state: &RegressorState,
    batch: &[Example<'_>],
) -> Result<(f64, RegressorParams, Vec<ForwardCache>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let k = batch.len() as f64;
    let mut grad = RegressorParams::zeros(state.shape);
    let mut loss = 0.0;
    let mut caches = Vec::with_capacity(batch.len());
    for (features, gt) in batch {
        if (features.width_cells, features.height_cells) != gt.dims() {
            return Err(Error::shape("features and density grid differ"));
        }
        let cache = forward_cached(state, features)?;
        let d_out: Vec<f64> = cache
            .out_pre
            .iter()
            .zip(gt.values())
            .map(|(&o, &g)| {
                let r = o.max(0.0) - g;
                loss += r * r;
                if o > 0.0 {
                    r / k
                } else {
                    0.0
                }
            })
            .collect();
        backward(state, &cache, Some(&d_out), None, &mut grad);
        caches.push(cache);
    }
    Ok((loss / (2.0 * k), grad, caches))
}

/// Regression loss of `state` on `batch`.
pub fn batch_loss(state: &RegressorState, batch: &[Example<'_>]) -> Result<f64> {
    Ok(reg_loss_grad(state, batch)?.0)
}

/// Analytic gradient of the regression loss.
pub fn reg_gradient(state: &RegressorState, batch: &[Example<'_>]) -> Result<RegressorParams> {
    Ok(reg_loss_grad(state, batch)?.1)
}

/// One SGD-with-momentum step on the regression loss.
pub fn train_step(state: &RegressorState, batch: &[Example<'_>], lr: f64) -> Result<RegressorState> {
    let (_, grad, _) = reg_loss_grad(state, batch)?;
    state.apply_gradient(&grad, lr)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub features: FeatureConfig,
    pub sigma: f64,
    pub state: RegressorState,
}

impl Checkpoint {
    pub fn new(features: FeatureConfig, sigma: f64, state: RegressorState) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            features,
            sigma,
            state,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        crate::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let s = ck.state.shape;
        let expect = RegressorParams::zeros(s);
        let lens_ok = ck
            .state
            .params
            .groups()
            .iter()
            .zip(expect.groups())
            .all(|(a, b)| a.len() == b.len());
        if !lens_ok || s.input != ck.features.dim() {
            return Err(Error::Checkpoint("parameter shapes do not match".into()));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::HeadPoint;
    use crate::density::rasterize;
    use rand::Rng;

    fn scene(points: &[(f64, f64)]) -> Scene {
        let pts = points.iter().map(|&(x, y)| HeadPoint::new(x, y)).collect();
        Scene::new("m", 40, 32, pts).unwrap()
    }

    fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> Scene {
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0.0..40.0), rng.random_range(0.0..32.0)))
            .collect();
        scene(&pts)
    }

    fn shape() -> ModelShape {
        ModelShape {
            input: FeatureConfig::default().dim(),
            hidden: 6,
            latent: 4,
        }
    }

    #[test]
    fn empty_scene_features() {
        let cfg = FeatureConfig::default();
        let g = featurize(&scene(&[]), &cfg).unwrap();
        assert_eq!((g.width_cells, g.height_cells, g.dim), (5, 4, 5));
        for c in 0..g.n_cells() {
            assert!(g.cell(c)[..3].iter().all(|&v| v == 0.0));
        }
        let x = (2.0 + 0.5) / 5.0;
        let y = (1.0 + 0.5) / 4.0;
        assert_eq!(&g.cell(7)[3..], &[x, y]);
    }

    #[test]
    fn features_are_deterministic_and_local() {
        let cfg = FeatureConfig::default();
        let s = scene(&[(20.5, 12.5)]);
        let a = featurize(&s, &cfg).unwrap();
        assert_eq!(a, featurize(&s, &cfg).unwrap());
        // cell (2, 1) on a 5-wide grid
        let own = 7;
        for c in 0..a.n_cells() {
            for r in 0..cfg.radii.len() {
                assert!(a.cell(own)[r] >= a.cell(c)[r]);
            }
        }
        assert_eq!(a.cell(0)[0], 0.0);
    }

    #[test]
    fn zero_weights_predict_zero() {
        let cfg = FeatureConfig::default();
        let g = featurize(&scene(&[(3.0, 3.0), (10.0, 20.0)]), &cfg).unwrap();
        let (latent, pred) = forward(&RegressorState::zeros(shape(), 0.9), &g, 8).unwrap();
        assert!(pred.values().iter().all(|&v| v == 0.0));
        assert!(latent.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn head_is_linear_in_its_weights() {
        let cfg = FeatureConfig::default();
        let g = featurize(&scene(&[(3.0, 3.0), (10.0, 20.0), (11.0, 21.0)]), &cfg).unwrap();
        let state = RegressorState::init(shape(), 0.9, 3);
        let mut doubled = state.clone();
        doubled.params.w3.iter_mut().for_each(|w| *w *= 2.0);
        doubled.params.b3 *= 2.0;
        let a = forward_cached(&state, &g).unwrap();
        let b = forward_cached(&doubled, &g).unwrap();
        for (x, y) in a.raw_output().iter().zip(b.raw_output()) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
        let (_, p1) = forward(&state, &g, 8).unwrap();
        let (_, p2) = forward(&state, &g, 8).unwrap();
        assert_eq!(p1.total(), p2.total());
    }

    #[test]
    fn forward_rejects_nonfinite_params() {
        let g = featurize(&scene(&[]), &FeatureConfig::default()).unwrap();
        let mut s = RegressorState::zeros(shape(), 0.9);
        s.params.w2[0] = f64::NAN;
        assert!(matches!(forward(&s, &g, 8), Err(Error::NonFinite(_))));
    }

    #[test]
    fn reg_loss_examples() {
        let one = |v: f64| DensityMap::from_values(1, 1, 1, vec![v]).unwrap();
        let a = vec![one(3.0), one(0.5)];
        assert_eq!(reg_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(reg_loss(&[one(3.0)], &[one(1.0)]).unwrap(), 2.0);
        let pred = vec![one(3.0), one(2.0)];
        let gt = vec![one(1.0), one(1.5)];
        let single = reg_loss(&pred, &gt).unwrap();
        let doubled = reg_loss(
            &[pred.clone(), pred].concat(),
            &[gt.clone(), gt].concat(),
        )
        .unwrap();
        assert!((single - doubled).abs() < 1e-15);
        assert!(reg_loss(&[one(1.0)], &[]).is_err());
        assert!(reg_loss(&[], &[]).is_err());
    }

    #[test]
    fn lr_zero_keeps_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = FeatureConfig::default();
        let s = random_scene(&mut rng, 12);
        let f = featurize(&s, &cfg).unwrap();
        let d = rasterize(&s, 8, 4.0).unwrap();
        let state = RegressorState::init(shape(), 0.95, 1);
        assert_eq!(train_step(&state, &[(&f, &d)], 0.0).unwrap(), state);
    }

    #[test]
    fn small_step_does_not_increase_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = FeatureConfig::default();
        let scenes: Vec<Scene> = (0..3).map(|i| random_scene(&mut rng, 5 + 10 * i)).collect();
        let feats: Vec<FeatureGrid> = scenes.iter().map(|s| featurize(s, &cfg).unwrap()).collect();
        let maps: Vec<DensityMap> = scenes.iter().map(|s| rasterize(s, 8, 4.0).unwrap()).collect();
        let batch: Vec<Example> = feats.iter().zip(&maps).collect();
        let state = RegressorState::init(shape(), 0.0, 2);
        let before = batch_loss(&state, &batch).unwrap();
        let next = train_step(&state, &batch, 1e-4).unwrap();
        assert!(batch_loss(&next, &batch).unwrap() <= before);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let state = RegressorState::init(shape(), 0.95, 4);
        Checkpoint::new(FeatureConfig::default(), 4.0, state.clone())
            .save(&path)
            .unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.state, state);
        assert_eq!(back.sigma, 4.0);
    }
}
