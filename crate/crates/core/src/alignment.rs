//! Distribution alignment between labeled and unlabeled scenes.
//!
//! A distribution classifier (per-channel linear map on latent cells followed
//! by global average pooling) learns to tell labeled (label 0) from unlabeled
//! (label 1) latents. It sits behind a gradient reversal layer: the classifier
//! receives the true gradient of `beta * L_dc`, while the extractor receives it
//! multiplied by -1. Pairs of latents are additionally mixed
//! (`z' = l z1 + (1 - l) z2`, `l = max(b, 1 - b)`, `b ~ Beta(alpha, alpha)`)
//! and the mixed sample carries the mixed label.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{backward, reg_loss_grad, Example, FeatureGrid, ForwardCache, LatentMap, RegressorParams, RegressorState};
use crate::{Error, Result};

/// Multiplier the gradient reversal layer applies on the way back.
pub const GRL_COEFFICIENT: f64 = -1.0;

/// Distribution label: 0 for labeled data, 1 for unlabeled, fractional when mixed.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DistLabel(f64);

impl DistLabel {
    pub const LABELED: DistLabel = DistLabel(0.0);
    pub const UNLABELED: DistLabel = DistLabel(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid(format!("distribution label {value} outside [0, 1]")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// 1x1 convolution to a single channel followed by global average pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierState {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub momentum: f64,
    velocity_w: Vec<f64>,
    velocity_b: f64,
}

impl ClassifierState {
    pub fn zeros(dim: usize, momentum: f64) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            momentum,
            velocity_w: vec![0.0; dim],
            velocity_b: 0.0,
        }
    }

    pub fn init<R: Rng + ?Sized>(dim: usize, momentum: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.1).unwrap();
        let mut s = Self::zeros(dim, momentum);
        s.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
        s
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Classifier logit for a latent grid.
    pub fn logit(&self, z: &LatentMap) -> Result<f64> {
        if z.dim != self.dim() {
            return Err(Error::shape(format!(
                "latent dim {} but classifier expects {}",
                z.dim,
                self.dim()
            )));
        }
        Ok(self.bias + dot(&self.weights, &pooled(z)))
    }

    fn apply_gradient(&self, grad: &ClassifierGrad, lr: f64) -> Result<Self> {
        if !(grad.weights.iter().all(|v| v.is_finite()) && grad.bias.is_finite()) {
            return Err(Error::NonFinite("classifier gradient".into()));
        }
        let mut next = self.clone();
        for ((w, v), g) in next.weights.iter_mut().zip(&mut next.velocity_w).zip(&grad.weights) {
            *v = self.momentum * *v + lr * g;
            *w -= *v;
        }
        next.velocity_b = self.momentum * self.velocity_b + lr * grad.bias;
        next.bias -= next.velocity_b;
        Ok(next)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierGrad {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Channel-wise mean over cells.
fn pooled(z: &LatentMap) -> Vec<f64> {
    let mut acc = vec![0.0; z.dim];
    for c in 0..z.n_cells() {
        acc.iter_mut().zip(z.cell(c)).for_each(|(a, v)| *a += v);
    }
    let n = z.n_cells().max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross entropy between `sigmoid(logit)` and `y`, in the overflow-free form.
pub fn bce_with_logits(logit: f64, y: f64) -> f64 {
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

/// Draws `max(b, 1 - b)` with `b ~ Beta(alpha, alpha)`.
pub fn sample_lambda<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!("MixUp alpha must be positive, got {alpha}")));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(fold_lambda(beta.sample(rng)))
}

/// `max(l, 1 - l)`.
pub fn fold_lambda(lambda: f64) -> f64 {
    lambda.max(1.0 - lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixSample {
    pub z_mixed: LatentMap,
    pub y_mixed: DistLabel,
    pub lambda_prime: f64,
}

/// Convex combination of two latent grids and their labels. Grids of
/// different extent are cropped to the common top-left block first.
pub fn mixup(
    z1: &LatentMap,
    y1: DistLabel,
    z2: &LatentMap,
    y2: DistLabel,
    lambda_prime: f64,
) -> Result<MixSample> {
    if !(0.5..=1.0).contains(&lambda_prime) {
        return Err(Error::invalid(format!("lambda' {lambda_prime} outside [0.5, 1]")));
    }
    if z1.dim != z2.dim {
        return Err(Error::shape(format!("latent dims {} vs {}", z1.dim, z2.dim)));
    }
    let w = z1.width_cells.min(z2.width_cells);
    let h = z1.height_cells.min(z2.height_cells);
    let a = z1.crop(w, h)?;
    let b = z2.crop(w, h)?;
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| lambda_prime * x + (1.0 - lambda_prime) * y)
        .collect();
    let y = lambda_prime * y1.value() + (1.0 - lambda_prime) * y2.value();
    Ok(MixSample {
        z_mixed: LatentMap { values, ..a },
        y_mixed: DistLabel::new(y.clamp(0.0, 1.0))?,
        lambda_prime,
    })
}

/// Mean BCE-with-logits of the classifier over `samples`.
pub fn dc_loss(clf: &ClassifierState, samples: &[(LatentMap, DistLabel)]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("dc_loss needs at least one sample"));
    }
    let mut total = 0.0;
    for (z, y) in samples {
        let y = DistLabel::new(y.value())?;
        total += bce_with_logits(clf.logit(z)?, y.value());
    }
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairEnd {
    Labeled(usize),
    Unlabeled(usize),
}

impl PairEnd {
    pub fn label(self) -> DistLabel {
        match self {
            PairEnd::Labeled(_) => DistLabel::LABELED,
            PairEnd::Unlabeled(_) => DistLabel::UNLABELED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixPair {
    pub first: PairEnd,
    pub second: PairEnd,
    pub lambda_prime: f64,
}

/// Draws `n_pairs` pairs. Each endpoint comes from the labeled or the
/// unlabeled pool with probability 1/2 (always labeled when there is no
/// unlabeled data), then uniformly within the pool.
pub fn plan_pairs<R: Rng + ?Sized>(
    n_pairs: usize,
    n_labeled: usize,
    n_unlabeled: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<MixPair>> {
    if n_labeled == 0 {
        return Err(Error::invalid("pair sampling needs labeled data"));
    }
    let end = |rng: &mut R| {
        if n_unlabeled > 0 && rng.random_bool(0.5) {
            PairEnd::Unlabeled(rng.random_range(0..n_unlabeled))
        } else {
            PairEnd::Labeled(rng.random_range(0..n_labeled))
        }
    };
    (0..n_pairs)
        .map(|_| {
            let first = end(rng);
            let second = end(rng);
            let lambda_prime = sample_lambda(alpha, rng)?;
            Ok(MixPair {
                first,
                second,
                lambda_prime,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    /// Weight of the distribution-classification loss.
    pub beta: f64,
    /// Beta-distribution parameter for the MixUp weight.
    pub alpha: f64,
    /// Include mixed latents (otherwise the classifier sees individuals only).
    pub mix: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            beta: 3.0,
            alpha: 0.5,
            mix: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignedGradients {
    pub reg_loss: f64,
    pub dc_loss: f64,
    /// Gradient applied to the regressor: regression gradient plus `extractor_dc`.
    pub regressor: RegressorParams,
    /// The distribution-loss contribution reaching the extractor,
    /// `coefficient * beta * dL_dc/dtheta` (head entries are zero).
    pub extractor_dc: RegressorParams,
    /// `beta * dL_dc/dclassifier`.
    pub classifier: ClassifierGrad,
}

struct LatentSource<'a> {
    cache: &'a ForwardCache,
    grad: Vec<f64>,
}

/// Losses and gradients of `L_reg + beta * L_dc` for a fixed pair plan.
/// `reverse` selects the gradient reversal layer (`true` in training); with
/// `false` the extractor receives the plain gradient.
pub fn aligned_gradients(
    reg: &RegressorState,
    clf: &ClassifierState,
    labeled: &[Example<'_>],
    unlabeled: &[&FeatureGrid],
    pairs: &[MixPair],
    config: &AlignConfig,
    reverse: bool,
) -> Result<AlignedGradients> {
    let (reg_loss, reg_grad, labeled_caches) = reg_loss_grad(reg, labeled)?;
    if clf.dim() != reg.shape.latent {
        return Err(Error::shape("classifier and extractor latent dims differ"));
    }

    // forward only the unlabeled scenes the plan touches
    let mut unlabeled_caches: Vec<Option<ForwardCache>> = vec![None; unlabeled.len()];
    for pair in pairs {
        for end in [pair.first, pair.second] {
            match end {
                PairEnd::Unlabeled(i) => {
                    let grid = unlabeled
                        .get(i)
                        .ok_or_else(|| Error::invalid(format!("unlabeled index {i} out of range")))?;
                    if unlabeled_caches[i].is_none() {
                        unlabeled_caches[i] = Some(crate::model::forward_cached(reg, grid)?);
                    }
                }
                PairEnd::Labeled(i) if i >= labeled.len() => {
                    return Err(Error::invalid(format!("labeled index {i} out of range")));
                }
                PairEnd::Labeled(_) => {}
            }
        }
    }

    let mut labeled_src: Vec<LatentSource> = labeled_caches
        .iter()
        .map(|c| LatentSource {
            cache: c,
            grad: vec![0.0; c.latent.values.len()],
        })
        .collect();
    let mut unlabeled_src: Vec<Option<LatentSource>> = unlabeled_caches
        .iter()
        .map(|c| {
            c.as_ref().map(|cache| LatentSource {
                cache,
                grad: vec![0.0; cache.latent.values.len()],
            })
        })
        .collect();

    let per_pair = if config.mix { 3 } else { 2 };
    let n_samples = (pairs.len() * per_pair) as f64;
    let mut dc_loss = 0.0;
    let mut clf_grad = ClassifierGrad {
        weights: vec![0.0; clf.dim()],
        bias: 0.0,
    };

    // d(mean BCE)/d(latent cell) = (sigmoid(logit) - y) / S * w / N_cells
    let accumulate = |z: &LatentMap, y: f64, clf_grad: &mut ClassifierGrad| -> Result<(f64, f64)> {
        let logit = clf.logit(z)?;
        let loss = bce_with_logits(logit, y);
        let g = (sigmoid(logit) - y) / n_samples;
        clf_grad.bias += g;
        for (acc, p) in clf_grad.weights.iter_mut().zip(pooled(z)) {
            *acc += g * p;
        }
        Ok((loss, g / z.n_cells().max(1) as f64))
    };

    fn scatter(src: &mut LatentSource, w: usize, h: usize, scale: f64, weights: &[f64]) {
        let full_w = src.cache.latent.width_cells;
        let dim = weights.len();
        for y in 0..h {
            for x in 0..w {
                let base = (y * full_w + x) * dim;
                for (k, wk) in weights.iter().enumerate() {
                    src.grad[base + k] += scale * wk;
                }
            }
        }
    }

    for pair in pairs {
        let latent_of = |end: PairEnd| -> &LatentMap {
            match end {
                PairEnd::Labeled(i) => &labeled_caches[i].latent,
                PairEnd::Unlabeled(i) => &unlabeled_caches[i].as_ref().expect("forwarded above").latent,
            }
        };
        let ends = [pair.first, pair.second];
        for end in ends {
            let z = latent_of(end);
            let (loss, cell_scale) = accumulate(z, end.label().value(), &mut clf_grad)?;
            dc_loss += loss;
            let src = source_mut(&mut labeled_src, &mut unlabeled_src, end);
            scatter(src, z.width_cells, z.height_cells, cell_scale, &clf.weights);
        }
        if config.mix {
            let (z1, z2) = (latent_of(pair.first), latent_of(pair.second));
            let mixed = mixup(z1, pair.first.label(), z2, pair.second.label(), pair.lambda_prime)?;
            let (loss, cell_scale) = accumulate(&mixed.z_mixed, mixed.y_mixed.value(), &mut clf_grad)?;
            dc_loss += loss;
            let (w, h) = (mixed.z_mixed.width_cells, mixed.z_mixed.height_cells);
            let lp = pair.lambda_prime;
            scatter(source_mut(&mut labeled_src, &mut unlabeled_src, pair.first), w, h, cell_scale * lp, &clf.weights);
            scatter(source_mut(&mut labeled_src, &mut unlabeled_src, pair.second), w, h, cell_scale * (1.0 - lp), &clf.weights);
        }
    }
    if pairs.is_empty() {
        // no pairs: the distribution term vanishes
        dc_loss = 0.0;
    } else {
        dc_loss /= n_samples;
    }

    let mut dc_raw = RegressorParams::zeros(reg.shape);
    for src in labeled_src.iter().chain(unlabeled_src.iter().flatten()) {
        if src.grad.iter().any(|&g| g != 0.0) {
            backward(reg, src.cache, None, Some(&src.grad), &mut dc_raw);
        }
    }

    let coefficient = if reverse { GRL_COEFFICIENT } else { 1.0 };
    let scale = coefficient * config.beta;
    let mut extractor_dc = RegressorParams::zeros(reg.shape);
    for (dst, src) in extractor_dc.groups_mut().into_iter().zip(dc_raw.groups()).take(4) {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d = scale * s);
    }
    let mut regressor = reg_grad;
    regressor.add_scaled(&extractor_dc, 1.0);

    clf_grad.weights.iter_mut().for_each(|g| *g *= config.beta);
    clf_grad.bias *= config.beta;

    Ok(AlignedGradients {
        reg_loss,
        dc_loss,
        regressor,
        extractor_dc,
        classifier: clf_grad,
    })
}

fn source_mut<'s, 'a>(
    labeled: &'s mut [LatentSource<'a>],
    unlabeled: &'s mut [Option<LatentSource<'a>>],
    end: PairEnd,
) -> &'s mut LatentSource<'a> {
    match end {
        PairEnd::Labeled(i) => &mut labeled[i],
        PairEnd::Unlabeled(i) => unlabeled[i].as_mut().expect("forwarded above"),
    }
}

/// `(L_reg, L_dc)` for a fixed pair plan, without gradients.
pub fn aligned_objective(
    reg: &RegressorState,
    clf: &ClassifierState,
    labeled: &[Example<'_>],
    unlabeled: &[&FeatureGrid],
    pairs: &[MixPair],
    config: &AlignConfig,
) -> Result<(f64, f64)> {
    let g = aligned_gradients(reg, clf, labeled, unlabeled, pairs, config, true)?;
    Ok((g.reg_loss, g.dc_loss))
}

/// One joint update: regression on `labeled`, distribution classification on
/// pairs drawn across both pools (one pair per labeled example), gradient
/// reversal into the extractor. With no unlabeled data this is exactly
/// [`crate::model::train_step`] and the classifier is left untouched.
pub fn aligned_train_step<R: Rng + ?Sized>(
    reg: &RegressorState,
    clf: &ClassifierState,
    labeled: &[Example<'_>],
    unlabeled: &[&FeatureGrid],
    config: &AlignConfig,
    lr: f64,
    rng: &mut R,
) -> Result<(RegressorState, ClassifierState)> {
    if labeled.is_empty() {
        return Err(Error::invalid("aligned step needs labeled data"));
    }
    if unlabeled.is_empty() {
        return Ok((crate::model::train_step(reg, labeled, lr)?, clf.clone()));
    }
    let pairs = plan_pairs(labeled.len(), labeled.len(), unlabeled.len(), config.alpha, rng)?;
    let grads = aligned_gradients(reg, clf, labeled, unlabeled, &pairs, config, true)?;
    if !(grads.reg_loss.is_finite() && grads.dc_loss.is_finite()) {
        return Err(Error::NonFinite("aligned loss".into()));
    }
    Ok((
        reg.apply_gradient(&grads.regressor, lr)?,
        clf.apply_gradient(&grads.classifier, lr)?,
    ))
}
