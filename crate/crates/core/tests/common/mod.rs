//! Independent oracles and random instance builders shared by the
//! integration and acceptance suites.
#![allow(dead_code)]

use alac::alignment::{aligned_gradients, aligned_objective, plan_pairs, AlignConfig, ClassifierState};
use alac::data::{HeadPoint, Scene};
use alac::density::{rasterize, DensityMap};
use alac::model::{
    batch_loss, featurize, forward_cached, reg_gradient, FeatureConfig, FeatureGrid, ModelShape,
    RegressorParams, RegressorState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_scene<R: Rng>(rng: &mut R, id: &str, width: u32, height: u32, n: usize) -> Scene {
    let points = (0..n)
        .map(|_| {
            HeadPoint::new(
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
            )
        })
        .collect();
    Scene::new(id, width, height, points).unwrap()
}

/// Random non-negative map with occasional empty cells.
pub fn random_map<R: Rng>(rng: &mut R, w: usize, h: usize) -> DensityMap {
    let values = (0..w * h)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..3.0) })
        .collect();
    DensityMap::from_values(w, h, 8, values).unwrap()
}

// ---------------------------------------------------------------- Jenks

/// Exact objective scaled by lcm(1..=12) so every term is an integer:
/// `sum_c L * (S2_c - S1_c^2 / n_c)`.
pub fn scaled_objective(groups: &[Vec<i64>]) -> i128 {
    const L: i128 = 27_720;
    groups
        .iter()
        .map(|g| {
            let n = g.len() as i128;
            let s1: i128 = g.iter().map(|&v| v as i128).sum();
            let s2: i128 = g.iter().map(|&v| (v as i128) * (v as i128)).sum();
            L * s2 - (L / n) * s1 * s1
        })
        .sum()
}

/// Minimum objective over every split of the sorted values into exactly `k`
/// non-empty contiguous groups (ties may be split).
pub fn brute_force_jenks(values: &[i64], k: usize) -> i128 {
    assert!(values.len() <= 12);
    let mut sorted = values.to_vec();
    sorted.sort();
    let n = sorted.len();
    let mut best = i128::MAX;
    // bit i set: cut between sorted[i] and sorted[i + 1]
    for mask in 0u32..(1 << (n - 1)) {
        if mask.count_ones() as usize != k - 1 {
            continue;
        }
        let mut groups = vec![Vec::new()];
        for (i, &v) in sorted.iter().enumerate() {
            groups.last_mut().unwrap().push(v);
            if i + 1 < n && mask & (1 << i) != 0 {
                groups.push(Vec::new());
            }
        }
        best = best.min(scaled_objective(&groups));
    }
    best
}

pub fn distinct(values: &[i64]) -> usize {
    let mut v = values.to_vec();
    v.sort();
    v.dedup();
    v.len()
}

// ---------------------------------------------------------------- MixUp

/// `Beta(a, a)` via the ratio of two gamma variates.
pub fn gamma_ratio_beta<R: Rng>(alpha: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(alpha, 1.0).unwrap();
    let x = g.sample(rng);
    let y = g.sample(rng);
    x / (x + y)
}

/// `E[max(b, 1 - b)]` for `b ~ Beta(1/2, 1/2)` (arcsine law).
pub fn folded_arcsine_mean() -> f64 {
    0.5 + 1.0 / std::f64::consts::PI
}

// ---------------------------------------------------------------- gradients

pub const FD_EPS: f64 = 1e-5;
/// Instances with a rectifier or clamp input this close to zero are redrawn,
/// so `±FD_EPS` never crosses a kink.
pub const KINK_MARGIN: f64 = 1e-3;
/// Floor of the relative-error denominator; below it the error is absolute.
pub const REL_FLOOR: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub struct GradInstance {
    pub state: RegressorState,
    pub clf: ClassifierState,
    pub labeled: Vec<(FeatureGrid, DensityMap)>,
    pub unlabeled: Vec<FeatureGrid>,
}

fn clear_of_kinks(state: &RegressorState, grids: &[&FeatureGrid]) -> bool {
    grids.iter().all(|g| {
        forward_cached(state, g)
            .unwrap()
            .preactivations()
            .all(|p| p.abs() > KINK_MARGIN)
    })
}

/// Small random problem: grids up to 8x8 cells, latent dim up to 6.
pub fn grad_instance(seed: u64) -> GradInstance {
    let mut rng = rng(seed);
    loop {
        let latent = rng.random_range(2..=6);
        let hidden = rng.random_range(3..=8);
        let features = FeatureConfig {
            cell_size: 4,
            radii: vec![0, 1],
        };
        let shape = ModelShape {
            input: features.dim(),
            hidden,
            latent,
        };
        let state = RegressorState::init(shape, 0.9, rng.random());
        let scene = |i: usize, rng: &mut ChaCha8Rng| {
            let w = 4 * rng.random_range(3..=8);
            let h = 4 * rng.random_range(3..=8);
            let n = rng.random_range(0..40);
            random_scene(rng, &format!("s{i}"), w, h, n)
        };
        let labeled: Vec<(FeatureGrid, DensityMap)> = (0..rng.random_range(1..=3))
            .map(|i| {
                let s = scene(i, &mut rng);
                (featurize(&s, &features).unwrap(), rasterize(&s, 4, 2.0).unwrap())
            })
            .collect();
        let unlabeled: Vec<FeatureGrid> = (0..rng.random_range(1..=3))
            .map(|i| featurize(&scene(10 + i, &mut rng), &features).unwrap())
            .collect();
        let mut clf = ClassifierState::init(latent, 0.9, &mut rng);
        clf.bias = rng.random_range(-0.5..0.5);
        let grids: Vec<&FeatureGrid> = labeled.iter().map(|(f, _)| f).chain(&unlabeled).collect();
        if clear_of_kinks(&state, &grids) {
            return GradInstance {
                state,
                clf,
                labeled,
                unlabeled,
            };
        }
    }
}

fn perturbed(state: &RegressorState, group: usize, idx: usize, delta: f64) -> RegressorState {
    let mut p: RegressorParams = state.params.clone();
    p.groups_mut()[group][idx] += delta;
    state.with_params(p)
}

/// Worst relative error between the analytic regression gradient and
/// central differences of the batch loss.
pub fn model_fd_error(inst: &GradInstance) -> f64 {
    let batch: Vec<(&FeatureGrid, &DensityMap)> = inst.labeled.iter().map(|(f, d)| (f, d)).collect();
    let grad = reg_gradient(&inst.state, &batch).unwrap();
    let mut worst: f64 = 0.0;
    for (g, analytic) in grad.groups().iter().enumerate() {
        for (i, &a) in analytic.iter().enumerate() {
            let up = batch_loss(&perturbed(&inst.state, g, i, FD_EPS), &batch).unwrap();
            let down = batch_loss(&perturbed(&inst.state, g, i, -FD_EPS), &batch).unwrap();
            worst = worst.max(rel_err(a, (up - down) / (2.0 * FD_EPS)));
        }
    }
    worst
}

pub struct AlignCheck {
    pub worst_rel_err: f64,
    /// Extractor dc-gradient under reversal is the exact negation of the
    /// one without reversal (and both are zero on the head).
    pub grl_exact: bool,
}

/// Central differences of `L_reg + beta * L_dc` where the dc term is negated
/// for extractor parameters, against the analytic aligned gradients.
pub fn alignment_fd_check(inst: &GradInstance, seed: u64, beta: f64, mix: bool) -> AlignCheck {
    let mut r = rng(seed);
    let config = AlignConfig {
        beta,
        alpha: 0.5,
        mix,
    };
    let batch: Vec<(&FeatureGrid, &DensityMap)> = inst.labeled.iter().map(|(f, d)| (f, d)).collect();
    let unl: Vec<&FeatureGrid> = inst.unlabeled.iter().collect();
    let pairs = plan_pairs(batch.len() + 2, batch.len(), unl.len(), config.alpha, &mut r).unwrap();
    let reversed = aligned_gradients(&inst.state, &inst.clf, &batch, &unl, &pairs, &config, true).unwrap();
    let plain = aligned_gradients(&inst.state, &inst.clf, &batch, &unl, &pairs, &config, false).unwrap();

    let grl_exact = reversed
        .extractor_dc
        .groups()
        .iter()
        .zip(plain.extractor_dc.groups())
        .enumerate()
        .all(|(g, (a, b))| {
            a.iter().zip(b).all(|(x, y)| {
                if g >= 4 {
                    *x == 0.0 && *y == 0.0
                } else {
                    x.to_bits() == (-y).to_bits()
                }
            })
        });

    let objective = |state: &RegressorState, clf: &ClassifierState| {
        aligned_objective(state, clf, &batch, &unl, &pairs, &config).unwrap()
    };
    let mut worst: f64 = 0.0;
    for (g, analytic) in reversed.regressor.groups().iter().enumerate() {
        let extractor = g < 4;
        for (i, &a) in analytic.iter().enumerate() {
            let (ru, du) = objective(&perturbed(&inst.state, g, i, FD_EPS), &inst.clf);
            let (rd, dd) = objective(&perturbed(&inst.state, g, i, -FD_EPS), &inst.clf);
            let dc_sign = if extractor { -1.0 } else { 1.0 };
            let numeric = ((ru - rd) + dc_sign * beta * (du - dd)) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(a, numeric));
        }
    }
    let n_w = inst.clf.weights.len();
    for i in 0..=n_w {
        let shift = |delta: f64| {
            let mut c = inst.clf.clone();
            if i < n_w {
                c.weights[i] += delta;
            } else {
                c.bias += delta;
            }
            objective(&inst.state, &c).1
        };
        let numeric = beta * (shift(FD_EPS) - shift(-FD_EPS)) / (2.0 * FD_EPS);
        let a = if i < n_w {
            reversed.classifier.weights[i]
        } else {
            reversed.classifier.bias
        };
        worst = worst.max(rel_err(a, numeric));
    }
    AlignCheck {
        worst_rel_err: worst,
        grl_exact,
    }
}
