//! Counting error measures.
//!
//! `mse` follows the crowd-counting convention of reporting the root of the
//! mean squared count error.

use serde::{Deserialize, Serialize};

use crate::density::{DensityMap, Region};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mae: f64,
    pub mse: f64,
    /// `game[l]` is GAME(l) averaged over scenes.
    pub game: Vec<f64>,
    pub n_scenes: usize,
}

fn check_counts(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} ground-truth counts",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("no counts to compare"));
    }
    Ok(())
}

/// Mean absolute count error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_counts(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Root mean squared count error.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_counts(pred, truth)?;
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// GAME(`level`): sum over the `4^level` grid regions of the absolute
/// difference between region counts.
///
/// Region differences are accumulated bottom-up over the same recursive
/// halving as [`DensityMap::grid_regions`], so `game(l + 1) >= game(l)`
/// holds exactly in floating point, not just up to rounding.
pub fn game(pred: &DensityMap, truth: &DensityMap, level: u32) -> Result<f64> {
    if pred.dims() != truth.dims() {
        return Err(Error::shape(format!(
            "GAME on {:?} vs {:?} grids",
            pred.dims(),
            truth.dims()
        )));
    }
    let diff: Vec<f64> = pred
        .values()
        .iter()
        .zip(truth.values())
        .map(|(p, t)| p - t)
        .collect();
    let tree = DiffTree {
        diff: &diff,
        width: pred.width_cells(),
        level,
    };
    Ok(tree.walk(pred.full_region(), 0).1)
}

struct DiffTree<'a> {
    diff: &'a [f64],
    width: usize,
    level: u32,
}

impl DiffTree<'_> {
    /// `(signed difference, GAME contribution)` of region `r` at `depth`.
    fn walk(&self, r: Region, depth: u32) -> (f64, f64) {
        if r.area() == 0 {
            return (0.0, 0.0);
        }
        if r.area() == 1 {
            let d = self.diff[r.y0 * self.width + r.x0];
            return (d, d.abs());
        }
        let (xm, ym) = (r.x0 + (r.x1 - r.x0) / 2, r.y0 + (r.y1 - r.y0) / 2);
        let children = [
            Region::new(r.x0, r.y0, xm, ym),
            Region::new(xm, r.y0, r.x1, ym),
            Region::new(r.x0, ym, xm, r.y1),
            Region::new(xm, ym, r.x1, r.y1),
        ];
        let (mut d, mut g) = (0.0, 0.0);
        for c in children {
            let (cd, cg) = self.walk(c, depth + 1);
            d += cd;
            g += cg;
        }
        if depth >= self.level {
            g = d.abs();
        }
        (d, g)
    }
}

/// MAE, MSE and GAME(0..=max_level) over paired prediction / ground-truth maps.
pub fn evaluate(pairs: &[(DensityMap, DensityMap)], max_level: u32) -> Result<EvalReport> {
    let pred: Vec<f64> = pairs.iter().map(|(p, _)| p.total()).collect();
    let truth: Vec<f64> = pairs.iter().map(|(_, t)| t.total()).collect();
    let n = pairs.len();
    let mut game_avg = vec![0.0; max_level as usize + 1];
    for (p, t) in pairs {
        for (level, acc) in game_avg.iter_mut().enumerate() {
            *acc += game(p, t, level as u32)?;
        }
    }
    game_avg.iter_mut().for_each(|g| *g /= n.max(1) as f64);
    Ok(EvalReport {
        mae: mae(&pred, &truth)?,
        mse: mse(&pred, &truth)?,
        game: game_avg,
        n_scenes: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn halves(left: f64, right: f64) -> DensityMap {
        // 4x4 grid, mass spread evenly over each half's 8 cells
        let mut v = vec![0.0; 16];
        for y in 0..4 {
            for x in 0..4 {
                v[y * 4 + x] = if x < 2 { left / 8.0 } else { right / 8.0 };
            }
        }
        DensityMap::from_values(4, 4, 1, v).unwrap()
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(mae(&[10.0, 20.0], &[12.0, 16.0]).unwrap(), 3.0);
        assert_eq!(mae(&[7.5], &[2.0]).unwrap(), 5.5);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!((mse(&[10.0, 20.0], &[12.0, 16.0]).unwrap() - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(mse(&[7.5], &[2.0]).unwrap(), 5.5);
    }

    #[test]
    fn count_errors() {
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn game_hand_example() {
        let p = halves(5.0, 0.0);
        let t = halves(0.0, 5.0);
        assert!(game(&p, &t, 0).unwrap().abs() < 1e-12);
        // four quadrants: |2.5-0| + |0-2.5| twice
        assert!((game(&p, &t, 1).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(game(&p, &p, 3).unwrap(), 0.0);
    }

    #[test]
    fn game_dimension_mismatch() {
        let a = DensityMap::zeros(4, 4, 1);
        let b = DensityMap::zeros(4, 5, 1);
        assert!(game(&a, &b, 0).is_err());
    }

    #[test]
    fn evaluate_game0_matches_mae() {
        let pairs = vec![
            (halves(5.0, 1.0), halves(2.0, 2.0)),
            (halves(0.0, 0.0), halves(3.0, 1.0)),
        ];
        let r = evaluate(&pairs, 3).unwrap();
        assert_eq!(r.n_scenes, 2);
        assert_eq!(r.game.len(), 4);
        assert!((r.game[0] - r.mae).abs() < 1e-12);
    }

    fn map_strategy() -> impl Strategy<Value = (DensityMap, DensityMap)> {
        (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            let cells = prop::collection::vec(0.0f64..5.0, w * h);
            (cells.clone(), cells).prop_map(move |(a, b)| {
                (
                    DensityMap::from_values(w, h, 1, a).unwrap(),
                    DensityMap::from_values(w, h, 1, b).unwrap(),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn game_is_monotone_and_symmetric((p, t) in map_strategy()) {
            let g0 = game(&p, &t, 0).unwrap();
            prop_assert!((g0 - (p.total() - t.total()).abs()).abs() <= 1e-9);
            let mut prev = g0;
            for level in 1..4 {
                let g = game(&p, &t, level).unwrap();
                prop_assert!(g + 1e-9 >= prev);
                prop_assert!((g - game(&t, &p, level).unwrap()).abs() <= 1e-12);
                prev = g;
            }
        }
    }
}
