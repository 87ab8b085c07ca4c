//! Sample selection.
//!
//! Partition-based selection with weights (PSSW) splits the unlabeled pool by
//! predicted count into `m` classes (Jenks natural breaks), scores each
//! unlabeled scene by its grid dissimilarity (GDSIM) to the labeled scenes of
//! the same class, and draws one scene per class with probability
//! proportional to that score. The baselines swap out one ingredient: random
//! sampling, even-interval classes, or a global-count-only dissimilarity.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Pool, SceneId};
use crate::density::DensityMap;
use crate::partition::{even_breaks, jenks_breaks, PartitionSet};
use crate::{Error, Result};

/// Default finest grid level for GDSIM.
pub const DEFAULT_LEVEL: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform draws without replacement.
    Random,
    /// Jenks classes + GDSIM-weighted draw per class.
    Pssw,
    /// Equal-interval classes + GDSIM-weighted draw per class.
    EvenPartition,
    /// Jenks classes + global count difference as the dissimilarity.
    GlobalDiff,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Random,
        Strategy::Pssw,
        Strategy::EvenPartition,
        Strategy::GlobalDiff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "rs",
            Strategy::Pssw => "pssw",
            Strategy::EvenPartition => "even_partition",
            Strategy::GlobalDiff => "global_diff",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionRequest {
    pub strategy: Strategy,
    pub m: usize,
    /// Finest GDSIM level (`L_A`).
    pub level: u32,
    pub seed: u64,
}

impl SelectionRequest {
    pub fn new(strategy: Strategy, m: usize, seed: u64) -> Self {
        Self {
            strategy,
            m,
            level: DEFAULT_LEVEL,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissimScore {
    pub scene_id: SceneId,
    /// GDSIM value; `+inf` when the class holds no labeled scene.
    pub score: f64,
    pub partition: usize,
}

/// Region counts for levels `0..=level`, concatenated (85 entries at level 3).
fn signature(map: &DensityMap, level: u32) -> Vec<f64> {
    (0..=level).flat_map(|l| map.level_counts(l)).collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Grid dissimilarity of a predicted map to a set of ground-truth maps: the
/// minimum over `labeled` of the summed absolute region-count differences over
/// all grid levels `0..=level`.
pub fn gdsim(unlabeled: &DensityMap, labeled: &[&DensityMap], level: u32) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::invalid("GDSIM needs at least one labeled map"));
    }
    if let Some(bad) = labeled.iter().find(|m| m.dims() != unlabeled.dims()) {
        return Err(Error::shape(format!(
            "GDSIM on {:?} vs {:?} grids",
            unlabeled.dims(),
            bad.dims()
        )));
    }
    let u = signature(unlabeled, level);
    Ok(labeled
        .iter()
        .map(|m| l1(&u, &signature(m, level)))
        .fold(f64::INFINITY, f64::min))
}

fn lookup<'a>(maps: &'a HashMap<SceneId, DensityMap>, id: &SceneId, what: &str) -> Result<&'a DensityMap> {
    maps.get(id)
        .ok_or_else(|| Error::invalid(format!("no {what} map for scene {id}")))
}

fn min_l1(sig: &[f64], others: &[(usize, Vec<f64>)]) -> f64 {
    others
        .iter()
        .map(|(_, s)| l1(sig, s))
        .fold(f64::INFINITY, f64::min)
}

/// Partitions the unlabeled pool by predicted count and scores every unlabeled
/// scene against the labeled scenes of its class. Labeled scenes are placed
/// into classes by their ground-truth counts. Scores come back in the pool's
/// (sorted) unlabeled order.
pub fn partition_scores(
    pool: &Pool,
    predictions: &HashMap<SceneId, DensityMap>,
    gt_maps: &HashMap<SceneId, DensityMap>,
    strategy: Strategy,
    k: usize,
    level: u32,
) -> Result<(PartitionSet, Vec<DissimScore>)> {
    let unlabeled: Vec<&SceneId> = pool.unlabeled().iter().collect();
    let preds: Vec<&DensityMap> = unlabeled
        .iter()
        .map(|id| lookup(predictions, id, "predicted"))
        .collect::<Result<_>>()?;
    let counts: Vec<f64> = preds.iter().map(|m| m.total()).collect();
    let partition = match strategy {
        Strategy::EvenPartition => even_breaks(&counts, k)?,
        Strategy::Pssw | Strategy::GlobalDiff => jenks_breaks(&counts, k)?,
        Strategy::Random => {
            return Err(Error::invalid("random selection has no partitions"));
        }
    };
    let level = if strategy == Strategy::GlobalDiff { 0 } else { level };

    let mut labeled_by_class: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new(); partition.n_classes()];
    for (i, id) in pool.labeled().iter().enumerate() {
        let gt = lookup(gt_maps, id, "ground-truth")?;
        if let Some(p) = preds.first() {
            if gt.dims() != p.dims() {
                return Err(Error::shape(format!("scene {id}: grid {:?} vs {:?}", gt.dims(), p.dims())));
            }
        }
        labeled_by_class[partition.class_of(gt.total())].push((i, signature(gt, level)));
    }

    let score_one = |j: usize| -> Result<DissimScore> {
        let class = partition.assignments[j];
        let peers = &labeled_by_class[class];
        let score = if peers.is_empty() {
            f64::INFINITY
        } else {
            if preds[j].dims() != preds[0].dims() {
                return Err(Error::shape(format!("scene {}: grid mismatch", unlabeled[j])));
            }
            min_l1(&signature(preds[j], level), peers)
        };
        Ok(DissimScore {
            scene_id: unlabeled[j].clone(),
            score,
            partition: class,
        })
    };
    #[cfg(feature = "parallel")]
    let scores = (0..unlabeled.len()).into_par_iter().map(score_one).collect::<Result<Vec<_>>>()?;
    #[cfg(not(feature = "parallel"))]
    let scores = (0..unlabeled.len()).map(score_one).collect::<Result<Vec<_>>>()?;
    Ok((partition, scores))
}

/// Within-class selection probabilities, aligned with `scores`. Scores are
/// normalized linearly; a class with no labeled member (infinite scores) or
/// with all-zero scores is uniform.
pub fn partition_probabilities(scores: &[DissimScore]) -> Vec<f64> {
    let n_classes = scores.iter().map(|s| s.partition + 1).max().unwrap_or(0);
    let mut sums = vec![0.0; n_classes];
    let mut sizes = vec![0usize; n_classes];
    let mut unseen = vec![false; n_classes];
    for s in scores {
        sizes[s.partition] += 1;
        if s.score.is_infinite() {
            unseen[s.partition] = true;
        } else {
            sums[s.partition] += s.score;
        }
    }
    scores
        .iter()
        .map(|s| {
            let c = s.partition;
            if unseen[c] || sums[c] <= 0.0 {
                1.0 / sizes[c] as f64
            } else {
                s.score / sums[c]
            }
        })
        .collect()
}

/// Picks up to `req.m` unlabeled scenes. Deterministic in `req.seed`.
///
/// Partition strategies draw one scene per non-empty class. When there are
/// fewer non-empty classes than `m` (clamped Jenks classes or empty even
/// intervals), the remaining slots go to the unpicked scenes with the highest
/// GDSIM against the whole labeled set.
pub fn select(
    pool: &Pool,
    predictions: &HashMap<SceneId, DensityMap>,
    gt_maps: &HashMap<SceneId, DensityMap>,
    req: &SelectionRequest,
) -> Result<Vec<SceneId>> {
    let unlabeled: Vec<&SceneId> = pool.unlabeled().iter().collect();
    if req.m == 0 {
        return Err(Error::invalid("selection size m must be at least 1"));
    }
    if req.m > unlabeled.len() {
        return Err(Error::invalid(format!(
            "cannot select {} scenes from {} unlabeled",
            req.m,
            unlabeled.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    if req.strategy == Strategy::Random {
        return Ok(index::sample(&mut rng, unlabeled.len(), req.m)
            .into_iter()
            .map(|i| unlabeled[i].clone())
            .collect());
    }

    let (partition, scores) = partition_scores(pool, predictions, gt_maps, req.strategy, req.m, req.level)?;
    let probs = partition_probabilities(&scores);
    let mut picked = vec![false; scores.len()];
    let mut out = Vec::with_capacity(req.m);
    for members in partition.members() {
        if members.is_empty() {
            continue;
        }
        let weights: Vec<f64> = members.iter().map(|&i| probs[i]).collect();
        let dist = WeightedIndex::new(&weights).map_err(|e| Error::invalid(format!("selection weights: {e}")))?;
        let chosen = members[dist.sample(&mut rng)];
        picked[chosen] = true;
        out.push(scores[chosen].scene_id.clone());
    }

    let missing = req.m - out.len();
    if missing > 0 {
        let level = if req.strategy == Strategy::GlobalDiff { 0 } else { req.level };
        let labeled: Vec<(usize, Vec<f64>)> = pool
            .labeled()
            .iter()
            .enumerate()
            .map(|(i, id)| Ok((i, signature(lookup(gt_maps, id, "ground-truth")?, level))))
            .collect::<Result<_>>()?;
        let mut rest: Vec<usize> = (0..scores.len()).filter(|&i| !picked[i]).collect();
        if labeled.is_empty() {
            let draw = index::sample(&mut rng, rest.len(), missing);
            out.extend(draw.into_iter().map(|i| scores[rest[i]].scene_id.clone()));
        } else {
            let global: HashMap<usize, f64> = rest
                .iter()
                .map(|&i| {
                    let sig = signature(lookup(predictions, &scores[i].scene_id, "predicted")?, level);
                    Ok((i, min_l1(&sig, &labeled)))
                })
                .collect::<Result<_>>()?;
            // highest first; ties by pool order
            rest.sort_by(|a, b| global[b].total_cmp(&global[a]).then(a.cmp(b)));
            out.extend(rest.iter().take(missing).map(|&i| scores[i].scene_id.clone()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn halves(left: f64, right: f64) -> DensityMap {
        let mut v = vec![0.0; 16];
        for y in 0..4 {
            for x in 0..4 {
                v[y * 4 + x] = if x < 2 { left / 8.0 } else { right / 8.0 };
            }
        }
        DensityMap::from_values(4, 4, 1, v).unwrap()
    }

    fn uniform(total: f64) -> DensityMap {
        DensityMap::from_values(4, 4, 1, vec![total / 16.0; 16]).unwrap()
    }

    fn id(s: &str) -> SceneId {
        SceneId::from(s)
    }

    #[test]
    fn gdsim_examples() {
        let a = halves(5.0, 0.0);
        let b = halves(0.0, 5.0);
        assert_eq!(gdsim(&a, &[&b, &a], 3).unwrap(), 0.0);
        let c = uniform(9.0);
        assert!((gdsim(&a, &[&c], 0).unwrap() - 4.0).abs() < 1e-12);
        assert!((gdsim(&a, &[&b], 1).unwrap() - 10.0).abs() < 1e-12);
        assert!(gdsim(&a, &[], 1).is_err());
        let small = DensityMap::zeros(2, 2, 1);
        assert!(gdsim(&a, &[&small], 1).is_err());
    }

    #[test]
    fn gdsim_monotone_in_level() {
        let a = halves(3.0, 1.0);
        let b = uniform(2.5);
        let mut prev = 0.0;
        for level in 0..4 {
            let g = gdsim(&a, &[&b], level).unwrap();
            assert!(g >= prev);
            prev = g;
        }
    }

    fn fixture(n: usize, labeled: &[usize]) -> (Pool, HashMap<SceneId, DensityMap>, HashMap<SceneId, DensityMap>) {
        let ids: Vec<SceneId> = (0..n).map(|i| id(&format!("s{i:02}"))).collect();
        let pool = Pool::new(ids.clone()).unwrap();
        let picked: Vec<SceneId> = labeled.iter().map(|&i| ids[i].clone()).collect();
        let pool = pool.annotate(&picked).unwrap();
        let mut pred = HashMap::new();
        let mut gt = HashMap::new();
        for (i, sid) in ids.iter().enumerate() {
            let total = if i % 2 == 0 { 10.0 } else { 100.0 };
            pred.insert(sid.clone(), uniform(total));
            gt.insert(sid.clone(), uniform(total + 1.0));
        }
        (pool, pred, gt)
    }

    #[test]
    fn random_is_deterministic() {
        let (pool, pred, gt) = fixture(30, &[]);
        let req = SelectionRequest::new(Strategy::Random, 5, 42);
        let a = select(&pool, &pred, &gt, &req).unwrap();
        assert_eq!(a, select(&pool, &pred, &gt, &req).unwrap());
        assert_eq!(a.len(), 5);
    }

    #[test]
    fn forced_draw_when_each_class_has_one_member() {
        let ids: Vec<SceneId> = (0..3).map(|i| id(&format!("u{i}"))).collect();
        let pool = Pool::new(ids.clone()).unwrap();
        let pred: HashMap<_, _> = ids
            .iter()
            .zip([1.0, 50.0, 400.0])
            .map(|(s, c)| (s.clone(), uniform(c)))
            .collect();
        let mut got = select(&pool, &pred, &HashMap::new(), &SelectionRequest::new(Strategy::Pssw, 3, 7)).unwrap();
        got.sort();
        assert_eq!(got, ids);
    }

    #[test]
    fn too_many_requested_fails() {
        let (pool, pred, gt) = fixture(4, &[0]);
        let req = SelectionRequest::new(Strategy::Pssw, 4, 1);
        assert!(select(&pool, &pred, &gt, &req).is_err());
    }

    #[test]
    fn shortfall_is_filled_by_global_gdsim() {
        // all predictions identical -> one Jenks class, three slots
        let ids: Vec<SceneId> = (0..6).map(|i| id(&format!("s{i}"))).collect();
        let pool = Pool::new(ids.clone()).unwrap().annotate(&ids[..1]).unwrap();
        let mut pred = HashMap::new();
        let mut gt = HashMap::new();
        for sid in &ids {
            pred.insert(sid.clone(), halves(4.0, 0.0));
            gt.insert(sid.clone(), halves(4.0, 0.0));
        }
        pred.insert(ids[3].clone(), halves(0.0, 4.0));
        pred.insert(ids[5].clone(), halves(2.0, 2.0));
        let got = select(&pool, &pred, &gt, &SelectionRequest::new(Strategy::Pssw, 3, 3)).unwrap();
        assert_eq!(got.len(), 3);
        let unique: std::collections::HashSet<_> = got.iter().collect();
        assert_eq!(unique.len(), 3);
        assert!(got.iter().all(|g| pool.unlabeled().contains(g)));
    }

    #[test]
    fn probabilities_are_normalized_per_class() {
        let scores = vec![
            DissimScore { scene_id: id("a"), score: 1.0, partition: 0 },
            DissimScore { scene_id: id("b"), score: 3.0, partition: 0 },
            DissimScore { scene_id: id("c"), score: f64::INFINITY, partition: 1 },
            DissimScore { scene_id: id("d"), score: f64::INFINITY, partition: 1 },
            DissimScore { scene_id: id("e"), score: 0.0, partition: 2 },
        ];
        let p = partition_probabilities(&scores);
        assert_eq!(p, vec![0.25, 0.75, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("nope".parse::<Strategy>().is_err());
    }
}
