//! One-dimensional partitioning of predicted counts into density classes.

use crate::{Error, Result};

/// Class boundaries over a list of values plus the class of each value.
///
/// Class `c` covers the half-open interval `[breaks[c - 1], breaks[c])`, with
/// the outer intervals unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSet {
    pub breaks: Vec<f64>,
    /// Class index per input value, in input order.
    pub assignments: Vec<usize>,
}

impl PartitionSet {
    fn from_breaks(breaks: Vec<f64>, values: &[f64]) -> Self {
        let assignments = values.iter().map(|&v| class_for(&breaks, v)).collect();
        Self {
            breaks,
            assignments,
        }
    }

    /// Number of classes, including classes no value fell into.
    pub fn n_classes(&self) -> usize {
        self.breaks.len() + 1
    }

    /// Class of an arbitrary value under these breaks.
    pub fn class_of(&self, value: f64) -> usize {
        class_for(&self.breaks, value)
    }

    /// Input indices grouped by class.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_classes()];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

fn class_for(breaks: &[f64], value: f64) -> usize {
    breaks.partition_point(|&b| b <= value)
}

fn check_input(values: &[f64], k: usize) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid("cannot partition an empty list"));
    }
    if k == 0 {
        return Err(Error::invalid("partition count must be at least 1"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("cannot partition non-finite value {v}")));
    }
    Ok(())
}

/// Jenks natural breaks: splits the sorted values into `k` contiguous classes
/// minimizing the total within-class sum of squared deviations.
///
/// Exact dynamic program, `O(k n^2)`. Equal values never straddle a break, so
/// `k` is clamped to the number of distinct values. Among equal-cost
/// solutions the one with the earliest break wins. Each break sits halfway
/// between the last value of one class and the first value of the next.
pub fn jenks_breaks(values: &[f64], k: usize) -> Result<PartitionSet> {
    check_input(values, k)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();

    // Boundary `s` (between sorted[s-1] and sorted[s]) is legal only between distinct values.
    let legal: Vec<bool> = (0..=n)
        .map(|s| s == 0 || s == n || sorted[s - 1] < sorted[s])
        .collect();
    let distinct = 1 + sorted.windows(2).filter(|w| w[0] < w[1]).count();
    let k = k.min(distinct);

    // Shift by the minimum so prefix sums stay small and translations are exact.
    let base = sorted[0];
    let mut sum = vec![0.0; n + 1];
    let mut sum_sq = vec![0.0; n + 1];
    for (i, &v) in sorted.iter().enumerate() {
        let d = v - base;
        sum[i + 1] = sum[i] + d;
        sum_sq[i + 1] = sum_sq[i] + d * d;
    }
    let ssd = |a: usize, b: usize| {
        let len = (b - a) as f64;
        let s = sum[b] - sum[a];
        (sum_sq[b] - sum_sq[a] - s * s / len).max(0.0)
    };

    // cost[j][i]: best objective for the first i values in j + 1 classes.
    let mut cost = vec![vec![f64::INFINITY; n + 1]; k];
    let mut split = vec![vec![0usize; n + 1]; k];
    for i in 1..=n {
        cost[0][i] = ssd(0, i);
    }
    for j in 1..k {
        for i in (j + 1)..=n {
            if !legal[i] {
                continue;
            }
            let mut best = f64::INFINITY;
            let mut best_s = 0;
            for s in j..i {
                if !legal[s] || !cost[j - 1][s].is_finite() {
                    continue;
                }
                let c = cost[j - 1][s] + ssd(s, i);
                if c < best {
                    best = c;
                    best_s = s;
                }
            }
            cost[j][i] = best;
            split[j][i] = best_s;
        }
    }

    let mut bounds = Vec::with_capacity(k - 1);
    let mut end = n;
    for j in (1..k).rev() {
        let s = split[j][end];
        bounds.push(s);
        end = s;
    }
    bounds.reverse();
    let breaks = bounds
        .iter()
        .map(|&s| 0.5 * (sorted[s - 1] + sorted[s]))
        .collect();
    Ok(PartitionSet::from_breaks(breaks, values))
}

/// Breaks at equal intervals of `[min, max]`. Identical values give one class.
pub fn even_breaks(values: &[f64], k: usize) -> Result<PartitionSet> {
    check_input(values, k)?;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let breaks = if lo == hi {
        Vec::new()
    } else {
        let step = (hi - lo) / k as f64;
        (1..k).map(|i| lo + step * i as f64).collect()
    };
    Ok(PartitionSet::from_breaks(breaks, values))
}
