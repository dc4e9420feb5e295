//! Stratum bookkeeping and the stage-two sample allocation.

use serde::{Deserialize, Serialize};

use crate::coalition::PlayerId;
use crate::error::{Error, Result};

/// `C(n - 1, l - 1)`: number of coalitions of size `l - 1` that exclude a
/// given player, i.e. the size of the stratum for position `l`.
pub fn stratum_size(n: u64, l: u64) -> Result<u64> {
    if l == 0 || l > n {
        return Err(Error::invalid(format!("position {l} outside 1..={n}")));
    }
    binomial(n - 1, l - 1)
}

/// Exact binomial coefficient, or [`Error::Overflow`] past 64 bits.
pub fn binomial(n: u64, k: u64) -> Result<u64> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 1..=u128::from(k) {
        // acc * (n - k + j) is divisible by j at every step.
        acc = acc * (u128::from(n - k) + j) / j;
        if acc > u128::from(u64::MAX) {
            return Err(Error::Overflow { n, k });
        }
    }
    Ok(acc as u64)
}

/// Unbiased sample variance from running sums, clamped at zero against
/// round-off. `None` when fewer than two samples exist.
pub fn sample_variance(sum: f64, sum_sq: f64, count: u64) -> Option<f64> {
    if count < 2 {
        return None;
    }
    let h = count as f64;
    Some(((sum_sq - sum * sum / h) / (h - 1.0)).max(0.0))
}

/// Sampling state of one `(player, position)` stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub player: PlayerId,
    /// 1-based position; coalitions in this stratum have `position - 1` members.
    pub position: usize,
    /// Samples drawn (or coalitions enumerated) across both stages.
    pub sample_count: u64,
    /// Samples drawn in the first stage.
    pub stage1_count: u64,
    pub sum: f64,
    pub sum_sq: f64,
    /// First-stage sample variance; `None` for enumerated strata.
    pub variance: Option<f64>,
    /// The stratum was fully enumerated and its mean is exact.
    pub exact: bool,
}

impl StratumStats {
    pub fn new(player: PlayerId, position: usize) -> Self {
        StratumStats {
            player,
            position,
            sample_count: 0,
            stage1_count: 0,
            sum: 0.0,
            sum_sq: 0.0,
            variance: None,
            exact: false,
        }
    }

    pub fn push(&mut self, delta: f64) {
        self.sample_count += 1;
        self.sum += delta;
        self.sum_sq += delta * delta;
    }

    pub fn mean(&self) -> f64 {
        if self.sample_count == 0 {
            0.0
        } else {
            self.sum / self.sample_count as f64
        }
    }
}

/// Splits `total` into integer parts proportional to `weights` by largest
/// remainder. Ties go to the lower index.
pub(crate) fn largest_remainder(total: u64, weights: &[f64]) -> Vec<u64> {
    let wsum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    let exact: Vec<f64> = if wsum > 0.0 {
        weights.iter().map(|w| total as f64 * w / wsum).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut parts: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    let mut left = total.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &j in order.iter().cycle() {
        if left == 0 {
            break;
        }
        parts[j] += 1;
        left -= 1;
    }
    parts
}

/// Second-stage increments for every stratum.
///
/// `pool` is the number of samples still to draw. Non-exact strata share
/// `pool` plus their own first-stage counts in proportion to their
/// first-stage variances; a stratum whose share falls below what it already
/// drew is frozen at that count and the rest re-split, until no stratum is
/// over-sampled. If every remaining variance is zero the pool is split
/// evenly. Increments sum to `pool` exactly unless every stratum is exact.
pub fn allocate_stage2(stats: &[StratumStats], pool: u64) -> Vec<u64> {
    let mut increments = vec![0u64; stats.len()];
    let mut active: Vec<usize> = (0..stats.len()).filter(|&k| !stats[k].exact).collect();
    if active.is_empty() {
        return increments;
    }
    let mut total: u64 = pool + active.iter().map(|&k| stats[k].stage1_count).sum::<u64>();

    loop {
        let variances: Vec<f64> = active
            .iter()
            .map(|&k| stats[k].variance.unwrap_or(0.0))
            .collect();
        let var_sum: f64 = variances.iter().sum();
        let committed: u64 = active.iter().map(|&k| stats[k].stage1_count).sum();
        if var_sum <= 0.0 {
            let extra = largest_remainder(total - committed, &vec![1.0; active.len()]);
            for (&k, e) in active.iter().zip(extra) {
                increments[k] = e;
            }
            return increments;
        }
        let over: Vec<usize> = active
            .iter()
            .zip(&variances)
            .filter(|&(&k, &v)| total as f64 * v / var_sum < stats[k].stage1_count as f64)
            .map(|(&k, _)| k)
            .collect();
        if over.is_empty() {
            let targets = largest_remainder(total, &variances);
            for (&k, t) in active.iter().zip(targets) {
                increments[k] = t.saturating_sub(stats[k].stage1_count);
            }
            return increments;
        }
        for k in &over {
            total -= stats[*k].stage1_count;
        }
        active.retain(|k| !over.contains(k));
        if active.is_empty() {
            // Unreachable with exact arithmetic; give the pool to the frozen
            // strata evenly rather than dropping it.
            let extra = largest_remainder(pool, &vec![1.0; over.len()]);
            for (&k, e) in over.iter().zip(extra) {
                increments[k] = e;
            }
            return increments;
        }
    }
}
