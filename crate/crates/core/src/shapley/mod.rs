//! Shapley values: exact computation by stratum enumeration, the
//! permutation-average cross-check, and three sampling estimators.
//!
//! Strata are indexed by `(player, position)`. The stratum for player `i`
//! at position `l` is the set of coalitions of size `l - 1` not containing
//! `i`; the Shapley value is the plain average of the `N` stratum means.

mod allocation;
mod sampling;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use allocation::{allocate_stage2, binomial, sample_variance, stratum_size, StratumStats};
pub use sampling::{
    estimate_coalitional_stratified_optimal, estimate_from_permutations, estimate_simple_random,
    estimate_stratified_uniform,
};

use crate::clock::Stopwatch;
use crate::coalition::{k_subsets_excluding, Coalition, PlayerId};
use crate::error::{Error, Result};
use crate::game::CoalitionGame;
use crate::par;

/// Largest game for [`exact_shapley`].
pub const EXACT_PLAYER_CAP: usize = 20;
/// Largest game for [`exact_shapley_permutations`].
pub const PERMUTATION_PLAYER_CAP: usize = 8;
/// Largest stratum [`stratum_exact_mean`] will enumerate.
pub const STRATUM_ENUMERATION_CAP: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Enumerate every coalition.
    Exact,
    /// Average over every permutation (small games only).
    ExactPermutations,
    /// Simple random sampling of permutations.
    Permutation,
    /// Stratified sampling with equal allocation per stratum.
    Stratified,
    /// Two-stage stratified sampling with variance-proportional allocation.
    CoalitionalStratified,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::ExactPermutations => "exact-permutations",
            Mode::Permutation => "permutation",
            Mode::Stratified => "stratified",
            Mode::CoalitionalStratified => "coalitional-stratified",
        }
    }

    pub fn is_sampling(self) -> bool {
        matches!(self, Mode::Permutation | Mode::Stratified | Mode::CoalitionalStratified)
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Mode::Exact,
            Mode::ExactPermutations,
            Mode::Permutation,
            Mode::Stratified,
            Mode::CoalitionalStratified,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Number of marginal-contribution evaluations an estimator may spend, and
/// the seed of its random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBudget {
    pub total: u64,
    pub seed: u64,
}

impl SampleBudget {
    pub fn new(total: u64, seed: u64) -> Self {
        SampleBudget { total, seed }
    }

    pub fn per_player(samples_per_player: u64, players: usize, seed: u64) -> Self {
        SampleBudget {
            total: samples_per_player * players as u64,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub values: Vec<f64>,
    pub mode: Mode,
    pub seed: Option<u64>,
    pub budget: Option<u64>,
    /// `v(N)`.
    pub grand_value: f64,
    /// `sum(values) - v(N)`.
    pub efficiency_residual: f64,
    /// Per-stratum state, indexed `player * N + (position - 1)`, for the
    /// stratified modes.
    pub strata: Vec<StratumStats>,
    /// Budget left unspent because every stratum was enumerated.
    pub unused_budget: u64,
    pub elapsed: Duration,
}

impl ShapleyResult {
    fn assemble<G: CoalitionGame + ?Sized>(
        game: &G,
        values: Vec<f64>,
        mode: Mode,
        budget: Option<SampleBudget>,
        strata: Vec<StratumStats>,
        unused_budget: u64,
        clock: Stopwatch,
    ) -> Result<Self> {
        let grand_value = game.value(Coalition::grand(game.num_players()))?;
        let efficiency_residual = values.iter().sum::<f64>() - grand_value;
        Ok(ShapleyResult {
            values,
            mode,
            seed: budget.map(|b| b.seed),
            budget: budget.map(|b| b.total),
            grand_value,
            efficiency_residual,
            strata,
            unused_budget,
            elapsed: clock.elapsed(),
        })
    }

    /// Total samples over all strata (enumerated strata count their size).
    pub fn samples_drawn(&self) -> u64 {
        self.strata.iter().map(|s| s.sample_count).sum()
    }
}

/// Final estimate from per-position stratum means, in position order.
pub(crate) fn combine_strata(means: impl Iterator<Item = f64>, n: usize) -> f64 {
    means.sum::<f64>() / n as f64
}

/// Mean marginal contribution of player `i` over every coalition of size
/// `l - 1` that excludes it, and the number of such coalitions.
pub fn stratum_exact_mean<G: CoalitionGame + ?Sized>(
    game: &G,
    i: PlayerId,
    l: usize,
) -> Result<(f64, u64)> {
    let n = game.num_players();
    if i.0 >= n {
        return Err(Error::invalid(format!("player {i} not in a game of {n}")));
    }
    let count = stratum_size(n as u64, l as u64)?;
    if count > STRATUM_ENUMERATION_CAP {
        return Err(Error::CapExceeded {
            what: "stratum size",
            value: count,
            cap: STRATUM_ENUMERATION_CAP,
        });
    }
    let coalitions: Vec<Coalition> = k_subsets_excluding(n, l - 1, i).collect();
    let deltas = par::try_map(&coalitions, |&c| game.marginal(c, i))?;
    let sum: f64 = deltas.iter().sum();
    Ok((sum / count as f64, count))
}

fn check_cap(what: &'static str, n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::CapExceeded {
            what,
            value: n as u64,
            cap: cap as u64,
        });
    }
    Ok(())
}

/// Exact Shapley values by enumerating all `2^N` coalitions.
pub fn exact_shapley<G: CoalitionGame + ?Sized>(game: &G) -> Result<ShapleyResult> {
    exact_shapley_capped(game, EXACT_PLAYER_CAP)
}

/// [`exact_shapley`] with a caller-chosen player cap (at most
/// [`EXACT_PLAYER_CAP`] is sensible; the hard limit is 25).
///
/// Coalition values are computed once each. For every player the
/// marginal contributions of each size class are summed in ascending mask
/// order and divided by the class size, which is the Shapley weighting
/// `|T|! (N-|T|-1)! / N!` grouped by `|T|`.
pub fn exact_shapley_capped<G: CoalitionGame + ?Sized>(game: &G, cap: usize) -> Result<ShapleyResult> {
    let clock = Stopwatch::start();
    let n = game.num_players();
    check_cap("exact Shapley players", n, cap.min(crate::coalition::ENUMERATION_CAP))?;
    let masks: Vec<u64> = (0..1u64 << n).collect();
    let table = par::try_map(&masks, |&m| game.value(Coalition::from_mask(m)))?;

    let players: Vec<usize> = (0..n).collect();
    let per_player = par::try_map(&players, |&i| {
        let me = PlayerId(i);
        let bit = 1u64 << i;
        let strata: Vec<StratumStats> = (1..=n)
            .map(|l| {
                let mut s = StratumStats::new(me, l);
                for c in k_subsets_excluding(n, l - 1, me) {
                    let m = c.mask() as usize;
                    s.push(table[m | bit as usize] - table[m]);
                }
                s.exact = true;
                s
            })
            .collect();
        Ok(strata)
    })?;
    let values = per_player
        .iter()
        .map(|strata| combine_strata(strata.iter().map(StratumStats::mean), n))
        .collect();
    let strata = per_player.into_iter().flatten().collect();
    ShapleyResult::assemble(game, values, Mode::Exact, None, strata, 0, clock)
}

/// Exact Shapley values as the average marginal contribution over all `N!`
/// join orders. Independent of [`exact_shapley`]; used as a cross-check.
pub fn exact_shapley_permutations<G: CoalitionGame + ?Sized>(game: &G) -> Result<ShapleyResult> {
    let clock = Stopwatch::start();
    let n = game.num_players();
    check_cap("permutation players", n, PERMUTATION_PLAYER_CAP)?;
    let masks: Vec<u64> = (0..1u64 << n).collect();
    let table = par::try_map(&masks, |&m| game.value(Coalition::from_mask(m)))?;

    let mut order: Vec<usize> = (0..n).collect();
    let mut sums = vec![0.0; n];
    let mut count = 0u64;
    loop {
        let mut prefix = 0usize;
        for &p in &order {
            let next = prefix | (1 << p);
            sums[p] += table[next] - table[prefix];
            prefix = next;
        }
        count += 1;
        if !next_permutation(&mut order) {
            break;
        }
    }
    let values = sums.iter().map(|s| s / count as f64).collect();
    ShapleyResult::assemble(game, values, Mode::ExactPermutations, None, Vec::new(), 0, clock)
}

/// Advances to the next lexicographic permutation; false after the last.
pub(crate) fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let Some(i) = (0..v.len() - 1).rev().find(|&i| v[i] < v[i + 1]) else {
        return false;
    };
    let j = (i + 1..v.len()).rev().find(|&j| v[j] > v[i]).expect("successor exists");
    v.swap(i, j);
    v[i + 1..].reverse();
    true
}
