//! Sampling estimators.
//!
//! Every estimator first builds a sample plan sequentially from one seeded
//! stream, then evaluates the plan's marginal contributions (possibly in
//! parallel), then reduces the results in plan order. Results therefore
//! depend only on the game, the budget and the seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::allocation::{allocate_stage2, largest_remainder, sample_variance, stratum_size, StratumStats};
use super::{combine_strata, Mode, SampleBudget, ShapleyResult};
use crate::clock::Stopwatch;
use crate::coalition::{k_subsets_excluding, sample_uniform_coalition, Coalition, PlayerId};
use crate::error::{Error, Result};
use crate::game::CoalitionGame;
use crate::par;

/// One planned marginal evaluation: `player` joining `coalition`, recorded
/// into stratum `stratum`.
#[derive(Debug, Clone, Copy)]
struct Draw {
    stratum: usize,
    player: PlayerId,
    coalition: Coalition,
}

fn evaluate<G: CoalitionGame + ?Sized>(game: &G, plan: &[Draw]) -> Result<Vec<f64>> {
    par::try_map(plan, |d| game.marginal(d.coalition, d.player))
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn fresh_strata(n: usize) -> Vec<StratumStats> {
    (0..n)
        .flat_map(|i| (1..=n).map(move |l| StratumStats::new(PlayerId(i), l)))
        .collect()
}

/// Mean of the per-player marginal contributions over the given orders.
pub fn estimate_from_permutations<G: CoalitionGame + ?Sized>(
    game: &G,
    orders: &[Vec<usize>],
) -> Result<Vec<f64>> {
    let n = game.num_players();
    if orders.is_empty() {
        return Err(Error::invalid("need at least one permutation"));
    }
    let mut plan = Vec::with_capacity(orders.len() * n);
    for order in orders {
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid(format!("{order:?} is not a permutation of 0..{n}")));
        }
        let mut prefix = Coalition::EMPTY;
        for &p in order {
            plan.push(Draw {
                stratum: p,
                player: PlayerId(p),
                coalition: prefix,
            });
            prefix = prefix.with(PlayerId(p));
        }
    }
    let deltas = evaluate(game, &plan)?;
    let mut sums = vec![0.0; n];
    for (d, delta) in plan.iter().zip(deltas) {
        sums[d.stratum] += delta;
    }
    Ok(sums.into_iter().map(|s| s / orders.len() as f64).collect())
}

/// Simple random sampling of join orders.
///
/// Each order yields one marginal per player, so `budget.total / N` orders
/// (at least one) are drawn with replacement.
pub fn estimate_simple_random<G: CoalitionGame + ?Sized>(
    game: &G,
    budget: SampleBudget,
) -> Result<ShapleyResult> {
    let clock = Stopwatch::start();
    let n = game.num_players();
    if budget.total < 1 {
        return Err(Error::BudgetTooSmall { given: 0, required: 1 });
    }
    let count = (budget.total / n as u64).max(1);
    let mut rng = rng_for(budget.seed);
    let orders: Vec<Vec<usize>> = (0..count)
        .map(|_| {
            let mut o: Vec<usize> = (0..n).collect();
            o.shuffle(&mut rng);
            o
        })
        .collect();
    let values = estimate_from_permutations(game, &orders)?;
    ShapleyResult::assemble(game, values, Mode::Permutation, Some(budget), Vec::new(), 0, clock)
}

/// Appends `count` with-replacement draws from stratum `k`.
fn plan_samples(
    plan: &mut Vec<Draw>,
    rng: &mut ChaCha8Rng,
    n: usize,
    k: usize,
    count: u64,
) -> Result<()> {
    let (player, position) = (PlayerId(k / n), k % n + 1);
    for _ in 0..count {
        plan.push(Draw {
            stratum: k,
            player,
            coalition: sample_uniform_coalition(rng, n, position - 1, player)?,
        });
    }
    Ok(())
}

fn plan_enumeration(plan: &mut Vec<Draw>, n: usize, k: usize) {
    let (player, position) = (PlayerId(k / n), k % n + 1);
    plan.extend(
        k_subsets_excluding(n, position - 1, player).map(|coalition| Draw {
            stratum: k,
            player,
            coalition,
        }),
    );
}

fn record(strata: &mut [StratumStats], plan: &[Draw], deltas: &[f64]) {
    for (d, &delta) in plan.iter().zip(deltas) {
        strata[d.stratum].push(delta);
    }
}

fn per_player_values(strata: &[StratumStats], n: usize) -> Vec<f64> {
    strata
        .chunks(n)
        .map(|row| combine_strata(row.iter().map(StratumStats::mean), n))
        .collect()
}

/// True when drawing `allotted` samples would cover the stratum, in which
/// case it is enumerated instead.
fn enumerable(n: usize, position: usize, allotted: u64) -> Result<Option<u64>> {
    match stratum_size(n as u64, position as u64) {
        Ok(size) if allotted >= size => Ok(Some(size)),
        Ok(_) | Err(Error::Overflow { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Stratified sampling with `floor(h / N^2)` samples in every stratum.
pub fn estimate_stratified_uniform<G: CoalitionGame + ?Sized>(
    game: &G,
    budget: SampleBudget,
) -> Result<ShapleyResult> {
    let clock = Stopwatch::start();
    let n = game.num_players();
    let strata_count = (n * n) as u64;
    if budget.total < strata_count {
        return Err(Error::BudgetTooSmall {
            given: budget.total,
            required: strata_count,
        });
    }
    let per = budget.total / strata_count;
    let mut rng = rng_for(budget.seed);
    let mut strata = fresh_strata(n);
    let mut plan = Vec::new();
    for (k, s) in strata.iter_mut().enumerate() {
        if enumerable(n, s.position, per)?.is_some() {
            s.exact = true;
            plan_enumeration(&mut plan, n, k);
        } else {
            plan_samples(&mut plan, &mut rng, n, k, per)?;
        }
    }
    let deltas = evaluate(game, &plan)?;
    record(&mut strata, &plan, &deltas);
    for s in strata.iter_mut() {
        s.stage1_count = s.sample_count;
        if !s.exact {
            s.variance = sample_variance(s.sum, s.sum_sq, s.sample_count);
        }
    }
    let values = per_player_values(&strata, n);
    let spent: u64 = strata.iter().map(|s| s.sample_count).sum();
    ShapleyResult::assemble(
        game,
        values,
        Mode::Stratified,
        Some(budget),
        strata,
        budget.total - spent,
        clock,
    )
}

/// Two-stage coalitional stratified sampling with variance-proportional
/// allocation.
///
/// Stage one spreads half the budget evenly over the `N^2` strata (at least
/// two samples each). A stratum whose share would reach its size is
/// enumerated instead, fixing its mean exactly and returning the unused
/// share to the pool. The remaining budget is then allocated across the
/// sampled strata in proportion to their stage-one variances (see
/// [`allocate_stage2`]), drawn, and merged with the stage-one sums.
pub fn estimate_coalitional_stratified_optimal<G: CoalitionGame + ?Sized>(
    game: &G,
    budget: SampleBudget,
) -> Result<ShapleyResult> {
    let clock = Stopwatch::start();
    let n = game.num_players();
    let strata_count = (n * n) as u64;
    let required = 2 * strata_count;
    if budget.total < required {
        return Err(Error::BudgetTooSmall {
            given: budget.total,
            required,
        });
    }

    // Stage one.
    let even = largest_remainder(budget.total / 2, &vec![1.0; n * n]);
    let mut rng = rng_for(budget.seed);
    let mut strata = fresh_strata(n);
    let mut plan = Vec::new();
    let mut pool = budget.total;
    for (k, s) in strata.iter_mut().enumerate() {
        let allotted = even[k].max(2);
        if let Some(size) = enumerable(n, s.position, allotted)? {
            s.exact = true;
            pool -= size;
            plan_enumeration(&mut plan, n, k);
        } else {
            pool -= allotted;
            plan_samples(&mut plan, &mut rng, n, k, allotted)?;
        }
    }
    let deltas = evaluate(game, &plan)?;
    record(&mut strata, &plan, &deltas);
    for s in strata.iter_mut() {
        s.stage1_count = s.sample_count;
        if !s.exact {
            s.variance = sample_variance(s.sum, s.sum_sq, s.sample_count);
        }
    }

    // Stage two.
    let increments = allocate_stage2(&strata, pool);
    let mut plan = Vec::new();
    for (k, &extra) in increments.iter().enumerate() {
        if extra > 0 {
            plan_samples(&mut plan, &mut rng, n, k, extra)?;
        }
    }
    let deltas = evaluate(game, &plan)?;
    record(&mut strata, &plan, &deltas);
    let unused = pool - increments.iter().sum::<u64>();

    let values = per_player_values(&strata, n);
    ShapleyResult::assemble(
        game,
        values,
        Mode::CoalitionalStratified,
        Some(budget),
        strata,
        unused,
        clock,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::game::TableGame;
    use crate::shapley::{exact_shapley, exact_shapley_permutations, next_permutation};

    fn random_table(n: usize, seed: u64) -> TableGame {
        use rand::Rng;
        let mut rng = rng_for(seed);
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        // Superadditive-ish: square of summed weight.
        TableGame::from_fn(n, |c| {
            let w: f64 = c.members().map(|p| weights[p.0]).sum();
            w * w - c.members().map(|p| weights[p.0].powi(2)).sum::<f64>()
        })
        .unwrap()
    }

    #[test]
    fn all_permutations_reproduce_exact() {
        let g = random_table(5, 1);
        let mut o: Vec<usize> = (0..5).collect();
        let mut all = vec![o.clone()];
        while next_permutation(&mut o) {
            all.push(o.clone());
        }
        let est = estimate_from_permutations(&g, &all).unwrap();
        let exact = exact_shapley(&g).unwrap();
        let perm = exact_shapley_permutations(&g).unwrap();
        for i in 0..5 {
            assert!((est[i] - perm.values[i]).abs() < 1e-12);
            assert!((est[i] - exact.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_permutations() {
        let g = random_table(3, 2);
        assert!(estimate_from_permutations(&g, &[vec![0, 0, 1]]).is_err());
        assert!(estimate_from_permutations(&g, &[vec![0, 1]]).is_err());
        assert!(estimate_from_permutations(&g, &[]).is_err());
    }

    #[test]
    fn one_player_estimators() {
        let g = TableGame::new(1, vec![0.0, 0.0]).unwrap();
        let b = SampleBudget::new(2, 3);
        assert_eq!(estimate_simple_random(&g, SampleBudget::new(1, 0)).unwrap().values, vec![0.0]);
        assert_eq!(estimate_stratified_uniform(&g, b).unwrap().values, vec![0.0]);
        assert_eq!(estimate_coalitional_stratified_optimal(&g, b).unwrap().values, vec![0.0]);
    }

    #[test]
    fn toy_pair_estimates() {
        let g = fixtures::toy_pair_game();
        let r = estimate_simple_random(&g, SampleBudget::new(2000, 11)).unwrap();
        for v in &r.values {
            assert!((v - 0.15).abs() < 0.02, "{v}");
        }
        let s = estimate_stratified_uniform(&g, SampleBudget::new(4 * 500, 11)).unwrap();
        for v in &s.values {
            assert!((v - 0.15).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn budgets_below_minimum_are_rejected() {
        let g = random_table(4, 3);
        assert!(matches!(
            estimate_coalitional_stratified_optimal(&g, SampleBudget::new(31, 0)),
            Err(Error::BudgetTooSmall { given: 31, required: 32 })
        ));
        assert!(estimate_stratified_uniform(&g, SampleBudget::new(15, 0)).is_err());
        assert!(estimate_simple_random(&g, SampleBudget::new(0, 0)).is_err());
    }

    #[test]
    fn saturating_budgets_collapse_to_exact() {
        let g = random_table(6, 4);
        let exact = exact_shapley(&g).unwrap();
        let big = SampleBudget::new(2 * 36 * 10, 9);
        let opt = estimate_coalitional_stratified_optimal(&g, big).unwrap();
        assert_eq!(opt.values, exact.values);
        assert!(opt.strata.iter().all(|s| s.exact));
        let uni = estimate_stratified_uniform(&g, SampleBudget::new(36 * 10, 9)).unwrap();
        assert_eq!(uni.values, exact.values);
    }

    #[test]
    fn stage_two_spends_the_whole_budget() {
        let g = random_table(7, 5);
        for total in [98, 99, 500, 1234, 1900] {
            let r = estimate_coalitional_stratified_optimal(&g, SampleBudget::new(total, 1)).unwrap();
            assert_eq!(r.samples_drawn() + r.unused_budget, total);
            assert_eq!(r.unused_budget, 0, "total {total}");
            for s in &r.strata {
                assert!(s.sample_count >= s.stage1_count);
                assert!(s.exact || s.stage1_count >= 2);
                if s.exact {
                    assert_eq!(s.sample_count, stratum_size(7, s.position as u64).unwrap());
                }
            }
        }
        // Every stratum enumerated: 7 * 2^6 coalitions used, the rest unused.
        let r = estimate_coalitional_stratified_optimal(&g, SampleBudget::new(7000, 1)).unwrap();
        assert!(r.strata.iter().all(|s| s.exact));
        assert_eq!(r.unused_budget, 7000 - 7 * 64);
    }

    #[test]
    fn same_seed_same_result() {
        let g = random_table(6, 6);
        let b = SampleBudget::new(600, 42);
        let a = estimate_coalitional_stratified_optimal(&g, b).unwrap();
        let c = estimate_coalitional_stratified_optimal(&g, b).unwrap();
        assert_eq!(a.values, c.values);
        assert_eq!(a.strata, c.strata);
        let d = estimate_coalitional_stratified_optimal(&g, SampleBudget::new(600, 43)).unwrap();
        assert_ne!(a.values, d.values);
    }
}
