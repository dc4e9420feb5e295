//! The peer-to-peer energy characteristic function.
//!
//! A coalition shares one virtual meter: at each timestep its members' net
//! loads and battery flows are summed, and the aggregate import is billed at
//! the import price while the aggregate export earns the export price. The
//! coalitional cost is the minimum bill over all feasible battery schedules,
//! found by linear programming.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::cache::{CacheStats, ValueCache};
use crate::coalition::{Coalition, PlayerId, MAX_PLAYERS};
use crate::error::{Error, Result};
use crate::game::CoalitionGame;
use crate::lp::{self, LpProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub steps: usize,
    pub dt_hours: f64,
}

impl Horizon {
    pub fn new(steps: usize, dt_hours: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("horizon needs at least one timestep"));
        }
        if !(dt_hours > 0.0 && dt_hours.is_finite()) {
            return Err(Error::invalid(format!("timestep length {dt_hours} h must be positive")));
        }
        Ok(Horizon { steps, dt_hours })
    }

    /// 24 one-hour steps starting at midnight.
    pub fn day() -> Self {
        Horizon {
            steps: 24,
            dt_hours: 1.0,
        }
    }

    /// Clock hour (0..24) at the start of step `t`.
    pub fn hour_of(&self, t: usize) -> f64 {
        (t as f64 * self.dt_hours).rem_euclid(24.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSchedule {
    pub import_price: Vec<f64>,
    pub export_price: Vec<f64>,
}

impl TariffSchedule {
    /// Requires equal lengths and `import > export >= 0` at every step.
    pub fn new(import_price: Vec<f64>, export_price: Vec<f64>) -> Result<Self> {
        if import_price.len() != export_price.len() {
            return Err(Error::LengthMismatch {
                what: "export price vector".into(),
                expected: import_price.len(),
                actual: export_price.len(),
            });
        }
        for (t, (&im, &ex)) in import_price.iter().zip(&export_price).enumerate() {
            if !(im.is_finite() && ex.is_finite()) {
                return Err(Error::invalid(format!("tariff at step {t} is not finite")));
            }
            if ex < 0.0 {
                return Err(Error::invalid(format!("export price {ex} at step {t} is negative")));
            }
            if im <= ex {
                return Err(Error::invalid(format!(
                    "import price {im} must exceed export price {ex} at step {t}"
                )));
            }
        }
        Ok(TariffSchedule {
            import_price,
            export_price,
        })
    }

    /// Two-rate tariff: `night_price` before `day_start_hour`, `day_price`
    /// from then until midnight, flat export price.
    pub fn two_rate(
        horizon: &Horizon,
        night_price: f64,
        day_price: f64,
        day_start_hour: f64,
        export_price: f64,
    ) -> Result<Self> {
        let import = (0..horizon.steps)
            .map(|t| {
                if horizon.hour_of(t) < day_start_hour {
                    night_price
                } else {
                    day_price
                }
            })
            .collect();
        Self::new(import, vec![export_price; horizon.steps])
    }

    pub fn len(&self) -> usize {
        self.import_price.len()
    }

    pub fn is_empty(&self) -> bool {
        self.import_price.is_empty()
    }

    /// Bill for an aggregate net energy `net` (kWh) at step `t`.
    pub fn step_cost(&self, t: usize, net: f64) -> f64 {
        if net >= 0.0 {
            self.import_price[t] * net
        } else {
            self.export_price[t] * net
        }
    }
}

/// Battery parameters. Limits are energy per timestep (kWh), not power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub capacity_kwh: f64,
    pub charge_limit_kwh: f64,
    pub discharge_limit_kwh: f64,
    pub eff_in: f64,
    pub eff_out: f64,
    pub soc0: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl StorageSpec {
    /// The "no battery" encoding: zero capacity and zero limits.
    pub const fn none() -> Self {
        StorageSpec {
            capacity_kwh: 0.0,
            charge_limit_kwh: 0.0,
            discharge_limit_kwh: 0.0,
            eff_in: 1.0,
            eff_out: 1.0,
            soc0: 0.0,
            soc_min: 0.0,
            soc_max: 1.0,
        }
    }

    /// Builds a spec from power ratings (kW) for a given step length.
    #[allow(clippy::too_many_arguments)]
    pub fn from_ratings(
        capacity_kwh: f64,
        charge_kw: f64,
        discharge_kw: f64,
        eff_in: f64,
        eff_out: f64,
        soc0: f64,
        soc_min: f64,
        soc_max: f64,
        dt_hours: f64,
    ) -> Result<Self> {
        let spec = StorageSpec {
            capacity_kwh,
            charge_limit_kwh: charge_kw * dt_hours,
            discharge_limit_kwh: discharge_kw * dt_hours,
            eff_in,
            eff_out,
            soc0,
            soc_min,
            soc_max,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn has_storage(&self) -> bool {
        self.capacity_kwh > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("capacity", self.capacity_kwh),
            ("charge limit", self.charge_limit_kwh),
            ("discharge limit", self.discharge_limit_kwh),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("storage {name} {v} must be finite and >= 0")));
            }
        }
        for (name, v) in [("charge efficiency", self.eff_in), ("discharge efficiency", self.eff_out)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("storage {name} {v} must lie in (0, 1]")));
            }
        }
        for (name, v) in [("soc0", self.soc0), ("soc_min", self.soc_min), ("soc_max", self.soc_max)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("storage {name} {v} must lie in [0, 1]")));
            }
        }
        if !(self.soc_min <= self.soc0 && self.soc0 <= self.soc_max) {
            return Err(Error::invalid(format!(
                "initial state of charge {} outside [{}, {}]",
                self.soc0, self.soc_min, self.soc_max
            )));
        }
        if self.capacity_kwh == 0.0 && (self.charge_limit_kwh > 0.0 || self.discharge_limit_kwh > 0.0) {
            return Err(Error::invalid("storage without capacity must have zero limits"));
        }
        Ok(())
    }

    /// Bit-level identity, used to merge identical batteries.
    fn key(&self) -> [u64; 8] {
        [
            self.capacity_kwh.to_bits(),
            self.charge_limit_kwh.to_bits(),
            self.discharge_limit_kwh.to_bits(),
            self.eff_in.to_bits(),
            self.eff_out.to_bits(),
            self.soc0.to_bits(),
            self.soc_min.to_bits(),
            self.soc_max.to_bits(),
        ]
    }

    fn is_active(&self) -> bool {
        self.has_storage() && (self.charge_limit_kwh > 0.0 || self.discharge_limit_kwh > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prosumer {
    pub id: PlayerId,
    pub label: String,
    /// Consumption positive, generation negative (kWh per step).
    pub net_load_kwh: Vec<f64>,
    pub storage: StorageSpec,
    pub owns_pv: bool,
    pub owns_es: bool,
}

impl Prosumer {
    pub fn new(
        id: PlayerId,
        label: impl Into<String>,
        net_load_kwh: Vec<f64>,
        storage: StorageSpec,
        owns_pv: bool,
    ) -> Self {
        Prosumer {
            id,
            label: label.into(),
            net_load_kwh,
            owns_es: storage.has_storage(),
            storage,
            owns_pv,
        }
    }
}

/// Elementwise `load - pv`.
pub fn net_load(load_kwh: &[f64], pv_kwh: &[f64]) -> Result<Vec<f64>> {
    if load_kwh.len() != pv_kwh.len() {
        return Err(Error::LengthMismatch {
            what: "PV profile".into(),
            expected: load_kwh.len(),
            actual: pv_kwh.len(),
        });
    }
    Ok(load_kwh.iter().zip(pv_kwh).map(|(l, p)| l - p).collect())
}

/// How member batteries map to LP variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StorageLayout {
    /// One charge/discharge block per battery-owning member.
    PerMember,
    /// Members with bit-identical specs share one block scaled by their
    /// count. Under a shared meter this gives the same optimum as
    /// `PerMember` with far fewer variables.
    #[default]
    MergeIdentical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameOptions {
    pub layout: StorageLayout,
    pub cache: bool,
}

impl Default for GameOptions {
    fn default() -> Self {
        GameOptions {
            layout: StorageLayout::MergeIdentical,
            cache: true,
        }
    }
}

/// Battery block inside a coalition LP.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageBlock {
    pub members: Vec<PlayerId>,
    /// Spec of the block as a whole (capacity and limits scaled by member count).
    pub spec: StorageSpec,
    /// Index of `b+_{block,0}`; discharge variables start `steps` later.
    pub offset: usize,
}

/// LP for one coalition together with the variable layout needed to read
/// a schedule back out of it.
#[derive(Debug, Clone)]
pub struct CoalitionLp {
    pub problem: LpProblem,
    pub steps: usize,
    pub blocks: Vec<StorageBlock>,
    pub import_offset: usize,
    pub export_offset: usize,
    pub aggregate_load: Vec<f64>,
}

impl CoalitionLp {
    /// The point where every battery idles and the meter carries the raw
    /// aggregate load. Always feasible.
    pub fn idle_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.problem.num_vars()];
        for (t, &p) in self.aggregate_load.iter().enumerate() {
            if p >= 0.0 {
                x[self.import_offset + t] = p;
            } else {
                x[self.export_offset + t] = -p;
            }
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub members: Vec<PlayerId>,
    /// `charge_kwh[k][t]` for the k-th member in `members`.
    pub charge_kwh: Vec<Vec<f64>>,
    pub discharge_kwh: Vec<Vec<f64>>,
    pub total_cost: f64,
    /// Aggregate coalition net energy at the meter, batteries included.
    pub per_timestep_net: Vec<f64>,
}

pub struct EnergyGame {
    prosumers: Vec<Prosumer>,
    tariff: TariffSchedule,
    horizon: Horizon,
    options: GameOptions,
    storage_class: Vec<Option<usize>>,
    cache: ValueCache,
    singleton_costs: Vec<f64>,
    lp_solves: AtomicU64,
}

impl std::fmt::Debug for EnergyGame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnergyGame")
            .field("players", &self.prosumers.len())
            .field("horizon", &self.horizon)
            .field("options", &self.options)
            .finish_non_exhaustive()
    }
}

impl EnergyGame {
    pub fn new(prosumers: Vec<Prosumer>, tariff: TariffSchedule, horizon: Horizon) -> Result<Self> {
        Self::with_options(prosumers, tariff, horizon, GameOptions::default())
    }

    pub fn with_options(
        prosumers: Vec<Prosumer>,
        tariff: TariffSchedule,
        horizon: Horizon,
        options: GameOptions,
    ) -> Result<Self> {
        let n = prosumers.len();
        if n == 0 || n > MAX_PLAYERS {
            return Err(Error::invalid(format!("player count {n} outside 1..={MAX_PLAYERS}")));
        }
        if tariff.len() != horizon.steps {
            return Err(Error::LengthMismatch {
                what: "tariff".into(),
                expected: horizon.steps,
                actual: tariff.len(),
            });
        }
        for (i, p) in prosumers.iter().enumerate() {
            if p.id != PlayerId(i) {
                return Err(Error::invalid(format!("prosumer at index {i} has id {}", p.id)));
            }
            if p.net_load_kwh.len() != horizon.steps {
                return Err(Error::LengthMismatch {
                    what: format!("net load of prosumer {}", p.label),
                    expected: horizon.steps,
                    actual: p.net_load_kwh.len(),
                });
            }
            if p.net_load_kwh.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("net load of prosumer {} is not finite", p.label)));
            }
            p.storage.validate()?;
            if p.owns_es != p.storage.has_storage() {
                return Err(Error::invalid(format!(
                    "prosumer {}: ES ownership flag disagrees with capacity",
                    p.label
                )));
            }
        }

        let mut keys: Vec<[u64; 8]> = Vec::new();
        let storage_class = prosumers
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if !p.storage.is_active() {
                    return None;
                }
                Some(match options.layout {
                    StorageLayout::PerMember => i,
                    StorageLayout::MergeIdentical => {
                        let key = p.storage.key();
                        match keys.iter().position(|k| *k == key) {
                            Some(c) => c,
                            None => {
                                keys.push(key);
                                keys.len() - 1
                            }
                        }
                    }
                })
            })
            .collect();

        let mut game = EnergyGame {
            prosumers,
            tariff,
            horizon,
            options,
            storage_class,
            cache: if options.cache { ValueCache::new() } else { ValueCache::disabled() },
            singleton_costs: Vec::new(),
            lp_solves: AtomicU64::new(0),
        };
        game.singleton_costs = (0..n)
            .map(|i| game.coalitional_cost(Coalition::singleton(PlayerId(i))))
            .collect::<Result<_>>()?;
        Ok(game)
    }

    pub fn num_players(&self) -> usize {
        self.prosumers.len()
    }

    pub fn prosumers(&self) -> &[Prosumer] {
        &self.prosumers
    }

    pub fn tariff(&self) -> &TariffSchedule {
        &self.tariff
    }

    pub fn horizon(&self) -> &Horizon {
        &self.horizon
    }

    pub fn options(&self) -> GameOptions {
        self.options
    }

    pub fn singleton_costs(&self) -> &[f64] {
        &self.singleton_costs
    }

    pub fn grand_coalition(&self) -> Coalition {
        Coalition::grand(self.num_players())
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    pub fn lp_solves(&self) -> u64 {
        self.lp_solves.load(Ordering::Relaxed)
    }

    fn check_coalition(&self, c: Coalition) -> Result<()> {
        if c.fits(self.num_players()) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "coalition {:#x} has members outside a game of {}",
                c.mask(),
                self.num_players()
            )))
        }
    }

    /// Sum of member net loads per step, members in ascending order.
    pub fn aggregate_load(&self, c: Coalition) -> Vec<f64> {
        let mut total = vec![0.0; self.horizon.steps];
        for p in c.members() {
            for (acc, v) in total.iter_mut().zip(&self.prosumers[p.0].net_load_kwh) {
                *acc += v;
            }
        }
        total
    }

    fn blocks(&self, c: Coalition) -> Vec<StorageBlock> {
        let mut blocks: Vec<(usize, StorageBlock)> = Vec::new();
        for p in c.members() {
            let Some(class) = self.storage_class[p.0] else {
                continue;
            };
            match blocks.iter_mut().find(|(k, _)| *k == class) {
                Some((_, b)) => b.members.push(p),
                None => blocks.push((
                    class,
                    StorageBlock {
                        members: vec![p],
                        spec: self.prosumers[p.0].storage,
                        offset: 0,
                    },
                )),
            }
        }
        let k = self.horizon.steps;
        blocks
            .into_iter()
            .enumerate()
            .map(|(g, (_, mut b))| {
                let count = b.members.len() as f64;
                b.spec.capacity_kwh *= count;
                b.spec.charge_limit_kwh *= count;
                b.spec.discharge_limit_kwh *= count;
                b.offset = 2 * g * k;
                b
            })
            .collect()
    }

    /// The coalition's cost minimization as a linear program.
    ///
    /// Variables, in order: for each storage block `b+_t` then `b-_t`; then
    /// aggregate import `s+_t` and export `s-_t`. Rows: per-block cumulative
    /// energy bounds (upper then lower, one pair per prefix), then the meter
    /// balance per step, then the per-block cycle condition.
    pub fn build_lp(&self, c: Coalition) -> Result<CoalitionLp> {
        self.check_coalition(c)?;
        if c.is_empty() {
            return Err(Error::invalid("the empty coalition has no LP"));
        }
        let k = self.horizon.steps;
        let blocks = self.blocks(c);
        let import_offset = 2 * blocks.len() * k;
        let export_offset = import_offset + k;
        let mut p = LpProblem::new(export_offset + k);
        let aggregate_load = self.aggregate_load(c);

        for t in 0..k {
            p.objective[import_offset + t] = self.tariff.import_price[t];
            p.objective[export_offset + t] = -self.tariff.export_price[t];
        }

        for b in &blocks {
            let s = &b.spec;
            let (chg, dis) = (b.offset, b.offset + k);
            for t in 0..k {
                p.upper[chg + t] = s.charge_limit_kwh;
                p.upper[dis + t] = s.discharge_limit_kwh;
            }
            let headroom = (s.soc_max - s.soc0) * s.capacity_kwh;
            let floor_room = (s.soc0 - s.soc_min) * s.capacity_kwh;
            for last in 0..k {
                let stored = |sign: f64| -> Vec<(usize, f64)> {
                    (0..=last)
                        .flat_map(|t| [(chg + t, sign * s.eff_in), (dis + t, -sign / s.eff_out)])
                        .collect()
                };
                p.add_le(stored(1.0), headroom);
                p.add_le(stored(-1.0), floor_room);
            }
        }

        for (t, &load) in aggregate_load.iter().enumerate() {
            let mut terms = vec![(import_offset + t, 1.0), (export_offset + t, -1.0)];
            for b in &blocks {
                terms.push((b.offset + t, -1.0));
                terms.push((b.offset + k + t, 1.0));
            }
            p.add_eq(terms, load);
        }

        for b in &blocks {
            let s = &b.spec;
            let terms = (0..k)
                .flat_map(|t| [(b.offset + t, s.eff_in), (b.offset + k + t, -1.0 / s.eff_out)])
                .collect();
            p.add_eq(terms, 0.0);
        }

        Ok(CoalitionLp {
            problem: p,
            steps: k,
            blocks,
            import_offset,
            export_offset,
            aggregate_load,
        })
    }

    fn solve_lp(&self, c: Coalition) -> Result<(CoalitionLp, lp::LpSolution)> {
        let model = self.build_lp(c)?;
        let sol = lp::solve(&model.problem);
        self.lp_solves.fetch_add(1, Ordering::Relaxed);
        if !sol.is_optimal() {
            return Err(Error::Solver {
                coalition: c.mask(),
                status: sol.status,
            });
        }
        Ok((model, sol))
    }

    fn evaluate_cost(&self, c: Coalition) -> Result<f64> {
        if c.is_empty() {
            return Ok(0.0);
        }
        if c.members().all(|p| self.storage_class[p.0].is_none()) {
            // Nothing to schedule: the bill is fixed by the aggregate load.
            let load = self.aggregate_load(c);
            return Ok(load.iter().enumerate().map(|(t, &v)| self.tariff.step_cost(t, v)).sum());
        }
        Ok(self.solve_lp(c)?.1.objective)
    }

    /// Minimum aggregate bill of coalition `c`, memoized.
    pub fn coalitional_cost(&self, c: Coalition) -> Result<f64> {
        self.check_coalition(c)?;
        if c.is_empty() {
            return Ok(0.0);
        }
        self.cache.get_or_compute(c, |c| self.evaluate_cost(c))
    }

    /// Savings from forming `c`: sum of standalone costs minus the joint cost.
    pub fn coalition_value(&self, c: Coalition) -> Result<f64> {
        if c.is_empty() {
            return Ok(0.0);
        }
        let standalone: f64 = c.members().map(|p| self.singleton_costs[p.0]).sum();
        Ok(standalone - self.coalitional_cost(c)?)
    }

    pub fn marginal_contribution(&self, c: Coalition, i: PlayerId) -> Result<f64> {
        if i.0 >= self.num_players() {
            return Err(Error::invalid(format!("player {i} not in a game of {}", self.num_players())));
        }
        if c.contains(i) {
            return Err(Error::PlayerInCoalition {
                player: i.0,
                coalition: c.mask(),
            });
        }
        Ok(self.coalition_value(c.with(i))? - self.coalition_value(c)?)
    }

    /// Optimal joint schedule of `c`, disaggregated to members.
    ///
    /// Merged blocks are split evenly among their members. Simultaneous
    /// charging and discharging is netted so that each member's stored
    /// energy trajectory is unchanged.
    pub fn schedule(&self, c: Coalition) -> Result<ScheduleSolution> {
        self.check_coalition(c)?;
        let k = self.horizon.steps;
        let members: Vec<PlayerId> = c.members().collect();
        let mut charge = vec![vec![0.0; k]; members.len()];
        let mut discharge = vec![vec![0.0; k]; members.len()];
        if c.is_empty() {
            return Ok(ScheduleSolution {
                members,
                charge_kwh: charge,
                discharge_kwh: discharge,
                total_cost: 0.0,
                per_timestep_net: vec![0.0; k],
            });
        }
        let load = self.aggregate_load(c);
        let total_cost;
        if c.members().all(|p| self.storage_class[p.0].is_none()) {
            total_cost = load.iter().enumerate().map(|(t, &v)| self.tariff.step_cost(t, v)).sum();
        } else {
            let (model, sol) = self.solve_lp(c)?;
            total_cost = sol.objective;
            for b in &model.blocks {
                let share = b.members.len() as f64;
                for &p in &b.members {
                    let row = members.iter().position(|&m| m == p).expect("block member in coalition");
                    let s = &self.prosumers[p.0].storage;
                    for t in 0..k {
                        let up = sol.x[b.offset + t] / share;
                        let down = sol.x[b.offset + k + t] / share;
                        let (up, down) = net_flows(up, down, s);
                        charge[row][t] = up;
                        discharge[row][t] = down;
                    }
                }
            }
        }
        let per_timestep_net = (0..k)
            .map(|t| {
                load[t]
                    + (0..members.len())
                        .map(|r| charge[r][t] - discharge[r][t])
                        .sum::<f64>()
            })
            .collect();
        Ok(ScheduleSolution {
            members,
            charge_kwh: charge,
            discharge_kwh: discharge,
            total_cost,
            per_timestep_net,
        })
    }
}

/// Removes simultaneous charge and discharge while preserving the stored
/// energy change `up * eff_in - down / eff_out`.
fn net_flows(up: f64, down: f64, s: &StorageSpec) -> (f64, f64) {
    if up <= 0.0 || down <= 0.0 {
        return (up.max(0.0), down.max(0.0));
    }
    let stored = up * s.eff_in - down / s.eff_out;
    if stored >= 0.0 {
        (stored / s.eff_in, 0.0)
    } else {
        (0.0, -stored * s.eff_out)
    }
}

/// Aggregate bill `F_T` of a schedule: meter net per step priced by the tariff.
pub fn schedule_cost(tariff: &TariffSchedule, per_timestep_net: &[f64]) -> f64 {
    per_timestep_net
        .iter()
        .enumerate()
        .map(|(t, &v)| tariff.step_cost(t, v))
        .sum()
}

/// Worst violation (kWh) of the power, energy and cycle constraints and of
/// the meter balance by `s`, computed directly from member specs.
pub fn schedule_violation(game: &EnergyGame, s: &ScheduleSolution) -> f64 {
    let k = game.horizon().steps;
    let mut worst = 0.0f64;
    let mut meter = game.aggregate_load(Coalition::from_players(s.members.iter().map(|p| p.0)));
    for (r, p) in s.members.iter().enumerate() {
        let spec = &game.prosumers()[p.0].storage;
        let mut level = spec.soc0 * spec.capacity_kwh;
        for t in 0..k {
            let (up, down) = (s.charge_kwh[r][t], s.discharge_kwh[r][t]);
            worst = worst
                .max(-up)
                .max(-down)
                .max(up - spec.charge_limit_kwh)
                .max(down - spec.discharge_limit_kwh);
            level += up * spec.eff_in - down / spec.eff_out;
            worst = worst
                .max(spec.soc_min * spec.capacity_kwh - level)
                .max(level - spec.soc_max * spec.capacity_kwh);
            meter[t] += up - down;
        }
        worst = worst.max((level - spec.soc0 * spec.capacity_kwh).abs());
    }
    for (m, reported) in meter.iter().zip(&s.per_timestep_net) {
        worst = worst.max((m - reported).abs());
    }
    worst
}

impl CoalitionGame for EnergyGame {
    fn num_players(&self) -> usize {
        self.prosumers.len()
    }

    fn value(&self, c: Coalition) -> Result<f64> {
        self.coalition_value(c)
    }

    fn marginal(&self, c: Coalition, i: PlayerId) -> Result<f64> {
        self.marginal_contribution(c, i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn net_load_examples() {
        assert_eq!(net_load(&[0.5], &[2.0]).unwrap(), vec![-1.5]);
        assert_eq!(net_load(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(net_load(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        assert!(net_load(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn tariff_requires_import_above_export() {
        assert!(TariffSchedule::new(vec![0.1, 0.2], vec![0.05, 0.2]).is_err());
        assert!(TariffSchedule::new(vec![0.1], vec![-0.01]).is_err());
        assert!(TariffSchedule::new(vec![0.1], vec![0.05, 0.05]).is_err());
        let t = TariffSchedule::two_rate(&Horizon::day(), 0.072, 0.1681, 7.0, 0.0485).unwrap();
        assert_eq!(t.import_price[6], 0.072);
        assert_eq!(t.import_price[7], 0.1681);
        assert_eq!(t.import_price[23], 0.1681);
    }

    #[test]
    fn storage_validation() {
        let mut s = fixtures::paper_storage(1.0);
        s.soc0 = 0.1;
        assert!(s.validate().is_err());
        let mut z = StorageSpec::none();
        z.charge_limit_kwh = 1.0;
        assert!(z.validate().is_err());
        assert!(fixtures::paper_storage(0.5).validate().is_ok());
        assert_eq!(fixtures::paper_storage(0.5).charge_limit_kwh, 1.75);
    }

    #[test]
    fn single_prosumer_day_rate() {
        let horizon = Horizon::new(1, 1.0).unwrap();
        let tariff = TariffSchedule::new(vec![0.1681], vec![0.0485]).unwrap();
        let p = Prosumer::new(PlayerId(0), "0", vec![2.0], StorageSpec::none(), false);
        let g = EnergyGame::new(vec![p], tariff, horizon).unwrap();
        assert!(close(g.coalitional_cost(Coalition::grand(1)).unwrap(), 0.3362));
    }

    #[test]
    fn toy_pair_values() {
        let g = fixtures::toy_pair_game();
        let a = Coalition::from_players([0]);
        let b = Coalition::from_players([1]);
        let ab = Coalition::grand(2);
        assert!(close(g.coalitional_cost(a).unwrap(), 0.30));
        assert!(close(g.coalitional_cost(b).unwrap(), 0.0));
        assert!(close(g.coalitional_cost(ab).unwrap(), 0.0));
        assert!(close(g.coalition_value(ab).unwrap(), 0.30));
        assert_eq!(g.coalition_value(a).unwrap(), 0.0);
        assert_eq!(g.coalition_value(Coalition::EMPTY).unwrap(), 0.0);
        assert!(close(g.marginal_contribution(b, PlayerId(0)).unwrap(), 0.30));
        assert!(close(g.marginal_contribution(a, PlayerId(1)).unwrap(), 0.30));
        assert_eq!(g.marginal_contribution(Coalition::EMPTY, PlayerId(0)).unwrap(), 0.0);
        assert!(matches!(
            g.marginal_contribution(a, PlayerId(0)),
            Err(Error::PlayerInCoalition { .. })
        ));
    }

    #[test]
    fn lp_variable_counts() {
        let g = fixtures::toy_pair_game();
        let single = g.build_lp(Coalition::from_players([0])).unwrap();
        assert_eq!(single.problem.num_vars(), 4);
        assert!(g.build_lp(Coalition::EMPTY).is_err());

        // Three members with distinct batteries, K = 3.
        let horizon = Horizon::new(3, 1.0).unwrap();
        let tariff = TariffSchedule::new(vec![0.2; 3], vec![0.05; 3]).unwrap();
        let players = (0..3)
            .map(|i| {
                let mut s = fixtures::paper_storage(1.0);
                s.capacity_kwh += i as f64;
                Prosumer::new(PlayerId(i), i.to_string(), vec![1.0, -1.0, 0.5], s, false)
            })
            .collect::<Vec<_>>();
        let g = EnergyGame::new(players.clone(), tariff.clone(), horizon).unwrap();
        assert_eq!(g.build_lp(Coalition::grand(3)).unwrap().problem.num_vars(), 2 * 3 * 3 + 2 * 3);

        // Identical batteries merge under the default layout only.
        let same: Vec<Prosumer> = players
            .iter()
            .map(|p| Prosumer { storage: fixtures::paper_storage(1.0), ..p.clone() })
            .collect();
        let merged = EnergyGame::new(same.clone(), tariff.clone(), horizon).unwrap();
        assert_eq!(merged.build_lp(Coalition::grand(3)).unwrap().problem.num_vars(), 2 * 3 + 2 * 3);
        let opts = GameOptions { layout: StorageLayout::PerMember, cache: true };
        let split = EnergyGame::with_options(same, tariff, horizon, opts).unwrap();
        assert_eq!(split.build_lp(Coalition::grand(3)).unwrap().problem.num_vars(), 2 * 3 * 3 + 2 * 3);
        let (a, b) = (
            merged.coalitional_cost(Coalition::grand(3)).unwrap(),
            split.coalitional_cost(Coalition::grand(3)).unwrap(),
        );
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn idle_point_is_feasible() {
        let g = fixtures::toy_pair_game();
        for mask in 1..4 {
            let model = g.build_lp(Coalition::from_mask(mask)).unwrap();
            let r = lp::check_feasible(&model.problem, &model.idle_point()).unwrap();
            assert!(r.max_violation <= 1e-12);
        }
    }

    #[test]
    fn battery_arbitrage_never_pays_under_export_below_import() {
        let horizon = Horizon::new(2, 1.0).unwrap();
        let tariff = TariffSchedule::new(vec![0.072, 0.1681], vec![0.0485, 0.0485]).unwrap();
        let spec = StorageSpec {
            capacity_kwh: 1.0,
            charge_limit_kwh: 1.0,
            discharge_limit_kwh: 1.0,
            eff_in: 1.0,
            eff_out: 1.0,
            soc0: 0.0,
            soc_min: 0.0,
            soc_max: 1.0,
        };
        let p = Prosumer::new(PlayerId(0), "0", vec![0.0, 0.0], spec, false);
        let g = EnergyGame::new(vec![p], tariff, horizon).unwrap();
        let s = g.schedule(Coalition::grand(1)).unwrap();
        assert!(s.total_cost.abs() < 1e-12);
        assert!(s.charge_kwh[0].iter().chain(&s.discharge_kwh[0]).all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn schedules_validate() {
        let g = fixtures::toy_pair_game();
        let s = g.schedule(Coalition::grand(2)).unwrap();
        assert!(schedule_violation(&g, &s) <= 1e-7);
        assert!((schedule_cost(g.tariff(), &s.per_timestep_net) - s.total_cost).abs() < 1e-12);
        // B absorbs A's surplus in step 0 and releases it in step 1.
        assert!((s.charge_kwh[1][0] - 2.0).abs() < 1e-9);
        assert!((s.discharge_kwh[1][1] - 2.0).abs() < 1e-9);

        let mut bad = s.clone();
        bad.charge_kwh[1][0] = 2.5;
        assert!(schedule_violation(&g, &bad) > 0.4);
    }

    #[test]
    fn netting_preserves_stored_energy() {
        let s = fixtures::paper_storage(1.0);
        let (u, d) = net_flows(1.0, 0.5, &s);
        assert_eq!(d, 0.0);
        assert!((u * s.eff_in - (1.0 * s.eff_in - 0.5 / s.eff_out)).abs() < 1e-12);
        assert_eq!(net_flows(0.0, 0.3, &s), (0.0, 0.3));
    }

    #[test]
    fn rejects_inconsistent_prosumers() {
        let horizon = Horizon::new(2, 1.0).unwrap();
        let tariff = TariffSchedule::new(vec![0.2; 2], vec![0.1; 2]).unwrap();
        let wrong_len = Prosumer::new(PlayerId(0), "0", vec![1.0], StorageSpec::none(), false);
        assert!(EnergyGame::new(vec![wrong_len], tariff.clone(), horizon).is_err());
        let mut flag = Prosumer::new(PlayerId(0), "0", vec![1.0, 1.0], StorageSpec::none(), false);
        flag.owns_es = true;
        assert!(EnergyGame::new(vec![flag], tariff.clone(), horizon).is_err());
        let wrong_id = Prosumer::new(PlayerId(3), "0", vec![1.0, 1.0], StorageSpec::none(), false);
        assert!(EnergyGame::new(vec![wrong_id], tariff, horizon).is_err());
    }

    #[test]
    fn cache_counts_lookups() {
        let g = fixtures::toy_pair_game();
        let before = g.cache_stats();
        assert_eq!(before.misses, 2);
        g.coalitional_cost(Coalition::grand(2)).unwrap();
        g.coalitional_cost(Coalition::grand(2)).unwrap();
        let after = g.cache_stats();
        assert_eq!(after.misses, 3);
        assert_eq!(after.hits, before.hits + 1);
    }
}
