//! Running configured scenarios, adoption sweeps and error comparison.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::EnergyGame;
use crate::error::{Error, Result};
use crate::experiment::config::{ProsumerSource, ReportFormat, ScenarioConfig};
use crate::experiment::report::{write_report, ReportRow, RunReport, RunSummary};
use crate::shapley::{
    estimate_coalitional_stratified_optimal, estimate_simple_random, estimate_stratified_uniform,
    exact_shapley_capped, exact_shapley_permutations, Mode, SampleBudget, ShapleyResult,
};

/// Run settings independent of the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSettings {
    pub mode: Mode,
    pub samples_per_player: u64,
    pub seed: u64,
    pub exact_cap: usize,
}

impl RunSettings {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        RunSettings {
            mode: cfg.run.mode,
            samples_per_player: cfg.run.samples_per_player,
            seed: cfg.run.seed,
            exact_cap: cfg.caps.exact_players,
        }
    }
}

pub fn build_game(cfg: &ScenarioConfig) -> Result<EnergyGame> {
    let sc = cfg.scenario()?;
    EnergyGame::new(sc.prosumers, sc.tariff, sc.horizon)
}

/// Dispatches on `settings.mode`.
pub fn compute_payoffs(game: &EnergyGame, settings: &RunSettings) -> Result<ShapleyResult> {
    let budget = SampleBudget::per_player(settings.samples_per_player, game.num_players(), settings.seed);
    match settings.mode {
        Mode::Exact => exact_shapley_capped(game, settings.exact_cap),
        Mode::ExactPermutations => exact_shapley_permutations(game),
        Mode::Permutation => estimate_simple_random(game, budget),
        Mode::Stratified => estimate_stratified_uniform(game, budget),
        Mode::CoalitionalStratified => estimate_coalitional_stratified_optimal(game, budget),
    }
}

/// Collects the rows and summary for a finished computation.
pub fn assemble_report(game: &EnergyGame, result: &ShapleyResult, settings: &RunSettings) -> RunReport {
    let rows = game
        .prosumers()
        .iter()
        .zip(game.singleton_costs())
        .zip(&result.values)
        .map(|((p, &cost), &payoff)| ReportRow {
            prosumer_id: p.label.clone(),
            owns_pv: p.owns_pv,
            owns_es: p.owns_es,
            standalone_cost: cost,
            payoff,
        })
        .collect();
    let stats = game.cache_stats();
    let standalone: f64 = game.singleton_costs().iter().sum();
    let summary = RunSummary {
        players: game.num_players(),
        grand_value: result.grand_value,
        grand_cost: standalone - result.grand_value,
        efficiency_residual: result.efficiency_residual,
        mode: result.mode,
        seed: result.seed,
        budget: result.budget,
        samples_per_player: result.budget.map(|_| settings.samples_per_player),
        unused_budget: result.unused_budget,
        elapsed_seconds: result.elapsed.as_secs_f64(),
        lp_solves: game.lp_solves(),
        cache_hits: stats.hits,
        cache_misses: stats.misses,
        cache_hit_rate: stats.hit_rate(),
    };
    RunReport { rows, summary }
}

/// Runs `f` on a pool of `threads` workers, or the global pool for `None`.
/// Results do not depend on the thread count.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
        return Ok(pool.install(f));
    }
    if threads == Some(0) {
        return Err(Error::Config("threads must be at least 1".into()));
    }
    Ok(f())
}

/// Builds the game, computes payoffs per the `[run]` table and reports.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<RunReport> {
    let settings = RunSettings::from_config(cfg);
    with_threads(cfg.run.threads, || {
        let game = build_game(cfg)?;
        let result = compute_payoffs(&game, &settings)?;
        Ok(assemble_report(&game, &result, &settings))
    })?
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resource {
    Pv,
    Es,
    /// Both rates move together.
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    #[serde(default)]
    pub label: Option<String>,
    pub pv_rate: f64,
    pub es_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    #[serde(default)]
    pub label: Option<String>,
    pub vary: Resource,
    /// Rate of the resource that does not vary (ignored for `both`).
    #[serde(default)]
    pub fixed: f64,
    pub rates: Vec<f64>,
}

/// Explicit points, then one point per rate of each axis, in file order.
///
/// ```toml
/// [[points]]
/// pv_rate = 0.3
/// es_rate = 0.1
///
/// [[axes]]
/// label = "es-varies"
/// vary = "es"
/// fixed = 0.3
/// rates = [0.1, 0.2, 0.3, 0.4, 0.5]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub points: Vec<SweepPoint>,
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Config(format!("sweep: {}", e.message())))?;
        if spec.expand().is_empty() {
            return Err(Error::Config("sweep: no points".into()));
        }
        for p in spec.expand() {
            for r in [p.pv_rate, p.es_rate] {
                if !(0.0..=1.0).contains(&r) {
                    return Err(Error::Config(format!("sweep: rate {r} outside [0, 1]")));
                }
            }
        }
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn expand(&self) -> Vec<SweepPoint> {
        let mut out = self.points.clone();
        for axis in &self.axes {
            out.extend(axis.rates.iter().map(|&r| {
                let (pv_rate, es_rate) = match axis.vary {
                    Resource::Pv => (r, axis.fixed),
                    Resource::Es => (axis.fixed, r),
                    Resource::Both => (r, r),
                };
                SweepPoint {
                    label: axis.label.clone(),
                    pv_rate,
                    es_rate,
                }
            }));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub point: SweepPoint,
    pub report: RunReport,
}

/// One run per sweep point with the synthetic adoption rates replaced.
/// Loads and the ownership ranking depend only on the seed, so owners at a
/// lower rate stay owners at every higher rate.
pub fn sweep_adoption(cfg: &ScenarioConfig, spec: &SweepSpec) -> Result<Vec<SweepResult>> {
    if !matches!(cfg.prosumers, ProsumerSource::Synthetic { .. }) {
        return Err(Error::Config("an adoption sweep needs a synthetic prosumer source".into()));
    }
    spec.expand()
        .into_iter()
        .map(|point| {
            let mut c = cfg.clone();
            if let ProsumerSource::Synthetic { pv_rate, es_rate, .. } = &mut c.prosumers {
                *pv_rate = point.pv_rate;
                *es_rate = point.es_rate;
            }
            c.validate()?;
            Ok(SweepResult {
                report: run_experiment(&c)?,
                point,
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Writes `point_NNN.<ext>` reports plus `sweep_index.csv`, whose columns
/// include the mean payoff of each ownership type.
pub fn write_sweep(results: &[SweepResult], dir: impl AsRef<Path>, format: ReportFormat) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let ext = match format {
        ReportFormat::Csv => "csv",
        ReportFormat::JsonLines => "jsonl",
    };
    let mut index = String::from(
        "point,label,pv_rate,es_rate,grand_value,mean_payoff_none,mean_payoff_pv,mean_payoff_es,mean_payoff_both,report\n",
    );
    for (k, r) in results.iter().enumerate() {
        let file = format!("point_{k:03}.{ext}");
        write_report(&r.report, dir.join(&file), format)?;
        let [none, pv, es, both] = r.report.type_means();
        let _ = writeln!(
            index,
            "{k},{},{:.6},{:.6},{:.6},{},{},{},{},{file}",
            r.point.label.as_deref().unwrap_or(""),
            r.point.pv_rate,
            r.point.es_rate,
            r.report.summary.grand_value,
            fmt_opt(none),
            fmt_opt(pv),
            fmt_opt(es),
            fmt_opt(both),
        );
    }
    let path = dir.join("sweep_index.csv");
    std::fs::write(&path, index)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub per_player: Vec<f64>,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
    /// Mean of `|payoff|` in the exact report.
    pub mean_abs_exact: f64,
    /// Mean absolute error divided by the average share `v(N) / N`.
    pub mae_fraction_of_share: f64,
}

/// Reports that agree to printed precision are treated as the same game.
const IDENTITY_TOL: f64 = 2e-6;

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= IDENTITY_TOL * a.abs().max(1.0)
}

/// Per-player error of `estimated` against `exact`. Both must describe the
/// same prosumers with the same standalone costs and grand value.
pub fn estimation_error(exact: &RunReport, estimated: &RunReport) -> Result<ErrorMetrics> {
    if exact.rows.len() != estimated.rows.len() {
        return Err(Error::MismatchedGames(format!(
            "{} players versus {}",
            exact.rows.len(),
            estimated.rows.len()
        )));
    }
    for (a, b) in exact.rows.iter().zip(&estimated.rows) {
        if a.prosumer_id != b.prosumer_id || a.owns_pv != b.owns_pv || a.owns_es != b.owns_es {
            return Err(Error::MismatchedGames(format!(
                "prosumer {:?} does not match {:?}",
                a.prosumer_id, b.prosumer_id
            )));
        }
        if !same(a.standalone_cost, b.standalone_cost) {
            return Err(Error::MismatchedGames(format!(
                "standalone cost of {:?} is {} versus {}",
                a.prosumer_id, a.standalone_cost, b.standalone_cost
            )));
        }
    }
    if !same(exact.summary.grand_value, estimated.summary.grand_value) {
        return Err(Error::MismatchedGames(format!(
            "grand coalition value {} versus {}",
            exact.summary.grand_value, estimated.summary.grand_value
        )));
    }
    let n = exact.rows.len() as f64;
    let per_player: Vec<f64> = exact
        .rows
        .iter()
        .zip(&estimated.rows)
        .map(|(a, b)| (a.payoff - b.payoff).abs())
        .collect();
    let mean_abs_error = per_player.iter().sum::<f64>() / n;
    Ok(ErrorMetrics {
        max_abs_error: per_player.iter().cloned().fold(0.0, f64::max),
        mean_abs_exact: exact.rows.iter().map(|r| r.payoff.abs()).sum::<f64>() / n,
        mae_fraction_of_share: mean_abs_error / (exact.summary.grand_value / n),
        mean_abs_error,
        per_player,
    })
}
