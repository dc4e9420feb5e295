//! Browser bindings for the payoff engine.
//!
//! Each export takes plain numbers and returns a JSON string, so the page
//! needs no generated TypeScript types. The same functions are callable
//! natively, which is how the tests exercise them.

use p2p_shapley::experiment::run::{assemble_report, build_game, compute_payoffs, RunSettings};
use p2p_shapley::experiment::ScenarioConfig;
use p2p_shapley::shapley::{
    estimate_coalitional_stratified_optimal, estimate_simple_random, estimate_stratified_uniform, exact_shapley,
};
use p2p_shapley::{EnergyGame, Error, Mode, SampleBudget, ShapleyResult};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest community the page computes exactly.
pub const EXACT_LIMIT: usize = 10;
/// Largest community the page accepts at all.
pub const PLAYER_LIMIT: usize = 40;

/// Sample sizes on the error curve.
pub const CURVE_SAMPLES: [u64; 5] = [20, 50, 100, 200, 400];

fn community_config(players: usize, pv_rate: f64, es_rate: f64, seed: u64) -> Result<ScenarioConfig, Error> {
    if players == 0 || players > PLAYER_LIMIT {
        return Err(Error::Config(format!("players must be between 1 and {PLAYER_LIMIT}")));
    }
    let text = format!(
        "[prosumers]\nkind = \"synthetic\"\ncount = {players}\npv_rate = {pv_rate:?}\nes_rate = {es_rate:?}\nseed = {seed}\n"
    );
    ScenarioConfig::from_toml_str(&text, ".")
}

fn community(players: usize, pv_rate: f64, es_rate: f64, seed: u64) -> Result<EnergyGame, Error> {
    build_game(&community_config(players, pv_rate, es_rate, seed)?)
}

/// Payoff report for a synthetic community. Small communities are solved
/// exactly; larger ones use the two-stage stratified estimator.
pub fn payoffs_json(
    players: usize,
    pv_rate: f64,
    es_rate: f64,
    seed: u64,
    samples_per_player: u64,
) -> Result<String, Error> {
    let cfg = community_config(players, pv_rate, es_rate, seed)?;
    let game = build_game(&cfg)?;
    let settings = RunSettings {
        mode: if players <= EXACT_LIMIT { Mode::Exact } else { Mode::CoalitionalStratified },
        samples_per_player,
        seed,
        exact_cap: EXACT_LIMIT,
    };
    let result = compute_payoffs(&game, &settings)?;
    Ok(serde_json::to_string(&assemble_report(&game, &result, &settings))?)
}

#[derive(Serialize)]
struct Series {
    name: &'static str,
    /// Mean absolute error over the runs, as a fraction of mean |payoff|.
    relative_mae: Vec<f64>,
}

#[derive(Serialize)]
struct ErrorCurve {
    samples_per_player: Vec<u64>,
    exact: Vec<f64>,
    series: Vec<Series>,
}

type Estimator = fn(&EnergyGame, SampleBudget) -> p2p_shapley::Result<ShapleyResult>;

/// Relative error of each estimator against the exact values, averaged
/// over `runs` sampling seeds at each size in [`CURVE_SAMPLES`].
pub fn error_curve_json(players: usize, pv_rate: f64, es_rate: f64, seed: u64, runs: u64) -> Result<String, Error> {
    if !(2..=EXACT_LIMIT).contains(&players) {
        return Err(Error::Config(format!("the error curve needs 2 to {EXACT_LIMIT} players")));
    }
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let game = community(players, pv_rate, es_rate, seed)?;
    let exact = exact_shapley(&game)?.values;
    let scale = exact.iter().map(|v| v.abs()).sum::<f64>() / players as f64;
    let estimators: [(&'static str, Estimator); 3] = [
        ("simple random", estimate_simple_random),
        ("uniform stratified", estimate_stratified_uniform),
        ("two-stage stratified", estimate_coalitional_stratified_optimal),
    ];
    let mut series = Vec::new();
    for (name, est) in estimators {
        let mut relative_mae = Vec::new();
        for spp in CURVE_SAMPLES {
            let mut total = 0.0;
            for r in 0..runs {
                let values = est(&game, SampleBudget::per_player(spp, players, r))?.values;
                total += values.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>() / players as f64;
            }
            relative_mae.push(if scale > 0.0 { total / runs as f64 / scale } else { 0.0 });
        }
        series.push(Series { name, relative_mae });
    }
    Ok(serde_json::to_string(&ErrorCurve {
        samples_per_player: CURVE_SAMPLES.to_vec(),
        exact,
        series,
    })?)
}

#[derive(Serialize)]
struct PooledSchedule {
    hour: Vec<f64>,
    import_price: Vec<f64>,
    /// Summed net load with every battery idle.
    idle_net_kwh: Vec<f64>,
    /// Net load at the shared meter with the batteries scheduled jointly.
    pooled_net_kwh: Vec<f64>,
    /// Total charging minus total discharging, grid side.
    battery_kwh: Vec<f64>,
    standalone_cost: f64,
    pooled_cost: f64,
}

/// Grand-coalition battery schedule against the idle baseline.
pub fn schedule_json(players: usize, pv_rate: f64, es_rate: f64, seed: u64) -> Result<String, Error> {
    let game = community(players, pv_rate, es_rate, seed)?;
    let grand = game.grand_coalition();
    let s = game.schedule(grand)?;
    let steps = game.horizon().steps;
    let battery_kwh = (0..steps)
        .map(|t| {
            s.charge_kwh.iter().map(|c| c[t]).sum::<f64>() - s.discharge_kwh.iter().map(|d| d[t]).sum::<f64>()
        })
        .collect();
    Ok(serde_json::to_string(&PooledSchedule {
        hour: (0..steps).map(|t| game.horizon().hour_of(t)).collect(),
        import_price: game.tariff().import_price.clone(),
        idle_net_kwh: game.aggregate_load(grand),
        pooled_net_kwh: s.per_timestep_net.clone(),
        battery_kwh,
        standalone_cost: game.singleton_costs().iter().sum(),
        pooled_cost: s.total_cost,
    })?)
}

fn to_js(r: Result<String, Error>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn community_payoffs(
    players: usize,
    pv_rate: f64,
    es_rate: f64,
    seed: u32,
    samples_per_player: u32,
) -> Result<String, JsValue> {
    to_js(payoffs_json(players, pv_rate, es_rate, seed.into(), samples_per_player.into()))
}

#[wasm_bindgen]
pub fn estimator_error_curve(players: usize, pv_rate: f64, es_rate: f64, seed: u32, runs: u32) -> Result<String, JsValue> {
    to_js(error_curve_json(players, pv_rate, es_rate, seed.into(), runs.into()))
}

#[wasm_bindgen]
pub fn pooled_schedule(players: usize, pv_rate: f64, es_rate: f64, seed: u32) -> Result<String, JsValue> {
    to_js(schedule_json(players, pv_rate, es_rate, seed.into()))
}
