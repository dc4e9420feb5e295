//! Game builders shared by the integration tests.
#![allow(dead_code)]

pub mod oracle;

use p2p_shapley::energy::{EnergyGame, GameOptions, Horizon, Prosumer, StorageSpec, TariffSchedule};
use p2p_shapley::experiment::synthetic::{generate_synthetic_scenario, DayTemplates, SyntheticSpec};
use p2p_shapley::fixtures::paper_storage;
use p2p_shapley::PlayerId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_storage(rng: &mut ChaCha8Rng) -> StorageSpec {
    let soc_min = rng.gen_range(0.0..0.3);
    let soc_max = rng.gen_range(0.7..1.0);
    StorageSpec {
        capacity_kwh: rng.gen_range(0.5..4.0),
        charge_limit_kwh: rng.gen_range(0.2..2.0),
        discharge_limit_kwh: rng.gen_range(0.2..2.0),
        eff_in: rng.gen_range(0.8..1.0),
        eff_out: rng.gen_range(0.8..1.0),
        soc0: rng.gen_range(soc_min..soc_max),
        soc_min,
        soc_max,
    }
}

pub fn random_tariff(rng: &mut ChaCha8Rng, steps: usize) -> TariffSchedule {
    let import: Vec<f64> = (0..steps).map(|_| rng.gen_range(0.05..0.30)).collect();
    let export = import.iter().map(|&im| im * rng.gen_range(0.0..0.9)).collect();
    TariffSchedule::new(import, export).unwrap()
}

/// Random prosumers over `steps` hourly steps; about half own a battery.
pub fn random_prosumers(rng: &mut ChaCha8Rng, n: usize, steps: usize) -> Vec<Prosumer> {
    (0..n)
        .map(|i| {
            let net: Vec<f64> = (0..steps).map(|_| rng.gen_range(-2.5..2.5)).collect();
            let es = if rng.gen_bool(0.5) { random_storage(rng) } else { StorageSpec::none() };
            let pv = net.iter().any(|&v| v < 0.0);
            Prosumer::new(PlayerId(i), format!("p{i}"), net, es, pv)
        })
        .collect()
}

pub fn random_game_with(seed: u64, n: usize, steps: usize, options: GameOptions) -> EnergyGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tariff = random_tariff(&mut rng, steps);
    let prosumers = random_prosumers(&mut rng, n, steps);
    EnergyGame::with_options(prosumers, tariff, Horizon::new(steps, 1.0).unwrap(), options).unwrap()
}

pub fn random_game(seed: u64, n: usize, steps: usize) -> EnergyGame {
    random_game_with(seed, n, steps, GameOptions::default())
}

/// Day-long synthetic community on the default two-rate tariff with the
/// default home battery.
pub fn synthetic_game(n: usize, pv_rate: f64, es_rate: f64, seed: u64) -> EnergyGame {
    let horizon = Horizon::day();
    let spec = SyntheticSpec {
        players: n,
        pv_rate,
        es_rate,
        seed,
    };
    let prosumers =
        generate_synthetic_scenario(&spec, &horizon, &DayTemplates::default(), &paper_storage(1.0)).unwrap();
    let tariff = TariffSchedule::two_rate(&horizon, 0.072, 0.1681, 7.0, 0.0485).unwrap();
    EnergyGame::new(prosumers, tariff, horizon).unwrap()
}

pub fn mean_abs_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}
