//! Small reference scenarios shared by tests, examples and the demo.

use crate::coalition::PlayerId;
use crate::energy::{EnergyGame, Horizon, Prosumer, StorageSpec, TariffSchedule};

/// Two players over two hours. Player 0 exports 2 kWh then imports 2 kWh and
/// has no battery; player 1 has no load and a lossless 2 kWh battery that
/// starts empty. Alone, player 0 pays 0.30; together the pair pays nothing.
pub fn toy_pair_game() -> EnergyGame {
    let horizon = Horizon::new(2, 1.0).expect("valid horizon");
    let tariff = TariffSchedule::new(vec![0.10, 0.20], vec![0.05, 0.05]).expect("valid tariff");
    let battery = StorageSpec {
        capacity_kwh: 2.0,
        charge_limit_kwh: 2.0,
        discharge_limit_kwh: 2.0,
        eff_in: 1.0,
        eff_out: 1.0,
        soc0: 0.0,
        soc_min: 0.0,
        soc_max: 1.0,
    };
    let prosumers = vec![
        Prosumer::new(PlayerId(0), "A", vec![-2.0, 2.0], StorageSpec::none(), true),
        Prosumer::new(PlayerId(1), "B", vec![0.0, 0.0], battery, false),
    ];
    EnergyGame::new(prosumers, tariff, horizon).expect("valid toy game")
}

/// Home battery: 7 kWh, 3.5 kW charge, 3.2 kW discharge, 95% each way,
/// starting at 50% within a 20-95% window.
pub fn paper_storage(dt_hours: f64) -> StorageSpec {
    StorageSpec {
        capacity_kwh: 7.0,
        charge_limit_kwh: 3.5 * dt_hours,
        discharge_limit_kwh: 3.2 * dt_hours,
        eff_in: 0.95,
        eff_out: 0.95,
        soc0: 0.5,
        soc_min: 0.2,
        soc_max: 0.95,
    }
}
