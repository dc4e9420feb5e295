//! Exhaustive grid search over one battery's schedule, independent of the
//! LP formulation.

use p2p_shapley::coalition::PlayerId;
use p2p_shapley::energy::{EnergyGame, Horizon, Prosumer, StorageSpec, TariffSchedule};
use rand::Rng;

/// Brute-force minimum bill of one battery owner with net load `load`.
/// The first `K - 1` grid-side flows range over a grid of spacing `step`;
/// the last flow is fixed by the cycle condition.
pub fn grid_search(load: &[f64], spec: &StorageSpec, tariff: &TariffSchedule, step: f64) -> f64 {
    let k = load.len();
    let stored = |b: f64| if b >= 0.0 { b * spec.eff_in } else { b / spec.eff_out };
    let lo = -spec.discharge_limit_kwh;
    let hi = spec.charge_limit_kwh;
    let count = ((hi - lo) / step).round() as i64;
    let mut best = f64::INFINITY;
    let mut flows = vec![0.0; k];
    let cells = (count + 1).pow((k - 1) as u32);
    for cell in 0..cells {
        let mut rem = cell;
        for f in flows.iter_mut().take(k - 1) {
            *f = (lo + (rem % (count + 1)) as f64 * step).min(hi);
            rem /= count + 1;
        }
        let net_stored: f64 = flows[..k - 1].iter().map(|&b| stored(b)).sum();
        // Last flow restores the initial level.
        let need = -net_stored;
        let last = if need >= 0.0 { need / spec.eff_in } else { need * spec.eff_out };
        if last > hi + 1e-12 || last < lo - 1e-12 {
            continue;
        }
        flows[k - 1] = last;
        let mut level = spec.soc0 * spec.capacity_kwh;
        let mut ok = true;
        for &b in &flows {
            level += stored(b);
            if level < spec.soc_min * spec.capacity_kwh - 1e-12
                || level > spec.soc_max * spec.capacity_kwh + 1e-12
            {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let cost: f64 = (0..k).map(|t| tariff.step_cost(t, load[t] + flows[t])).sum();
        best = best.min(cost);
    }
    best
}

pub fn single_owner_game(load: Vec<f64>, spec: StorageSpec, tariff: TariffSchedule) -> EnergyGame {
    let horizon = Horizon::new(load.len(), 1.0).unwrap();
    let p = Prosumer::new(PlayerId(0), "0", load, spec, false);
    EnergyGame::new(vec![p], tariff, horizon).unwrap()
}

pub fn grid_spec(rng: &mut impl Rng) -> StorageSpec {
    // Limits on a 0.05 grid so the brute-force grid hits them exactly.
    let capacity = rng.gen_range(1..=8) as f64 * 0.5;
    let soc_min = rng.gen_range(0.0..0.3);
    let soc_max = rng.gen_range(0.7..=1.0);
    StorageSpec {
        capacity_kwh: capacity,
        charge_limit_kwh: rng.gen_range(1..=30) as f64 * 0.05,
        discharge_limit_kwh: rng.gen_range(1..=30) as f64 * 0.05,
        eff_in: rng.gen_range(0.8..=1.0),
        eff_out: rng.gen_range(0.8..=1.0),
        soc0: rng.gen_range(soc_min..=soc_max),
        soc_min,
        soc_max,
    }
}

pub fn grid_tariff(rng: &mut impl Rng, k: usize) -> TariffSchedule {
    let export: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..0.1)).collect();
    let import = export.iter().map(|e| e + rng.gen_range(0.01..0.3)).collect();
    TariffSchedule::new(import, export).unwrap()
}

/// Slack between a grid optimum with spacing `step` and the true optimum.
pub fn grid_slack(spec: &StorageSpec, tariff: &TariffSchedule, step: f64) -> f64 {
    let r_max = tariff.import_price.iter().cloned().fold(0.0, f64::max);
    let lipschitz = r_max * (1.0 + 1.0 / (spec.eff_in * spec.eff_out));
    lipschitz * step * tariff.len() as f64 * 2.0
}
