//! Seeded synthetic prosumer populations.
//!
//! Loads follow a day curve with a small overnight base, a morning bump and
//! a larger evening peak; PV follows a midday bell. Each prosumer gets its
//! own scaling and shifts. Loads, PV ownership and ES ownership come from
//! three independent streams of the same seed, so changing an adoption rate
//! never changes anyone's load, and ownership sets are nested: the owners at
//! a lower rate are always a subset of the owners at a higher rate.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coalition::PlayerId;
use crate::energy::{net_load, Horizon, Prosumer, StorageSpec};
use crate::error::{Error, Result};

const LOAD_STREAM: u64 = 1;
const PV_STREAM: u64 = 2;
const ES_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayTemplates {
    /// Overnight base demand (kW).
    pub base_kw: f64,
    pub morning_peak_kw: f64,
    pub morning_hour: f64,
    pub evening_peak_kw: f64,
    pub evening_hour: f64,
    /// Nameplate PV rating (kW); midday output peaks at 80% of it.
    pub pv_rating_kw: f64,
    pub pv_peak_hour: f64,
    /// Standard deviation of the PV bell (hours).
    pub pv_width_hours: f64,
}

impl Default for DayTemplates {
    fn default() -> Self {
        DayTemplates {
            base_kw: 0.3,
            morning_peak_kw: 0.9,
            morning_hour: 7.5,
            evening_peak_kw: 1.6,
            evening_hour: 18.5,
            pv_rating_kw: 4.0,
            pv_peak_hour: 13.0,
            pv_width_hours: 2.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub players: usize,
    pub pv_rate: f64,
    pub es_rate: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.players == 0 || self.players > crate::coalition::MAX_PLAYERS {
            return Err(Error::invalid(format!(
                "synthetic player count {} outside 1..=64",
                self.players
            )));
        }
        for (name, r) in [("pv_rate", self.pv_rate), ("es_rate", self.es_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("{name} {r} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Owners for a resource at `rate`: the first `round(n * rate)` players of a
/// seeded ranking that does not depend on the rate.
pub fn ownership(seed: u64, n: usize, rate: f64, pv: bool) -> Vec<bool> {
    let mut rng = stream(seed, if pv { PV_STREAM } else { ES_STREAM });
    let mut ranking: Vec<usize> = (0..n).collect();
    ranking.shuffle(&mut rng);
    let owners = ((n as f64) * rate).round() as usize;
    let mut owns = vec![false; n];
    for &p in ranking.iter().take(owners) {
        owns[p] = true;
    }
    owns
}

fn bump(hour: f64, centre: f64, width: f64) -> f64 {
    let z = (hour - centre) / width;
    (-0.5 * z * z).exp()
}

/// Per-step household consumption (kWh) of every player.
pub fn load_profiles(seed: u64, n: usize, horizon: &Horizon, t: &DayTemplates) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, LOAD_STREAM);
    (0..n)
        .map(|_| {
            let scale = rng.gen_range(0.6..1.4);
            let morning = rng.gen_range(0.5..1.5);
            let evening = rng.gen_range(0.6..1.4);
            let shift_m = rng.gen_range(-1.0..1.0);
            let shift_e = rng.gen_range(-1.5..1.5);
            (0..horizon.steps)
                .map(|k| {
                    let h = horizon.hour_of(k) + 0.5 * horizon.dt_hours;
                    let kw = scale
                        * (t.base_kw
                            + morning * t.morning_peak_kw * bump(h, t.morning_hour + shift_m, 1.0)
                            + evening * t.evening_peak_kw * bump(h, t.evening_hour + shift_e, 1.8));
                    kw * horizon.dt_hours
                })
                .collect()
        })
        .collect()
}

/// Per-step PV generation (kWh) for one system with output factor `factor`.
pub fn pv_profile(horizon: &Horizon, t: &DayTemplates, factor: f64) -> Vec<f64> {
    (0..horizon.steps)
        .map(|k| {
            let h = horizon.hour_of(k) + 0.5 * horizon.dt_hours;
            let kw = 0.8 * t.pv_rating_kw * factor * bump(h, t.pv_peak_hour, t.pv_width_hours);
            // Below a few watts the panel is dark.
            if kw < 0.01 {
                0.0
            } else {
                kw * horizon.dt_hours
            }
        })
        .collect()
}

/// Builds `spec.players` prosumers. PV owners get a PV profile and ES
/// owners get `storage`; the two ownership sets are drawn independently.
pub fn generate_synthetic_scenario(
    spec: &SyntheticSpec,
    horizon: &Horizon,
    templates: &DayTemplates,
    storage: &StorageSpec,
) -> Result<Vec<Prosumer>> {
    spec.validate()?;
    storage.validate()?;
    if !storage.has_storage() && spec.es_rate > 0.0 {
        return Err(Error::invalid("ES owners need a storage spec with capacity"));
    }
    let n = spec.players;
    let loads = load_profiles(spec.seed, n, horizon, templates);
    let pv_owner = ownership(spec.seed, n, spec.pv_rate, true);
    let es_owner = ownership(spec.seed, n, spec.es_rate, false);
    // PV output factors come from the load stream's sibling so they are
    // fixed per player regardless of who owns PV.
    let mut factor_rng = stream(spec.seed, LOAD_STREAM + 16);
    let factors: Vec<f64> = (0..n).map(|_| factor_rng.gen_range(0.85..1.0)).collect();

    (0..n)
        .map(|i| {
            let pv = if pv_owner[i] {
                pv_profile(horizon, templates, factors[i])
            } else {
                vec![0.0; horizon.steps]
            };
            let net = net_load(&loads[i], &pv)?;
            let es = if es_owner[i] { *storage } else { StorageSpec::none() };
            Ok(Prosumer::new(PlayerId(i), i.to_string(), net, es, pv_owner[i]))
        })
        .collect()
}
