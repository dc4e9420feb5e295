//! TOML scenario configuration.
//!
//! A config names a horizon, a tariff, a prosumer source and run settings.
//! Everything but the prosumer source has defaults, so the smallest useful
//! file is a single `[prosumers]` table. Relative data paths are resolved
//! against the directory containing the config file.
//!
//! ```toml
//! [tariff]
//! kind = "two-rate"          # or "file" / "inline"
//!
//! [prosumers]
//! kind = "synthetic"         # or "file" / "inline"
//! count = 16
//! pv_rate = 0.5
//! es_rate = 0.5
//! seed = 7
//!
//! [run]
//! mode = "coalitional-stratified"
//! samples_per_player = 1000
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coalition::PlayerId;
use crate::energy::{net_load, Horizon, Prosumer, StorageSpec, TariffSchedule};
use crate::error::{Error, Result};
use crate::experiment::synthetic::{generate_synthetic_scenario, DayTemplates, SyntheticSpec};
use crate::shapley::{Mode, EXACT_PLAYER_CAP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub horizon: HorizonConfig,
    #[serde(default)]
    pub tariff: TariffConfig,
    pub prosumers: ProsumerSource,
    /// Battery given to ES owners that do not specify their own.
    #[serde(default)]
    pub storage: StorageConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub caps: CapsConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonConfig {
    pub steps: usize,
    pub dt_hours: f64,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig {
            steps: 24,
            dt_hours: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TariffConfig {
    /// Night rate before `day_start_hour`, day rate after, flat export.
    TwoRate {
        #[serde(default = "default_night")]
        night_price: f64,
        #[serde(default = "default_day")]
        day_price: f64,
        #[serde(default = "default_day_start")]
        day_start_hour: f64,
        #[serde(default = "default_export")]
        export_price: f64,
    },
    /// CSV with columns `timestep,import_price,export_price`.
    File { path: PathBuf },
    Inline {
        import_price: Vec<f64>,
        export_price: Vec<f64>,
    },
}

fn default_night() -> f64 {
    0.072
}
fn default_day() -> f64 {
    0.1681
}
fn default_day_start() -> f64 {
    7.0
}
fn default_export() -> f64 {
    0.0485
}

impl Default for TariffConfig {
    fn default() -> Self {
        TariffConfig::TwoRate {
            night_price: default_night(),
            day_price: default_day(),
            day_start_hour: default_day_start(),
            export_price: default_export(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProsumerSource {
    Synthetic {
        count: usize,
        pv_rate: f64,
        es_rate: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Long CSV `prosumer_id,timestep,load_kwh,pv_kwh`; players appear in
    /// order of first occurrence. `es_owners` get the default battery.
    File {
        path: PathBuf,
        #[serde(default)]
        es_owners: Vec<String>,
    },
    Inline { members: Vec<MemberConfig> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberConfig {
    pub id: String,
    /// Net load per step; alternatively give `load` and optionally `pv`.
    #[serde(default)]
    pub net_load: Option<Vec<f64>>,
    #[serde(default)]
    pub load: Option<Vec<f64>>,
    #[serde(default)]
    pub pv: Option<Vec<f64>>,
    /// Use the default `[storage]` battery.
    #[serde(default)]
    pub es: bool,
    /// A battery of its own; overrides `es`.
    #[serde(default)]
    pub storage: Option<StorageConfig>,
    /// Defaults to "has any PV output" (or any negative net load).
    #[serde(default)]
    pub owns_pv: Option<bool>,
}

/// Battery ratings. Charge and discharge limits are powers in kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StorageConfig {
    pub capacity_kwh: f64,
    pub charge_kw: f64,
    pub discharge_kw: f64,
    pub eff_in: f64,
    pub eff_out: f64,
    pub soc0: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl Default for StorageConfig {
    fn default() -> Self {
        StorageConfig {
            capacity_kwh: 7.0,
            charge_kw: 3.5,
            discharge_kw: 3.2,
            eff_in: 0.95,
            eff_out: 0.95,
            soc0: 0.5,
            soc_min: 0.2,
            soc_max: 0.95,
        }
    }
}

impl StorageConfig {
    pub fn to_spec(&self, dt_hours: f64) -> Result<StorageSpec> {
        StorageSpec::from_ratings(
            self.capacity_kwh,
            self.charge_kw,
            self.discharge_kw,
            self.eff_in,
            self.eff_out,
            self.soc0,
            self.soc_min,
            self.soc_max,
            dt_hours,
        )
        .map_err(|e| Error::Config(format!("storage: {}", plain(&e))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    #[default]
    Csv,
    JsonLines,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json-lines" => Ok(ReportFormat::JsonLines),
            _ => Err(Error::Config(format!("unknown report format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    pub samples_per_player: u64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: ReportFormat,
    /// Worker threads; unset means one per core.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::CoalitionalStratified,
            samples_per_player: 1000,
            seed: 0,
            output: None,
            format: ReportFormat::Csv,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapsConfig {
    /// Largest game exact mode will enumerate.
    pub exact_players: usize,
}

impl Default for CapsConfig {
    fn default() -> Self {
        CapsConfig {
            exact_players: EXACT_PLAYER_CAP,
        }
    }
}

/// The error text without the variant prefix, for nesting in config errors.
fn plain(e: &Error) -> String {
    match e {
        Error::InvalidInput(m) | Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

fn config_err(context: &str, e: Error) -> Error {
    if e.is_config_error() {
        Error::Config(format!("{context}: {}", plain(&e)))
    } else {
        e
    }
}

/// Prosumers, tariff and horizon materialised from a config.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub horizon: Horizon,
    pub tariff: TariffSchedule,
    pub prosumers: Vec<Prosumer>,
}

impl ScenarioConfig {
    /// Parses a TOML document. Relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn horizon(&self) -> Result<Horizon> {
        Horizon::new(self.horizon.steps, self.horizon.dt_hours).map_err(|e| config_err("horizon", e))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn default_storage(&self) -> Result<StorageSpec> {
        self.storage.to_spec(self.horizon.dt_hours)
    }

    /// Checks every invariant by building the scenario once.
    pub fn validate(&self) -> Result<()> {
        if matches!(self.run.mode, Mode::ExactPermutations) {
            return Err(Error::Config(
                "mode must be one of exact, permutation, stratified, coalitional-stratified".into(),
            ));
        }
        if self.run.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        if self.caps.exact_players == 0 || self.caps.exact_players > crate::coalition::ENUMERATION_CAP {
            return Err(Error::Config(format!(
                "caps.exact_players must lie in 1..={}",
                crate::coalition::ENUMERATION_CAP
            )));
        }
        self.scenario().map(|_| ())
    }

    pub fn tariff(&self, horizon: &Horizon) -> Result<TariffSchedule> {
        let t = match &self.tariff {
            TariffConfig::TwoRate {
                night_price,
                day_price,
                day_start_hour,
                export_price,
            } => TariffSchedule::two_rate(horizon, *night_price, *day_price, *day_start_hour, *export_price),
            TariffConfig::Inline {
                import_price,
                export_price,
            } => TariffSchedule::new(import_price.clone(), export_price.clone()),
            TariffConfig::File { path } => read_tariff_csv(&self.resolve(path)),
        }
        .map_err(|e| config_err("tariff", e))?;
        if t.len() != horizon.steps {
            return Err(Error::Config(format!(
                "tariff has {} steps but the horizon has {}",
                t.len(),
                horizon.steps
            )));
        }
        Ok(t)
    }

    pub fn prosumers(&self, horizon: &Horizon) -> Result<Vec<Prosumer>> {
        let ps = match &self.prosumers {
            ProsumerSource::Synthetic {
                count,
                pv_rate,
                es_rate,
                seed,
            } => {
                let spec = SyntheticSpec {
                    players: *count,
                    pv_rate: *pv_rate,
                    es_rate: *es_rate,
                    seed: *seed,
                };
                generate_synthetic_scenario(&spec, horizon, &DayTemplates::default(), &self.default_storage()?)
            }
            ProsumerSource::File { path, es_owners } => {
                read_prosumer_csv(&self.resolve(path), horizon, es_owners, &self.default_storage()?)
            }
            ProsumerSource::Inline { members } => self.inline_members(members, horizon),
        }
        .map_err(|e| config_err("prosumers", e))?;
        if ps.is_empty() {
            return Err(Error::Config("prosumers: at least one prosumer is required".into()));
        }
        if ps.len() > crate::coalition::MAX_PLAYERS {
            return Err(Error::Config(format!(
                "prosumers: {} players exceed the limit of {}",
                ps.len(),
                crate::coalition::MAX_PLAYERS
            )));
        }
        Ok(ps)
    }

    fn inline_members(&self, members: &[MemberConfig], horizon: &Horizon) -> Result<Vec<Prosumer>> {
        let mut seen = HashSet::new();
        members
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if !seen.insert(m.id.as_str()) {
                    return Err(Error::Config(format!("duplicate prosumer id {:?}", m.id)));
                }
                let (net, pv_output) = match (&m.net_load, &m.load) {
                    (Some(net), None) if m.pv.is_none() => (net.clone(), net.iter().any(|&v| v < 0.0)),
                    (None, Some(load)) => {
                        let pv = m.pv.clone().unwrap_or_else(|| vec![0.0; load.len()]);
                        let has_pv = pv.iter().any(|&v| v > 0.0);
                        (net_load(load, &pv)?, has_pv)
                    }
                    _ => {
                        return Err(Error::Config(format!(
                            "prosumer {:?} needs either net_load or load (with optional pv)",
                            m.id
                        )))
                    }
                };
                if net.len() != horizon.steps {
                    return Err(Error::LengthMismatch {
                        what: format!("net load of {:?}", m.id),
                        expected: horizon.steps,
                        actual: net.len(),
                    });
                }
                check_finite(&net, &m.id)?;
                let storage = match (&m.storage, m.es) {
                    (Some(s), _) => s.to_spec(horizon.dt_hours)?,
                    (None, true) => self.default_storage()?,
                    (None, false) => StorageSpec::none(),
                };
                Ok(Prosumer::new(
                    PlayerId(i),
                    m.id.clone(),
                    net,
                    storage,
                    m.owns_pv.unwrap_or(pv_output),
                ))
            })
            .collect()
    }

    /// Horizon, tariff and prosumers, all validated.
    pub fn scenario(&self) -> Result<Scenario> {
        let horizon = self.horizon()?;
        let tariff = self.tariff(&horizon)?;
        let prosumers = self.prosumers(&horizon)?;
        Ok(Scenario {
            horizon,
            tariff,
            prosumers,
        })
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    ScenarioConfig::from_toml_str(&text, base).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn check_finite(values: &[f64], who: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(t) => Err(Error::invalid(format!("{who}: value at step {t} is not finite"))),
        None => Ok(()),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn require_headers(rdr: &mut csv::Reader<std::fs::File>, path: &Path, want: &[&str]) -> Result<()> {
    let got = rdr.headers()?;
    if got.iter().ne(want.iter().copied()) {
        return Err(Error::Config(format!(
            "{}: expected header {:?}, found {:?}",
            path.display(),
            want.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn csv_row_err(path: &Path, e: csv::Error) -> Error {
    Error::Config(format!("{}: {e}", path.display()))
}

#[derive(Deserialize)]
struct TariffRow {
    timestep: usize,
    import_price: f64,
    export_price: f64,
}

/// Tariff CSV with one row per timestep, `0..K` in any order.
pub fn read_tariff_csv(path: &Path) -> Result<TariffSchedule> {
    let mut rdr = open_csv(path)?;
    require_headers(&mut rdr, path, &["timestep", "import_price", "export_price"])?;
    let mut rows: Vec<Option<(f64, f64)>> = Vec::new();
    for rec in rdr.deserialize() {
        let r: TariffRow = rec.map_err(|e| csv_row_err(path, e))?;
        if rows.len() <= r.timestep {
            rows.resize(r.timestep + 1, None);
        }
        if rows[r.timestep].replace((r.import_price, r.export_price)).is_some() {
            return Err(Error::Config(format!("{}: timestep {} repeated", path.display(), r.timestep)));
        }
    }
    let mut import = Vec::with_capacity(rows.len());
    let mut export = Vec::with_capacity(rows.len());
    for (t, r) in rows.into_iter().enumerate() {
        let (im, ex) = r.ok_or_else(|| Error::Config(format!("{}: timestep {t} missing", path.display())))?;
        import.push(im);
        export.push(ex);
    }
    TariffSchedule::new(import, export)
}

#[derive(Deserialize)]
struct ProsumerRow {
    prosumer_id: String,
    timestep: usize,
    load_kwh: f64,
    pv_kwh: f64,
}

/// Long-format prosumer CSV. Every prosumer needs exactly one row for each
/// timestep of the horizon.
pub fn read_prosumer_csv(
    path: &Path,
    horizon: &Horizon,
    es_owners: &[String],
    storage: &StorageSpec,
) -> Result<Vec<Prosumer>> {
    let mut rdr = open_csv(path)?;
    require_headers(&mut rdr, path, &["prosumer_id", "timestep", "load_kwh", "pv_kwh"])?;
    let k = horizon.steps;
    let mut ids: Vec<String> = Vec::new();
    let mut data: Vec<Vec<Option<(f64, f64)>>> = Vec::new();
    for rec in rdr.deserialize() {
        let r: ProsumerRow = rec.map_err(|e| csv_row_err(path, e))?;
        if r.timestep >= k {
            return Err(Error::Config(format!(
                "{}: prosumer {:?} has timestep {} outside 0..{k}",
                path.display(),
                r.prosumer_id,
                r.timestep
            )));
        }
        if !(r.load_kwh.is_finite() && r.pv_kwh.is_finite() && r.pv_kwh >= 0.0) {
            return Err(Error::Config(format!(
                "{}: prosumer {:?} step {} needs finite load and non-negative PV",
                path.display(),
                r.prosumer_id,
                r.timestep
            )));
        }
        let idx = match ids.iter().position(|id| *id == r.prosumer_id) {
            Some(i) => i,
            None => {
                ids.push(r.prosumer_id.clone());
                data.push(vec![None; k]);
                ids.len() - 1
            }
        };
        if data[idx][r.timestep].replace((r.load_kwh, r.pv_kwh)).is_some() {
            return Err(Error::Config(format!(
                "{}: prosumer {:?} repeats timestep {}",
                path.display(),
                r.prosumer_id,
                r.timestep
            )));
        }
    }
    let known = ids.clone();
    let prosumers = ids
        .into_iter()
        .zip(data)
        .enumerate()
        .map(|(i, (id, steps))| {
            let mut load = Vec::with_capacity(k);
            let mut pv = Vec::with_capacity(k);
            for (t, s) in steps.into_iter().enumerate() {
                let (l, p) = s.ok_or_else(|| {
                    Error::Config(format!("{}: prosumer {id:?} lacks timestep {t}", path.display()))
                })?;
                load.push(l);
                pv.push(p);
            }
            let owns_pv = pv.iter().any(|&p| p > 0.0);
            let es = if es_owners.contains(&id) {
                *storage
            } else {
                StorageSpec::none()
            };
            Ok(Prosumer::new(PlayerId(i), id, net_load(&load, &pv)?, es, owns_pv))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(owner) = es_owners.iter().find(|o| !known.contains(o)) {
        return Err(Error::Config(format!("es_owners names unknown prosumer {owner:?}")));
    }
    Ok(prosumers)
}
