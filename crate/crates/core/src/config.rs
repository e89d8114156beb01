//! Scenario bundles: a TOML config plus the soil, crop and weather files it
//! names, resolved and validated before anything is computed.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crop::{CropCalendar, CropContext, CropDay, FeddesParams, RootDistribution};
use crate::error::{Error, Result};
use crate::field::{validate_events, BottomBoundary, FieldModel, IrrigationEvent, PivotConfig};
use crate::grid::CylGrid;
use crate::hydraulics::{SoilMap, SoilParams, DEFAULT_CAPACITY_FLOOR};
use crate::integrate::StepControl;
use crate::scheduler::{HorizonSpec, LoopConfig, SchedulerWeights, ZoneSpec};
use crate::weather::WeatherSeries;
use crate::SECONDS_PER_DAY;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Field radius (m).
    pub radius: f64,
    /// Soil depth (m).
    pub depth: f64,
    #[serde(rename = "Nr")]
    pub n_r: usize,
    #[serde(rename = "Ntheta")]
    pub n_theta: usize,
    #[serde(rename = "Nz")]
    pub n_z: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PivotSection {
    pub rotation_period_h: f64,
    pub u_lb: f64,
    pub u_ub: f64,
    #[serde(default)]
    pub phase_h: f64,
}

/// Exactly one of `preset` (loam, sandy_clay_loam, clay_loam) or `file`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoilSection {
    pub preset: Option<String>,
    pub file: Option<String>,
}

/// A calendar file, or constant coefficients for the whole season.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropSection {
    pub file: Option<String>,
    pub kc: Option<f64>,
    pub ky: Option<f64>,
    pub lai: Option<f64>,
    pub root_depth: Option<f64>,
    #[serde(default)]
    pub feddes: FeddesParams,
    /// Per-layer uptake fractions; uniform over the rooting depth if absent.
    pub root_weights: Option<Vec<f64>>,
}

/// A weather file, or constant daily values (mm/day).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeatherSection {
    pub file: Option<String>,
    pub rain_mm: Option<f64>,
    pub pet_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Uniform initial head (m).
    pub head: f64,
    /// Half-width of a seeded uniform perturbation per node (m).
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSection {
    pub start_h: f64,
    pub duration_h: f64,
    /// One rate per ring (m/s).
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionSection {
    pub threshold: f64,
    /// Standardise each snapshot row before clustering.
    pub standardize: bool,
    /// Training run: initial head, rate and event layout.
    pub train_head: f64,
    pub train_rate: f64,
    pub train_spacing_days: f64,
    pub train_duration_h: f64,
    pub sample_h: f64,
    /// Robustness check: initial head and alternative rates.
    pub eval_head: f64,
    pub eval_rates: Vec<f64>,
}

impl Default for ReductionSection {
    fn default() -> Self {
        ReductionSection {
            threshold: 1.0,
            standardize: false,
            train_head: -4.0,
            train_rate: 2e-6,
            train_spacing_days: 4.0,
            train_duration_h: 16.0,
            sample_h: 1.0,
            eval_head: -3.0,
            eval_rates: vec![1.5e-6, 1e-6, 0.5e-6, 0.25e-6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerSection {
    pub zone: ZoneSpec,
    pub weights: SchedulerWeights,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub t_lb_h: f64,
    pub t_ub_days: f64,
    pub event_duration_h: f64,
    pub ts_days: usize,
    /// Layers (0 = surface) whose nodes form the root-zone output.
    pub output_layers: Vec<usize>,
    pub min_rate_fraction: f64,
}

impl Default for SchedulerSection {
    fn default() -> Self {
        let h = HorizonSpec::default();
        SchedulerSection {
            zone: ZoneSpec::default(),
            weights: SchedulerWeights::default(),
            n1: h.n1,
            n2: h.n2,
            n3: h.n3,
            t_lb_h: h.t_lb / 3600.0,
            t_ub_days: h.t_ub / SECONDS_PER_DAY,
            event_duration_h: h.event_duration / 3600.0,
            ts_days: 7,
            output_layers: vec![1],
            min_rate_fraction: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Sprinkler rates to probe (m/s).
    pub amounts: Vec<f64>,
    pub event_duration_h: f64,
    pub initial_head: f64,
    pub cap_days: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            amounts: (0..8)
                .map(|i| (0.6 + i as f64 * 2.2 / 7.0) * 1e-6)
                .collect(),
            event_duration_h: 96.0,
            initial_head: -2.9,
            cap_days: 90.0,
        }
    }
}

/// Everything a scenario file may say.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub season_days: usize,
    /// Output sampling interval (s).
    #[serde(default = "default_dt_out")]
    pub dt_out: f64,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSection,
    pub pivot: PivotSection,
    #[serde(default)]
    pub step: StepControl,
    #[serde(default)]
    pub bottom: BottomBoundary,
    #[serde(default = "default_capacity_floor")]
    pub capacity_floor: f64,
    pub soil: SoilSection,
    pub crop: Option<CropSection>,
    pub weather: WeatherSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub events: Vec<EventSection>,
    #[serde(default)]
    pub reduction: ReductionSection,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_dt_out() -> f64 {
    3600.0
}

fn default_capacity_floor() -> f64 {
    DEFAULT_CAPACITY_FLOOR
}

const BUILTIN: &[(&str, &str)] = &[
    (
        "scenario1/scenario.toml",
        include_str!("../fixtures/scenario1/scenario.toml"),
    ),
    (
        "scenario2/scenario.toml",
        include_str!("../fixtures/scenario2/scenario.toml"),
    ),
    (
        "scenario2/soil.csv",
        include_str!("../fixtures/scenario2/soil.csv"),
    ),
    (
        "scenario3/scenario.toml",
        include_str!("../fixtures/scenario3/scenario.toml"),
    ),
    (
        "scenario3/crop.csv",
        include_str!("../fixtures/scenario3/crop.csv"),
    ),
    (
        "scenario3/weather.csv",
        include_str!("../fixtures/scenario3/weather.csv"),
    ),
];

/// A parsed scenario with its data files loaded.
#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub config: ScenarioConfig,
    pub soil: SoilMap,
    pub calendar: Option<CropCalendar>,
    pub weather: WeatherSeries,
    origin: String,
    sha256: String,
}

impl ScenarioBundle {
    /// Loads a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_parts(&text, &path.display().to_string(), |name| {
            let p: PathBuf = dir.join(name);
            let body = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Ok((body, p.display().to_string()))
        })
    }

    /// One of the shipped desk-scale scenarios (1, 2 or 3).
    pub fn builtin(n: u32) -> Result<Self> {
        let key = format!("scenario{n}/scenario.toml");
        let text = builtin_file(&key).ok_or_else(|| {
            Error::Validation(format!("no built-in scenario {n}; choose 1, 2 or 3"))
        })?;
        Self::from_parts(text, &format!("builtin:{key}"), |name| {
            let key = format!("scenario{n}/{name}");
            builtin_file(&key)
                .map(|b| (b.to_string(), format!("builtin:{key}")))
                .ok_or_else(|| {
                    Error::Validation(format!("built-in scenario {n} has no file `{name}`"))
                })
        })
    }

    /// Parses config text, fetching named data files through `read`.
    pub fn from_parts(
        text: &str,
        origin: &str,
        mut read: impl FnMut(&str) -> Result<(String, String)>,
    ) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Schema {
            path: origin.to_string(),
            msg: e.to_string().trim_end().to_string(),
        })?;
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let mut fetch = |name: &str| -> Result<(String, String)> {
            let (body, at) = read(name)?;
            hasher.update([0u8]);
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(body.as_bytes());
            Ok((body, at))
        };

        let days = config.season_days;
        if days == 0 {
            return Err(Error::Validation(format!(
                "{origin}: season_days must be positive"
            )));
        }
        let soil = match (&config.soil.preset, &config.soil.file) {
            (Some(p), None) => SoilMap::Uniform(soil_preset(p)?),
            (None, Some(f)) => {
                let (body, at) = fetch(f)?;
                SoilMap::parse(&body, &at)?
            }
            _ => {
                return Err(Error::Validation(format!(
                    "{origin}: [soil] needs exactly one of `preset` or `file`"
                )))
            }
        };
        let calendar = match &config.crop {
            None => None,
            Some(c) => Some(match &c.file {
                Some(f) => {
                    let (body, at) = fetch(f)?;
                    CropCalendar::parse(&body, &at)?
                }
                None => {
                    let get = |v: Option<f64>, k: &str| {
                        v.ok_or_else(|| {
                            Error::Validation(format!(
                                "{origin}: [crop] without a file needs `{k}`"
                            ))
                        })
                    };
                    let day = CropDay {
                        kc: get(c.kc, "kc")?,
                        ky: get(c.ky, "ky")?,
                        lai: get(c.lai, "lai")?,
                        root_depth: get(c.root_depth, "root_depth")?,
                    };
                    CropCalendar::constant(days, day)?
                }
            }),
        };
        let w = &config.weather;
        let weather = match (&w.file, w.rain_mm, w.pet_mm) {
            (Some(f), None, None) => {
                let (body, at) = fetch(f)?;
                WeatherSeries::parse(&body, &at)?
            }
            (None, rain, pet) => {
                WeatherSeries::constant(days, rain.unwrap_or(0.0), pet.unwrap_or(0.0))?
            }
            _ => {
                return Err(Error::Validation(format!(
                    "{origin}: [weather] takes either `file` or constant values, not both"
                )))
            }
        };
        if weather.len() < days {
            return Err(Error::Validation(format!(
                "{origin}: weather covers {} days, season has {days}",
                weather.len()
            )));
        }
        if let Some(cal) = &calendar {
            if cal.season_days() < days {
                return Err(Error::Validation(format!(
                    "{origin}: crop calendar covers {} days, season has {days}",
                    cal.season_days()
                )));
            }
        }

        let bundle = ScenarioBundle {
            config,
            soil,
            calendar,
            weather,
            origin: origin.to_string(),
            sha256: hex::encode(hasher.finalize()),
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Checks every derived object so commands fail before computing.
    fn validate(&self) -> Result<()> {
        let c = &self.config;
        let model = self.field_model()?;
        let grid = model.grid();
        self.pivot().validate()?;
        self.step_control().validate()?;
        validate_events(&self.events(), grid.n_r)?;
        self.horizon_spec().validate()?;
        c.scheduler.zone.validate()?;
        c.scheduler.weights.validate()?;
        self.outputs()?;
        if !(c.dt_out > 0.0 && c.dt_out.is_finite()) {
            return Err(Error::param(format!(
                "dt_out must be positive, got {}",
                c.dt_out
            )));
        }
        if !(c.initial.head.is_finite() && c.initial.jitter >= 0.0 && c.initial.jitter.is_finite())
        {
            return Err(Error::param(format!(
                "invalid initial state {:?}",
                c.initial
            )));
        }
        let r = &c.reduction;
        if !(r.threshold > 0.0
            && r.sample_h > 0.0
            && r.train_duration_h > 0.0
            && r.train_spacing_days > 0.0)
        {
            return Err(Error::param(format!("invalid reduction settings {r:?}")));
        }
        if c.scheduler.ts_days == 0 || !(0.0..1.0).contains(&c.scheduler.min_rate_fraction) {
            return Err(Error::param(
                "ts_days must be positive and min_rate_fraction in [0, 1)",
            ));
        }
        let s = &c.sweep;
        if !(s.event_duration_h > 0.0 && s.cap_days > 0.0 && s.initial_head.is_finite()) {
            return Err(Error::param(format!("invalid sweep settings {s:?}")));
        }
        Ok(())
    }

    /// Where the config came from (path or `builtin:`).
    pub fn origin(&self) -> &str {
        &self.origin
    }

    /// Hex SHA-256 of the config text and every data file it read.
    pub fn sha256(&self) -> &str {
        &self.sha256
    }

    pub fn season(&self) -> f64 {
        self.config.season_days as f64 * SECONDS_PER_DAY
    }

    pub fn grid(&self) -> Result<CylGrid> {
        let g = &self.config.grid;
        CylGrid::new(g.radius, g.depth, g.n_r, g.n_theta, g.n_z)
    }

    pub fn pivot(&self) -> PivotConfig {
        let p = &self.config.pivot;
        PivotConfig {
            rotation_period: p.rotation_period_h * 3600.0,
            u_lb: p.u_lb,
            u_ub: p.u_ub,
            phase: p.phase_h * 3600.0,
        }
    }

    pub fn step_control(&self) -> StepControl {
        self.config.step
    }

    pub fn field_model(&self) -> Result<FieldModel> {
        let grid = self.grid()?;
        let crop = match (&self.config.crop, &self.calendar) {
            (Some(c), Some(cal)) => Some(CropContext {
                calendar: cal.clone(),
                feddes: c.feddes,
                roots: c
                    .root_weights
                    .clone()
                    .map_or(RootDistribution::Uniform, RootDistribution::Weights),
            }),
            _ => None,
        };
        FieldModel::new(grid, self.soil.clone(), crop, self.config.bottom)?
            .with_capacity_floor(self.config.capacity_floor)
    }

    /// Initial heads; `seed` overrides the config seed for the jitter.
    pub fn initial_state(&self, seed: Option<u64>) -> Result<Vec<f64>> {
        let n = self.grid()?.len();
        Ok(jittered(
            n,
            self.config.initial.head,
            self.config.initial.jitter,
            seed.unwrap_or(self.config.seed),
        ))
    }

    /// The irrigation schedule given in the config.
    pub fn events(&self) -> Vec<IrrigationEvent> {
        self.config
            .events
            .iter()
            .map(|e| IrrigationEvent {
                start: e.start_h * 3600.0,
                duration: e.duration_h * 3600.0,
                rates: e.rates.clone(),
            })
            .collect()
    }

    /// Evenly spaced events at `rate` on every ring used to excite the
    /// training and evaluation runs.
    pub fn training_events(&self, rate: f64) -> Result<Vec<IrrigationEvent>> {
        let r = &self.config.reduction;
        let n_r = self.grid()?.n_r;
        let spacing = r.train_spacing_days * SECONDS_PER_DAY;
        let duration = r.train_duration_h * 3600.0;
        let mut events = vec![];
        let mut start = 0.0;
        while start + duration <= self.season() + 1e-6 {
            events.push(IrrigationEvent {
                start,
                duration,
                rates: vec![rate; n_r],
            });
            start += spacing;
        }
        Ok(events)
    }

    pub fn horizon_spec(&self) -> HorizonSpec {
        let s = &self.config.scheduler;
        HorizonSpec {
            n1: s.n1,
            n2: s.n2,
            n3: s.n3,
            t_lb: s.t_lb_h * 3600.0,
            t_ub: s.t_ub_days * SECONDS_PER_DAY,
            event_duration: s.event_duration_h * 3600.0,
        }
    }

    /// Node ids of the root-zone output layers.
    pub fn outputs(&self) -> Result<Vec<usize>> {
        let grid = self.grid()?;
        let layers = &self.config.scheduler.output_layers;
        if layers.is_empty() {
            return Err(Error::param("output_layers is empty"));
        }
        let mut ids = vec![];
        for &k in layers {
            if k >= grid.n_z {
                return Err(Error::param(format!(
                    "output layer {k} outside {} layers",
                    grid.n_z
                )));
            }
            ids.extend(grid.layer(k));
        }
        ids.sort_unstable();
        ids.dedup();
        Ok(ids)
    }

    pub fn loop_config(&self) -> LoopConfig {
        let s = &self.config.scheduler;
        LoopConfig {
            ts_days: s.ts_days,
            season: self.season(),
            dt_log: self.config.dt_out,
            min_rate_fraction: s.min_rate_fraction,
        }
    }
}

fn builtin_file(key: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

fn soil_preset(name: &str) -> Result<SoilParams> {
    match name {
        "loam" => Ok(SoilParams::LOAM),
        "sandy_clay_loam" => Ok(SoilParams::SANDY_CLAY_LOAM),
        "clay_loam" => Ok(SoilParams::CLAY_LOAM),
        other => Err(Error::Validation(format!(
            "unknown soil preset `{other}` (loam, sandy_clay_loam, clay_loam)"
        ))),
    }
}

/// `n` heads uniform in `head ± jitter`, reproducible from `seed`.
pub fn jittered(n: usize, head: f64, jitter: f64, seed: u64) -> Vec<f64> {
    if jitter == 0.0 {
        return vec![head; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| head + rng.gen_range(-jitter..=jitter))
        .collect()
}
