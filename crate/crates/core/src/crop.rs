//! Root water uptake (Feddes), evapotranspiration partitioning and the
//! seasonal yield-deficiency model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydraulics::csv_error;

/// Leaf-area extinction coefficient for soil evaporation.
pub const EVAPORATION_EXTINCTION: f64 = 0.623;

/// Feddes pressure-head breakpoints (m), `h1 > h2 > h3 > h4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeddesParams {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub h4: f64,
}

impl Default for FeddesParams {
    fn default() -> Self {
        FeddesParams {
            h1: -0.1,
            h2: -0.25,
            h3: -3.1,
            h4: -80.0,
        }
    }
}

impl FeddesParams {
    pub fn validate(&self) -> Result<()> {
        let FeddesParams { h1, h2, h3, h4 } = *self;
        if h1 <= 0.0 && h1 > h2 && h2 > h3 && h3 > h4 && h4.is_finite() {
            Ok(())
        } else {
            Err(Error::param(format!(
                "Feddes breakpoints must satisfy 0 >= h1 > h2 > h3 > h4, got {self:?}"
            )))
        }
    }
}

#[inline]
pub(crate) fn stress_factor_unchecked(h: f64, f: &FeddesParams) -> f64 {
    if h >= f.h1 {
        0.0
    } else if h >= f.h2 {
        (f.h1 - h) / (f.h1 - f.h2)
    } else if h >= f.h3 {
        1.0
    } else if h >= f.h4 {
        (h - f.h4) / (f.h3 - f.h4)
    } else {
        0.0
    }
}

/// Dimensionless water stress factor in `[0, 1]`.
pub fn stress_factor(h: f64, f: &FeddesParams) -> Result<f64> {
    f.validate()?;
    Ok(stress_factor_unchecked(h, f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropDay {
    pub kc: f64,
    pub ky: f64,
    pub lai: f64,
    /// Rooting depth (m).
    pub root_depth: f64,
}

/// Daily piecewise-constant crop coefficients over one season.
#[derive(Debug, Clone, PartialEq)]
pub struct CropCalendar {
    days: Vec<CropDay>,
}

impl CropCalendar {
    pub fn new(days: Vec<CropDay>) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::Validation("crop calendar is empty".into()));
        }
        for (i, d) in days.iter().enumerate() {
            if !(d.kc > 0.0 && d.root_depth > 0.0 && d.ky >= 0.0 && d.lai >= 0.0)
                || ![d.kc, d.ky, d.lai, d.root_depth]
                    .iter()
                    .all(|v| v.is_finite())
            {
                return Err(Error::Validation(format!(
                    "crop calendar day {i}: invalid entry {d:?}"
                )));
            }
        }
        Ok(CropCalendar { days })
    }

    /// A constant calendar of `season_days` days.
    pub fn constant(season_days: usize, day: CropDay) -> Result<Self> {
        Self::new(vec![day; season_days])
    }

    pub fn season_days(&self) -> usize {
        self.days.len()
    }

    pub fn days(&self) -> &[CropDay] {
        &self.days
    }

    pub fn day(&self, day: usize) -> Result<&CropDay> {
        self.days.get(day).ok_or_else(|| {
            Error::Range(format!(
                "day {day} outside season of {} days",
                self.days.len()
            ))
        })
    }

    /// Values in force at time `t` seconds after season start; held at the
    /// first/last day outside the season.
    #[inline]
    pub fn at_time(&self, t: f64) -> &CropDay {
        let d = day_index(t).min(self.days.len() - 1);
        &self.days[d]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses a `day,Kc,Ky,LAI,L` table with consecutive day numbers.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        const COLUMNS: [&str; 5] = ["day", "Kc", "Ky", "LAI", "L"];
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
        let idx: Vec<usize> = COLUMNS
            .iter()
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h == *c)
                    .ok_or_else(|| Error::Schema {
                        path: origin.to_string(),
                        msg: format!("missing column `{c}`"),
                    })
            })
            .collect::<Result<_>>()?;
        let mut days = Vec::new();
        let mut prev_day: Option<i64> = None;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(origin, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let parse_err = |col: &str, v: &str| Error::Parse {
                path: origin.to_string(),
                line,
                msg: format!("column `{col}`: cannot parse `{v}`"),
            };
            let field = |i: usize| rec.get(idx[i]).unwrap_or("");
            let day: i64 = field(0).parse().map_err(|_| parse_err("day", field(0)))?;
            if let Some(p) = prev_day {
                if day != p + 1 {
                    return Err(Error::Parse {
                        path: origin.to_string(),
                        line,
                        msg: format!("day {day} does not follow day {p}"),
                    });
                }
            }
            prev_day = Some(day);
            let num = |i: usize| -> Result<f64> {
                field(i)
                    .parse::<f64>()
                    .map_err(|_| parse_err(COLUMNS[i], field(i)))
            };
            days.push(CropDay {
                kc: num(1)?,
                ky: num(2)?,
                lai: num(3)?,
                root_depth: num(4)?,
            });
        }
        Self::new(days).map_err(|e| match e {
            Error::Validation(msg) => Error::Validation(format!("{origin}: {msg}")),
            other => other,
        })
    }
}

#[inline]
pub(crate) fn day_index(t: f64) -> usize {
    if t <= 0.0 {
        0
    } else {
        (t / crate::SECONDS_PER_DAY).floor() as usize
    }
}

/// Potential and actual evapotranspiration split (all m/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtBreakdown {
    pub etp: f64,
    pub ev: f64,
    pub tp: f64,
    pub eta: f64,
}

#[inline]
pub(crate) fn et_for(pet: f64, d: &CropDay, alpha: f64) -> EtBreakdown {
    let etp = d.kc * pet;
    let ev = etp * (-EVAPORATION_EXTINCTION * d.lai).exp();
    EtBreakdown {
        etp,
        ev,
        tp: etp - ev,
        eta: alpha * etp,
    }
}

pub fn et_chain(pet: f64, day: usize, cal: &CropCalendar, alpha: f64) -> Result<EtBreakdown> {
    if !(pet >= 0.0) {
        return Err(Error::param(format!("PET must be non-negative, got {pet}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!(
            "stress factor must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(et_for(pet, cal.day(day)?, alpha))
}

/// How potential uptake is spread over soil layers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootDistribution {
    /// Uniform per unit depth above the rooting depth.
    #[default]
    Uniform,
    /// Fixed per-layer fractions (top layer first) summing to one.
    Weights(Vec<f64>),
}

impl RootDistribution {
    pub fn validate(&self, nz: usize) -> Result<()> {
        match self {
            RootDistribution::Uniform => Ok(()),
            RootDistribution::Weights(w) => {
                let sum: f64 = w.iter().sum();
                if w.len() != nz || w.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    Err(Error::param(format!(
                        "root weights must be {nz} non-negative values summing to 1, got {w:?}"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Potential uptake per unit volume for layer `k`, as a fraction of `Tp` (1/m).
    ///
    /// Integrating over the column returns exactly one whenever the roots fit
    /// inside the soil depth.
    #[inline]
    pub fn layer_density(&self, k: usize, dz: f64, nz: usize, root_depth: f64) -> f64 {
        match self {
            RootDistribution::Uniform => {
                let depth = root_depth.min(dz * nz as f64);
                let top = k as f64 * dz;
                let frac = ((depth - top) / dz).clamp(0.0, 1.0);
                frac / depth
            }
            RootDistribution::Weights(w) => w[k] / dz,
        }
    }
}

/// Crop parameters used by the field model.
#[derive(Debug, Clone, PartialEq)]
pub struct CropContext {
    pub calendar: CropCalendar,
    pub feddes: FeddesParams,
    pub roots: RootDistribution,
}

/// Signed source term `S` (1/s) at one node; non-positive since uptake withdraws water.
///
/// `layer` is the node's axial index (0 = surface) in a grid of `nz` layers of thickness `dz`.
pub fn sink(
    h_node: f64,
    layer: usize,
    tp: f64,
    day: usize,
    crop: &CropContext,
    dz: f64,
    nz: usize,
) -> Result<f64> {
    crop.feddes.validate()?;
    crop.roots.validate(nz)?;
    if layer >= nz {
        return Err(Error::Range(format!("layer {layer} outside 0..{nz}")));
    }
    let d = crop.calendar.day(day)?;
    let alpha = stress_factor_unchecked(h_node, &crop.feddes);
    Ok(-alpha * tp * crop.roots.layer_density(layer, dz, nz, d.root_depth))
}

/// `sum_k Ky(k) (1 - alpha(k))`.
pub fn yield_deficiency(alpha: &[f64], ky: &[f64]) -> Result<f64> {
    if alpha.len() != ky.len() {
        return Err(Error::shape(format!(
            "{} stress values vs {} sensitivity factors",
            alpha.len(),
            ky.len()
        )));
    }
    Ok(alpha.iter().zip(ky).map(|(a, k)| k * (1.0 - a)).sum())
}

/// Arithmetic mean of the stress factor over a set of heads.
pub fn aggregate_stress(heads: impl IntoIterator<Item = f64>, f: &FeddesParams) -> f64 {
    let (sum, n) = heads.into_iter().fold((0.0, 0usize), |(s, n), h| {
        (s + stress_factor_unchecked(h, f), n + 1)
    });
    if n == 0 {
        1.0
    } else {
        sum / n as f64
    }
}
