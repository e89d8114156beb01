//! Daily rain and reference evapotranspiration, with the short-range
//! forecast / long-term outlook split used by the scheduler.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::WeatherSample;
use crate::hydraulics::csv_error;

/// 1 mm/day in m/s.
pub const MM_PER_DAY: f64 = 1e-3 / crate::SECONDS_PER_DAY;

/// Daily weather over a season. Values are kept in mm/day as read.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    first_day: i64,
    rain_mm: Vec<f64>,
    pet_mm: Vec<f64>,
    rain_lt_mm: Vec<f64>,
    pet_lt_mm: Vec<f64>,
    rain_lt_given: bool,
    pet_lt_given: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl WeatherSeries {
    /// Builds a series from accurate daily values; missing long-term copies
    /// default to the mean of the accurate values.
    pub fn new(
        rain_mm: Vec<f64>,
        pet_mm: Vec<f64>,
        rain_lt_mm: Option<Vec<f64>>,
        pet_lt_mm: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = rain_mm.len();
        if n == 0 {
            return Err(Error::Validation("weather series is empty".into()));
        }
        let check = |name: &str, v: &[f64]| -> Result<()> {
            if v.len() != n {
                return Err(Error::shape(format!(
                    "{name} has {} days, rain has {n}",
                    v.len()
                )));
            }
            match v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                Some(d) => Err(Error::Validation(format!("{name} on day {d} is {}", v[d]))),
                None => Ok(()),
            }
        };
        check("rain", &rain_mm)?;
        check("PET", &pet_mm)?;
        let (rain_lt_given, pet_lt_given) = (rain_lt_mm.is_some(), pet_lt_mm.is_some());
        let rain_lt_mm = rain_lt_mm.unwrap_or_else(|| vec![mean(&rain_mm); n]);
        let pet_lt_mm = pet_lt_mm.unwrap_or_else(|| vec![mean(&pet_mm); n]);
        check("long-term rain", &rain_lt_mm)?;
        check("long-term PET", &pet_lt_mm)?;
        Ok(WeatherSeries {
            first_day: 0,
            rain_mm,
            pet_mm,
            rain_lt_mm,
            pet_lt_mm,
            rain_lt_given,
            pet_lt_given,
        })
    }

    /// The same rain and PET every day.
    pub fn constant(days: usize, rain_mm: f64, pet_mm: f64) -> Result<Self> {
        WeatherSeries::new(vec![rain_mm; days], vec![pet_mm; days], None, None)
    }

    pub fn len(&self) -> usize {
        self.rain_mm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rain_mm.is_empty()
    }

    pub fn rain_mm(&self) -> &[f64] {
        &self.rain_mm
    }

    pub fn pet_mm(&self) -> &[f64] {
        &self.pet_mm
    }

    pub fn rain_lt_mm(&self) -> &[f64] {
        &self.rain_lt_mm
    }

    pub fn pet_lt_mm(&self) -> &[f64] {
        &self.pet_lt_mm
    }

    /// Observed (or accurately forecast) weather of `day` in m/s.
    pub fn accurate(&self, day: usize) -> Result<WeatherSample> {
        self.check_day(day)?;
        Ok(WeatherSample {
            rain: self.rain_mm[day] * MM_PER_DAY,
            pet: self.pet_mm[day] * MM_PER_DAY,
        })
    }

    pub fn long_term(&self, day: usize) -> Result<WeatherSample> {
        self.check_day(day)?;
        Ok(WeatherSample {
            rain: self.rain_lt_mm[day] * MM_PER_DAY,
            pet: self.pet_lt_mm[day] * MM_PER_DAY,
        })
    }

    /// Every day of the accurate series in m/s.
    pub fn accurate_samples(&self) -> Vec<WeatherSample> {
        (0..self.len())
            .map(|d| self.accurate(d).expect("day in range"))
            .collect()
    }

    fn check_day(&self, day: usize) -> Result<()> {
        if day >= self.len() {
            return Err(Error::Range(format!(
                "day {day} outside a {}-day weather series",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        WeatherSeries::parse(&text, &path.display().to_string())
    }

    /// Parses `day,rain_mm,pet_mm` with optional `rain_lt_mm`, `pet_lt_mm`.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
        let col = |c: &str| headers.iter().position(|h| h == c);
        let need = |c: &str| {
            col(c).ok_or_else(|| Error::Schema {
                path: origin.to_string(),
                msg: format!("missing column `{c}`"),
            })
        };
        let (c_day, c_rain, c_pet) = (need("day")?, need("rain_mm")?, need("pet_mm")?);
        let (c_rain_lt, c_pet_lt) = (col("rain_lt_mm"), col("pet_lt_mm"));

        let mut first_day = None;
        let mut prev: Option<i64> = None;
        let (mut rain, mut pet, mut rain_lt, mut pet_lt) = (vec![], vec![], vec![], vec![]);
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(origin, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let err = |msg: String| Error::Parse {
                path: origin.to_string(),
                line,
                msg,
            };
            let raw = |c: usize| rec.get(c).unwrap_or("");
            let day: i64 = raw(c_day)
                .parse()
                .map_err(|_| err(format!("bad day `{}`", raw(c_day))))?;
            if let Some(p) = prev {
                if day != p + 1 {
                    return Err(err(format!("day {day} does not follow day {p}")));
                }
            }
            prev = Some(day);
            first_day.get_or_insert(day);
            let num = |c: usize, name: &str| -> Result<f64> {
                let v: f64 = raw(c)
                    .parse()
                    .map_err(|_| err(format!("column `{name}`: cannot parse `{}`", raw(c))))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Validation(format!(
                        "{origin}:{line}: `{name}` must be non-negative, got {v}"
                    )));
                }
                Ok(v)
            };
            rain.push(num(c_rain, "rain_mm")?);
            pet.push(num(c_pet, "pet_mm")?);
            if let Some(c) = c_rain_lt {
                rain_lt.push(num(c, "rain_lt_mm")?);
            }
            if let Some(c) = c_pet_lt {
                pet_lt.push(num(c, "pet_lt_mm")?);
            }
        }
        if rain.is_empty() {
            return Err(Error::Validation(format!(
                "{origin}: weather file has no data rows"
            )));
        }
        let mut s = WeatherSeries::new(
            rain,
            pet,
            c_rain_lt.map(|_| rain_lt),
            c_pet_lt.map(|_| pet_lt),
        )?;
        s.first_day = first_day.unwrap_or(0);
        Ok(s)
    }

    /// Writes the columns that were supplied, in mm/day.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("day,rain_mm,pet_mm");
        if self.rain_lt_given {
            out.push_str(",rain_lt_mm");
        }
        if self.pet_lt_given {
            out.push_str(",pet_lt_mm");
        }
        out.push('\n');
        for d in 0..self.len() {
            out.push_str(&format!(
                "{},{},{}",
                self.first_day + d as i64,
                self.rain_mm[d],
                self.pet_mm[d]
            ));
            if self.rain_lt_given {
                out.push_str(&format!(",{}", self.rain_lt_mm[d]));
            }
            if self.pet_lt_given {
                out.push_str(&format!(",{}", self.pet_lt_mm[d]));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Daily forcing as seen by a planner standing at day `t_now`.
///
/// Days before `t_now + ts` come from the accurate series, later days from
/// the long-term one. The result covers the whole season, indexed by day.
pub fn forecast_view(
    series: &WeatherSeries,
    t_now: usize,
    ts: usize,
) -> Result<Vec<WeatherSample>> {
    series.check_day(t_now)?;
    let split = t_now.saturating_add(ts);
    (0..series.len())
        .map(|d| {
            if d < split {
                series.accurate(d)
            } else {
                series.long_term(d)
            }
        })
        .collect()
}
