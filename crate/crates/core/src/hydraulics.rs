//! van Genuchten retention and Mualem conductivity relations.
//!
//! All functions take the pressure head `h` in metres (negative when
//! unsaturated) and return SI quantities. For `h >= 0` the soil is
//! saturated: `Se = 1`, `theta = theta_s`, `K = Ks` and the capacity is
//! the configured floor.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound on the soil water capacity (1/m).
pub const DEFAULT_CAPACITY_FLOOR: f64 = 1e-8;

// Keeps every intermediate of K and c representable for any n > 1; heads
// this extreme (|alpha h|^n = e^200) never occur physically.
const MAX_LN_XN: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoilParams {
    /// Saturated hydraulic conductivity (m/s).
    pub ks: f64,
    pub theta_s: f64,
    pub theta_r: f64,
    /// Inverse air-entry value (1/m).
    pub alpha_vg: f64,
    /// Pore-size distribution index, > 1.
    pub n_vg: f64,
}

impl SoilParams {
    pub const LOAM: SoilParams = SoilParams {
        ks: 2.889e-6,
        theta_s: 0.43,
        theta_r: 0.078,
        alpha_vg: 3.6,
        n_vg: 1.56,
    };

    pub const SANDY_CLAY_LOAM: SoilParams = SoilParams {
        ks: 3.6388e-6,
        theta_s: 0.39,
        theta_r: 0.1,
        alpha_vg: 5.9,
        n_vg: 1.48,
    };

    pub const CLAY_LOAM: SoilParams = SoilParams {
        ks: 7.2223e-7,
        theta_s: 0.41,
        theta_r: 0.095,
        alpha_vg: 1.9,
        n_vg: 1.31,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = self.ks > 0.0
            && self.theta_r >= 0.0
            && self.theta_r < self.theta_s
            && self.theta_s <= 1.0
            && self.alpha_vg > 0.0
            && self.n_vg > 1.0
            && [
                self.ks,
                self.theta_s,
                self.theta_r,
                self.alpha_vg,
                self.n_vg,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid soil parameters {self:?}")))
        }
    }

    #[inline]
    pub fn m_vg(&self) -> f64 {
        1.0 - 1.0 / self.n_vg
    }
}

/// Retention quantities evaluated together; shares the `(alpha|h|)^n` work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydraulicState {
    pub se: f64,
    pub theta: f64,
    pub k: f64,
    pub c: f64,
}

/// `ln((alpha |h|)^n)` clamped so that `exp` stays finite.
#[inline]
fn ln_scaled_head_pow(h: f64, p: &SoilParams) -> f64 {
    (p.n_vg * (p.alpha_vg * h.abs()).ln()).clamp(-MAX_LN_XN, MAX_LN_XN)
}

/// Evaluates Se, theta, K and c at once without validating `p`.
#[inline]
pub fn evaluate_unchecked(h: f64, p: &SoilParams, c_floor: f64) -> HydraulicState {
    if h >= 0.0 {
        return HydraulicState {
            se: 1.0,
            theta: p.theta_s,
            k: p.ks,
            c: c_floor,
        };
    }
    let m = p.m_vg();
    let ln_xn = ln_scaled_head_pow(h, p);
    let xn = ln_xn.exp();
    let ln_1p_xn = xn.ln_1p();
    let se = (-m * ln_1p_xn).exp();
    // Se^(1/m) = 1 / (1 + x^n), so (1 - Se^(1/m))^m = exp(-m ln(1 + x^-n)).
    let one_minus_inner = -(-m * (-ln_xn).exp().ln_1p()).exp_m1();
    let k = (p.ks * se.sqrt() * one_minus_inner.powi(2)).max(f64::MIN_POSITIVE);
    // dSe/dh = alpha m n x^(n-1) (1 + x^n)^(-m-1), with x^(n-1) = x^n / x.
    let ln_x = ln_xn / p.n_vg;
    let dse = p.alpha_vg * m * p.n_vg * (ln_xn - ln_x - (m + 1.0) * ln_1p_xn).exp();
    let c = ((p.theta_s - p.theta_r) * dse).max(c_floor);
    HydraulicState {
        se,
        theta: p.theta_s - (p.theta_s - p.theta_r) * (1.0 - se),
        k,
        c,
    }
}

/// Inverse of the retention curve: the head at which `theta` is held.
///
/// Returns `None` outside the open interval `(theta_r, theta_s)`.
#[inline]
pub fn head_from_theta_unchecked(theta: f64, p: &SoilParams) -> Option<f64> {
    let span = p.theta_s - p.theta_r;
    let deficit = (p.theta_s - theta) / span;
    if !(deficit > 0.0 && deficit < 1.0) {
        return None;
    }
    // Se^(-1/m) - 1 = x^n, with ln Se taken from the deficit for accuracy near saturation.
    let xn = (-(-deficit).ln_1p() / p.m_vg()).exp_m1();
    Some(-xn.powf(1.0 / p.n_vg) / p.alpha_vg)
}

pub fn effective_saturation(h: f64, p: &SoilParams) -> Result<f64> {
    p.validate()?;
    if h >= 0.0 {
        return Ok(1.0);
    }
    let ln_xn = ln_scaled_head_pow(h, p);
    Ok((-p.m_vg() * ln_xn.exp().ln_1p()).exp())
}

pub fn water_content(h: f64, p: &SoilParams) -> Result<f64> {
    let se = effective_saturation(h, p)?;
    Ok(p.theta_s - (p.theta_s - p.theta_r) * (1.0 - se))
}

pub fn hydraulic_conductivity(h: f64, p: &SoilParams) -> Result<f64> {
    p.validate()?;
    Ok(evaluate_unchecked(h, p, DEFAULT_CAPACITY_FLOOR).k)
}

/// dθ/dh, floored at `c_floor` so that saturated cells stay invertible.
pub fn capillary_capacity(h: f64, p: &SoilParams, c_floor: f64) -> Result<f64> {
    p.validate()?;
    if !(c_floor > 0.0) {
        return Err(Error::param(format!(
            "capacity floor must be positive, got {c_floor}"
        )));
    }
    Ok(evaluate_unchecked(h, p, c_floor).c)
}

/// Soil parameters for every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum SoilMap {
    Uniform(SoilParams),
    PerNode(Vec<SoilParams>),
}

impl SoilMap {
    #[inline]
    pub fn get(&self, node: usize) -> &SoilParams {
        match self {
            SoilMap::Uniform(p) => p,
            SoilMap::PerNode(v) => &v[node],
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, SoilMap::Uniform(_))
    }

    /// Checks parameter validity and that a per-node map covers exactly `n` nodes.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        match self {
            SoilMap::Uniform(p) => p.validate(),
            SoilMap::PerNode(v) => {
                if v.len() != n {
                    return Err(Error::Consistency(format!(
                        "soil map covers {} nodes, grid has {n}",
                        v.len()
                    )));
                }
                v.iter().try_for_each(SoilParams::validate)
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses `node_id,Ks,theta_s,theta_r,alpha_vg,n_vg`; a single `*` row means uniform.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        const COLUMNS: [&str; 6] = ["node_id", "Ks", "theta_s", "theta_r", "alpha_vg", "n_vg"];
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

        let mut uniform = None;
        let mut rows: Vec<(usize, SoilParams, usize)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(origin, e))?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |i: usize| rec.get(idx[i]).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                field(i).parse::<f64>().map_err(|_| Error::Parse {
                    path: origin.to_string(),
                    line,
                    msg: format!("column `{}`: cannot parse `{}`", COLUMNS[i], field(i)),
                })
            };
            let params = SoilParams {
                ks: num(1)?,
                theta_s: num(2)?,
                theta_r: num(3)?,
                alpha_vg: num(4)?,
                n_vg: num(5)?,
            };
            params.validate().map_err(|e| Error::Parse {
                path: origin.to_string(),
                line,
                msg: e.to_string(),
            })?;
            if field(0) == "*" {
                uniform = Some((params, line));
            } else {
                let id = field(0).parse::<usize>().map_err(|_| Error::Parse {
                    path: origin.to_string(),
                    line,
                    msg: format!("bad node_id `{}`", field(0)),
                })?;
                rows.push((id, params, line));
            }
        }

        match (uniform, rows.is_empty()) {
            (Some((p, _)), true) => Ok(SoilMap::Uniform(p)),
            (Some((_, line)), false) => Err(Error::Parse {
                path: origin.to_string(),
                line,
                msg: "uniform `*` row mixed with per-node rows".into(),
            }),
            (None, true) => Err(Error::Validation(format!("{origin}: soil map has no rows"))),
            (None, false) => {
                let n = rows.len();
                let mut slots: Vec<Option<SoilParams>> = vec![None; n];
                for (id, p, line) in rows {
                    let slot = slots.get_mut(id).ok_or_else(|| Error::Parse {
                        path: origin.to_string(),
                        line,
                        msg: format!("node_id {id} outside 0..{n}"),
                    })?;
                    if slot.replace(p).is_some() {
                        return Err(Error::Parse {
                            path: origin.to_string(),
                            line,
                            msg: format!("duplicate node_id {id}"),
                        });
                    }
                }
                Ok(SoilMap::PerNode(
                    slots.into_iter().map(Option::unwrap).collect(),
                ))
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("node_id,Ks,theta_s,theta_r,alpha_vg,n_vg\n");
        let mut row = |id: &str, p: &SoilParams| {
            out.push_str(&format!(
                "{id},{},{},{},{},{}\n",
                p.ks, p.theta_s, p.theta_r, p.alpha_vg, p.n_vg
            ));
        };
        match self {
            SoilMap::Uniform(p) => row("*", p),
            SoilMap::PerNode(v) => {
                for (i, p) in v.iter().enumerate() {
                    row(&i.to_string(), p);
                }
            }
        }
        out
    }
}

pub(crate) fn csv_error(origin: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: origin.to_string(),
        line,
        msg: e.to_string(),
    }
}
