//! Explicit Euler time stepping with sub-steps limited by head change and
//! the diffusive stability bound. Shared by the full and reduced models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::WeatherSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepControl {
    /// Largest head change any node may see in one sub-step (m).
    pub dh_max: f64,
    /// Sub-steps shorter than this abort with a stiffness error (s).
    pub dt_min: f64,
    /// Fraction of the diffusive stability limit used as a step cap.
    pub safety: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            dh_max: 0.05,
            dt_min: 1e-3,
            safety: 0.9,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if self.dh_max > 0.0 && self.dt_min > 0.0 && self.safety > 0.0 && self.safety <= 1.0 {
            Ok(())
        } else {
            Err(Error::param(format!("invalid step control {self:?}")))
        }
    }
}

/// Volumetric boundary and sink fluxes at one instant (m³/s).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FluxTotals {
    /// Irrigation plus rain entering through the surface.
    pub inflow: f64,
    /// Drainage leaving through the bottom.
    pub outflow: f64,
    /// Root water uptake, counted positive.
    pub uptake: f64,
    /// The irrigation part of `inflow`.
    pub irrigation: f64,
}

/// Time-integrated fluxes (m³).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MassLedger {
    pub inflow: f64,
    pub outflow: f64,
    pub uptake: f64,
    pub irrigation: f64,
}

impl MassLedger {
    pub fn net(&self) -> f64 {
        self.inflow - self.outflow - self.uptake
    }

    pub fn gross(&self) -> f64 {
        self.inflow + self.outflow + self.uptake
    }

    pub(crate) fn add(&mut self, f: &FluxTotals, dt: f64) {
        self.inflow += f.inflow * dt;
        self.outflow += f.outflow * dt;
        self.uptake += f.uptake * dt;
        self.irrigation += f.irrigation * dt;
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalInfo {
    /// Largest |dh/dt| over physical nodes (m/s).
    pub max_head_rate: f64,
    /// Diffusive stability limit for an explicit step (s).
    pub stable_dt: f64,
    pub fluxes: FluxTotals,
}

/// Scratch buffers reused across right-hand-side evaluations.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    pub(crate) k: Vec<f64>,
    pub(crate) c: Vec<f64>,
    pub(crate) theta: Vec<f64>,
    pub(crate) net: Vec<f64>,
    pub(crate) diag: Vec<f64>,
    pub(crate) lifted: Vec<f64>,
    pub(crate) full_rate: Vec<f64>,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        Workspace {
            k: vec![0.0; n],
            c: vec![0.0; n],
            theta: vec![0.0; n],
            net: vec![0.0; n],
            diag: vec![0.0; n],
            lifted: vec![0.0; n],
            full_rate: vec![0.0; n],
        }
    }
}

/// Piecewise-constant boundary forcing.
pub trait Forcing {
    /// The first time after `t` at which the forcing may change.
    fn next_break(&self, t: f64) -> f64;

    /// Fills the per-surface-node irrigation rate (m/s) at `t` and returns the weather.
    fn sample(&self, t: f64, surface: &mut [f64]) -> WeatherSample;
}

/// State-space dynamics that can be advanced by [`advance`].
pub trait Dynamics {
    fn dim(&self) -> usize;

    /// Number of surface nodes in the underlying field.
    fn surface_len(&self) -> usize;

    /// Number of nodes in the underlying field.
    fn node_count(&self) -> usize;

    fn eval(
        &self,
        state: &[f64],
        surface: &[f64],
        weather: WeatherSample,
        t: f64,
        out: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<EvalInfo>;

    /// Applies one sub-step of length `dt` along `rate`, as returned by the
    /// last call to [`Dynamics::eval`]. Plain Euler unless overridden.
    fn apply(&self, state: &mut [f64], rate: &[f64], dt: f64, ws: &mut Workspace) {
        let _ = ws;
        for (s, r) in state.iter_mut().zip(rate) {
            *s += dt * r;
        }
    }
}

/// Advances `state` from `t0` by `dt` seconds, splitting at forcing breaks.
pub fn advance<D, F>(
    model: &D,
    forcing: &F,
    state: &mut [f64],
    t0: f64,
    dt: f64,
    ctrl: &StepControl,
    ws: &mut Workspace,
    ledger: &mut MassLedger,
) -> Result<()>
where
    D: Dynamics + ?Sized,
    F: Forcing + ?Sized,
{
    if !(dt > 0.0) {
        return Err(Error::param(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let t_end = t0 + dt;
    let mut surface = vec![0.0; model.surface_len()];
    let mut rate = vec![0.0; model.dim()];
    let mut t = t0;
    while t < t_end {
        let seg_end = forcing.next_break(t).min(t_end);
        // Sampling mid-segment keeps rounding at break points from picking the wrong piece.
        let t_mid = 0.5 * (t + seg_end);
        let weather = forcing.sample(t_mid, &mut surface);
        while t < seg_end {
            let info = model.eval(state, &surface, weather, t_mid, &mut rate, ws)?;
            let remaining = seg_end - t;
            let mut h = remaining.min(info.stable_dt * ctrl.safety);
            if info.max_head_rate > 0.0 {
                h = h.min(ctrl.dh_max / info.max_head_rate);
            }
            if h < remaining && h < ctrl.dt_min {
                return Err(Error::Stiffness {
                    time: t,
                    dt_sub: h,
                    dt_min: ctrl.dt_min,
                });
            }
            model.apply(state, &rate, h, ws);
            ledger.add(&info.fluxes, h);
            t = if h >= remaining { seg_end } else { t + h };
        }
    }
    Ok(())
}
