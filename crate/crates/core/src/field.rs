//! Finite-volume discretization of the cylindrical Richards equation.
//!
//! Each node balances the fluxes through its six faces. Interface
//! conductivities are arithmetic means of the neighbouring `K(h)` values,
//! the azimuthal direction is periodic, the inner and outer radial faces
//! are closed, the surface receives the sprinkler and rain flux, and the
//! bottom either drains freely (unit gradient) or is sealed.

use serde::{Deserialize, Serialize};

use crate::crop::{et_for, stress_factor_unchecked, CropContext};
use crate::error::{Error, Result};
use crate::grid::CylGrid;
use crate::hydraulics::{
    evaluate_unchecked, head_from_theta_unchecked, SoilMap, DEFAULT_CAPACITY_FLOOR,
};
use crate::integrate::{
    advance, Dynamics, EvalInfo, FluxTotals, Forcing, MassLedger, StepControl, Workspace,
};
use crate::SECONDS_PER_DAY;

/// Rain and reference evapotranspiration (both m/s).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    pub rain: f64,
    pub pet: f64,
}

impl WeatherSample {
    pub fn validate(&self) -> Result<()> {
        if self.rain >= 0.0 && self.pet >= 0.0 && self.rain.is_finite() && self.pet.is_finite() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "weather must be finite and non-negative, got {self:?}"
            )))
        }
    }
}

/// Center pivot: one sprinkler per radial ring sweeping one azimuthal
/// sector at a time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PivotConfig {
    /// Time for one full revolution (s).
    pub rotation_period: f64,
    pub u_lb: f64,
    pub u_ub: f64,
    /// Time offset of the pivot angle: the sector at `t` is the sector an
    /// unshifted pivot would water at `t + phase` (s).
    #[serde(default)]
    pub phase: f64,
}

impl PivotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rotation_period > 0.0
            && self.rotation_period.is_finite()
            && self.u_lb >= 0.0
            && self.u_lb <= self.u_ub
            && self.u_ub.is_finite()
            && self.phase.is_finite()
        {
            Ok(())
        } else {
            Err(Error::param(format!(
                "invalid pivot configuration {self:?}"
            )))
        }
    }

    /// Time the pivot spends over one sector (s).
    #[inline]
    pub fn dwell(&self, n_theta: usize) -> f64 {
        self.rotation_period / n_theta as f64
    }

    #[inline]
    pub fn sector(&self, t: f64, n_theta: usize) -> usize {
        let tau = (t + self.phase).rem_euclid(self.rotation_period);
        ((tau / self.rotation_period * n_theta as f64).floor() as usize).min(n_theta - 1)
    }

    /// First sector change strictly after `t`.
    pub fn next_sector_change(&self, t: f64, n_theta: usize) -> f64 {
        let dwell = self.dwell(n_theta);
        let tau = (t + self.phase).rem_euclid(self.rotation_period);
        let idx = (tau / dwell).floor();
        let next = t + (idx + 1.0) * dwell - tau;
        if next > t {
            next
        } else {
            t + dwell
        }
    }
}

/// Sprinkler reach at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct InputMask {
    pub sector: usize,
    /// Surface node ids under the pivot, ordered by ring.
    pub active: Vec<usize>,
    /// Per-surface-node input bounds (m/s).
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn pivot_input_mask(t: f64, grid: &CylGrid, pivot: &PivotConfig) -> InputMask {
    let sector = pivot.sector(t, grid.n_theta);
    let active: Vec<usize> = (0..grid.n_r).map(|i| grid.surface_id(i, sector)).collect();
    let mut lower = vec![0.0; grid.layer_len()];
    let mut upper = vec![0.0; grid.layer_len()];
    for &id in &active {
        lower[id] = pivot.u_lb;
        upper[id] = pivot.u_ub;
    }
    InputMask {
        sector,
        active,
        lower,
        upper,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottomBoundary {
    #[default]
    FreeDrainage,
    Sealed,
}

/// Sprinklers run at `rates[ring]` (m/s) on the active sector from
/// `start` for `duration` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrrigationEvent {
    pub start: f64,
    pub duration: f64,
    pub rates: Vec<f64>,
}

impl IrrigationEvent {
    #[inline]
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    #[inline]
    fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end()
    }
}

pub fn validate_events(events: &[IrrigationEvent], n_r: usize) -> Result<()> {
    for (n, e) in events.iter().enumerate() {
        if e.rates.len() != n_r {
            return Err(Error::shape(format!(
                "event {n} has {} sprinkler rates, field has {n_r} rings",
                e.rates.len()
            )));
        }
        if !(e.duration > 0.0) || !e.start.is_finite() || e.rates.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::param(format!("invalid irrigation event {e:?}")));
        }
        if n > 0 && e.start < events[n - 1].end() {
            return Err(Error::param(format!(
                "irrigation event {n} overlaps its predecessor"
            )));
        }
    }
    Ok(())
}

/// Daily weather, pivot position and sprinkler schedule as seen by the field.
#[derive(Debug, Clone, Copy)]
pub struct Drivers<'a> {
    /// Daily weather from season day 0; the last day is held beyond the end.
    pub weather: &'a [WeatherSample],
    pub pivot: &'a PivotConfig,
    pub events: &'a [IrrigationEvent],
    pub grid: &'a CylGrid,
}

impl Drivers<'_> {
    fn event_at(&self, t: f64) -> Option<&IrrigationEvent> {
        // Events are few and sorted; a linear scan from the back is fine.
        self.events.iter().rev().find(|e| e.contains(t))
    }

    pub fn weather_at(&self, t: f64) -> WeatherSample {
        match self.weather.len() {
            0 => WeatherSample::default(),
            n => self.weather[crate::crop::day_index(t).min(n - 1)],
        }
    }
}

impl Forcing for Drivers<'_> {
    fn next_break(&self, t: f64) -> f64 {
        let mut next = ((t / SECONDS_PER_DAY).floor() + 1.0) * SECONDS_PER_DAY;
        for e in self.events {
            if e.start > t {
                next = next.min(e.start);
            } else if e.contains(t) {
                next = next
                    .min(e.end())
                    .min(self.pivot.next_sector_change(t, self.grid.n_theta));
            }
        }
        next
    }

    fn sample(&self, t: f64, surface: &mut [f64]) -> WeatherSample {
        surface.fill(0.0);
        if let Some(e) = self.event_at(t) {
            let sector = self.pivot.sector(t, self.grid.n_theta);
            for (i, &rate) in e.rates.iter().enumerate() {
                surface[self.grid.surface_id(i, sector)] = rate;
            }
        }
        self.weather_at(t)
    }
}

/// Sampled field trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub ledger: MassLedger,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }

    /// Head history of one node.
    pub fn node_series(&self, id: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[id]).collect()
    }
}

/// Full-order field dynamics `dx/dt = f(x, u, d)`.
#[derive(Debug, Clone)]
pub struct FieldModel {
    grid: CylGrid,
    soil: SoilMap,
    crop: Option<CropContext>,
    bottom: BottomBoundary,
    c_floor: f64,
    // per-ring geometry
    volume: Vec<f64>,
    plan_area: Vec<f64>,
    radial_coef: Vec<f64>,
    azimuthal_coef: Vec<f64>,
    axial_coef: Vec<f64>,
}

impl FieldModel {
    pub fn new(
        grid: CylGrid,
        soil: SoilMap,
        crop: Option<CropContext>,
        bottom: BottomBoundary,
    ) -> Result<Self> {
        soil.validate_for(grid.len())?;
        if let Some(c) = &crop {
            c.feddes.validate()?;
            c.roots.validate(grid.n_z)?;
        }
        let rings = 0..grid.n_r;
        Ok(FieldModel {
            volume: rings.clone().map(|i| grid.volume(i)).collect(),
            plan_area: rings.clone().map(|i| grid.plan_area(i)).collect(),
            // face at r_{i+1/2} = (i + 1) dr between rings i and i + 1
            radial_coef: rings
                .clone()
                .map(|i| (i + 1) as f64 * grid.dr * grid.dtheta * grid.dz / grid.dr)
                .collect(),
            azimuthal_coef: rings
                .clone()
                .map(|i| grid.dr * grid.dz / (grid.r(i) * grid.dtheta))
                .collect(),
            axial_coef: rings.map(|i| grid.plan_area(i) / grid.dz).collect(),
            grid,
            soil,
            crop,
            bottom,
            c_floor: DEFAULT_CAPACITY_FLOOR,
        })
    }

    pub fn with_capacity_floor(mut self, c_floor: f64) -> Result<Self> {
        if !(c_floor > 0.0) {
            return Err(Error::param(format!(
                "capacity floor must be positive, got {c_floor}"
            )));
        }
        self.c_floor = c_floor;
        Ok(self)
    }

    pub fn grid(&self) -> &CylGrid {
        &self.grid
    }

    pub fn soil(&self) -> &SoilMap {
        &self.soil
    }

    pub fn crop(&self) -> Option<&CropContext> {
        self.crop.as_ref()
    }

    pub fn bottom(&self) -> BottomBoundary {
        self.bottom
    }

    pub fn node_volume(&self, id: usize) -> f64 {
        self.volume[id % self.grid.n_r]
    }

    /// Stored water `sum theta(h) V` (m³).
    pub fn storage(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(id, &h)| {
                evaluate_unchecked(h, self.soil.get(id), self.c_floor).theta * self.node_volume(id)
            })
            .sum()
    }

    fn check_shapes(&self, x: &[f64], surface: &[f64]) -> Result<()> {
        if x.len() != self.grid.len() {
            return Err(Error::shape(format!(
                "state has {} entries, grid has {}",
                x.len(),
                self.grid.len()
            )));
        }
        if surface.len() != self.grid.layer_len() {
            return Err(Error::shape(format!(
                "surface input has {} entries, grid surface has {}",
                surface.len(),
                self.grid.layer_len()
            )));
        }
        Ok(())
    }

    /// `dx/dt` for per-surface-node irrigation `surface` (m/s) and weather `d` at time `t`.
    pub fn rhs(&self, x: &[f64], surface: &[f64], d: WeatherSample, t: f64) -> Result<Vec<f64>> {
        self.check_shapes(x, surface)?;
        let mut out = vec![0.0; x.len()];
        let mut ws = Workspace::new(x.len());
        self.eval_full(x, surface, d, t, &mut out, &mut ws)?;
        Ok(out)
    }

    /// Like [`FieldModel::rhs`] but also reports boundary and sink fluxes.
    pub fn rhs_with_fluxes(
        &self,
        x: &[f64],
        surface: &[f64],
        d: WeatherSample,
        t: f64,
    ) -> Result<(Vec<f64>, FluxTotals)> {
        self.check_shapes(x, surface)?;
        let mut out = vec![0.0; x.len()];
        let mut ws = Workspace::new(x.len());
        let info = self.eval_full(x, surface, d, t, &mut out, &mut ws)?;
        Ok((out, info.fluxes))
    }

    pub(crate) fn eval_full(
        &self,
        x: &[f64],
        surface: &[f64],
        d: WeatherSample,
        t: f64,
        out: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<EvalInfo> {
        let g = &self.grid;
        let (nr, nt, nz) = (g.n_r, g.n_theta, g.n_z);
        let lay = g.layer_len();

        for (id, &h) in x.iter().enumerate() {
            if !h.is_finite() {
                return Err(Error::NonFinite { node: id, time: t });
            }
            let s = evaluate_unchecked(h, self.soil.get(id), self.c_floor);
            ws.k[id] = s.k;
            ws.c[id] = s.c;
            ws.theta[id] = s.theta;
        }
        let (k, net, diag) = (&ws.k, &mut ws.net, &mut ws.diag);
        net.fill(0.0);
        diag.fill(0.0);

        if nr > 1 {
            for layer in 0..nz * nt {
                let base = layer * nr;
                for i in 0..nr - 1 {
                    let (a, b) = (base + i, base + i + 1);
                    let cond = 0.5 * (k[a] + k[b]) * self.radial_coef[i];
                    let q = cond * (x[a] - x[b]);
                    net[a] -= q;
                    net[b] += q;
                    diag[a] += cond;
                    diag[b] += cond;
                }
            }
        }
        if nt > 1 {
            for kz in 0..nz {
                for j in 0..nt {
                    let jn = (j + 1) % nt;
                    for i in 0..nr {
                        let a = g.id(i, j, kz);
                        let b = g.id(i, jn, kz);
                        let cond = 0.5 * (k[a] + k[b]) * self.azimuthal_coef[i];
                        let q = cond * (x[a] - x[b]);
                        net[a] -= q;
                        net[b] += q;
                        diag[a] += cond;
                        diag[b] += cond;
                    }
                }
            }
        }
        // Downward flux K_mean ((h_a - h_b) / dz + 1) across each horizontal face.
        for a in 0..(nz - 1) * lay {
            let b = a + lay;
            let cond = 0.5 * (k[a] + k[b]) * self.axial_coef[a % nr];
            let q = cond * (x[a] - x[b] + g.dz);
            net[a] -= q;
            net[b] += q;
            diag[a] += cond;
            diag[b] += cond;
        }

        let mut fluxes = FluxTotals::default();
        for s in 0..lay {
            let area = self.plan_area[s % nr];
            let irr = surface[s] * area;
            let q = irr + d.rain * area;
            net[s] += q;
            fluxes.inflow += q;
            fluxes.irrigation += irr;
        }
        if self.bottom == BottomBoundary::FreeDrainage {
            for id in (nz - 1) * lay..nz * lay {
                let q = k[id] * self.plan_area[id % nr];
                net[id] -= q;
                fluxes.outflow += q;
            }
        }

        if let Some(crop) = &self.crop {
            let day = crop.calendar.at_time(t);
            let tp = et_for(d.pet, day, 1.0).tp;
            if tp > 0.0 {
                for kz in 0..nz {
                    let density = crop.roots.layer_density(kz, g.dz, nz, day.root_depth);
                    if density == 0.0 {
                        continue;
                    }
                    for id in g.layer(kz) {
                        let alpha = stress_factor_unchecked(x[id], &crop.feddes);
                        let w = alpha * tp * density * self.volume[id % nr];
                        net[id] -= w;
                        fluxes.uptake += w;
                    }
                }
            }
        }

        let mut max_rate = 0.0f64;
        let mut max_stiff = 0.0f64;
        for id in 0..x.len() {
            let cv = ws.c[id] * self.volume[id % nr];
            let r = net[id] / cv;
            out[id] = r;
            max_rate = max_rate.max(r.abs());
            max_stiff = max_stiff.max(diag[id] / cv);
        }
        Ok(EvalInfo {
            max_head_rate: max_rate,
            stable_dt: if max_stiff > 0.0 {
                1.0 / max_stiff
            } else {
                f64::INFINITY
            },
            fluxes,
        })
    }

    /// Moves each node's water content by `c dh` and maps it back through the
    /// retention curve, so the stored volume changes by exactly the net flux.
    /// Saturated nodes, and steps leaving `(theta_r, theta_s)`, fall back to
    /// a plain head update. Needs `ws` as filled by the preceding evaluation.
    pub(crate) fn apply_conservative(&self, x: &mut [f64], rate: &[f64], dt: f64, ws: &Workspace) {
        for (id, h) in x.iter_mut().enumerate() {
            let dh = dt * rate[id];
            if *h < 0.0 {
                let target = ws.theta[id] + ws.c[id] * dh;
                if let Some(next) = head_from_theta_unchecked(target, self.soil.get(id)) {
                    *h = next;
                    continue;
                }
            }
            *h += dh;
        }
    }

    /// Advances `x` by `dt` seconds from `t`.
    pub fn step(
        &self,
        x: &[f64],
        drivers: &Drivers,
        t: f64,
        dt: f64,
        ctrl: &StepControl,
    ) -> Result<Vec<f64>> {
        self.check_drivers(x, drivers)?;
        let mut state = x.to_vec();
        let mut ws = Workspace::new(x.len());
        let mut ledger = MassLedger::default();
        advance(self, drivers, &mut state, t, dt, ctrl, &mut ws, &mut ledger)?;
        Ok(state)
    }

    fn check_drivers(&self, x: &[f64], drivers: &Drivers) -> Result<()> {
        if x.len() != self.grid.len() {
            return Err(Error::shape(format!(
                "state has {} entries, grid has {}",
                x.len(),
                self.grid.len()
            )));
        }
        if drivers.grid != &self.grid {
            return Err(Error::Consistency(
                "drivers refer to a different grid".into(),
            ));
        }
        drivers.pivot.validate()?;
        validate_events(drivers.events, self.grid.n_r)?;
        drivers.weather.iter().try_for_each(WeatherSample::validate)
    }

    /// Simulates from `t0` for `horizon` seconds, sampling every `dt_out`.
    pub fn simulate(
        &self,
        x0: &[f64],
        drivers: &Drivers,
        t0: f64,
        horizon: f64,
        dt_out: f64,
        ctrl: &StepControl,
    ) -> Result<Trajectory> {
        self.check_drivers(x0, drivers)?;
        ctrl.validate()?;
        sample_run(self, drivers, x0, t0, horizon, dt_out, ctrl)
    }
}

/// Shared sampling loop for full and reduced simulations.
pub(crate) fn sample_run<D: Dynamics + ?Sized, F: Forcing + ?Sized>(
    model: &D,
    forcing: &F,
    x0: &[f64],
    t0: f64,
    horizon: f64,
    dt_out: f64,
    ctrl: &StepControl,
) -> Result<Trajectory> {
    if !(horizon > 0.0 && dt_out > 0.0) {
        return Err(Error::param(format!(
            "horizon and output interval must be positive, got {horizon} and {dt_out}"
        )));
    }
    let n_out = ((horizon / dt_out) - 1e-9).ceil().max(1.0) as usize;
    let mut ws = Workspace::new(model.node_count());
    let mut ledger = MassLedger::default();
    let mut state = x0.to_vec();
    let mut times = Vec::with_capacity(n_out + 1);
    let mut states = Vec::with_capacity(n_out + 1);
    times.push(t0);
    states.push(state.clone());
    let mut t = t0;
    for m in 1..=n_out {
        let target = if m == n_out {
            t0 + horizon
        } else {
            t0 + m as f64 * dt_out
        };
        advance(
            model,
            forcing,
            &mut state,
            t,
            target - t,
            ctrl,
            &mut ws,
            &mut ledger,
        )?;
        t = target;
        times.push(t);
        states.push(state.clone());
    }
    Ok(Trajectory {
        times,
        states,
        ledger,
    })
}

impl Dynamics for FieldModel {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn surface_len(&self) -> usize {
        self.grid.layer_len()
    }

    fn node_count(&self) -> usize {
        self.grid.len()
    }

    fn eval(
        &self,
        state: &[f64],
        surface: &[f64],
        weather: WeatherSample,
        t: f64,
        out: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<EvalInfo> {
        self.eval_full(state, surface, weather, t, out, ws)
    }

    fn apply(&self, state: &mut [f64], rate: &[f64], dt: f64, ws: &mut Workspace) {
        self.apply_conservative(state, rate, dt, ws);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crop::{CropCalendar, CropDay, FeddesParams, RootDistribution};
    use crate::hydraulics::SoilParams;

    fn pivot() -> PivotConfig {
        PivotConfig {
            rotation_period: 8.0 * 3600.0,
            u_lb: 0.0,
            u_ub: 4e-7,
            phase: 0.0,
        }
    }

    fn desk_model(crop: bool) -> FieldModel {
        let grid = CylGrid::new(50.0, 0.3, 3, 16, 4).unwrap();
        let crop = crop.then(|| CropContext {
            calendar: CropCalendar::constant(
                30,
                CropDay {
                    kc: 1.0,
                    ky: 1.0,
                    lai: 2.0,
                    root_depth: 0.15,
                },
            )
            .unwrap(),
            feddes: FeddesParams::default(),
            roots: RootDistribution::Uniform,
        });
        FieldModel::new(
            grid,
            SoilMap::Uniform(SoilParams::LOAM),
            crop,
            BottomBoundary::FreeDrainage,
        )
        .unwrap()
    }

    #[test]
    fn sector_schedule() {
        let p = pivot();
        assert_eq!(p.sector(0.0, 64), 0);
        assert_eq!(p.sector(p.rotation_period, 64), 0);
        assert_eq!(p.dwell(64), 450.0);
        assert_eq!(p.sector(449.9, 64), 0);
        assert_eq!(p.sector(450.0, 64), 1);
        assert_eq!(p.sector(-1.0, 64), 63);
        assert_eq!(p.next_sector_change(0.0, 64), 450.0);
        assert_eq!(p.next_sector_change(450.0, 64), 900.0);
        let shifted = PivotConfig { phase: 900.0, ..p };
        assert_eq!(shifted.sector(0.0, 64), 2);
    }

    #[test]
    fn input_mask_bounds() {
        let g = CylGrid::new(50.0, 0.3, 3, 16, 4).unwrap();
        let m = pivot_input_mask(1800.0 * 5.5, &g, &pivot());
        assert_eq!(m.sector, 5);
        assert_eq!(m.active, vec![g.id(0, 5, 0), g.id(1, 5, 0), g.id(2, 5, 0)]);
        for s in 0..g.layer_len() {
            let on = m.active.contains(&s);
            assert_eq!(m.upper[s], if on { 4e-7 } else { 0.0 });
            assert_eq!(m.lower[s], 0.0);
        }
    }

    #[test]
    fn uniform_state_drains_only_at_boundaries() {
        let m = desk_model(false);
        let g = *m.grid();
        let x = vec![-1.5; g.len()];
        let r = m
            .rhs(&x, &vec![0.0; g.layer_len()], WeatherSample::default(), 0.0)
            .unwrap();
        for k in 0..g.n_z {
            for id in g.layer(k) {
                match k {
                    0 => assert!(r[id] < 0.0),
                    // inflow from above balances unit-gradient drainage
                    k if k == g.n_z - 1 => assert!(r[id].abs() < 1e-12, "{}", r[id]),
                    _ => assert_eq!(r[id], 0.0),
                }
            }
        }
    }

    #[test]
    fn rhs_conserves_mass_instantaneously() {
        let m = desk_model(true);
        let g = *m.grid();
        let x: Vec<f64> = (0..g.len())
            .map(|id| -0.5 - 2.0 * ((id * 37 % 101) as f64 / 101.0))
            .collect();
        let mut surface = vec![0.0; g.layer_len()];
        for i in 0..g.n_r {
            surface[g.surface_id(i, 3)] = 2e-7 * (i + 1) as f64;
        }
        let d = WeatherSample {
            rain: 1e-8,
            pet: 5e-8,
        };
        let (r, f) = m.rhs_with_fluxes(&x, &surface, d, 100.0).unwrap();
        let mut ws = Workspace::new(g.len());
        let mut out = vec![0.0; g.len()];
        m.eval_full(&x, &surface, d, 100.0, &mut out, &mut ws)
            .unwrap();
        let storage_rate: f64 = (0..g.len())
            .map(|id| ws.c[id] * r[id] * m.node_volume(id))
            .sum();
        let net = f.inflow - f.outflow - f.uptake;
        assert!(f.uptake > 0.0 && f.inflow > 0.0);
        assert!((storage_rate - net).abs() <= 1e-8 * f.inflow.max(f.outflow + f.uptake));
    }

    #[test]
    fn rejects_non_finite_state() {
        let m = desk_model(false);
        let mut x = vec![-1.0; m.grid().len()];
        x[17] = f64::NAN;
        let e = m
            .rhs(&x, &vec![0.0; 48], WeatherSample::default(), 0.0)
            .unwrap_err();
        assert!(matches!(e, Error::NonFinite { node: 17, .. }));
    }

    #[test]
    fn sealed_hydrostatic_column_is_at_rest() {
        let grid = CylGrid::new(1.0, 0.3, 1, 1, 6).unwrap();
        let m = FieldModel::new(
            grid,
            SoilMap::Uniform(SoilParams::LOAM),
            None,
            BottomBoundary::Sealed,
        )
        .unwrap();
        let x: Vec<f64> = (0..6).map(|k| -1.5 + k as f64 * grid.dz).collect();
        let p = pivot();
        let drivers = Drivers {
            weather: &[],
            pivot: &p,
            events: &[],
            grid: &grid,
        };
        let y = m
            .step(&x, &drivers, 0.0, 86400.0, &StepControl::default())
            .unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn euler_consistency() {
        let m = desk_model(true);
        let g = *m.grid();
        let x: Vec<f64> = (0..g.len())
            .map(|id| -0.8 - 0.01 * (id % 7) as f64)
            .collect();
        let p = pivot();
        let weather = [WeatherSample {
            rain: 0.0,
            pet: 5e-8,
        }];
        let drivers = Drivers {
            weather: &weather,
            pivot: &p,
            events: &[],
            grid: &g,
        };
        let f = m
            .rhs(&x, &vec![0.0; g.layer_len()], weather[0], 0.0)
            .unwrap();
        let max_rate = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        // Force several sub-steps inside each step.
        let ctrl = StepControl {
            dh_max: max_rate * 0.05,
            ..StepControl::default()
        };
        let err = |dt: f64| {
            let y = m.step(&x, &drivers, 0.0, dt, &ctrl).unwrap();
            y.iter()
                .zip(&x)
                .zip(&f)
                .map(|((y, x), f)| (y - x - dt * f).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let (e1, e2, e4) = (err(1.0), err(0.5), err(0.25));
        assert!(e1 > 0.0);
        let r1 = (e1 / 1.0) / (e2 / 0.5);
        let r2 = (e2 / 0.5) / (e4 / 0.25);
        assert!((1.6..2.6).contains(&r1), "{r1}");
        assert!((1.6..2.6).contains(&r2), "{r2}");
    }

    #[test]
    fn drainage_dries_surface_monotonically() {
        let grid = CylGrid::new(1.0, 0.3, 1, 1, 6).unwrap();
        let m = FieldModel::new(
            grid,
            SoilMap::Uniform(SoilParams::LOAM),
            None,
            BottomBoundary::FreeDrainage,
        )
        .unwrap();
        let p = pivot();
        let drivers = Drivers {
            weather: &[],
            pivot: &p,
            events: &[],
            grid: &grid,
        };
        let tr = m
            .simulate(
                &vec![-1.0; 6],
                &drivers,
                0.0,
                86400.0,
                3600.0,
                &StepControl::default(),
            )
            .unwrap();
        assert_eq!(tr.len(), 25);
        let top = tr.node_series(0);
        assert!(top.windows(2).all(|w| w[1] <= w[0]), "{top:?}");
        assert!(top[24] < top[0]);
    }

    #[test]
    fn simulate_sample_count() {
        let m = desk_model(false);
        let g = *m.grid();
        let p = pivot();
        let drivers = Drivers {
            weather: &[],
            pivot: &p,
            events: &[],
            grid: &g,
        };
        let tr = m
            .simulate(
                &vec![-1.0; g.len()],
                &drivers,
                0.0,
                600.0,
                600.0,
                &StepControl::default(),
            )
            .unwrap();
        assert_eq!(tr.times, vec![0.0, 600.0]);
    }
}
