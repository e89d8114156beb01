//! Irrigation scheduling over a three-segment horizon: an irrigation event,
//! a dry spell of free length `T`, and the following event. Amounts and `T`
//! are chosen together on the reduced model; the receding-horizon loop then
//! drives the full model with the chosen events.

use serde::{Deserialize, Serialize};

use crate::crop::{aggregate_stress, yield_deficiency};
use crate::error::{Error, Result};
use crate::field::{Drivers, FieldModel, IrrigationEvent, PivotConfig, WeatherSample};
use crate::integrate::{advance, Dynamics, MassLedger, StepControl, Workspace};
use crate::reduction::ReducedModel;
use crate::weather::{forecast_view, WeatherSeries};
use crate::SECONDS_PER_DAY;

/// Target band for root-zone heads (m). The inner pair is the band the
/// scheduler aims for; the outer pair is where the crop starts to suffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZoneSpec {
    pub actual_lower: f64,
    pub actual_upper: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for ZoneSpec {
    fn default() -> Self {
        ZoneSpec {
            actual_lower: -3.1,
            actual_upper: -0.25,
            lower: -2.8,
            upper: -1.0,
        }
    }
}

impl ZoneSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.actual_lower < self.lower
            && self.lower < self.upper
            && self.upper < self.actual_upper;
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!(
                "zone bands must nest strictly, got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerWeights {
    /// Squared yield deficiency.
    pub q_y: f64,
    /// Irrigation amount.
    pub q_u: f64,
    /// Reward for a long dry spell.
    pub q_t: f64,
    /// Squared excursions above the upper zone bound.
    pub q_r_upper: f64,
    /// Squared excursions below the lower zone bound.
    pub q_r_lower: f64,
}

impl Default for SchedulerWeights {
    fn default() -> Self {
        SchedulerWeights {
            q_y: 1.0,
            q_u: 1.0,
            q_t: 1.0,
            q_r_upper: 1.0,
            q_r_lower: 100.0,
        }
    }
}

impl SchedulerWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.q_y, self.q_u, self.q_t, self.q_r_upper, self.q_r_lower];
        if w.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::param(format!(
                "weights must be non-negative, got {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HorizonSpec {
    /// Samples in the first event.
    pub n1: usize,
    /// Samples in the dry spell, whatever its length.
    pub n2: usize,
    /// Samples in the second event.
    pub n3: usize,
    /// Bounds on the dry-spell length (s).
    pub t_lb: f64,
    pub t_ub: f64,
    /// Length of one irrigation event (s).
    pub event_duration: f64,
}

impl Default for HorizonSpec {
    fn default() -> Self {
        HorizonSpec {
            n1: 8,
            n2: 48,
            n3: 8,
            t_lb: 1800.0,
            t_ub: 16.0 * SECONDS_PER_DAY,
            event_duration: 8.0 * 3600.0,
        }
    }
}

impl HorizonSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.n3 == 0 {
            return Err(Error::param("segment sample counts must be positive"));
        }
        if !(self.t_lb > 0.0 && self.t_lb < self.t_ub && self.t_ub.is_finite()) {
            return Err(Error::param(format!(
                "need 0 < T_lb < T_ub, got {} and {}",
                self.t_lb, self.t_ub
            )));
        }
        if !(self.event_duration > 0.0 && self.event_duration.is_finite()) {
            return Err(Error::param(format!(
                "event duration must be positive, got {}",
                self.event_duration
            )));
        }
        Ok(())
    }

    /// Total samples over the horizon.
    pub fn n(&self) -> usize {
        self.n1 + self.n2 + self.n3
    }
}

/// Cost terms of one horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub deficiency: f64,
    pub yield_term: f64,
    pub water: f64,
    pub time: f64,
    pub slack_upper: f64,
    pub slack_lower: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDecision {
    /// Per-sprinkler rates of the first and second event (m/s).
    pub u1: Vec<f64>,
    pub u3: Vec<f64>,
    /// Dry-spell length (s).
    pub t: f64,
    /// Slack per sample and output node.
    pub slack_upper: Vec<Vec<f64>>,
    pub slack_lower: Vec<Vec<f64>>,
    pub cost: CostBreakdown,
}

/// Reduced-model prediction over one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRollout {
    /// End time of each sample (s).
    pub times: Vec<f64>,
    /// Sample lengths (s).
    pub dts: Vec<f64>,
    /// Lifted heads at the output nodes after each sample.
    pub outputs: Vec<Vec<f64>>,
    /// Root-zone mean stress factor after each sample.
    pub stress: Vec<f64>,
    /// Crop sensitivity at each sample time.
    pub ky: Vec<f64>,
}

impl HorizonRollout {
    /// Yield deficiency over the horizon, counting each sample for its share of a day.
    pub fn deficiency(&self) -> f64 {
        let weighted: Vec<f64> = self
            .ky
            .iter()
            .zip(&self.dts)
            .map(|(k, dt)| k * dt / SECONDS_PER_DAY)
            .collect();
        yield_deficiency(&self.stress, &weighted).expect("series built together")
    }
}

/// Smallest non-negative slacks that bring every output inside `[lower, upper]`.
pub fn eliminate_slacks(outputs: &[Vec<f64>], zone: &ZoneSpec) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let upper = outputs
        .iter()
        .map(|y| y.iter().map(|v| (v - zone.upper).max(0.0)).collect())
        .collect();
    let lower = outputs
        .iter()
        .map(|y| y.iter().map(|v| (zone.lower - v).max(0.0)).collect())
        .collect();
    (upper, lower)
}

fn sum_sq(v: &[Vec<f64>]) -> f64 {
    v.iter().flatten().map(|e| e * e).sum()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Horizon cost with the slacks already eliminated.
pub fn horizon_cost(
    rollout: &HorizonRollout,
    u1: &[f64],
    u3: &[f64],
    t: f64,
    weights: &SchedulerWeights,
    zone: &ZoneSpec,
    spec: &HorizonSpec,
    u_ub: f64,
) -> (CostBreakdown, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (up, lo) = eliminate_slacks(&rollout.outputs, zone);
    let deficiency = rollout.deficiency();
    let water = if u_ub > 0.0 {
        weights.q_u * (spec.n1 as f64 * mean(u1) + spec.n3 as f64 * mean(u3)) / u_ub
    } else {
        0.0
    };
    let c = CostBreakdown {
        deficiency,
        yield_term: weights.q_y * deficiency * deficiency,
        water,
        time: -weights.q_t * spec.n2 as f64 * t / spec.t_ub,
        slack_upper: weights.q_r_upper * sum_sq(&up),
        slack_lower: weights.q_r_lower * sum_sq(&lo),
        total: 0.0,
    };
    let total = c.yield_term + c.water + c.time + c.slack_upper + c.slack_lower;
    (CostBreakdown { total, ..c }, up, lo)
}

/// Plans irrigation on a reduced field model.
#[derive(Debug, Clone)]
pub struct Scheduler<'a> {
    model: &'a ReducedModel<'a>,
    pivot: PivotConfig,
    zone: ZoneSpec,
    weights: SchedulerWeights,
    spec: HorizonSpec,
    outputs: Vec<usize>,
    ctrl: StepControl,
}

/// Largest number of projected-gradient iterations per inner solve.
const INNER_MAX_ITER: usize = 60;
/// Relative improvement below which the inner and outer searches stop.
const REL_TOL: f64 = 1e-4;
/// Finite-difference step in normalised input units.
const FD_STEP: f64 = 1e-4;
/// Seeds of the outer search over `T`.
const T_SEEDS: usize = 8;

impl<'a> Scheduler<'a> {
    /// `outputs` are the node ids whose heads are kept in the zone.
    pub fn new(
        model: &'a ReducedModel<'a>,
        pivot: PivotConfig,
        zone: ZoneSpec,
        weights: SchedulerWeights,
        spec: HorizonSpec,
        outputs: Vec<usize>,
        ctrl: StepControl,
    ) -> Result<Self> {
        pivot.validate()?;
        zone.validate()?;
        weights.validate()?;
        spec.validate()?;
        ctrl.validate()?;
        let n = model.full().grid().len();
        if outputs.is_empty() || outputs.iter().any(|&i| i >= n) {
            return Err(Error::param(format!(
                "output nodes must be a non-empty subset of 0..{n}"
            )));
        }
        Ok(Scheduler {
            model,
            pivot,
            zone,
            weights,
            spec,
            outputs,
            ctrl,
        })
    }

    pub fn model(&self) -> &ReducedModel<'a> {
        self.model
    }

    pub fn pivot(&self) -> &PivotConfig {
        &self.pivot
    }

    pub fn zone(&self) -> &ZoneSpec {
        &self.zone
    }

    pub fn weights(&self) -> &SchedulerWeights {
        &self.weights
    }

    pub fn spec(&self) -> &HorizonSpec {
        &self.spec
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    fn n_r(&self) -> usize {
        self.model.full().grid().n_r
    }

    fn check_inputs(&self, xi0: &[f64], u1: &[f64], u3: &[f64], t: f64) -> Result<()> {
        if xi0.len() != self.model.dim() {
            return Err(Error::shape(format!(
                "reduced state has {} entries, expected {}",
                xi0.len(),
                self.model.dim()
            )));
        }
        if let Some(i) = xi0.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                node: i,
                time: f64::NAN,
            });
        }
        let (lb, ub) = (self.pivot.u_lb, self.pivot.u_ub);
        for u in [u1, u3] {
            if u.len() != self.n_r() {
                return Err(Error::shape(format!(
                    "{} sprinkler rates for {} rings",
                    u.len(),
                    self.n_r()
                )));
            }
            if u.iter().any(|v| !(*v >= lb && *v <= ub)) {
                return Err(Error::Range(format!(
                    "sprinkler rates {u:?} outside [{lb}, {ub}]"
                )));
            }
        }
        if !(t >= self.spec.t_lb && t <= self.spec.t_ub) {
            return Err(Error::Range(format!(
                "T = {t} outside [{}, {}]",
                self.spec.t_lb, self.spec.t_ub
            )));
        }
        Ok(())
    }

    /// Predicts the horizon starting at `t0` from reduced state `xi0`.
    /// `weather` is indexed by season day.
    pub fn rollout_horizon(
        &self,
        xi0: &[f64],
        u1: &[f64],
        u3: &[f64],
        t: f64,
        weather: &[WeatherSample],
        t0: f64,
    ) -> Result<HorizonRollout> {
        self.check_inputs(xi0, u1, u3, t)?;
        self.rollout_unchecked(xi0, u1, u3, t, weather, t0)
    }

    fn rollout_unchecked(
        &self,
        xi0: &[f64],
        u1: &[f64],
        u3: &[f64],
        t: f64,
        weather: &[WeatherSample],
        t0: f64,
    ) -> Result<HorizonRollout> {
        self.rollout_from(xi0, u1, u3, t, weather, t0, None)
            .map(|(ro, _)| ro)
    }

    /// Runs the horizon, or only its last segment when `resume` holds the
    /// state reached before it under the same `u1` and `t`.
    #[allow(clippy::too_many_arguments)]
    fn rollout_from(
        &self,
        xi0: &[f64],
        u1: &[f64],
        u3: &[f64],
        t: f64,
        weather: &[WeatherSample],
        t0: f64,
        resume: Option<&Checkpoint>,
    ) -> Result<(HorizonRollout, Checkpoint)> {
        let d = self.spec.event_duration;
        let events = [
            IrrigationEvent {
                start: t0,
                duration: d,
                rates: u1.to_vec(),
            },
            IrrigationEvent {
                start: t0 + d + t,
                duration: d,
                rates: u3.to_vec(),
            },
        ];
        let grid = self.model.full().grid();
        let drivers = Drivers {
            weather,
            pivot: &self.pivot,
            events: &events,
            grid,
        };
        let mut times = Vec::with_capacity(self.spec.n());
        let mut dts = Vec::with_capacity(self.spec.n());
        for (start, len, n) in [
            (t0, d, self.spec.n1),
            (t0 + d, t, self.spec.n2),
            (t0 + d + t, d, self.spec.n3),
        ] {
            for j in 1..=n {
                let end = if j == n {
                    start + len
                } else {
                    start + len * j as f64 / n as f64
                };
                dts.push(end - times.last().copied().unwrap_or(t0));
                times.push(end);
            }
        }

        let crop = self.model.full().crop();
        let proj = self.model.projection();
        let (labels, w) = (proj.labels(), proj.weights());
        let split = self.spec.n1 + self.spec.n2;
        let mut ws = Workspace::new(self.model.node_count());
        let mut ledger = MassLedger::default();
        let (mut state, mut outputs, mut stress, mut ky, first) = match resume {
            Some(c) => (
                c.state.clone(),
                c.outputs.clone(),
                c.stress.clone(),
                c.ky.clone(),
                split,
            ),
            None => (
                xi0.to_vec(),
                Vec::with_capacity(times.len()),
                Vec::with_capacity(times.len()),
                Vec::with_capacity(times.len()),
                0,
            ),
        };
        let mut checkpoint = None;
        let mut now = if first == 0 { t0 } else { times[first - 1] };
        for (k, &end) in times.iter().enumerate().skip(first) {
            if k == split && resume.is_none() {
                checkpoint = Some(Checkpoint {
                    state: state.clone(),
                    outputs: outputs.clone(),
                    stress: stress.clone(),
                    ky: ky.clone(),
                });
            }
            advance(
                self.model,
                &drivers,
                &mut state,
                now,
                end - now,
                &self.ctrl,
                &mut ws,
                &mut ledger,
            )?;
            now = end;
            let y: Vec<f64> = self
                .outputs
                .iter()
                .map(|&i| w[labels[i]] * state[labels[i]])
                .collect();
            match crop {
                Some(c) => {
                    stress.push(aggregate_stress(y.iter().copied(), &c.feddes));
                    ky.push(c.calendar.at_time(end).ky);
                }
                None => {
                    stress.push(1.0);
                    ky.push(0.0);
                }
            }
            outputs.push(y);
        }
        let checkpoint = match (checkpoint, resume) {
            (Some(c), _) => c,
            (None, Some(c)) => c.clone(),
            (None, None) => unreachable!("the last segment has at least one sample"),
        };
        Ok((
            HorizonRollout {
                times,
                dts,
                outputs,
                stress,
                ky,
            },
            checkpoint,
        ))
    }

    /// Cost of a candidate decision.
    pub fn evaluate(
        &self,
        xi0: &[f64],
        u1: &[f64],
        u3: &[f64],
        t: f64,
        weather: &[WeatherSample],
        t0: f64,
    ) -> Result<ScheduleDecision> {
        let ro = self.rollout_horizon(xi0, u1, u3, t, weather, t0)?;
        let (cost, slack_upper, slack_lower) = horizon_cost(
            &ro,
            u1,
            u3,
            t,
            &self.weights,
            &self.zone,
            &self.spec,
            self.pivot.u_ub,
        );
        Ok(ScheduleDecision {
            u1: u1.to_vec(),
            u3: u3.to_vec(),
            t,
            slack_upper,
            slack_lower,
            cost,
        })
    }

    /// Chooses both event amounts and the dry-spell length.
    ///
    /// Outer golden-section search over `T` seeded from an even grid that
    /// includes both bounds; for each `T` a projected-gradient descent over
    /// the normalised rates with forward-difference gradients.
    pub fn solve_event(
        &self,
        xi0: &[f64],
        weather: &[WeatherSample],
        t0: f64,
    ) -> Result<ScheduleDecision> {
        let n_r = self.n_r();
        let mid = vec![0.5 * (self.pivot.u_lb + self.pivot.u_ub); n_r];
        self.check_inputs(xi0, &mid, &mid, self.spec.t_lb)?;
        let problem = Problem {
            s: self,
            xi0,
            weather,
            t0,
        };
        let mut best: Option<Candidate> = None;

        let (lb, ub) = (self.spec.t_lb, self.spec.t_ub);
        let seeds: Vec<f64> = (0..T_SEEDS)
            .map(|k| {
                if k + 1 == T_SEEDS {
                    ub
                } else {
                    lb + (ub - lb) * k as f64 / (T_SEEDS - 1) as f64
                }
            })
            .collect();
        let mut seed_cost = vec![f64::INFINITY; T_SEEDS];
        let mut warm = vec![0.5; 2 * n_r];
        for (k, &t) in seeds.iter().enumerate() {
            if let Some((v, f)) = problem.inner(t, &warm) {
                seed_cost[k] = f;
                if best.as_ref().map_or(true, |b| f < b.2) {
                    warm = v.clone();
                }
                consider(t, v, f, &mut best);
            }
        }
        if best.is_none() {
            return Err(Error::Scheduling(
                "every candidate horizon failed to integrate".into(),
            ));
        }

        // Golden-section refinement around the best seed.
        let k = (0..T_SEEDS)
            .min_by(|&a, &b| seed_cost[a].total_cmp(&seed_cost[b]))
            .expect("seeds");
        let (mut a, mut b) = (seeds[k.saturating_sub(1)], seeds[(k + 1).min(T_SEEDS - 1)]);
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let eval = |t: f64, best: &mut Option<Candidate>| -> f64 {
            let start = best
                .as_ref()
                .map(|b| b.1.clone())
                .unwrap_or_else(|| vec![0.5; 2 * n_r]);
            match problem.inner(t, &start) {
                Some((v, f)) => {
                    consider(t, v, f, best);
                    f
                }
                None => f64::INFINITY,
            }
        };
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let mut fc = eval(c, &mut best);
        let mut fd = eval(d, &mut best);
        let width_tol = 1e-3 * (ub - lb);
        while b - a > width_tol {
            let prev = fc.min(fd);
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                fc = eval(c, &mut best);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                fd = eval(d, &mut best);
            }
            let now = fc.min(fd);
            if prev.is_finite()
                && (prev - now).abs() <= REL_TOL * prev.abs().max(1e-12)
                && b - a < 0.05 * (ub - lb)
            {
                break;
            }
        }

        let (t, v, _) = best.expect("at least one seed succeeded");
        let (u1, u3) = problem.rates(&v);
        self.evaluate(xi0, &u1, &u3, t, weather, t0)
    }
}

/// Reduced state and per-sample records up to the start of the last segment.
#[derive(Debug, Clone)]
struct Checkpoint {
    state: Vec<f64>,
    outputs: Vec<Vec<f64>>,
    stress: Vec<f64>,
    ky: Vec<f64>,
}

/// `(T, normalised rates, cost)`.
type Candidate = (f64, Vec<f64>, f64);

fn consider(t: f64, v: Vec<f64>, f: f64, best: &mut Option<Candidate>) {
    if best.as_ref().map_or(true, |b| f < b.2) {
        *best = Some((t, v, f));
    }
}

struct Problem<'p, 'a> {
    s: &'p Scheduler<'a>,
    xi0: &'p [f64],
    weather: &'p [WeatherSample],
    t0: f64,
}

impl Problem<'_, '_> {
    fn rates(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (lb, ub) = (self.s.pivot.u_lb, self.s.pivot.u_ub);
        let map = |x: &f64| lb + x.clamp(0.0, 1.0) * (ub - lb);
        let n_r = v.len() / 2;
        (
            v[..n_r].iter().map(map).collect(),
            v[n_r..].iter().map(map).collect(),
        )
    }

    fn cost_from(
        &self,
        v: &[f64],
        t: f64,
        resume: Option<&Checkpoint>,
    ) -> Option<(f64, Checkpoint)> {
        let (u1, u3) = self.rates(v);
        let (ro, cp) = self
            .s
            .rollout_from(self.xi0, &u1, &u3, t, self.weather, self.t0, resume)
            .ok()?;
        let (c, _, _) = horizon_cost(
            &ro,
            &u1,
            &u3,
            t,
            &self.s.weights,
            &self.s.zone,
            &self.s.spec,
            self.s.pivot.u_ub,
        );
        c.total.is_finite().then_some((c.total, cp))
    }

    /// Projected gradient descent on the unit box at fixed `t`.
    fn inner(&self, t: f64, start: &[f64]) -> Option<(Vec<f64>, f64)> {
        let mut v = start.to_vec();
        let (mut f, mut cp) = match self.cost_from(&v, t, None) {
            Some(r) => r,
            None => {
                v.fill(0.0);
                self.cost_from(&v, t, None)?
            }
        };
        if self.s.pivot.u_ub == self.s.pivot.u_lb {
            return Some((v, f));
        }
        let n_r = v.len() / 2;
        let mut step = 0.25f64;
        for _ in 0..INNER_MAX_ITER {
            let mut g = vec![0.0; v.len()];
            for i in 0..v.len() {
                let h = if v[i] + FD_STEP <= 1.0 {
                    FD_STEP
                } else {
                    -FD_STEP
                };
                let mut p = v.clone();
                p[i] += h;
                // Second-event rates only affect the last segment.
                let resume = (i >= n_r).then_some(&cp);
                g[i] = match self.cost_from(&p, t, resume) {
                    Some((fp, _)) => (fp - f) / h,
                    None => 0.0,
                };
            }
            // Components that would push through an active bound do not count.
            let free: Vec<f64> = g
                .iter()
                .zip(&v)
                .map(|(&gi, &vi)| {
                    if (vi <= 0.0 && gi > 0.0) || (vi >= 1.0 && gi < 0.0) {
                        0.0
                    } else {
                        gi
                    }
                })
                .collect();
            let gmax = free.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if gmax == 0.0 {
                break;
            }
            let mut s = (2.0 * step).min(1.0);
            let mut accepted = None;
            while s > 1e-6 {
                let cand: Vec<f64> = v
                    .iter()
                    .zip(&g)
                    .map(|(x, gi)| (x - s * gi / gmax).clamp(0.0, 1.0))
                    .collect();
                let decrease: f64 = g
                    .iter()
                    .zip(v.iter().zip(&cand))
                    .map(|(gi, (a, b))| gi * (a - b))
                    .sum();
                if let Some((fc, cpc)) = self.cost_from(&cand, t, None) {
                    if fc <= f - 1e-4 * decrease && fc < f {
                        accepted = Some((cand, fc, cpc));
                        break;
                    }
                }
                s *= 0.5;
            }
            let Some((cand, fc, cpc)) = accepted else {
                break;
            };
            step = s;
            let gain = f - fc;
            v = cand;
            f = fc;
            cp = cpc;
            if gain <= REL_TOL * f.abs().max(1e-12) {
                break;
            }
        }
        Some((v, f))
    }
}

/// Result of a days-to-zone probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaysToZone {
    pub days: f64,
    /// The zone was not reached within the cap; `days` is the cap.
    pub capped: bool,
}

/// Irrigates once at `u_amount` on every sprinkler for `event_duration`
/// seconds, then lets the field dry. Returns the first time after the event
/// at which the mean head over `outputs` falls below `lower`, interpolated
/// between hourly samples. A zero amount skips the event.
#[allow(clippy::too_many_arguments)]
pub fn days_to_zone(
    model: &FieldModel,
    x0: &[f64],
    u_amount: f64,
    event_duration: f64,
    pivot: &PivotConfig,
    weather: &[WeatherSample],
    outputs: &[usize],
    lower: f64,
    ctrl: &StepControl,
    cap_days: f64,
) -> Result<DaysToZone> {
    if !(u_amount >= pivot.u_lb && u_amount <= pivot.u_ub) {
        return Err(Error::Range(format!(
            "amount {u_amount} outside [{}, {}]",
            pivot.u_lb, pivot.u_ub
        )));
    }
    if outputs.is_empty() || outputs.iter().any(|&i| i >= x0.len()) {
        return Err(Error::param(
            "output nodes must be a non-empty subset of the field",
        ));
    }
    let grid = model.grid();
    let events: Vec<IrrigationEvent> = if u_amount > 0.0 {
        vec![IrrigationEvent {
            start: 0.0,
            duration: event_duration,
            rates: vec![u_amount; grid.n_r],
        }]
    } else {
        vec![]
    };
    let drivers = Drivers {
        weather,
        pivot,
        events: &events,
        grid,
    };
    let mean_head = |x: &[f64]| outputs.iter().map(|&i| x[i]).sum::<f64>() / outputs.len() as f64;
    let start = events.first().map_or(0.0, IrrigationEvent::end);
    let cap = cap_days * SECONDS_PER_DAY;
    let mut x = x0.to_vec();
    let mut ws = Workspace::new(x.len());
    let mut ledger = MassLedger::default();
    if start > 0.0 {
        advance(
            model,
            &drivers,
            &mut x,
            0.0,
            start,
            ctrl,
            &mut ws,
            &mut ledger,
        )?;
    }
    let mut t = start;
    let mut prev = mean_head(&x);
    if prev < lower {
        return Ok(DaysToZone {
            days: t / SECONDS_PER_DAY,
            capped: false,
        });
    }
    while t < cap {
        let dt = 3600.0f64.min(cap - t);
        advance(model, &drivers, &mut x, t, dt, ctrl, &mut ws, &mut ledger)?;
        let now = mean_head(&x);
        if now < lower {
            let frac = (prev - lower) / (prev - now);
            return Ok(DaysToZone {
                days: (t + frac * dt) / SECONDS_PER_DAY,
                capped: false,
            });
        }
        prev = now;
        t += dt;
    }
    Ok(DaysToZone {
        days: cap_days,
        capped: true,
    })
}

/// One planning step of the closed loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub event_index: usize,
    pub t_start_s: f64,
    /// Rates applied from `t_start_s` (all zero when the planner skipped).
    pub u_rates: Vec<f64>,
    pub t_chosen_s: f64,
    /// Irrigation volume delivered by this event (m³).
    pub water_m3: f64,
    /// Deficiency accrued until the next planning step.
    pub deficiency_increment: f64,
    /// Lowest root-zone head until the next planning step.
    pub min_rootzone_head: f64,
}

impl LogRow {
    pub fn irrigated(&self) -> bool {
        self.u_rates.iter().any(|&u| u > 0.0)
    }
}

/// Closed-loop record: one row per planning step plus the hourly plant stress
/// and root-zone heads behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopLog {
    pub rows: Vec<LogRow>,
    pub sample_times: Vec<f64>,
    pub sample_dts: Vec<f64>,
    pub sample_alpha: Vec<f64>,
    pub sample_ky: Vec<f64>,
    /// Plant heads at the output nodes for every sample.
    pub rootzone: Vec<Vec<f64>>,
    pub ledger: MassLedger,
    pub final_state: Vec<f64>,
}

impl ClosedLoopLog {
    pub fn total_water(&self) -> f64 {
        self.rows.iter().map(|r| r.water_m3).sum()
    }

    pub fn total_deficiency(&self) -> f64 {
        self.rows.iter().map(|r| r.deficiency_increment).sum()
    }

    /// Rows where water was applied.
    pub fn events(&self) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(|r| r.irrigated())
    }
}

/// Settings of the receding-horizon loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    /// Days of accurate forecast; also the longest wait before re-planning.
    pub ts_days: usize,
    /// Season length (s).
    pub season: f64,
    /// Plant sampling interval for the stress log (s).
    pub dt_log: f64,
    /// Rates below this fraction of the upper bound are not applied.
    pub min_rate_fraction: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            ts_days: 7,
            season: 20.0 * SECONDS_PER_DAY,
            dt_log: 3600.0,
            min_rate_fraction: 1e-3,
        }
    }
}

/// Receding-horizon irrigation over a season.
///
/// At each planning time the scheduler sees the accurate forecast for
/// `ts_days` and long-term values after that. The first event of its plan is
/// applied to the full `plant` at once; planning resumes when the next event
/// is due, or after `ts_days` if that comes first.
pub fn receding_horizon_run(
    plant: &FieldModel,
    scheduler: &Scheduler,
    weather: &WeatherSeries,
    x0: &[f64],
    cfg: &LoopConfig,
) -> Result<ClosedLoopLog> {
    if x0.len() != plant.grid().len() {
        return Err(Error::shape(format!(
            "initial state has {} entries, field has {}",
            x0.len(),
            plant.grid().len()
        )));
    }
    if !(cfg.season > 0.0 && cfg.dt_log > 0.0 && cfg.ts_days > 0) {
        return Err(Error::param(format!("invalid loop settings {cfg:?}")));
    }
    let grid = plant.grid();
    let spec = scheduler.spec();
    let pivot = *scheduler.pivot();
    let actual = weather.accurate_samples();
    let outputs = scheduler.outputs();
    let ts = cfg.ts_days as f64 * SECONDS_PER_DAY;
    let stress_of = |x: &[f64]| -> (f64, Vec<f64>) {
        let y: Vec<f64> = outputs.iter().map(|&i| x[i]).collect();
        let alpha = plant
            .crop()
            .map_or(1.0, |c| aggregate_stress(y.iter().copied(), &c.feddes));
        (alpha, y)
    };

    let mut log = ClosedLoopLog {
        rows: vec![],
        sample_times: vec![],
        sample_dts: vec![],
        sample_alpha: vec![],
        sample_ky: vec![],
        rootzone: vec![],
        ledger: MassLedger::default(),
        final_state: vec![],
    };
    let mut x = x0.to_vec();
    let mut ws = Workspace::new(x.len());
    let mut t = 0.0;
    let mut index = 0;
    while t < cfg.season - 1e-6 {
        let day = ((t / SECONDS_PER_DAY).floor() as usize).min(weather.len() - 1);
        let view = forecast_view(weather, day, cfg.ts_days)?;
        let xi = scheduler.model().reduce_state(&x)?;
        let dec = scheduler.solve_event(&xi, &view, t)?;
        let floor = cfg.min_rate_fraction * pivot.u_ub;
        let rates: Vec<f64> = dec
            .u1
            .iter()
            .map(|&u| if u < floor { 0.0 } else { u })
            .collect();
        let next = if dec.t > ts {
            t + ts
        } else {
            t + spec.event_duration + dec.t
        };
        let next = next.min(cfg.season);
        let events: Vec<IrrigationEvent> = if rates.iter().any(|&u| u > 0.0) {
            vec![IrrigationEvent {
                start: t,
                duration: spec.event_duration.min(next - t),
                rates: rates.clone(),
            }]
        } else {
            vec![]
        };
        let drivers = Drivers {
            weather: &actual,
            pivot: &pivot,
            events: &events,
            grid,
        };
        let mut ledger = MassLedger::default();
        let mut deficiency = 0.0;
        let mut min_head = f64::INFINITY;
        let mut now = t;
        while now < next - 1e-6 {
            let end = (now + cfg.dt_log).min(next);
            advance(
                plant,
                &drivers,
                &mut x,
                now,
                end - now,
                &scheduler.ctrl,
                &mut ws,
                &mut ledger,
            )?;
            let (alpha, y) = stress_of(&x);
            let ky = plant.crop().map_or(0.0, |c| c.calendar.at_time(end).ky);
            let dt = end - now;
            deficiency += ky * dt / SECONDS_PER_DAY * (1.0 - alpha);
            min_head = y.iter().copied().fold(min_head, f64::min);
            log.sample_times.push(end);
            log.sample_dts.push(dt);
            log.sample_alpha.push(alpha);
            log.sample_ky.push(ky);
            log.rootzone.push(y);
            now = end;
        }
        log.ledger.inflow += ledger.inflow;
        log.ledger.outflow += ledger.outflow;
        log.ledger.uptake += ledger.uptake;
        log.ledger.irrigation += ledger.irrigation;
        log.rows.push(LogRow {
            event_index: index,
            t_start_s: t,
            u_rates: rates,
            t_chosen_s: dec.t,
            water_m3: ledger.irrigation,
            deficiency_increment: deficiency,
            min_rootzone_head: min_head,
        });
        index += 1;
        t = next;
    }
    log.final_state = x;
    Ok(log)
}
