//! End-to-end runs on a [`ScenarioBundle`]: simulation, reduction, the
//! closed loop and the days-to-zone sweep.

use crate::config::ScenarioBundle;
use crate::error::{Error, Result};
use crate::field::{Drivers, FieldModel, IrrigationEvent, Trajectory};
use crate::reduction::{
    build_projection, cluster_states, model_mse, Clustering, ReducedModel, SnapshotMatrix,
};
use crate::scheduler::{days_to_zone, receding_horizon_run, ClosedLoopLog, Scheduler};
use crate::SECONDS_PER_DAY;

/// Runs the config's own schedule on the full model.
pub fn simulate(bundle: &ScenarioBundle, seed: Option<u64>) -> Result<Trajectory> {
    let model = bundle.field_model()?;
    let x0 = bundle.initial_state(seed)?;
    let events = bundle.events();
    run_full(bundle, &model, &x0, &events, bundle.config.dt_out)
}

fn run_full(
    bundle: &ScenarioBundle,
    model: &FieldModel,
    x0: &[f64],
    events: &[IrrigationEvent],
    dt_out: f64,
) -> Result<Trajectory> {
    let weather = bundle.weather.accurate_samples();
    let pivot = bundle.pivot();
    let drivers = Drivers {
        weather: &weather,
        pivot: &pivot,
        events,
        grid: model.grid(),
    };
    model.simulate(
        x0,
        &drivers,
        0.0,
        bundle.season(),
        dt_out,
        &bundle.step_control(),
    )
}

fn run_reduced(
    bundle: &ScenarioBundle,
    model: &FieldModel,
    clustering: &Clustering,
    x0: &[f64],
    events: &[IrrigationEvent],
    dt_out: f64,
) -> Result<Trajectory> {
    let weather = bundle.weather.accurate_samples();
    let pivot = bundle.pivot();
    let drivers = Drivers {
        weather: &weather,
        pivot: &pivot,
        events,
        grid: model.grid(),
    };
    let red = ReducedModel::new(model, build_projection(clustering, model.grid().len())?)?;
    red.simulate_lifted(
        x0,
        &drivers,
        0.0,
        bundle.season(),
        dt_out,
        &bundle.step_control(),
    )
}

/// Full-model run used to train and score the reduction.
#[derive(Debug, Clone)]
pub struct Training {
    pub trajectory: Trajectory,
    pub snapshots: SnapshotMatrix,
}

impl Training {
    pub fn run(bundle: &ScenarioBundle, model: &FieldModel) -> Result<Self> {
        let r = &bundle.config.reduction;
        let n = model.grid().len();
        let events = bundle.training_events(r.train_rate)?;
        let trajectory = run_full(
            bundle,
            model,
            &vec![r.train_head; n],
            &events,
            r.sample_h * 3600.0,
        )?;
        let raw = SnapshotMatrix::from_trajectory(&trajectory)?;
        let snapshots = if r.standardize {
            raw.standardized()
        } else {
            raw
        };
        Ok(Training {
            trajectory,
            snapshots,
        })
    }

    pub fn cluster(&self, threshold: f64) -> Result<Clustering> {
        cluster_states(&self.snapshots, threshold)
    }
}

/// One point of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceRow {
    pub threshold: f64,
    pub r: usize,
    /// Lifted-vs-full MSE on the training input (m²).
    pub mse: f64,
}

/// Clusters at `threshold` and scores the lifted trajectory on the training input.
pub fn reduce(bundle: &ScenarioBundle, threshold: f64) -> Result<(Clustering, ReduceRow)> {
    let model = bundle.field_model()?;
    let training = Training::run(bundle, &model)?;
    score(bundle, &model, &training, threshold)
}

fn score(
    bundle: &ScenarioBundle,
    model: &FieldModel,
    training: &Training,
    threshold: f64,
) -> Result<(Clustering, ReduceRow)> {
    let r = &bundle.config.reduction;
    let clustering = training.cluster(threshold)?;
    let events = bundle.training_events(r.train_rate)?;
    let x0 = vec![r.train_head; model.grid().len()];
    let lifted = run_reduced(
        bundle,
        model,
        &clustering,
        &x0,
        &events,
        r.sample_h * 3600.0,
    )?;
    let mse = model_mse(&training.trajectory.states, &lifted.states)?;
    let row = ReduceRow {
        threshold,
        r: clustering.len(),
        mse,
    };
    Ok((clustering, row))
}

/// Thresholds `a, a+s, …` up to `b` inclusive (with a small tolerance).
pub fn sweep_range(a: f64, b: f64, s: f64) -> Result<Vec<f64>> {
    if !(a > 0.0 && s > 0.0 && b >= a && b.is_finite()) {
        return Err(Error::param(format!(
            "sweep needs 0 < A <= B and S > 0, got {a}:{b}:{s}"
        )));
    }
    let steps = ((b - a) / s + 1e-9).floor() as usize;
    Ok((0..=steps).map(|k| a + k as f64 * s).collect())
}

/// Scores every threshold against one training run.
pub fn reduce_sweep(bundle: &ScenarioBundle, thresholds: &[f64]) -> Result<Vec<ReduceRow>> {
    let model = bundle.field_model()?;
    let training = Training::run(bundle, &model)?;
    thresholds
        .iter()
        .map(|&th| score(bundle, &model, &training, th).map(|(_, row)| row))
        .collect()
}

/// Same-input MSE and MSE under each evaluation rate from the evaluation head.
#[derive(Debug, Clone, PartialEq)]
pub struct Robustness {
    pub r: usize,
    pub same_input_mse: f64,
    /// `(rate, mse)` per evaluation input.
    pub other: Vec<(f64, f64)>,
}

impl Robustness {
    /// Largest ratio of an evaluation MSE to the same-input MSE.
    pub fn worst_ratio(&self) -> f64 {
        self.other
            .iter()
            .map(|(_, m)| m / self.same_input_mse)
            .fold(0.0, f64::max)
    }
}

/// Projects with the training input, then evaluates at the other inputs.
pub fn robustness(bundle: &ScenarioBundle, threshold: f64) -> Result<Robustness> {
    let model = bundle.field_model()?;
    let training = Training::run(bundle, &model)?;
    let (clustering, row) = score(bundle, &model, &training, threshold)?;
    let r = &bundle.config.reduction;
    let n = model.grid().len();
    let dt = r.sample_h * 3600.0;
    let x0 = vec![r.eval_head; n];
    let mut other = vec![];
    for &rate in &r.eval_rates {
        let events = bundle.training_events(rate)?;
        let full = run_full(bundle, &model, &x0, &events, dt)?;
        let lifted = run_reduced(bundle, &model, &clustering, &x0, &events, dt)?;
        other.push((rate, model_mse(&full.states, &lifted.states)?));
    }
    Ok(Robustness {
        r: clustering.len(),
        same_input_mse: row.mse,
        other,
    })
}

/// Closed-loop result with the reduction it used.
#[derive(Debug, Clone)]
pub struct ScheduleRun {
    pub clustering: Clustering,
    pub log: ClosedLoopLog,
    pub summary: ZoneSummary,
}

/// Trains the reduction, then runs the receding-horizon loop on the full plant.
pub fn schedule(bundle: &ScenarioBundle, seed: Option<u64>) -> Result<ScheduleRun> {
    let model = bundle.field_model()?;
    let training = Training::run(bundle, &model)?;
    let clustering = training.cluster(bundle.config.reduction.threshold)?;
    let red = ReducedModel::new(&model, build_projection(&clustering, model.grid().len())?)?;
    let sc = &bundle.config.scheduler;
    let scheduler = Scheduler::new(
        &red,
        bundle.pivot(),
        sc.zone,
        sc.weights,
        bundle.horizon_spec(),
        bundle.outputs()?,
        bundle.step_control(),
    )?;
    let x0 = bundle.initial_state(seed)?;
    let log = receding_horizon_run(
        &model,
        &scheduler,
        &bundle.weather,
        &x0,
        &bundle.loop_config(),
    )?;
    let summary = ZoneSummary::from_log(&log, bundle);
    Ok(ScheduleRun {
        clustering,
        log,
        summary,
    })
}

/// Zone maintenance and event statistics of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSummary {
    pub events: usize,
    pub event_starts_days: Vec<f64>,
    /// Root-zone node samples (nodes × times).
    pub samples: usize,
    pub min_head: f64,
    pub frac_above_actual_lower: f64,
    pub frac_above_lower: f64,
    /// Coefficient of variation of the gaps between events; needs two gaps.
    pub spacing_cv: Option<f64>,
    /// Events starting in each third of the season.
    pub events_per_third: [usize; 3],
    pub total_water_m3: f64,
    pub total_deficiency: f64,
}

impl ZoneSummary {
    pub fn from_log(log: &ClosedLoopLog, bundle: &ScenarioBundle) -> Self {
        let zone = &bundle.config.scheduler.zone;
        let heads: Vec<f64> = log.rootzone.iter().flatten().copied().collect();
        let frac = |bound: f64| {
            heads.iter().filter(|&&h| h >= bound).count() as f64 / heads.len().max(1) as f64
        };
        let starts: Vec<f64> = log
            .events()
            .map(|r| r.t_start_s / SECONDS_PER_DAY)
            .collect();
        let gaps: Vec<f64> = starts.windows(2).map(|w| w[1] - w[0]).collect();
        let spacing_cv = (gaps.len() >= 2).then(|| {
            let n = gaps.len() as f64;
            let mean = gaps.iter().sum::<f64>() / n;
            let var = gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
            var.sqrt() / mean
        });
        let season = bundle.config.season_days as f64;
        let mut thirds = [0; 3];
        for s in &starts {
            thirds[((s / season * 3.0).floor() as usize).min(2)] += 1;
        }
        ZoneSummary {
            events: starts.len(),
            event_starts_days: starts,
            samples: heads.len(),
            min_head: heads.iter().copied().fold(f64::INFINITY, f64::min),
            frac_above_actual_lower: frac(zone.actual_lower),
            frac_above_lower: frac(zone.lower),
            spacing_cv,
            events_per_third: thirds,
            total_water_m3: log.total_water(),
            total_deficiency: log.total_deficiency(),
        }
    }
}

/// One point of the days-to-zone sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub amount: f64,
    pub days: f64,
    pub capped: bool,
}

/// Days-to-zone for every amount, plus a knee estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Amount furthest above the chord of the normalised curve.
    pub knee_amount: Option<f64>,
    /// Top-half increase over bottom-half increase.
    pub saturation_ratio: Option<f64>,
}

impl SweepReport {
    pub fn nondecreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].days >= w[0].days)
    }

    pub fn saturating(&self) -> bool {
        self.saturation_ratio.is_some_and(|r| r < 0.25)
    }
}

pub fn sweep_days(bundle: &ScenarioBundle, amounts: Option<&[f64]>) -> Result<SweepReport> {
    let s = &bundle.config.sweep;
    let amounts = amounts.unwrap_or(&s.amounts);
    if amounts.is_empty() {
        return Err(Error::param("sweep needs at least one amount"));
    }
    let model = bundle.field_model()?;
    let n = model.grid().len();
    let x0 = vec![s.initial_head; n];
    let weather = bundle.weather.accurate_samples();
    let outputs = bundle.outputs()?;
    let lower = bundle.config.scheduler.zone.lower;
    let mut rows = vec![];
    for &amount in amounts {
        let d = days_to_zone(
            &model,
            &x0,
            amount,
            s.event_duration_h * 3600.0,
            &bundle.pivot(),
            &weather,
            &outputs,
            lower,
            &bundle.step_control(),
            s.cap_days,
        )?;
        rows.push(SweepRow {
            amount,
            days: d.days,
            capped: d.capped,
        });
    }
    Ok(analyse_sweep(rows))
}

/// Adds the knee and saturation figures to sweep rows sorted by amount.
pub fn analyse_sweep(mut rows: Vec<SweepRow>) -> SweepReport {
    rows.sort_by(|a, b| a.amount.total_cmp(&b.amount));
    let m = rows.len();
    let saturation_ratio = (m >= 4).then(|| {
        let half = m / 2;
        let bottom = rows[half - 1].days - rows[0].days;
        let top = rows[m - 1].days - rows[m - half].days;
        top / bottom
    });
    let knee_amount = (m >= 3).then(|| {
        let (a0, a1) = (rows[0].amount, rows[m - 1].amount);
        let (d0, d1) = (rows[0].days, rows[m - 1].days);
        let span = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
        rows.iter()
            .map(|r| (r.amount, span(r.days, d0, d1) - span(r.amount, a0, a1)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(a, _)| a)
            .expect("rows not empty")
    });
    SweepReport {
        rows,
        knee_amount,
        saturation_ratio,
    }
}
