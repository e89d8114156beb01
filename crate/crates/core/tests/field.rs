mod common;

use pivot_core::config::jittered;
use pivot_core::crop::{CropCalendar, CropContext, CropDay, FeddesParams, RootDistribution};
use pivot_core::field::{BottomBoundary, Drivers, FieldModel, IrrigationEvent, PivotConfig};
use pivot_core::grid::CylGrid;
use pivot_core::hydraulics::{SoilMap, SoilParams};
use pivot_core::integrate::StepControl;
use pivot_core::SECONDS_PER_DAY;

fn desk(crop: bool) -> FieldModel {
    let grid = CylGrid::new(50.0, 0.3, 3, 16, 4).unwrap();
    let crop = crop.then(|| CropContext {
        calendar: CropCalendar::constant(
            20,
            CropDay {
                kc: 1.0,
                ky: 1.0,
                lai: 3.0,
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

fn pivot(phase: f64) -> PivotConfig {
    PivotConfig {
        rotation_period: 8.0 * 3600.0,
        u_lb: 0.0,
        u_ub: 3e-6,
        phase,
    }
}

#[test]
fn column_matches_one_dimensional_solver() {
    for (p, h0) in [
        (SoilParams::LOAM, -1.0),
        (SoilParams::CLAY_LOAM, -0.5),
        (SoilParams::SANDY_CLAY_LOAM, -2.0),
    ] {
        let grid = CylGrid::new(1.0, 0.3, 1, 1, 6).unwrap();
        let model = FieldModel::new(
            grid,
            SoilMap::Uniform(p),
            None,
            BottomBoundary::FreeDrainage,
        )
        .unwrap();
        let x0: Vec<f64> = (0..6).map(|k| h0 - 0.1 * k as f64).collect();
        let weather = common::constant_weather(2, 0.0, 0.0);
        let pv = pivot(0.0);
        let drivers = Drivers {
            weather: &weather,
            pivot: &pv,
            events: &[],
            grid: &grid,
        };
        let tr = model
            .simulate(
                &x0,
                &drivers,
                0.0,
                SECONDS_PER_DAY,
                SECONDS_PER_DAY,
                &StepControl::default(),
            )
            .unwrap();
        let oracle = common::column_drainage(&x0, grid.dz, &p, SECONDS_PER_DAY, 0.05);
        for (a, b) in tr.last().iter().zip(&oracle) {
            assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn desk_mass_balance_over_ten_days() {
    let model = desk(true);
    let grid = *model.grid();
    let x0 = jittered(grid.len(), -2.0, 0.3, 3);
    let weather = common::constant_weather(10, 2.0, 3.0);
    let events: Vec<IrrigationEvent> = (0..3)
        .map(|k| IrrigationEvent {
            start: (1.0 + 3.0 * k as f64) * SECONDS_PER_DAY,
            duration: 16.0 * 3600.0,
            rates: vec![3e-6, 2e-6, 1e-6],
        })
        .collect();
    let pv = pivot(0.0);
    let drivers = Drivers {
        weather: &weather,
        pivot: &pv,
        events: &events,
        grid: &grid,
    };
    let tr = model
        .simulate(
            &x0,
            &drivers,
            0.0,
            10.0 * SECONDS_PER_DAY,
            3600.0,
            &StepControl::default(),
        )
        .unwrap();
    let stored = model.storage(tr.last()) - model.storage(&x0);
    let err = (stored - tr.ledger.net()).abs() / tr.ledger.gross();
    assert!(err < 1e-3, "relative mass balance error {err}");
    let water: f64 = events
        .iter()
        .map(|e| {
            e.rates
                .iter()
                .enumerate()
                .map(|(i, u)| u * e.duration * grid.plan_area(i))
                .sum::<f64>()
        })
        .sum();
    assert!((tr.ledger.irrigation - water).abs() < 1e-9 * water);
}

#[test]
fn storage_never_grows_without_input() {
    let model = desk(false);
    let grid = *model.grid();
    let x0 = jittered(grid.len(), -1.0, 0.5, 11);
    let weather = common::constant_weather(10, 0.0, 0.0);
    let pv = pivot(0.0);
    let drivers = Drivers {
        weather: &weather,
        pivot: &pv,
        events: &[],
        grid: &grid,
    };
    let tr = model
        .simulate(
            &x0,
            &drivers,
            0.0,
            10.0 * SECONDS_PER_DAY,
            6.0 * 3600.0,
            &StepControl::default(),
        )
        .unwrap();
    let storage: Vec<f64> = tr.states.iter().map(|s| model.storage(s)).collect();
    assert!(
        storage.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0]),
        "{storage:?}"
    );
}

#[test]
fn rain_keeps_ring_layers_uniform() {
    let model = desk(true);
    let grid = *model.grid();
    let x0: Vec<f64> = (0..grid.len())
        .map(|id| {
            let ix = grid.index(id);
            -1.5 - 0.2 * ix.i as f64 - 0.3 * ix.k as f64
        })
        .collect();
    let weather = common::constant_weather(3, 6.0, 2.0);
    let pv = pivot(0.0);
    let drivers = Drivers {
        weather: &weather,
        pivot: &pv,
        events: &[],
        grid: &grid,
    };
    let tr = model
        .simulate(
            &x0,
            &drivers,
            0.0,
            3.0 * SECONDS_PER_DAY,
            3600.0,
            &StepControl::default(),
        )
        .unwrap();
    for s in &tr.states {
        for id in 0..grid.len() {
            let ix = grid.index(id);
            let reference = s[grid.id(ix.i, 0, ix.k)];
            assert!((s[id] - reference).abs() < 1e-10);
        }
    }
}

#[test]
fn rotation_is_equivariant() {
    let model = desk(true);
    let grid = *model.grid();
    let x0 = jittered(grid.len(), -2.0, 0.4, 5);
    let weather = common::constant_weather(2, 0.0, 2.0);
    let events = [IrrigationEvent {
        start: 3600.0,
        duration: 16.0 * 3600.0,
        rates: vec![3e-6, 1e-6, 2e-6],
    }];
    let run = |x: &[f64], pv: &PivotConfig| {
        let drivers = Drivers {
            weather: &weather,
            pivot: pv,
            events: &events,
            grid: &grid,
        };
        model
            .simulate(
                x,
                &drivers,
                0.0,
                1.5 * SECONDS_PER_DAY,
                3.0 * 3600.0,
                &StepControl::default(),
            )
            .unwrap()
    };
    let base = run(&x0, &pivot(0.0));
    for s in [1, 5, 11] {
        let mut rotated = vec![0.0; grid.len()];
        for id in 0..grid.len() {
            rotated[grid.rotate(id, s)] = x0[id];
        }
        let pv = pivot(0.0);
        let shifted = run(&rotated, &pivot(s as f64 * pv.dwell(grid.n_theta)));
        for (a, b) in base.states.iter().zip(&shifted.states) {
            for id in 0..grid.len() {
                assert!(
                    (a[id] - b[grid.rotate(id, s)]).abs() < 1e-9,
                    "shift {s}, node {id}"
                );
            }
        }
    }
}

#[test]
fn simulation_is_deterministic() {
    let model = desk(true);
    let grid = *model.grid();
    let x0 = jittered(grid.len(), -2.0, 0.2, 9);
    let weather = common::constant_weather(2, 1.0, 2.0);
    let events = [IrrigationEvent {
        start: 0.0,
        duration: 8.0 * 3600.0,
        rates: vec![2e-6; 3],
    }];
    let pv = pivot(0.0);
    let drivers = Drivers {
        weather: &weather,
        pivot: &pv,
        events: &events,
        grid: &grid,
    };
    let a = model
        .simulate(
            &x0,
            &drivers,
            0.0,
            SECONDS_PER_DAY,
            3600.0,
            &StepControl::default(),
        )
        .unwrap();
    let b = model
        .simulate(
            &x0,
            &drivers,
            0.0,
            SECONDS_PER_DAY,
            3600.0,
            &StepControl::default(),
        )
        .unwrap();
    assert_eq!(a, b);
}
