use pivot_core::config::ScenarioBundle;
use pivot_core::crop::CropCalendar;
use pivot_core::hydraulics::SoilMap;
use pivot_core::weather::{forecast_view, WeatherSeries};
use pivot_core::Error;

const WEATHER: &str = include_str!("../fixtures/scenario3/weather.csv");
const SOIL: &str = include_str!("../fixtures/scenario2/soil.csv");
const CROP: &str = include_str!("../fixtures/scenario3/crop.csv");

#[test]
fn weather_round_trip_is_exact() {
    let w = WeatherSeries::parse(WEATHER, "fixture").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    w.save(&path).unwrap();
    let back = WeatherSeries::load(&path).unwrap();
    assert_eq!(w, back);
    for d in 0..w.len() {
        assert_eq!(w.accurate(d).unwrap(), back.accurate(d).unwrap());
    }
}

#[test]
fn forecast_splices_accurate_then_long_term() {
    let rain: Vec<f64> = (0..30).map(|d| d as f64).collect();
    let lt = vec![100.0; 30];
    let w = WeatherSeries::new(rain, vec![2.0; 30], Some(lt), None).unwrap();
    let before = w.clone();
    let view = forecast_view(&w, 10, 7).unwrap();
    assert_eq!(w, before);
    assert_eq!(view.len(), 30);
    for (d, s) in view.iter().enumerate() {
        let want = if d < 17 {
            w.accurate(d)
        } else {
            w.long_term(d)
        }
        .unwrap();
        assert_eq!(*s, want, "day {d}");
    }
    let pure = forecast_view(&w, 10, 0).unwrap();
    assert!(pure[10..]
        .iter()
        .enumerate()
        .all(|(k, s)| *s == w.long_term(10 + k).unwrap()));
    assert!(matches!(forecast_view(&w, 30, 7), Err(Error::Range(_))));
}

#[test]
fn soil_map_round_trip() {
    let m = SoilMap::parse(SOIL, "fixture").unwrap();
    assert!(!m.is_uniform());
    let back = SoilMap::parse(&m.to_csv(), "again").unwrap();
    assert_eq!(m, back);
}

#[test]
fn crop_calendar_fixture() {
    let c = CropCalendar::parse(CROP, "fixture").unwrap();
    assert_eq!(c.season_days(), 20);
    assert!(c.days().iter().all(|d| d.kc > 0.0 && d.root_depth > 0.0));
    assert!(c.day(20).is_err());
}

#[test]
fn bad_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    let text = include_str!("../fixtures/scenario2/scenario.toml");
    std::fs::write(&cfg, text).unwrap();
    std::fs::write(dir.path().join("soil.csv"), "node,theta_r\n0,abc\n").unwrap();
    let e = ScenarioBundle::load(&cfg).unwrap_err();
    assert!(e.is_config_error(), "{e}");
    std::fs::remove_file(dir.path().join("soil.csv")).unwrap();
    let e = ScenarioBundle::load(&cfg).unwrap_err();
    assert!(e.is_config_error(), "{e}");
    assert!(ScenarioBundle::builtin(4).unwrap_err().is_config_error());
}
