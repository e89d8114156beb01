//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use pivot_core::crop::{CropCalendar, CropContext, CropDay, FeddesParams, RootDistribution};
use pivot_core::field::{BottomBoundary, FieldModel, PivotConfig, WeatherSample};
use pivot_core::grid::CylGrid;
use pivot_core::hydraulics::{SoilMap, SoilParams};
use pivot_core::scheduler::{HorizonSpec, SchedulerWeights, ZoneSpec};

/// Plain van Genuchten retention curve.
pub fn vg_theta(h: f64, p: &SoilParams) -> f64 {
    if h >= 0.0 {
        return p.theta_s;
    }
    let m = 1.0 - 1.0 / p.n_vg;
    p.theta_r + (p.theta_s - p.theta_r) * (1.0 + (p.alpha_vg * -h).powf(p.n_vg)).powf(-m)
}

pub fn vg_k(h: f64, p: &SoilParams) -> f64 {
    if h >= 0.0 {
        return p.ks;
    }
    let m = 1.0 - 1.0 / p.n_vg;
    let se = (1.0 + (p.alpha_vg * -h).powf(p.n_vg)).powf(-m);
    p.ks * se.sqrt() * (1.0 - (1.0 - se.powf(1.0 / m)).powf(m)).powi(2)
}

pub fn vg_c(h: f64, p: &SoilParams, floor: f64) -> f64 {
    if h >= 0.0 {
        return floor;
    }
    let m = 1.0 - 1.0 / p.n_vg;
    let x = p.alpha_vg * -h;
    let c = (p.theta_s - p.theta_r)
        * p.alpha_vg
        * m
        * p.n_vg
        * x.powf(p.n_vg - 1.0)
        * (1.0 + x.powf(p.n_vg)).powf(-m - 1.0);
    c.max(floor)
}

pub fn vg_head(theta: f64, p: &SoilParams) -> Option<f64> {
    let se = (theta - p.theta_r) / (p.theta_s - p.theta_r);
    if !(se > 0.0 && se < 1.0) {
        return None;
    }
    let m = 1.0 - 1.0 / p.n_vg;
    Some(-(se.powf(-1.0 / m) - 1.0).powf(1.0 / p.n_vg) / p.alpha_vg)
}

/// Vertical Richards column per unit area: free drainage at the bottom,
/// no surface flux, no uptake. Explicit steps limited by `dh_max` and 0.9 of
/// the diffusive limit, each moving water content by the net flux.
pub fn column_drainage(h0: &[f64], dz: f64, p: &SoilParams, seconds: f64, dh_max: f64) -> Vec<f64> {
    let n = h0.len();
    let mut h = h0.to_vec();
    let mut t = 0.0;
    while t < seconds {
        let k: Vec<f64> = h.iter().map(|&v| vg_k(v, p)).collect();
        let c: Vec<f64> = h.iter().map(|&v| vg_c(v, p, 1e-8)).collect();
        let mut flux_in = vec![0.0; n];
        let mut stiff = vec![0.0; n];
        for a in 0..n - 1 {
            let kf = 0.5 * (k[a] + k[a + 1]) / dz;
            let q = kf * (h[a] - h[a + 1] + dz);
            flux_in[a] -= q;
            flux_in[a + 1] += q;
            stiff[a] += kf;
            stiff[a + 1] += kf;
        }
        flux_in[n - 1] -= k[n - 1];
        let rate: Vec<f64> = (0..n).map(|i| flux_in[i] / (c[i] * dz)).collect();
        let max_rate = rate.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let max_stiff = (0..n)
            .map(|i| stiff[i] / (c[i] * dz))
            .fold(0.0f64, f64::max);
        let mut dt = seconds - t;
        if max_stiff > 0.0 {
            dt = dt.min(0.9 / max_stiff);
        }
        if max_rate > 0.0 {
            dt = dt.min(dh_max / max_rate);
        }
        for i in 0..n {
            let target = vg_theta(h[i], p) + c[i] * rate[i] * dt;
            h[i] = match (h[i] < 0.0).then(|| vg_head(target, p)).flatten() {
                Some(v) => v,
                None => h[i] + rate[i] * dt,
            };
        }
        t = if dt >= seconds - t { seconds } else { t + dt };
    }
    h
}

/// Average-linkage agglomeration recomputing every linkage from the raw rows.
/// Ties go to the pair whose smallest members are lexicographically first.
pub fn brute_force_average_linkage(rows: &[Vec<f64>], threshold: f64) -> Vec<Vec<usize>> {
    let dist = |a: usize, b: usize| -> f64 {
        rows[a]
            .iter()
            .zip(&rows[b])
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut clusters: Vec<Vec<usize>> = (0..rows.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut sum = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        sum += dist(i, j);
                    }
                }
                let link = sum / (clusters[a].len() * clusters[b].len()) as f64;
                let ka = *clusters[a].iter().min().unwrap();
                let kb = *clusters[b].iter().min().unwrap();
                let key = (ka.min(kb), ka.max(kb));
                let better = match &best {
                    None => true,
                    Some((l, k, _, _)) => link < *l || (link == *l && key < *k),
                };
                if better {
                    best = Some((link, key, a, b));
                }
            }
        }
        match best {
            Some((link, _, a, b)) if link <= threshold => {
                let mut merged = clusters.remove(b);
                merged.extend(clusters[a].drain(..));
                merged.sort_unstable();
                clusters[a] = merged;
            }
            _ => break,
        }
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort();
    clusters
}

/// Minimises `qu * sum(up^2) + ql * sum(lo^2)` subject to `y - up <= upper`,
/// `y + lo >= lower`, `up, lo >= 0` by trying every active set.
pub fn enumerate_slack_qp(y: &[f64], lower: f64, upper: f64, qu: f64, ql: f64) -> f64 {
    let m = y.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (2 * m)) {
        let mut cost = 0.0;
        let mut feasible = true;
        for (i, &v) in y.iter().enumerate() {
            let up = if mask >> (2 * i) & 1 == 1 {
                v - upper
            } else {
                0.0
            };
            let lo = if mask >> (2 * i + 1) & 1 == 1 {
                lower - v
            } else {
                0.0
            };
            if up < 0.0 || lo < 0.0 || v - up > upper + 1e-15 || v + lo < lower - 1e-15 {
                feasible = false;
                break;
            }
            cost += qu * up * up + ql * lo * lo;
        }
        if feasible {
            best = best.min(cost);
        }
    }
    best
}

/// One-ring, one-sector, four-layer loam column with a grass crop.
pub fn toy_field(pet_days: usize, bottom: BottomBoundary, crop: bool) -> FieldModel {
    let grid = CylGrid::new(1.0, 0.3, 1, 1, 4).unwrap();
    let crop = crop.then(|| CropContext {
        calendar: CropCalendar::constant(
            pet_days,
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
    FieldModel::new(grid, SoilMap::Uniform(SoilParams::LOAM), crop, bottom).unwrap()
}

pub fn toy_pivot() -> PivotConfig {
    PivotConfig {
        rotation_period: 8.0 * 3600.0,
        u_lb: 0.0,
        u_ub: 2e-6,
        phase: 0.0,
    }
}

pub fn toy_spec() -> HorizonSpec {
    HorizonSpec {
        n1: 4,
        n2: 16,
        n3: 4,
        t_lb: 1800.0,
        t_ub: 4.0 * 86_400.0,
        event_duration: 8.0 * 3600.0,
    }
}

pub fn toy_weights() -> SchedulerWeights {
    SchedulerWeights::default()
}

pub fn toy_zone() -> ZoneSpec {
    ZoneSpec::default()
}

pub fn constant_weather(days: usize, rain_mm: f64, pet_mm: f64) -> Vec<WeatherSample> {
    let mm = 1e-3 / 86_400.0;
    vec![
        WeatherSample {
            rain: rain_mm * mm,
            pet: pet_mm * mm,
        };
        days
    ]
}

/// Hydrostatic heads: zero flux everywhere above a sealed bottom.
pub fn hydrostatic(top_centre: f64, dz: f64, nz: usize) -> Vec<f64> {
    (0..nz).map(|k| top_centre + k as f64 * dz).collect()
}
