mod common;

use proptest::prelude::*;

use pivot_core::crop::{
    aggregate_stress, et_chain, stress_factor, yield_deficiency, CropCalendar, CropDay,
    FeddesParams, RootDistribution,
};
use pivot_core::hydraulics::{
    capillary_capacity, effective_saturation, hydraulic_conductivity, water_content, SoilParams,
};

const SOILS: [SoilParams; 3] = [
    SoilParams::LOAM,
    SoilParams::SANDY_CLAY_LOAM,
    SoilParams::CLAY_LOAM,
];

fn soil() -> impl Strategy<Value = SoilParams> {
    (0usize..3).prop_map(|i| SOILS[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn retention_is_monotone_and_bounded(p in soil(), a in -200.0f64..0.0, b in -200.0f64..0.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let se_lo = effective_saturation(lo, &p).unwrap();
        let se_hi = effective_saturation(hi, &p).unwrap();
        prop_assert!(se_lo > 0.0 && se_hi <= 1.0 && se_lo <= se_hi);
        let th = water_content(hi, &p).unwrap();
        prop_assert!(th > p.theta_r && th <= p.theta_s);
        let k_lo = hydraulic_conductivity(lo, &p).unwrap();
        let k_hi = hydraulic_conductivity(hi, &p).unwrap();
        prop_assert!(k_lo >= 0.0 && k_lo <= k_hi && k_hi <= p.ks);
    }

    #[test]
    fn closed_forms_match_the_plain_formulas(p in soil(), h in -50.0f64..-0.01) {
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        prop_assert!(rel(water_content(h, &p).unwrap(), common::vg_theta(h, &p)) < 1e-12);
        prop_assert!(rel(hydraulic_conductivity(h, &p).unwrap(), common::vg_k(h, &p)) < 1e-9);
        prop_assert!(rel(capillary_capacity(h, &p, 1e-8).unwrap(), common::vg_c(h, &p, 1e-8)) < 1e-10);
    }

    #[test]
    fn capacity_matches_central_difference(p in soil(), h in -50.0f64..-0.01) {
        let d = 1e-6 * h.abs().max(1.0);
        let fd = (water_content(h + d, &p).unwrap() - water_content(h - d, &p).unwrap()) / (2.0 * d);
        let c = capillary_capacity(h, &p, 1e-12).unwrap();
        prop_assert!((c - fd).abs() / fd < 1e-4, "h {} c {} fd {}", h, c, fd);
    }

    #[test]
    fn stress_is_bounded_and_unimodal(a in -120.0f64..0.5, b in -120.0f64..0.5) {
        let f = FeddesParams::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (s_lo, s_hi) = (stress_factor(lo, &f).unwrap(), stress_factor(hi, &f).unwrap());
        prop_assert!((0.0..=1.0).contains(&s_lo) && (0.0..=1.0).contains(&s_hi));
        // Rising on the dry side of the optimum, falling on the wet side.
        if hi <= f.h3 {
            prop_assert!(s_lo <= s_hi);
        }
        if lo >= f.h2 {
            prop_assert!(s_lo >= s_hi);
        }
    }

    #[test]
    fn et_split_adds_up(pet in 0.0f64..1e-7, kc in 0.1f64..1.5, lai in 0.0f64..6.0, alpha in 0.0f64..=1.0) {
        let cal = CropCalendar::constant(1, CropDay { kc, ky: 1.0, lai, root_depth: 0.2 }).unwrap();
        let et = et_chain(pet, 0, &cal, alpha).unwrap();
        prop_assert!((et.etp - (et.ev + et.tp)).abs() <= 1e-15 * et.etp.max(1e-30));
        prop_assert!(et.ev >= 0.0 && et.tp >= 0.0 && et.eta <= et.etp);
        prop_assert!((et.etp - kc * pet).abs() <= 1e-15 * et.etp.max(1e-30));
    }

    #[test]
    fn deficiency_grows_as_stress_deepens(
        alpha in prop::collection::vec(0.0f64..=1.0, 1..30),
        ky in prop::collection::vec(0.0f64..2.0, 30),
        k in 0usize..30,
        drop in 0.0f64..1.0,
    ) {
        let ky = &ky[..alpha.len()];
        let base = yield_deficiency(&alpha, ky).unwrap();
        prop_assert!(base >= 0.0);
        let mut worse = alpha.clone();
        let k = k % alpha.len();
        worse[k] *= 1.0 - drop;
        prop_assert!(yield_deficiency(&worse, ky).unwrap() >= base);
    }
}

#[test]
fn stress_is_continuous_at_the_breakpoints() {
    let f = FeddesParams::default();
    for h in [f.h1, f.h2, f.h3, f.h4] {
        let l = stress_factor(h - 1e-9, &f).unwrap();
        let r = stress_factor(h + 1e-9, &f).unwrap();
        assert!((l - r).abs() < 1e-6, "jump at {h}");
    }
    assert_eq!(stress_factor(-1.0, &f).unwrap(), 1.0);
    assert_eq!(stress_factor(0.0, &f).unwrap(), 0.0);
    assert_eq!(stress_factor(-100.0, &f).unwrap(), 0.0);
    assert_eq!(aggregate_stress([-1.0, 0.0], &f), 0.5);
}

#[test]
fn uniform_roots_integrate_to_one() {
    let (dz, nz) = (0.075, 4);
    for depth in [0.05, 0.15, 0.225, 0.3, 1.0] {
        let total: f64 = (0..nz)
            .map(|k| RootDistribution::Uniform.layer_density(k, dz, nz, depth) * dz)
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "depth {depth}: {total}");
    }
    let w = RootDistribution::Weights(vec![0.4, 0.3, 0.2, 0.1]);
    assert!(w.validate(nz).is_ok());
    let total: f64 = (0..nz).map(|k| w.layer_density(k, dz, nz, 0.1) * dz).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(RootDistribution::Weights(vec![0.5, 0.5])
        .validate(nz)
        .is_err());
}
