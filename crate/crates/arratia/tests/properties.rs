//! Property suites for the closed-form identities and the structural
//! invariants of the simulators.

use arratia::analytics::{
    cluster_survival, darling_limit_cdf, erfc_inv, hitting_time_cdf, lil_envelope_lower,
    lil_envelope_upper, Level, TimePoint,
};
use arratia::coupling::{build_coupled_family, WienerBundle};
use arratia::flow::{bridge_merge_probability, simulate_flow, FlowConfig, StartGrid};
use arratia::rng::{derive_stream, tag};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn survival_is_decreasing_in_width(t in 0.01f64..100.0, r in 0.0f64..8.0, dr in 1e-6f64..2.0) {
        let tp = TimePoint::new(t).unwrap();
        let a = cluster_survival(tp, r).unwrap();
        let b = cluster_survival(tp, r + dr).unwrap();
        prop_assert!(b < a || (a == b && a == 0.0));
    }

    #[test]
    fn hitting_cdf_monotone(a in 0.05f64..6.0, da in 1e-6f64..2.0, t in 0.01f64..50.0, dt in 1e-6f64..10.0) {
        let cdf = |a: f64, t: f64| {
            hitting_time_cdf(Level::new(a).unwrap(), TimePoint::new(t).unwrap())
        };
        // strictly increasing in t, strictly decreasing in the level
        prop_assert!(cdf(a, t + dt) > cdf(a, t));
        prop_assert!(cdf(a + da, t) < cdf(a, t));
    }

    #[test]
    fn survival_scaling_family(t in 0.01f64..10.0, r in 0.0f64..4.0, c in 0.1f64..10.0) {
        let lhs = cluster_survival(TimePoint::new(c * c * t).unwrap(), c * r).unwrap();
        let rhs = cluster_survival(TimePoint::new(t).unwrap(), r).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn survival_consistent_with_hitting_time(t in 0.01f64..10.0, r in 1e-6f64..6.0) {
        let via_hit = hitting_time_cdf(
            Level::new(r / std::f64::consts::SQRT_2).unwrap(),
            TimePoint::new(t).unwrap(),
        );
        let direct = cluster_survival(TimePoint::new(t).unwrap(), r).unwrap();
        prop_assert!((direct - via_hit).abs() <= 1e-15);
    }

    #[test]
    fn darling_matches_survival_at_all_times(y in 0.0f64..6.0, t in 0.01f64..100.0) {
        let lhs = darling_limit_cdf(y).unwrap();
        let rhs = 1.0 - cluster_survival(TimePoint::new(t).unwrap(), y * t.sqrt()).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn envelope_ratio_is_sqrt_two(t in 1e-12f64..0.36) {
        let tp = TimePoint::new(t).unwrap();
        let psi = lil_envelope_lower(tp).unwrap();
        let phi = lil_envelope_upper(tp).unwrap();
        prop_assert!(psi > 0.0);
        prop_assert!((phi / psi - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn erfc_inv_roundtrips(p in 1e-6f64..1.0) {
        let x = erfc_inv(p);
        prop_assert!((libm::erfc(x) - p).abs() < 1e-14);
    }

    #[test]
    fn bridge_probability_scale_invariant(gb in 0.01f64..5.0, ga in 0.01f64..5.0, dt in 1e-4f64..10.0, c in 0.1f64..10.0) {
        let p1 = bridge_merge_probability(gb, ga, dt);
        let p2 = bridge_merge_probability(c * gb, ga, c * dt);
        prop_assert!((p1 - p2).abs() < 1e-12);
    }
}

proptest! {
    // Simulation-backed properties get fewer, heavier cases.
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_frames_stay_ordered_and_contiguous(
        seed in 0u64..1000,
        half in 2usize..12,
        spacing in 0.05f64..0.5,
        steps in 5u32..40,
    ) {
        let horizon = 0.25;
        let cfg = FlowConfig {
            grid: StartGrid::symmetric(half, spacing).unwrap(),
            horizon,
            dt: horizon / steps as f64,
            drift: None,
            save_times: vec![horizon / 2.0, horizon],
            seed,
            bridge_correction: true,
        };
        let mut rng = derive_stream(seed, tag::TEST, 0);
        let path = simulate_flow(&cfg, &mut rng).unwrap();
        for frame in &path.frames {
            let mut next = 0usize;
            for w in frame.clusters.windows(2) {
                prop_assert!(w[0].position < w[1].position);
            }
            for c in &frame.clusters {
                prop_assert_eq!(c.first_start, next);
                next = c.last_start + 1;
            }
            prop_assert_eq!(next, 2 * half + 1);
        }
    }

    #[test]
    fn coupled_family_invariants(seed in 0u64..500, u1 in 0.5f64..1.5, shrink in 0.2f64..0.8) {
        let levels = [u1, u1 * shrink, u1 * shrink * shrink];
        let bundle = WienerBundle::generate(4, 2e-3, seed).unwrap();
        let family = build_coupled_family(&levels, &bundle).unwrap();
        prop_assert!(family.absorption_holds());
        prop_assert!(family.ordering_holds());
        prop_assert!(family.collision_order_holds());
    }
}
