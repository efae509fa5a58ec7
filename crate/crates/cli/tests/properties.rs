use std::collections::BTreeMap;

use lanesim_cli::compare::{compare, Tolerance, Tolerances};
use lanesim_cli::report::load_metrics;
use lanesim_cli::settings::Settings;
use proptest::prelude::*;

proptest! {
    #[test]
    fn settings_file_round_trips(
        lanes in prop::option::of(1usize..64),
        n in prop::option::of(0usize..1000),
        seed in prop::option::of(any::<u64>()),
        mem_latency in prop::option::of(0u64..100),
        trace in prop::option::of(any::<bool>()),
        comment in "[ a-z]{0,12}",
    ) {
        let mut text = format!("# {comment}\n");
        if let Some(v) = lanes { text += &format!("lanes = {v}\n"); }
        if let Some(v) = n { text += &format!("n={v}\n"); }
        if let Some(v) = seed { text += &format!("  seed =  {v}\n"); }
        if let Some(v) = mem_latency { text += &format!("mem-latency = {v}\n\n"); }
        if let Some(v) = trace { text += &format!("trace = {v}\n"); }
        let s = Settings::parse(&text).unwrap();
        prop_assert_eq!(s.lanes, lanes);
        prop_assert_eq!(s.n, n);
        prop_assert_eq!(s.seed, seed);
        prop_assert_eq!(s.mem_latency, mem_latency);
        prop_assert_eq!(s.trace, trace);
    }

    #[test]
    fn settings_parser_never_panics(text in "\\PC{0,200}") {
        let _ = Settings::parse(&text);
    }

    #[test]
    fn overlay_prefers_the_top_layer(a in prop::option::of(1usize..9), b in prop::option::of(1usize..9)) {
        let low = Settings { lanes: a, ..Settings::default() };
        let high = Settings { lanes: b, ..Settings::default() };
        prop_assert_eq!(low.overlay(high).lanes, b.or(a));
    }

    #[test]
    fn report_compares_equal_to_itself(metrics in prop::collection::btree_map("[a-z_.]{1,12}", -1e9f64..1e9, 0..12)) {
        let json = serde_json::to_string(&serde_json::json!({ "metrics": metrics })).unwrap();
        let parsed = load_metrics(&json).unwrap();
        prop_assert_eq!(&parsed, &metrics);
        let v = compare(&parsed, &metrics, &Tolerances { default: Tolerance::Abs(0.0), per_metric: BTreeMap::new() });
        prop_assert!(v.iter().all(|v| v.pass));
    }

    #[test]
    fn absolute_tolerance_is_a_symmetric_band(g in -1e6f64..1e6, d in -10.0f64..10.0, t in 0.0f64..10.0) {
        let tol = Tolerance::Abs(t);
        if d.abs() <= t / 2.0 {
            prop_assert!(tol.accepts(g + d, g) && tol.accepts(g - d, g));
        }
        if d.abs() > 2.0 * t + 1e-6 {
            prop_assert!(!tol.accepts(g + d, g) && !tol.accepts(g - d, g));
        }
    }
}
