use relayplan::experiments::bench_random_triangles;
use relayplan::planner::SolverConfig;
use relayplan::rate_model::fixed_relay_rate;
use relayplan::{Point, Topology};

#[test]
fn bench_is_reproducible_and_rows_are_sound() {
    let config = SolverConfig::default();
    let a = bench_random_triangles(&[1.0, 16.0], 3, 42, &config).unwrap();
    let b = bench_random_triangles(&[1.0, 16.0], 3, 42, &config).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.rows.len(), 6);
    for r in &a.rows {
        assert!(r.r_opt >= r.r_centroid * (1.0 - 1e-9), "{r:?}");
        assert!(r.r_opt >= 0.95 * r.r_oracle, "{r:?}");
    }
}

#[test]
fn rows_of_an_area_ignore_the_other_areas() {
    let config = SolverConfig::default();
    let a = bench_random_triangles(&[1.0, 8.0], 2, 9, &config).unwrap();
    let b = bench_random_triangles(&[3.0, 8.0], 2, 9, &config).unwrap();
    assert_eq!(a.rows[2..], b.rows[2..]);
}

#[test]
fn rates_are_scale_invariant_up_to_a_power_of_the_length() {
    // with unit power and noise, stretching every length by k divides
    // every capacity by k^alpha, so relative gains do not depend on area
    let t = Topology {
        source: Point::new(0.3, 0.1),
        destinations: vec![Point::new(2.0, 0.4), Point::new(0.9, 1.7)],
        p_source: 1.0,
        p_relay: 1.0,
        n0: 1.0,
        alpha: 2.0,
    };
    let relay = Point::new(1.0, 0.7);
    let base = fixed_relay_rate(&t, relay).unwrap();
    for k in [0.5, 3.0, 8.0] {
        let s = |p: Point| p.scale(k);
        let big = Topology {
            source: s(t.source),
            destinations: t.destinations.iter().map(|d| s(*d)).collect(),
            ..t.clone()
        };
        let r = fixed_relay_rate(&big, s(relay)).unwrap();
        assert!((r * k * k / base - 1.0).abs() < 1e-9);
    }
}
