use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use relayplan::geometry::{
    convex_hull, distance, locate, perpendicular_bisector, relay_order_regions, Hull, DEFAULT_HULL_MARGIN,
};
use relayplan::hypergraph::{switch_value, Hypergraph, NodeId, ReceiverSet};
use relayplan::rate_model::{
    evaluate_rate_lp, fixed_relay_rate, hyperarc_capacity, optimal_allocation_fixed_relay, SwitchMode,
};
use relayplan::{Point, Topology};

fn coord() -> impl Strategy<Value = f64> {
    0.0f64..100.0
}

fn point() -> impl Strategy<Value = Point> {
    (coord(), coord()).prop_map(|(x, y)| Point::new(x, y))
}

/// Topologies whose nodes are pairwise at least one unit apart.
fn topology(n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Topology> {
    (point(), proptest::collection::vec(point(), n))
        .prop_map(|(source, destinations)| Topology {
            source,
            destinations,
            p_source: 1.0,
            p_relay: 1.0,
            n0: 1e-3,
            alpha: 2.0,
        })
        .prop_filter("nodes too close", |t| {
            let pts = t.all_points();
            (0..pts.len()).all(|i| (i + 1..pts.len()).all(|j| distance(pts[i], pts[j]) > 1.0))
        })
}

fn hull_of(t: &Topology) -> Hull {
    Hull::from_points(&t.all_points(), DEFAULT_HULL_MARGIN).unwrap()
}

fn point_in(hull: &Hull, rng: &mut ChaCha8Rng) -> Point {
    let (lo, hi) = hull.polygon.bounding_box();
    loop {
        let p = Point::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y));
        if hull.contains(p, 0.0) {
            return p;
        }
    }
}

fn sorted_by_distance(from: Point, nodes: &[(NodeId, Point)]) -> Vec<NodeId> {
    let mut v = nodes.to_vec();
    v.sort_by(|a, b| distance(from, a.1).total_cmp(&distance(from, b.1)));
    v.into_iter().map(|(id, _)| id).collect()
}

/// Smallest gap between two distances that decide an ordering at `relay`.
fn ordering_margin(t: &Topology, relay: Point) -> f64 {
    let mut from_relay: Vec<f64> = t.destinations.iter().map(|d| distance(relay, *d)).collect();
    let mut from_source: Vec<f64> = t.destinations.iter().map(|d| distance(t.source, *d)).collect();
    from_source.push(distance(t.source, relay));
    let gap = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    };
    gap(&mut from_relay).min(gap(&mut from_source))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bisector_membership_matches_distances(a in point(), b in point(), p in point()) {
        prop_assume!(distance(a, b) > 1e-3);
        let h = perpendicular_bisector(a, b).unwrap();
        let (da, db) = (distance(p, a), distance(p, b));
        prop_assume!((da - db).abs() > 1e-9);
        prop_assert_eq!(h.contains(p, 0.0), da < db);
    }

    #[test]
    fn hull_is_idempotent(pts in proptest::collection::vec(point(), 3..20)) {
        let once = convex_hull(&pts);
        prop_assume!(once.is_ok());
        let once = once.unwrap();
        let twice = convex_hull(&once.vertices).unwrap();
        prop_assert_eq!(once.vertices, twice.vertices);
    }

    #[test]
    fn cells_are_witnessed_and_ordered(t in topology(1..=5)) {
        let hull = hull_of(&t);
        let regions = relay_order_regions(&t.destinations, &hull);
        let nodes: Vec<(NodeId, Point)> =
            t.destinations.iter().enumerate().map(|(i, d)| (NodeId::Dest(i), *d)).collect();
        for r in &regions.cells {
            prop_assert!(r.cell.clearance(r.cell.witness) > 0.0);
            prop_assert_eq!(&r.ordering, &sorted_by_distance(r.cell.witness, &nodes));
        }
    }

    #[test]
    fn hyperarc_counts_are_bounded(t in topology(1..=6)) {
        let n = t.n();
        let hull = hull_of(&t);
        let g = Hypergraph::build(&t, &hull);
        let cells = relay_order_regions(&t.destinations, &hull).len();
        prop_assert!(g.source_arcs().len() <= 3 * n - 1);
        prop_assert!(g.relay_arcs().len() <= n + 2 * (cells - 1));
    }

    #[test]
    fn paths_respect_containment(t in topology(1..=5)) {
        let g = Hypergraph::build(&t, &hull_of(&t));
        for (i, paths) in g.paths.iter().enumerate() {
            prop_assert!(!paths.is_empty());
            for p in paths {
                prop_assert_eq!(p.destination, i);
                let last = &g.arcs[*p.legs.last().unwrap()];
                prop_assert!(last.receivers().contains(NodeId::Dest(i)));
                for w in p.legs.windows(2) {
                    let next_tx = g.arcs[w[1]].transmitter();
                    prop_assert!(g.arcs[w[0]].receivers().contains(next_tx));
                }
            }
        }
    }

    #[test]
    fn soft_switches_agree_with_prefix_sets(t in topology(1..=4), seed in 0u64..1000) {
        let hull = hull_of(&t);
        let g = Hypergraph::build(&t, &hull);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let relay = point_in(&hull, &mut rng);
        let scale = t.length_scale();
        prop_assume!(ordering_margin(&t, relay) > 1e-2 * scale);

        let dests: Vec<(NodeId, Point)> =
            t.destinations.iter().enumerate().map(|(i, d)| (NodeId::Dest(i), *d)).collect();
        let mut with_relay = dests.clone();
        with_relay.push((NodeId::Relay, relay));
        let mut want = BTreeSet::new();
        for (tx, order) in [
            (NodeId::Source, sorted_by_distance(t.source, &with_relay)),
            (NodeId::Relay, sorted_by_distance(relay, &dests)),
        ] {
            for k in 1..=order.len() {
                want.insert((tx, ReceiverSet::from_nodes(order[..k].iter().copied())));
            }
        }
        let got: BTreeSet<_> = g
            .arcs
            .iter()
            .filter(|a| switch_value(&a.switch, relay, 1e4, scale) > 0.5)
            .map(|a| (a.transmitter(), a.receivers()))
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn capacity_is_monotone(p in 0.1f64..10.0, d in 0.1f64..100.0, f in 0.05f64..0.95, k in 1.01f64..2.0) {
        let c = hyperarc_capacity(p, d, 2.0, 1.0, f);
        prop_assert!(hyperarc_capacity(p * k, d, 2.0, 1.0, f) > c);
        prop_assert!(hyperarc_capacity(p, d, 2.0, 1.0, (f * k).min(1.0)) > c);
        prop_assert!(hyperarc_capacity(p, d * k, 2.0, 1.0, f) < c);
    }

    #[test]
    fn fixed_relay_lp_is_sound(t in topology(1..=4), seed in 0u64..1000) {
        let hull = hull_of(&t);
        let relay = point_in(&hull, &mut ChaCha8Rng::seed_from_u64(seed));
        let (alloc, rates) = optimal_allocation_fixed_relay(&t, relay).unwrap();
        alloc.check(&t).unwrap();
        let min = rates.destination_rates.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!((min - rates.multicast_rate).abs() <= 1e-9 * min);
        for (i, &r) in rates.destination_rates.iter().enumerate() {
            let through: f64 = rates
                .path_rates
                .iter()
                .filter(|p| p.destination == NodeId::Dest(i))
                .map(|p| p.rate)
                .sum();
            prop_assert!(r <= through * (1.0 + 1e-9));
        }
        // re-evaluating the optimal allocation reproduces the optimum
        let again = evaluate_rate_lp(&t, relay, &alloc, SwitchMode::Hard).unwrap();
        prop_assert!((again.multicast_rate - rates.multicast_rate).abs() <= 1e-7 * rates.multicast_rate);
    }

    #[test]
    fn rate_is_homogeneous_in_power(t in topology(1..=4), seed in 0u64..1000) {
        let hull = hull_of(&t);
        let relay = point_in(&hull, &mut ChaCha8Rng::seed_from_u64(seed));
        let base = fixed_relay_rate(&t, relay).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let scaled = Topology { p_source: c * t.p_source, p_relay: c * t.p_relay, ..t.clone() };
            let r = fixed_relay_rate(&scaled, relay).unwrap();
            prop_assert!((r - c * base).abs() < 1e-9 * c * base);
        }
    }

    #[test]
    fn soft_rate_approaches_hard_rate(t in topology(1..=3), seed in 0u64..1000) {
        let hull = hull_of(&t);
        let relay = point_in(&hull, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assume!(ordering_margin(&t, relay) > 1e-2 * t.length_scale());
        let (alloc, hard) = optimal_allocation_fixed_relay(&t, relay).unwrap();
        let gaps: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&g| {
                let soft = evaluate_rate_lp(&t, relay, &alloc, SwitchMode::Soft(g)).unwrap();
                (soft.multicast_rate - hard.multicast_rate).abs() / hard.multicast_rate
            })
            .collect();
        prop_assert!(gaps[1] <= gaps[0] && gaps[2] <= gaps[1], "{:?}", gaps);
        prop_assert!(gaps[2] <= 1e-6);
    }
}

#[test]
fn relay_cells_partition_the_hull() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 2..=5 {
        let t = Topology {
            source: Point::new(50.0, 50.0),
            destinations: (0..n)
                .map(|_| Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)))
                .collect(),
            p_source: 1.0,
            p_relay: 1.0,
            n0: 1.0,
            alpha: 2.0,
        };
        let hull = hull_of(&t);
        let regions = relay_order_regions(&t.destinations, &hull);
        let nodes: Vec<(NodeId, Point)> =
            t.destinations.iter().enumerate().map(|(i, d)| (NodeId::Dest(i), *d)).collect();
        for _ in 0..10_000 {
            let p = point_in(&hull, &mut rng);
            let inside: Vec<usize> = (0..regions.len())
                .filter(|&c| regions.cells[c].cell.contains(p, -1e-9))
                .collect();
            assert!(inside.len() <= 1, "{p:?} lies in the interior of cells {inside:?}");
            let c = locate(&regions, p).unwrap();
            assert!(inside.is_empty() || inside == [c]);
            assert_eq!(regions.cells[c].ordering, sorted_by_distance(p, &nodes));
        }
    }
}

#[test]
fn collinear_destinations_give_all_orderings_of_the_line() {
    // sites at 0, 1, 3, 7, 15 along a diagonal: all pairwise midpoints differ
    let offsets = [0.0, 1.0, 3.0, 7.0, 15.0];
    for n in 2..=offsets.len() {
        let t = Topology {
            source: Point::new(0.0, 10.0),
            destinations: offsets[..n].iter().map(|&s| Point::new(s, s)).collect(),
            p_source: 1.0,
            p_relay: 1.0,
            n0: 1.0,
            alpha: 2.0,
        };
        let regions = relay_order_regions(&t.destinations, &hull_of(&t));
        assert_eq!(regions.len(), n * (n - 1) / 2 + 1, "n = {n}");
    }
}
