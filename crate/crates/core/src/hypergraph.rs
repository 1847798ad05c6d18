//! Hyperarc enumeration, switch functions and path enumeration.
//!
//! A hyperarc is identified by its transmitter, its receiver set and the
//! receiver that sets its capacity (the farthest one). Two prefix sets that
//! contain the same nodes but end on different farthest receivers are
//! different hyperarcs: their capacities depend on different distances.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{
    distance, relay_order_regions, source_order_regions, Hull, Point, RegionDecomposition,
    GEOM_TOL,
};
use crate::rate_model::Topology;

/// Node identifier. Destinations are zero-based internally and printed
/// one-based (`d1`, `d2`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum NodeId {
    Source,
    Relay,
    Dest(usize),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Source => write!(f, "s"),
            NodeId::Relay => write!(f, "r"),
            NodeId::Dest(i) => write!(f, "d{}", i + 1),
        }
    }
}

impl From<NodeId> for String {
    fn from(n: NodeId) -> String {
        n.to_string()
    }
}

impl TryFrom<String> for NodeId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        match s.as_str() {
            "s" => Ok(NodeId::Source),
            "r" => Ok(NodeId::Relay),
            _ => s
                .strip_prefix('d')
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(|k| NodeId::Dest(k - 1))
                .ok_or_else(|| format!("bad node id `{s}`")),
        }
    }
}

/// Receiver set as a bitmask: bit 0 is the relay, bit `i + 1` is destination `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ReceiverSet(u64);

/// Largest number of destinations a [`ReceiverSet`] can hold.
pub const MAX_DESTINATIONS: usize = 63;

impl ReceiverSet {
    pub fn empty() -> Self {
        Self(0)
    }

    fn bit(node: NodeId) -> u64 {
        match node {
            NodeId::Relay => 1,
            NodeId::Dest(i) => {
                assert!(i < MAX_DESTINATIONS, "destination index out of range");
                1 << (i + 1)
            }
            NodeId::Source => panic!("the source is never a receiver"),
        }
    }

    pub fn insert(&mut self, node: NodeId) {
        self.0 |= Self::bit(node);
    }

    pub fn contains(&self, node: NodeId) -> bool {
        !matches!(node, NodeId::Source) && self.0 & Self::bit(node) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..64).filter(move |b| self.0 & (1 << b) != 0).map(|b| {
            if b == 0 {
                NodeId::Relay
            } else {
                NodeId::Dest(b - 1)
            }
        })
    }

    pub fn from_nodes<I: IntoIterator<Item = NodeId>>(nodes: I) -> Self {
        let mut s = Self::empty();
        for n in nodes {
            s.insert(n);
        }
        s
    }
}

impl Serialize for ReceiverSet {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for ReceiverSet {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let nodes = Vec::<NodeId>::deserialize(de)?;
        if nodes.contains(&NodeId::Source) {
            return Err(serde::de::Error::custom("the source cannot be a receiver"));
        }
        Ok(Self::from_nodes(nodes))
    }
}

/// Identity of a hyperarc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HyperarcKey {
    pub transmitter: NodeId,
    pub receivers: ReceiverSet,
    pub farthest: NodeId,
}

impl fmt::Display for HyperarcKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},", self.transmitter)?;
        for n in self.receivers.iter() {
            write!(f, "{n}")?;
        }
        write!(f, ";{})", self.farthest)
    }
}

/// Distance between two nodes; an endpoint equal to [`NodeId::Relay`] is
/// evaluated at the variable relay point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceExpr {
    pub from: NodeId,
    pub to: NodeId,
    pub from_at: Point,
    pub to_at: Point,
}

impl DistanceExpr {
    pub fn depends_on_relay(&self) -> bool {
        self.from == NodeId::Relay || self.to == NodeId::Relay
    }

    /// The fixed endpoint of a relay-dependent expression.
    pub fn anchor(&self) -> Option<(NodeId, Point)> {
        match (self.from, self.to) {
            (NodeId::Relay, NodeId::Relay) => None,
            (NodeId::Relay, n) => Some((n, self.to_at)),
            (n, NodeId::Relay) => Some((n, self.from_at)),
            _ => None,
        }
    }

    pub fn eval(&self, relay: Point) -> f64 {
        let a = if self.from == NodeId::Relay { relay } else { self.from_at };
        let b = if self.to == NodeId::Relay { relay } else { self.to_at };
        distance(a, b)
    }
}

/// `z = plus - minus`; the switch is on when `z >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchTerm {
    pub plus: DistanceExpr,
    pub minus: DistanceExpr,
}

impl SwitchTerm {
    pub fn z(&self, relay: Point) -> f64 {
        self.plus.eval(relay) - self.minus.eval(relay)
    }
}

/// Product of sigmoids `Π (1 + γ exp(-γ z_l / L))^-1` over the terms, where
/// `L` is `length_scale` so that `γ` is dimensionless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SwitchSpec {
    pub terms: Vec<SwitchTerm>,
}

impl SwitchSpec {
    pub fn is_always_on(&self) -> bool {
        self.terms.is_empty()
    }

    /// Exact activation: every term non-negative (ties count as active).
    pub fn hard_value(&self, relay: Point) -> bool {
        self.terms.iter().all(|t| t.z(relay) >= -GEOM_TOL)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function `1 / (1 + e^-x)`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Soft switch value at `relay`. `gamma` is dimensionless; distances are
/// divided by `length_scale` before entering the sigmoid.
pub fn switch_value(spec: &SwitchSpec, relay: Point, gamma: f64, length_scale: f64) -> f64 {
    let lg = gamma.ln();
    let log_f: f64 = spec
        .terms
        .iter()
        .map(|t| -softplus(lg - gamma * t.z(relay) / length_scale))
        .sum();
    log_f.exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperarc {
    pub key: HyperarcKey,
    pub switch: SwitchSpec,
}

impl Hyperarc {
    pub fn transmitter(&self) -> NodeId {
        self.key.transmitter
    }

    pub fn receivers(&self) -> ReceiverSet {
        self.key.receivers
    }
}

/// Direct path (one source arc) or relayed path (source arc containing the
/// relay, then a relay arc). Legs index into [`Hypergraph::arcs`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub destination: usize,
    pub legs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypergraph {
    pub n: usize,
    /// Source arcs first, then relay arcs.
    pub arcs: Vec<Hyperarc>,
    pub n_source: usize,
    /// Paths grouped by destination index.
    pub paths: Vec<Vec<Path>>,
}

impl Hypergraph {
    pub fn source_arcs(&self) -> &[Hyperarc] {
        &self.arcs[..self.n_source]
    }

    pub fn relay_arcs(&self) -> &[Hyperarc] {
        &self.arcs[self.n_source..]
    }

    pub fn index_of(&self, key: &HyperarcKey) -> Option<usize> {
        self.arcs.iter().position(|a| a.key == *key)
    }

    /// Full construction for a topology whose destinations are distinct.
    pub fn build(topology: &Topology, hull: &Hull) -> Self {
        let dests = &topology.destinations;
        let source = build_source_hyperarcs(topology, hull);
        let relay_regions = relay_order_regions(dests, hull);
        let relay = build_relay_hyperarcs(topology, &relay_regions);
        let paths = enumerate_paths(&source, &relay, dests.len());
        let n_source = source.len();
        let mut arcs = source;
        arcs.extend(relay);
        Self {
            n: dests.len(),
            arcs,
            n_source,
            paths,
        }
    }

    /// Hyperarcs that are active (hard switch) at `relay`.
    pub fn active_at(&self, relay: Point) -> Vec<usize> {
        (0..self.arcs.len())
            .filter(|&i| self.arcs[i].switch.hard_value(relay))
            .collect()
    }
}

fn position(topology: &Topology, node: NodeId) -> Point {
    match node {
        NodeId::Source => topology.source,
        NodeId::Dest(i) => topology.destinations[i],
        NodeId::Relay => Point::new(f64::NAN, f64::NAN),
    }
}

fn dist_expr(topology: &Topology, a: NodeId, b: NodeId) -> DistanceExpr {
    DistanceExpr {
        from: a,
        to: b,
        from_at: position(topology, a),
        to_at: position(topology, b),
    }
}

/// Prefix hyperarcs of an ordering: `(tx, first k, k-th)` for k = 1..len.
fn prefix_keys(tx: NodeId, ordering: &[NodeId]) -> Vec<HyperarcKey> {
    let mut set = ReceiverSet::empty();
    ordering
        .iter()
        .map(|&n| {
            set.insert(n);
            HyperarcKey {
                transmitter: tx,
                receivers: set,
                farthest: n,
            }
        })
        .collect()
}

/// Range of the source-relay distance over the hull.
fn source_relay_range(topology: &Topology, hull: &Hull) -> (f64, f64) {
    let s = topology.source;
    let hi = hull
        .polygon
        .vertices
        .iter()
        .map(|v| distance(s, *v))
        .fold(0.0, f64::max);
    let lo = if hull.contains(s, GEOM_TOL) {
        0.0
    } else {
        distance(s, hull.project(s))
    };
    (lo, hi)
}

/// Switch terms for a source arc. Every condition compares `D_sr` with a
/// fixed radius; only the tightest lower and upper bound survive, and bounds
/// implied by the hull are dropped.
fn source_switch(topology: &Topology, key: &HyperarcKey, hull: &Hull) -> SwitchSpec {
    let s = NodeId::Source;
    let n = topology.destinations.len();
    let d_s = |node: NodeId| distance(topology.source, position(topology, node));
    // D_sr >= lower, D_sr <= upper
    let mut lower: Option<(f64, NodeId)> = None;
    let mut upper: Option<(f64, NodeId)> = None;
    let mut tighten_lower = |c: f64, node: NodeId| {
        if lower.is_none_or(|(b, _)| c > b) {
            lower = Some((c, node));
        }
    };
    let mut lows = Vec::new();
    let mut ups = Vec::new();
    let far = key.farthest;
    let others = (0..n).map(NodeId::Dest).chain(std::iter::once(NodeId::Relay));
    for m in others {
        if m == far {
            continue;
        }
        let inside = key.receivers.contains(m);
        match (far == NodeId::Relay, m == NodeId::Relay) {
            // relay is the farthest: D_sm <= D_sr for members, D_sr <= D_sm otherwise
            (true, false) => {
                if inside {
                    lows.push((d_s(m), m));
                } else {
                    ups.push((d_s(m), m));
                }
            }
            // relay is a member: D_sr <= D_s,far; non-member: D_s,far <= D_sr
            (false, true) => {
                if inside {
                    ups.push((d_s(far), far));
                } else {
                    lows.push((d_s(far), far));
                }
            }
            // two fixed nodes: consistent by construction
            _ => {}
        }
    }
    for (c, m) in lows {
        tighten_lower(c, m);
    }
    for (c, m) in ups {
        if upper.is_none_or(|(b, _)| c < b) {
            upper = Some((c, m));
        }
    }

    let (lo, hi) = source_relay_range(topology, hull);
    let sr = dist_expr(topology, s, NodeId::Relay);
    let mut terms = Vec::new();
    if let Some((c, m)) = lower {
        if c > lo + GEOM_TOL {
            terms.push(SwitchTerm {
                plus: sr,
                minus: dist_expr(topology, s, m),
            });
        }
    }
    if let Some((c, m)) = upper {
        if c < hi - GEOM_TOL {
            terms.push(SwitchTerm {
                plus: dist_expr(topology, s, m),
                minus: sr,
            });
        }
    }
    SwitchSpec { terms }
}

/// Distinct source hyperarcs over all relay positions in the hull.
pub fn build_source_hyperarcs(topology: &Topology, hull: &Hull) -> Vec<Hyperarc> {
    let regions = source_order_regions(topology.source, &topology.destinations, hull);
    source_hyperarcs_from_regions(topology, &regions, hull)
}

pub fn source_hyperarcs_from_regions(
    topology: &Topology,
    regions: &RegionDecomposition,
    hull: &Hull,
) -> Vec<Hyperarc> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for region in &regions.cells {
        for key in prefix_keys(NodeId::Source, &region.ordering) {
            if seen.insert(key, ()).is_none() {
                out.push(Hyperarc {
                    key,
                    switch: source_switch(topology, &key, hull),
                });
            }
        }
    }
    out
}

/// Switch terms for a relay arc `(r, S, far)`: every member is no farther
/// than `far`, every non-member no closer. Terms implied by the hull are
/// dropped.
fn relay_switch(topology: &Topology, key: &HyperarcKey, hull: &Hull) -> SwitchSpec {
    let n = topology.destinations.len();
    let far = key.farthest;
    let r = NodeId::Relay;
    let mut terms = Vec::new();
    for j in 0..n {
        let m = NodeId::Dest(j);
        if m == far {
            continue;
        }
        // z = D(r, plus) - D(r, minus) >= 0
        let (plus, minus) = if key.receivers.contains(m) { (far, m) } else { (m, far) };
        let pp = position(topology, plus);
        let pm = position(topology, minus);
        // vacuous if the whole hull is at least as close to `minus`
        let implied = match crate::geometry::perpendicular_bisector(pm, pp) {
            Ok(h) => hull
                .polygon
                .vertices
                .iter()
                .all(|v| h.contains(*v, GEOM_TOL)),
            Err(_) => true,
        };
        if !implied {
            terms.push(SwitchTerm {
                plus: dist_expr(topology, r, plus),
                minus: dist_expr(topology, r, minus),
            });
        }
    }
    SwitchSpec { terms }
}

/// Distinct relay hyperarcs from the prefix sets of every cell ordering.
pub fn build_relay_hyperarcs(topology: &Topology, relay_regions: &RegionDecomposition) -> Vec<Hyperarc> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for region in &relay_regions.cells {
        for key in prefix_keys(NodeId::Relay, &region.ordering) {
            if seen.insert(key, ()).is_none() {
                out.push(Hyperarc {
                    key,
                    switch: relay_switch(topology, &key, &relay_regions.hull),
                });
            }
        }
    }
    out
}

/// Paths per destination. Leg indices refer to the concatenation
/// `source_arcs ++ relay_arcs`.
pub fn enumerate_paths(source_arcs: &[Hyperarc], relay_arcs: &[Hyperarc], n: usize) -> Vec<Vec<Path>> {
    let ns = source_arcs.len();
    (0..n)
        .map(|i| {
            let d = NodeId::Dest(i);
            let mut paths = Vec::new();
            for (a, arc) in source_arcs.iter().enumerate() {
                if arc.key.receivers.contains(d) {
                    paths.push(Path {
                        destination: i,
                        legs: vec![a],
                    });
                }
            }
            for (a, arc) in source_arcs.iter().enumerate() {
                if !arc.key.receivers.contains(NodeId::Relay) {
                    continue;
                }
                for (b, rarc) in relay_arcs.iter().enumerate() {
                    if rarc.key.receivers.contains(d) {
                        paths.push(Path {
                            destination: i,
                            legs: vec![a, ns + b],
                        });
                    }
                }
            }
            paths
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(source: Point, dests: &[Point]) -> Topology {
        Topology {
            source,
            destinations: dests.to_vec(),
            p_source: 1.0,
            p_relay: 1.0,
            n0: 1.0,
            alpha: 2.0,
        }
    }

    fn hull_of(t: &Topology) -> Hull {
        Hull::from_points(&t.all_points(), crate::geometry::DEFAULT_HULL_MARGIN).unwrap()
    }

    #[test]
    fn node_id_strings_round_trip() {
        for n in [NodeId::Source, NodeId::Relay, NodeId::Dest(0), NodeId::Dest(11)] {
            let s: String = n.into();
            assert_eq!(NodeId::try_from(s).unwrap(), n);
        }
        assert_eq!(NodeId::Dest(2).to_string(), "d3");
        assert!(NodeId::try_from("d0".to_string()).is_err());
        assert!(NodeId::try_from("x".to_string()).is_err());
    }

    #[test]
    fn switch_value_examples() {
        let t = topo(Point::new(0.0, 0.0), &[Point::new(1.0, 0.0)]);
        // z = D(s,d1) - D(s,r)
        let term = SwitchTerm {
            plus: dist_expr(&t, NodeId::Source, NodeId::Dest(0)),
            minus: dist_expr(&t, NodeId::Source, NodeId::Relay),
        };
        let spec = SwitchSpec { terms: vec![term] };
        let at = |z: f64| Point::new(1.0 - z, 0.0);
        assert!((switch_value(&spec, at(0.0), 100.0, 1.0) - 1.0 / 101.0).abs() < 1e-15);
        let v = switch_value(&spec, at(1.0), 100.0, 1.0);
        assert!((v - 1.0 / (1.0 + 100.0 * (-100f64).exp())).abs() < 1e-15);
        let v = switch_value(&spec, at(-0.1), 100.0, 1.0);
        let expect = 1.0 / (1.0 + 100.0 * 10f64.exp());
        assert!((v - expect).abs() < 1e-12 * expect.max(1e-300) + 1e-18);
        assert!((v - 4.5e-7).abs() < 1e-8);
        assert_eq!(switch_value(&SwitchSpec::default(), at(0.3), 100.0, 1.0), 1.0);
    }

    #[test]
    fn relay_arcs_for_two_destinations() {
        let t = topo(
            Point::new(1.0, 3.0),
            &[Point::new(0.0, 0.0), Point::new(2.0, 0.0)],
        );
        let hull = hull_of(&t);
        let regions = relay_order_regions(&t.destinations, &hull);
        let arcs = build_relay_hyperarcs(&t, &regions);
        assert_eq!(arcs.len(), 4);
        let sets: std::collections::BTreeSet<_> = arcs.iter().map(|a| a.key.receivers).collect();
        assert_eq!(sets.len(), 3);
    }

    #[test]
    fn single_destination_relay_arc_is_always_on() {
        let t = topo(Point::new(0.0, 0.0), &[Point::new(4.0, 0.0)]);
        let hull = hull_of(&t);
        let regions = relay_order_regions(&t.destinations, &hull);
        let arcs = build_relay_hyperarcs(&t, &regions);
        assert_eq!(arcs.len(), 1);
        assert!(arcs[0].switch.is_always_on());
    }

    #[test]
    fn source_arcs_three_destinations_in_large_domain() {
        let t = topo(
            Point::new(0.0, 0.0),
            &[Point::new(1.0, 0.0), Point::new(0.0, 2.0), Point::new(-3.0, 0.0)],
        );
        let dom = Hull::from_polygon(crate::geometry::ConvexPolygon {
            vertices: vec![
                Point::new(-10.0, -10.0),
                Point::new(10.0, -10.0),
                Point::new(10.0, 10.0),
                Point::new(-10.0, 10.0),
            ],
        })
        .unwrap();
        let arcs = build_source_hyperarcs(&t, &dom);
        // disc 4, two inner rings 2 each, outer ring adds {d1,d2,d3} and its relay extension
        assert_eq!(arcs.len(), 3 * 3 - 1 + 2);
        for a in &arcs {
            assert!(a.switch.terms.len() <= 2);
        }
    }

    #[test]
    fn paths_satisfy_containment() {
        let t = topo(
            Point::new(0.0, 0.0),
            &[Point::new(3.0, 1.0), Point::new(1.0, 4.0)],
        );
        let g = Hypergraph::build(&t, &hull_of(&t));
        for (i, ps) in g.paths.iter().enumerate() {
            assert!(ps.len() <= g.n_source + g.n_source * g.relay_arcs().len());
            for p in ps {
                let last = &g.arcs[*p.legs.last().unwrap()];
                assert!(last.key.receivers.contains(NodeId::Dest(i)));
                if p.legs.len() == 2 {
                    assert!(g.arcs[p.legs[0]].key.receivers.contains(NodeId::Relay));
                    assert_eq!(g.arcs[p.legs[1]].key.transmitter, NodeId::Relay);
                }
            }
        }
    }
}
