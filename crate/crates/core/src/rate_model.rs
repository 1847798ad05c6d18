//! Wideband capacities and exact multicast-rate evaluation at a fixed relay.
//!
//! At a fixed relay position every hyperarc capacity is linear in its power,
//! so both rate evaluation for a given allocation and the joint power/rate
//! optimization are linear programs over per-path flows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance, distance_order, source_ordering, GeometryError, Hull, Point, GEOM_TOL};
use crate::hypergraph::{switch_value, HyperarcKey, Hypergraph, NodeId, ReceiverSet, MAX_DESTINATIONS};
use crate::lp::{LinearProgram, LpError};

/// Distances below this many metres are clamped in capacity formulas.
pub const EPS_DIST: f64 = 1e-3;

/// Relative tolerance when checking an allocation against the budgets.
const BUDGET_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("infeasible allocation: {0}")]
    InfeasibleAllocation(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub source: Point,
    pub destinations: Vec<Point>,
    /// Source power budget (W).
    pub p_source: f64,
    /// Relay power budget (W).
    pub p_relay: f64,
    /// Noise spectral density (W/Hz).
    pub n0: f64,
    /// Path-loss exponent.
    pub alpha: f64,
}

impl Topology {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidTopology(m.to_string()));
        if self.destinations.is_empty() {
            return bad("at least one destination is required");
        }
        if self.destinations.len() > MAX_DESTINATIONS {
            return bad("too many destinations");
        }
        if !self.source.is_finite() || self.destinations.iter().any(|d| !d.is_finite()) {
            return bad("coordinates must be finite");
        }
        if !(self.p_source > 0.0 && self.p_source.is_finite()) {
            return bad("P_s must be positive and finite");
        }
        if !(self.p_relay > 0.0 && self.p_relay.is_finite()) {
            return bad("P_r must be positive and finite");
        }
        if !(self.n0 > 0.0 && self.n0.is_finite()) {
            return bad("N0 must be positive and finite");
        }
        if !(self.alpha >= 2.0 && self.alpha.is_finite()) {
            return bad("alpha must be at least 2");
        }
        if self
            .destinations
            .iter()
            .all(|d| distance(*d, self.source) <= GEOM_TOL)
        {
            return bad("all destinations coincide with the source");
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.destinations.len()
    }

    /// Source followed by the destinations.
    pub fn all_points(&self) -> Vec<Point> {
        let mut v = Vec::with_capacity(self.destinations.len() + 1);
        v.push(self.source);
        v.extend_from_slice(&self.destinations);
        v
    }

    /// Median of the non-zero pairwise node distances (1 if there are none).
    pub fn length_scale(&self) -> f64 {
        let pts = self.all_points();
        let mut d = Vec::new();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let v = distance(pts[i], pts[j]);
                if v > GEOM_TOL {
                    d.push(v);
                }
            }
        }
        if d.is_empty() {
            return 1.0;
        }
        d.sort_by(f64::total_cmp);
        let m = d.len();
        if m % 2 == 1 {
            d[m / 2]
        } else {
            0.5 * (d[m / 2 - 1] + d[m / 2])
        }
    }

    /// Merges coincident destinations. Returns the reduced topology and, for
    /// every original destination, its index in the reduced list.
    pub fn dedup(&self) -> (Topology, Vec<usize>) {
        let mut kept: Vec<Point> = Vec::new();
        let mut alias = Vec::with_capacity(self.destinations.len());
        for d in &self.destinations {
            match kept.iter().position(|k| distance(*k, *d) <= GEOM_TOL) {
                Some(i) => alias.push(i),
                None => {
                    alias.push(kept.len());
                    kept.push(*d);
                }
            }
        }
        let mut t = self.clone();
        t.destinations = kept;
        (t, alias)
    }

    pub fn position(&self, node: NodeId, relay: Point) -> Point {
        match node {
            NodeId::Source => self.source,
            NodeId::Relay => relay,
            NodeId::Dest(i) => self.destinations[i],
        }
    }

    /// Budget of the given transmitter.
    pub fn budget(&self, tx: NodeId) -> f64 {
        if tx == NodeId::Relay {
            self.p_relay
        } else {
            self.p_source
        }
    }
}

/// `f P / (max(D, EPS_DIST)^α N0)` in bits/s (nats in the wideband limit;
/// the unit cancels in every ratio this crate reports).
pub fn hyperarc_capacity(power: f64, d_far: f64, alpha: f64, n0: f64, f: f64) -> f64 {
    f * power / (d_far.max(EPS_DIST).powf(alpha) * n0)
}

/// Farthest receiver from the transmitter; ties go to the smallest node id.
pub fn farthest_receiver(
    transmitter: NodeId,
    receivers: ReceiverSet,
    topology: &Topology,
    relay: Point,
) -> (NodeId, f64) {
    let tx = topology.position(transmitter, relay);
    let mut best = (NodeId::Source, f64::NEG_INFINITY);
    for n in receivers.iter() {
        let d = distance(tx, topology.position(n, relay));
        if d > best.1 {
            best = (n, d);
        }
    }
    best
}

/// Per-hyperarc powers keyed by hyperarc identity.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(into = "Vec<AllocationEntry>", from = "Vec<AllocationEntry>")]
pub struct PowerAllocation {
    pub powers: BTreeMap<HyperarcKey, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationEntry {
    pub arc: HyperarcKey,
    pub power: f64,
}

impl From<PowerAllocation> for Vec<AllocationEntry> {
    fn from(a: PowerAllocation) -> Self {
        a.powers
            .into_iter()
            .map(|(arc, power)| AllocationEntry { arc, power })
            .collect()
    }
}

impl From<Vec<AllocationEntry>> for PowerAllocation {
    fn from(v: Vec<AllocationEntry>) -> Self {
        let mut powers = BTreeMap::new();
        for e in v {
            *powers.entry(e.arc).or_insert(0.0) += e.power;
        }
        Self { powers }
    }
}

impl PowerAllocation {
    pub fn total(&self, tx: NodeId) -> f64 {
        self.powers
            .iter()
            .filter(|(k, _)| k.transmitter == tx)
            .map(|(_, p)| *p)
            .sum()
    }

    pub fn check(&self, topology: &Topology) -> Result<(), ModelError> {
        for (k, &p) in &self.powers {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(ModelError::InfeasibleAllocation(format!(
                    "power {p} on {k} is not a non-negative number"
                )));
            }
            if matches!(k.transmitter, NodeId::Dest(_)) {
                return Err(ModelError::InfeasibleAllocation(format!(
                    "{k} has a destination as transmitter"
                )));
            }
            if k.receivers.contains(k.transmitter) || k.receivers.is_empty() {
                return Err(ModelError::InfeasibleAllocation(format!("{k} has a bad receiver set")));
            }
        }
        for tx in [NodeId::Source, NodeId::Relay] {
            let budget = topology.budget(tx);
            let used = self.total(tx);
            if used > budget * (1.0 + BUDGET_TOL) {
                return Err(ModelError::InfeasibleAllocation(format!(
                    "{tx} uses {used} W of a {budget} W budget"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRate {
    pub destination: NodeId,
    pub legs: Vec<HyperarcKey>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVector {
    /// Largest per-destination flow carried by each hyperarc.
    pub arc_rates: Vec<(HyperarcKey, f64)>,
    pub path_rates: Vec<PathRate>,
    /// Indexed like the destinations of the topology passed in.
    pub destination_rates: Vec<f64>,
    pub multicast_rate: f64,
    /// True if some relevant distance was below [`EPS_DIST`].
    pub clamped: bool,
}

/// How switch activations are computed when evaluating rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SwitchMode {
    /// Exact 0/1 activations from the distance orderings at the relay.
    Hard,
    /// Sigmoid switch values with the given dimensionless sharpness.
    Soft(f64),
}

/// Hyperarcs and paths with capacities per watt, ready for an LP.
#[derive(Debug, Clone)]
pub(crate) struct FlowNetwork {
    pub keys: Vec<HyperarcKey>,
    /// Capacity per watt of allocated power.
    pub gain: Vec<f64>,
    /// Paths per destination as lists of indices into `keys`.
    pub paths: Vec<Vec<Vec<usize>>>,
    pub clamped: bool,
}

fn leg_distance(topology: &Topology, key: &HyperarcKey, relay: Point) -> f64 {
    distance(
        topology.position(key.transmitter, relay),
        topology.position(key.farthest, relay),
    )
}

impl FlowNetwork {
    /// Hyperarcs active at `relay` under the exact distance orderings.
    pub fn local(topology: &Topology, relay: Point) -> Self {
        let n = topology.n();
        let src_order = source_ordering(topology.source, &topology.destinations, relay);
        let rel_order: Vec<NodeId> = distance_order(relay, &topology.destinations)
            .into_iter()
            .map(NodeId::Dest)
            .collect();
        let mut keys = Vec::new();
        let push_prefixes = |tx: NodeId, ord: &[NodeId], keys: &mut Vec<HyperarcKey>| {
            let mut set = ReceiverSet::empty();
            for &node in ord {
                set.insert(node);
                keys.push(HyperarcKey {
                    transmitter: tx,
                    receivers: set,
                    farthest: node,
                });
            }
        };
        push_prefixes(NodeId::Source, &src_order, &mut keys);
        let n_source = keys.len();
        push_prefixes(NodeId::Relay, &rel_order, &mut keys);

        let mut clamped = false;
        let gain = keys
            .iter()
            .map(|k| {
                let d = leg_distance(topology, k, relay);
                clamped |= d < EPS_DIST;
                hyperarc_capacity(1.0, d, topology.alpha, topology.n0, 1.0)
            })
            .collect();

        let paths = (0..n)
            .map(|i| {
                let d = NodeId::Dest(i);
                let mut ps = Vec::new();
                for a in 0..n_source {
                    if keys[a].receivers.contains(d) {
                        ps.push(vec![a]);
                    }
                }
                for a in 0..n_source {
                    if keys[a].receivers.contains(NodeId::Relay) {
                        for b in n_source..keys.len() {
                            if keys[b].receivers.contains(d) {
                                ps.push(vec![a, b]);
                            }
                        }
                    }
                }
                ps
            })
            .collect();
        Self {
            keys,
            gain,
            paths,
            clamped,
        }
    }

    /// Arcs and paths of a global hypergraph with switch values at `relay`.
    pub fn from_graph(topology: &Topology, graph: &Hypergraph, relay: Point, mode: SwitchMode) -> Self {
        let scale = topology.length_scale();
        let mut clamped = false;
        let hard_keys: Option<Vec<HyperarcKey>> = match mode {
            SwitchMode::Hard => Some(Self::local(topology, relay).keys),
            SwitchMode::Soft(_) => None,
        };
        let keys: Vec<HyperarcKey> = graph.arcs.iter().map(|a| a.key).collect();
        let gain = graph
            .arcs
            .iter()
            .map(|a| {
                let f = match (&hard_keys, mode) {
                    (Some(active), _) => {
                        if active.contains(&a.key) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    (None, SwitchMode::Soft(g)) => switch_value(&a.switch, relay, g, scale),
                    (None, SwitchMode::Hard) => unreachable!(),
                };
                let d = leg_distance(topology, &a.key, relay);
                if f > 0.0 {
                    clamped |= d < EPS_DIST;
                }
                hyperarc_capacity(1.0, d, topology.alpha, topology.n0, f)
            })
            .collect();
        let paths = graph
            .paths
            .iter()
            .map(|ps| ps.iter().map(|p| p.legs.clone()).collect())
            .collect();
        Self {
            keys,
            gain,
            paths,
            clamped,
        }
    }

    /// Rate unit used to condition the LPs.
    fn rate_unit(topology: &Topology) -> f64 {
        topology.p_source / (topology.length_scale().powf(topology.alpha) * topology.n0)
    }

    /// Jointly optimal powers and path rates.
    pub fn optimize(&self, topology: &Topology) -> Result<(PowerAllocation, RateVector), ModelError> {
        let unit = Self::rate_unit(topology);
        let na = self.keys.len();
        // variables: capacities y_a in rate units, path rates, R. An arc's
        // budget share is y_a / g_a; keeping the gain out of the flow rows
        // keeps those rows at unit coefficients when a leg is very short.
        let path_offset = na;
        let n_paths: usize = self.paths.iter().map(|p| p.len()).sum();
        let r_var = path_offset + n_paths;
        let mut lp = LinearProgram::new(r_var + 1);
        lp.objective[r_var] = 1.0;
        let scaled_gain: Vec<f64> = self
            .keys
            .iter()
            .zip(&self.gain)
            .map(|(k, g)| g * topology.budget(k.transmitter) / unit)
            .collect();
        self.add_flow_rows(&mut lp, path_offset, r_var, |lp, a, flows| {
            let mut coeffs = flows;
            if scaled_gain[a] > 0.0 {
                coeffs.push((a, -1.0));
            }
            lp.add_row(coeffs, 0.0);
        });
        for tx in [NodeId::Source, NodeId::Relay] {
            let coeffs: Vec<(usize, f64)> = (0..na)
                .filter(|&a| self.keys[a].transmitter == tx && scaled_gain[a] > 0.0)
                .map(|a| (a, 1.0 / scaled_gain[a]))
                .collect();
            if !coeffs.is_empty() {
                lp.add_row(coeffs, 1.0);
            }
        }
        let sol = lp.solve()?;
        let mut alloc = PowerAllocation::default();
        for a in 0..na {
            if scaled_gain[a] > 0.0 && sol.x[a] > 0.0 {
                let share = sol.x[a] / scaled_gain[a];
                *alloc.powers.entry(self.keys[a]).or_insert(0.0) +=
                    share * topology.budget(self.keys[a].transmitter);
            }
        }
        // budgets hold exactly after rescaling away rounding overshoot
        for tx in [NodeId::Source, NodeId::Relay] {
            let used = alloc.total(tx);
            let budget = topology.budget(tx);
            if used > budget {
                for (_, p) in alloc.powers.iter_mut().filter(|(k, _)| k.transmitter == tx) {
                    *p *= budget / used;
                }
            }
        }
        Ok((alloc, self.rates(&sol.x, path_offset, r_var, unit)))
    }

    /// Best rates for a fixed allocation.
    pub fn evaluate(&self, topology: &Topology, alloc: &PowerAllocation) -> Result<RateVector, ModelError> {
        alloc.check(topology)?;
        let unit = Self::rate_unit(topology);
        let path_offset = 0;
        let n_paths: usize = self.paths.iter().map(|p| p.len()).sum();
        let r_var = n_paths;
        let mut lp = LinearProgram::new(r_var + 1);
        lp.objective[r_var] = 1.0;
        let caps: Vec<f64> = self
            .keys
            .iter()
            .zip(&self.gain)
            .map(|(k, g)| g * alloc.powers.get(k).copied().unwrap_or(0.0) / unit)
            .collect();
        self.add_flow_rows(&mut lp, path_offset, r_var, |lp, a, flows| {
            lp.add_row(flows, caps[a]);
        });
        let sol = lp.solve()?;
        Ok(self.rates(&sol.x, path_offset, r_var, unit))
    }

    /// Emits `R <= Σ_k r_k` per destination and hands every
    /// (hyperarc, destination) flow sum to `cap_row`.
    fn add_flow_rows<F>(&self, lp: &mut LinearProgram, path_offset: usize, r_var: usize, mut cap_row: F)
    where
        F: FnMut(&mut LinearProgram, usize, Vec<(usize, f64)>),
    {
        let mut k = path_offset;
        for ps in &self.paths {
            let mut sum = vec![(r_var, 1.0)];
            let mut per_arc: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
            for legs in ps {
                sum.push((k, -1.0));
                for &a in legs {
                    per_arc.entry(a).or_default().push((k, 1.0));
                }
                k += 1;
            }
            lp.add_row(sum, 0.0);
            for (a, flows) in per_arc {
                cap_row(lp, a, flows);
            }
        }
    }

    fn rates(&self, x: &[f64], path_offset: usize, r_var: usize, unit: f64) -> RateVector {
        let mut arc_rates = vec![0.0f64; self.keys.len()];
        let mut path_rates = Vec::new();
        let mut destination_rates = Vec::with_capacity(self.paths.len());
        let mut k = path_offset;
        for (i, ps) in self.paths.iter().enumerate() {
            let mut per_arc = vec![0.0f64; self.keys.len()];
            let mut total = 0.0;
            for legs in ps {
                let r = x[k] * unit;
                k += 1;
                total += r;
                for &a in legs {
                    per_arc[a] += r;
                }
                if r > 0.0 {
                    path_rates.push(PathRate {
                        destination: NodeId::Dest(i),
                        legs: legs.iter().map(|&a| self.keys[a]).collect(),
                        rate: r,
                    });
                }
            }
            for (a, v) in per_arc.into_iter().enumerate() {
                arc_rates[a] = arc_rates[a].max(v);
            }
            destination_rates.push(total);
        }
        let mut arcs: BTreeMap<HyperarcKey, f64> = BTreeMap::new();
        for (a, v) in arc_rates.into_iter().enumerate() {
            let e = arcs.entry(self.keys[a]).or_insert(0.0);
            *e = e.max(v);
        }
        RateVector {
            arc_rates: arcs.into_iter().collect(),
            path_rates,
            destination_rates,
            multicast_rate: x[r_var] * unit,
            clamped: self.clamped,
        }
    }
}

/// Maps rates of a merged topology back to the original destinations.
pub(crate) fn expand_rates(mut rates: RateVector, alias: &[usize]) -> RateVector {
    let merged = rates.destination_rates.clone();
    rates.destination_rates = alias.iter().map(|&a| merged[a]).collect();
    rates
}

/// Jointly optimal power allocation and rates with the relay fixed at `relay`.
///
/// The relay may lie anywhere, including outside the node hull; the
/// hyperarcs are those active at `relay`.
pub fn optimal_allocation_fixed_relay(
    topology: &Topology,
    relay: Point,
) -> Result<(PowerAllocation, RateVector), ModelError> {
    topology.validate()?;
    let (merged, alias) = topology.dedup();
    let (alloc, rates) = FlowNetwork::local(&merged, relay).optimize(&merged)?;
    Ok((alloc, expand_rates(rates, &alias)))
}

/// Multicast rate of the optimal allocation at `relay`.
pub fn fixed_relay_rate(topology: &Topology, relay: Point) -> Result<f64, ModelError> {
    Ok(optimal_allocation_fixed_relay(topology, relay)?.1.multicast_rate)
}

/// Best rates achievable with `allocation` at `relay`.
///
/// Hard mode activates exactly the hyperarcs implied by the distance
/// orderings at `relay`; soft mode weighs every hyperarc of the full
/// hypergraph by its switch value.
pub fn evaluate_rate_lp(
    topology: &Topology,
    relay: Point,
    allocation: &PowerAllocation,
    mode: SwitchMode,
) -> Result<RateVector, ModelError> {
    topology.validate()?;
    let (merged, alias) = topology.dedup();
    let net = match mode {
        SwitchMode::Hard => FlowNetwork::local(&merged, relay),
        SwitchMode::Soft(_) => {
            let hull = Hull::from_points(&merged.all_points(), crate::geometry::DEFAULT_HULL_MARGIN)?;
            let graph = Hypergraph::build(&merged, &hull);
            FlowNetwork::from_graph(&merged, &graph, relay, mode)
        }
    };
    Ok(expand_rates(net.evaluate(&merged, allocation)?, &alias))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_topo(dests: &[Point]) -> Topology {
        Topology {
            source: Point::new(0.0, 0.0),
            destinations: dests.to_vec(),
            p_source: 1.0,
            p_relay: 1.0,
            n0: 1.0,
            alpha: 2.0,
        }
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(hyperarc_capacity(1.0, 1.0, 2.0, 1.0, 1.0), 1.0);
        assert_eq!(hyperarc_capacity(2.0, 2.0, 2.0, 1.0, 1.0), 0.5);
        let share = 0.3;
        let d = 7.0;
        assert!((hyperarc_capacity(share * 5.0, d, 2.0, 0.1, 1.0) - share * 5.0 / (d * d * 0.1)).abs() < 1e-15);
        // clamp
        assert_eq!(
            hyperarc_capacity(1.0, 0.0, 2.0, 1.0, 1.0),
            hyperarc_capacity(1.0, EPS_DIST, 2.0, 1.0, 1.0)
        );
    }

    #[test]
    fn farthest_receiver_examples() {
        let t = unit_topo(&[Point::new(3.0, 0.0), Point::new(0.0, 3.0)]);
        let relay = Point::new(1.0, 0.0);
        let set = ReceiverSet::from_nodes([NodeId::Relay, NodeId::Dest(0)]);
        assert_eq!(farthest_receiver(NodeId::Source, set, &t, relay), (NodeId::Dest(0), 3.0));
        let set = ReceiverSet::from_nodes([NodeId::Dest(0)]);
        assert_eq!(farthest_receiver(NodeId::Relay, set, &t, relay), (NodeId::Dest(0), 2.0));
        let set = ReceiverSet::from_nodes([NodeId::Dest(0), NodeId::Dest(1)]);
        assert_eq!(farthest_receiver(NodeId::Source, set, &t, relay).0, NodeId::Dest(0));
    }

    #[test]
    fn validation_names_fields() {
        let mut t = unit_topo(&[Point::new(1.0, 0.0)]);
        t.p_source = -1.0;
        let e = t.validate().unwrap_err().to_string();
        assert!(e.contains("P_s"));
        let t = unit_topo(&[]);
        assert!(t.validate().is_err());
    }

    #[test]
    fn direct_only_when_relay_sits_on_destination() {
        let t = unit_topo(&[Point::new(10.0, 0.0)]);
        let (_, rates) = optimal_allocation_fixed_relay(&t, Point::new(10.0, 0.0)).unwrap();
        // relay at d1 decodes everything the source sends it, then forwards
        // over a clamped (huge) link: the source link to r is the bottleneck
        assert!((rates.multicast_rate - 0.01).abs() < 1e-12);
    }

    #[test]
    fn zero_allocation_gives_zero_rate() {
        let t = unit_topo(&[Point::new(10.0, 0.0)]);
        let r = evaluate_rate_lp(&t, Point::new(5.0, 0.0), &PowerAllocation::default(), SwitchMode::Hard).unwrap();
        assert_eq!(r.multicast_rate, 0.0);
    }

    #[test]
    fn over_budget_allocation_is_rejected() {
        let t = unit_topo(&[Point::new(10.0, 0.0)]);
        let mut a = PowerAllocation::default();
        a.powers.insert(
            HyperarcKey {
                transmitter: NodeId::Source,
                receivers: ReceiverSet::from_nodes([NodeId::Dest(0)]),
                farthest: NodeId::Dest(0),
            },
            2.0,
        );
        assert!(matches!(
            evaluate_rate_lp(&t, Point::new(5.0, 0.0), &a, SwitchMode::Hard),
            Err(ModelError::InfeasibleAllocation(_))
        ));
    }

    #[test]
    fn dedup_aliases_duplicates() {
        let t = unit_topo(&[Point::new(1.0, 0.0), Point::new(2.0, 0.0), Point::new(1.0, 0.0)]);
        let (m, alias) = t.dedup();
        assert_eq!(m.destinations.len(), 2);
        assert_eq!(alias, vec![0, 1, 0]);
    }
}
