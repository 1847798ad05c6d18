//! Log-domain smooth program over the relay position, powers, switch values
//! and path rates.
//!
//! Coordinates are shifted to the hull centroid and divided by the topology
//! length scale `L`; rates are measured in units of `P_s / (L^α N0)`. Power
//! variables are logs of budget shares. With these units every quantity the
//! optimizer sees is O(1) regardless of the physical scale of the instance.

use serde::Serialize;

use super::barrier::{Func, Problem};
use crate::geometry::{Hull, Point};
use crate::hypergraph::{softplus, DistanceExpr, Hypergraph, NodeId};
use crate::rate_model::{PowerAllocation, Topology, EPS_DIST};

/// Half-width (scaled units) of the strip standing in for a segment hull.
const STRIP_HALF_WIDTH: f64 = 1e-2;
/// Margin used when constructing strictly feasible points.
const SLACK: f64 = 1e-2;
/// Smoothing of the Euclidean norm in lower-bound distance links.
const NORM_SMOOTHING: f64 = 1e-3;
/// Weight of the τ-independent quadratic that keeps log-domain variables of
/// switched-off hyperarcs from drifting without bound.
const RIDGE: f64 = 1e-3;

/// Relay-distance block: `u >= |x - q_x|`, `v >= |y - q_y|`,
/// `((u² + v²) e^{-2 D'})^p <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub node: NodeId,
    pub at: [f64; 2],
    pub u: usize,
    pub v: usize,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermVars {
    pub arc: usize,
    pub f: usize,
    pub z: usize,
}

/// Rate constraint for one hyperarc and one destination: the flows of all
/// paths of that destination through the hyperarc fit its capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct RateGroup {
    pub arc: usize,
    pub destination: usize,
    pub paths: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConstraintCounts {
    pub rate: usize,
    pub switch_product: usize,
    pub sigmoid: usize,
    pub z_link: usize,
    pub surrogate: usize,
    pub coordinate: usize,
    pub hull: usize,
    pub budget: usize,
    pub objective: usize,
    pub bounds: usize,
}

/// How a distance enters the program.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Dist {
    Const(f64),
    /// Relay distance to anchor `k`.
    Relay(usize),
}

#[derive(Debug, Clone)]
pub struct ProgramC {
    pub problem: Problem,
    pub counts: ConstraintCounts,
    pub gamma: f64,
    pub p: f64,
    pub origin: Point,
    pub scale: f64,
    /// `P_s / (L^α N0)`.
    pub rate_unit: f64,
    pub anchors: Vec<Anchor>,
    /// Log power share per hyperarc.
    pub power: Vec<usize>,
    /// Product switch variable per hyperarc (none if always on).
    pub arc_switch: Vec<Option<usize>>,
    pub terms: Vec<TermVars>,
    /// Log path-rate variable per path, grouped by destination.
    pub path_vars: Vec<Vec<usize>>,
    pub groups: Vec<RateGroup>,
    pub t: usize,
    alpha: f64,
    log_kappa: Vec<f64>,
    far: Vec<Dist>,
    links: Vec<Func>,
    sigmoid_gamma_index: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    transmitters: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssembleError {
    NoPaths,
}

impl ProgramC {
    pub fn to_scaled(&self, p: Point) -> [f64; 2] {
        [(p.x - self.origin.x) / self.scale, (p.y - self.origin.y) / self.scale]
    }

    pub fn to_world(&self, x: &[f64]) -> Point {
        Point::new(self.origin.x + x[0] * self.scale, self.origin.y + x[1] * self.scale)
    }

    pub fn n_vars(&self) -> usize {
        self.problem.n
    }

    /// Assembles the program for a hypergraph built on a topology with
    /// distinct destinations.
    pub fn assemble(
        topology: &Topology,
        hull: &Hull,
        graph: &Hypergraph,
        gamma: f64,
        p: f64,
        penalty: f64,
    ) -> Result<Self, AssembleError> {
        if graph.paths.iter().any(|ps| ps.is_empty()) {
            return Err(AssembleError::NoPaths);
        }
        let scale = topology.length_scale();
        let origin = hull.centroid();
        let sc = |q: Point| [(q.x - origin.x) / scale, (q.y - origin.y) / scale];
        let alpha = topology.alpha;
        let eps = EPS_DIST / scale;

        let pts: Vec<[f64; 2]> = hull.polygon.vertices.iter().map(|v| sc(*v)).collect();
        let mut diam: f64 = 0.0;
        for a in &pts {
            for b in &pts {
                diam = diam.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        let u_max = 2.0 * diam + 1.0;
        let d_max = (u_max * 2f64.sqrt()).ln() + 1.0;

        let mut n = 3; // x, y, t
        let mut next = |k: usize| {
            let s = n;
            n += k;
            s
        };

        // anchors for every relay distance that must be bounded from above
        let mut anchors: Vec<Anchor> = Vec::new();
        let anchor_of = |node: NodeId, at: Point, anchors: &mut Vec<Anchor>, next: &mut dyn FnMut(usize) -> usize| {
            if let Some(k) = anchors.iter().position(|a| a.node == node) {
                return k;
            }
            let b = next(3);
            anchors.push(Anchor {
                node,
                at: sc(at),
                u: b,
                v: b + 1,
                d: b + 2,
            });
            anchors.len() - 1
        };

        let node_pos = |node: NodeId| topology.position(node, Point::new(f64::NAN, f64::NAN));
        let mut far = Vec::with_capacity(graph.arcs.len());
        for arc in &graph.arcs {
            let k = arc.key;
            let dist = if k.transmitter == NodeId::Relay {
                Dist::Relay(anchor_of(k.farthest, node_pos(k.farthest), &mut anchors, &mut next))
            } else if k.farthest == NodeId::Relay {
                Dist::Relay(anchor_of(NodeId::Source, topology.source, &mut anchors, &mut next))
            } else {
                let d = crate::geometry::distance(topology.source, node_pos(k.farthest)) / scale;
                Dist::Const(d.max(eps))
            };
            far.push(dist);
        }
        // anchors for relay distances subtracted in switch terms
        for arc in &graph.arcs {
            for term in &arc.switch.terms {
                if let Some((node, at)) = term.minus.anchor() {
                    anchor_of(node, at, &mut anchors, &mut next);
                }
            }
        }

        let power: Vec<usize> = graph.arcs.iter().map(|_| next(1)).collect();
        let mut arc_switch = Vec::with_capacity(graph.arcs.len());
        let mut terms = Vec::new();
        for (a, arc) in graph.arcs.iter().enumerate() {
            if arc.switch.terms.is_empty() {
                arc_switch.push(None);
                continue;
            }
            arc_switch.push(Some(next(1)));
            for _ in &arc.switch.terms {
                let b = next(2);
                terms.push(TermVars { arc: a, f: b, z: b + 1 });
            }
        }
        let path_vars: Vec<Vec<usize>> = graph
            .paths
            .iter()
            .map(|ps| ps.iter().map(|_| next(1)).collect())
            .collect();
        let t = 2;

        let mut hard = Vec::new();
        let mut soft = Vec::new();
        let mut counts = ConstraintCounts::default();
        let mut ridge = Vec::new();
        let mut lower = vec![f64::NEG_INFINITY; n];
        let mut upper = vec![f64::INFINITY; n];
        let lin = |terms: Vec<(usize, f64)>, c: f64| Func::Linear { terms, c };

        // hull; a zero-area hull gets a strip the barrier can work with, and
        // iterates are projected back onto the real hull afterwards
        let widen = if hull.inflated { STRIP_HALF_WIDTH } else { 0.0 };
        for h in &hull.halfplanes {
            let o = h.normal[0] * origin.x + h.normal[1] * origin.y;
            hard.push(lin(vec![(0, h.normal[0]), (1, h.normal[1])], -(h.offset - o) / scale - widen));
            counts.hull += 1;
        }

        // anchors: coordinate links, surrogate, bounds
        for an in &anchors {
            for (coord, var) in [(0usize, an.u), (1usize, an.v)] {
                hard.push(lin(vec![(coord, 1.0), (var, -1.0)], -an.at[coord]));
                hard.push(lin(vec![(coord, -1.0), (var, -1.0)], an.at[coord]));
                counts.coordinate += 2;
                hard.push(lin(vec![(var, 1.0)], -u_max));
                upper[var] = u_max;
                counts.bounds += 1;
            }
            soft.push(Func::Surrogate {
                u: an.u,
                v: an.v,
                d: an.d,
                p,
                eps,
            });
            counts.surrogate += 1;
            hard.push(lin(vec![(an.d, -1.0)], eps.ln()));
            hard.push(lin(vec![(an.d, 1.0)], -d_max));
            lower[an.d] = eps.ln();
            upper[an.d] = d_max;
            counts.bounds += 2;
        }

        // switch terms
        let mut links = Vec::with_capacity(terms.len());
        let mut sigmoid_gamma_index = Vec::with_capacity(terms.len());
        let mut term_iter = terms.iter();
        for (a, arc) in graph.arcs.iter().enumerate() {
            let Some(fa) = arc_switch[a] else { continue };
            let mut prod = vec![(fa, 1.0)];
            for term in &arc.switch.terms {
                let tv = term_iter.next().expect("one variable pair per term");
                prod.push((tv.f, -1.0));
                let mut exps = Vec::new();
                let mut norms = Vec::new();
                let mut c = 0.0;
                // z <= plus - minus, with plus bounded below and minus above
                match expr_kind(&term.plus) {
                    None => c -= term.plus.eval(Point::new(f64::NAN, f64::NAN)) / scale,
                    Some(at) => norms.push(sc(at)),
                }
                match term.minus.anchor() {
                    None => c += term.minus.eval(Point::new(f64::NAN, f64::NAN)) / scale,
                    Some((node, _)) => {
                        let k = anchors.iter().position(|an| an.node == node).expect("anchor exists");
                        exps.push(anchors[k].d);
                    }
                }
                let link = Func::Link {
                    z: tv.z,
                    exps,
                    norms,
                    eps: NORM_SMOOTHING,
                    c,
                };
                links.push(link.clone());
                hard.push(link);
                counts.z_link += 1;
                sigmoid_gamma_index.push(hard.len());
                hard.push(Func::Sigmoid {
                    f: tv.f,
                    z: tv.z,
                    gamma,
                });
                counts.sigmoid += 1;
                ridge.push(tv.z);
                ridge.push(tv.f);
            }
            hard.push(lin(prod, 0.0));
            counts.switch_product += 1;
            ridge.push(fa);
        }

        // budgets and power bounds
        let log_kappa: Vec<f64> = graph
            .arcs
            .iter()
            .map(|a| (topology.budget(a.key.transmitter) / topology.p_source).ln())
            .collect();
        for tx in [NodeId::Source, NodeId::Relay] {
            let exps: Vec<(usize, f64)> = graph
                .arcs
                .iter()
                .enumerate()
                .filter(|(_, a)| a.key.transmitter == tx)
                .map(|(i, _)| (power[i], 0.0))
                .collect();
            if !exps.is_empty() {
                hard.push(Func::LogSumExp {
                    exps,
                    lin: vec![],
                    c: 0.0,
                });
                counts.budget += 1;
            }
        }
        for &pv in &power {
            ridge.push(pv);
        }

        // rate constraints per (hyperarc, destination)
        let mut groups = Vec::new();
        for (i, ps) in graph.paths.iter().enumerate() {
            let mut by_arc: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
            for (k, path) in ps.iter().enumerate() {
                for &a in &path.legs {
                    by_arc.entry(a).or_default().push(path_vars[i][k]);
                }
            }
            for (a, vars) in by_arc {
                groups.push(RateGroup {
                    arc: a,
                    destination: i,
                    paths: vars,
                });
            }
        }
        for g in &groups {
            let a = g.arc;
            let mut lin_terms = vec![(power[a], -1.0)];
            if let Some(fa) = arc_switch[a] {
                lin_terms.push((fa, -1.0));
            }
            let mut c = -log_kappa[a];
            match far[a] {
                Dist::Const(d) => c += alpha * d.ln(),
                Dist::Relay(k) => lin_terms.push((anchors[k].d, alpha)),
            }
            hard.push(Func::LogSumExp {
                exps: g.paths.iter().map(|&v| (v, 0.0)).collect(),
                lin: lin_terms,
                c,
            });
            counts.rate += 1;
        }
        for vars in &path_vars {
            for &v in vars {
                ridge.push(v);
            }
        }

        // objective epigraph: t <= ln Σ_k exp(r'_k) for every destination
        for vars in &path_vars {
            hard.push(Func::NegLogSumExp {
                exps: vars.clone(),
                lin: vec![(t, 1.0)],
                c: 0.0,
            });
            counts.objective += 1;
        }

        let rate_unit = topology.p_source / (scale.powf(alpha) * topology.n0);
        Ok(Self {
            problem: Problem {
                n,
                cost: vec![(t, -1.0)],
                hard,
                soft,
                rho: penalty,
                ridge: ridge.into_iter().map(|v| (v, RIDGE)).collect(),
            },
            counts,
            gamma,
            p,
            origin,
            scale,
            rate_unit,
            anchors,
            power,
            arc_switch,
            terms,
            path_vars,
            groups,
            t,
            alpha,
            log_kappa,
            far,
            links,
            sigmoid_gamma_index,
            lower,
            upper,
            transmitters: graph.arcs.iter().map(|a| a.key.transmitter).collect(),
        })
    }

    /// Changes the switch sharpness in place.
    pub fn set_gamma(&mut self, gamma: f64) {
        for &i in &self.sigmoid_gamma_index {
            if let Func::Sigmoid { gamma: g, .. } = &mut self.problem.hard[i] {
                *g = gamma;
            }
        }
        self.gamma = gamma;
    }

    fn cap_log(&self, x: &[f64], a: usize) -> f64 {
        let mut v = x[self.power[a]] + self.log_kappa[a];
        if let Some(fa) = self.arc_switch[a] {
            v += x[fa];
        }
        v - self.alpha
            * match self.far[a] {
                Dist::Const(d) => d.ln(),
                Dist::Relay(k) => x[self.anchors[k].d],
            }
    }

    /// Makes `x` strictly feasible for the hard constraints, keeping the
    /// relay coordinates. With `fresh` every dependent variable is rebuilt;
    /// otherwise variables are only lowered or raised as far as needed.
    pub fn complete(&self, x: &mut [f64], fresh: bool) {
        let low = |v: f64, b: f64| if fresh || v < b + SLACK * 1e-3 { b + SLACK } else { v };
        let high = |v: f64, b: f64| if fresh || v > b - SLACK * 1e-3 { b - SLACK } else { v };
        for an in &self.anchors {
            let dx = (x[0] - an.at[0]).abs();
            let dy = (x[1] - an.at[1]).abs();
            x[an.u] = low(x[an.u], dx);
            x[an.v] = low(x[an.v], dy);
            if fresh {
                let w = x[an.u].hypot(x[an.v]);
                x[an.d] = w.ln().clamp(self.lower[an.d] + SLACK, self.upper[an.d] - SLACK);
            }
        }
        for (tv, link) in self.terms.iter().zip(&self.links) {
            // the link value is affine in z with unit slope
            let mut probe = x.to_vec();
            probe[tv.z] = 0.0;
            let bound = -link.value(&probe);
            let lg = self.gamma.ln();
            x[tv.z] = high(x[tv.z], bound);
            let fb = -softplus(lg - self.gamma * x[tv.z]);
            x[tv.f] = high(x[tv.f], fb);
        }
        for (a, fa) in self.arc_switch.iter().enumerate() {
            if let Some(fa) = *fa {
                let sum: f64 = self.terms.iter().filter(|t| t.arc == a).map(|t| x[t.f]).sum();
                x[fa] = high(x[fa], sum);
            }
        }
        if fresh {
            for tx in [NodeId::Source, NodeId::Relay] {
                let idx: Vec<usize> = (0..self.power.len())
                    .filter(|&a| self.transmitter_of(a) == tx)
                    .collect();
                for &a in &idx {
                    x[self.power[a]] = (0.5 / idx.len() as f64).ln();
                }
            }
            for vars in &self.path_vars {
                for &v in vars {
                    x[v] = f64::INFINITY;
                }
            }
            for g in &self.groups {
                let b = self.cap_log(x, g.arc) - (g.paths.len() as f64).ln() - SLACK;
                for &v in &g.paths {
                    x[v] = x[v].min(b);
                }
            }
        } else {
            for g in &self.groups {
                let vals = g.paths.iter().map(|&v| x[v]);
                let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + vals.map(|v| (v - m).exp()).sum::<f64>().ln();
                let excess = lse - (self.cap_log(x, g.arc) - SLACK * 1e-3);
                if excess > 0.0 {
                    for &v in &g.paths {
                        x[v] -= excess + SLACK;
                    }
                }
            }
        }
        let tb = self
            .path_vars
            .iter()
            .map(|vars| {
                let m = vars.iter().map(|&v| x[v]).fold(f64::NEG_INFINITY, f64::max);
                m + vars.iter().map(|&v| (x[v] - m).exp()).sum::<f64>().ln()
            })
            .fold(f64::INFINITY, f64::min);
        x[self.t] = high(x[self.t], tb);
    }

    fn transmitter_of(&self, a: usize) -> NodeId {
        self.transmitters[a]
    }

    /// Fresh strictly feasible point with the relay at `relay`.
    pub fn start_point(&self, relay: Point) -> Vec<f64> {
        let mut x = vec![0.0; self.n_vars()];
        let s = self.to_scaled(relay);
        x[0] = s[0];
        x[1] = s[1];
        self.complete(&mut x, true);
        x
    }

    /// Power allocation implied by the log shares.
    pub fn allocation(&self, x: &[f64], graph: &Hypergraph, topology: &Topology) -> PowerAllocation {
        let mut alloc = PowerAllocation::default();
        for (a, arc) in graph.arcs.iter().enumerate() {
            let share = x[self.power[a]].exp();
            alloc
                .powers
                .insert(arc.key, share * topology.budget(arc.key.transmitter));
        }
        alloc
    }

    /// Multicast rate implied by the program's own variables.
    pub fn implied_rate(&self, x: &[f64]) -> f64 {
        x[self.t].exp() * self.rate_unit
    }

    /// Largest relative excess of `‖(u, v)‖` over `e^{D'}` among the anchors.
    pub fn distance_violation(&self, x: &[f64]) -> f64 {
        self.anchors
            .iter()
            .map(|an| (x[an.u].hypot(x[an.v]) / x[an.d].exp() - 1.0).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Fixed endpoint of a relay-dependent distance used as a lower bound.
fn expr_kind(e: &DistanceExpr) -> Option<Point> {
    e.anchor().map(|(_, at)| at)
}
