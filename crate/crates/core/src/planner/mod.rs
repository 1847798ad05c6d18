//! Relay placement: the smooth log-domain solver, the grid oracle and the
//! centroid baseline.
//!
//! Every reported plan goes through the same final step: with the relay
//! fixed, the power allocation and rates are recomputed exactly by linear
//! programming. The smooth solver only decides where the relay goes.

pub mod barrier;
pub mod program;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    relay_order_regions, source_order_regions, superimposed_witnesses, Hull, Point,
    GEOM_TOL,
};
use crate::hypergraph::Hypergraph;
use crate::rate_model::{
    expand_rates, FlowNetwork, ModelError, PowerAllocation, RateVector, Topology,
};
use barrier::Settings;
use program::ProgramC;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("a destination has no path from the source")]
    DegenerateProgram,
}

impl From<crate::geometry::GeometryError> for PlanError {
    fn from(e: crate::geometry::GeometryError) -> Self {
        PlanError::Model(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Dimensionless switch sharpness; distances enter the sigmoids divided
    /// by the topology length scale.
    pub gamma: f64,
    /// Surrogate exponent.
    pub p: f64,
    /// Newton steps per start.
    pub max_iter: usize,
    pub kkt_tol: f64,
    /// Weight of the quadratic penalty on the distance surrogates.
    pub penalty: f64,
    /// Number of sharpness levels, ending at `gamma`, each a factor √10 apart.
    pub gamma_stages: usize,
    /// Initial barrier weight per hard constraint. Small values let the
    /// barrier drag the distance bounds away from the starting relay.
    pub tau0: f64,
    pub tau_factor: f64,
    /// Half-width used to inflate a zero-area hull (metres).
    pub hull_margin: f64,
    /// Extra uniformly random starting points, drawn from `seed`.
    pub extra_starts: usize,
    pub seed: u64,
    /// Record a per-stage trace.
    pub trace: bool,
    /// Refine the selected relay by a pattern search on the exact rate
    /// before the final allocation is computed.
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 100.0,
            p: 5.0,
            max_iter: 2000,
            kkt_tol: 1e-7,
            penalty: 1e3,
            gamma_stages: 3,
            tau0: 1.0,
            tau_factor: 20.0,
            hull_margin: crate::geometry::DEFAULT_HULL_MARGIN,
            extra_starts: 0,
            seed: 0,
            trace: false,
            polish: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return bad("p must be at least 1");
        }
        if !(self.kkt_tol > 0.0) || !(self.penalty > 0.0) || !(self.hull_margin > 0.0) {
            return bad("tolerances, penalty and hull margin must be positive");
        }
        if self.max_iter == 0 || self.gamma_stages == 0 {
            return bad("max_iter and gamma_stages must be at least 1");
        }
        if !(self.tau0 > 0.0) || !(self.tau_factor > 1.0) {
            return bad("tau0 must be positive and tau_factor above 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Convex,
    Grid,
    Centroid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub start: usize,
    pub gamma: f64,
    pub newton_steps: usize,
    pub tau: f64,
    pub implied_rate: f64,
    pub relay: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Residual and convergence flag of the best smooth iterate.
    pub kkt_residual: Option<f64>,
    pub p: Option<f64>,
    pub gamma: Option<f64>,
    pub repair_applied: bool,
    pub converged: bool,
    pub starts: usize,
    /// Index of the start whose result was reported.
    pub selected_start: Option<usize>,
    /// True when a starting point itself beat every optimized iterate.
    pub selected_initial_point: bool,
    /// Rate implied by the solver's own variables at its best iterate,
    /// before repair.
    pub pre_repair_rate: Option<f64>,
    /// Largest relative excess of a coordinate-bound distance over its log
    /// variable at that iterate.
    pub distance_violation: Option<f64>,
    pub clamped: bool,
    pub evaluated_points: usize,
    /// Exact-rate improvement contributed by the final pattern search.
    pub polish_gain: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub method: Method,
    pub relay: Point,
    pub allocation: PowerAllocation,
    pub multicast_rate: f64,
    pub destination_rates: Vec<f64>,
    pub diagnostics: Diagnostics,
}

/// Topology with coincident destinations merged, its hull and hypergraph.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub topology: Topology,
    pub merged: Topology,
    pub alias: Vec<usize>,
    pub hull: Hull,
    pub graph: Hypergraph,
}

impl Prepared {
    pub fn new(topology: &Topology, hull_margin: f64) -> Result<Self, PlanError> {
        topology.validate()?;
        let (merged, alias) = topology.dedup();
        let hull = Hull::from_points(&merged.all_points(), hull_margin)?;
        let graph = Hypergraph::build(&merged, &hull);
        Ok(Self {
            topology: topology.clone(),
            merged,
            alias,
            hull,
            graph,
        })
    }

    /// Exact optimal allocation at `relay` (hyperarcs from exact orderings).
    pub fn repair(&self, relay: Point) -> Result<(PowerAllocation, RateVector), PlanError> {
        let (alloc, rates) = FlowNetwork::local(&self.merged, relay).optimize(&self.merged)?;
        Ok((alloc, expand_rates(rates, &self.alias)))
    }

    pub fn rate_at(&self, relay: Point) -> Result<f64, PlanError> {
        let net = FlowNetwork::local(&self.merged, relay);
        Ok(net.optimize(&self.merged)?.1.multicast_rate)
    }

    /// Hull centroid followed by one interior point of every non-empty
    /// intersection of a relay cell and a source band.
    pub fn start_points(&self) -> Vec<Point> {
        let relay = relay_order_regions(&self.merged.destinations, &self.hull);
        let source = source_order_regions(self.merged.source, &self.merged.destinations, &self.hull);
        let mut pts = vec![self.hull.centroid()];
        for w in superimposed_witnesses(&relay, &source) {
            if pts.iter().all(|p| crate::geometry::distance(*p, w) > GEOM_TOL) {
                pts.push(w);
            }
        }
        pts
    }
}

/// Deterministic preference: higher rate, then lexicographically smaller relay.
fn better(a: (f64, Point), b: (f64, Point)) -> bool {
    if a.0 != b.0 {
        return a.0 > b.0;
    }
    (a.1.x, a.1.y) < (b.1.x, b.1.y)
}

/// Uniform point in the hull by rejection from its bounding box.
fn random_point_in(hull: &Hull, rng: &mut ChaCha8Rng) -> Point {
    let (lo, hi) = hull.polygon.bounding_box();
    for _ in 0..10_000 {
        let p = Point::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y));
        if hull.contains(p, 0.0) {
            return p;
        }
    }
    hull.centroid()
}

/// Result of one optimizer run from one starting point.
#[derive(Debug, Clone)]
pub struct StartOutcome {
    pub start: Point,
    pub relay: Point,
    pub implied_rate: f64,
    pub distance_violation: f64,
    pub newton_steps: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub trace: Vec<TraceRow>,
}

fn run_start(
    prog: &mut ProgramC,
    start_index: usize,
    start: Point,
    config: &SolverConfig,
) -> Option<StartOutcome> {
    let stages = config.gamma_stages;
    prog.set_gamma(config.gamma * 10f64.powf(-0.5 * (stages - 1) as f64));
    let mut x = prog.start_point(start);
    let mut steps = 0;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    let mut trace = Vec::new();
    let m = prog.problem.hard.len() as f64;
    for k in 0..stages {
        let gamma = config.gamma * 10f64.powf(-0.5 * (stages - 1 - k) as f64);
        prog.set_gamma(gamma);
        let last = k + 1 == stages;
        if k > 0 {
            prog.complete(&mut x, false);
        }
        let settings = Settings {
            tau0: if k == 0 { config.tau0 * m } else { 10.0 * config.tau0 * m },
            tau_factor: config.tau_factor,
            gap_tol: if last { config.kkt_tol } else { 1e-3 },
            newton_tol: if last { 1e-4 } else { 0.25 },
            max_newton: config.max_iter.saturating_sub(steps).max(1),
            ..Settings::default()
        };
        let out = barrier::solve(&prog.problem, x.clone(), &settings).ok()?;
        steps += out.newton_steps;
        x = out.x;
        kkt = out.kkt_residual;
        converged = out.converged;
        if config.trace {
            trace.push(TraceRow {
                start: start_index,
                gamma,
                newton_steps: out.newton_steps,
                tau: out.tau,
                implied_rate: prog.implied_rate(&x),
                relay: prog.to_world(&x),
            });
        }
        if !out.converged && !last {
            // budget exhausted in an intermediate stage
            converged = false;
            if steps >= config.max_iter {
                break;
            }
        }
    }
    Some(StartOutcome {
        start,
        relay: prog.to_world(&x),
        implied_rate: prog.implied_rate(&x),
        distance_violation: prog.distance_violation(&x),
        newton_steps: steps,
        converged,
        kkt_residual: kkt,
        trace,
    })
}

/// Compass search on the exact rate, restricted to the hull. The direction
/// set is rotated after every contraction so ridges of the max-min rate that
/// are not axis aligned can still be followed. Poll points are projected onto
/// the hull and skipped when the projection shortens them below a quarter
/// of the step.
fn polish(prep: &Prepared, start: Point, rate: f64) -> Result<(f64, Point, usize), PlanError> {
    let scale = prep.merged.length_scale();
    let mut step = 0.05 * scale;
    let min_step = 1e-7 * scale;
    let mut best = (rate, start);
    let mut angle = 0.0f64;
    let mut evals = 0;
    while step > min_step && evals < 2000 {
        let mut moved = false;
        for k in 0..8 {
            let a = angle + k as f64 * std::f64::consts::FRAC_PI_4;
            let cand = prep.hull.project(Point::new(
                best.1.x + step * a.cos(),
                best.1.y + step * a.sin(),
            ));
            // a step squashed by the projection belongs to a finer level
            if crate::geometry::distance(cand, best.1) < 0.25 * step {
                continue;
            }
            evals += 1;
            let r = prep.rate_at(cand)?;
            if r > best.0 * (1.0 + 1e-12) {
                best = (r, cand);
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
            angle += 0.618_033_988_749_895 * std::f64::consts::FRAC_PI_4;
        }
    }
    Ok((best.0, best.1, evals))
}

#[derive(Debug, Clone, Copy)]
enum Origin {
    Outcome(usize),
    Start(usize),
    Node,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    rate: f64,
    relay: Point,
    origin: Origin,
}

fn best_candidate(cands: &[Candidate]) -> Option<Candidate> {
    cands.iter().copied().reduce(|a, b| {
        if better((b.rate, b.relay), (a.rate, a.relay)) {
            b
        } else {
            a
        }
    })
}

/// Full report of a smooth-solver run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub plan: PlanResult,
    pub outcomes: Vec<StartOutcome>,
    pub counts: program::ConstraintCounts,
}

/// Multi-start smooth solve followed by the exact repair step.
pub fn solve_program_c(topology: &Topology, config: &SolverConfig) -> Result<PlanResult, PlanError> {
    Ok(solve_program_c_report(topology, config)?.plan)
}

pub fn solve_program_c_report(topology: &Topology, config: &SolverConfig) -> Result<SolveReport, PlanError> {
    config.validate()?;
    let prep = Prepared::new(topology, config.hull_margin)?;
    let mut prog = ProgramC::assemble(
        &prep.merged,
        &prep.hull,
        &prep.graph,
        config.gamma,
        config.p,
        config.penalty,
    )
    .map_err(|_| PlanError::DegenerateProgram)?;

    let mut starts = prep.start_points();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.extra_starts {
        starts.push(random_point_in(&prep.hull, &mut rng));
    }

    let mut outcomes = Vec::with_capacity(starts.len());
    for (i, &s) in starts.iter().enumerate() {
        if let Some(o) = run_start(&mut prog, i, s, config) {
            outcomes.push((i, o));
        }
    }

    // candidates: every optimized iterate, every starting point and every
    // destination. A relay on top of a destination turns that destination
    // into a relay, an optimum no interior start tends to reach.
    let mut candidates: Vec<Candidate> = Vec::new();
    for (k, (_, o)) in outcomes.iter().enumerate() {
        let relay = prep.hull.project(o.relay);
        candidates.push(Candidate {
            rate: prep.rate_at(relay)?,
            relay,
            origin: Origin::Outcome(k),
        });
    }
    for (i, &s) in starts.iter().enumerate() {
        candidates.push(Candidate {
            rate: prep.rate_at(s)?,
            relay: s,
            origin: Origin::Start(i),
        });
    }
    for d in &prep.merged.destinations {
        let q = prep.hull.project(*d);
        candidates.push(Candidate {
            rate: prep.rate_at(q)?,
            relay: q,
            origin: Origin::Node,
        });
    }
    let best = best_candidate(&candidates).expect("at least the centroid is a candidate");
    let best_rate = best.rate;
    let mut chosen = best;
    let mut polish_evals = 0;
    if config.polish {
        // the smooth model can rank basins differently from the exact rate,
        // so every optimized iterate is refined, not only the leader
        let mut seeds: Vec<Candidate> = vec![best];
        for c in candidates.iter().filter(|c| matches!(c.origin, Origin::Outcome(_))) {
            let fresh = seeds
                .iter()
                .all(|s| crate::geometry::distance(s.relay, c.relay) > 1e-6 * prep.merged.length_scale());
            if fresh {
                seeds.push(*c);
            }
        }
        let mut refined = Vec::with_capacity(seeds.len());
        for s in seeds {
            let (rate, relay, evals) = polish(&prep, s.relay, s.rate)?;
            polish_evals += evals;
            refined.push(Candidate { rate, relay, ..s });
        }
        chosen = best_candidate(&refined).expect("the leader is always refined");
    }
    let polish_gain = chosen.rate - best_rate;
    let relay = chosen.relay;
    let (allocation, rates) = prep.repair(relay)?;

    let total_steps: usize = outcomes.iter().map(|(_, o)| o.newton_steps).sum();
    // the pre-repair solution is the iterate the smooth model itself rates
    // highest, whichever candidate the exact rate later preferred
    let smooth_best = outcomes
        .iter()
        .map(|(_, o)| o)
        .reduce(|a, b| if b.implied_rate > a.implied_rate { b } else { a });
    let diagnostics = Diagnostics {
        iterations: total_steps,
        kkt_residual: smooth_best.map(|o| o.kkt_residual),
        p: Some(config.p),
        gamma: Some(config.gamma),
        repair_applied: true,
        converged: smooth_best.is_some_and(|o| o.converged),
        starts: starts.len(),
        selected_start: match chosen.origin {
            Origin::Outcome(k) => Some(outcomes[k].0),
            Origin::Start(i) => Some(i),
            Origin::Node => None,
        },
        selected_initial_point: !matches!(chosen.origin, Origin::Outcome(_)),
        pre_repair_rate: smooth_best.map(|o| o.implied_rate),
        distance_violation: smooth_best.map(|o| o.distance_violation),
        clamped: rates.clamped,
        evaluated_points: candidates.len() + polish_evals,
        polish_gain,
        trace: outcomes.iter().flat_map(|(_, o)| o.trace.clone()).collect(),
    };
    let plan = PlanResult {
        method: Method::Convex,
        relay,
        allocation,
        multicast_rate: rates.multicast_rate,
        destination_rates: rates.destination_rates,
        diagnostics,
    };
    Ok(SolveReport {
        plan,
        outcomes: outcomes.into_iter().map(|(_, o)| o).collect(),
        counts: prog.counts,
    })
}

/// Candidate relay positions of the grid oracle. `resolution` is the number
/// of intervals per axis, so doubling it keeps every previous grid point.
pub fn oracle_points(prep: &Prepared, resolution: usize) -> Vec<Point> {
    let mut pts = Vec::new();
    let res = resolution.max(1);
    if prep.hull.inflated {
        let v = &prep.hull.nodes_hull.vertices;
        let (a, b) = (v[0], v[v.len() - 1]);
        for k in 0..=res {
            pts.push(a.lerp(b, k as f64 / res as f64));
        }
    } else {
        let (lo, hi) = prep.hull.polygon.bounding_box();
        for i in 0..=res {
            for j in 0..=res {
                let p = Point::new(
                    lo.x + (hi.x - lo.x) * i as f64 / res as f64,
                    lo.y + (hi.y - lo.y) * j as f64 / res as f64,
                );
                if prep.hull.contains(p, GEOM_TOL) {
                    pts.push(p);
                }
            }
        }
    }
    pts.extend(prep.start_points());
    pts.extend(prep.hull.nodes_hull.vertices.iter().copied());
    pts
}

/// Exhaustive search over a hull grid with an exact LP at every point.
pub fn grid_oracle(topology: &Topology, resolution: usize, hull_margin: f64) -> Result<PlanResult, PlanError> {
    if resolution < 2 {
        return Err(PlanError::Config("resolution must be at least 2".into()));
    }
    let prep = Prepared::new(topology, hull_margin)?;
    let pts = oracle_points(&prep, resolution);
    let mut best: Option<(f64, Point)> = None;
    for &p in &pts {
        let r = prep.rate_at(p)?;
        if best.is_none_or(|b| better((r, p), b)) {
            best = Some((r, p));
        }
    }
    let (_, relay) = best.expect("the oracle always has candidates");
    let (allocation, rates) = prep.repair(relay)?;
    Ok(PlanResult {
        method: Method::Grid,
        relay,
        allocation,
        multicast_rate: rates.multicast_rate,
        destination_rates: rates.destination_rates,
        diagnostics: Diagnostics {
            repair_applied: true,
            converged: true,
            clamped: rates.clamped,
            evaluated_points: pts.len(),
            ..Diagnostics::default()
        },
    })
}

/// Plan with the relay fixed at the hull centroid.
pub fn centroid_plan(topology: &Topology, hull_margin: f64) -> Result<PlanResult, PlanError> {
    let prep = Prepared::new(topology, hull_margin)?;
    let relay = prep.hull.centroid();
    let (allocation, rates) = prep.repair(relay)?;
    Ok(PlanResult {
        method: Method::Centroid,
        relay,
        allocation,
        multicast_rate: rates.multicast_rate,
        destination_rates: rates.destination_rates,
        diagnostics: Diagnostics {
            repair_applied: true,
            converged: true,
            clamped: rates.clamped,
            evaluated_points: 1,
            ..Diagnostics::default()
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidComparison {
    pub r_opt: f64,
    pub r_centroid: f64,
    /// `(R_opt − R_centroid) / R_centroid`; infinite when the centroid rate is zero.
    pub relative_gain: f64,
    pub r_oracle: f64,
    pub optimal: PlanResult,
    pub centroid: PlanResult,
}

/// Optimized plan against the centroid baseline, with an oracle cross-check.
pub fn compare_centroid(
    topology: &Topology,
    config: &SolverConfig,
    resolution: usize,
) -> Result<CentroidComparison, PlanError> {
    let optimal = solve_program_c(topology, config)?;
    let centroid = centroid_plan(topology, config.hull_margin)?;
    let oracle = grid_oracle(topology, resolution, config.hull_margin)?;
    let r_opt = optimal.multicast_rate;
    let r_centroid = centroid.multicast_rate;
    let relative_gain = if r_centroid > 0.0 {
        (r_opt - r_centroid) / r_centroid
    } else {
        f64::INFINITY
    };
    Ok(CentroidComparison {
        r_opt,
        r_centroid,
        relative_gain,
        r_oracle: oracle.multicast_rate,
        optimal,
        centroid,
    })
}
