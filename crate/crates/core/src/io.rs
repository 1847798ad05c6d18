//! Topology files, result serialization and region figures.
//!
//! A topology file is a JSON object:
//!
//! ```json
//! {
//!   "source": {"x": 0.0, "y": 0.0},
//!   "destinations": [{"x": 3.0, "y": 0.0}, {"x": 0.0, "y": 4.0}],
//!   "P_s": 1.0, "P_r": 1.0, "N0": 1.0, "alpha": 2.0,
//!   "solver": {"gamma": 100.0, "p": 5.0, "kkt_tol": 1e-7, "seed": 0}
//! }
//! ```
//!
//! Only `source` and `destinations` are required. Unknown keys are rejected.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance, ConvexPolygon, Hull, Point, RegionDecomposition, GEOM_TOL};
use crate::planner::SolverConfig;
use crate::rate_model::Topology;

pub const DEFAULT_POWER: f64 = 1.0;
pub const DEFAULT_N0: f64 = 1.0;
pub const DEFAULT_ALPHA: f64 = 2.0;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("input is not UTF-8: {0}")]
    Utf8(#[from] std::str::Utf8Error),
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
}

impl IoError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        IoError::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointFile {
    pub x: f64,
    pub y: f64,
}

impl From<PointFile> for Point {
    fn from(p: PointFile) -> Self {
        Point::new(p.x, p.y)
    }
}

impl From<Point> for PointFile {
    fn from(p: Point) -> Self {
        PointFile { x: p.x, y: p.y }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub source: PointFile,
    pub destinations: Vec<PointFile>,
    #[serde(rename = "P_s", default = "default_power")]
    pub p_source: f64,
    #[serde(rename = "P_r", default = "default_power")]
    pub p_relay: f64,
    #[serde(rename = "N0", default = "default_n0")]
    pub n0: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverBlock>,
}

fn default_power() -> f64 {
    DEFAULT_POWER
}

fn default_n0() -> f64 {
    DEFAULT_N0
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

impl TopologyFile {
    pub fn from_parts(topology: &Topology, solver: Option<SolverBlock>) -> Self {
        Self {
            source: topology.source.into(),
            destinations: topology.destinations.iter().map(|&d| d.into()).collect(),
            p_source: topology.p_source,
            p_relay: topology.p_relay,
            n0: topology.n0,
            alpha: topology.alpha,
            solver,
        }
    }

    pub fn topology(&self) -> Topology {
        Topology {
            source: self.source.into(),
            destinations: self.destinations.iter().map(|&d| d.into()).collect(),
            p_source: self.p_source,
            p_relay: self.p_relay,
            n0: self.n0,
            alpha: self.alpha,
        }
    }

    /// Solver defaults with the file's overrides applied.
    pub fn solver_config(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(b) = &self.solver {
            if let Some(g) = b.gamma {
                c.gamma = g;
            }
            if let Some(p) = b.p {
                c.p = p;
            }
            if let Some(t) = b.kkt_tol {
                c.kkt_tol = t;
            }
            if let Some(s) = b.seed {
                c.seed = s;
            }
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct ParsedTopology {
    pub file: TopologyFile,
    pub topology: Topology,
    pub config: SolverConfig,
    /// Non-fatal findings, such as destinations listed twice.
    pub warnings: Vec<String>,
}

/// Parses and validates a topology file.
pub fn parse_topology(bytes: &[u8]) -> Result<ParsedTopology, IoError> {
    let text = std::str::from_utf8(bytes)?;
    let file: TopologyFile = serde_json::from_str(text).map_err(|e| IoError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e.to_string()),
    })?;
    validate_file(&file)?;
    let topology = file.topology();
    let config = file.solver_config();
    let mut warnings = Vec::new();
    for (i, d) in topology.destinations.iter().enumerate() {
        if let Some(j) = topology.destinations[..i]
            .iter()
            .position(|e| distance(*d, *e) <= GEOM_TOL)
        {
            warnings.push(format!("destination {i} coincides with destination {j}; they are merged"));
        }
    }
    Ok(ParsedTopology {
        file,
        topology,
        config,
        warnings,
    })
}

/// serde_json appends " at line L column C"; the position is reported
/// separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

fn validate_file(f: &TopologyFile) -> Result<(), IoError> {
    let finite = |p: &PointFile| p.x.is_finite() && p.y.is_finite();
    if !finite(&f.source) {
        return Err(IoError::invalid("source", "coordinates must be finite"));
    }
    if f.destinations.is_empty() {
        return Err(IoError::invalid("destinations", "at least one destination is required"));
    }
    if let Some(i) = f.destinations.iter().position(|d| !finite(d)) {
        return Err(IoError::invalid(&format!("destinations[{i}]"), "coordinates must be finite"));
    }
    for (name, v) in [("P_s", f.p_source), ("P_r", f.p_relay), ("N0", f.n0)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(IoError::invalid(name, format!("must be positive and finite, got {v}")));
        }
    }
    if !(f.alpha.is_finite() && f.alpha >= 2.0) {
        return Err(IoError::invalid("alpha", format!("must be at least 2, got {}", f.alpha)));
    }
    if let Some(b) = &f.solver {
        if let Some(g) = b.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(IoError::invalid("solver.gamma", "must be positive"));
            }
        }
        if let Some(p) = b.p {
            if !(p.is_finite() && p >= 1.0) {
                return Err(IoError::invalid("solver.p", "must be at least 1"));
            }
        }
        if let Some(t) = b.kkt_tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(IoError::invalid("solver.kkt_tol", "must be positive"));
            }
        }
    }
    f.topology()
        .validate()
        .map_err(|e| IoError::invalid("topology", e.to_string()))
}

pub fn write_topology(file: &TopologyFile) -> String {
    serde_json::to_string_pretty(file).expect("topology files always serialize")
}

/// Pretty JSON for any result type, with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("results always serialize");
    s.push('\n');
    s
}

const CELL_COLORS: [&str; 8] = [
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5",
];

/// SVG picture of the relay cells, the source rings clipped to the hull and
/// the nodes.
pub fn regions_svg(topology: &Topology, hull: &Hull, relay: &RegionDecomposition, radii: &[f64]) -> String {
    const SIZE: f64 = 600.0;
    const PAD: f64 = 30.0;
    let (lo, hi) = hull.polygon.bounding_box();
    let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
    let k = (SIZE - 2.0 * PAD) / span;
    // y grows downwards in SVG
    let map = |p: Point| (PAD + (p.x - lo.x) * k, SIZE - PAD - (p.y - lo.y) * k);
    let path = |poly: &ConvexPolygon| {
        let mut d = String::new();
        for (i, v) in poly.vertices.iter().enumerate() {
            let (x, y) = map(*v);
            let _ = write!(d, "{}{x:.3},{y:.3} ", if i == 0 { "M" } else { "L" });
        }
        d.push('Z');
        d
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(
        out,
        r#"<defs><clipPath id="hull"><path d="{}"/></clipPath></defs>"#,
        path(&hull.polygon)
    );
    for (i, region) in relay.cells.iter().enumerate() {
        if let Some(poly) = &region.cell.polygon {
            let label: Vec<String> = region.ordering.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(
                out,
                r##"<path d="{}" fill="{}" stroke="#555" stroke-width="0.5"><title>{}</title></path>"##,
                path(poly),
                CELL_COLORS[i % CELL_COLORS.len()],
                label.join(" ")
            );
        }
    }
    let (sx, sy) = map(topology.source);
    let _ = writeln!(out, r##"<g clip-path="url(#hull)" fill="none" stroke="#c00" stroke-dasharray="4 3">"##);
    for r in radii {
        let _ = writeln!(out, r#"<circle cx="{sx:.3}" cy="{sy:.3}" r="{:.3}"/>"#, r * k);
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        r##"<path d="{}" fill="none" stroke="#000" stroke-width="1"/>"##,
        path(&hull.polygon)
    );
    let _ = writeln!(out, r##"<circle cx="{sx:.3}" cy="{sy:.3}" r="5" fill="#c00"/>"##);
    let _ = writeln!(out, r#"<text x="{:.3}" y="{:.3}" font-size="12">s</text>"#, sx + 7.0, sy - 7.0);
    for (i, d) in topology.destinations.iter().enumerate() {
        let (x, y) = map(*d);
        let _ = writeln!(out, r##"<circle cx="{x:.3}" cy="{y:.3}" r="4" fill="#00c"/>"##);
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" font-size="12">d{}</text>"#,
            x + 6.0,
            y - 6.0,
            i + 1
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"{"source": {"x": 0, "y": 0}, "destinations": [{"x": 1, "y": 0}]}"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let p = parse_topology(MINIMAL.as_bytes()).unwrap();
        assert_eq!(p.topology.destinations, vec![Point::new(1.0, 0.0)]);
        assert_eq!(p.topology.p_source, DEFAULT_POWER);
        assert_eq!(p.topology.p_relay, DEFAULT_POWER);
        assert_eq!(p.topology.n0, DEFAULT_N0);
        assert_eq!(p.topology.alpha, DEFAULT_ALPHA);
        assert_eq!(p.config, SolverConfig::default());
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn negative_source_power_names_the_field() {
        let text = r#"{"source": {"x": 0, "y": 0}, "destinations": [{"x": 1, "y": 0}], "P_s": -1}"#;
        match parse_topology(text.as_bytes()) {
            Err(IoError::Validation { field, .. }) => assert_eq!(field, "P_s"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_destinations_warn() {
        let text = r#"{"source": {"x": 0, "y": 0},
            "destinations": [{"x": 1, "y": 0}, {"x": 2, "y": 2}, {"x": 1, "y": 0}]}"#;
        let p = parse_topology(text.as_bytes()).unwrap();
        assert_eq!(p.warnings.len(), 1);
        assert!(p.warnings[0].contains("destination 2"));
        assert_eq!(p.topology.destinations.len(), 3);
    }

    #[test]
    fn unknown_key_is_rejected_with_position() {
        let text = "{\n  \"source\": {\"x\": 0, \"y\": 0},\n  \"destinations\": [{\"x\": 1, \"y\": 0}],\n  \"power\": 3\n}";
        match parse_topology(text.as_bytes()) {
            Err(IoError::Syntax { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("power"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_point_key_is_rejected() {
        let text = r#"{"source": {"x": 0, "y": 0, "z": 1}, "destinations": [{"x": 1, "y": 0}]}"#;
        assert!(matches!(parse_topology(text.as_bytes()), Err(IoError::Syntax { .. })));
    }

    #[test]
    fn empty_destinations_and_bad_solver_block() {
        let text = r#"{"source": {"x": 0, "y": 0}, "destinations": []}"#;
        assert!(matches!(
            parse_topology(text.as_bytes()),
            Err(IoError::Validation { field, .. }) if field == "destinations"
        ));
        let text = r#"{"source": {"x": 0, "y": 0}, "destinations": [{"x": 1, "y": 0}], "solver": {"p": 0.5}}"#;
        assert!(matches!(
            parse_topology(text.as_bytes()),
            Err(IoError::Validation { field, .. }) if field == "solver.p"
        ));
    }

    #[test]
    fn out_of_range_number_is_a_syntax_error() {
        let text = r#"{"source": {"x": 1e999, "y": 0}, "destinations": [{"x": 1, "y": 0}]}"#;
        assert!(parse_topology(text.as_bytes()).is_err());
    }

    #[test]
    fn solver_block_overrides_defaults() {
        let text = r#"{"source": {"x": 0, "y": 0}, "destinations": [{"x": 1, "y": 0}],
            "solver": {"gamma": 50, "p": 4, "seed": 9}}"#;
        let c = parse_topology(text.as_bytes()).unwrap().config;
        assert_eq!((c.gamma, c.p, c.seed), (50.0, 4.0, 9));
        assert_eq!(c.kkt_tol, SolverConfig::default().kkt_tol);
    }

    #[test]
    fn svg_has_one_path_per_cell() {
        let t = Topology {
            source: Point::new(0.0, 0.0),
            destinations: vec![Point::new(4.0, 0.0), Point::new(0.0, 4.0)],
            p_source: 1.0,
            p_relay: 1.0,
            n0: 1.0,
            alpha: 2.0,
        };
        let hull = Hull::from_points(&t.all_points(), 1e-6).unwrap();
        let regions = crate::geometry::relay_order_regions(&t.destinations, &hull);
        let radii = crate::geometry::distinct_radii(t.source, &t.destinations);
        let svg = regions_svg(&t, &hull, &regions, &radii);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<title>").count(), regions.len());
        assert_eq!(svg.matches("<circle").count(), radii.len() + 3);
    }

    fn coord() -> impl Strategy<Value = f64> {
        -1e3f64..1e3
    }

    proptest! {
        #[test]
        fn write_then_parse_round_trips(
            src in (coord(), coord()),
            dests in proptest::collection::vec((coord(), coord()), 1..5),
            ps in 1e-3f64..1e3,
            n0 in 1e-6f64..1.0,
            alpha in 2.0f64..5.0,
            seed in proptest::option::of(0u64..1000),
        ) {
            let file = TopologyFile {
                source: PointFile { x: src.0, y: src.1 },
                destinations: dests.iter().map(|&(x, y)| PointFile { x, y }).collect(),
                p_source: ps,
                p_relay: ps * 0.5,
                n0,
                alpha,
                solver: seed.map(|s| SolverBlock { seed: Some(s), ..SolverBlock::default() }),
            };
            prop_assume!(file.topology().validate().is_ok());
            let back = parse_topology(write_topology(&file).as_bytes()).unwrap();
            prop_assert_eq!(back.file, file);
        }
    }
}
