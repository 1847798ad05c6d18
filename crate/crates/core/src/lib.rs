//! Relay placement and power allocation for the wideband broadcast relay
//! channel: one source, one relay, `n` destinations.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: hulls, bisectors and the two region decompositions.
//! - [`hypergraph`]: hyperarcs active somewhere in the hull, switch
//!   functions, and source-to-destination paths.
//! - [`rate_model`]: capacities and exact fixed-relay linear programs.
//! - [`planner`]: the smooth log-domain solver, the grid oracle and the
//!   centroid baseline.
//! - [`io`]: topology files, JSON/CSV/SVG output.
//! - [`experiments`]: the random-triangle centroid-gain benchmark.
//! - [`cli`]: the `relayplan` command line.

pub mod cli;
pub mod experiments;
pub mod geometry;
pub mod hypergraph;
pub mod io;
pub mod lp;
pub mod planner;
pub mod rate_model;

pub use geometry::Point;
pub use planner::{PlanResult, SolverConfig};
pub use rate_model::Topology;
