//! Command-line dispatch. Results go to stdout as JSON (CSV for `bench`),
//! human-readable summaries to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::experiments::bench_random_triangles;
use crate::geometry::{
    distinct_radii, relay_order_regions, source_order_regions, superimposed_witnesses, Point,
    RegionDecomposition,
};
use crate::io::{parse_topology, regions_svg, to_json, ParsedTopology};
use crate::planner::{compare_centroid, grid_oracle, solve_program_c, PlanResult, Prepared};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "relayplan", version, about = "Relay placement for wideband broadcast relay channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize the relay position and powers.
    Plan { file: PathBuf },
    /// Exhaustive grid search over the hull.
    Oracle {
        file: PathBuf,
        /// Grid intervals per axis.
        #[arg(long, default_value_t = 200)]
        resolution: usize,
    },
    /// Relay cells and source rings.
    Regions {
        file: PathBuf,
        /// Also write an SVG figure to this path.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Optimized relay against the hull centroid.
    CompareCentroid {
        file: PathBuf,
        /// Grid intervals per axis of the oracle cross-check.
        #[arg(long, default_value_t = 100)]
        resolution: usize,
    },
    /// Random triangle study; CSV on stdout.
    Bench {
        /// Comma-separated ascending areas.
        #[arg(long, value_delimiter = ',', required = true)]
        areas: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Serialize)]
struct RegionsOutput<'a> {
    relay: &'a RegionDecomposition,
    source: &'a RegionDecomposition,
    source_radii: Vec<f64>,
    witnesses: Vec<Point>,
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err((code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

type Failure = (i32, String);

fn load(path: &PathBuf, err: &mut dyn Write) -> Result<ParsedTopology, Failure> {
    let bytes = std::fs::read(path).map_err(|e| (EXIT_INVALID, format!("{}: {e}", path.display())))?;
    let parsed = parse_topology(&bytes).map_err(|e| (EXIT_INVALID, format!("{}: {e}", path.display())))?;
    for w in &parsed.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    Ok(parsed)
}

fn failed(e: impl std::fmt::Display) -> Failure {
    (EXIT_INVALID, e.to_string())
}

fn summarize(err: &mut dyn Write, plan: &PlanResult) {
    let _ = writeln!(
        err,
        "{:?}: relay ({:.6}, {:.6}), multicast rate {:.6e}",
        plan.method, plan.relay.x, plan.relay.y, plan.multicast_rate
    );
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match cmd {
        Command::Plan { file } => {
            let p = load(&file, err)?;
            let plan = solve_program_c(&p.topology, &p.config).map_err(failed)?;
            let _ = out.write_all(to_json(&plan).as_bytes());
            summarize(err, &plan);
            if plan.diagnostics.converged {
                Ok(EXIT_OK)
            } else {
                let _ = writeln!(err, "warning: the smooth solver did not converge");
                Ok(EXIT_NOT_CONVERGED)
            }
        }
        Command::Oracle { file, resolution } => {
            let p = load(&file, err)?;
            let plan = grid_oracle(&p.topology, resolution, p.config.hull_margin).map_err(failed)?;
            let _ = out.write_all(to_json(&plan).as_bytes());
            summarize(err, &plan);
            Ok(EXIT_OK)
        }
        Command::Regions { file, svg } => {
            let p = load(&file, err)?;
            let prep = Prepared::new(&p.topology, p.config.hull_margin).map_err(failed)?;
            let t = &prep.merged;
            let relay = relay_order_regions(&t.destinations, &prep.hull);
            let source = source_order_regions(t.source, &t.destinations, &prep.hull);
            let radii = distinct_radii(t.source, &t.destinations);
            let witnesses = superimposed_witnesses(&relay, &source);
            if let Some(path) = svg {
                let pic = regions_svg(t, &prep.hull, &relay, &radii);
                std::fs::write(&path, pic).map_err(|e| (EXIT_INVALID, format!("{}: {e}", path.display())))?;
            }
            let _ = writeln!(
                err,
                "{} relay cells, {} source bands, {} superimposed regions",
                relay.len(),
                source.len(),
                witnesses.len()
            );
            let doc = RegionsOutput {
                relay: &relay,
                source: &source,
                source_radii: radii,
                witnesses,
            };
            let _ = out.write_all(to_json(&doc).as_bytes());
            Ok(EXIT_OK)
        }
        Command::CompareCentroid { file, resolution } => {
            let p = load(&file, err)?;
            let cmp = compare_centroid(&p.topology, &p.config, resolution).map_err(failed)?;
            let _ = out.write_all(to_json(&cmp).as_bytes());
            let _ = writeln!(
                err,
                "optimized {:.6e}, centroid {:.6e}, relative gain {:.4}, oracle {:.6e}",
                cmp.r_opt, cmp.r_centroid, cmp.relative_gain, cmp.r_oracle
            );
            Ok(EXIT_OK)
        }
        Command::Bench { areas, trials, seed } => {
            let config = crate::planner::SolverConfig::default();
            let report = bench_random_triangles(&areas, trials, seed, &config).map_err(failed)?;
            let _ = out.write_all(report.to_csv().as_bytes());
            for s in &report.summary {
                let _ = writeln!(err, "area {}: median gain {:.4}", s.area, s.median_gain);
            }
            Ok(EXIT_OK)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(args.iter().copied(), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_args(&["relayplan"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["relayplan", "frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["relayplan", "bench", "--areas", "x"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let (code, _, err) = run_args(&["relayplan", "--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(err.contains("compare-centroid"));
    }

    #[test]
    fn missing_file_is_a_validation_failure() {
        let (code, out, err) = run_args(&["relayplan", "plan", "/nonexistent/topology.json"]);
        assert_eq!(code, EXIT_INVALID);
        assert!(out.is_empty());
        assert!(err.starts_with("error:"));
    }

    #[test]
    fn descending_areas_are_rejected() {
        let (code, _, _) = run_args(&["relayplan", "bench", "--areas", "4,1", "--trials", "1"]);
        assert_eq!(code, EXIT_INVALID);
    }
}
