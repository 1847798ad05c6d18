//! Centroid-versus-optimum study on random source/destination triangles.
//!
//! Triangles are drawn by uniform vertex sampling in a fixed square and kept
//! when their area is within `AREA_TOL` of the target. The square is sized
//! once from the largest requested area, so small targets yield thin
//! triangles and large targets yield fat ones; a pure rescaling of one shape
//! would leave every relative gain unchanged because all wideband capacities
//! scale by the same power of the length.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::planner::{centroid_plan, grid_oracle, solve_program_c, PlanError, SolverConfig};
use crate::rate_model::Topology;

/// Accepted relative deviation of a sampled area from its target.
pub const AREA_TOL: f64 = 0.05;
/// Side of the sampling square relative to the side of a square whose
/// half-area equals the largest target.
const BOX_FACTOR: f64 = 1.25;
/// Grid resolution of the oracle cross-check on every row.
pub const CHECK_RESOLUTION: usize = 100;
const MAX_DRAWS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("areas must be positive, finite and strictly ascending")]
    BadAreas,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("no triangle of area {0} found after {MAX_DRAWS} draws")]
    Sampling(f64),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub area: f64,
    pub trial: usize,
    pub r_opt: f64,
    pub r_centroid: f64,
    /// `(R_opt − R_centroid) / R_centroid`.
    pub gain: f64,
    pub r_oracle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSummary {
    pub area: f64,
    pub median_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summary: Vec<AreaSummary>,
}

impl BenchReport {
    /// Rows as CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("area,trial,r_opt,r_centroid,gain,r_oracle\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e}\n",
                r.area, r.trial, r.r_opt, r.r_centroid, r.gain, r.r_oracle
            ));
        }
        out
    }
}

/// Unsigned area of the triangle `abc`.
pub fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * b.sub(a).cross(c.sub(a)).abs()
}

/// Side of the sampling square for a study whose largest area is `max_area`.
pub fn box_side(max_area: f64) -> f64 {
    BOX_FACTOR * (2.0 * max_area).sqrt()
}

/// Source and two destinations drawn uniformly in `[0, side]²` until the
/// triangle area is within `AREA_TOL` of `area`. Unit powers and noise.
pub fn sample_triangle(area: f64, side: f64, rng: &mut ChaCha8Rng) -> Result<Topology, BenchError> {
    for _ in 0..MAX_DRAWS {
        let mut pt = || Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
        let (s, d1, d2) = (pt(), pt(), pt());
        if (triangle_area(s, d1, d2) - area).abs() <= AREA_TOL * area {
            return Ok(Topology {
                source: s,
                destinations: vec![d1, d2],
                p_source: 1.0,
                p_relay: 1.0,
                n0: 1.0,
                alpha: 2.0,
            });
        }
    }
    Err(BenchError::Sampling(area))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Runs `trials` random triangles per area. Area `k` draws from stream `k`
/// of the seeded generator, so its rows depend only on its position, the
/// seed and the largest area.
pub fn bench_random_triangles(
    areas: &[f64],
    trials: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<BenchReport, BenchError> {
    if areas.is_empty()
        || areas.iter().any(|a| !(a.is_finite() && *a > 0.0))
        || areas.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(BenchError::BadAreas);
    }
    if trials == 0 {
        return Err(BenchError::NoTrials);
    }
    let side = box_side(areas[areas.len() - 1]);
    let mut rows = Vec::with_capacity(areas.len() * trials);
    let mut summary = Vec::with_capacity(areas.len());
    for (k, &area) in areas.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut gains = Vec::with_capacity(trials);
        for trial in 0..trials {
            let t = sample_triangle(area, side, &mut rng)?;
            let opt = solve_program_c(&t, config)?;
            let cen = centroid_plan(&t, config.hull_margin)?;
            let oracle = grid_oracle(&t, CHECK_RESOLUTION, config.hull_margin)?;
            let gain = (opt.multicast_rate - cen.multicast_rate) / cen.multicast_rate;
            gains.push(gain);
            rows.push(BenchRow {
                area,
                trial,
                r_opt: opt.multicast_rate,
                r_centroid: cen.multicast_rate,
                gain,
                r_oracle: oracle.multicast_rate,
            });
        }
        summary.push(AreaSummary {
            area,
            median_gain: median(&gains),
        });
    }
    Ok(BenchReport { rows, summary })
}
