//! Dense primal simplex for small linear programs in the form
//!
//! ```text
//! maximize c·x  subject to  A x <= b,  x >= 0,  b >= 0
//! ```
//!
//! The slack basis is feasible because `b >= 0`, so no phase one is needed.
//! Pricing is Dantzig's rule; after a run of degenerate pivots the solver
//! switches to Bland's rule, which cannot cycle. The pivot sequence depends
//! only on the input, so results are reproducible bit for bit.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("right-hand side {0} is negative or not finite")]
    BadRhs(usize),
    #[error("row {row} references variable {col} but the program has {n} variables")]
    BadIndex { row: usize, col: usize, n: usize },
    #[error("objective is unbounded")]
    Unbounded,
    #[error("iteration limit reached")]
    IterationLimit,
    #[error("final basis violates a constraint by {0:e}")]
    Numerical(f64),
}

/// `A x <= b` row stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        Self {
            objective: vec![0.0; n_vars],
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(Row { coeffs, rhs });
    }

    /// Largest constraint violation of `x` (negative entries count too).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let neg = x.iter().fold(0.0f64, |m, &v| m.max(-v));
        self.rows.iter().fold(neg, |m, r| {
            let lhs: f64 = r.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            m.max(lhs - r.rhs)
        })
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let sol = Tableau::new(self)?.run()?;
        let scale = self.rows.iter().fold(1.0f64, |m, r| m.max(r.rhs.abs()));
        let viol = self.max_violation(&sol.x);
        if viol > FEAS_TOL * scale {
            return Err(LpError::Numerical(viol));
        }
        Ok(sol)
    }
}

const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-7;
const COST_TOL: f64 = 1e-11;
const DEGENERATE_RUN: usize = 50;

struct Tableau {
    m: usize,
    n: usize,
    width: usize,
    /// `m` constraint rows followed by the reduced-cost row, each `width` wide;
    /// the last column is the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Result<Self, LpError> {
        let m = lp.rows.len();
        let n = lp.n_vars();
        let width = n + m + 1;
        let mut t = vec![0.0; (m + 1) * width];
        for (i, row) in lp.rows.iter().enumerate() {
            if !(row.rhs >= 0.0) || !row.rhs.is_finite() {
                return Err(LpError::BadRhs(i));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(LpError::BadIndex { row: i, col: j, n });
                }
                t[i * width + j] += a;
            }
            t[i * width + n + i] = 1.0;
            t[i * width + width - 1] = row.rhs;
        }
        // reduced costs of a maximization: store -c so entering columns are negative
        for (j, &c) in lp.objective.iter().enumerate() {
            t[m * width + j] = -c;
        }
        Ok(Self {
            m,
            n,
            width,
            t,
            basis: (n..n + m).collect(),
        })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let obj = self.m * self.width;
        let cols = self.width - 1;
        if bland {
            return (0..cols).find(|&j| self.t[obj + j] < -COST_TOL);
        }
        let mut best = None;
        let mut best_v = -COST_TOL;
        for j in 0..cols {
            let v = self.t[obj + j];
            if v < best_v {
                best_v = v;
                best = Some(j);
            }
        }
        best
    }

    /// Ratio test. Pivots below `PIVOT_TOL` are ignored. Among ratios tied
    /// within a relative tolerance the largest pivot element wins, except
    /// under Bland's rule where the lowest basic index must win.
    fn leaving(&self, col: usize, bland: bool) -> Option<usize> {
        let rhs = self.width - 1;
        let mut min_ratio = f64::INFINITY;
        for i in 0..self.m {
            let a = self.at(i, col);
            if a > PIVOT_TOL {
                min_ratio = min_ratio.min(self.at(i, rhs).max(0.0) / a);
            }
        }
        if !min_ratio.is_finite() {
            return None;
        }
        let slack = RATIO_TIE * min_ratio.max(1.0);
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.m {
            let a = self.at(i, col);
            if a > PIVOT_TOL && self.at(i, rhs).max(0.0) / a <= min_ratio + slack {
                let better = match best {
                    None => true,
                    Some((_, bi)) if bland => self.basis[i] < self.basis[bi],
                    Some((ba, bi)) => {
                        a > ba * (1.0 + 1e-9) || (a >= ba * (1.0 - 1e-9) && self.basis[i] < self.basis[bi])
                    }
                };
                if better {
                    best = Some((a, i));
                }
            }
        }
        best.map(|(_, i)| i)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        self.t[r * w + c] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (x, &pv) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    fn objective(&self) -> f64 {
        self.t[self.m * self.width + self.width - 1]
    }

    fn run(mut self) -> Result<LpSolution, LpError> {
        let limit = 50 * (self.m + self.n + 10);
        let mut pivots = 0;
        let mut degenerate = 0;
        let mut bland = false;
        loop {
            let Some(col) = self.entering(bland) else {
                break;
            };
            let Some(row) = self.leaving(col, bland) else {
                return Err(LpError::Unbounded);
            };
            let before = self.objective();
            self.pivot(row, col);
            pivots += 1;
            if self.objective() <= before + 1e-15 * before.abs().max(1.0) {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            if pivots > limit {
                return Err(LpError::IterationLimit);
            }
        }
        let rhs = self.width - 1;
        let mut x = vec![0.0; self.n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n {
                x[b] = self.at(i, rhs).max(0.0);
            }
        }
        Ok(LpSolution {
            objective: self.objective(),
            x,
            pivots,
        })
    }
}
