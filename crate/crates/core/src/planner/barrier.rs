//! Log-barrier Newton method for smooth inequality-constrained programs.
//!
//! Minimizes `τ (c·x + ρ/2 Σ max(h_j, 0)²) − Σ ln(−g_i(x))` for an
//! increasing sequence of `τ`. Hard constraints `g_i < 0` are kept strictly
//! feasible by the line search; soft constraints `h_j` enter as a quadratic
//! penalty. Hessians of non-convex pieces are handled by adding a multiple of
//! the identity until the Cholesky factorization succeeds.

use nalgebra::{DMatrix, DVector};

use crate::hypergraph::{logistic, softplus};

/// Smooth scalar constraint function of the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Func {
    /// `Σ a_j x_j + c`
    Linear { terms: Vec<(usize, f64)>, c: f64 },
    /// `ln Σ_j exp(x_{e_j} + b_j) + Σ a_j x_j + c` (convex)
    LogSumExp {
        exps: Vec<(usize, f64)>,
        lin: Vec<(usize, f64)>,
        c: f64,
    },
    /// `Σ a_j x_j + c − ln Σ_j exp(x_{e_j})` (concave)
    NegLogSumExp {
        exps: Vec<usize>,
        lin: Vec<(usize, f64)>,
        c: f64,
    },
    /// `x_f + softplus(ln γ − γ x_z)`
    Sigmoid { f: usize, z: usize, gamma: f64 },
    /// `x_z + Σ exp(x_d) − Σ N(x_0 − q_x, x_1 − q_y) + c`, with the smoothed
    /// norm `N(a, b) = sqrt(a² + b² + ε²) − ε`
    Link {
        z: usize,
        exps: Vec<usize>,
        norms: Vec<[f64; 2]>,
        eps: f64,
        c: f64,
    },
    /// `p (ln(x_u² + x_v² + eps²) − 2 x_d)`, the log of the distance
    /// surrogate `((u² + v²) / e^{2D})^p`
    Surrogate { u: usize, v: usize, d: usize, p: f64, eps: f64 },
}

/// Sparse gradient and Hessian of one function.
#[derive(Debug, Default)]
pub struct Deriv {
    pub grad: Vec<(usize, f64)>,
    pub hess: Vec<(usize, usize, f64)>,
}

impl Deriv {
    fn clear(&mut self) {
        self.grad.clear();
        self.hess.clear();
    }
}

fn lse(vals: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = vals.map(|v| (v - m).exp()).sum();
    (m, s)
}

impl Func {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Func::Linear { terms, c } => terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>() + c,
            Func::LogSumExp { exps, lin, c } => {
                let (m, s) = lse(exps.iter().map(|&(j, b)| x[j] + b));
                m + s.ln() + lin.iter().map(|&(j, a)| a * x[j]).sum::<f64>() + c
            }
            Func::NegLogSumExp { exps, lin, c } => {
                let (m, s) = lse(exps.iter().map(|&j| x[j]));
                lin.iter().map(|&(j, a)| a * x[j]).sum::<f64>() + c - m - s.ln()
            }
            Func::Sigmoid { f, z, gamma } => x[*f] + softplus(gamma.ln() - gamma * x[*z]),
            Func::Link {
                z,
                exps,
                norms,
                eps,
                c,
            } => {
                let e: f64 = exps.iter().map(|&d| x[d].exp()).sum();
                let nrm: f64 = norms
                    .iter()
                    .map(|q| {
                        let (a, b) = (x[0] - q[0], x[1] - q[1]);
                        (a * a + b * b + eps * eps).sqrt() - eps
                    })
                    .sum();
                x[*z] + e - nrm + c
            }
            Func::Surrogate { u, v, d, p, eps } => {
                let w = x[*u] * x[*u] + x[*v] * x[*v] + eps * eps;
                p * (w.ln() - 2.0 * x[*d])
            }
        }
    }

    /// Value, gradient and Hessian (full, both triangles).
    pub fn derivs(&self, x: &[f64], out: &mut Deriv) -> f64 {
        out.clear();
        match self {
            Func::Linear { terms, c } => {
                out.grad.extend_from_slice(terms);
                terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>() + c
            }
            Func::LogSumExp { exps, lin, c } => {
                let (m, s) = lse(exps.iter().map(|&(j, b)| x[j] + b));
                let w: Vec<f64> = exps.iter().map(|&(j, b)| (x[j] + b - m).exp() / s).collect();
                for (k, &(j, _)) in exps.iter().enumerate() {
                    out.grad.push((j, w[k]));
                    for (l, &(i, _)) in exps.iter().enumerate() {
                        let h = if k == l { w[k] - w[k] * w[l] } else { -w[k] * w[l] };
                        out.hess.push((j, i, h));
                    }
                }
                out.grad.extend_from_slice(lin);
                m + s.ln() + lin.iter().map(|&(j, a)| a * x[j]).sum::<f64>() + c
            }
            Func::NegLogSumExp { exps, lin, c } => {
                let (m, s) = lse(exps.iter().map(|&j| x[j]));
                let w: Vec<f64> = exps.iter().map(|&j| (x[j] - m).exp() / s).collect();
                for (k, &j) in exps.iter().enumerate() {
                    out.grad.push((j, -w[k]));
                    for (l, &i) in exps.iter().enumerate() {
                        let h = if k == l { w[k] - w[k] * w[l] } else { -w[k] * w[l] };
                        out.hess.push((j, i, -h));
                    }
                }
                out.grad.extend_from_slice(lin);
                lin.iter().map(|&(j, a)| a * x[j]).sum::<f64>() + c - m - s.ln()
            }
            Func::Sigmoid { f, z, gamma } => {
                let arg = gamma.ln() - gamma * x[*z];
                let sg = logistic(arg);
                out.grad.push((*f, 1.0));
                out.grad.push((*z, -gamma * sg));
                out.hess.push((*z, *z, gamma * gamma * sg * (1.0 - sg)));
                x[*f] + softplus(arg)
            }
            Func::Link {
                z,
                exps,
                norms,
                eps,
                c,
            } => {
                out.grad.push((*z, 1.0));
                let mut val = x[*z] + c;
                for &d in exps {
                    let e = x[d].exp();
                    val += e;
                    out.grad.push((d, e));
                    out.hess.push((d, d, e));
                }
                for q in norms {
                    let (a, b) = (x[0] - q[0], x[1] - q[1]);
                    let s = (a * a + b * b + eps * eps).sqrt();
                    val -= s - eps;
                    out.grad.push((0, -a / s));
                    out.grad.push((1, -b / s));
                    let s3 = s * s * s;
                    out.hess.push((0, 0, -(s * s - a * a) / s3));
                    out.hess.push((1, 1, -(s * s - b * b) / s3));
                    out.hess.push((0, 1, a * b / s3));
                    out.hess.push((1, 0, a * b / s3));
                }
                val
            }
            Func::Surrogate { u, v, d, p, eps } => {
                let (xu, xv) = (x[*u], x[*v]);
                let w = xu * xu + xv * xv + eps * eps;
                out.grad.push((*u, p * 2.0 * xu / w));
                out.grad.push((*v, p * 2.0 * xv / w));
                out.grad.push((*d, -2.0 * p));
                let w2 = w * w;
                out.hess.push((*u, *u, p * (2.0 / w - 4.0 * xu * xu / w2)));
                out.hess.push((*v, *v, p * (2.0 / w - 4.0 * xv * xv / w2)));
                out.hess.push((*u, *v, -p * 4.0 * xu * xv / w2));
                out.hess.push((*v, *u, -p * 4.0 * xu * xv / w2));
                p * (w.ln() - 2.0 * x[*d])
            }
        }
    }
}

/// Minimize `cost·x` subject to `hard(x) < 0`, with `soft` penalized.
#[derive(Debug, Clone)]
pub struct Problem {
    pub n: usize,
    pub cost: Vec<(usize, f64)>,
    pub hard: Vec<Func>,
    pub soft: Vec<Func>,
    pub rho: f64,
    /// `w x_j²` terms added to the merit without the `τ` weight, so their
    /// influence fades as `τ` grows.
    pub ridge: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub tau0: f64,
    pub tau_factor: f64,
    /// Stop once `m / τ` falls below this (relative to `max(1, |cost·x|)`).
    pub gap_tol: f64,
    /// Newton decrement threshold for centering.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Largest allowed step in any coordinate.
    pub max_step: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            tau_factor: 20.0,
            gap_tol: 1e-7,
            newton_tol: 1e-4,
            max_newton: 500,
            max_step: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub newton_steps: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BarrierError {
    /// The starting point violates a hard constraint.
    InfeasibleStart(usize),
}

impl Problem {
    fn cost_value(&self, x: &[f64]) -> f64 {
        self.cost.iter().map(|&(j, a)| a * x[j]).sum()
    }

    fn penalty(&self, x: &[f64]) -> f64 {
        self.soft
            .iter()
            .map(|h| {
                let v = h.value(x).max(0.0);
                v * v
            })
            .sum::<f64>()
            * 0.5
            * self.rho
    }

    /// Merit value, or `None` outside the strict interior.
    pub(crate) fn merit(&self, x: &[f64], tau: f64) -> Option<f64> {
        let mut b = 0.0;
        for g in &self.hard {
            let v = g.value(x);
            if !(v < 0.0) {
                return None;
            }
            b -= (-v).ln();
        }
        let r: f64 = self.ridge.iter().map(|&(j, w)| w * x[j] * x[j]).sum();
        let m = tau * (self.cost_value(x) + self.penalty(x)) + b + r;
        m.is_finite().then_some(m)
    }

    pub fn first_violation(&self, x: &[f64]) -> Option<usize> {
        self.hard.iter().position(|g| !(g.value(x) < 0.0))
    }

    /// Gradient and Hessian of the merit. Unless `exact`, the curvature of the
    /// concave pieces is dropped so the model Hessian stays positive
    /// semidefinite.
    pub(crate) fn assemble(
        &self,
        x: &[f64],
        tau: f64,
        exact: bool,
        grad: &mut DVector<f64>,
        hess: &mut DMatrix<f64>,
        d: &mut Deriv,
    ) {
        grad.fill(0.0);
        hess.fill(0.0);
        for &(j, a) in &self.cost {
            grad[j] += tau * a;
        }
        for &(j, w) in &self.ridge {
            grad[j] += 2.0 * w * x[j];
            hess[(j, j)] += 2.0 * w;
        }
        // keep: which second-derivative entries of a function enter the model
        let add = |d: &Deriv, w1: f64, w2: f64, keep: &dyn Fn(usize, usize) -> bool, grad: &mut DVector<f64>, hess: &mut DMatrix<f64>| {
            for &(j, g) in &d.grad {
                grad[j] += w1 * g;
            }
            for &(i, j, h) in &d.hess {
                if keep(i, j) {
                    hess[(i, j)] += w1 * h;
                }
            }
            if w2 != 0.0 {
                for &(i, gi) in &d.grad {
                    for &(j, gj) in &d.grad {
                        hess[(i, j)] += w2 * gi * gj;
                    }
                }
            }
        };
        let all = |_: usize, _: usize| true;
        let none = |_: usize, _: usize| false;
        // the relay coordinates only enter a link through its concave norm part
        let not_relay = |i: usize, j: usize| i > 1 && j > 1;
        for g in &self.hard {
            let v = g.derivs(x, d);
            // -ln(-v): first derivative 1/(-v), second 1/v²
            let keep: &dyn Fn(usize, usize) -> bool = match (exact, g) {
                (true, _) => &all,
                (false, Func::NegLogSumExp { .. }) => &none,
                (false, Func::Link { .. }) => &not_relay,
                _ => &all,
            };
            add(d, 1.0 / (-v), 1.0 / (v * v), keep, grad, hess);
        }
        for h in &self.soft {
            let v = h.derivs(x, d);
            if v > 0.0 {
                if !exact {
                    psd_part(d);
                }
                add(d, tau * self.rho * v, tau * self.rho, &all, grad, hess);
            } else if !exact && v > -PENALTY_BAND {
                // curvature of the active side, so a step cannot jump deep
                // into the penalty unannounced
                add(d, 0.0, tau * self.rho, &none, grad, hess);
            }
        }
    }
}

/// Newton decrement at which intermediate barrier levels stop centering.
const ROUGH_CENTERING: f64 = 0.25;

/// Inactive soft terms within this distance of zero still contribute
/// Gauss-Newton curvature to the model.
const PENALTY_BAND: f64 = 0.1;

/// Replaces a Hessian given as entries on at most two distinct variables by
/// its positive semidefinite part. Larger blocks are dropped entirely.
fn psd_part(d: &mut Deriv) {
    let mut vars: Vec<usize> = d.hess.iter().map(|e| e.0).collect();
    vars.sort_unstable();
    vars.dedup();
    if vars.is_empty() {
        return;
    }
    if vars.len() > 2 {
        d.hess.clear();
        return;
    }
    let at = |i: usize, j: usize| -> f64 {
        d.hess
            .iter()
            .filter(|e| e.0 == vars[i] && e.1 == vars[j])
            .map(|e| e.2)
            .sum()
    };
    if vars.len() == 1 {
        let a = at(0, 0).max(0.0);
        d.hess = vec![(vars[0], vars[0], a)];
        return;
    }
    let (a, b, c) = (at(0, 0), at(0, 1), at(1, 1));
    let mean = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (mean + r, mean - r);
    let mut out = [[0.0; 2]; 2];
    // eigenvector of l1
    let (ex, ey) = if b.abs() > 1e-300 {
        let (x, y) = (l1 - c, b);
        let n = x.hypot(y);
        (x / n, y / n)
    } else if a >= c {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    for (l, (px, py)) in [(l1, (ex, ey)), (l2, (-ey, ex))] {
        if l > 0.0 {
            out[0][0] += l * px * px;
            out[0][1] += l * px * py;
            out[1][1] += l * py * py;
        }
    }
    d.hess = vec![
        (vars[0], vars[0], out[0][0]),
        (vars[0], vars[1], out[0][1]),
        (vars[1], vars[0], out[0][1]),
        (vars[1], vars[1], out[1][1]),
    ];
}

/// Solves `(H + δI) Δ = −g` for the smallest `δ` in a geometric ladder that
/// lets `H + δI` factor. `H` is positive semidefinite up to rounding, so the
/// ridge is normally zero or tiny.
fn regularized_newton(hess: &DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let n = grad.len();
    if !hess.iter().all(|v| v.is_finite()) {
        return DVector::from_element(n, f64::NAN);
    }
    let max_diag = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut delta = 0.0;
    loop {
        let mut h = hess.clone();
        for i in 0..n {
            h[(i, i)] += delta;
        }
        if let Some(ch) = h.cholesky() {
            return -ch.solve(grad);
        }
        delta = if delta == 0.0 { max_diag * 1e-12 } else { delta * 100.0 };
    }
}

pub fn solve(problem: &Problem, x0: Vec<f64>, settings: &Settings) -> Result<Outcome, BarrierError> {
    if let Some(i) = problem.first_violation(&x0) {
        return Err(BarrierError::InfeasibleStart(i));
    }
    let n = problem.n;
    let m = problem.hard.len() as f64;
    let mut x = x0;
    let mut tau = settings.tau0;
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    let mut d = Deriv::default();
    let mut steps = 0;
    let mut converged = false;
    let mut stationarity = f64::INFINITY;

    'outer: loop {
        // centering at the current tau; only the last level is centered tightly
        let scale = problem.cost_value(&x).abs().max(1.0);
        let last = m / tau <= settings.gap_tol * scale;
        let tol = if last { settings.newton_tol } else { ROUGH_CENTERING };
        loop {
            if steps >= settings.max_newton {
                break 'outer;
            }
            problem.assemble(&x, tau, false, &mut grad, &mut hess, &mut d);
            stationarity = grad.amax() / tau;
            let mut dx = regularized_newton(&hess, &grad);
            let big = dx.amax();
            if big > settings.max_step {
                dx *= settings.max_step / big;
            }
            let slope = grad.dot(&dx);
            steps += 1;
            if -slope / 2.0 <= tol || !slope.is_finite() {
                break;
            }
            let f0 = problem.merit(&x, tau).expect("iterate stays interior");
            let mut t = 1.0;
            let mut trial = x.clone();
            let mut accepted = false;
            while t > 1e-14 {
                for i in 0..n {
                    trial[i] = x[i] + t * dx[i];
                }
                if let Some(f1) = problem.merit(&trial, tau) {
                    if f1 <= f0 + 1e-4 * t * slope {
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            std::mem::swap(&mut x, &mut trial);
        }
        if last {
            converged = true;
            break;
        }
        tau *= settings.tau_factor;
    }
    let scale = problem.cost_value(&x).abs().max(1.0);
    Ok(Outcome {
        kkt_residual: (m / tau / scale).max(stationarity / scale),
        x,
        newton_steps: steps,
        converged,
        tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff_check(f: &Func, x: &[f64]) {
        let mut d = Deriv::default();
        let v = f.derivs(x, &mut d);
        assert!((v - f.value(x)).abs() < 1e-12 * v.abs().max(1.0));
        let n = x.len();
        let mut g = vec![0.0; n];
        for &(j, a) in &d.grad {
            g[j] += a;
        }
        let mut h = vec![vec![0.0; n]; n];
        for &(i, j, a) in &d.hess {
            h[i][j] += a;
        }
        let e = 1e-6;
        for j in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += e;
            xm[j] -= e;
            let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * e);
            assert!((fd - g[j]).abs() < 1e-6 * fd.abs().max(1.0), "grad {j}: {fd} vs {}", g[j]);
            let mut dp = Deriv::default();
            let mut dm = Deriv::default();
            f.derivs(&xp, &mut dp);
            f.derivs(&xm, &mut dm);
            let mut gp = vec![0.0; n];
            let mut gm = vec![0.0; n];
            for &(k, a) in &dp.grad {
                gp[k] += a;
            }
            for &(k, a) in &dm.grad {
                gm[k] += a;
            }
            for i in 0..n {
                let fd = (gp[i] - gm[i]) / (2.0 * e);
                assert!(
                    (fd - h[i][j]).abs() < 1e-5 * fd.abs().max(1.0),
                    "hess {i},{j}: {fd} vs {}",
                    h[i][j]
                );
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let x = [0.3, -0.2, 0.7, -0.4, 1.1, 0.25];
        let funcs = [
            Func::Linear {
                terms: vec![(0, 2.0), (3, -1.0)],
                c: 0.5,
            },
            Func::LogSumExp {
                exps: vec![(2, 0.1), (3, -0.3), (4, 0.0)],
                lin: vec![(5, -1.0)],
                c: 0.2,
            },
            Func::NegLogSumExp {
                exps: vec![2, 4],
                lin: vec![(1, 1.0)],
                c: 0.0,
            },
            Func::Sigmoid {
                f: 3,
                z: 2,
                gamma: 30.0,
            },
            Func::Link {
                z: 5,
                exps: vec![3],
                norms: vec![[1.0, 0.5]],
                eps: 1e-3,
                c: -0.4,
            },
            Func::Surrogate {
                u: 2,
                v: 4,
                d: 3,
                p: 5.0,
                eps: 1e-3,
            },
        ];
        for f in &funcs {
            finite_diff_check(f, &x);
        }
    }

    #[test]
    fn solves_small_convex_program() {
        // minimize -x0 - x1 subject to ln(e^x0 + e^x1) <= 0
        // optimum x0 = x1 = -ln 2
        let p = Problem {
            n: 2,
            cost: vec![(0, -1.0), (1, -1.0)],
            hard: vec![Func::LogSumExp {
                exps: vec![(0, 0.0), (1, 0.0)],
                lin: vec![],
                c: 0.0,
            }],
            soft: vec![],
            rho: 0.0,
            ridge: vec![],
        };
        let out = solve(&p, vec![-2.0, -3.0], &Settings::default()).unwrap();
        assert!(out.converged);
        let target = -(2f64.ln());
        assert!((out.x[0] - target).abs() < 1e-6, "{:?}", out.x);
        assert!((out.x[1] - target).abs() < 1e-6);
    }

    #[test]
    fn penalty_leaves_small_violation() {
        // minimize x subject to softly x >= 1, i.e. h = 1 - x <= 0, and x > -5
        let p = Problem {
            n: 1,
            cost: vec![(0, 1.0)],
            hard: vec![Func::Linear {
                terms: vec![(0, -1.0)],
                c: -5.0,
            }],
            soft: vec![Func::Linear {
                terms: vec![(0, -1.0)],
                c: 1.0,
            }],
            rho: 1e3,
            ridge: vec![],
        };
        let out = solve(&p, vec![2.0], &Settings::default()).unwrap();
        // stationary point of x + 500 (1 - x)^2: x = 1 - 1e-3
        assert!((out.x[0] - (1.0 - 1e-3)).abs() < 1e-6, "{:?}", out.x);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let p = Problem {
            n: 1,
            cost: vec![(0, 1.0)],
            hard: vec![Func::Linear {
                terms: vec![(0, 1.0)],
                c: 0.0,
            }],
            soft: vec![],
            rho: 0.0,
            ridge: vec![],
        };
        assert_eq!(solve(&p, vec![1.0], &Settings::default()).err(), Some(BarrierError::InfeasibleStart(0)));
    }
}
