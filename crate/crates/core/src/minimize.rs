//! Minimization of `J` over the interior values of `(q, p)`.
//!
//! The default method is damped Gauss-Newton on the sum-of-squares form of
//! `J` with a banded Cholesky solve. The Carleman weight spans many orders
//! of magnitude across the square, which leaves first-order methods crawling;
//! L-BFGS is kept as an option.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::carleman::{linearize, CarlemanConfig, JParts, QPState};
use crate::data_transform::QPBoundary;
use crate::discrete_ops::ScalarField;
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::linalg::{dot, norm2, pcg, CsrMatrix};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    GaussNewton,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeOptions {
    pub method: Method,
    pub max_iter: usize,
    /// Stop when `|grad| <= grad_tol * max(1, |grad_0|)`.
    pub grad_tol: f64,
    /// L-BFGS history length.
    pub memory: usize,
    /// Stop when the predicted decrease `-g.d / 2` falls below `decrement_tol * J`.
    pub decrement_tol: f64,
    pub armijo: f64,
    pub min_step: f64,
    /// Stop after `stall_iters` consecutive steps whose actual relative
    /// decrease of `J` is below `stall_tol`.
    pub stall_tol: f64,
    pub stall_iters: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            method: Method::GaussNewton,
            max_iter: 500,
            grad_tol: 1e-12,
            memory: 10,
            decrement_tol: 1e-14,
            armijo: 1e-4,
            min_step: 1e-12,
            stall_tol: 1e-12,
            stall_iters: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Gradient,
    Decrement,
    Stall,
    IterationCap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizeReport<T> {
    pub state: QPState<T>,
    pub iterations: usize,
    pub j_history: Vec<T>,
    pub part_history: Vec<JParts<T>>,
    pub grad_history: Vec<T>,
    pub grad_norm_final: T,
    pub wall_time: f64,
    pub a_ball_violated: bool,
    pub stop: StopReason,
}

impl<T: Real> MinimizeReport<T> {
    pub fn converged(&self) -> bool {
        self.stop != StopReason::IterationCap
    }

    /// Iteration log: `iter,J_total,J_F,J_alpha,J_neumann,grad_norm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,J_total,J_F,J_alpha,J_neumann,grad_norm\n");
        for (k, (p, g)) in self.part_history.iter().zip(&self.grad_history).enumerate() {
            out.push_str(&format!("{k},{:e},{:e},{:e},{:e},{:e}\n", p.total, p.f, p.alpha, p.neumann, g));
        }
        out
    }
}

/// Discrete-harmonic extension of the Dirichlet data of `q` and `p`.
pub fn initial_guess<T: Real>(boundary: &QPBoundary<T>, grid: GridSpec<T>) -> Result<QPState<T>> {
    let zero = ScalarField::zeros(grid);
    let pinned = QPState::new(zero.clone(), zero, boundary.clone())?;
    let q = harmonic_extension(&pinned.q)?;
    let p = harmonic_extension(&pinned.p)?;
    QPState::new(q, p, boundary.clone())
}

/// Solves the five-point Laplace equation in the interior with the boundary of `f` fixed.
pub fn harmonic_extension<T: Real>(f: &ScalarField<T>) -> Result<ScalarField<T>> {
    let n = f.grid.n;
    let id = |i: usize, j: usize| (i - 1) + (j - 1) * n;
    let mut trip = Vec::with_capacity(5 * n * n);
    let mut rhs = vec![T::zero(); n * n];
    for j in 1..=n {
        for i in 1..=n {
            let r = id(i, j);
            trip.push((r, r, T::lit(4.0)));
            for (ii, jj) in [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)] {
                if f.grid.is_boundary(ii, jj) {
                    rhs[r] += f.at(ii, jj);
                } else {
                    trip.push((r, id(ii, jj), -T::one()));
                }
            }
        }
    }
    let a = CsrMatrix::from_triplets(n * n, n * n, trip);
    let mut u = vec![T::zero(); n * n];
    if rhs.iter().any(|v| *v != T::zero()) {
        pcg(&a, &rhs, &mut u, 1e-8, 20 * n * n + 100)?;
    }
    let mut out = f.clone();
    for j in 1..=n {
        for i in 1..=n {
            out.set(i, j, u[id(i, j)]);
        }
    }
    Ok(out)
}

fn record<T: Real>(report: &mut MinimizeReport<T>, parts: JParts<T>, g: T) {
    report.j_history.push(parts.total);
    report.part_history.push(parts);
    report.grad_history.push(g);
}

/// Backtracking until the Armijo condition holds.
fn line_search<T: Real>(
    state: &QPState<T>,
    cfg: &CarlemanConfig<T>,
    z: &[T],
    d: &[T],
    j0: T,
    slope: T,
    opts: &MinimizeOptions,
    iteration: usize,
) -> Result<(Vec<T>, T)> {
    let mut step = T::one();
    let c1 = T::lit(opts.armijo);
    loop {
        let trial: Vec<T> = z.iter().zip(d).map(|(&a, &b)| a + step * b).collect();
        let j = linearize(&state.with_free(&trial), cfg, false).parts().total;
        if j.is_finite() && j <= j0 + c1 * step * slope {
            return Ok((trial, j));
        }
        step = step * T::lit(0.5);
        if step.as_f64() < opts.min_step {
            return Err(Error::LineSearch {
                iteration,
                j: j0.as_f64(),
                slope: slope.as_f64(),
                step: step.as_f64(),
            });
        }
    }
}

/// Minimizes `J` from `init`; boundary nodes never move.
pub fn minimize_j<T: Real>(
    init: &QPState<T>,
    cfg: &CarlemanConfig<T>,
    opts: &MinimizeOptions,
) -> Result<MinimizeReport<T>> {
    cfg.validate()?;
    let start = Instant::now();
    let mut state = init.clone();
    let mut z = state.free_vector();
    let mut report = MinimizeReport {
        state: init.clone(),
        iterations: 0,
        j_history: Vec::new(),
        part_history: Vec::new(),
        grad_history: Vec::new(),
        grad_norm_final: T::zero(),
        wall_time: 0.0,
        a_ball_violated: false,
        stop: StopReason::IterationCap,
    };
    let mut g0 = None;
    // L-BFGS memory of (s, y, 1 / y.s).
    let mut hist: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::new();
    let mut prev: Option<(Vec<T>, Vec<T>)> = None;
    let mut stalled = 0usize;

    for it in 0..=opts.max_iter {
        let lin = linearize(&state, cfg, true);
        let parts = lin.parts();
        let g = lin.gradient();
        let gn = norm2(&g);
        record(&mut report, parts, gn);
        if state.h2_norm() >= cfg.a_bound && !report.a_ball_violated {
            log::warn!("iterate {it} left the monitored ball (norm {} >= A = {})", state.h2_norm(), cfg.a_bound);
            report.a_ball_violated = true;
        }
        let g0v = *g0.get_or_insert(gn);
        log::debug!("iter {it}: J = {:e}, |grad| = {:e}", parts.total, gn);
        if gn.as_f64() <= opts.grad_tol * g0v.as_f64().max(1.0) {
            report.stop = StopReason::Gradient;
            break;
        }
        if it == opts.max_iter {
            break;
        }

        let d = match opts.method {
            Method::GaussNewton => gauss_newton_step(&lin, &g)?,
            Method::Lbfgs => {
                if let Some((zp, gp)) = prev.take() {
                    let s: Vec<T> = z.iter().zip(&zp).map(|(&a, &b)| a - b).collect();
                    let y: Vec<T> = g.iter().zip(&gp).map(|(&a, &b)| a - b).collect();
                    let ys = dot(&y, &s);
                    if ys > T::zero() {
                        if hist.len() == opts.memory {
                            hist.pop_front();
                        }
                        hist.push_back((s, y, T::one() / ys));
                    }
                }
                lbfgs_direction(&g, &hist)
            }
        };
        let mut slope = dot(&g, &d);
        let mut d = d;
        if !(slope < T::zero()) {
            // Not a descent direction (can only happen for L-BFGS): restart.
            hist.clear();
            d = g.iter().map(|&v| -v).collect();
            slope = -gn * gn;
        }
        // Predicted decrease at round-off level: nothing left to gain.
        if -slope * T::lit(0.5) <= T::lit(opts.decrement_tol) * parts.total {
            report.stop = StopReason::Decrement;
            break;
        }
        let (trial, j_new) = line_search(&state, cfg, &z, &d, parts.total, slope, opts, it)?;
        prev = Some((z, g));
        z = trial;
        state = state.with_free(&z);
        report.iterations = it + 1;
        // At the round-off floor the model keeps predicting gains that never materialize.
        if (parts.total - j_new).as_f64() <= opts.stall_tol * parts.total.as_f64() {
            stalled += 1;
            if stalled >= opts.stall_iters {
                let last = linearize(&state, cfg, true);
                record(&mut report, last.parts(), norm2(&last.gradient()));
                report.stop = StopReason::Stall;
                break;
            }
        } else {
            stalled = 0;
        }
    }
    report.grad_norm_final = *report.grad_history.last().unwrap();
    report.state = state;
    report.wall_time = start.elapsed().as_secs_f64();
    Ok(report)
}

fn gauss_newton_step<T: Real>(lin: &crate::carleman::Linearization<T>, g: &[T]) -> Result<Vec<T>> {
    let rhs: Vec<T> = g.iter().map(|&v| -v).collect();
    let m = lin.gauss_newton();
    match m.clone().cholesky() {
        Ok(f) => Ok(f.solve(&rhs)),
        Err(_) => {
            // Levenberg shift growing from a tiny fraction of the mean diagonal.
            let diag = m.diagonal();
            let mean = diag.iter().copied().sum::<T>() / T::from_usize_lossy(diag.len());
            let mut mu = mean * T::lit(1e-12);
            for _ in 0..20 {
                let mut shifted = m.clone();
                shifted.add_to_diagonal(mu);
                if let Ok(f) = shifted.cholesky() {
                    return Ok(f.solve(&rhs));
                }
                mu = mu * T::lit(100.0);
            }
            Err(Error::Invalid("Gauss-Newton matrix could not be factored".into()))
        }
    }
}

fn lbfgs_direction<T: Real>(g: &[T], hist: &VecDeque<(Vec<T>, Vec<T>, T)>) -> Vec<T> {
    let mut q: Vec<T> = g.to_vec();
    let mut alphas = Vec::with_capacity(hist.len());
    for (s, y, rho) in hist.iter().rev() {
        let a = *rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, &yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = hist.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
        let b = *rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, &si)| *qi += (*a - b) * si);
    }
    q.iter().map(|&v| -v).collect()
}
