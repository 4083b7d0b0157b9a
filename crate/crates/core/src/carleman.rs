//! The Carleman-weighted functional of the `(q, p)` system.
//!
//! `J` is a sum of squares. Every term is written as an explicit residual
//! with a sparse row of partial derivatives over the free nodes, which
//! gives the exact gradient and the Gauss-Newton matrix from one pass.

use serde::{Deserialize, Serialize};

use crate::data_transform::QPBoundary;
use crate::discrete_ops::{norm_h2h_sq, stencil_at, ScalarField, Stencil};
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::linalg::BandedSpd;
use crate::real::Real;

fn one<T: Real>() -> T {
    T::one()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct CarlemanConfig<T> {
    pub kappa: T,
    pub alpha: T,
    pub epsilon: T,
    /// Weight of the quadratic penalty on the one-sided Neumann mismatch.
    pub lambda_neumann: T,
    /// Radius of the monitored ball; never enforced.
    #[serde(rename = "A")]
    pub a_bound: T,
    /// Multiplier on the weighted residual part; 0 leaves a pure quadratic.
    #[serde(default = "one")]
    pub f_weight: T,
}

impl<T: Real> CarlemanConfig<T> {
    pub fn paper_default() -> Self {
        let alpha = T::lit(0.01);
        Self {
            kappa: T::lit(3.0),
            alpha,
            epsilon: T::lit(0.0002),
            lambda_neumann: T::lit(1e3) * alpha,
            a_bound: T::lit(10.0),
            f_weight: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: T| v.is_finite();
        if !(ok(self.kappa) && self.kappa >= T::one()) {
            return Err(Error::Invalid(format!("kappa must be >= 1, got {}", self.kappa)));
        }
        for (name, v) in [("alpha", self.alpha), ("epsilon", self.epsilon)] {
            if !(ok(v) && v > T::zero() && v < T::one()) {
                return Err(Error::Invalid(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        for (name, v) in [("lambda_neumann", self.lambda_neumann), ("A", self.a_bound)] {
            if !(ok(v) && v > T::zero()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(ok(self.f_weight) && self.f_weight >= T::zero()) {
            return Err(Error::Invalid(format!("f_weight must be >= 0, got {}", self.f_weight)));
        }
        Ok(())
    }
}

/// `(q, p)` on the grid with Dirichlet nodes pinned to the boundary data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QPState<T> {
    pub q: ScalarField<T>,
    pub p: ScalarField<T>,
    pub boundary: QPBoundary<T>,
}

/// Free-variable index of field `f` (0 = q, 1 = p) at node `(i, j)`.
///
/// Interior nodes only; the two fields are interleaved per node so that
/// the normal matrix stays narrow-banded.
#[inline]
pub fn free_index(n: usize, f: usize, i: usize, j: usize) -> Option<usize> {
    if i == 0 || j == 0 || i > n || j > n {
        None
    } else {
        Some(2 * ((i - 1) + (j - 1) * n) + f)
    }
}

impl<T: Real> QPState<T> {
    /// Builds a state from arbitrary fields, overwriting boundary nodes with the data.
    pub fn new(q: ScalarField<T>, p: ScalarField<T>, boundary: QPBoundary<T>) -> Result<Self> {
        let g = q.grid;
        if p.grid != g {
            return Err(Error::Shape("q and p live on different grids".into()));
        }
        let nb = 4 * g.n + 4;
        if boundary.q_dirichlet.len() != nb
            || boundary.p_dirichlet.len() != nb
            || boundary.q_neumann.len() != g.n + 2
            || boundary.p_neumann.len() != g.n + 2
        {
            return Err(Error::Shape(format!("boundary data does not fit a grid with n = {}", g.n)));
        }
        let mut s = Self { q, p, boundary };
        s.pin();
        Ok(s)
    }

    /// Boundary data and a field filled by `fill` in the interior (both q and p).
    pub fn from_interior(grid: GridSpec<T>, boundary: QPBoundary<T>, fill: impl FnMut(T, T) -> T) -> Result<Self> {
        let q = ScalarField::from_fn(grid, fill);
        let p = q.clone();
        Self::new(q, p, boundary)
    }

    pub fn grid(&self) -> GridSpec<T> {
        self.q.grid
    }

    fn pin(&mut self) {
        let nodes = self.q.grid.boundary_nodes();
        for (k, &(i, j)) in nodes.iter().enumerate() {
            self.q.set(i, j, self.boundary.q_dirichlet[k]);
            self.p.set(i, j, self.boundary.p_dirichlet[k]);
        }
    }

    pub fn free_len(&self) -> usize {
        2 * self.q.grid.n * self.q.grid.n
    }

    pub fn free_vector(&self) -> Vec<T> {
        let n = self.q.grid.n;
        let mut z = vec![T::zero(); self.free_len()];
        for j in 1..=n {
            for i in 1..=n {
                z[free_index(n, 0, i, j).unwrap()] = self.q.at(i, j);
                z[free_index(n, 1, i, j).unwrap()] = self.p.at(i, j);
            }
        }
        z
    }

    /// Copy with the interior replaced by `z`; boundary nodes are untouched.
    pub fn with_free(&self, z: &[T]) -> Self {
        let n = self.q.grid.n;
        let mut out = self.clone();
        for j in 1..=n {
            for i in 1..=n {
                out.q.set(i, j, z[free_index(n, 0, i, j).unwrap()]);
                out.p.set(i, j, z[free_index(n, 1, i, j).unwrap()]);
            }
        }
        out
    }

    /// `sqrt(|q|^2 + |p|^2)` in the discrete `H2` norm, compared against `A`.
    pub fn h2_norm(&self) -> T {
        (norm_h2h_sq(&self.q) + norm_h2h_sq(&self.p)).sqrt()
    }
}

/// Carleman weight `exp(2 kappa x^2)` at every node.
pub fn cwf<T: Real>(grid: GridSpec<T>, kappa: T) -> ScalarField<T> {
    ScalarField::from_fn(grid, |x, _| (T::lit(2.0) * kappa * x * x).exp())
}

/// `psi = (q - p) / epsilon` at every node.
pub fn assemble_psi<T: Real>(state: &QPState<T>, epsilon: T) -> ScalarField<T> {
    state.q.zip_map(&state.p, |a, b| (a - b) / epsilon)
}

fn coupling<T: Real>(q: &ScalarField<T>, psi: &ScalarField<T>, i: usize, j: usize) -> T {
    T::lit(2.0)
        * (stencil_at(q, Stencil::D1x, i, j) * stencil_at(psi, Stencil::D1x, i, j)
            + stencil_at(q, Stencil::D1y, i, j) * stencil_at(psi, Stencil::D1y, i, j))
}

/// `Lap q + 2 grad q . grad psi` at interior nodes; zero on the boundary.
pub fn residual_f1<T: Real>(state: &QPState<T>, epsilon: T) -> ScalarField<T> {
    let psi = assemble_psi(state, epsilon);
    let n = state.grid().n;
    let mut out = ScalarField::zeros(state.grid());
    for j in 1..=n {
        for i in 1..=n {
            out.set(i, j, stencil_at(&state.q, Stencil::Laplacian, i, j) + coupling(&state.q, &psi, i, j));
        }
    }
    out
}

/// `Lap p + 2 grad q . grad psi` at interior nodes; zero on the boundary.
pub fn residual_f2<T: Real>(state: &QPState<T>, epsilon: T) -> ScalarField<T> {
    let psi = assemble_psi(state, epsilon);
    let n = state.grid().n;
    let mut out = ScalarField::zeros(state.grid());
    for j in 1..=n {
        for i in 1..=n {
            out.set(i, j, stencil_at(&state.p, Stencil::Laplacian, i, j) + coupling(&state.q, &psi, i, j));
        }
    }
    out
}

/// Which term of `J` a residual belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    F,
    Alpha,
    Neumann,
}

/// Value of `J` and its three parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JParts<T> {
    pub total: T,
    pub f: T,
    pub alpha: T,
    pub neumann: T,
}

/// Residual vector of `J = sum r_k^2`, optionally with its sparse Jacobian.
#[derive(Debug, Clone)]
pub struct Linearization<T> {
    pub residuals: Vec<T>,
    pub parts: Vec<Part>,
    /// CSR row pointers into `cols` / `vals`; empty without a Jacobian.
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<T>,
    pub nvars: usize,
}

struct Builder<T> {
    lin: Linearization<T>,
    jac: bool,
    scratch: Vec<(usize, T)>,
}

impl<T: Real> Builder<T> {
    fn push(&mut self, part: Part, value: T) {
        self.lin.residuals.push(value);
        self.lin.parts.push(part);
        if self.jac {
            // Merge repeated columns so each appears once per row.
            self.scratch.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(c, v) in &self.scratch {
                if last == Some(c) {
                    *self.lin.vals.last_mut().unwrap() += v;
                } else {
                    self.lin.cols.push(c);
                    self.lin.vals.push(v);
                    last = Some(c);
                }
            }
            self.lin.row_ptr.push(self.lin.cols.len());
        }
        self.scratch.clear();
    }

    #[inline]
    fn entry(&mut self, col: Option<usize>, v: T) {
        if self.jac {
            if let Some(c) = col {
                self.scratch.push((c, v));
            }
        }
    }
}

const CROSS: [(isize, isize); 5] = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)];

/// Assembles every residual of `J` at `state` (and the Jacobian if `jac`).
pub fn linearize<T: Real>(state: &QPState<T>, cfg: &CarlemanConfig<T>, jac: bool) -> Linearization<T> {
    let g = state.grid();
    let n = g.n;
    let h = g.h;
    let two = T::lit(2.0);
    let eps = cfg.epsilon;
    let nvars = state.free_len();
    let mut b = Builder {
        lin: Linearization {
            residuals: Vec::new(),
            parts: Vec::new(),
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
            nvars,
        },
        jac,
        scratch: Vec::with_capacity(16),
    };
    let at = |i: usize, di: isize| (i as isize + di) as usize;

    // Weighted residuals of the two PDEs.
    if cfg.f_weight > T::zero() {
        let psi = assemble_psi(state, eps);
        let (q, p) = (&state.q, &state.p);
        let base = cfg.f_weight * eps.sqrt() * h * h;
        let inv2h = T::one() / (two * h);
        let invh2 = T::one() / (h * h);
        for j in 1..=n {
            for i in 1..=n {
                let s = (base * (two * cfg.kappa * g.x(i) * g.x(i)).exp()).sqrt();
                let qx = stencil_at(q, Stencil::D1x, i, j);
                let qy = stencil_at(q, Stencil::D1y, i, j);
                let sx = stencil_at(&psi, Stencil::D1x, i, j);
                let sy = stencil_at(&psi, Stencil::D1y, i, j);
                let c = two * (qx * sx + qy * sy);
                let f1 = stencil_at(q, Stencil::Laplacian, i, j) + c;
                let f2 = stencil_at(p, Stencil::Laplacian, i, j) + c;
                for (row, f) in [(0usize, f1), (1, f2)] {
                    if jac {
                        for (di, dj) in CROSS {
                            let l = if di == 0 && dj == 0 { -T::lit(4.0) * invh2 } else { invh2 };
                            let ax = T::from_isize(di).unwrap() * inv2h;
                            let ay = T::from_isize(dj).unwrap() * inv2h;
                            let dq_grad = qx * ax + qy * ay;
                            let dc_dq = two * (ax * sx + ay * sy) + two * dq_grad / eps;
                            let dc_dp = -two * dq_grad / eps;
                            let (ii, jj) = (at(i, di), at(j, dj));
                            let (lq, lp) = if row == 0 { (l, T::zero()) } else { (T::zero(), l) };
                            b.entry(free_index(n, 0, ii, jj), s * (lq + dc_dq));
                            b.entry(free_index(n, 1, ii, jj), s * (lp + dc_dp));
                        }
                    }
                    b.push(Part::F, s * f);
                }
            }
        }
    }

    // Discrete H2 penalty of both fields.
    let sa = cfg.alpha.sqrt() * h;
    for (fi, field) in [(0usize, &state.q), (1, &state.p)] {
        for j in 0..=n + 1 {
            for i in 0..=n + 1 {
                b.entry(free_index(n, fi, i, j), sa);
                b.push(Part::Alpha, sa * field.at(i, j));
            }
        }
        for j in 1..=n {
            for i in 1..=n {
                for op in [Stencil::D1x, Stencil::D1y, Stencil::D2x, Stencil::Dxy, Stencil::D2y] {
                    if jac {
                        for (di, dj, w) in op.taps(h) {
                            b.entry(free_index(n, fi, at(i, di), at(j, dj)), sa * w);
                        }
                    }
                    b.push(Part::Alpha, sa * stencil_at(field, op, i, j));
                }
            }
        }
    }

    // One-sided Neumann mismatch on the right side.
    let sn = (cfg.lambda_neumann * h).sqrt();
    let taps = [(n + 1, T::lit(3.0)), (n, -T::lit(4.0)), (n - 1, T::one())];
    for (fi, field, data) in
        [(0usize, &state.q, &state.boundary.q_neumann), (1, &state.p, &state.boundary.p_neumann)]
    {
        for j in 0..=n + 1 {
            let mut d = T::zero();
            for &(i, w) in &taps {
                d += w * field.at(i, j);
                b.entry(free_index(n, fi, i, j), sn * w / (two * h));
            }
            b.push(Part::Neumann, sn * (d / (two * h) - data[j]));
        }
    }
    b.lin
}

impl<T: Real> Linearization<T> {
    pub fn parts(&self) -> JParts<T> {
        let (mut f, mut a, mut nm) = (T::zero(), T::zero(), T::zero());
        for (r, p) in self.residuals.iter().zip(&self.parts) {
            let v = *r * *r;
            match p {
                Part::F => f += v,
                Part::Alpha => a += v,
                Part::Neumann => nm += v,
            }
        }
        JParts { total: f + a + nm, f, alpha: a, neumann: nm }
    }

    /// `grad J = 2 J^T r` over the free variables.
    pub fn gradient(&self) -> Vec<T> {
        let two = T::lit(2.0);
        let mut g = vec![T::zero(); self.nvars];
        for (k, &r) in self.residuals.iter().enumerate() {
            for e in self.row_ptr[k]..self.row_ptr[k + 1] {
                g[self.cols[e]] += two * r * self.vals[e];
            }
        }
        g
    }

    /// Gradient of the rows belonging to `part` alone.
    pub fn part_gradient(&self, part: Part) -> Vec<T> {
        let two = T::lit(2.0);
        let mut g = vec![T::zero(); self.nvars];
        for (k, &r) in self.residuals.iter().enumerate() {
            if self.parts[k] == part {
                for e in self.row_ptr[k]..self.row_ptr[k + 1] {
                    g[self.cols[e]] += two * r * self.vals[e];
                }
            }
        }
        g
    }

    /// Widest column spread of any Jacobian row.
    pub fn bandwidth(&self) -> usize {
        (0..self.residuals.len())
            .map(|k| {
                let row = &self.cols[self.row_ptr[k]..self.row_ptr[k + 1]];
                match (row.first(), row.last()) {
                    (Some(a), Some(b)) => b - a,
                    _ => 0,
                }
            })
            .max()
            .unwrap_or(0)
    }

    /// Gauss-Newton matrix `2 J^T J` in banded storage.
    pub fn gauss_newton(&self) -> BandedSpd<T> {
        let two = T::lit(2.0);
        let mut m = BandedSpd::zeros(self.nvars, self.bandwidth());
        for k in 0..self.residuals.len() {
            let (lo, hi) = (self.row_ptr[k], self.row_ptr[k + 1]);
            for a in lo..hi {
                for c in a..hi {
                    m.add(self.cols[a], self.cols[c], two * self.vals[a] * self.vals[c]);
                }
            }
        }
        m
    }
}

/// `J` and its parts.
pub fn eval_j<T: Real>(state: &QPState<T>, cfg: &CarlemanConfig<T>) -> JParts<T> {
    linearize(state, cfg, false).parts()
}

/// Exact gradient of `J` with respect to the interior values of `q` and `p`.
///
/// Boundary entries are zero: those nodes are pinned, not free.
pub fn grad_j<T: Real>(state: &QPState<T>, cfg: &CarlemanConfig<T>) -> (ScalarField<T>, ScalarField<T>) {
    let g = linearize(state, cfg, true).gradient();
    let grid = state.grid();
    let n = grid.n;
    let mut gq = ScalarField::zeros(grid);
    let mut gp = ScalarField::zeros(grid);
    for j in 1..=n {
        for i in 1..=n {
            gq.set(i, j, g[free_index(n, 0, i, j).unwrap()]);
            gp.set(i, j, g[free_index(n, 1, i, j).unwrap()]);
        }
    }
    (gq, gp)
}
