//! Sparse and banded linear solvers used by the forward problem, the
//! Gauss–Newton steps and the quasi-reversibility solve.

use crate::error::{Error, Result};
use crate::real::Real;

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds from unsorted triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, T)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut acc = T::zero();
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
    }

    /// `y = A^T x`.
    pub fn mul_transpose_vec(&self, x: &[T], y: &mut [T]) {
        y.iter_mut().for_each(|v| *v = T::zero());
        for (r, &xr) in x.iter().enumerate().take(self.nrows) {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.nrows];
        for (r, dr) in d.iter_mut().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[k] == r {
                    *dr += self.values[k];
                }
            }
        }
        d
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct IterStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for an SPD matrix.
///
/// Stops when `|b - A x| <= rel_tol * |b|`. `x` holds the initial guess on
/// entry and the solution on exit.
pub fn pcg<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x: &mut [T],
    rel_tol: f64,
    max_iter: usize,
) -> Result<IterStats> {
    let n = a.nrows;
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > T::zero() { T::one() / d } else { T::one() })
        .collect();
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(IterStats { iterations: 0, relative_residual: 0.0 });
    }
    let tol = T::lit(rel_tol) * bnorm;
    let mut r = vec![T::zero(); n];
    a.mul_vec(x, &mut r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    let mut rnorm = norm2(&r);
    for it in 0..max_iter {
        if rnorm <= tol {
            return Ok(IterStats { iterations: it, relative_residual: (rnorm / bnorm).as_f64() });
        }
        a.mul_vec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= T::zero() {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        rnorm = norm2(&r);
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if rnorm <= tol {
        return Ok(IterStats { iterations: max_iter, relative_residual: (rnorm / bnorm).as_f64() });
    }
    Err(Error::NoConvergence {
        solver: "conjugate gradient",
        iterations: max_iter,
        residual: (rnorm / bnorm).as_f64(),
    })
}

/// Conjugate gradients on the normal equations `A^T A x = A^T b` with
/// column scaling.
///
/// Convergence is measured on the normal-equation residual,
/// `|A^T (b - A x)| <= rel_tol * |A^T b|`.
pub fn cgls<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x: &mut [T],
    rel_tol: f64,
    max_iter: usize,
) -> Result<IterStats> {
    let (m, n) = (a.nrows, a.ncols);
    // Column norms for the diagonal preconditioner.
    let mut colsq = vec![T::zero(); n];
    for r in 0..m {
        for k in a.row_ptr[r]..a.row_ptr[r + 1] {
            colsq[a.col_idx[k]] += a.values[k] * a.values[k];
        }
    }
    let scale: Vec<T> =
        colsq.iter().map(|&c| if c > T::zero() { T::one() / c.sqrt() } else { T::one() }).collect();

    let mut atb = vec![T::zero(); n];
    a.mul_transpose_vec(b, &mut atb);
    let atb_norm = norm2(&atb);
    if atb_norm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(IterStats { iterations: 0, relative_residual: 0.0 });
    }
    let tol = T::lit(rel_tol) * atb_norm;

    // Work in scaled variables y with x = S y.
    let mut y: Vec<T> = x.iter().zip(&scale).map(|(&xi, &s)| xi / s).collect();
    let mut r = vec![T::zero(); m];
    let mut tmp = vec![T::zero(); n];
    a.mul_vec(x, &mut r);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut s = vec![T::zero(); n];
    a.mul_transpose_vec(&r, &mut s);
    for (si, &sc) in s.iter_mut().zip(&scale) {
        *si *= sc;
    }
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let mut q = vec![T::zero(); m];
    let mut true_norm = T::infinity();
    for it in 0..max_iter {
        for i in 0..n {
            tmp[i] = p[i] * scale[i];
        }
        a.mul_vec(&tmp, &mut q);
        let qq = dot(&q, &q);
        if qq == T::zero() {
            break;
        }
        let alpha = gamma / qq;
        for i in 0..n {
            y[i] += alpha * p[i];
        }
        for i in 0..m {
            r[i] -= alpha * q[i];
        }
        a.mul_transpose_vec(&r, &mut s);
        true_norm = norm2(&s);
        if true_norm <= tol {
            for i in 0..n {
                x[i] = y[i] * scale[i];
            }
            return Ok(IterStats {
                iterations: it + 1,
                relative_residual: (true_norm / atb_norm).as_f64(),
            });
        }
        for (si, &sc) in s.iter_mut().zip(&scale) {
            *si *= sc;
        }
        let gamma_new = dot(&s, &s);
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for i in 0..n {
            p[i] = s[i] + beta * p[i];
        }
    }
    for i in 0..n {
        x[i] = y[i] * scale[i];
    }
    Err(Error::NoConvergence {
        solver: "CGLS",
        iterations: max_iter,
        residual: (true_norm / atb_norm).as_f64(),
    })
}

/// Symmetric banded matrix storing the lower band: entry `(i, i - k)` for
/// `0 <= k <= bandwidth` at `data[i * (bandwidth + 1) + k]`.
#[derive(Debug, Clone)]
pub struct BandedSpd<T> {
    pub n: usize,
    pub bandwidth: usize,
    pub data: Vec<T>,
}

impl<T: Real> BandedSpd<T> {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self { n, bandwidth, data: vec![T::zero(); n * (bandwidth + 1)] }
    }

    /// Adds `v` to entry `(i, j)` (and by symmetry `(j, i)`).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = r - c;
        debug_assert!(k <= self.bandwidth, "entry ({i}, {j}) outside band {}", self.bandwidth);
        self.data[r * (self.bandwidth + 1) + k] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = r - c;
        if k > self.bandwidth {
            T::zero()
        } else {
            self.data[r * (self.bandwidth + 1) + k]
        }
    }

    pub fn add_to_diagonal(&mut self, v: T) {
        for i in 0..self.n {
            self.data[i * (self.bandwidth + 1)] += v;
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.data[i * (self.bandwidth + 1)]).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let w = self.bandwidth;
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let row = &self.data[i * (w + 1)..(i + 1) * (w + 1)];
            y[i] += row[0] * x[i];
            for k in 1..=w.min(i) {
                let j = i - k;
                y[i] += row[k] * x[j];
                y[j] += row[k] * x[i];
            }
        }
        y
    }

    /// In-place banded Cholesky factorization `A = L L^T`.
    pub fn cholesky(mut self) -> Result<BandedCholesky<T>> {
        let w = self.bandwidth;
        let stride = w + 1;
        for i in 0..self.n {
            let jmin = i.saturating_sub(w);
            for j in jmin..=i {
                // L(i, j) = (A(i, j) - sum_k L(i, k) L(j, k)) / L(j, j)
                let kmin = jmin.max(j.saturating_sub(w));
                let mut s = self.data[i * stride + (i - j)];
                for k in kmin..j {
                    s -= self.data[i * stride + (i - k)] * self.data[j * stride + (j - k)];
                }
                if i == j {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(Error::Invalid(format!(
                            "banded Cholesky: non-positive pivot {s:e} at row {i}"
                        )));
                    }
                    self.data[i * stride] = s.sqrt();
                } else {
                    self.data[i * stride + (i - j)] = s / self.data[j * stride];
                }
            }
        }
        Ok(BandedCholesky { n: self.n, bandwidth: w, data: self.data })
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky<T> {
    n: usize,
    bandwidth: usize,
    data: Vec<T>,
}

impl<T: Real> BandedCholesky<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let w = self.bandwidth;
        let stride = w + 1;
        let mut y = b.to_vec();
        for i in 0..self.n {
            let mut s = y[i];
            for k in i.saturating_sub(w)..i {
                s -= self.data[i * stride + (i - k)] * y[k];
            }
            y[i] = s / self.data[i * stride];
        }
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for k in (i + 1)..(i + w + 1).min(self.n) {
                s -= self.data[k * stride + (k - i)] * y[k];
            }
            y[i] = s / self.data[i * stride];
        }
        y
    }
}
