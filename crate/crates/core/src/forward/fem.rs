use crate::error::{Error, Result};
use crate::linalg::{pcg, CsrMatrix, IterStats};
use crate::real::Real;

use super::mesh::{MeshField, TriMesh};

/// Unnormalized bump `exp(d^2 / (d^2 - xi^2))` for `d < xi`, else 0.
#[inline]
fn bump<T: Real>(d2: T, xi: T) -> T {
    let xi2 = xi * xi;
    if d2 >= xi2 {
        T::zero()
    } else {
        (d2 / (d2 - xi2)).exp()
    }
}

/// Normalization making the mollifier integrate to one in the plane.
///
/// With `s = d^2 / xi^2` the integral is `pi xi^2 int_0^1 exp(s / (s - 1)) ds`;
/// the 1-D integral is evaluated by composite Simpson.
pub fn mollifier_constant<T: Real>(xi: T) -> T {
    let n = 4000usize;
    let hs = 1.0 / n as f64;
    let f = |s: f64| if s >= 1.0 { 0.0 } else { (s / (s - 1.0)).exp() };
    let mut acc = f(0.0) + f(1.0);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * hs);
    }
    let integral = acc * hs / 3.0;
    T::one() / (T::PI() * xi * xi * T::lit(integral))
}

/// Smooth compactly supported approximation of a point source at `x0`.
pub fn mollifier<T: Real>(x: (T, T), x0: (T, T), xi: T) -> T {
    let d2 = (x.0 - x0.0) * (x.0 - x0.0) + (x.1 - x0.1) * (x.1 - x0.1);
    mollifier_constant(xi) * bump(d2, xi)
}

const QUAD_POINTS: [[f64; 3]; 3] =
    [[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]];

/// Assembled P1 stiffness system for one conductivity, reusable across sources.
#[derive(Debug, Clone)]
pub struct ForwardSolver<'m, T> {
    mesh: &'m TriMesh<T>,
    /// Unknown index for each vertex; `None` on the outer circle.
    dof: Vec<Option<usize>>,
    matrix: CsrMatrix<T>,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl<'m, T: Real> ForwardSolver<'m, T> {
    pub fn new(mesh: &'m TriMesh<T>, sigma: &MeshField<T>) -> Result<Self> {
        let nv = mesh.vertices.len();
        if sigma.values.len() != nv {
            return Err(Error::Shape(format!(
                "conductivity has {} values for {} vertices",
                sigma.values.len(),
                nv
            )));
        }
        if let Some(bad) = sigma.values.iter().position(|&s| !(s >= T::one()) || !s.is_finite()) {
            return Err(Error::Invalid(format!(
                "conductivity must be finite and >= 1 (vertex {bad}: {})",
                sigma.values[bad]
            )));
        }
        let mut dof = vec![None; nv];
        let mut count = 0;
        for (v, d) in dof.iter_mut().enumerate() {
            if !mesh.boundary[v] {
                *d = Some(count);
                count += 1;
            }
        }
        let mut trip = Vec::with_capacity(mesh.triangles.len() * 9);
        let third = T::one() / T::lit(3.0);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let area = mesh.area(t);
            let s = (sigma.values[tri[0]] + sigma.values[tri[1]] + sigma.values[tri[2]]) * third;
            let g = mesh.shape_gradients(t);
            for a in 0..3 {
                let Some(ra) = dof[tri[a]] else { continue };
                for b in 0..3 {
                    let Some(cb) = dof[tri[b]] else { continue };
                    let k = s * area * (g[a].0 * g[b].0 + g[a].1 * g[b].1);
                    trip.push((ra, cb, k));
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(count, count, trip);
        Ok(Self { mesh, dof, matrix, rel_tol: 1e-10, max_iter: 50_000 })
    }

    /// Load vector of the mollified source, rescaled so its entries sum to one.
    pub fn load_vector(&self, x0: (T, T), xi: T) -> Vec<T> {
        let mesh = self.mesh;
        let mut full = vec![T::zero(); mesh.vertices.len()];
        let reach = xi + mesh.target_edge * T::lit(2.0);
        let reach2 = reach * reach;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let p = tri.map(|v| mesh.vertices[v]);
            let cx = (p[0].0 + p[1].0 + p[2].0) / T::lit(3.0);
            let cy = (p[0].1 + p[1].1 + p[2].1) / T::lit(3.0);
            if (cx - x0.0) * (cx - x0.0) + (cy - x0.1) * (cy - x0.1) > reach2 {
                continue;
            }
            let area = mesh.area(t);
            for q in QUAD_POINTS {
                let l = q.map(T::lit);
                let x = l[0] * p[0].0 + l[1] * p[1].0 + l[2] * p[2].0;
                let y = l[0] * p[0].1 + l[1] * p[1].1 + l[2] * p[2].1;
                let d2 = (x - x0.0) * (x - x0.0) + (y - x0.1) * (y - x0.1);
                let g = bump(d2, xi) * area / T::lit(3.0);
                for k in 0..3 {
                    full[tri[k]] += g * l[k];
                }
            }
        }
        let total: T = full.iter().copied().sum();
        if total > T::zero() {
            full.iter_mut().for_each(|v| *v /= total);
        }
        full
    }

    /// Solves `div(sigma grad v) = -g(x - x0)` with `v = 0` on the circle.
    pub fn solve(&self, x0: (T, T), xi: T) -> Result<(MeshField<T>, IterStats)> {
        let load = self.load_vector(x0, xi);
        let mut rhs = vec![T::zero(); self.matrix.nrows];
        for (v, d) in self.dof.iter().enumerate() {
            if let Some(k) = d {
                rhs[*k] = load[v];
            }
        }
        let mut u = vec![T::zero(); self.matrix.nrows];
        let stats = pcg(&self.matrix, &rhs, &mut u, self.rel_tol, self.max_iter)?;
        let mut values = vec![T::zero(); self.mesh.vertices.len()];
        for (v, d) in self.dof.iter().enumerate() {
            if let Some(k) = d {
                values[v] = u[*k];
            }
        }
        Ok((MeshField { values }, stats))
    }

    /// `(a(v, v), l(v))`: the discrete energy and the load functional.
    pub fn energy_terms(&self, v: &MeshField<T>, x0: (T, T), xi: T) -> (T, T) {
        let mut u = vec![T::zero(); self.matrix.nrows];
        for (k, d) in self.dof.iter().enumerate() {
            if let Some(i) = d {
                u[*i] = v.values[k];
            }
        }
        let mut au = vec![T::zero(); u.len()];
        self.matrix.mul_vec(&u, &mut au);
        let energy = crate::linalg::dot(&u, &au);
        let load = self.load_vector(x0, xi);
        let work = load.iter().zip(&v.values).map(|(&g, &x)| g * x).sum();
        (energy, work)
    }
}

/// One forward solve; assembles the stiffness matrix from scratch.
pub fn solve_forward<T: Real>(
    mesh: &TriMesh<T>,
    sigma: &MeshField<T>,
    x0: (T, T),
    xi: T,
) -> Result<MeshField<T>> {
    Ok(ForwardSolver::new(mesh, sigma)?.solve(x0, xi)?.0)
}
