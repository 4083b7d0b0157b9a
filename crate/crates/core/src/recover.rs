//! From the minimizer to the conductivity: `psi`, the coefficient `r`,
//! its fine-grid interpolant, and the quasi-reversibility solve for
//! `w = sqrt(sigma)`.

use serde::{Deserialize, Serialize};

use crate::carleman::CarlemanConfig;
use crate::discrete_ops::{bilinear, stencil_at, ScalarField, Stencil};
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::linalg::{cgls, CsrMatrix, IterStats};
use crate::real::Real;

pub use crate::carleman::assemble_psi;

/// `r = -(Lap psi + |grad psi|^2)` at interior nodes; zero on the boundary.
pub fn recover_r<T: Real>(psi: &ScalarField<T>) -> ScalarField<T> {
    let n = psi.grid.n;
    let mut out = ScalarField::zeros(psi.grid);
    for j in 1..=n {
        for i in 1..=n {
            let gx = stencil_at(psi, Stencil::D1x, i, j);
            let gy = stencil_at(psi, Stencil::D1y, i, j);
            out.set(i, j, -(stencil_at(psi, Stencil::Laplacian, i, j) + gx * gx + gy * gy));
        }
    }
    out
}

/// Mean of [`recover_r`] over one `psi` per ring angle.
pub fn recover_r_averaged<T: Real>(psis: &[ScalarField<T>]) -> Result<ScalarField<T>> {
    let first = psis.first().ok_or_else(|| Error::Invalid("no angles to average".into()))?;
    let mut acc = ScalarField::zeros(first.grid);
    for psi in psis {
        if psi.grid != first.grid {
            return Err(Error::Shape("psi fields on different grids".into()));
        }
        let r = recover_r(psi);
        acc.values.iter_mut().zip(&r.values).for_each(|(a, &b)| *a += b);
    }
    let m = T::from_usize_lossy(psis.len());
    Ok(acc.map(|v| v / m))
}

/// Bilinear interpolation onto the grid with `fine_n` interior points.
pub fn interp_to_fine<T: Real>(f: &ScalarField<T>, fine_n: usize) -> Result<ScalarField<T>> {
    let fine = f.grid.refined(fine_n)?;
    let g = f.grid;
    let last = g.n + 1;
    let mut out = ScalarField::zeros(fine);
    for jj in 0..fine.side() {
        for ii in 0..fine.side() {
            let u = (fine.x(ii) - g.origin.0) / g.h;
            let v = (fine.y(jj) - g.origin.1) / g.h;
            let clamp = |t: T| t.max(T::zero()).min(T::from_usize_lossy(last));
            let (u, v) = (clamp(u), clamp(v));
            let i = u.floor().to_usize().unwrap_or(0).min(last - 1);
            let j = v.floor().to_usize().unwrap_or(0).min(last - 1);
            let fu = u - T::from_usize_lossy(i);
            let fv = v - T::from_usize_lossy(j);
            out.set(ii, jj, bilinear(f.at(i, j), f.at(i + 1, j), f.at(i, j + 1), f.at(i + 1, j + 1), fu, fv));
        }
    }
    Ok(out)
}

/// Quasi-reversibility solve: minimizes `|Lap w - r w|^2` over interior
/// nodes with the two outermost node layers held at 1.
pub fn qrm_solve<T: Real>(r: &ScalarField<T>, rel_tol: f64) -> Result<(ScalarField<T>, IterStats)> {
    if r.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("r contains non-finite values".into()));
    }
    let g = r.grid;
    let n = g.n;
    let free = |i: usize, j: usize| i >= 2 && j >= 2 && i + 2 <= n + 1 && j + 2 <= n + 1;
    let m = n - 2;
    let col = |i: usize, j: usize| (i - 2) + (j - 2) * m;
    let h2 = g.h * g.h;
    let mut trip = Vec::with_capacity(5 * n * n);
    let mut rhs = vec![T::zero(); n * n];
    for j in 1..=n {
        for i in 1..=n {
            let row = (i - 1) + (j - 1) * n;
            let taps = [
                (i, j, -T::lit(4.0) / h2 - r.at(i, j)),
                (i + 1, j, T::one() / h2),
                (i - 1, j, T::one() / h2),
                (i, j + 1, T::one() / h2),
                (i, j - 1, T::one() / h2),
            ];
            for (a, b, w) in taps {
                if free(a, b) {
                    trip.push((row, col(a, b), w));
                } else {
                    rhs[row] -= w;
                }
            }
        }
    }
    let a = CsrMatrix::from_triplets(n * n, m * m, trip);
    let mut x = vec![T::one(); m * m];
    let stats = cgls(&a, &rhs, &mut x, rel_tol, 200_000)?;
    let mut w = ScalarField::constant(g, T::one());
    for j in 2..=n - 1 {
        for i in 2..=n - 1 {
            w.set(i, j, x[col(i, j)]);
        }
    }
    Ok((w, stats))
}

/// `sigma = w^2` and the number of nodes where `w` was negative.
pub fn sigma_from_w<T: Real>(w: &ScalarField<T>) -> (ScalarField<T>, usize) {
    let negative = w.values.iter().filter(|&&v| v < T::zero()).count();
    (w.map(|v| v * v), negative)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RMode {
    #[default]
    Single,
    Averaged,
}

/// Settings that produced a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub carleman: CarlemanConfig<f64>,
    pub theta0: f64,
    pub mode: RMode,
    pub grid: GridSpec<f64>,
    pub fine_n: usize,
    pub negative_w_nodes: usize,
    pub minimizer_iterations: usize,
    pub grad_norm_final: f64,
    pub a_ball_violated: bool,
    pub qrm_iterations: usize,
    /// Wall time of the data transform and minimization, seconds.
    pub convexify_seconds: f64,
    /// Wall time of the whole reconstruction, seconds.
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction<T> {
    pub r_coarse: ScalarField<T>,
    pub r_fine: ScalarField<T>,
    pub w_fine: ScalarField<T>,
    pub sigma_fine: ScalarField<T>,
    pub provenance: Provenance,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete_ops::norm_l2h;
    use crate::geometry::{build_grid, DomainSpec};
    use std::f64::consts::PI;

    fn grid(n: usize) -> GridSpec<f64> {
        build_grid(&DomainSpec::paper_default(), n).unwrap()
    }

    #[test]
    fn r_of_constant_and_affine_psi() {
        let g = grid(9);
        assert!(recover_r(&ScalarField::constant(g, 3.0)).max_abs() == 0.0);
        let psi = ScalarField::from_fn(g, |x, y| 0.4 * x - 1.5 * y);
        let r = recover_r(&psi);
        for j in 1..=9 {
            for i in 1..=9 {
                assert!((r.at(i, j) + (0.16 + 2.25)).abs() < 1e-10);
            }
        }
        let avg = recover_r_averaged(&[psi.clone(), psi]).unwrap();
        assert_eq!(avg, r);
    }

    #[test]
    fn psi_inverts_the_shift() {
        use crate::carleman::QPState;
        use crate::data_transform::QPBoundary;
        let g = grid(7);
        let q = ScalarField::from_fn(g, |x, y| x * y);
        let gf = ScalarField::from_fn(g, |x, y| (x + 2.0 * y).sin());
        let eps = 2e-4;
        let p = q.zip_map(&gf, |a, b| a - eps * b);
        let nodes = g.boundary_nodes();
        let b = QPBoundary {
            theta0: 0.0,
            q_dirichlet: nodes.iter().map(|&(i, j)| q.at(i, j)).collect(),
            p_dirichlet: nodes.iter().map(|&(i, j)| p.at(i, j)).collect(),
            q_neumann: vec![0.0; 9],
            p_neumann: vec![0.0; 9],
            epsilon: eps,
        };
        let s = QPState::new(q.clone(), p, b).unwrap();
        let psi = assemble_psi(&s, eps);
        for (a, e) in psi.values.iter().zip(&gf.values) {
            assert!((a - e).abs() < 1e-9);
        }
        let s2 = QPState { p: q.clone(), ..s };
        assert_eq!(assemble_psi(&s2, eps).max_abs(), 0.0);
    }

    #[test]
    fn bilinear_interpolation() {
        let g = grid(9);
        let c = interp_to_fine(&ScalarField::constant(g, 1.25), 126).unwrap();
        assert!(c.values.iter().all(|&v| (v - 1.25).abs() < 1e-14));
        let xy = interp_to_fine(&ScalarField::from_fn(g, |x, y| x * y + 2.0 * x - y), 126).unwrap();
        let exact = ScalarField::from_fn(xy.grid, |x, y| x * y + 2.0 * x - y);
        assert!(xy.zip_map(&exact, |a, b| a - b).max_abs() < 1e-12);
        let sq = interp_to_fine(&ScalarField::from_fn(g, |x, _| x * x), 126).unwrap();
        let exact = ScalarField::from_fn(sq.grid, |x, _| x * x);
        assert!(sq.zip_map(&exact, |a, b| a - b).max_abs() <= 0.1 * 0.1 / 4.0 * 2.0 + 1e-12);
        let f = ScalarField::from_fn(g, |x, y| (3.0 * x * y).sin());
        let fine = interp_to_fine(&f, 50).unwrap();
        assert!(fine.min() >= f.min() - 1e-14 && fine.max() <= f.max() + 1e-14);
    }

    /// `phi = 1 + 0.5 b(x) b(y)`, `b` flat to third order at the square's edges.
    fn manufactured(g: GridSpec<f64>) -> (ScalarField<f64>, ScalarField<f64>) {
        let (lo, c2) = (1.0, 1.0);
        let k = PI / c2;
        let b = |t: f64| (k * (t - lo)).sin().powi(4);
        let b2 = |t: f64| {
            let (s, c) = ((k * (t - lo)).sin(), (k * (t - lo)).cos());
            k * k * (12.0 * s * s * c * c - 4.0 * s.powi(4))
        };
        let phi = ScalarField::from_fn(g, |x, y| 1.0 + 0.5 * b(x) * b(y));
        let r = ScalarField::from_fn(g, |x, y| 0.5 * (b2(x) * b(y) + b(x) * b2(y)) / (1.0 + 0.5 * b(x) * b(y)));
        (phi, r)
    }

    #[test]
    fn qrm_recovers_manufactured_solution() {
        let g = grid(126);
        let (phi, r) = manufactured(g);
        let (w, stats) = qrm_solve(&r, 1e-8).unwrap();
        let err = norm_l2h(&w.zip_map(&phi, |a, b| a - b)) / norm_l2h(&phi);
        assert!(err <= 1e-3, "relative error {err} after {} iterations", stats.iterations);
    }

    #[test]
    fn qrm_trivial_and_symmetric() {
        let g = grid(30);
        let (w, _) = qrm_solve(&ScalarField::zeros(g), 1e-8).unwrap();
        assert!(w.values.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let r = ScalarField::from_fn(g, |x, y| -3.0 * (-((x - 1.5).powi(2) + (y - 1.5).powi(2)) * 20.0).exp());
        let (w, _) = qrm_solve(&r, 1e-10).unwrap();
        for j in 0..32 {
            for i in 0..32 {
                assert!((w.at(i, j) - w.at(31 - i, j)).abs() < 1e-6);
                assert!((w.at(i, j) - w.at(j, i)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sigma_is_w_squared() {
        let g = grid(5);
        let (s, neg) = sigma_from_w(&ScalarField::constant(g, 1.0));
        assert!(s.values.iter().all(|&v| v == 1.0) && neg == 0);
        let (s, _) = sigma_from_w(&ScalarField::constant(g, 2f64.sqrt()));
        assert!(s.values.iter().all(|&v| (v - 2.0).abs() < 1e-15));
        let w = ScalarField::from_fn(g, |x, _| x - 1.5);
        let (s, neg) = sigma_from_w(&w);
        assert!(s.min() >= 0.0 && neg > 0);
    }
}
