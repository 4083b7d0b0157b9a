//! Forward problem on the outer disk: mesh generation, P1 finite elements
//! with a mollified point source, and extraction of the boundary traces
//! the inversion consumes.

mod fem;
mod mesh;
mod traces;

pub use fem::{mollifier, mollifier_constant, solve_forward, ForwardSolver};
pub use mesh::{triangulate_disk, MeshField, PointLocator, TriMesh};
pub use traces::{extract_traces, sample_traces, vertex_gradients, BoundaryDataset};

use rayon::prelude::*;

use crate::discrete_ops::ScalarField;
use crate::error::Result;
use crate::geometry::{DomainSpec, GridSpec, SourceRing};
use crate::real::Real;

/// Bilinear sample of a square-domain field; 1 outside the square.
pub fn sample_field<T: Real>(field: &ScalarField<T>, x: T, y: T) -> T {
    let g = field.grid;
    let side = T::from_usize_lossy(g.n + 1);
    let u = (x - g.origin.0) / g.h;
    let v = (y - g.origin.1) / g.h;
    let eps = T::lit(1e-12) * side;
    if u < -eps || v < -eps || u > side + eps || v > side + eps {
        return T::one();
    }
    let u = u.max(T::zero()).min(side);
    let v = v.max(T::zero()).min(side);
    let i = u.floor().to_usize().unwrap_or(0).min(g.n);
    let j = v.floor().to_usize().unwrap_or(0).min(g.n);
    let fu = u - T::from_usize_lossy(i);
    let fv = v - T::from_usize_lossy(j);
    crate::discrete_ops::bilinear(field.at(i, j), field.at(i + 1, j), field.at(i, j + 1), field.at(i + 1, j + 1), fu, fv)
}

/// Conductivity on the mesh: the square-domain field inside the square, 1 elsewhere.
pub fn sigma_on_mesh<T: Real>(mesh: &TriMesh<T>, field: &ScalarField<T>) -> MeshField<T> {
    MeshField::from_fn(mesh, |x, y| sample_field(field, x, y))
}

/// Solves every source of `ring` (in parallel) and samples traces for each grid.
///
/// Results are ordered by source index regardless of scheduling.
pub fn simulate<T: Real>(
    mesh: &TriMesh<T>,
    sigma: &MeshField<T>,
    domain: &DomainSpec<T>,
    grids: &[GridSpec<T>],
    ring: &SourceRing<T>,
) -> Result<Vec<BoundaryDataset<T>>> {
    let solver = ForwardSolver::new(mesh, sigma)?;
    let locator = PointLocator::new(mesh);
    let per_source: Vec<Vec<(Vec<T>, Vec<T>)>> = (0..ring.count)
        .into_par_iter()
        .map(|k| {
            let x0 = domain.source_point(ring.angle(k));
            let (v, stats) = solver.solve(x0, domain.xi)?;
            log::debug!(
                "source {k}: {} CG iterations, residual {:.2e}",
                stats.iterations,
                stats.relative_residual
            );
            grids.iter().map(|g| sample_traces(mesh, &locator, g, &v)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(grids
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let (h0, h1) = per_source.iter().map(|s| s[gi].clone()).unzip();
            BoundaryDataset { domain: *domain, grid: *g, ring: *ring, h0, h1 }
        })
        .collect())
}
