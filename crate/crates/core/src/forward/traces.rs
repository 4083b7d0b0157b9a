use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, GridSpec, SourceRing};
use crate::real::Real;

use super::mesh::{MeshField, PointLocator, TriMesh};

/// Voltage and normal-current traces for every source of a ring.
///
/// `h0[m]` lists the voltage at the boundary nodes of `grid` in
/// [`GridSpec::boundary_nodes`] order; `h1[m]` lists the x-derivative at the
/// right-side nodes `(n + 1, j)`, `j = 0..=n+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDataset<T> {
    pub domain: DomainSpec<T>,
    pub grid: GridSpec<T>,
    pub ring: SourceRing<T>,
    pub h0: Vec<Vec<T>>,
    pub h1: Vec<Vec<T>>,
}

#[derive(Serialize, Deserialize)]
struct Header<T> {
    domain: DomainSpec<T>,
    grid: GridSpec<T>,
    ring: SourceRing<T>,
}

const MAGIC: &[u8; 8] = b"CEITBND1";

impl<T: Real + Serialize + for<'de> Deserialize<'de>> BoundaryDataset<T> {
    pub fn validate(&self) -> Result<()> {
        let nb = 4 * self.grid.n + 4;
        let ng = self.grid.n + 2;
        if self.h0.len() != self.ring.count || self.h1.len() != self.ring.count {
            return Err(Error::Shape(format!(
                "{} / {} trace blocks for {} sources",
                self.h0.len(),
                self.h1.len(),
                self.ring.count
            )));
        }
        for (m, (a, b)) in self.h0.iter().zip(&self.h1).enumerate() {
            if a.len() != nb || b.len() != ng {
                return Err(Error::Shape(format!(
                    "source {m}: trace lengths ({}, {}) expected ({nb}, {ng})",
                    a.len(),
                    b.len()
                )));
            }
        }
        Ok(())
    }

    /// Binary layout: magic, little-endian `u64` header length, JSON header
    /// (domain, grid, ring), then per source the `h0` block followed by the
    /// `h1` block as little-endian `f64`.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        self.validate()?;
        let header = serde_json::to_vec(&Header { domain: self.domain, grid: self.grid, ring: self.ring })?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for (a, b) in self.h0.iter().zip(&self.h1) {
            for v in a.iter().chain(b) {
                w.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a boundary dataset (bad magic)".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 20 {
            return Err(Error::Format(format!("implausible header length {len}")));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let Header { domain, grid, ring } = serde_json::from_slice::<Header<T>>(&header)?;
        let nb = 4 * grid.n + 4;
        let ng = grid.n + 2;
        let mut read_block = |k: usize| -> Result<Vec<T>> {
            let mut out = Vec::with_capacity(k);
            let mut buf = [0u8; 8];
            for _ in 0..k {
                r.read_exact(&mut buf)?;
                out.push(T::lit(f64::from_le_bytes(buf)));
            }
            Ok(out)
        };
        let mut h0 = Vec::with_capacity(ring.count);
        let mut h1 = Vec::with_capacity(ring.count);
        for _ in 0..ring.count {
            h0.push(read_block(nb)?);
            h1.push(read_block(ng)?);
        }
        Ok(Self { domain, grid, ring, h0, h1 })
    }
}

/// Area-weighted average of the P1 gradients of the triangles around each vertex.
pub fn vertex_gradients<T: Real>(mesh: &TriMesh<T>, v: &MeshField<T>) -> Vec<(T, T)> {
    let mut acc = vec![(T::zero(), T::zero()); mesh.vertices.len()];
    let mut weight = vec![T::zero(); mesh.vertices.len()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let g = mesh.shape_gradients(t);
        let (mut gx, mut gy) = (T::zero(), T::zero());
        for k in 0..3 {
            gx += v.values[tri[k]] * g[k].0;
            gy += v.values[tri[k]] * g[k].1;
        }
        let area = mesh.area(t);
        for &k in tri {
            acc[k].0 += area * gx;
            acc[k].1 += area * gy;
            weight[k] += area;
        }
    }
    acc.iter().zip(&weight).map(|(&(x, y), &w)| (x / w, y / w)).collect()
}

/// Samples the traces of one solution at the grid's boundary nodes.
///
/// Returns `(h0, h1)`: barycentric interpolation of `v` on the whole
/// boundary and of the recovered vertex gradient's x-component on the right side.
pub fn sample_traces<T: Real>(
    mesh: &TriMesh<T>,
    locator: &PointLocator<T>,
    grid: &GridSpec<T>,
    v: &MeshField<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let locate = |i: usize, j: usize| {
        let (x, y) = (grid.x(i), grid.y(j));
        locator
            .locate(mesh, x, y)
            .ok_or(Error::PointLocation { x: x.as_f64(), y: y.as_f64() })
    };
    let mut h0 = Vec::with_capacity(4 * grid.n + 4);
    for (i, j) in grid.boundary_nodes() {
        let (t, lam) = locate(i, j)?;
        let tri = mesh.triangles[t];
        h0.push((0..3).map(|k| lam[k] * v.values[tri[k]]).sum());
    }
    let grads = vertex_gradients(mesh, v);
    let mut h1 = Vec::with_capacity(grid.n + 2);
    for (i, j) in grid.gamma0_nodes() {
        let (t, lam) = locate(i, j)?;
        let tri = mesh.triangles[t];
        h1.push((0..3).map(|k| lam[k] * grads[tri[k]].0).sum());
    }
    Ok((h0, h1))
}

/// Builds the dataset from one forward solution per ring source.
pub fn extract_traces<T: Real>(
    solutions: &[MeshField<T>],
    mesh: &TriMesh<T>,
    domain: &DomainSpec<T>,
    grid: &GridSpec<T>,
    ring: &SourceRing<T>,
) -> Result<BoundaryDataset<T>> {
    if solutions.len() != ring.count {
        return Err(Error::Shape(format!(
            "{} solutions for a ring of {} sources",
            solutions.len(),
            ring.count
        )));
    }
    let locator = PointLocator::new(mesh);
    let mut h0 = Vec::with_capacity(ring.count);
    let mut h1 = Vec::with_capacity(ring.count);
    for v in solutions {
        let (a, b) = sample_traces(mesh, &locator, grid, v)?;
        h0.push(a);
        h1.push(b);
    }
    Ok(BoundaryDataset { domain: *domain, grid: *grid, ring: *ring, h0, h1 })
}
