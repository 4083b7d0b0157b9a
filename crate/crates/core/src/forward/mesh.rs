use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::real::Real;

/// Conforming triangulation of the outer disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriMesh<T> {
    pub vertices: Vec<(T, T)>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    pub target_edge: T,
}

/// Piecewise-linear field, one value per mesh vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshField<T> {
    pub values: Vec<T>,
}

impl<T: Real> MeshField<T> {
    pub fn constant(mesh: &TriMesh<T>, v: T) -> Self {
        Self { values: vec![v; mesh.vertices.len()] }
    }

    pub fn from_fn(mesh: &TriMesh<T>, mut f: impl FnMut(T, T) -> T) -> Self {
        Self { values: mesh.vertices.iter().map(|&(x, y)| f(x, y)).collect() }
    }
}

/// Triangulates the disk of radius `D` by concentric rings.
///
/// Ring `k` has radius `k D / K` with `K = ceil(D / (sqrt(3)/2 * edge))` and
/// about `2 pi r_k / edge` equally spaced vertices; alternate rings are
/// rotated by half a step. Neighbouring rings are stitched by an angular
/// merge, which keeps the mesh conforming.
pub fn triangulate_disk<T: Real>(domain: &DomainSpec<T>, target_edge: T) -> Result<TriMesh<T>> {
    let radius = domain.big_d;
    if !(target_edge > T::zero() && target_edge < radius) {
        return Err(Error::Mesh(format!(
            "target edge {target_edge} must lie in (0, D = {radius})"
        )));
    }
    let (cx, cy) = domain.center();
    let ring_gap = target_edge * T::lit(3f64.sqrt() / 2.0);
    let rings = (radius / ring_gap).ceil().to_usize().unwrap_or(1).max(1);
    let dr = radius / T::from_usize_lossy(rings);

    let mut vertices = vec![(cx, cy)];
    let mut boundary = vec![false];
    // (start index, count, angular offset) per ring; ring 0 is the center.
    let mut layout: Vec<(usize, usize, T)> = vec![(0, 1, T::zero())];
    for k in 1..=rings {
        let r = dr * T::from_usize_lossy(k);
        let count = (T::TAU() * r / target_edge).round().to_usize().unwrap_or(6).max(6);
        let step = T::TAU() / T::from_usize_lossy(count);
        let offset = if k % 2 == 1 { step / T::lit(2.0) } else { T::zero() };
        let start = vertices.len();
        for m in 0..count {
            let phi = offset + step * T::from_usize_lossy(m);
            let (x, y) = if k == rings {
                (cx + radius * phi.cos(), cy + radius * phi.sin())
            } else {
                (cx + r * phi.cos(), cy + r * phi.sin())
            };
            vertices.push((x, y));
            boundary.push(k == rings);
        }
        layout.push((start, count, offset));
    }

    let mut triangles = Vec::new();
    // Fan around the center.
    let (s1, c1, _) = layout[1];
    for m in 0..c1 {
        triangles.push([0, s1 + m, s1 + (m + 1) % c1]);
    }
    for k in 1..rings {
        let (sa, na, oa) = layout[k];
        let (sb, nb, ob) = layout[k + 1];
        let step_a = T::TAU() / T::from_usize_lossy(na);
        let step_b = T::TAU() / T::from_usize_lossy(nb);
        let (mut ia, mut ib) = (0usize, 0usize);
        while ia < na || ib < nb {
            let next_a = oa + step_a * T::from_usize_lossy(ia + 1);
            let next_b = ob + step_b * T::from_usize_lossy(ib + 1);
            let advance_a = if ia == na {
                false
            } else if ib == nb {
                true
            } else {
                next_a <= next_b
            };
            let va = sa + ia % na;
            let vb = sb + ib % nb;
            if advance_a {
                triangles.push([va, sa + (ia + 1) % na, vb]);
                ia += 1;
            } else {
                triangles.push([va, vb, sb + (ib + 1) % nb]);
                ib += 1;
            }
        }
    }
    for t in &mut triangles {
        if signed_area(&vertices, *t) < T::zero() {
            t.swap(1, 2);
        }
    }
    Ok(TriMesh { vertices, triangles, boundary, target_edge })
}

#[inline]
pub(crate) fn signed_area<T: Real>(v: &[(T, T)], t: [usize; 3]) -> T {
    let (x0, y0) = v[t[0]];
    let (x1, y1) = v[t[1]];
    let (x2, y2) = v[t[2]];
    ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)) / T::lit(2.0)
}

impl<T: Real> TriMesh<T> {
    pub fn area(&self, t: usize) -> T {
        signed_area(&self.vertices, self.triangles[t])
    }

    pub fn total_area(&self) -> T {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    pub fn max_edge(&self) -> T {
        let mut m = T::zero();
        for t in &self.triangles {
            for e in 0..3 {
                let (x0, y0) = self.vertices[t[e]];
                let (x1, y1) = self.vertices[t[(e + 1) % 3]];
                m = m.max(((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0)).sqrt());
            }
        }
        m
    }

    /// Gradients of the three barycentric coordinates of triangle `t`.
    pub fn shape_gradients(&self, t: usize) -> [(T, T); 3] {
        let tri = self.triangles[t];
        let two_area = T::lit(2.0) * self.area(t);
        let mut g = [(T::zero(), T::zero()); 3];
        for (k, gk) in g.iter_mut().enumerate() {
            let (_, y1) = self.vertices[tri[(k + 1) % 3]];
            let (_, y2) = self.vertices[tri[(k + 2) % 3]];
            let (x1, _) = self.vertices[tri[(k + 1) % 3]];
            let (x2, _) = self.vertices[tri[(k + 2) % 3]];
            *gk = ((y1 - y2) / two_area, (x2 - x1) / two_area);
        }
        g
    }
}

/// Uniform bucket grid over triangle bounding boxes for point location.
#[derive(Debug, Clone)]
pub struct PointLocator<T> {
    origin: (T, T),
    cell: T,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl<T: Real> PointLocator<T> {
    pub fn new(mesh: &TriMesh<T>) -> Self {
        let (mut xmin, mut ymin) = (T::infinity(), T::infinity());
        let (mut xmax, mut ymax) = (T::neg_infinity(), T::neg_infinity());
        for &(x, y) in &mesh.vertices {
            xmin = xmin.min(x);
            ymin = ymin.min(y);
            xmax = xmax.max(x);
            ymax = ymax.max(y);
        }
        let cell = mesh.target_edge * T::lit(2.0);
        let nx = ((xmax - xmin) / cell).ceil().to_usize().unwrap_or(1).max(1);
        let ny = ((ymax - ymin) / cell).ceil().to_usize().unwrap_or(1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        let clampi = |v: T, n: usize| -> usize { v.floor().max(T::zero()).to_usize().unwrap_or(0).min(n - 1) };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let xs = tri.map(|v| mesh.vertices[v].0);
            let ys = tri.map(|v| mesh.vertices[v].1);
            let bx0 = clampi((xs[0].min(xs[1]).min(xs[2]) - xmin) / cell, nx);
            let bx1 = clampi((xs[0].max(xs[1]).max(xs[2]) - xmin) / cell, nx);
            let by0 = clampi((ys[0].min(ys[1]).min(ys[2]) - ymin) / cell, ny);
            let by1 = clampi((ys[0].max(ys[1]).max(ys[2]) - ymin) / cell, ny);
            for by in by0..=by1 {
                for bx in bx0..=bx1 {
                    buckets[by * nx + bx].push(t);
                }
            }
        }
        Self { origin: (xmin, ymin), cell, nx, ny, buckets }
    }

    /// Triangle containing `(x, y)` and the barycentric coordinates there.
    pub fn locate(&self, mesh: &TriMesh<T>, x: T, y: T) -> Option<(usize, [T; 3])> {
        let fx = ((x - self.origin.0) / self.cell).floor();
        let fy = ((y - self.origin.1) / self.cell).floor();
        if fx < T::zero() || fy < T::zero() {
            return None;
        }
        let (bx, by) = (fx.to_usize()?, fy.to_usize()?);
        if bx >= self.nx || by >= self.ny {
            return None;
        }
        let tol = T::lit(-1e-12);
        for &t in &self.buckets[by * self.nx + bx] {
            let lam = barycentric(mesh, t, x, y);
            if lam.iter().all(|&l| l >= tol) {
                return Some((t, lam));
            }
        }
        None
    }
}

pub(crate) fn barycentric<T: Real>(mesh: &TriMesh<T>, t: usize, x: T, y: T) -> [T; 3] {
    let tri = mesh.triangles[t];
    let (x0, y0) = mesh.vertices[tri[0]];
    let (x1, y1) = mesh.vertices[tri[1]];
    let (x2, y2) = mesh.vertices[tri[2]];
    let det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    let l1 = ((x - x0) * (y2 - y0) - (x2 - x0) * (y - y0)) / det;
    let l2 = ((x1 - x0) * (y - y0) - (x - x0) * (y1 - y0)) / det;
    [T::one() - l1 - l2, l1, l2]
}
