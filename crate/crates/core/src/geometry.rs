//! Measurement geometry: the concentric disks, the source ring and the
//! square imaging domain together with its uniform finite-difference grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Concentric-disk geometry around the square imaging domain.
///
/// The square has center `(a, b)` and half-side `c`; sources sit on the
/// circle of radius `big_b`, and the forward problem lives on the disk of
/// radius `big_d`. `xi` is the mollifier radius of each source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    #[serde(rename = "B")]
    pub big_b: T,
    #[serde(rename = "D")]
    pub big_d: T,
    pub xi: T,
}

/// Builds a domain and checks every containment invariant eagerly.
pub fn build_domain<T: Real>(a: T, b: T, c: T, big_b: T, big_d: T, xi: T) -> Result<DomainSpec<T>> {
    let spec = DomainSpec { a, b, c, big_b, big_d, xi };
    spec.validate()?;
    Ok(spec)
}

impl<T: Real> DomainSpec<T> {
    /// The configuration used for every reported experiment.
    pub fn paper_default() -> Self {
        Self {
            a: T::lit(1.5),
            b: T::lit(1.5),
            c: T::lit(0.5),
            big_b: T::lit(2.0),
            big_d: T::lit(3.0),
            xi: T::lit(0.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [self.a, self.b, self.c, self.big_b, self.big_d, self.xi];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("all parameters must be finite".into()));
        }
        if !(self.big_b > T::zero() && self.big_b < self.big_d) {
            return Err(Error::Geometry(format!(
                "0 < B < D violated (B = {}, D = {})",
                self.big_b, self.big_d
            )));
        }
        let corner = self.c * T::SQRT_2();
        if !(corner < self.big_b) {
            return Err(Error::Geometry(format!(
                "closed square not inside the source disk: c*sqrt(2) = {} >= B = {}",
                corner, self.big_b
            )));
        }
        if !(self.c > T::zero() && self.c < self.a) {
            return Err(Error::Geometry(format!(
                "0 < c < a violated (c = {}, a = {}): the closed square must avoid the line x = 0",
                self.c, self.a
            )));
        }
        if !(self.xi > T::zero() && self.xi < T::one()) {
            return Err(Error::Geometry(format!("0 < xi < 1 violated (xi = {})", self.xi)));
        }
        if !(self.big_b - corner > self.xi) {
            return Err(Error::Geometry(format!(
                "mollifier support meets the square: B - c*sqrt(2) = {} <= xi = {}",
                self.big_b - corner,
                self.xi
            )));
        }
        if !(self.big_b + self.xi < self.big_d) {
            return Err(Error::Geometry(format!(
                "mollifier support leaves the outer disk: B + xi = {} >= D = {}",
                self.big_b + self.xi,
                self.big_d
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> (T, T) {
        (self.a, self.b)
    }

    /// Source position on the ring for angle `theta`.
    pub fn source_point(&self, theta: T) -> (T, T) {
        (self.a + self.big_b * theta.cos(), self.b + self.big_b * theta.sin())
    }

    /// Euclidean distance from `(x, y)` to the closed square.
    pub fn distance_to_square(&self, x: T, y: T) -> T {
        let dx = ((x - self.a).abs() - self.c).max(T::zero());
        let dy = ((y - self.b).abs() - self.c).max(T::zero());
        (dx * dx + dy * dy).sqrt()
    }
}

/// Uniform grid on the closed square with `n` interior points per side.
///
/// Node `(i, j)`, `0 <= i, j <= n + 1`, sits at `origin + (i h, j h)`.
/// Values attached to the grid are stored with `i` (the x index) fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    pub n: usize,
    pub h: T,
    pub origin: (T, T),
}

pub fn build_grid<T: Real>(domain: &DomainSpec<T>, n: usize) -> Result<GridSpec<T>> {
    if n <= 4 {
        return Err(Error::Grid(format!("n must exceed 4 (got {n})")));
    }
    let h = T::lit(2.0) * domain.c / T::from_usize_lossy(n + 1);
    if !(h > T::zero() && h < T::one()) {
        return Err(Error::Grid(format!("grid step h = {h} outside (0, 1)")));
    }
    Ok(GridSpec { n, h, origin: (domain.a - domain.c, domain.b - domain.c) })
}

impl<T: Real> GridSpec<T> {
    /// Nodes per side, `n + 2`.
    #[inline]
    pub fn side(&self) -> usize {
        self.n + 2
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.side() + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        self.origin.0 + T::from_usize_lossy(i) * self.h
    }

    #[inline]
    pub fn y(&self, j: usize) -> T {
        self.origin.1 + T::from_usize_lossy(j) * self.h
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n + 1 || j == self.n + 1
    }

    /// Half-side of the square the grid covers.
    pub fn half_side(&self) -> T {
        self.h * T::from_usize_lossy(self.n + 1) / T::lit(2.0)
    }

    /// Boundary nodes in storage order (row by row, `i` fastest).
    pub fn boundary_nodes(&self) -> Vec<(usize, usize)> {
        let s = self.side();
        let mut out = Vec::with_capacity(4 * self.n + 4);
        for j in 0..s {
            for i in 0..s {
                if self.is_boundary(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Nodes `(n + 1, j)` on the right side of the square, `j = 0..=n+1`.
    pub fn gamma0_nodes(&self) -> Vec<(usize, usize)> {
        (0..self.side()).map(|j| (self.n + 1, j)).collect()
    }

    /// A grid with `fine_n` interior points covering the same square.
    pub fn refined(&self, fine_n: usize) -> Result<Self> {
        if fine_n <= 4 {
            return Err(Error::Grid(format!("n must exceed 4 (got {fine_n})")));
        }
        let width = self.h * T::from_usize_lossy(self.n + 1);
        Ok(Self { n: fine_n, h: width / T::from_usize_lossy(fine_n + 1), origin: self.origin })
    }
}

/// Equally spaced point sources on the ring circle.
///
/// Angles are `(first + k) * rho` for `k = 0..count`. A full ring has
/// `first = 1`; sub-rings cut from it keep the parent's indexing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceRing<T> {
    pub count: usize,
    pub rho: T,
    #[serde(default = "one_usize")]
    pub first: usize,
}

fn one_usize() -> usize {
    1
}

pub fn source_angles<T: Real>(count: usize, rho: T) -> Result<SourceRing<T>> {
    if count < 3 {
        return Err(Error::Ring(format!("at least 3 sources required (got {count})")));
    }
    if !(rho > T::zero()) {
        return Err(Error::Ring(format!("angular step must be positive (got {rho})")));
    }
    let span = T::from_usize_lossy(count) * rho;
    if !(span < T::TAU()) {
        return Err(Error::Ring(format!(
            "ring exceeds a full turn: M * rho = {span} is not < 2*pi"
        )));
    }
    Ok(SourceRing { count, rho, first: 1 })
}

impl<T: Real> SourceRing<T> {
    pub fn paper_default() -> Self {
        Self { count: 199, rho: T::PI() / T::lit(100.0), first: 1 }
    }

    /// Angle of the `k`-th source of this ring (0-based).
    #[inline]
    pub fn angle(&self, k: usize) -> T {
        T::from_usize_lossy(self.first + k) * self.rho
    }

    pub fn angles(&self) -> Vec<T> {
        (0..self.count).map(|k| self.angle(k)).collect()
    }

    /// 0-based index of the source whose angle equals `theta` to within
    /// a thousandth of the step.
    pub fn index_of(&self, theta: T) -> Option<usize> {
        let tol = self.rho * T::lit(1e-3);
        (0..self.count).find(|&k| (self.angle(k) - theta).abs() <= tol)
    }

    /// 0-based index of the source nearest to `theta`.
    pub fn nearest_index(&self, theta: T) -> usize {
        let mut best = 0;
        let mut dist = T::infinity();
        for k in 0..self.count {
            let d = (self.angle(k) - theta).abs();
            if d < dist {
                dist = d;
                best = k;
            }
        }
        best
    }

    /// Three-source window centered on source `k`.
    ///
    /// The window reproduces the periodic central difference of the full ring
    /// at its middle source, so single-angle reconstructions need only three
    /// forward solves. Sources within `seam_margin` steps of the wrap seam
    /// are refused.
    pub fn window(&self, k: usize, seam_margin: usize) -> Result<Self> {
        if k < seam_margin || k + seam_margin >= self.count {
            return Err(Error::Ring(format!(
                "source {k} lies within {seam_margin} steps of the ring seam"
            )));
        }
        Ok(Self { count: 3, rho: self.rho, first: self.first + k - 1 })
    }
}
