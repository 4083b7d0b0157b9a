//! Finite-difference stencils, rectangle-rule quadrature and the discrete
//! `L2` / `H2` norms on a [`GridSpec`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::real::Real;

/// Nodal values on every node of a grid, `i` (x index) fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField<T> {
    pub grid: GridSpec<T>,
    pub values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: GridSpec<T>) -> Self {
        Self { grid, values: vec![T::zero(); grid.len()] }
    }

    pub fn constant(grid: GridSpec<T>, value: T) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn from_values(grid: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("field values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: GridSpec<T>, mut f: impl FnMut(T, T) -> T) -> Self {
        let s = grid.side();
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..s {
            let y = grid.y(j);
            for i in 0..s {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(T, T) -> T) -> Self {
        debug_assert_eq!(self.values.len(), other.values.len());
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Copy with every boundary node set to zero.
    pub fn interior_only(&self) -> Self {
        let mut out = self.clone();
        let s = self.grid.side();
        for j in 0..s {
            for i in 0..s {
                if self.grid.is_boundary(i, j) {
                    out.set(i, j, T::zero());
                }
            }
        }
        out
    }
}

/// Bilinear blend of a cell's corner values; exact on constants.
#[inline]
pub fn bilinear<T: Real>(f00: T, f10: T, f01: T, f11: T, fu: T, fv: T) -> T {
    let lo = f00 + fu * (f10 - f00);
    let hi = f01 + fu * (f11 - f01);
    lo + fv * (hi - lo)
}

/// Discrete gradient at interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T> {
    pub dx: ScalarField<T>,
    pub dy: ScalarField<T>,
}

pub fn gradient<T: Real>(f: &ScalarField<T>) -> VectorField<T> {
    VectorField { dx: fd_apply(f, Stencil::D1x), dy: fd_apply(f, Stencil::D1y) }
}

/// Central difference stencils evaluated at interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stencil {
    D1x,
    D1y,
    D2x,
    D2y,
    Dxy,
    Laplacian,
}

impl Stencil {
    pub const ALL: [Stencil; 6] =
        [Stencil::D1x, Stencil::D1y, Stencil::D2x, Stencil::D2y, Stencil::Dxy, Stencil::Laplacian];

    /// Nonzero taps `(di, dj, weight)` with the weight already divided by
    /// the appropriate power of `h`.
    pub fn taps<T: Real>(self, h: T) -> Vec<(isize, isize, T)> {
        let two = T::lit(2.0);
        let h2 = h * h;
        match self {
            Stencil::D1x => vec![(1, 0, T::one() / (two * h)), (-1, 0, -T::one() / (two * h))],
            Stencil::D1y => vec![(0, 1, T::one() / (two * h)), (0, -1, -T::one() / (two * h))],
            Stencil::D2x => vec![(1, 0, T::one() / h2), (0, 0, -two / h2), (-1, 0, T::one() / h2)],
            Stencil::D2y => vec![(0, 1, T::one() / h2), (0, 0, -two / h2), (0, -1, T::one() / h2)],
            Stencil::Dxy => {
                let w = T::one() / (T::lit(4.0) * h2);
                vec![(1, 1, w), (1, -1, -w), (-1, 1, -w), (-1, -1, w)]
            }
            Stencil::Laplacian => vec![
                (1, 0, T::one() / h2),
                (-1, 0, T::one() / h2),
                (0, 1, T::one() / h2),
                (0, -1, T::one() / h2),
                (0, 0, -T::lit(4.0) / h2),
            ],
        }
    }
}

/// Value of stencil `op` at the interior node `(i, j)`.
#[inline]
pub fn stencil_at<T: Real>(f: &ScalarField<T>, op: Stencil, i: usize, j: usize) -> T {
    let h = f.grid.h;
    let v = |di: isize, dj: isize| f.at((i as isize + di) as usize, (j as isize + dj) as usize);
    let two = T::lit(2.0);
    match op {
        Stencil::D1x => (v(1, 0) - v(-1, 0)) / (two * h),
        Stencil::D1y => (v(0, 1) - v(0, -1)) / (two * h),
        Stencil::D2x => (v(1, 0) - two * v(0, 0) + v(-1, 0)) / (h * h),
        Stencil::D2y => (v(0, 1) - two * v(0, 0) + v(0, -1)) / (h * h),
        Stencil::Dxy => (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1)) / (T::lit(4.0) * h * h),
        Stencil::Laplacian => {
            (v(1, 0) + v(-1, 0) + v(0, 1) + v(0, -1) - T::lit(4.0) * v(0, 0)) / (h * h)
        }
    }
}

/// Applies `op` at every interior node; boundary entries of the result are zero.
pub fn fd_apply<T: Real>(f: &ScalarField<T>, op: Stencil) -> ScalarField<T> {
    let mut out = ScalarField::zeros(f.grid);
    let n = f.grid.n;
    for j in 1..=n {
        for i in 1..=n {
            out.set(i, j, stencil_at(f, op, i, j));
        }
    }
    out
}

/// Second-order one-sided x-derivative at the right-side node `(n + 1, j)`.
#[inline]
pub fn one_sided_dx<T: Real>(f: &ScalarField<T>, j: usize) -> T {
    let n = f.grid.n;
    (T::lit(3.0) * f.at(n + 1, j) - T::lit(4.0) * f.at(n, j) + f.at(n - 1, j))
        / (T::lit(2.0) * f.grid.h)
}

/// Rectangle rule over all nodes: `h^2 * sum f`.
///
/// The integrand is used as given; callers square it where a squared
/// integrand is meant.
pub fn rect_quad<T: Real>(f: &ScalarField<T>) -> T {
    let h = f.grid.h;
    h * h * f.values.iter().copied().sum::<T>()
}

pub fn norm_l2h_sq<T: Real>(f: &ScalarField<T>) -> T {
    let h = f.grid.h;
    h * h * f.values.iter().map(|&v| v * v).sum::<T>()
}

pub fn norm_l2h<T: Real>(f: &ScalarField<T>) -> T {
    norm_l2h_sq(f).sqrt()
}

/// Squared discrete `H2` norm: the `L2` part plus first and second
/// differences (including the mixed one) summed over interior nodes.
pub fn norm_h2h_sq<T: Real>(f: &ScalarField<T>) -> T {
    let h = f.grid.h;
    let n = f.grid.n;
    let mut acc = T::zero();
    for j in 1..=n {
        for i in 1..=n {
            for op in [Stencil::D1x, Stencil::D1y, Stencil::D2x, Stencil::Dxy, Stencil::D2y] {
                let d = stencil_at(f, op, i, j);
                acc += d * d;
            }
        }
    }
    norm_l2h_sq(f) + h * h * acc
}

pub fn norm_h2h<T: Real>(f: &ScalarField<T>) -> T {
    norm_h2h_sq(f).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> GridSpec<f64> {
        build_grid(&DomainSpec::paper_default(), n).unwrap()
    }

    fn interior_max_err(f: &ScalarField<f64>, exact: impl Fn(f64, f64) -> f64) -> f64 {
        let g = f.grid;
        let mut e: f64 = 0.0;
        for j in 1..=g.n {
            for i in 1..=g.n {
                e = e.max((f.at(i, j) - exact(g.x(i), g.y(j))).abs());
            }
        }
        e
    }

    #[test]
    fn exact_on_quadratics() {
        let g = grid(9);
        let f = ScalarField::from_fn(g, |x, _| x * x);
        assert!(interior_max_err(&fd_apply(&f, Stencil::D2x), |_, _| 2.0) < 1e-10);
        assert!(interior_max_err(&fd_apply(&f, Stencil::D1x), |x, _| 2.0 * x) < 1e-12);
        assert!(interior_max_err(&fd_apply(&f, Stencil::Laplacian), |_, _| 2.0) < 1e-10);
        let f = ScalarField::from_fn(g, |x, y| x * y);
        assert!(interior_max_err(&fd_apply(&f, Stencil::Dxy), |_, _| 1.0) < 1e-11);
    }

    #[test]
    fn d2x_second_order() {
        let err = |n| {
            let g = grid(n);
            let f = ScalarField::from_fn(g, |x, _| (PI * x).sin());
            interior_max_err(&fd_apply(&f, Stencil::D2x), |x, _| -PI * PI * (PI * x).sin())
        };
        let (e1, e2) = (err(9), err(19));
        let order = (e1 / e2).log2();
        assert!((1.9..=2.1).contains(&order), "order {order}");
    }

    #[test]
    fn one_sided_derivative() {
        let g = grid(9);
        let f = ScalarField::constant(g, 3.7);
        assert!(one_sided_dx(&f, 4).abs() < 1e-12);
        let f = ScalarField::from_fn(g, |x, _| x);
        for j in 0..g.side() {
            assert!((one_sided_dx(&f, j) - 1.0).abs() < 1e-12);
        }
        let err = |n| {
            let g = grid(n);
            let f = ScalarField::from_fn(g, |x, _| x * x * x);
            (one_sided_dx(&f, 3) - 3.0 * 4.0).abs()
        };
        let order = (err(9) / err(19)).log2();
        assert!((1.9..=2.1).contains(&order), "order {order}");
        // x^2 is reproduced exactly by the three-point formula.
        let g = grid(9);
        let f = ScalarField::from_fn(g, |x, _| x * x);
        assert!((one_sided_dx(&f, 2) - 4.0).abs() < 1e-11);
    }

    #[test]
    fn quadrature_of_unity_counts_all_nodes() {
        let g = grid(9);
        let q = rect_quad(&ScalarField::constant(g, 1.0));
        assert!((q - 1.21).abs() < 1e-12);
        assert_eq!(rect_quad(&ScalarField::zeros(g)), 0.0);
    }

    #[test]
    fn quadrature_first_order() {
        // integral over [1,2]^2 of sin(pi (x-1)) sin(pi (y-1)) = 4 / pi^2, plus an
        // offset so boundary samples are nonzero.
        let exact = 4.0 / (PI * PI) + 1.0;
        let err = |n| {
            let g = grid(n);
            let f = ScalarField::from_fn(g, |x, y| (PI * (x - 1.0)).sin() * (PI * (y - 1.0)).sin() + 1.0);
            (rect_quad(&f) - exact).abs()
        };
        let ratio = err(19) / err(39);
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn norms_of_constants_and_zero() {
        let g = grid(9);
        let one = ScalarField::constant(g, 1.0);
        assert!((norm_l2h(&one) - 0.1 * 11.0).abs() < 1e-12);
        assert!((norm_h2h(&one) - norm_l2h(&one)).abs() < 1e-12);
        let z = ScalarField::zeros(g);
        assert_eq!((norm_l2h(&z), norm_h2h(&z)), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn stencils_are_linear(seed in 0u64..1000, al in -3.0f64..3.0, be in -3.0f64..3.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = grid(7);
            let f = ScalarField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
            let k = ScalarField::from_fn(g, |_, _| rng.gen_range(-1.0..1.0));
            let comb = f.zip_map(&k, |a, b| al * a + be * b);
            for op in Stencil::ALL {
                let lhs = fd_apply(&comb, op);
                let rhs = fd_apply(&f, op).zip_map(&fd_apply(&k, op), |a, b| al * a + be * b);
                let scale = 1.0 + lhs.max_abs();
                for (a, b) in lhs.values.iter().zip(&rhs.values) {
                    prop_assert!((a - b).abs() <= 1e-12 * scale);
                }
            }
        }

        #[test]
        fn norm_ordering(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let f = ScalarField::from_fn(grid(6), |_, _| rng.gen_range(-1.0..1.0));
            prop_assert!(norm_h2h(&f) >= norm_l2h(&f));
            prop_assert!(norm_l2h(&f) > 0.0);
        }
    }

    #[test]
    fn second_differences_commute_away_from_boundary() {
        let g = grid(11);
        let f = ScalarField::from_fn(g, |x, y| (3.0 * x).sin() * (x * y).exp());
        let a = fd_apply(&fd_apply(&f, Stencil::D2x), Stencil::D2y);
        let b = fd_apply(&fd_apply(&f, Stencil::D2y), Stencil::D2x);
        for j in 2..g.n {
            for i in 2..g.n {
                assert!((a.at(i, j) - b.at(i, j)).abs() < 1e-6 * (1.0 + a.at(i, j).abs()));
            }
        }
    }
}
