//! Boundary data of the `(q, p)` system.
//!
//! With `psi = ln V` and `V = v` near the boundary, the Dirichlet trace of
//! `psi` is `ln h0` and its x-derivative on the right side is `h1 / h0`.
//! Differentiating in the source angle eliminates the unknown coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::BoundaryDataset;
use crate::geometry::SourceRing;
use crate::real::Real;

/// Per-angle logarithmic traces: `s0` on all boundary nodes, `s1` on the right side.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTraces<T> {
    pub s0: Vec<Vec<T>>,
    pub s1: Vec<Vec<T>>,
}

/// Dirichlet and Neumann data of `q` and `p` at one source angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QPBoundary<T> {
    pub theta0: T,
    pub q_dirichlet: Vec<T>,
    pub q_neumann: Vec<T>,
    pub p_dirichlet: Vec<T>,
    pub p_neumann: Vec<T>,
    pub epsilon: T,
}

pub fn log_traces<T: Real>(data: &BoundaryDataset<T>) -> Result<LogTraces<T>> {
    let mut s0 = Vec::with_capacity(data.h0.len());
    let mut s1 = Vec::with_capacity(data.h0.len());
    for (m, (h0, h1)) in data.h0.iter().zip(&data.h1).enumerate() {
        if let Some(node) = h0.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::DataIntegrity { node, angle: m, value: h0[node].as_f64() });
        }
        s0.push(h0.iter().map(|v| v.ln()).collect());
        // The Neumann side is the last column of boundary nodes, i = n + 1.
        let side: Vec<T> = data
            .grid
            .boundary_nodes()
            .iter()
            .zip(h0)
            .filter(|((i, _), _)| *i == data.grid.n + 1)
            .map(|(_, &v)| v)
            .collect();
        if side.len() != h1.len() {
            return Err(Error::Shape(format!("h1 has {} entries, side has {}", h1.len(), side.len())));
        }
        s1.push(h1.iter().zip(&side).map(|(&g, &v)| g / v).collect());
    }
    Ok(LogTraces { s0, s1 })
}

/// Periodic central difference in the source angle.
///
/// Index `M` wraps to `0`; on a ring that spans less than a full turn the
/// two seam angles are therefore inconsistent and should not be used.
pub fn theta_derivative<T: Real>(traces: &LogTraces<T>, ring: &SourceRing<T>) -> Result<LogTraces<T>> {
    let m = traces.s0.len();
    if m < 3 || traces.s1.len() != m {
        return Err(Error::Ring(format!("theta derivative needs at least 3 angles, got {m}")));
    }
    if m != ring.count {
        return Err(Error::Shape(format!("{m} trace blocks for a ring of {}", ring.count)));
    }
    let scale = T::one() / (T::lit(2.0) * ring.rho);
    let diff = |blocks: &[Vec<T>]| -> Vec<Vec<T>> {
        (0..m)
            .map(|k| {
                let next = &blocks[(k + 1) % m];
                let prev = &blocks[(k + m - 1) % m];
                next.iter().zip(prev).map(|(&a, &b)| (a - b) * scale).collect()
            })
            .collect()
    };
    Ok(LogTraces { s0: diff(&traces.s0), s1: diff(&traces.s1) })
}

/// Boundary conditions of `(q, p)` at the ring angle `theta0`.
pub fn qp_boundary<T: Real>(
    traces: &LogTraces<T>,
    dtraces: &LogTraces<T>,
    ring: &SourceRing<T>,
    theta0: T,
    epsilon: T,
) -> Result<QPBoundary<T>> {
    let k = ring
        .index_of(theta0)
        .ok_or_else(|| Error::Ring(format!("theta0 = {theta0} is not a ring angle")))?;
    qp_boundary_at(traces, dtraces, ring, k, epsilon)
}

/// As [`qp_boundary`], addressing the angle by its ring index.
pub fn qp_boundary_at<T: Real>(
    traces: &LogTraces<T>,
    dtraces: &LogTraces<T>,
    ring: &SourceRing<T>,
    k: usize,
    epsilon: T,
) -> Result<QPBoundary<T>> {
    if k >= traces.s0.len() || k >= dtraces.s0.len() {
        return Err(Error::Ring(format!("angle index {k} out of range")));
    }
    let shift = |d: &[T], s: &[T]| d.iter().zip(s).map(|(&a, &b)| a - epsilon * b).collect();
    Ok(QPBoundary {
        theta0: ring.angle(k),
        q_dirichlet: dtraces.s0[k].clone(),
        q_neumann: dtraces.s1[k].clone(),
        p_dirichlet: shift(&dtraces.s0[k], &traces.s0[k]),
        p_neumann: shift(&dtraces.s1[k], &traces.s1[k]),
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, source_angles, DomainSpec};
    use proptest::prelude::*;
    use std::f64::consts::{E, PI};

    fn dataset(n: usize, count: usize, h0: impl Fn(usize, usize) -> f64, h1: impl Fn(usize, usize) -> f64) -> BoundaryDataset<f64> {
        let domain = DomainSpec::paper_default();
        let grid = build_grid(&domain, n).unwrap();
        let ring = source_angles(count, 2.0 * PI / (count as f64 + 1.0)).unwrap();
        BoundaryDataset {
            domain,
            grid,
            ring,
            h0: (0..count).map(|m| (0..4 * n + 4).map(|k| h0(m, k)).collect()).collect(),
            h1: (0..count).map(|m| (0..n + 2).map(|k| h1(m, k)).collect()).collect(),
        }
    }

    #[test]
    fn log_of_unity_and_closed_form() {
        let d = dataset(5, 4, |_, _| 1.0, |_, _| 0.0);
        let t = log_traces(&d).unwrap();
        assert!(t.s0.iter().flatten().chain(t.s1.iter().flatten()).all(|&v| v == 0.0));
        let d = dataset(5, 4, |_, _| E * E, |_, _| 2.0 * E * E);
        let t = log_traces(&d).unwrap();
        assert!(t.s0.iter().flatten().all(|&v| (v - 2.0).abs() < 1e-15));
        assert!(t.s1.iter().flatten().all(|&v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn nonpositive_voltage_is_reported() {
        let d = dataset(5, 4, |m, k| if m == 2 && k == 7 { -0.5 } else { 1.0 }, |_, _| 0.0);
        match log_traces(&d) {
            Err(Error::DataIntegrity { node: 7, angle: 2, value }) => assert_eq!(value, -0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exp_round_trip() {
        let d = dataset(7, 5, |m, k| 0.1 + 0.37 * m as f64 + 0.011 * k as f64, |_, _| 1.0);
        let t = log_traces(&d).unwrap();
        for (a, b) in t.s0.iter().flatten().zip(d.h0.iter().flatten()) {
            assert!((a.exp() - b).abs() <= 1e-14 * b);
        }
    }

    #[test]
    fn sine_derivative_error_bound() {
        let rho = PI / 100.0;
        // M = 200 equally spaced angles over the full turn so the sine is periodic.
        let ring200 = SourceRing { count: 200, rho, first: 1 };
        let s = |th: f64| vec![th.sin()];
        let t = LogTraces { s0: (0..200).map(|k| s(ring200.angle(k))).collect(), s1: vec![vec![0.0]; 200] };
        let d = theta_derivative(&t, &ring200).unwrap();
        let worst = (0..200).map(|k| (d.s0[k][0] - ring200.angle(k).cos()).abs()).fold(0.0, f64::max);
        assert!(worst <= rho * rho / 6.0 * 1.01, "{worst}");
    }

    #[test]
    fn linear_in_index_is_exact_away_from_seam() {
        let ring = source_angles(10, 0.5).unwrap();
        let t = LogTraces { s0: (0..10).map(|k| vec![3.0 * k as f64]).collect(), s1: vec![vec![1.0]; 10] };
        let d = theta_derivative(&t, &ring).unwrap();
        for k in 1..9 {
            assert!((d.s0[k][0] - 3.0 / 0.5).abs() < 1e-12);
        }
        assert!((d.s0[0][0] - 3.0 / 0.5).abs() > 1.0);
        assert!((d.s0[9][0] - 3.0 / 0.5).abs() > 1.0);
        assert!(d.s1.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn too_few_angles_rejected() {
        let ring = source_angles(3, 0.5).unwrap();
        let t = LogTraces { s0: vec![vec![1.0]; 2], s1: vec![vec![1.0]; 2] };
        assert!(theta_derivative(&t, &ring).is_err());
    }

    #[test]
    fn boundary_formulas() {
        let ring = source_angles(6, 0.5).unwrap();
        let t = LogTraces { s0: vec![vec![2.0, -1.0]; 6], s1: vec![vec![0.5]; 6] };
        let d = theta_derivative(&t, &ring).unwrap();
        let eps = 0.0002;
        let b = qp_boundary(&t, &d, &ring, 1.5, eps).unwrap();
        assert_eq!(b.q_dirichlet, vec![0.0, 0.0]);
        assert_eq!(b.p_dirichlet, vec![-eps * 2.0, eps]);
        let b0 = qp_boundary(&t, &d, &ring, 1.5, 0.0).unwrap();
        assert_eq!(b0.p_dirichlet, b0.q_dirichlet);
        assert_eq!(b0.p_neumann, b0.q_neumann);
        assert!(qp_boundary(&t, &d, &ring, 1.25, eps).is_err());
    }

    proptest! {
        #[test]
        fn derivative_is_linear_and_kills_constants(
            a in proptest::collection::vec(-5.0f64..5.0, 12),
            b in proptest::collection::vec(-5.0f64..5.0, 12),
            c in -3.0f64..3.0,
            lam in -2.0f64..2.0,
        ) {
            let ring = source_angles(6, 0.7).unwrap();
            let block = |v: &[f64]| LogTraces {
                s0: v.chunks(2).map(|c| c.to_vec()).collect(),
                s1: v.chunks(2).map(|c| vec![c[0] + c[1]]).collect(),
            };
            let da = theta_derivative(&block(&a), &ring).unwrap();
            let db = theta_derivative(&block(&b), &ring).unwrap();
            let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + lam * y).collect();
            let dm = theta_derivative(&block(&mix), &ring).unwrap();
            for k in 0..6 {
                for i in 0..2 {
                    prop_assert!((dm.s0[k][i] - da.s0[k][i] - lam * db.s0[k][i]).abs() < 1e-10);
                }
            }
            let konst = theta_derivative(&block(&[c; 12]), &ring).unwrap();
            prop_assert!(konst.s0.iter().flatten().all(|&v| v == 0.0));
        }

        #[test]
        fn boundary_is_the_quoted_substitution(
            s in proptest::collection::vec(-5.0f64..5.0, 9),
            ds in proptest::collection::vec(-5.0f64..5.0, 9),
            eps in 1e-5f64..0.1,
        ) {
            let ring = source_angles(3, 0.4).unwrap();
            let t = LogTraces { s0: s.chunks(3).map(|c| c[..2].to_vec()).collect(), s1: s.chunks(3).map(|c| vec![c[2]]).collect() };
            let d = LogTraces { s0: ds.chunks(3).map(|c| c[..2].to_vec()).collect(), s1: ds.chunks(3).map(|c| vec![c[2]]).collect() };
            let b = qp_boundary_at(&t, &d, &ring, 1, eps).unwrap();
            prop_assert_eq!(&b.q_dirichlet, &d.s0[1]);
            prop_assert_eq!(&b.q_neumann, &d.s1[1]);
            for i in 0..2 {
                prop_assert_eq!(b.p_dirichlet[i], d.s0[1][i] - eps * t.s0[1][i]);
            }
            prop_assert_eq!(b.p_neumann[0], d.s1[1][0] - eps * t.s1[1][0]);
        }
    }
}
