//! Numerical probes: convexity gaps, gradient checks, accuracy and cost
//! sweeps, and the empirical Carleman-estimate ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman::{eval_j, linearize, CarlemanConfig, Part, QPState};
use crate::data_transform::QPBoundary;
use crate::discrete_ops::{norm_l2h, stencil_at, ScalarField, Stencil};
use crate::error::{Error, Result};
use crate::forward::sample_field;
use crate::geometry::GridSpec;
use crate::minimize::initial_guess;
use crate::pipeline::{reconstruct, synthesize, RunConfig};

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sum of `terms` random tensor-product sine modes (frequencies 1..=4),
/// scaled so the largest nodal value is `amplitude`. Zero on the boundary.
pub fn sine_bumps<R: Rng>(rng: &mut R, grid: GridSpec<f64>, amplitude: f64, terms: usize) -> ScalarField<f64> {
    let modes: Vec<(f64, f64, f64)> = (0..terms)
        .map(|_| (rng.gen_range(1..=4) as f64, rng.gen_range(1..=4) as f64, rng.gen_range(-1.0..1.0)))
        .collect();
    let w = (grid.n + 1) as f64;
    let s = grid.side();
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..s {
        for i in 0..s {
            let (u, v) = (i as f64 / w, j as f64 / w);
            let f = if grid.is_boundary(i, j) {
                0.0
            } else {
                modes.iter().map(|&(m, l, c)| c * (m * std::f64::consts::PI * u).sin() * (l * std::f64::consts::PI * v).sin()).sum()
            };
            values.push(f);
        }
    }
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
    ScalarField { grid, values: values.into_iter().map(|v| v * scale).collect() }
}

fn zero_boundary(grid: GridSpec<f64>, epsilon: f64) -> QPBoundary<f64> {
    let nb = 4 * grid.n + 4;
    QPBoundary {
        theta0: 0.0,
        q_dirichlet: vec![0.0; nb],
        q_neumann: vec![0.0; grid.n + 2],
        p_dirichlet: vec![0.0; nb],
        p_neumann: vec![0.0; grid.n + 2],
        epsilon,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    /// `J(u2) - J(u1) - <grad J(u1), u2 - u1>`.
    pub gap: f64,
    /// The Tikhonov term evaluated on `u2 - u1`.
    pub alpha_form: f64,
    /// The Neumann penalty's quadratic form on `u2 - u1`.
    pub neumann_form: f64,
    /// Gap of the weighted PDE part alone.
    pub f_gap: f64,
    /// `|gap - (alpha_form + neumann_form + f_gap)|` relative to the size of `J`.
    pub decomposition_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub samples: usize,
    pub min_gap: f64,
    pub fraction_nonnegative: f64,
    pub fraction_above_alpha_bound: f64,
    pub max_decomposition_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub carleman: CarlemanConfig<f64>,
    pub amplitude: f64,
    pub seed: u64,
    pub records: Vec<ProbeRecord>,
    pub summary: ProbeSummary,
}

impl ProbeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,gap,alpha_form,neumann_form,f_gap,decomposition_error\n");
        for (k, r) in self.records.iter().enumerate() {
            out += &format!("{k},{:e},{:e},{:e},{:e},{:e}\n", r.gap, r.alpha_form, r.neumann_form, r.f_gap, r.decomposition_error);
        }
        out
    }
}

/// Draws `samples` pairs `u1 = u0 + d1`, `u2 = u1 + d2` around the harmonic
/// start `u0` of `boundary`, with sine-bump perturbations of the given
/// amplitude in both fields, and records the first-order gap of `J`.
pub fn convexity_probe(
    boundary: &QPBoundary<f64>,
    grid: GridSpec<f64>,
    cfg: &CarlemanConfig<f64>,
    samples: usize,
    amplitude: f64,
    seed: u64,
) -> Result<ProbeReport> {
    if samples == 0 {
        return Err(Error::Invalid("the probe needs at least one sample".into()));
    }
    cfg.validate()?;
    let base = initial_guess(boundary, grid)?;
    let zero_b = zero_boundary(grid, cfg.epsilon);
    let quad_cfg = CarlemanConfig { f_weight: 0.0, ..*cfg };
    let records = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeded(seed, k as u64);
            let mut bump = || sine_bumps(&mut rng, grid, amplitude, 3);
            let (d1q, d1p, d2q, d2p) = (bump(), bump(), bump(), bump());
            let plus = |f: &ScalarField<f64>, d: &ScalarField<f64>| f.zip_map(d, |a, b| a + b);
            let u1 = QPState::new(plus(&base.q, &d1q), plus(&base.p, &d1p), boundary.clone())?;
            let u2 = QPState::new(plus(&u1.q, &d2q), plus(&u1.p, &d2p), boundary.clone())?;
            let lin = linearize(&u1, cfg, true);
            let j1 = lin.parts();
            let j2 = eval_j(&u2, cfg);
            let dz: Vec<f64> = u2.free_vector().iter().zip(u1.free_vector()).map(|(a, b)| a - b).collect();
            let dot = |g: Vec<f64>| g.iter().zip(&dz).map(|(a, b)| a * b).sum::<f64>();
            let gap = j2.total - j1.total - dot(lin.gradient());
            let f_gap = j2.f - j1.f - dot(lin.part_gradient(Part::F));
            let diff = eval_j(&QPState::new(d2q, d2p, zero_b.clone())?, &quad_cfg);
            let scale = j1.total.abs().max(j2.total.abs()).max(f64::MIN_POSITIVE);
            Ok(ProbeRecord {
                gap,
                alpha_form: diff.alpha,
                neumann_form: diff.neumann,
                f_gap,
                decomposition_error: (gap - (diff.alpha + diff.neumann + f_gap)).abs() / scale,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = records.len() as f64;
    let summary = ProbeSummary {
        samples,
        min_gap: records.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min),
        fraction_nonnegative: records.iter().filter(|r| r.gap >= 0.0).count() as f64 / m,
        fraction_above_alpha_bound: records.iter().filter(|r| r.gap >= r.alpha_form).count() as f64 / m,
        max_decomposition_error: records.iter().map(|r| r.decomposition_error).fold(0.0, f64::max),
    };
    Ok(ProbeReport { carleman: *cfg, amplitude, seed, records, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub analytic: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

/// Directional derivative of `J` from the assembled gradient against a
/// central difference with step `step`, at `pairs` random states (harmonic
/// start plus sine bumps of `amplitude`) and random nodal directions.
pub fn gradient_check(
    boundary: &QPBoundary<f64>,
    grid: GridSpec<f64>,
    cfg: &CarlemanConfig<f64>,
    pairs: usize,
    amplitude: f64,
    step: f64,
    seed: u64,
) -> Result<Vec<GradientCheck>> {
    let base = initial_guess(boundary, grid)?;
    (0..pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = seeded(seed, k as u64);
            let dq = sine_bumps(&mut rng, grid, amplitude, 3);
            let dp = sine_bumps(&mut rng, grid, amplitude, 3);
            let s = QPState::new(base.q.zip_map(&dq, |a, b| a + b), base.p.zip_map(&dp, |a, b| a + b), boundary.clone())?;
            let z = s.free_vector();
            let dir: Vec<f64> = (0..z.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g = linearize(&s, cfg, true).gradient();
            let analytic: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let at = |t: f64| {
                let zz: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                eval_j(&s.with_free(&zz), cfg).total
            };
            let fd = (at(step) - at(-step)) / (2.0 * step);
            Ok(GradientCheck {
                analytic,
                finite_difference: fd,
                relative_error: (fd - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub h: f64,
    pub alpha: f64,
    /// `|sigma - sigma_true|_l2h` on the fine grid.
    pub error: f64,
    pub relative_error: f64,
    pub convexify_seconds: f64,
    pub total_seconds: f64,
}

/// Reconstructs `sigma_true` for every pair of grid size and `alpha`. The
/// forward problem is solved once for all grids.
pub fn accuracy_sweep(sigma_true: &ScalarField<f64>, grid_ns: &[usize], alphas: &[f64], cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    if grid_ns.len() < 2 || alphas.is_empty() {
        return Err(Error::Invalid("the sweep needs at least two grids and one alpha".into()));
    }
    let data = synthesize(cfg, sigma_true, grid_ns)?;
    let mut rows = Vec::new();
    for ds in &data {
        for &alpha in alphas {
            let run = RunConfig {
                grid_n: ds.grid.n,
                carleman: CarlemanConfig { alpha, ..cfg.carleman },
                ..cfg.clone()
            };
            let rec = reconstruct(ds, &run)?;
            let truth = ScalarField::from_fn(rec.sigma_fine.grid, |x, y| sample_field(sigma_true, x, y));
            let error = norm_l2h(&rec.sigma_fine.zip_map(&truth, |a, b| a - b));
            rows.push(SweepRow {
                n: ds.grid.n,
                h: ds.grid.h,
                alpha,
                error,
                relative_error: error / norm_l2h(&truth),
                convexify_seconds: rec.provenance.convexify_seconds,
                total_seconds: rec.provenance.total_seconds,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("n,h,alpha,error,relative_error,convexify_seconds,total_seconds\n");
    for r in rows {
        out += &format!(
            "{},{},{},{:e},{:e},{:.6},{:.6}\n",
            r.n, r.h, r.alpha, r.error, r.relative_error, r.convexify_seconds, r.total_seconds
        );
    }
    out
}

/// Projects a field onto the discrete analog of `H0^2`: multiplying by
/// `(x_max - x)^2` keeps the zero Dirichlet values, and the column next to
/// the right side is reset so the one-sided x-derivative there vanishes.
pub fn project_h0(f: &ScalarField<f64>) -> ScalarField<f64> {
    let g = f.grid;
    let xr = g.x(g.n + 1);
    let mut out = ScalarField::from_fn(g, |x, _| (xr - x) * (xr - x));
    out = out.zip_map(f, |a, b| a * b);
    for j in 0..g.side() {
        out.set(g.n + 1, j, 0.0);
        let v = out.at(g.n, j);
        out.set(g.n - 1, j, 4.0 * v);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanRatio {
    pub kappa: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Weighted integrals entering the Carleman ratio of one sample:
/// `(Laplacian term, second derivatives, gradient, value)`.
pub fn carleman_terms(u: &ScalarField<f64>, kappa: f64) -> (f64, f64, f64, f64) {
    let g = u.grid;
    let (mut lap, mut second, mut grad, mut val) = (0.0, 0.0, 0.0, 0.0);
    for j in 1..=g.n {
        for i in 1..=g.n {
            let x = g.x(i);
            let w = g.h * g.h * (2.0 * kappa * x * x).exp();
            let d = |op| stencil_at(u, op, i, j);
            lap += w * d(Stencil::Laplacian).powi(2);
            second += w * (d(Stencil::D2x).powi(2) + d(Stencil::Dxy).powi(2) + d(Stencil::D2y).powi(2));
            grad += w * (d(Stencil::D1x).powi(2) + d(Stencil::D1y).powi(2));
            val += w * u.at(i, j).powi(2);
        }
    }
    (lap, second, grad, val)
}

/// Empirical ratio `lap / (second / kappa + kappa grad + kappa^3 val)` over
/// `samples` projected sine-bump fields, for each `kappa`.
pub fn carleman_diagnostic(samples: usize, kappas: &[f64], grid: GridSpec<f64>, seed: u64) -> Result<Vec<CarlemanRatio>> {
    if samples == 0 || kappas.iter().any(|&k| !(k > 0.0)) {
        return Err(Error::Invalid("need samples >= 1 and positive kappas".into()));
    }
    let fields: Vec<_> = (0..samples)
        .map(|k| project_h0(&sine_bumps(&mut seeded(seed, k as u64), grid, 1.0, 4)))
        .collect();
    Ok(kappas
        .iter()
        .map(|&kappa| {
            let ratios: Vec<f64> = fields
                .par_iter()
                .map(|u| {
                    let (lap, second, grad, val) = carleman_terms(u, kappa);
                    lap / (second / kappa + kappa * grad + kappa.powi(3) * val)
                })
                .collect();
            CarlemanRatio {
                kappa,
                min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
                max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}
