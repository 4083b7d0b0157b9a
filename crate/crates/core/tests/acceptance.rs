//! Acceptance suite: one line per criterion, then a single verdict.
//!
//! Run with `cargo test -p ceit-core --test acceptance -- --nocapture` to see
//! the table.

use std::time::Instant;

use ceit_core::carleman::{CarlemanConfig, QPState};
use ceit_core::discrete_ops::{norm_h2h_sq, norm_l2h, norm_l2h_sq, rect_quad, stencil_at, ScalarField, Stencil};
use ceit_core::geometry::{build_grid, GridSpec};
use ceit_core::minimize::{initial_guess, minimize_j};
use ceit_core::phantoms::disk_phantom;
use ceit_core::pipeline::{boundary_at, convexify, reconstruct, synthesize, RunConfig};
use ceit_core::recover::qrm_solve;
use ceit_core::verify::{accuracy_sweep, carleman_diagnostic, convexity_probe, gradient_check, sine_bumps};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const IDENTITY_TOL: f64 = 0.05;
const IDENTITY_SECONDS: f64 = 600.0;
const GRADIENT_TOL: f64 = 1e-4;
const GRADIENT_PAIRS: usize = 20;
const PROBE_SAMPLES: usize = 100;
const PROBE_AMPLITUDE: f64 = 1e-3;
const INDEPENDENCE_TOL: f64 = 1e-3;
const COST_FACTOR: f64 = 3.0;
const QUAD_ORDER: (f64, f64) = (0.7, 1.3);
const STENCIL_ORDER: (f64, f64) = (1.9, 2.1);
const QRM_TOL: f64 = 1e-3;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn single_thread<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn disk_truth(cfg: &RunConfig) -> ScalarField<f64> {
    let fine = build_grid(&cfg.domain, cfg.fine_n).unwrap();
    disk_phantom(fine, (1.6, 1.45), 0.15, 1.0, 2.0).unwrap().sigma_true
}

fn identity(cfg: &RunConfig) -> Outcome {
    let fine = build_grid(&cfg.domain, cfg.fine_n).unwrap();
    let (rec, secs) = single_thread(|| {
        let t = Instant::now();
        let data = synthesize(cfg, &ScalarField::constant(fine, 1.0), &[cfg.grid_n]).unwrap();
        let rec = reconstruct(&data[0], cfg).unwrap();
        (rec, t.elapsed().as_secs_f64())
    });
    let dev = rec.sigma_fine.values.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
    let rn = norm_l2h(&rec.r_coarse);
    Outcome {
        name: "constant-conductivity identity",
        pass: dev <= IDENTITY_TOL && rn <= IDENTITY_TOL && secs <= IDENTITY_SECONDS,
        detail: format!(
            "max|sigma-1| = {dev:.4}, |r_coarse|_l2h = {rn:.4} (tol {IDENTITY_TOL}), {secs:.1} s single-threaded"
        ),
    }
}

fn gradient(cfg: &RunConfig, b: &ceit_core::data_transform::QPBoundary<f64>, g: GridSpec<f64>) -> Outcome {
    let checks = gradient_check(b, g, &cfg.carleman, GRADIENT_PAIRS, 0.05, 1e-7, 21).unwrap();
    let worst = checks.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    Outcome {
        name: "gradient exactness",
        pass: checks.len() == GRADIENT_PAIRS && worst <= GRADIENT_TOL,
        detail: format!("{GRADIENT_PAIRS} pairs, worst relative error {worst:.2e} (tol {GRADIENT_TOL:e})"),
    }
}

fn convexity(cfg: &RunConfig, b: &ceit_core::data_transform::QPBoundary<f64>, g: GridSpec<f64>) -> Outcome {
    let rep = convexity_probe(b, g, &cfg.carleman, PROBE_SAMPLES, PROBE_AMPLITUDE, 5).unwrap();
    let s = rep.summary;
    Outcome {
        name: "convexity probe",
        pass: s.samples == PROBE_SAMPLES && s.min_gap >= 0.0 && s.max_decomposition_error <= 1e-10,
        detail: format!(
            "M = {}, min gap {:.3e}, fraction gap >= 0: {:.2}, fraction gap >= alpha form: {:.2}, decomposition error {:.1e}",
            s.samples, s.min_gap, s.fraction_nonnegative, s.fraction_above_alpha_bound, s.max_decomposition_error
        ),
    }
}

fn independence(cfg: &RunConfig, b: &ceit_core::data_transform::QPBoundary<f64>, g: GridSpec<f64>) -> Outcome {
    let base = initial_guess(b, g).unwrap();
    let mut starts = vec![base.clone()];
    for seed in [1u64, 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dq = sine_bumps(&mut rng, g, 0.5, 4);
        let dp = sine_bumps(&mut rng, g, 0.5, 4);
        starts.push(
            QPState::new(base.q.zip_map(&dq, |a, b| a + b), base.p.zip_map(&dp, |a, b| a + b), b.clone()).unwrap(),
        );
    }
    let sols: Vec<QPState<f64>> =
        starts.iter().map(|s| minimize_j(s, &cfg.carleman, &cfg.minimize).unwrap().state).collect();
    let mut worst = 0.0f64;
    for a in 0..sols.len() {
        for c in a + 1..sols.len() {
            let dq = sols[a].q.zip_map(&sols[c].q, |x, y| x - y);
            let dp = sols[a].p.zip_map(&sols[c].p, |x, y| x - y);
            let d = (norm_h2h_sq(&dq) + norm_h2h_sq(&dp)).sqrt();
            worst = worst.max(d / sols[a].h2_norm().max(sols[c].h2_norm()));
        }
    }
    Outcome {
        name: "initial-guess independence",
        pass: worst <= INDEPENDENCE_TOL,
        detail: format!("3 starts, worst pairwise relative H2 distance {worst:.2e} (tol {INDEPENDENCE_TOL:e})"),
    }
}

fn h_scaling(cfg: &RunConfig) -> Outcome {
    let rows = accuracy_sweep(&disk_truth(cfg), &[9, 19], &[cfg.carleman.alpha], cfg).unwrap();
    let (coarse, fine) = (rows[0].error, rows[1].error);
    Outcome {
        name: "h-scaling",
        pass: fine < coarse,
        detail: format!(
            "disk inclusion: error(h={:.3}) = {coarse:.4}, error(h={:.3}) = {fine:.4} (relative {:.3} / {:.3})",
            rows[0].h, rows[1].h, rows[0].relative_error, rows[1].relative_error
        ),
    }
}

fn cost(cfg: &RunConfig) -> Outcome {
    let data = synthesize(cfg, &disk_truth(cfg), &[19, 39]).unwrap();
    let time = |k: usize| {
        let c = RunConfig { grid_n: data[k].grid.n, ..cfg.clone() };
        single_thread(|| {
            (0..3)
                .map(|_| {
                    let t = Instant::now();
                    convexify(&data[k], &c, 1).unwrap();
                    t.elapsed().as_secs_f64()
                })
                .fold(f64::INFINITY, f64::min)
        })
    };
    let (t_coarse, t_fine) = (time(0), time(1));
    Outcome {
        name: "coarse-vs-fine cost",
        pass: t_coarse * COST_FACTOR <= t_fine,
        detail: format!(
            "convexification: h=0.05 {t_coarse:.3} s, h=0.025 {t_fine:.3} s, ratio {:.1} (need >= {COST_FACTOR})",
            t_fine / t_coarse
        ),
    }
}

/// Polynomial in two variables with exact calculus on rectangles.
#[derive(Clone)]
struct Poly(Vec<(f64, i32, i32)>);

impl Poly {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.0.iter().map(|&(c, a, b)| c * x.powi(a) * y.powi(b)).sum()
    }
    fn dx(&self) -> Poly {
        Poly(self.0.iter().filter(|t| t.1 > 0).map(|&(c, a, b)| (c * a as f64, a - 1, b)).collect())
    }
    fn dy(&self) -> Poly {
        Poly(self.0.iter().filter(|t| t.2 > 0).map(|&(c, a, b)| (c * b as f64, a, b - 1)).collect())
    }
    fn square(&self) -> Poly {
        let mut out = Vec::new();
        for &(c, a, b) in &self.0 {
            for &(d, e, f) in &self.0 {
                out.push((c * d, a + e, b + f));
            }
        }
        Poly(out)
    }
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let prim = |k: i32| (hi.powi(k + 1) - lo.powi(k + 1)) / (k + 1) as f64;
        self.0.iter().map(|&(c, a, b)| c * prim(a) * prim(b)).sum()
    }
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn convergence(cfg: &RunConfig) -> Outcome {
    let ns = [9usize, 19, 39, 79];
    let grids: Vec<_> = ns.iter().map(|&n| build_grid(&cfg.domain, n).unwrap()).collect();
    let (lo, hi) = (grids[0].origin.0, grids[0].origin.0 + 2.0 * cfg.domain.c);
    let p = Poly(vec![(1.0, 0, 0), (0.7, 2, 1), (-0.5, 1, 3), (0.3, 4, 0), (0.2, 1, 4), (-0.4, 0, 2)]);
    let h2_exact = [p.clone(), p.dx(), p.dy(), p.dx().dx(), p.dx().dy(), p.dy().dy()]
        .iter()
        .map(|t| t.square().integral(lo, hi))
        .sum::<f64>();
    let (mut eq, mut el, mut eh) = (vec![], vec![], vec![]);
    for &g in &grids {
        let f = ScalarField::from_fn(g, |x, y| p.eval(x, y));
        eq.push((rect_quad(&f) - p.integral(lo, hi)).abs());
        el.push((norm_l2h_sq(&f) - p.square().integral(lo, hi)).abs());
        eh.push((norm_h2h_sq(&f) - h2_exact).abs());
    }
    // smooth non-polynomial function for the stencils
    let u = |x: f64, y: f64| (2.0 * x).sin() * (0.7 * y).exp();
    let exact: [(Stencil, Box<dyn Fn(f64, f64) -> f64>); 6] = [
        (Stencil::D1x, Box::new(|x, y| 2.0 * (2.0 * x).cos() * (0.7 * y).exp())),
        (Stencil::D1y, Box::new(|x, y| 0.7 * (2.0 * x).sin() * (0.7 * y).exp())),
        (Stencil::D2x, Box::new(|x, y| -4.0 * (2.0 * x).sin() * (0.7 * y).exp())),
        (Stencil::Dxy, Box::new(|x, y| 1.4 * (2.0 * x).cos() * (0.7 * y).exp())),
        (Stencil::D2y, Box::new(|x, y| 0.49 * (2.0 * x).sin() * (0.7 * y).exp())),
        (Stencil::Laplacian, Box::new(|x, y| -3.51 * (2.0 * x).sin() * (0.7 * y).exp())),
    ];
    let mut stencil_orders = Vec::new();
    for (op, d) in &exact {
        // max error over the interior nodes of the coarsest grid, which every finer grid contains
        let errs: Vec<f64> = grids
            .iter()
            .enumerate()
            .map(|(level, &g)| {
                let f = ScalarField::from_fn(g, u);
                let step = 1usize << level;
                let mut m = 0.0f64;
                for j in 1..=grids[0].n {
                    for i in 1..=grids[0].n {
                        let (fi, fj) = (i * step, j * step);
                        m = m.max((stencil_at(&f, *op, fi, fj) - d(g.x(fi), g.y(fj))).abs());
                    }
                }
                m
            })
            .collect();
        stencil_orders.extend(orders(&errs));
    }
    let quad_orders: Vec<f64> = [orders(&eq), orders(&el), orders(&eh)].concat();
    let inside = |v: &[f64], r: (f64, f64)| v.iter().all(|o| (r.0..=r.1).contains(o));
    let span = |v: &[f64]| (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let (qa, qb) = span(&quad_orders);
    let (sa, sb) = span(&stencil_orders);
    Outcome {
        name: "quadrature, norm and stencil orders",
        pass: inside(&quad_orders, QUAD_ORDER) && inside(&stencil_orders, STENCIL_ORDER),
        detail: format!(
            "h = 0.1 .. 0.0125: quadrature/norm orders in [{qa:.3}, {qb:.3}] (need {QUAD_ORDER:?}), stencil orders in [{sa:.3}, {sb:.3}] (need {STENCIL_ORDER:?})"
        ),
    }
}

fn qrm(cfg: &RunConfig) -> Outcome {
    let g = build_grid(&cfg.domain, cfg.fine_n).unwrap();
    let k = std::f64::consts::PI / (2.0 * cfg.domain.c);
    let lo = g.origin.0;
    let s = |t: f64| (k * (t - lo)).sin();
    let b = |t: f64| s(t).powi(4);
    let b2 = |t: f64| {
        let c = (k * (t - lo)).cos();
        k * k * (12.0 * s(t).powi(2) * c * c - 4.0 * s(t).powi(4))
    };
    let phi = ScalarField::from_fn(g, |x, y| 1.0 + 0.5 * b(x) * b(y));
    let r = ScalarField::from_fn(g, |x, y| 0.5 * (b2(x) * b(y) + b(x) * b2(y)) / (1.0 + 0.5 * b(x) * b(y)));
    let (w, stats) = qrm_solve(&r, cfg.qrm_tol).unwrap();
    let err = norm_l2h(&w.zip_map(&phi, |a, c| a - c)) / norm_l2h(&phi);
    Outcome {
        name: "quasi-reversibility manufactured solution",
        pass: err <= QRM_TOL,
        detail: format!("relative l2h error {err:.2e} (tol {QRM_TOL:e}), {} CGLS iterations", stats.iterations),
    }
}

fn diagnostic(cfg: &RunConfig) -> Outcome {
    let g = build_grid(&cfg.domain, cfg.grid_n).unwrap();
    let kappas = [1.0, 2.0, 3.0, 4.0, 5.0];
    let a = carleman_diagnostic(20, &kappas, g, 13).unwrap();
    let b = carleman_diagnostic(20, &kappas, g, 13).unwrap();
    let table: Vec<String> = a.iter().map(|r| format!("k={}: {:.3e}", r.kappa, r.min_ratio)).collect();
    Outcome {
        name: "Carleman diagnostic",
        pass: a == b && a.len() == 5 && a.iter().all(|r| r.min_ratio.is_finite()),
        detail: format!("min ratios {}; deterministic: {}", table.join(", "), a == b),
    }
}

#[test]
fn acceptance() {
    let cfg = RunConfig::default();
    let g = cfg.grid().unwrap();
    let fine = build_grid(&cfg.domain, cfg.fine_n).unwrap();
    let one = synthesize(&cfg, &ScalarField::constant(fine, 1.0), &[cfg.grid_n]).unwrap();
    let b = boundary_at(&one[0], &cfg, 1).unwrap();
    assert_eq!(cfg.carleman, CarlemanConfig::paper_default());

    let outcomes = [
        identity(&cfg),
        gradient(&cfg, &b, g),
        convexity(&cfg, &b, g),
        independence(&cfg, &b, g),
        h_scaling(&cfg),
        cost(&cfg),
        convergence(&cfg),
        qrm(&cfg),
        diagnostic(&cfg),
    ];
    for o in &outcomes {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
