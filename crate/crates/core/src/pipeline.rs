//! End-to-end orchestration: configuration, synthetic data and reconstruction.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman::CarlemanConfig;
use crate::data_transform::{log_traces, qp_boundary_at, theta_derivative, QPBoundary};
use crate::discrete_ops::ScalarField;
use crate::error::{Error, Result};
use crate::forward::{sigma_on_mesh, simulate, triangulate_disk, BoundaryDataset, MeshField};
use crate::geometry::{build_grid, DomainSpec, GridSpec, SourceRing};
use crate::minimize::{initial_guess, minimize_j, MinimizeOptions, MinimizeReport};
use crate::recover::{
    assemble_psi, interp_to_fine, qrm_solve, recover_r, recover_r_averaged, sigma_from_w, Provenance, RMode,
    Reconstruction,
};

/// Every tunable of a run, with the published parameters as defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec<f64>,
    pub ring: SourceRing<f64>,
    /// Interior points per side of the inversion grid.
    pub grid_n: usize,
    /// Interior points per side of the fine grid used for `w` and `sigma`.
    pub fine_n: usize,
    /// Target edge length of the forward mesh.
    pub mesh_edge: f64,
    pub carleman: CarlemanConfig<f64>,
    pub minimize: MinimizeOptions,
    /// Source angle of the single-angle mode; defaults to the ring angle nearest pi.
    pub theta0: Option<f64>,
    pub mode: RMode,
    /// Ring indices closer than this to the wrap seam are never used.
    pub seam_margin: usize,
    pub qrm_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            domain: DomainSpec::paper_default(),
            ring: SourceRing::paper_default(),
            grid_n: 19,
            fine_n: 126,
            mesh_edge: 1.0 / 40.0,
            carleman: CarlemanConfig::paper_default(),
            minimize: MinimizeOptions::default(),
            theta0: None,
            mode: RMode::Single,
            seam_margin: 3,
            qrm_tol: 1e-8,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        crate::geometry::source_angles(self.ring.count, self.ring.rho)?;
        build_grid(&self.domain, self.grid_n)?;
        if self.fine_n <= 4 {
            return Err(Error::Grid(format!("fine_n must exceed 4 (got {})", self.fine_n)));
        }
        if !(self.mesh_edge > 0.0 && self.mesh_edge < self.domain.big_d) {
            return Err(Error::Mesh(format!("mesh_edge must lie in (0, D), got {}", self.mesh_edge)));
        }
        self.carleman.validate()?;
        if !(self.qrm_tol > 0.0 && self.qrm_tol < 1.0) {
            return Err(Error::Invalid(format!("qrm_tol must lie in (0, 1), got {}", self.qrm_tol)));
        }
        self.theta0_index().map(|_| ())
    }

    pub fn grid(&self) -> Result<GridSpec<f64>> {
        build_grid(&self.domain, self.grid_n)
    }

    /// Index of the single-angle source on the full ring.
    pub fn theta0_index(&self) -> Result<usize> {
        let k = match self.theta0 {
            Some(t) => self
                .ring
                .index_of(t)
                .ok_or_else(|| Error::Ring(format!("theta0 = {t} is not a ring angle")))?,
            None => self.ring.nearest_index(std::f64::consts::PI),
        };
        if k < self.seam_margin || k + self.seam_margin >= self.ring.count {
            return Err(Error::Ring(format!(
                "theta0 index {k} lies within {} steps of the ring seam",
                self.seam_margin
            )));
        }
        Ok(k)
    }

    /// Sources that must be simulated: a three-source window in single mode,
    /// the full ring otherwise.
    pub fn simulation_ring(&self) -> Result<SourceRing<f64>> {
        match self.mode {
            RMode::Single => self.ring.window(self.theta0_index()?, self.seam_margin.max(1)),
            RMode::Averaged => Ok(self.ring),
        }
    }
}

/// Forward data for `sigma` (1 outside the square) on each grid in `grid_ns`.
pub fn synthesize(cfg: &RunConfig, sigma: &ScalarField<f64>, grid_ns: &[usize]) -> Result<Vec<BoundaryDataset<f64>>> {
    if sigma.values.iter().any(|&v| !(v >= 1.0)) {
        return Err(Error::Invalid("conductivity must be >= 1 everywhere".into()));
    }
    let mesh = triangulate_disk(&cfg.domain, cfg.mesh_edge)?;
    let sm: MeshField<f64> = sigma_on_mesh(&mesh, sigma);
    let grids = grid_ns.iter().map(|&n| build_grid(&cfg.domain, n)).collect::<Result<Vec<_>>>()?;
    simulate(&mesh, &sm, &cfg.domain, &grids, &cfg.simulation_ring()?)
}

/// Output of the convexification stage at one angle.
#[derive(Debug, Clone)]
pub struct AngleSolve {
    pub index: usize,
    pub report: MinimizeReport<f64>,
    pub psi: ScalarField<f64>,
}

/// Boundary data of `(q, p)` for ring index `k` of the dataset's ring.
pub fn boundary_at(data: &BoundaryDataset<f64>, cfg: &RunConfig, k: usize) -> Result<QPBoundary<f64>> {
    let ring = data.ring;
    let windowed = ring.count == 3;
    if windowed && k != 1 || !windowed && (k < cfg.seam_margin || k + cfg.seam_margin >= ring.count) {
        return Err(Error::Ring(format!("angle index {k} has no valid theta neighbors in this dataset")));
    }
    let traces = log_traces(data)?;
    let dtraces = theta_derivative(&traces, &ring)?;
    qp_boundary_at(&traces, &dtraces, &ring, k, cfg.carleman.epsilon)
}

/// Transform and minimize for ring index `k` of the dataset's ring.
pub fn convexify(data: &BoundaryDataset<f64>, cfg: &RunConfig, k: usize) -> Result<AngleSolve> {
    let boundary = boundary_at(data, cfg, k)?;
    let init = initial_guess(&boundary, data.grid)?;
    let report = minimize_j(&init, &cfg.carleman, &cfg.minimize)?;
    let psi = assemble_psi(&report.state, cfg.carleman.epsilon);
    Ok(AngleSolve { index: k, report, psi })
}

/// Full reconstruction from a dataset.
pub fn reconstruct(data: &BoundaryDataset<f64>, cfg: &RunConfig) -> Result<Reconstruction<f64>> {
    data.validate()?;
    let start = Instant::now();
    let (r_coarse, lead) = match cfg.mode {
        RMode::Single => {
            let theta0 = cfg.ring.angle(cfg.theta0_index()?);
            let k = data
                .ring
                .index_of(theta0)
                .ok_or_else(|| Error::Ring(format!("dataset has no source at theta0 = {theta0}")))?;
            let s = convexify(data, cfg, k)?;
            (recover_r(&s.psi), s)
        }
        RMode::Averaged => {
            let ks: Vec<usize> = (cfg.seam_margin..data.ring.count.saturating_sub(cfg.seam_margin)).collect();
            let solves = ks.par_iter().map(|&k| convexify(data, cfg, k)).collect::<Result<Vec<_>>>()?;
            let psis: Vec<_> = solves.iter().map(|s| s.psi.clone()).collect();
            let r = recover_r_averaged(&psis)?;
            let mid = solves.len() / 2;
            (r, solves.into_iter().nth(mid).ok_or_else(|| Error::Ring("no usable angles".into()))?)
        }
    };
    let convexify_seconds = start.elapsed().as_secs_f64();
    let r_fine = interp_to_fine(&r_coarse, cfg.fine_n)?;
    let (w_fine, qrm) = qrm_solve(&r_fine, cfg.qrm_tol)?;
    let (sigma_fine, negative) = sigma_from_w(&w_fine);
    let provenance = Provenance {
        carleman: cfg.carleman,
        theta0: data.ring.angle(lead.index),
        mode: cfg.mode,
        grid: data.grid,
        fine_n: cfg.fine_n,
        negative_w_nodes: negative,
        minimizer_iterations: lead.report.iterations,
        grad_norm_final: lead.report.grad_norm_final,
        a_ball_violated: lead.report.a_ball_violated,
        qrm_iterations: qrm.iterations,
        convexify_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(Reconstruction { r_coarse, r_fine, w_fine, sigma_fine, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: RunConfig = serde_json::from_str(r#"{"grid_n": 9}"#).unwrap();
        assert_eq!(partial.grid_n, 9);
        assert_eq!(partial.carleman, cfg.carleman);
        assert!(serde_json::from_str::<RunConfig>(r#"{"grid": 9}"#).is_err());
    }

    #[test]
    fn theta0_policy() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.theta0_index().unwrap(), 99);
        let w = cfg.simulation_ring().unwrap();
        assert_eq!(w.count, 3);
        assert!((w.angle(1) - std::f64::consts::PI).abs() < 1e-14);
        let near_seam = RunConfig { theta0: Some(cfg.ring.angle(1)), ..RunConfig::default() };
        assert!(near_seam.validate().is_err());
        let off_ring = RunConfig { theta0: Some(1.0), ..RunConfig::default() };
        assert!(off_ring.validate().is_err());
    }
}
