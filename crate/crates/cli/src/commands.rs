use std::fs;
use std::path::{Path, PathBuf};

use ceit_core::discrete_ops::{norm_l2h, ScalarField};
use ceit_core::forward::BoundaryDataset;
use ceit_core::geometry::build_grid;
use ceit_core::io::load_field;
use ceit_core::phantoms::{glyph_phantoms, make_dataset, write_dataset};
use ceit_core::pipeline::{boundary_at, reconstruct, synthesize, RunConfig};
use ceit_core::recover::RMode;
use ceit_core::verify::{accuracy_sweep, carleman_diagnostic, convexity_probe, gradient_check, sweep_csv};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Config;
use crate::error::CliError;
use crate::run::{check_manifest, load_manifest, ImageRecipe, RunDir};

/// Panel edge length of rendered comparison images.
pub const PANEL: usize = 256;

fn native(source: &str) -> ImageRecipe {
    ImageRecipe { sources: vec![source.into()], size: None, gap: 0 }
}

fn fine_grid(cfg: &Config) -> Result<ceit_core::geometry::GridSpec<f64>, CliError> {
    Ok(build_grid(&cfg.pipeline.domain, cfg.pipeline.fine_n)?)
}

pub fn gen_phantoms(cfg: &Config, run: &mut RunDir) -> Result<(), CliError> {
    let d = &cfg.dataset;
    let phantoms = glyph_phantoms(d.count, cfg.seed, fine_grid(cfg)?, d.smooth_width, d.sigma_in)?;
    for p in &phantoms {
        let field = format!("phantoms/{}.field", p.id);
        run.write_field(&field, &p.sigma_true)?;
        run.write_image(&format!("phantoms/{}.pgm", p.id), native(&field))?;
    }
    Ok(())
}

fn truth(cfg: &Config, config_dir: &Path) -> Result<ScalarField<f64>, CliError> {
    cfg.phantom.build(fine_grid(cfg)?, cfg.seed, config_dir)
}

fn grids_for(cfg: &RunConfig) -> Vec<usize> {
    vec![cfg.grid_n]
}

pub fn forward(cfg: &Config, config_dir: &Path, run: &mut RunDir) -> Result<(), CliError> {
    let sigma = truth(cfg, config_dir)?;
    let data = synthesize(&cfg.pipeline, &sigma, &grids_for(&cfg.pipeline))?;
    run.write_field("sigma_true.field", &sigma)?;
    run.write_image("sigma_true.pgm", native("sigma_true.field"))?;
    let mut buf = Vec::new();
    data[0].write_to(&mut buf)?;
    run.write_bytes("data.bin", &buf)
}

#[derive(Serialize)]
struct ReconSummary<'a> {
    provenance: &'a ceit_core::recover::Provenance,
    sigma_min: f64,
    sigma_max: f64,
    error_l2h: Option<f64>,
    relative_error: Option<f64>,
}

pub fn reconstruct_cmd(cfg: &Config, config_dir: &Path, data_path: Option<&Path>, run: &mut RunDir) -> Result<(), CliError> {
    let (data, sigma_true) = match data_path {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::MissingInput(p.to_path_buf()));
            }
            (BoundaryDataset::<f64>::read_from(fs::File::open(p)?)?, None)
        }
        None => {
            let sigma = truth(cfg, config_dir)?;
            let data = synthesize(&cfg.pipeline, &sigma, &grids_for(&cfg.pipeline))?;
            (data.into_iter().next().expect("one grid"), Some(sigma))
        }
    };
    let pipeline = RunConfig { grid_n: data.grid.n, ..cfg.pipeline.clone() };
    if pipeline.mode == RMode::Averaged && data.ring.count == 3 {
        return Err(CliError::Config("averaged mode needs a full-ring dataset".into()));
    }
    let rec = reconstruct(&data, &pipeline)?;
    run.write_field("r_coarse.field", &rec.r_coarse)?;
    run.write_field("r_fine.field", &rec.r_fine)?;
    run.write_field("w_fine.field", &rec.w_fine)?;
    run.write_field("sigma_fine.field", &rec.sigma_fine)?;
    run.write_image("sigma_fine.pgm", native("sigma_fine.field"))?;
    let mut error = None;
    if let Some(t) = &sigma_true {
        run.write_field("sigma_true.field", t)?;
        run.write_image("sigma_true.pgm", native("sigma_true.field"))?;
        run.write_image(
            "panel.pgm",
            ImageRecipe { sources: vec!["sigma_fine.field".into(), "sigma_true.field".into()], size: Some(PANEL), gap: 4 },
        )?;
        if t.grid == rec.sigma_fine.grid {
            let e = norm_l2h(&rec.sigma_fine.zip_map(t, |a, b| a - b));
            error = Some((e, e / norm_l2h(t)));
        }
    }
    run.write_json(
        "summary.json",
        &ReconSummary {
            provenance: &rec.provenance,
            sigma_min: rec.sigma_fine.min(),
            sigma_max: rec.sigma_fine.max(),
            error_l2h: error.map(|e| e.0),
            relative_error: error.map(|e| e.1),
        },
    )
}

pub fn verify(cfg: &Config, config_dir: &Path, run: &mut RunDir) -> Result<(), CliError> {
    let v = &cfg.verify;
    let sigma = truth(cfg, config_dir)?;
    let data = synthesize(&cfg.pipeline, &sigma, &grids_for(&cfg.pipeline))?;
    let ds = &data[0];
    let k = if ds.ring.count == 3 { 1 } else { cfg.pipeline.theta0_index()? };
    let b = boundary_at(ds, &cfg.pipeline, k)?;
    let car = &cfg.pipeline.carleman;

    let probe = convexity_probe(&b, ds.grid, car, v.probe_samples, v.probe_amplitude, cfg.seed)?;
    run.write_text("probe.csv", &probe.to_csv())?;
    run.write_json("probe.json", &probe)?;

    let checks = gradient_check(&b, ds.grid, car, v.gradient_pairs, 0.05, v.gradient_step, cfg.seed)?;
    let mut csv = String::from("pair,analytic,finite_difference,relative_error\n");
    for (i, c) in checks.iter().enumerate() {
        csv += &format!("{i},{:e},{:e},{:e}\n", c.analytic, c.finite_difference, c.relative_error);
    }
    run.write_text("gradient.csv", &csv)?;

    let table = carleman_diagnostic(v.diagnostic_samples, &v.kappas, ds.grid, cfg.seed)?;
    let mut csv = String::from("kappa,min_ratio,max_ratio\n");
    for r in &table {
        csv += &format!("{},{:e},{:e}\n", r.kappa, r.min_ratio, r.max_ratio);
    }
    run.write_text("carleman.csv", &csv)?;

    let sweep = if v.sweep_grids.is_empty() {
        None
    } else {
        let rows = accuracy_sweep(&sigma, &v.sweep_grids, &v.sweep_alphas, &cfg.pipeline)?;
        run.write_text("sweep.csv", &sweep_csv(&rows))?;
        Some(rows)
    };

    #[derive(Serialize)]
    struct Summary<'a> {
        probe: ceit_core::verify::ProbeSummary,
        gradient_worst_relative_error: f64,
        carleman: &'a [ceit_core::verify::CarlemanRatio],
        sweep: Option<Vec<ceit_core::verify::SweepRow>>,
    }
    run.write_json(
        "summary.json",
        &Summary {
            probe: probe.summary,
            gradient_worst_relative_error: checks.iter().map(|c| c.relative_error).fold(0.0, f64::max),
            carleman: &table,
            sweep,
        },
    )
}

pub fn dataset(cfg: &Config, run: &mut RunDir) -> Result<(), CliError> {
    let d = &cfg.dataset;
    let fine = fine_grid(cfg)?;
    let phantoms = glyph_phantoms(d.count, cfg.seed, fine, d.smooth_width, d.sigma_in)?;
    let recs = phantoms
        .par_iter()
        .map(|p| {
            let data = synthesize(&cfg.pipeline, &p.sigma_true, &grids_for(&cfg.pipeline))?;
            Ok(reconstruct(&data[0], &cfg.pipeline)?.sigma_fine)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let set = make_dataset(phantoms, recs, cfg.seed)?;
    let root = run.path.join("dataset");
    for f in write_dataset(&set, &root)? {
        run.adopt(&f)?;
    }
    run.write_json("dataset/split.json", &set.split)
}

/// Panels of the given field files, or every image of an earlier run.
pub fn render(fields: &[PathBuf], manifest: Option<&Path>, png: bool, size: usize, run: &mut RunDir) -> Result<(), CliError> {
    if let Some(m) = manifest {
        let man = load_manifest(m)?;
        let base = m.parent().unwrap_or(Path::new("."));
        let bad = check_manifest(base)?;
        if !bad.is_empty() {
            return Err(CliError::Malformed(format!("artifacts differ from their manifest hashes: {bad:?}")));
        }
        // field sources are copied so the new run is self-describing too
        for a in man.artifacts.iter().filter(|a| a.image.is_none() && a.path.ends_with(".field")) {
            let src = base.join(&a.path);
            if !src.exists() {
                return Err(CliError::MissingInput(src));
            }
            run.write_bytes(&a.path, &fs::read(src)?)?;
        }
        for a in man.artifacts.iter().filter(|a| a.image.is_some()) {
            run.write_image(&a.path, a.image.clone().expect("filtered"))?;
        }
        return Ok(());
    }
    if fields.is_empty() {
        return Err(CliError::Config("render needs field files or --manifest".into()));
    }
    let mut sources = Vec::new();
    for (k, f) in fields.iter().enumerate() {
        if !f.exists() {
            return Err(CliError::MissingInput(f.clone()));
        }
        let rel = format!("inputs/{k}.field");
        run.write_field(&rel, &load_field(f)?)?;
        sources.push(rel);
    }
    let recipe = ImageRecipe { sources, size: Some(size), gap: 4 };
    let img = recipe.render(&run.path)?;
    run.write_image("panel.pgm", recipe)?;
    if png {
        let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, img.pixels)
            .ok_or_else(|| CliError::Malformed("panel buffer size".into()))?;
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png).map_err(|e| CliError::Malformed(e.to_string()))?;
        run.write_bytes("panel.png", out.get_ref())?;
    }
    Ok(())
}
