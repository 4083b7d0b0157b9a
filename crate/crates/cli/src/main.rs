//! `ceit`: command-line driver for Carleman-convexification EIT reconstructions.

mod commands;
mod config;
mod error;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ceit_core::recover::RMode;
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::Config;
use crate::error::CliError;
use crate::run::RunDir;

#[derive(Debug, Parser)]
#[command(name = "ceit", version, about = "Carleman convexification for 2-D electrical impedance tomography")]
struct Cli {
    /// Run configuration (JSON); defaults are the published parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parent directory of run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Interior points per side of the inversion grid.
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Source angle of the single-angle mode, radians.
    #[arg(long, global = true, allow_hyphen_values = true)]
    theta0: Option<f64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Worker threads; the CEIT_JOBS environment variable takes precedence.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Name of the run directory; defaults to `<command>-<timestamp>`.
    #[arg(long, global = true)]
    run_name: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    SingleTheta,
    Averaged,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate glyph phantoms as field files and images.
    GenPhantoms {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Simulate boundary data for the configured phantom.
    Forward,
    /// Reconstruct the conductivity from simulated or stored data.
    Reconstruct {
        /// Boundary data written by `forward`; simulated from the phantom if absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Convexity probe, gradient check, Carleman diagnostic and accuracy sweep.
    Verify,
    /// Paired train/val/test directory of phantoms and coarse reconstructions.
    Dataset {
        #[arg(long)]
        count: Option<usize>,
    },
    /// Side-by-side panels of field files, or every image of a run's manifest.
    Render {
        fields: Vec<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = commands::PANEL)]
        size: usize,
        /// Also write a PNG copy of the panel.
        #[arg(long)]
        png: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenPhantoms { .. } => "gen-phantoms",
            Command::Forward => "forward",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Verify => "verify",
            Command::Dataset { .. } => "dataset",
            Command::Render { .. } => "render",
        }
    }
}

fn jobs(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    match std::env::var("CEIT_JOBS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("CEIT_JOBS must be a positive integer, got {v:?}"))),
        Err(_) => match flag {
            Some(0) => Err(CliError::Config("--jobs must be positive".into())),
            other => Ok(other),
        },
    }
}

fn resolve(cli: &Cli) -> Result<(Config, PathBuf), CliError> {
    let (mut cfg, dir) = match &cli.config {
        Some(p) => (Config::load(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (Config::default(), PathBuf::from(".")),
    };
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.grid_n {
        cfg.pipeline.grid_n = n;
    }
    if let Some(t) = cli.theta0 {
        cfg.pipeline.theta0 = Some(t);
    }
    if let Some(m) = cli.mode {
        cfg.pipeline.mode = match m {
            ModeArg::SingleTheta => RMode::Single,
            ModeArg::Averaged => RMode::Averaged,
        };
    }
    match &cli.command {
        Command::GenPhantoms { count: Some(c) } | Command::Dataset { count: Some(c) } => cfg.dataset.count = *c,
        _ => {}
    }
    cfg.validate()?;
    Ok((cfg, dir))
}

fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    let (cfg, config_dir) = resolve(&cli)?;
    if let Some(n) = jobs(cli.jobs)? {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let name = cli
        .run_name
        .clone()
        .unwrap_or_else(|| format!("{}-{}", cli.command.name(), chrono::Local::now().format("%Y%m%d-%H%M%S")));
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(CliError::Config(format!("invalid run name {name:?}")));
    }
    let mut run = RunDir::create(&cfg.output, &name, cli.command.name(), &cfg)?;
    match &cli.command {
        Command::GenPhantoms { .. } => commands::gen_phantoms(&cfg, &mut run)?,
        Command::Forward => commands::forward(&cfg, &config_dir, &mut run)?,
        Command::Reconstruct { data } => commands::reconstruct_cmd(&cfg, &config_dir, data.as_deref(), &mut run)?,
        Command::Verify => commands::verify(&cfg, &config_dir, &mut run)?,
        Command::Dataset { .. } => commands::dataset(&cfg, &mut run)?,
        Command::Render { fields, manifest, size, png } => {
            commands::render(fields, manifest.as_deref(), *png, *size, &mut run)?
        }
    }
    run.finish()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ceit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
