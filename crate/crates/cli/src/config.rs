use std::path::{Path, PathBuf};

use ceit_core::discrete_ops::ScalarField;
use ceit_core::geometry::GridSpec;
use ceit_core::io::load_field;
use ceit_core::phantoms::{disk_phantom, glyph_phantoms};
use ceit_core::pipeline::RunConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Conductivity used by `forward`, `reconstruct` and `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomSpec {
    Constant,
    Disk {
        center: (f64, f64),
        radius: f64,
        #[serde(default = "default_smooth")]
        smooth_width: f64,
        #[serde(default = "default_sigma_in")]
        sigma_in: f64,
    },
    /// Glyph number `index` of the seeded generator.
    Glyph {
        index: usize,
        #[serde(default = "default_smooth")]
        smooth_width: f64,
        #[serde(default = "default_sigma_in")]
        sigma_in: f64,
    },
    /// A field file on the fine grid.
    File { path: PathBuf },
}

fn default_smooth() -> f64 {
    1.0
}

fn default_sigma_in() -> f64 {
    2.0
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec::Disk { center: (1.6, 1.45), radius: 0.15, smooth_width: 1.0, sigma_in: 2.0 }
    }
}

impl PhantomSpec {
    pub fn build(&self, fine: GridSpec<f64>, seed: u64, base: &Path) -> Result<ScalarField<f64>, CliError> {
        Ok(match self {
            PhantomSpec::Constant => ScalarField::constant(fine, 1.0),
            PhantomSpec::Disk { center, radius, smooth_width, sigma_in } => {
                disk_phantom(fine, *center, *radius, *smooth_width, *sigma_in)?.sigma_true
            }
            PhantomSpec::Glyph { index, smooth_width, sigma_in } => {
                let mut all = glyph_phantoms(index + 1, seed, fine, *smooth_width, *sigma_in)?;
                all.pop().expect("index + 1 phantoms").sigma_true
            }
            PhantomSpec::File { path } => {
                let p = base.join(path);
                if !p.exists() {
                    return Err(CliError::MissingInput(p));
                }
                let f = load_field(&p)?;
                if f.grid.n != fine.n {
                    return Err(CliError::Config(format!(
                        "phantom file has {} interior points per side, the fine grid {}",
                        f.grid.n, fine.n
                    )));
                }
                f
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub count: usize,
    pub smooth_width: f64,
    pub sigma_in: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self { count: 10, smooth_width: 1.0, sigma_in: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub probe_samples: usize,
    pub probe_amplitude: f64,
    pub gradient_pairs: usize,
    pub gradient_step: f64,
    pub kappas: Vec<f64>,
    pub diagnostic_samples: usize,
    /// Grid sizes of the accuracy sweep; empty skips it.
    pub sweep_grids: Vec<usize>,
    pub sweep_alphas: Vec<f64>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            probe_samples: 100,
            probe_amplitude: 1e-3,
            gradient_pairs: 20,
            gradient_step: 1e-7,
            kappas: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            diagnostic_samples: 20,
            sweep_grids: vec![9, 19],
            sweep_alphas: vec![0.01],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pipeline: RunConfig,
    pub phantom: PhantomSpec,
    pub dataset: DatasetSpec,
    pub verify: VerifySpec,
    /// Parent of the run directories.
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            pipeline: RunConfig::default(),
            phantom: PhantomSpec::default(),
            dataset: DatasetSpec::default(),
            verify: VerifySpec::default(),
            output: PathBuf::from("runs"),
            seed: 0,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Err(CliError::MissingInput(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.pipeline.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !self.verify.kappas.iter().all(|&k| k > 0.0) {
            return Err(CliError::Config("verify.kappas must be positive".into()));
        }
        Ok(())
    }
}
