//! Run directories and their manifests.

use std::fs;
use std::path::{Path, PathBuf};

use ceit_core::discrete_ops::ScalarField;
use ceit_core::io::{load_field, render_panels, Gray};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

/// How an image was produced from field files of the same run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecipe {
    /// Field files, relative to the run directory.
    pub sources: Vec<String>,
    /// Panel size in pixels; `None` for one pixel per node of a single field.
    pub size: Option<usize>,
    pub gap: usize,
}

impl ImageRecipe {
    pub fn render(&self, dir: &Path) -> Result<Gray, CliError> {
        let mut fields = Vec::with_capacity(self.sources.len());
        for s in &self.sources {
            let p = dir.join(s);
            if !p.exists() {
                return Err(CliError::MissingInput(p));
            }
            fields.push(load_field(&p)?);
        }
        Ok(match self.size {
            None if fields.len() == 1 => Gray::from_sigma(&fields[0]),
            None => return Err(CliError::Malformed("native-size image needs exactly one source".into())),
            Some(size) => render_panels(&fields.iter().collect::<Vec<_>>(), size, self.gap)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub image: Option<ImageRecipe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: Config,
    pub artifacts: Vec<Artifact>,
}

pub struct RunDir {
    pub path: PathBuf,
    command: String,
    config: Config,
    artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunDir {
    /// Creates `parent/name`. An existing directory is a resume conflict:
    /// complete runs are never overwritten and partial ones are not resumed.
    pub fn create(parent: &Path, name: &str, command: &str, config: &Config) -> Result<Self, CliError> {
        let path = parent.join(name);
        if path.exists() {
            let why = if path.join(MANIFEST).exists() {
                "holds a finished run; choose another --run-name"
            } else {
                "holds a partial run; remove it or choose another --run-name"
            };
            return Err(CliError::ResumeConflict(path, why.into()));
        }
        fs::create_dir_all(&path)?;
        Ok(Self { path, command: command.into(), config: config.clone(), artifacts: Vec::new() })
    }

    fn record(&mut self, rel: &str, bytes: &[u8], image: Option<ImageRecipe>) -> Result<(), CliError> {
        let full = self.path.join(rel);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&full, bytes)?;
        self.artifacts.push(Artifact { path: rel.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64, image });
        Ok(())
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        self.record(rel, bytes, None)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<(), CliError> {
        self.record(rel, text.as_bytes(), None)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write_text(rel, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    pub fn write_field(&mut self, rel: &str, f: &ScalarField<f64>) -> Result<(), CliError> {
        let mut buf = Vec::new();
        ceit_core::io::write_field(&mut buf, f)?;
        self.record(rel, &buf, None)
    }

    /// Renders an image from field files already in this run and records the recipe.
    pub fn write_image(&mut self, rel: &str, recipe: ImageRecipe) -> Result<(), CliError> {
        let img = recipe.render(&self.path)?;
        self.record(rel, &img.encode(), Some(recipe))
    }

    /// Registers a file written by other code under the run directory.
    pub fn adopt(&mut self, full: &Path) -> Result<(), CliError> {
        let bytes = fs::read(full)?;
        let rel = full
            .strip_prefix(&self.path)
            .map_err(|_| CliError::Config(format!("{} lies outside the run directory", full.display())))?
            .to_string_lossy()
            .replace('\\', "/");
        self.artifacts.push(Artifact { path: rel, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64, image: None });
        Ok(())
    }

    /// Writes the manifest last; its presence marks the run as complete.
    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let m = Manifest { command: self.command, config: self.config, artifacts: self.artifacts };
        fs::write(self.path.join(MANIFEST), serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(self.path)
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Hash check of every artifact listed in a run's manifest.
pub fn check_manifest(dir: &Path) -> Result<Vec<String>, CliError> {
    let m = load_manifest(&dir.join(MANIFEST))?;
    let mut bad = Vec::new();
    for a in &m.artifacts {
        match fs::read(dir.join(&a.path)) {
            Ok(b) if sha256_hex(&b) == a.sha256 => {}
            _ => bad.push(a.path.clone()),
        }
    }
    Ok(bad)
}
