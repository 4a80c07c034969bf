//! Versioned JSON run configuration consumed by every subcommand.

use anyhow::{bail, Context, Result};
use polaritonics::model::SystemConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const CONFIG_VERSION: u32 = 1;

/// Either an explicit list or a uniform range specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl Grid {
    pub fn expand(&self) -> Result<Vec<f64>> {
        match self {
            Grid::List(v) => {
                if v.is_empty() {
                    bail!("grid list is empty");
                }
                Ok(v.clone())
            }
            Grid::Range { start, stop, count } => {
                if *count < 2 || stop <= start {
                    bail!("grid range needs count >= 2 and stop > start");
                }
                let step = (stop - start) / (*count as f64 - 1.0);
                Ok((0..*count).map(|i| start + step * i as f64).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct G2Reference {
    pub omega_c_thz: f64,
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    pub expected_g2_11: f64,
    pub expected_g2_22: f64,
    pub expected_g2_12: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumSection {
    pub grid_thz: Grid,
    pub linewidths_thz: Vec<f64>,
    #[serde(default)]
    pub noise_relative: f64,
    pub window_thz: (f64, f64),
    pub max_peaks: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TinkhamSection {
    pub n_sub: f64,
    pub thickness_m: f64,
    #[serde(default = "default_eps_inf")]
    pub eps_inf: f64,
}

fn default_eps_inf() -> f64 {
    5.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSection {
    pub peaks_csv: PathBuf,
    pub free_nu: Vec<bool>,
    #[serde(default)]
    pub free_omega: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSection {
    /// Oscillator strengths are replaced by `nu = nu_over_omega * omega`
    /// before the check so the truncated basis stays converged.
    pub nu_over_omega: f64,
    pub cutoff: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Cavity frequency for the check; defaults to the lowest phonon
    /// frequency. A far-detuned cavity fills the low spectrum with lower-
    /// polariton harmonics that a small Fock basis cannot hold.
    pub omega_c_thz: Option<f64>,
}

fn default_levels() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputsSection {
    pub sample_csv: Option<PathBuf>,
    pub reference_csv: Option<PathBuf>,
    pub transmission_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub description: String,
    pub system: SystemConfig,
    pub omega_c_grid_thz: Option<Grid>,
    #[serde(rename = "temperature_grid_K")]
    pub temperature_grid_k: Option<Grid>,
    pub g2_reference: Option<G2Reference>,
    pub spectrum: Option<SpectrumSection>,
    pub tinkham: Option<TinkhamSection>,
    pub fit: Option<FitSection>,
    pub oracle: Option<OracleSection>,
    pub inputs: Option<InputsSection>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    42
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if config.version != CONFIG_VERSION {
            bail!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                config.version
            );
        }
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((config, base))
    }

    pub fn build_system(&self) -> Result<polaritonics::HybridSystem> {
        self.system
            .build()
            .context("building hybrid system from config")
    }

    pub fn omega_c_grid(&self) -> Result<Vec<f64>> {
        self.omega_c_grid_thz
            .as_ref()
            .context("config is missing `omega_c_grid_thz`")?
            .expand()
    }

    pub fn temperature_grid(&self) -> Result<Vec<f64>> {
        match &self.temperature_grid_k {
            Some(grid) => grid.expand(),
            None => Ok(vec![self.system.temperature_k]),
        }
    }
}
