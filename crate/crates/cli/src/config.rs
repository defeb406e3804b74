//! TOML run configuration. Every subcommand section mirrors the command's
//! flags; a flag given on the command line wins over the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use multitime::experiments::TimeMode;
use multitime::io::SCHEMA_VERSION;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema_version: Option<u32>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub deff: DeffArgs,
    #[serde(default)]
    pub verify_bounds: VerifyArgs,
    #[serde(default)]
    pub fig2: Fig2Args,
    #[serde(default)]
    pub diamond: DiamondArgs,
    #[serde(default)]
    pub nonmarkov: NonmarkovArgs,
    #[serde(default)]
    pub tensor_dump: TensorDumpArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(v) = cfg.schema_version {
            if v != SCHEMA_VERSION {
                bail!("unsupported schema_version {v} (expected {SCHEMA_VERSION})");
            }
        }
        Ok(cfg)
    }
}

/// Flags take precedence over the file section.
pub trait Overlay {
    fn overlay(self, file: Self) -> Self;
}

macro_rules! overlay {
    ($t:ty { $($f:ident),* $(,)? }) => {
        impl Overlay for $t {
            fn overlay(self, file: Self) -> Self {
                Self { $($f: self.$f.or(file.$f)),* }
            }
        }
    };
}

pub fn parse_mode(s: &str) -> std::result::Result<TimeMode, String> {
    TimeMode::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BoundModel {
    /// Random Hermitian H with a timed schedule.
    Random,
    /// Same specs evaluated on the equilibrium process.
    Dephased,
    /// Equally spaced spectrum; non-resonance fails on purpose.
    Resonant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TensorFormat {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeffArgs {
    /// Hamiltonian CSV; requires --state.
    #[arg(long)]
    pub hamiltonian: Option<PathBuf>,
    /// Density matrix CSV.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Bath dimension of the random-bath model used when no files are given.
    #[arg(long)]
    pub d_e: Option<usize>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
}
overlay!(DeffArgs { hamiltonian, state, d_e, omega, delta, lambda });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub model: Option<BoundModel>,
    /// Number of random instances.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub d_e: Option<usize>,
    /// Number of intervention steps.
    #[arg(long)]
    pub k: Option<usize>,
    /// Monte Carlo time samples per check.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Upper end of the interval distribution; default 10^3 / min gap.
    #[arg(long)]
    pub window: Option<f64>,
    /// Output CSV; default `<out-dir>/bounds.csv`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}
overlay!(VerifyArgs { model, seeds, d_e, k, samples, window, output });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Args {
    #[arg(long)]
    pub d_e_min: Option<usize>,
    #[arg(long)]
    pub d_e_max: Option<usize>,
    #[arg(long)]
    pub d_e_step: Option<usize>,
    /// Random (H, ψ) draws per bath size.
    #[arg(long)]
    pub models: Option<usize>,
    #[arg(long)]
    pub n_aminus: Option<usize>,
    #[arg(long)]
    pub n_aplus: Option<usize>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Interval window: long, short or dephased. Repeatable.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Vec<TimeMode>>,
    /// Moving-average width.
    #[arg(long)]
    pub bin: Option<usize>,
    /// Start from the full-scale settings (d_E ≤ 400, step 2, 40 models).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub full_scale: Option<bool>,
}
overlay!(Fig2Args {
    d_e_min, d_e_max, d_e_step, models, n_aminus, n_aplus, omega, delta, lambda, mode, bin, full_scale
});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiamondArgs {
    #[arg(long)]
    pub d_e: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Random projective multitime measurements in the set.
    #[arg(long)]
    pub measurements: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub window: Option<f64>,
}
overlay!(DiamondArgs { d_e, k, measurements, samples, window });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonmarkovArgs {
    #[arg(long)]
    pub d_e: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<TimeMode>,
    #[arg(long)]
    pub models: Option<usize>,
    #[arg(long)]
    pub n_aminus: Option<usize>,
    #[arg(long)]
    pub n_aplus: Option<usize>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
}
overlay!(NonmarkovArgs { d_e, mode, models, n_aminus, n_aplus, omega, delta, lambda });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDumpArgs {
    #[arg(long)]
    pub d_e: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Dump the equilibrium tensor instead.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dephased: Option<bool>,
    #[arg(long)]
    pub window: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<TensorFormat>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}
overlay!(TensorDumpArgs { d_e, k, dephased, window, format, output });

pub fn positive(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        bail!("{name} must be at least 1");
    }
    Ok(v)
}

pub fn positive_f(name: &str, v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("{name} must be positive and finite, got {v}");
    }
    Ok(v)
}
