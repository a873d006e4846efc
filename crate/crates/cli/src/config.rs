//! Per-command configuration. Every key in a TOML file has a same-named flag that overrides it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use divide_core::active::AcquisitionConfig;
use divide_core::benchgen::{BenchConfig, Benchmark};
use divide_core::ferrosim::{K_MAX, K_MIN, P_MAX, P_MIN};
use divide_core::gp::KernelKind;
use divide_core::trainer::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Usage;

/// Reads a TOML config, or the defaults when no file is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(toml::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))?)
}

/// Copies every given flag (a local `Option` named like the field) onto the config.
macro_rules! overlay {
    ($cfg:expr; $($field:ident),* $(,)?) => {
        $( if let Some(v) = $field { $cfg.$field = v; } )*
    };
}
pub(crate) use overlay;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GenBenchConfig {
    pub benchmark: Benchmark,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub patch_size: usize,
    pub noise_sigma: f64,
    pub no_spatial: bool,
}

impl Default for GenBenchConfig {
    fn default() -> Self {
        let b = BenchConfig::default();
        Self {
            benchmark: b.benchmark,
            seed: b.seed,
            rows: b.rows,
            cols: b.cols,
            patch_size: b.patch_size,
            noise_sigma: b.noise_sigma,
            no_spatial: b.no_spatial,
        }
    }
}

impl GenBenchConfig {
    pub fn bench(&self) -> Result<BenchConfig> {
        if self.rows < 2 || self.cols < 2 || self.patch_size == 0 {
            return Err(Usage("need at least 2x2 cells and a non-empty patch".into()).into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Usage(format!("noise sigma must be non-negative, got {}", self.noise_sigma)).into());
        }
        Ok(BenchConfig {
            benchmark: self.benchmark,
            rows: self.rows,
            cols: self.cols,
            patch_size: self.patch_size,
            seed: self.seed,
            noise_sigma: self.noise_sigma,
            no_spatial: self.no_spatial,
            ..BenchConfig::default()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Sweep {
    K,
    P,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FerrosimConfig {
    pub sweep: Option<Sweep>,
    pub dataset: bool,
    pub k_min: i32,
    pub k_max: i32,
    pub p_min: u32,
    pub p_max: u32,
    /// Fixed K for the P sweep; unset sweeps a-stripes over uniform c.
    #[serde(rename = "K")]
    pub k: Option<i32>,
    /// Fixed P for the K sweep; unset sweeps the bare c-pattern.
    #[serde(rename = "P")]
    pub p: Option<u32>,
    pub size: usize,
}

impl Default for FerrosimConfig {
    fn default() -> Self {
        Self {
            sweep: None,
            dataset: false,
            k_min: K_MIN,
            k_max: K_MAX,
            p_min: P_MIN,
            p_max: P_MAX,
            k: None,
            p: None,
            size: 15,
        }
    }
}

impl FerrosimConfig {
    pub fn validate(&self) -> Result<()> {
        let k_ok = |k: i32| (K_MIN..=K_MAX).contains(&k);
        let p_ok = |p: u32| (P_MIN..=P_MAX).contains(&p);
        if !(k_ok(self.k_min) && k_ok(self.k_max) && self.k_min <= self.k_max) {
            return Err(Usage(format!("invalid K range [{}, {}] (allowed {K_MIN}..={K_MAX})", self.k_min, self.k_max)).into());
        }
        if !(p_ok(self.p_min) && p_ok(self.p_max) && self.p_min <= self.p_max) {
            return Err(Usage(format!("invalid P range [{}, {}] (allowed {P_MIN}..={P_MAX})", self.p_min, self.p_max)).into());
        }
        if self.k.is_some_and(|k| !k_ok(k)) || self.p.is_some_and(|p| !p_ok(p)) {
            return Err(Usage("fixed K or P outside the allowed range".into()).into());
        }
        if self.sweep.is_none() && !self.dataset {
            return Err(Usage("nothing to do: pass --sweep and/or --dataset".into()).into());
        }
        if self.size < 2 {
            return Err(Usage("lattice size must be at least 2".into()).into());
        }
        Ok(())
    }

    pub fn k_values(&self) -> Vec<i32> {
        (self.k_min..=self.k_max).collect()
    }

    pub fn p_values(&self) -> Vec<u32> {
        (self.p_min..=self.p_max).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainCmdConfig {
    pub data: PathBuf,
    /// Number of randomly chosen training cells; at least the grid size trains on everything.
    pub labeled: usize,
    pub seed: u64,
    pub lr: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub inducing: usize,
    pub kernel: KernelKind,
    pub structured_mean: bool,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            data: PathBuf::new(),
            labeled: 100,
            seed: t.seed,
            lr: t.lr,
            iterations: t.iterations,
            batch_size: t.batch_size,
            inducing: t.inducing,
            kernel: t.kernel,
            structured_mean: t.structured_mean,
        }
    }
}

impl TrainCmdConfig {
    pub fn train(&self) -> Result<TrainConfig> {
        if self.data.as_os_str().is_empty() {
            return Err(Usage("--data is required".into()).into());
        }
        let t = TrainConfig {
            lr: self.lr,
            iterations: self.iterations,
            batch_size: self.batch_size,
            inducing: self.inducing,
            seed: self.seed,
            kernel: self.kernel,
            structured_mean: self.structured_mean,
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ActiveCmdConfig {
    pub data: PathBuf,
    pub budget: usize,
    pub seed_points: usize,
    pub lambda: f64,
    pub d0: f64,
    /// Write mean and σ grids every this many iterations (0 disables).
    pub snapshot_every: usize,
    pub seed: u64,
    pub lr: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub inducing: usize,
    pub kernel: KernelKind,
    pub structured_mean: bool,
}

impl Default for ActiveCmdConfig {
    fn default() -> Self {
        let t = TrainCmdConfig::default();
        let a = AcquisitionConfig::default();
        Self {
            data: PathBuf::new(),
            budget: a.budget,
            seed_points: a.seed_points,
            lambda: a.lambda,
            d0: a.d0,
            snapshot_every: 0,
            seed: t.seed,
            lr: t.lr,
            iterations: t.iterations,
            batch_size: t.batch_size,
            inducing: t.inducing,
            kernel: t.kernel,
            structured_mean: t.structured_mean,
        }
    }
}

impl ActiveCmdConfig {
    pub fn configs(&self) -> Result<(AcquisitionConfig, TrainConfig)> {
        let t = TrainCmdConfig {
            data: self.data.clone(),
            labeled: 0,
            seed: self.seed,
            lr: self.lr,
            iterations: self.iterations,
            batch_size: self.batch_size,
            inducing: self.inducing,
            kernel: self.kernel,
            structured_mean: self.structured_mean,
        }
        .train()?;
        let a = AcquisitionConfig {
            lambda: self.lambda,
            d0: self.d0,
            budget: self.budget,
            seed_points: self.seed_points,
            seed: self.seed,
        };
        a.validate()?;
        Ok((a, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DisentangleConfig {
    pub data: PathBuf,
    pub model: PathBuf,
    /// `mechanism@x,y`, `mechanism@cell:N` or `mechanism@ref`.
    pub anchors: Vec<String>,
    /// Reference overrides, `mechanism@x,y` or `mechanism@cell:N`.
    pub references: Vec<String>,
    pub cluster_seed: u64,
    /// Run the scaling decomposition over the (row, column) grid axes.
    pub scaling: bool,
    /// Gauge column value for the scaling decomposition; defaults to the largest.
    pub p_star: Option<f64>,
}

impl Default for DisentangleConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            model: PathBuf::new(),
            anchors: Vec::new(),
            references: Vec::new(),
            cluster_seed: 0,
            scaling: false,
            p_star: None,
        }
    }
}
