//! Run configuration: a single JSON file with flag overrides on top
//! (flag > file > default). Relative paths resolve against the config
//! file's directory.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use stm_core::events::CsvSchema;
use stm_core::gcn::TrainConfig;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mapping {
    Grid {
        cell_size: f64,
    },
    Admin {
        #[serde(default = "default_id_property")]
        id_property: String,
    },
    Voronoi {
        #[serde(default = "default_min_degree")]
        min_degree: usize,
        d_small: f64,
        d_big: f64,
        #[serde(default = "default_snap_tol")]
        snap_tol: f64,
    },
}

fn default_id_property() -> String {
    "id".into()
}

fn default_min_degree() -> usize {
    stm_core::roads::DEFAULT_MIN_DEGREE
}

fn default_snap_tol() -> f64 {
    stm_core::roads::DEFAULT_SNAP_TOL
}

#[derive(Copy, Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum GridNeighborsChoice {
    Rook,
    Queen,
}

#[derive(Copy, Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum VoronoiWeights {
    /// Shared road length crossing between regions (needs the roads file).
    Road,
    /// Shared boundary length between cell polygons.
    Boundary,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct AdjacencyConfig {
    pub grid_neighbors: GridNeighborsChoice,
    pub voronoi_weights: VoronoiWeights,
    /// Collinearity tolerance for shared-boundary weights, meters.
    pub tol: f64,
    /// Binarize edge weights before adjacency normalization.
    pub binary: bool,
}

impl Default for AdjacencyConfig {
    fn default() -> Self {
        Self {
            grid_neighbors: GridNeighborsChoice::Rook,
            voronoi_weights: VoronoiWeights::Road,
            tol: stm_core::graph::DEFAULT_BOUNDARY_TOL,
            binary: true,
        }
    }
}

/// The resolved configuration for one run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub events: PathBuf,
    #[serde(default)]
    pub pois: Option<PathBuf>,
    #[serde(default)]
    pub roads: Option<PathBuf>,
    #[serde(default)]
    pub admin: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub mapping: Mapping,
    #[serde(default)]
    pub schema: CsvSchema,
    /// Temporal bin width in seconds.
    #[serde(default = "default_bin_width")]
    pub bin_width: i64,
    /// Input window length in bins.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_fractions")]
    pub fractions: (f64, f64, f64),
    #[serde(default)]
    pub normalize_features: bool,
    #[serde(default)]
    pub adjacency: AdjacencyConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_log_level")]
    pub log_level: String,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_bin_width() -> i64 {
    86_400
}

fn default_window() -> usize {
    12
}

fn default_fractions() -> (f64, f64, f64) {
    (0.70, 0.15, 0.15)
}

fn default_log_level() -> String {
    "info".into()
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub log_level: Option<String>,
}

impl RunConfig {
    pub fn load(config_path: &Path, overrides: &Overrides) -> Result<Self> {
        let bytes = std::fs::read(config_path)
            .with_context(|| format!("cannot read config {}", config_path.display()))?;
        let mut cfg: RunConfig = serde_json::from_slice(&bytes)
            .with_context(|| format!("cannot parse config {}", config_path.display()))?;

        let base = config_path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };
        cfg.events = resolve(&cfg.events);
        cfg.pois = cfg.pois.as_ref().map(resolve);
        cfg.roads = cfg.roads.as_ref().map(resolve);
        cfg.admin = cfg.admin.as_ref().map(resolve);
        cfg.output = resolve(&cfg.output);

        if let Some(output) = &overrides.output {
            cfg.output = output.clone();
        }
        if let Some(seed) = overrides.seed {
            cfg.train.seed = seed;
        }
        if let Some(level) = &overrides.log_level {
            cfg.log_level = level.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let must_exist = |name: &str, path: &Path| -> Result<()> {
            if !path.is_file() {
                bail!("{name} file {} does not exist", path.display());
            }
            Ok(())
        };
        must_exist("events", &self.events)?;
        if let Some(p) = &self.pois {
            must_exist("pois", p)?;
        }
        match &self.mapping {
            Mapping::Grid { cell_size } => {
                if *cell_size <= 0.0 {
                    bail!("cell_size must be > 0");
                }
            }
            Mapping::Admin { .. } => {
                let path = self.admin.as_ref().context("admin mapping needs an admin file")?;
                must_exist("admin", path)?;
            }
            Mapping::Voronoi { d_small, d_big, .. } => {
                let path = self.roads.as_ref().context("voronoi mapping needs a roads file")?;
                must_exist("roads", path)?;
                if !(d_small > &0.0 && d_small < d_big) {
                    bail!("voronoi mapping needs 0 < d_small < d_big");
                }
            }
        }
        if self.bin_width <= 0 {
            bail!("bin_width must be > 0");
        }
        if self.window == 0 {
            bail!("window must be >= 1");
        }
        Ok(())
    }

    /// Stable digest of the resolved configuration. Presentation fields
    /// (output directory, log level) are excluded so runs of the same
    /// experiment hash identically wherever they write.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        canonical.log_level = String::new();
        let json = serde_json::to_string(&canonical).expect("config serialization cannot fail");
        crate::context::sha256_hex(json.as_bytes())
    }
}
