//! Service configuration file.
//!
//! ```json
//! {
//!   "scene":   { "blend": 1.0, "nano": { "hamaker": 1e-19 } },
//!   "stick":   { "mass": 5e-4, "stiffness": 0.1, "damping": 1.5e-3 },
//!   "kernel":  { "dt": 1e-4, "gap_floor_fraction": 0.4 },
//!   "service": { "port": 8080, "snapshot_hz": 60.0, "telemetry_dir": "telemetry" }
//! }
//! ```
//!
//! Every section and field is optional.

use std::path::{Path, PathBuf};

use nanotouch_core::force::SceneConfig;
use nanotouch_core::kernel::{ConfigError, KernelConfig, StickParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_ENV: &str = "NANOTOUCH_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub dt: f64,
    pub gap_floor_fraction: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        let k = KernelConfig::default();
        Self {
            dt: k.dt,
            gap_floor_fraction: k.gap_floor_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub port: u16,
    pub snapshot_hz: f64,
    /// Where per-day session files go; no persistence when absent.
    pub telemetry_dir: Option<PathBuf>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            port: 8080,
            snapshot_hz: 60.0,
            telemetry_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scene: SceneConfig,
    pub stick: StickParams,
    pub kernel: KernelSection,
    pub service: ServiceSection,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(#[from] ConfigError),
    #[error("invalid config: snapshot_hz must be positive and finite, got {0}")]
    SnapshotRate(f64),
}

impl Config {
    pub fn kernel_config(&self) -> KernelConfig {
        KernelConfig {
            dt: self.kernel.dt,
            scene: self.scene,
            stick: self.stick,
            gap_floor_fraction: self.kernel.gap_floor_fraction,
        }
    }

    pub fn validate(&self) -> Result<(), LoadError> {
        self.kernel_config().validate()?;
        let hz = self.service.snapshot_hz;
        if !(hz.is_finite() && hz > 0.0) {
            return Err(LoadError::SnapshotRate(hz));
        }
        Ok(())
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, LoadError> {
        let cfg: Config = serde_json::from_str(text).map_err(|source| LoadError::Parse {
            path: path.to_owned(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    /// Loads `path`, else the file named by `NANOTOUCH_CONFIG`, else the
    /// defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self, LoadError> {
        match path
            .map(Path::to_owned)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
        {
            Some(p) => Self::load(&p),
            None => Ok(Self::default()),
        }
    }
}
