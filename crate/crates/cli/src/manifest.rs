//! Run manifests: the resolved command, every configuration value the run
//! used and the files it wrote. Replaying a manifest re-executes the
//! recorded command.

use std::path::{Path, PathBuf};

use ccmx::calibrate::OptConfig;
use ccmx::scene::Scene;
use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::Failure;

pub const FILE_NAME: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: ResolvedConfig,
    pub outputs: Vec<PathBuf>,
}

/// Values the command took from the scene or from built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub waveform: Option<WaveformRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_n_mc: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_n_mc: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformRecord {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub n_freq: usize,
    pub rx_elements: usize,
    pub rx_spacing: f64,
}

impl WaveformRecord {
    pub fn of(scene: &Scene) -> Self {
        let w = &scene.waveform;
        WaveformRecord {
            carrier_hz: w.carrier_hz,
            bandwidth_hz: w.bandwidth_hz,
            n_freq: w.n_freq,
            rx_elements: w.rx_array.elements,
            rx_spacing: w.rx_array.spacing,
        }
    }
}

impl RunManifest {
    pub fn new(command: Command, config: ResolvedConfig, outputs: Vec<PathBuf>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config,
            outputs,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, Failure> {
        let text = toml::to_string(self).map_err(|e| Failure::Io(format!("manifest: {e}")))?;
        let path = dir.join(FILE_NAME);
        std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }
}
