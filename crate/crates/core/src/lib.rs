//! Roughness calibration of planar scatterers and channel correlation
//! matrix (CCM) extrapolation.
//!
//! A scene of tiled planar scatterers is illuminated by a dipole
//! transmitter. Each tile scatters with a Gaussian lobe whose width is set
//! by a roughness value; roughness across a scatterer is a truncated
//! Gaussian random field. Given the CCM measured in a training area, the
//! field coefficients are fitted by gradient descent through a
//! differentiable single-bounce channel model, and the calibrated scene
//! then predicts CCMs in other areas, in the frequency or the spatial
//! domain.
//!
//! The pipeline, bottom up:
//!
//! - [`scene`]: geometry, materials, areas, scene files
//! - [`roughfield`]: correlated roughness field and its truncated basis
//! - [`raytrace`]: `Tx -> tile -> Rx` path enumeration with occlusion
//! - [`channel`]: path gains, frequency and array responses
//! - [`ccm`]: Monte-Carlo CCM estimates and gradient contraction
//! - [`loss`]: mismatched-MMSE and Frobenius losses
//! - [`calibrate`]: Adam calibration loop, extrapolation, checkpoints
//! - [`experiment`]: synthetic truth, metrics, end-to-end experiments
//!
//! ```
//! use ccmx::scene::Scene;
//! use ccmx::roughfield::BasisSet;
//!
//! let scene = Scene::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenes/paper.scene"))?;
//! assert_eq!(scene.scatterers.len(), 3);
//! let bases = BasisSet::for_scene(&scene)?;
//! assert_eq!(bases.bases.len(), 3);
//! # Ok::<(), ccmx::Error>(())
//! ```

pub mod calibrate;
pub mod ccm;
pub mod channel;
mod error;
pub mod experiment;
pub mod loss;
pub mod raytrace;
pub mod rng;
pub mod roughfield;
pub mod scene;

pub use error::{Error, Result};

/// Which axis a channel correlation matrix correlates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Across OFDM subcarriers (`n_freq x n_freq`).
    Frequency,
    /// Across receive-array elements (`n_rx x n_rx`).
    Spatial,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Domain::Frequency => "frequency",
            Domain::Spatial => "spatial",
        })
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frequency" | "freq" => Ok(Domain::Frequency),
            "spatial" => Ok(Domain::Spatial),
            other => Err(Error::InvalidArgument(format!(
                "unknown domain `{other}` (expected `frequency` or `spatial`)"
            ))),
        }
    }
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/roughness.md")]
    mod roughness {}
    #[doc = include_str!("../../../book/src/propagation.md")]
    mod propagation {}
    #[doc = include_str!("../../../book/src/correlation.md")]
    mod correlation {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
