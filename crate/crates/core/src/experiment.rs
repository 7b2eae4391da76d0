//! Synthetic truth, evaluation metrics and the three extrapolation
//! experiments (frequency to frequency, frequency to spatial, spatial to
//! frequency).

use serde::{Deserialize, Serialize};

use crate::calibrate::{extrapolate, run, CalibrationState, Objective, OptConfig};
use crate::ccm::{estimate_ccm, Ccm, McSamples};
use crate::channel::{ChannelModel, Permittivity};
use crate::error::{Error, Result};
use crate::loss::{mmse_full_error_matrix, LossConfig, LossKind, MmseError};
use crate::rng::Purpose;
use crate::roughfield::BasisSet;
use crate::scene::Scene;
use crate::Domain;

/// Reference CCM from the scene's ground-truth tile materials: true
/// roughness and true permittivity per tile.
pub fn generate_truth(scene: &Scene, area: &str, domain: Domain, n_mc: usize, seed: u64) -> Result<Ccm> {
    let area = scene.area(area)?;
    let perm = scene.true_permittivity();
    let model = ChannelModel {
        tx: &scene.transmitter,
        waveform: &scene.waveform,
        permittivity: Permittivity::PerTile(&perm),
    };
    let samples = McSamples::draw(scene, area, n_mc, seed, Purpose::Truth)?;
    Ok(estimate_ccm(&model, &samples, &scene.true_roughness(), domain, false)?.ccm)
}

/// Prediction quality of `R_hat` against `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `||R_hat - R||_F / ||R||_F`
    pub rel_frobenius: f64,
    /// Floor and mismatch terms after dividing both matrices by the mean
    /// power of `R`; frequency domain only.
    pub floor: Option<f64>,
    pub variable: Option<f64>,
}

pub fn evaluate(r_true: &Ccm, r_hat: &Ccm, snr: f64) -> Result<Metrics> {
    r_true.check_compatible(r_hat)?;
    let norm = r_true.matrix.norm();
    if norm == 0.0 {
        return Err(Error::Numerical("reference CCM is zero".into()));
    }
    let rel_frobenius = (&r_hat.matrix - &r_true.matrix).norm() / norm;
    let (floor, variable) = match r_true.domain {
        Domain::Frequency => {
            let e = normalized_mmse(r_true, r_hat, snr)?;
            (Some(e.floor), Some(e.variable))
        }
        Domain::Spatial => (None, None),
    };
    Ok(Metrics {
        rel_frobenius,
        floor,
        variable,
    })
}

fn normalized_mmse(r_true: &Ccm, r_hat: &Ccm, snr: f64) -> Result<MmseError> {
    let p = r_true.mean_power();
    if !(p > 0.0) {
        return Err(Error::Numerical("reference CCM has no power".into()));
    }
    let s = num_complex::Complex64::new(1.0 / p, 0.0);
    mmse_full_error_matrix(&(&r_true.matrix * s), &(&r_hat.matrix * s), snr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    F2f,
    F2s,
    S2f,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 3] = [ExperimentId::F2f, ExperimentId::F2s, ExperimentId::S2f];

    pub fn train_domain(self) -> Domain {
        match self {
            ExperimentId::F2f | ExperimentId::F2s => Domain::Frequency,
            ExperimentId::S2f => Domain::Spatial,
        }
    }

    pub fn test_domain(self) -> Domain {
        match self {
            ExperimentId::F2f | ExperimentId::S2f => Domain::Frequency,
            ExperimentId::F2s => Domain::Spatial,
        }
    }

    pub fn loss_kind(self) -> LossKind {
        match self.train_domain() {
            Domain::Frequency => LossKind::Mmse,
            Domain::Spatial => LossKind::Frobenius,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::F2f => "f2f",
            ExperimentId::F2s => "f2s",
            ExperimentId::S2f => "s2f",
        }
    }
}

impl std::str::FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment `{s}` (f2f, f2s, s2f)")))
    }
}

/// Seeds and sample counts for one experiment run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub truth_seed: u64,
    pub truth_n_mc: usize,
    pub eval_seed: u64,
    pub eval_n_mc: usize,
    pub snr: f64,
    pub opt: OptConfig,
    /// Record the test-area metric at every iteration.
    pub track_test: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            truth_seed: 20_240_601,
            truth_n_mc: 512,
            eval_seed: 4_242,
            eval_n_mc: 512,
            snr: 100.0,
            opt: OptConfig::default(),
            track_test: false,
        }
    }
}

impl ExperimentConfig {
    /// Calibration iteration cap for an experiment: training on spatial
    /// CCMs is allowed up to 600 iterations.
    pub fn for_experiment(id: ExperimentId, seed: u64) -> Self {
        let mut cfg = ExperimentConfig::default();
        cfg.opt.seed = seed;
        if id == ExperimentId::S2f {
            cfg.opt.max_iterations = 600;
        }
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub id: ExperimentId,
    pub r_train: Ccm,
    pub r_test: Ccm,
    pub r_hat_initial: Ccm,
    pub r_hat_final: Ccm,
    pub initial: Metrics,
    pub final_: Metrics,
    pub state: CalibrationState,
}

impl ExperimentOutcome {
    /// The metric the experiment is judged on: the mismatch term for a
    /// frequency-domain target, relative Frobenius error for a spatial one.
    pub fn headline(m: &Metrics, domain: Domain) -> f64 {
        match domain {
            Domain::Frequency => m.variable.expect("frequency metrics"),
            Domain::Spatial => m.rel_frobenius,
        }
    }

    pub fn initial_metric(&self) -> f64 {
        Self::headline(&self.initial, self.id.test_domain())
    }

    pub fn final_metric(&self) -> f64 {
        Self::headline(&self.final_, self.id.test_domain())
    }

    /// `final / initial`.
    pub fn ratio(&self) -> f64 {
        self.final_metric() / self.initial_metric()
    }
}

/// Truth in both areas, calibration on `train`, extrapolation to `test`.
pub fn run_experiment(scene: &Scene, bases: &BasisSet, id: ExperimentId, cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let train_area = scene.area("train")?;
    let test_area = scene.area("test")?;
    let r_train = generate_truth(scene, "train", id.train_domain(), cfg.truth_n_mc, cfg.truth_seed)?;
    // distinct truth draws per area
    let r_test = generate_truth(
        scene,
        "test",
        id.test_domain(),
        cfg.truth_n_mc,
        cfg.truth_seed.wrapping_add(1),
    )?;

    let predict = |params: &_| {
        extrapolate(
            scene,
            bases,
            params,
            test_area,
            id.test_domain(),
            cfg.eval_n_mc,
            cfg.eval_seed,
            Purpose::Extrapolation,
        )
    };

    let loss = LossConfig::new(id.loss_kind(), cfg.snr)?;
    let objective = Objective::new(scene, bases, &r_train, train_area, loss, cfg.opt.n_mc, cfg.opt.seed)?;
    let start = CalibrationState::initial(bases, scene.model.g_max, cfg.opt.seed);
    let r_hat_initial = predict(&start.params)?;
    let initial = evaluate(&r_test, &r_hat_initial, cfg.snr)?;

    let state = if cfg.track_test {
        let mut monitor = |p: &_| -> Result<f64> {
            let m = evaluate(&r_test, &predict(p)?, cfg.snr)?;
            Ok(ExperimentOutcome::headline(&m, id.test_domain()))
        };
        run(&objective, start, &cfg.opt, Some(&mut monitor))?
    } else {
        run(&objective, start, &cfg.opt, None)?
    };

    let r_hat_final = predict(&state.params)?;
    let final_ = evaluate(&r_test, &r_hat_final, cfg.snr)?;
    Ok(ExperimentOutcome {
        id,
        r_train,
        r_test,
        r_hat_initial,
        r_hat_final,
        initial,
        final_,
        state,
    })
}
