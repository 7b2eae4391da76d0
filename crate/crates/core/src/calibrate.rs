//! Gradient-based roughness calibration and CCM extrapolation.
//!
//! The training objective compares the measured training CCM with a
//! Monte-Carlo estimate at the current coefficients. Receiver positions,
//! phases and paths are drawn once per run from the run seed, so the
//! objective is a deterministic function of the coefficients and its
//! analytic gradient is exact for that surface. Coefficients move by Adam
//! in the descent direction.
//!
//! Both CCMs are divided by the mean power `tr(R_train)/n` of the measured
//! matrix before the loss is taken, which makes `snr` an effective ratio
//! relative to the average channel power in the training area.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ccm::{estimate_ccm, Ccm, CcmEstimate, McSamples};
use crate::channel::{ChannelModel, Permittivity};
use crate::error::{Error, Result};
use crate::loss::{loss_matrix, LossConfig};
use crate::rng::{self, Purpose, Stream};
use crate::roughfield::{roughness_field, roughness_field_grad, BasisSet, BasisSpec, RoughnessParams};
use crate::scene::{Area, Scene};
use crate::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Stop once the best loss has not improved for this many iterations.
    pub window: usize,
    /// Relative improvement that counts as progress.
    pub rel_tol: f64,
    pub seed: u64,
    /// Monte-Carlo positions per training estimate.
    pub n_mc: usize,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iterations: 300,
            window: 30,
            rel_tol: 1e-3,
            seed: 0,
            n_mc: 64,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && self.max_iterations >= 1
            && self.window >= 1
            && self.rel_tol >= 0.0
            && self.n_mc >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid optimizer configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamMoments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step: u64,
}

impl AdamMoments {
    pub fn new(n: usize) -> Self {
        AdamMoments {
            first: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
        }
    }

    /// One bias-corrected Adam descent step on `x`.
    pub fn update(&mut self, x: &mut [f64], grad: &[f64], cfg: &OptConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..x.len() {
            let g = grad[i];
            self.first[i] = cfg.beta1 * self.first[i] + (1.0 - cfg.beta1) * g;
            self.second[i] = cfg.beta2 * self.second[i] + (1.0 - cfg.beta2) * g * g;
            let m = self.first[i] / c1;
            let v = self.second[i] / c2;
            x[i] -= cfg.learning_rate * m / (v.sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub params: RoughnessParams,
    pub adam: AdamMoments,
    /// Entry `i` holds the loss at the coefficients before update `i`.
    pub history: Vec<HistoryEntry>,
    pub seed: u64,
    pub converged: bool,
}

impl CalibrationState {
    /// Coefficients drawn i.i.d. standard normal from the run's init stream.
    pub fn initial(bases: &BasisSet, g_max: f64, seed: u64) -> Self {
        let params = RoughnessParams::random(bases, g_max, &mut rng::stream(seed, Stream::Init));
        Self::starting_at(params, seed)
    }

    pub fn starting_at(params: RoughnessParams, seed: u64) -> Self {
        let n = params.len();
        CalibrationState {
            params,
            adam: AdamMoments::new(n),
            history: Vec::new(),
            seed,
            converged: false,
        }
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.history.iter().map(|h| h.train_loss).reduce(f64::min)
    }

    /// True once the best loss has gone `window` iterations without a
    /// relative improvement of `rel_tol`.
    pub fn stalled(&self, window: usize, rel_tol: f64) -> bool {
        let mut best = f64::INFINITY;
        let mut last_gain = 0;
        for h in &self.history {
            if h.train_loss < best * (1.0 - rel_tol) || best == f64::INFINITY {
                last_gain = h.iteration;
            }
            best = best.min(h.train_loss);
        }
        match self.history.last() {
            Some(h) => h.iteration - last_gain >= window,
            None => false,
        }
    }

    /// CSV with header `iteration,train_loss,test_metric`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,train_loss,test_metric\n");
        for h in &self.history {
            let test = h.test_metric.map(|v| format!("{v:.16e}")).unwrap_or_default();
            out.push_str(&format!("{},{:.16e},{}\n", h.iteration, h.train_loss, test));
        }
        out
    }
}

/// Loss value and coefficient gradient at one iterate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub grad: Option<Vec<f64>>,
    pub estimate: CcmEstimate,
}

/// The frozen training objective.
pub struct Objective<'a> {
    pub scene: &'a Scene,
    pub bases: &'a BasisSet,
    pub loss: LossConfig,
    pub samples: McSamples,
    reference: DMatrix<Complex64>,
    scale: f64,
    domain: Domain,
}

impl<'a> Objective<'a> {
    /// Draws the calibration samples in `area` from `seed`.
    pub fn new(
        scene: &'a Scene,
        bases: &'a BasisSet,
        r_train: &Ccm,
        area: &Area,
        loss: LossConfig,
        n_mc: usize,
        seed: u64,
    ) -> Result<Self> {
        let samples = McSamples::draw(scene, area, n_mc, seed, Purpose::Calibration)?;
        Self::with_samples(scene, bases, r_train, loss, samples)
    }

    pub fn with_samples(
        scene: &'a Scene,
        bases: &'a BasisSet,
        r_train: &Ccm,
        loss: LossConfig,
        samples: McSamples,
    ) -> Result<Self> {
        if loss.kind.domain() != r_train.domain {
            return Err(Error::DomainMismatch {
                expected: loss.kind.domain(),
                found: r_train.domain,
            });
        }
        let expected = match r_train.domain {
            Domain::Frequency => scene.waveform.n_freq,
            Domain::Spatial => scene.waveform.rx_array.elements,
        };
        if r_train.dim() != expected {
            return Err(Error::Dimension(format!(
                "training CCM is {0}x{0}, scene waveform gives {expected}",
                r_train.dim()
            )));
        }
        if bases.bases.len() != scene.scatterers.len() {
            return Err(Error::Dimension("basis set does not match the scene".into()));
        }
        let power = r_train.mean_power();
        if !(power > 0.0 && power.is_finite()) {
            return Err(Error::Numerical(format!(
                "training CCM has non-positive mean power {power}"
            )));
        }
        let scale = 1.0 / power;
        Ok(Objective {
            scene,
            bases,
            loss,
            samples,
            reference: &r_train.matrix * Complex64::new(scale, 0.0),
            scale,
            domain: r_train.domain,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn model(&self) -> ChannelModel<'a> {
        calibration_model(self.scene)
    }

    /// Raw (unscaled) CCM estimate at `params`.
    pub fn estimate(&self, params: &RoughnessParams, with_jacobian: bool) -> Result<CcmEstimate> {
        let alpha = roughness_field(params, self.bases)?;
        estimate_ccm(&self.model(), &self.samples, &alpha, self.domain, with_jacobian)
    }

    pub fn evaluate(&self, params: &RoughnessParams, with_grad: bool) -> Result<Evaluation> {
        let estimate = self.estimate(params, with_grad)?;
        let scaled = &estimate.ccm.matrix * Complex64::new(self.scale, 0.0);
        let lv = loss_matrix(&self.loss, &self.reference, &scaled)?;
        if !lv.value.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {}", lv.value)));
        }
        let grad = if with_grad {
            // chain through the constant scale on R_hat
            let upstream = lv.grad * Complex64::new(self.scale, 0.0);
            let per_tile = estimate.contract(&upstream)?;
            let g: Vec<f64> = roughness_field_grad(params, self.bases, &per_tile)?
                .into_iter()
                .flatten()
                .collect();
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite gradient".into()));
            }
            Some(g)
        } else {
            None
        };
        Ok(Evaluation {
            loss: lv.value,
            grad,
            estimate,
        })
    }

    pub fn loss_at(&self, params: &RoughnessParams) -> Result<f64> {
        Ok(self.evaluate(params, false)?.loss)
    }
}

/// Channel model used on the calibration side: preset permittivity.
pub fn calibration_model(scene: &Scene) -> ChannelModel<'_> {
    ChannelModel {
        tx: &scene.transmitter,
        waveform: &scene.waveform,
        permittivity: Permittivity::Preset(scene.model.eta_hat),
    }
}

/// Per-iteration hook, e.g. a test-area metric.
pub type Monitor<'m> = dyn FnMut(&RoughnessParams) -> Result<f64> + 'm;

/// Runs (or continues) the descent loop until convergence or
/// `cfg.max_iterations` total iterations.
pub fn run(
    objective: &Objective<'_>,
    mut state: CalibrationState,
    cfg: &OptConfig,
    mut monitor: Option<&mut Monitor<'_>>,
) -> Result<CalibrationState> {
    cfg.validate()?;
    state.params.check_shape(objective.bases)?;
    if state.adam.first.len() != state.params.len() {
        return Err(Error::Dimension("optimizer moments do not match the coefficients".into()));
    }
    while !state.converged && state.history.len() < cfg.max_iterations {
        let iteration = state.history.len();
        let eval = objective.evaluate(&state.params, true)?;
        let test_metric = match monitor.as_mut() {
            Some(m) => Some(m(&state.params)?),
            None => None,
        };
        state.history.push(HistoryEntry {
            iteration,
            train_loss: eval.loss,
            test_metric,
        });
        if state.stalled(cfg.window, cfg.rel_tol) {
            state.converged = true;
            break;
        }
        let mut x = state.params.flatten();
        state.adam.update(&mut x, &eval.grad.expect("requested"), cfg);
        state.params = state.params.with_flat(&x);
    }
    Ok(state)
}

/// Full calibration from a random start.
pub fn calibrate(
    scene: &Scene,
    bases: &BasisSet,
    r_train: &Ccm,
    area: &Area,
    cfg: &OptConfig,
    loss: LossConfig,
) -> Result<CalibrationState> {
    cfg.validate()?;
    let objective = Objective::new(scene, bases, r_train, area, loss, cfg.n_mc, cfg.seed)?;
    let state = CalibrationState::initial(bases, scene.model.g_max, cfg.seed);
    run(&objective, state, cfg, None)
}

/// Forward CCM estimate at calibrated coefficients in any area and domain.
pub fn extrapolate(
    scene: &Scene,
    bases: &BasisSet,
    params: &RoughnessParams,
    area: &Area,
    domain: Domain,
    n_mc: usize,
    seed: u64,
    purpose: Purpose,
) -> Result<Ccm> {
    let samples = McSamples::draw(scene, area, n_mc, seed, purpose)?;
    let alpha = roughness_field(params, bases)?;
    Ok(estimate_ccm(&calibration_model(scene), &samples, &alpha, domain, false)?.ccm)
}

/// Everything needed to resume or extrapolate from a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub train_area: String,
    pub opt: OptConfig,
    pub loss: LossConfig,
    pub bases: Vec<BasisSpec>,
    pub state: CalibrationState,
}

impl Checkpoint {
    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("checkpoint", e.to_string()))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cp: Checkpoint = toml::from_str(text).map_err(|e| Error::from_toml(text, &e))?;
        if cp.bases.len() != cp.state.params.coeffs.len()
            || cp
                .bases
                .iter()
                .zip(&cp.state.params.coeffs)
                .any(|(b, c)| b.k_eig != c.len())
        {
            return Err(Error::format("checkpoint", "coefficients do not match basis specs"));
        }
        if cp.state.adam.first.len() != cp.state.params.len()
            || cp.state.adam.second.len() != cp.state.params.len()
        {
            return Err(Error::format("checkpoint", "optimizer moments do not match coefficients"));
        }
        if cp.state.history.windows(2).any(|w| w[1].iteration <= w[0].iteration) {
            return Err(Error::format("checkpoint", "history iterations must increase"));
        }
        Ok(cp)
    }
}
