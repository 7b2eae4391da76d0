//! CCM mismatch losses and their gradients with respect to the estimate.
//!
//! With an identity pilot matrix and noise variance `1/snr`, channel
//! estimation error under an MMSE filter built from `R_hat` splits into a
//! floor that depends only on the true `R` and a mismatch term
//!
//! ```text
//! L1 = (1/snr^2) tr( R (Ry^{-1} - Ry_hat^{-1})^2 ),   Ry = R + I/snr
//! ```
//!
//! which vanishes at `R_hat = R`. Spatial CCMs use the squared Frobenius
//! distance `L2 = ||R - R_hat||_F^2`.
//!
//! Gradients are returned as a Hermitian matrix `G` with
//! `dL = Re tr(G^H dR_hat)`.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ccm::Ccm;
use crate::error::{Error, Result};
use crate::Domain;

type CMat = DMatrix<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mmse,
    Frobenius,
}

impl LossKind {
    /// The CCM domain this loss is paired with.
    pub fn domain(self) -> Domain {
        match self {
            LossKind::Mmse => Domain::Frequency,
            LossKind::Frobenius => Domain::Spatial,
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmse" => Ok(LossKind::Mmse),
            "frobenius" | "frob" => Ok(LossKind::Frobenius),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss `{other}` (expected `mmse` or `frobenius`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Linear signal-to-noise ratio, `1 / sigma_n^2`.
    pub snr: f64,
}

impl LossConfig {
    pub fn new(kind: LossKind, snr: f64) -> Result<Self> {
        check_snr(snr)?;
        Ok(LossConfig { kind, snr })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: CMat,
    /// Set when a regularizing jitter had to be added to a noisy covariance.
    pub jittered: bool,
}

/// Both summands of the mismatched-MMSE estimation error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmseError {
    /// `(1/snr) tr(R Ry^{-1})`
    pub floor: f64,
    /// `L1`
    pub variable: f64,
    pub jittered: bool,
}

impl MmseError {
    pub fn total(&self) -> f64 {
        self.floor + self.variable
    }
}

fn check_snr(snr: f64) -> Result<()> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::InvalidArgument(format!("snr must be positive, got {snr}")));
    }
    Ok(())
}

fn check_pair(r: &CMat, r_hat: &CMat) -> Result<()> {
    if !r.is_square() || r.shape() != r_hat.shape() {
        return Err(Error::Dimension(format!(
            "R is {:?}, R_hat is {:?}",
            r.shape(),
            r_hat.shape()
        )));
    }
    Ok(())
}

/// Inverse of `m + I/snr` through a Hermitian factorization, jittered when
/// the smallest eigenvalue falls below `1e-12 * trace / n`.
fn noisy_inverse(m: &CMat, snr: f64) -> Result<(CMat, bool)> {
    let n = m.nrows();
    let mut ry = hermitian_part(m);
    for i in 0..n {
        ry[(i, i)] += Complex64::new(1.0 / snr, 0.0);
    }
    let scale = ry.trace().re / n as f64;
    let min_eig = SymmetricEigen::new(ry.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let jittered = !(min_eig >= 1e-12 * scale);
    if jittered {
        let j = 1e-10 * scale.abs().max(f64::MIN_POSITIVE);
        for i in 0..n {
            ry[(i, i)] += Complex64::new(j, 0.0);
        }
    }
    let chol = Cholesky::new(ry)
        .ok_or_else(|| Error::Numerical("noisy covariance is not positive definite".into()))?;
    Ok((chol.inverse(), jittered))
}

fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn trace_re(m: &CMat) -> f64 {
    m.trace().re
}

fn mmse_parts(r: &CMat, r_hat: &CMat, snr: f64, with_grad: bool) -> Result<(MmseError, Option<CMat>)> {
    check_snr(snr)?;
    check_pair(r, r_hat)?;
    let (ry_inv, j1) = noisy_inverse(r, snr)?;
    let (ry_hat_inv, j2) = noisy_inverse(r_hat, snr)?;
    let d = &ry_inv - &ry_hat_inv;
    let rd = r * &d;
    let s2 = 1.0 / (snr * snr);
    let variable = (s2 * trace_re(&(&rd * &d))).max(0.0);
    let floor = trace_re(&(r * &ry_inv)) / snr;
    let grad = with_grad.then(|| {
        let inner = &rd + &d * r;
        let g = &ry_hat_inv * inner * &ry_hat_inv * Complex64::new(s2, 0.0);
        hermitian_part(&g)
    });
    Ok((
        MmseError {
            floor,
            variable,
            jittered: j1 || j2,
        },
        grad,
    ))
}

/// `L1` on raw matrices.
pub fn mmse_loss_matrix(r: &CMat, r_hat: &CMat, snr: f64) -> Result<LossValue> {
    let (e, g) = mmse_parts(r, r_hat, snr, true)?;
    Ok(LossValue {
        value: e.variable,
        grad: g.expect("requested"),
        jittered: e.jittered,
    })
}

/// `L2` on raw matrices.
pub fn frob_loss_matrix(r: &CMat, r_hat: &CMat) -> Result<LossValue> {
    check_pair(r, r_hat)?;
    let diff = r_hat - r;
    Ok(LossValue {
        value: diff.iter().map(|z| z.norm_sqr()).sum(),
        grad: diff * Complex64::new(2.0, 0.0),
        jittered: false,
    })
}

pub fn mmse_full_error_matrix(r: &CMat, r_hat: &CMat, snr: f64) -> Result<MmseError> {
    Ok(mmse_parts(r, r_hat, snr, false)?.0)
}

fn check_ccms(r: &Ccm, r_hat: &Ccm) -> Result<()> {
    r.check_compatible(r_hat)
}

/// Mismatched-MMSE loss `L1` and its gradient.
pub fn mmse_loss(r: &Ccm, r_hat: &Ccm, snr: f64) -> Result<LossValue> {
    check_ccms(r, r_hat)?;
    mmse_loss_matrix(&r.matrix, &r_hat.matrix, snr)
}

/// Squared Frobenius loss `L2` and its gradient `2 (R_hat - R)`.
pub fn frob_loss(r: &Ccm, r_hat: &Ccm) -> Result<LossValue> {
    check_ccms(r, r_hat)?;
    frob_loss_matrix(&r.matrix, &r_hat.matrix)
}

/// Floor and mismatch terms of the estimation error.
pub fn mmse_full_error(r: &Ccm, r_hat: &Ccm, snr: f64) -> Result<MmseError> {
    check_ccms(r, r_hat)?;
    mmse_full_error_matrix(&r.matrix, &r_hat.matrix, snr)
}

/// Dispatches on `cfg.kind` for raw matrices.
pub fn loss_matrix(cfg: &LossConfig, r: &CMat, r_hat: &CMat) -> Result<LossValue> {
    match cfg.kind {
        LossKind::Mmse => mmse_loss_matrix(r, r_hat, cfg.snr),
        LossKind::Frobenius => frob_loss_matrix(r, r_hat),
    }
}
