//! Path gains and channel responses.
//!
//! The complex gain of a path scattered by a tile of roughness `alpha` is
//!
//! ```text
//! a = lambda_c / (4 pi L) * G_tx(k_i) * Gamma(theta_i, eta) * exp(-alpha (1 - k_r . k_s)) / a(alpha)
//! ```
//!
//! with `L` the unfolded path length, `G_tx` the half-wave dipole amplitude
//! pattern, `Gamma` the mean of the TE and TM Fresnel coefficients and
//! `a(alpha)` the lobe normalization. The lobe is power-normalized over the
//! hemisphere with the specular direction on the normal:
//!
//! ```text
//! a(alpha)^2 = (1 / 2 pi) * integral_hemisphere exp(-2 alpha (1 - cos psi)) dOmega
//!            = (1 - exp(-2 alpha)) / (2 alpha)
//! ```
//!
//! Responses carry a random phase per path, so every function that builds
//! one takes the phase draws explicitly.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::raytrace::{Path, PathSet};
use crate::scene::{PhaseSpan, Transmitter, Vec3, Waveform};
use crate::Domain;

// below this the closed forms lose digits to cancellation
const SERIES_CUTOFF: f64 = 1e-3;

/// Squared lobe normalization `a(alpha)^2`.
fn lobe_norm_sq(alpha: f64) -> f64 {
    if alpha < SERIES_CUTOFF {
        1.0 - alpha + (2.0 / 3.0) * alpha * alpha - alpha * alpha * alpha / 3.0
    } else {
        -(-2.0 * alpha).exp_m1() / (2.0 * alpha)
    }
}

fn lobe_norm_sq_deriv(alpha: f64) -> f64 {
    if alpha < SERIES_CUTOFF {
        -1.0 + (4.0 / 3.0) * alpha - alpha * alpha + (8.0 / 15.0) * alpha * alpha * alpha
    } else {
        let e = (-2.0 * alpha).exp();
        (2.0 * alpha * e + (-2.0 * alpha).exp_m1()) / (2.0 * alpha * alpha)
    }
}

/// Lobe normalization factor `a(alpha)`; `a(0) = 1`.
pub fn lobe_norm(alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("roughness must be non-negative, got {alpha}")));
    }
    Ok(lobe_norm_sq(alpha).sqrt())
}

/// `d a / d alpha`.
pub fn lobe_norm_deriv(alpha: f64) -> Result<f64> {
    let a = lobe_norm(alpha)?;
    Ok(lobe_norm_sq_deriv(alpha) / (2.0 * a))
}

/// Normalized lobe `exp(-alpha * offset) / a(alpha)` and its derivative in
/// `alpha`, where `offset = 1 - k_r . k_s`.
pub fn lobe(alpha: f64, offset: f64) -> Result<(f64, f64)> {
    let a = lobe_norm(alpha)?;
    let da = lobe_norm_sq_deriv(alpha) / (2.0 * a);
    let value = (-alpha * offset).exp() / a;
    Ok((value, value * (-offset - da / a)))
}

/// Mean of the TE and TM reflection coefficients from air onto a medium of
/// relative permittivity `eta`. The TM reference is chosen so both
/// coefficients coincide at normal incidence.
pub fn fresnel_mean(cos_theta: f64, eta: Complex64) -> Complex64 {
    let c = cos_theta;
    let sin2 = 1.0 - c * c;
    let root = (eta - sin2).sqrt();
    let te = (c - root) / (c + root);
    let tm = (root - eta * c) / (root + eta * c);
    (te + tm) * 0.5
}

/// Half-wave dipole amplitude pattern, `cos(pi/2 cos t) / sin t`, where
/// `cos_angle = cos t` is taken against the dipole axis.
pub fn dipole_pattern(cos_angle: f64) -> f64 {
    let c = cos_angle.clamp(-1.0, 1.0);
    let s = (1.0 - c * c).sqrt();
    if s < 1e-12 {
        0.0
    } else {
        (FRAC_PI_2 * c).cos() / s
    }
}

/// Factors of one path's complex gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGain {
    pub spreading: f64,
    pub tx_gain: f64,
    pub fresnel: Complex64,
    /// `exp(-alpha (1 - k_r . k_s))`
    pub lobe_factor: f64,
    /// `a(alpha)`
    pub norm_factor: f64,
    pub gain: Complex64,
    /// `d gain / d alpha`
    pub dgain: Complex64,
}

/// Geometric part of a path gain: everything except the roughness lobe.
pub fn static_gain(path: &Path, eta: Complex64, tx: &Transmitter, carrier_hz: f64) -> Result<Complex64> {
    if !(path.theta_i < FRAC_PI_2) {
        return Err(Error::InvalidArgument(format!(
            "incidence angle {} rad is not below pi/2",
            path.theta_i
        )));
    }
    let wavelength = crate::scene::SPEED_OF_LIGHT / carrier_hz;
    let spreading = wavelength / (4.0 * PI * path.length());
    let g = dipole_pattern(path.k_i.dot(&tx.dipole_axis));
    Ok(fresnel_mean(path.theta_i.cos(), eta) * (spreading * g))
}

pub fn path_gain(path: &Path, alpha: f64, eta: Complex64, tx: &Transmitter, carrier_hz: f64) -> Result<PathGain> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("roughness must be positive, got {alpha}")));
    }
    let base = static_gain(path, eta, tx, carrier_hz)?;
    let wavelength = crate::scene::SPEED_OF_LIGHT / carrier_hz;
    let offset = path.lobe_offset();
    let (l, dl) = lobe(alpha, offset)?;
    Ok(PathGain {
        spreading: wavelength / (4.0 * PI * path.length()),
        tx_gain: dipole_pattern(path.k_i.dot(&tx.dipole_axis)),
        fresnel: fresnel_mean(path.theta_i.cos(), eta),
        lobe_factor: (-alpha * offset).exp(),
        norm_factor: lobe_norm(alpha)?,
        gain: base * l,
        dgain: base * dl,
    })
}

/// Permittivity assignment for a forward pass.
#[derive(Debug, Clone, Copy)]
pub enum Permittivity<'a> {
    /// One preset value for every tile.
    Preset(Complex64),
    /// Scene-wide per-tile values.
    PerTile(&'a [Complex64]),
}

impl Permittivity<'_> {
    pub fn of_tile(&self, tile: usize) -> Complex64 {
        match self {
            Permittivity::Preset(eta) => *eta,
            Permittivity::PerTile(v) => v[tile],
        }
    }
}

/// Draws one phase per scene tile.
pub fn draw_phases<R: Rng + ?Sized>(rng: &mut R, n_tiles: usize, span: PhaseSpan) -> Vec<f64> {
    let w = span.width();
    (0..n_tiles).map(|_| rng.random::<f64>() * w).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelResponse {
    pub domain: Domain,
    pub h: DVector<Complex64>,
    pub rx: Vec3,
}

/// Sparse `d h / d alpha_t`: one entry per contributing tile.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResponseJacobian {
    pub tiles: Vec<usize>,
    pub dh: Vec<DVector<Complex64>>,
}

/// Everything a forward pass needs besides geometry and roughness.
#[derive(Debug, Clone, Copy)]
pub struct ChannelModel<'a> {
    pub tx: &'a Transmitter,
    pub waveform: &'a Waveform,
    pub permittivity: Permittivity<'a>,
}

impl ChannelModel<'_> {
    /// Per-entry steering of a path: subcarrier delays in frequency, element
    /// offsets at the carrier in space.
    fn steering(&self, path: &Path, phase: f64, domain: Domain, out: &mut DVector<Complex64>) {
        match domain {
            Domain::Frequency => {
                for (o, f) in out.iter_mut().zip(self.waveform.subcarriers()) {
                    *o = Complex64::from_polar(1.0, -2.0 * PI * f * path.tau + phase);
                }
            }
            Domain::Spatial => {
                let wl = self.waveform.wavelength();
                let common = -2.0 * PI * self.waveform.carrier_hz * path.tau + phase;
                let offsets = self.waveform.rx_array.offsets(wl);
                for (o, d) in out.iter_mut().zip(offsets) {
                    *o = Complex64::from_polar(1.0, common - 2.0 * PI / wl * path.k_s.dot(&d));
                }
            }
        }
    }

    pub fn dim(&self, domain: Domain) -> usize {
        match domain {
            Domain::Frequency => self.waveform.n_freq,
            Domain::Spatial => self.waveform.rx_array.elements,
        }
    }

    /// Response at one receiver position and its per-tile Jacobian.
    ///
    /// `alpha` and `phases` are indexed by scene-wide tile index.
    pub fn response(
        &self,
        paths: &PathSet,
        alpha: &[f64],
        phases: &[f64],
        domain: Domain,
        with_jacobian: bool,
    ) -> Result<(ChannelResponse, Option<ResponseJacobian>)> {
        let n = self.dim(domain);
        let mut h = DVector::from_element(n, Complex64::new(0.0, 0.0));
        let mut jac = with_jacobian.then(ResponseJacobian::default);
        let mut steer = DVector::from_element(n, Complex64::new(0.0, 0.0));
        for path in &paths.paths {
            let t = path.tile_index;
            let alpha_t = *alpha.get(t).ok_or_else(|| {
                Error::Dimension(format!("no roughness for tile {t} ({} given)", alpha.len()))
            })?;
            if !(alpha_t > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "roughness of tile {t} must be positive, got {alpha_t}"
                )));
            }
            let base = static_gain(path, self.permittivity.of_tile(t), self.tx, self.waveform.carrier_hz)?;
            let (l, dl) = lobe(alpha_t, path.lobe_offset())?;
            self.steering(path, phases[t], domain, &mut steer);
            h.axpy(base * l, &steer, Complex64::new(1.0, 0.0));
            if let Some(j) = jac.as_mut() {
                j.tiles.push(t);
                j.dh.push(&steer * (base * dl));
            }
        }
        Ok((
            ChannelResponse {
                domain,
                h,
                rx: paths.rx,
            },
            jac,
        ))
    }
}

/// Frequency response over the waveform's subcarriers.
pub fn freq_response(
    model: &ChannelModel<'_>,
    paths: &PathSet,
    alpha: &[f64],
    phases: &[f64],
) -> Result<(ChannelResponse, ResponseJacobian)> {
    let (r, j) = model.response(paths, alpha, phases, Domain::Frequency, true)?;
    Ok((r, j.expect("requested")))
}

/// Receive-array response at the carrier.
pub fn spatial_response(
    model: &ChannelModel<'_>,
    paths: &PathSet,
    alpha: &[f64],
    phases: &[f64],
) -> Result<(ChannelResponse, ResponseJacobian)> {
    let (r, j) = model.response(paths, alpha, phases, Domain::Spatial, true)?;
    Ok((r, j.expect("requested")))
}

/// CSV rows of the per-path gain factors at `alpha`.
pub fn gains_csv(model: &ChannelModel<'_>, paths: &PathSet, alpha: &[f64]) -> Result<String> {
    let mut out = String::from(
        "tile,tau_s,spreading,tx_gain,fresnel_re,fresnel_im,lobe_factor,norm_factor,gain_re,gain_im\n",
    );
    for p in &paths.paths {
        let g = path_gain(
            p,
            alpha[p.tile_index],
            model.permittivity.of_tile(p.tile_index),
            model.tx,
            model.waveform.carrier_hz,
        )?;
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            p.tile_index,
            p.tau,
            g.spreading,
            g.tx_gain,
            g.fresnel.re,
            g.fresnel.im,
            g.lobe_factor,
            g.norm_factor,
            g.gain.re,
            g.gain.im
        ));
    }
    Ok(out)
}
