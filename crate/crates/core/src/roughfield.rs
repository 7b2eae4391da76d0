//! Roughness field parameterization.
//!
//! Each scatterer carries a latent Gaussian field `Z` over its tiles with
//! unit variance and correlation `exp(-d / l_corr)` between tile centers.
//! The field is truncated to its leading principal components,
//!
//! ```text
//! vec(Z) = Q diag(sqrt(eigvals)) lambda
//! ```
//!
//! and mapped to per-tile roughness through the scaled logistic
//! `g(z) = g_max / (1 + e^{-z})`, which keeps every `alpha_r` strictly
//! inside `(0, g_max)` without clipping.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Scatterer, Scene};

/// Default fraction of the correlation trace kept by the truncation.
pub const DEFAULT_ENERGY: f64 = 0.95;

/// Default correlation length: two tile sides.
pub fn default_l_corr(s: &Scatterer) -> f64 {
    2.0 * s.tile_side
}

/// Exponential tile-to-tile correlation matrix, row-major tile order.
pub fn build_corr(s: &Scatterer, l_corr: f64) -> Result<DMatrix<f64>> {
    if !(l_corr > 0.0 && l_corr.is_finite()) {
        return Err(Error::InvalidArgument(format!("l_corr must be positive, got {l_corr}")));
    }
    let centers = s.tile_centers();
    let n = centers.len();
    Ok(DMatrix::from_fn(n, n, |p, q| {
        if p == q {
            1.0
        } else {
            (-(centers[p] - centers[q]).norm() / l_corr).exp()
        }
    }))
}

/// Full symmetric eigendecomposition with eigenvalues sorted descending
/// and each eigenvector's largest-magnitude entry made positive.
pub fn sorted_spectrum(rz: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if !rz.is_square() {
        return Err(Error::Dimension(format!(
            "correlation matrix is {}x{}",
            rz.nrows(),
            rz.ncols()
        )));
    }
    let eig = SymmetricEigen::new(rz.clone());
    let mut order: Vec<usize> = (0..rz.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = eig.eigenvectors.select_columns(&order);
    for mut col in vecs.column_iter_mut() {
        let lead = col.iter().fold(0.0f64, |best, &x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            col.neg_mut();
        }
    }
    Ok((vals, vecs))
}

/// Smallest `k` whose leading eigenvalues hold at least `fraction` of the trace.
pub fn energy_rank(eigvals_desc: &[f64], fraction: f64) -> usize {
    let total: f64 = eigvals_desc.iter().map(|v| v.max(0.0)).sum();
    let mut acc = 0.0;
    for (k, v) in eigvals_desc.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= fraction * total {
            return k + 1;
        }
    }
    eigvals_desc.len()
}

/// Truncated eigenbasis of one scatterer's roughness field.
#[derive(Debug, Clone, PartialEq)]
pub struct KlBasis {
    pub scatterer_id: usize,
    pub l_corr: f64,
    /// Retained eigenvalues, descending, all positive.
    pub eigvals: Vec<f64>,
    /// `(m_tile * n_tile) x k_eig`, orthonormal columns.
    pub basis: DMatrix<f64>,
}

impl KlBasis {
    /// Keeps the `k_eig` leading components of `rz`.
    pub fn from_corr(scatterer_id: usize, l_corr: f64, rz: &DMatrix<f64>, k_eig: usize) -> Result<Self> {
        let dim = rz.nrows();
        if k_eig == 0 || k_eig > dim {
            return Err(Error::Dimension(format!(
                "k_eig = {k_eig} is outside 1..={dim}"
            )));
        }
        let (vals, vecs) = sorted_spectrum(rz)?;
        if vals[k_eig - 1] <= 0.0 {
            return Err(Error::Numerical(format!(
                "eigenvalue {} of the correlation matrix is not positive ({:e})",
                k_eig - 1,
                vals[k_eig - 1]
            )));
        }
        Ok(KlBasis {
            scatterer_id,
            l_corr,
            eigvals: vals[..k_eig].to_vec(),
            basis: vecs.columns(0, k_eig).into_owned(),
        })
    }

    /// Basis for a scatterer; `None` picks the defaults (`2 * tile_side`,
    /// smallest rank holding 95% of the trace).
    pub fn for_scatterer(s: &Scatterer, l_corr: Option<f64>, k_eig: Option<usize>) -> Result<Self> {
        let l_corr = l_corr.unwrap_or_else(|| default_l_corr(s));
        let rz = build_corr(s, l_corr)?;
        let k = match k_eig {
            Some(k) => k,
            None => energy_rank(&sorted_spectrum(&rz)?.0, DEFAULT_ENERGY),
        };
        Self::from_corr(s.id, l_corr, &rz, k)
    }

    pub fn k_eig(&self) -> usize {
        self.eigvals.len()
    }

    pub fn n_tiles(&self) -> usize {
        self.basis.nrows()
    }

    /// `Q diag(sqrt(eigvals))`, the map from coefficients to `vec(Z)`.
    pub fn loading(&self) -> DMatrix<f64> {
        let mut m = self.basis.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= self.eigvals[j].sqrt();
        }
        m
    }

    /// `vec(Z)` for coefficient vector `lambda`.
    pub fn latent(&self, lambda: &[f64]) -> Result<DVector<f64>> {
        if lambda.len() != self.k_eig() {
            return Err(Error::Dimension(format!(
                "scatterer {}: {} coefficients for k_eig = {}",
                self.scatterer_id,
                lambda.len(),
                self.k_eig()
            )));
        }
        let scaled = DVector::from_iterator(
            lambda.len(),
            lambda.iter().zip(&self.eigvals).map(|(l, e)| l * e.sqrt()),
        );
        Ok(&self.basis * scaled)
    }
}

/// Per-scatterer `(l_corr, k_eig)` choice, enough to rebuild a basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub l_corr: f64,
    pub k_eig: usize,
}

/// One basis per scatterer, in scene order.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub bases: Vec<KlBasis>,
}

impl BasisSet {
    /// Bases from scene-file overrides or the defaults.
    pub fn for_scene(scene: &Scene) -> Result<Self> {
        let bases = scene
            .scatterers
            .iter()
            .map(|s| KlBasis::for_scatterer(s, s.l_corr, s.k_eig))
            .collect::<Result<_>>()?;
        Ok(BasisSet { bases })
    }

    pub fn from_specs(scene: &Scene, specs: &[BasisSpec]) -> Result<Self> {
        if specs.len() != scene.scatterers.len() {
            return Err(Error::Dimension(format!(
                "{} basis specs for {} scatterers",
                specs.len(),
                scene.scatterers.len()
            )));
        }
        let bases = scene
            .scatterers
            .iter()
            .zip(specs)
            .map(|(s, spec)| KlBasis::for_scatterer(s, Some(spec.l_corr), Some(spec.k_eig)))
            .collect::<Result<_>>()?;
        Ok(BasisSet { bases })
    }

    pub fn specs(&self) -> Vec<BasisSpec> {
        self.bases
            .iter()
            .map(|b| BasisSpec {
                l_corr: b.l_corr,
                k_eig: b.k_eig(),
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.bases.iter().map(KlBasis::k_eig).sum()
    }
}

/// Scaled logistic `g(z) = g_max / (1 + e^{-z})`.
pub fn roughness(z: f64, g_max: f64) -> f64 {
    g_max * sigmoid(z)
}

/// `g'(z) = g_max * s(z) * (1 - s(z))`.
pub fn roughness_slope(z: f64, g_max: f64) -> f64 {
    let s = sigmoid(z);
    g_max * s * (1.0 - s)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`roughness`] on `(0, g_max)`.
pub fn latent_of(alpha: f64, g_max: f64) -> f64 {
    let p = alpha / g_max;
    (p / (1.0 - p)).ln()
}

/// The calibrated quantity: one coefficient vector per scatterer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughnessParams {
    pub coeffs: Vec<Vec<f64>>,
    pub g_max: f64,
}

impl RoughnessParams {
    pub fn zeros(set: &BasisSet, g_max: f64) -> Self {
        RoughnessParams {
            coeffs: set.bases.iter().map(|b| vec![0.0; b.k_eig()]).collect(),
            g_max,
        }
    }

    /// i.i.d. standard normal coefficients.
    pub fn random<R: Rng + ?Sized>(set: &BasisSet, g_max: f64, rng: &mut R) -> Self {
        RoughnessParams {
            coeffs: set
                .bases
                .iter()
                .map(|b| (0..b.k_eig()).map(|_| rng.sample(StandardNormal)).collect())
                .collect(),
            g_max,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.coeffs.iter().flatten().copied().collect()
    }

    /// Same shape as `self`, values from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        let mut it = flat.iter().copied();
        RoughnessParams {
            coeffs: self
                .coeffs
                .iter()
                .map(|c| c.iter().map(|_| it.next().expect("flat length")).collect())
                .collect(),
            g_max: self.g_max,
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_shape(&self, set: &BasisSet) -> Result<()> {
        if self.coeffs.len() != set.bases.len()
            || self.coeffs.iter().zip(&set.bases).any(|(c, b)| c.len() != b.k_eig())
        {
            return Err(Error::Dimension(
                "roughness coefficients do not match the basis set".into(),
            ));
        }
        Ok(())
    }
}

/// Latent field and roughness of one scatterer, row-major tile order.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub z: Vec<f64>,
    pub alpha: Vec<f64>,
}

pub fn expand(lambda: &[f64], basis: &KlBasis, g_max: f64) -> Result<Expansion> {
    let z: Vec<f64> = basis.latent(lambda)?.iter().copied().collect();
    let alpha = z.iter().map(|&z| roughness(z, g_max)).collect();
    Ok(Expansion { z, alpha })
}

/// Pulls `dLoss/dA` back to `dLoss/dlambda` for one scatterer.
pub fn expand_grad(lambda: &[f64], basis: &KlBasis, g_max: f64, upstream: &[f64]) -> Result<Vec<f64>> {
    if upstream.len() != basis.n_tiles() {
        return Err(Error::Dimension(format!(
            "upstream gradient has {} entries for {} tiles",
            upstream.len(),
            basis.n_tiles()
        )));
    }
    let z = basis.latent(lambda)?;
    let dz = DVector::from_iterator(
        z.len(),
        z.iter().zip(upstream).map(|(&z, &u)| u * roughness_slope(z, g_max)),
    );
    let proj = basis.basis.tr_mul(&dz);
    Ok(proj
        .iter()
        .zip(&basis.eigvals)
        .map(|(p, e)| p * e.sqrt())
        .collect())
}

/// Scene-wide roughness per tile.
pub fn roughness_field(params: &RoughnessParams, set: &BasisSet) -> Result<Vec<f64>> {
    params.check_shape(set)?;
    let mut out = Vec::new();
    for (lambda, basis) in params.coeffs.iter().zip(&set.bases) {
        out.extend(expand(lambda, basis, params.g_max)?.alpha);
    }
    Ok(out)
}

/// Scene-wide pullback of a per-tile gradient.
pub fn roughness_field_grad(params: &RoughnessParams, set: &BasisSet, upstream: &[f64]) -> Result<Vec<Vec<f64>>> {
    params.check_shape(set)?;
    let total: usize = set.bases.iter().map(KlBasis::n_tiles).sum();
    if upstream.len() != total {
        return Err(Error::Dimension(format!(
            "upstream gradient has {} entries for {total} tiles",
            upstream.len()
        )));
    }
    let mut offset = 0;
    params
        .coeffs
        .iter()
        .zip(&set.bases)
        .map(|(lambda, basis)| {
            let n = basis.n_tiles();
            let g = expand_grad(lambda, basis, params.g_max, &upstream[offset..offset + n]);
            offset += n;
            g
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    g_max: f64,
    scatterer: Vec<ParamsEntry>,
}

#[derive(Serialize, Deserialize)]
struct ParamsEntry {
    id: usize,
    l_corr: f64,
    k_eig: usize,
    lambda: Vec<f64>,
}

impl RoughnessParams {
    /// Text form: per scatterer, `k_eig`, `l_corr` and the coefficients in
    /// shortest round-trip decimal.
    pub fn to_text(&self, set: &BasisSet) -> String {
        let file = ParamsFile {
            g_max: self.g_max,
            scatterer: set
                .bases
                .iter()
                .zip(&self.coeffs)
                .map(|(b, c)| ParamsEntry {
                    id: b.scatterer_id,
                    l_corr: b.l_corr,
                    k_eig: b.k_eig(),
                    lambda: c.clone(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("params serialize")
    }

    /// Inverse of [`RoughnessParams::to_text`]; returns the basis specs too.
    pub fn from_text(text: &str) -> Result<(Self, Vec<BasisSpec>)> {
        let file: ParamsFile = toml::from_str(text).map_err(|e| Error::from_toml(text, &e))?;
        let mut specs = Vec::new();
        let mut coeffs = Vec::new();
        for e in file.scatterer {
            if e.lambda.len() != e.k_eig {
                return Err(Error::format(
                    "roughness parameters",
                    format!("scatterer {}: {} values for k_eig = {}", e.id, e.lambda.len(), e.k_eig),
                ));
            }
            specs.push(BasisSpec {
                l_corr: e.l_corr,
                k_eig: e.k_eig,
            });
            coeffs.push(e.lambda);
        }
        Ok((
            RoughnessParams {
                coeffs,
                g_max: file.g_max,
            },
            specs,
        ))
    }
}
