//! Monte-Carlo channel correlation matrices.
//!
//! `R = (1/N) sum_k h_k h_k^H` over responses at `N` receiver positions drawn
//! uniformly in an area. Positions, phases and traced paths are drawn once
//! into [`McSamples`] and reused, so repeated estimates at different
//! roughness values share common random numbers.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{draw_phases, ChannelModel, ResponseJacobian};
use crate::error::{Error, Result};
use crate::raytrace::{trace, PathSet};
use crate::rng::{self, Purpose};
use crate::scene::{Area, Scene, Vec3};
use crate::Domain;

/// A channel correlation matrix with its domain tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Ccm {
    pub domain: Domain,
    pub matrix: DMatrix<Complex64>,
    pub n_mc: usize,
}

impl Ccm {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Real part of the trace divided by the dimension.
    pub fn mean_power(&self) -> f64 {
        self.matrix.trace().re / self.dim() as f64
    }

    /// `max |R - R^H| / max |R|`.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let diff = (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        diff / scale
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let mut v: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Count of eigenvalues above `rel_tol * largest`.
    pub fn numerical_rank(&self, rel_tol: f64) -> usize {
        let ev = self.eigenvalues();
        let top = ev.last().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        ev.iter().filter(|&&v| v > rel_tol * top).count()
    }

    /// Text form: header lines, then `n * n` row-major `re im` pairs at
    /// 17 significant digits.
    pub fn to_text(&self) -> String {
        let n = self.dim();
        let mut out = format!("ccm 1\ndomain {}\nn {n}\nn_mc {}\n", self.domain, self.n_mc);
        for i in 0..n {
            for j in 0..n {
                let z = self.matrix[(i, j)];
                writeln!(out, "{:.16e} {:.16e}", z.re, z.im).expect("string write");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Ccm> {
        let bad = |m: String| Error::format("CCM file", m);
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing `{key}` line")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(bad(format!("expected `{key}`, found `{line}`"))),
            }
        };
        if header("ccm")? != "1" {
            return Err(bad("unsupported version".into()));
        }
        let domain: Domain = header("domain")?.parse()?;
        let n: usize = header("n")?.parse().map_err(|e| bad(format!("n: {e}")))?;
        let n_mc: usize = header("n_mc")?.parse().map_err(|e| bad(format!("n_mc: {e}")))?;
        if n == 0 || n_mc == 0 {
            return Err(bad("n and n_mc must be positive".into()));
        }
        let mut entries = Vec::with_capacity(n * n);
        for line in lines {
            let mut it = line.split_whitespace();
            let (Some(re), Some(im), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad(format!("entry line `{line}` is not `re im`")));
            };
            let re: f64 = re.parse().map_err(|e| bad(format!("`{re}`: {e}")))?;
            let im: f64 = im.parse().map_err(|e| bad(format!("`{im}`: {e}")))?;
            entries.push(Complex64::new(re, im));
        }
        if entries.len() != n * n {
            return Err(bad(format!("{} entries for n = {n}", entries.len())));
        }
        let ccm = Ccm {
            domain,
            matrix: DMatrix::from_row_slice(n, n, &entries),
            n_mc,
        };
        let defect = ccm.hermitian_defect();
        if defect > 1e-10 {
            return Err(bad(format!("matrix is not Hermitian (relative defect {defect:e})")));
        }
        Ok(ccm)
    }

    pub fn check_compatible(&self, other: &Ccm) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch {
                expected: self.domain,
                found: other.domain,
            });
        }
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{} correlation matrices",
                self.dim(),
                self.dim(),
                other.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Frozen Monte-Carlo draws: receiver positions, one phase per scene tile
/// per position, and the traced paths.
#[derive(Debug, Clone, PartialEq)]
pub struct McSamples {
    pub positions: Vec<Vec3>,
    pub phases: Vec<Vec<f64>>,
    pub paths: Vec<PathSet>,
}

impl McSamples {
    /// Draws `n_mc` positions in `area` from the purpose's position stream;
    /// position `k` takes its phases from block `k` of the phase stream.
    pub fn draw(scene: &Scene, area: &Area, n_mc: usize, seed: u64, purpose: Purpose) -> Result<Self> {
        if n_mc == 0 {
            return Err(Error::InvalidArgument("n_mc must be at least 1".into()));
        }
        let (pos_stream, phase_stream) = purpose.streams();
        let positions = area.sample_positions(n_mc, &mut rng::stream(seed, pos_stream));
        let n_tiles = scene.total_tiles();
        let phases = (0..n_mc)
            .map(|k| {
                draw_phases(
                    &mut rng::substream(seed, phase_stream, k),
                    n_tiles,
                    scene.model.phase_span,
                )
            })
            .collect();
        Self::with_draws(scene, positions, phases)
    }

    /// Traces paths for explicit positions and phases.
    pub fn with_draws(scene: &Scene, positions: Vec<Vec3>, phases: Vec<Vec<f64>>) -> Result<Self> {
        let n_tiles = scene.total_tiles();
        if positions.len() != phases.len() || phases.iter().any(|p| p.len() != n_tiles) {
            return Err(Error::Dimension("phase draws do not match positions and tiles".into()));
        }
        let paths = positions
            .par_iter()
            .map(|rx| trace(scene, rx))
            .collect::<Result<Vec<_>>>()?;
        Ok(McSamples {
            positions,
            phases,
            paths,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// An estimated CCM plus what is needed to pull gradients back to tiles.
#[derive(Debug, Clone)]
pub struct CcmEstimate {
    pub ccm: Ccm,
    pub responses: Vec<DVector<Complex64>>,
    pub jacobians: Option<Vec<ResponseJacobian>>,
    pub n_tiles: usize,
    /// Set when no position received any path; the matrix is then zero.
    pub no_paths: bool,
}

impl CcmEstimate {
    /// Contracts an upstream Hermitian gradient `G = dLoss/dR` to
    /// `dLoss/dalpha_t = (2/N) sum_k Re[(dh_k/dalpha_t)^H G h_k]` per tile.
    pub fn contract(&self, upstream: &DMatrix<Complex64>) -> Result<Vec<f64>> {
        let jac = self
            .jacobians
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("estimate was built without Jacobians".into()))?;
        let n = self.ccm.dim();
        if upstream.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "upstream gradient is {:?}, CCM is {n}x{n}",
                upstream.shape()
            )));
        }
        let per_sample: Vec<Vec<(usize, f64)>> = self
            .responses
            .par_iter()
            .zip(jac.par_iter())
            .map(|(h, j)| {
                let gh = upstream * h;
                j.tiles
                    .iter()
                    .zip(&j.dh)
                    .map(|(&t, dh)| (t, dh.dotc(&gh).re))
                    .collect()
            })
            .collect();
        let mut grad = vec![0.0; self.n_tiles];
        for sample in per_sample {
            for (t, v) in sample {
                grad[t] += v;
            }
        }
        let scale = 2.0 / self.ccm.n_mc as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok(grad)
    }
}

/// `(1/N) sum_k h_k h_k^H`, upper triangle accumulated and mirrored so the
/// result is exactly Hermitian.
pub fn outer_mean(responses: &[DVector<Complex64>], n: usize) -> DMatrix<Complex64> {
    let mut r = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for h in responses {
        for i in 0..n {
            for j in i..n {
                r[(i, j)] += h[i] * h[j].conj();
            }
        }
    }
    let inv = 1.0 / responses.len().max(1) as f64;
    for i in 0..n {
        r[(i, i)] = Complex64::new(r[(i, i)].re * inv, 0.0);
        for j in i + 1..n {
            let v = r[(i, j)] * inv;
            r[(i, j)] = v;
            r[(j, i)] = v.conj();
        }
    }
    r
}

/// Estimates the CCM of `domain` from frozen samples at per-tile roughness
/// `alpha`. Work is spread over the rayon pool; the reduction runs in sample
/// order so the result does not depend on the worker count.
pub fn estimate_ccm(
    model: &ChannelModel<'_>,
    samples: &McSamples,
    alpha: &[f64],
    domain: Domain,
    with_jacobian: bool,
) -> Result<CcmEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("n_mc must be at least 1".into()));
    }
    let n = model.dim(domain);
    let out = samples
        .paths
        .par_iter()
        .zip(samples.phases.par_iter())
        .map(|(paths, phases)| model.response(paths, alpha, phases, domain, with_jacobian))
        .collect::<Result<Vec<_>>>()?;
    let no_paths = samples.paths.iter().all(|p| p.paths.is_empty());
    let (responses, jacobians): (Vec<_>, Vec<_>) = out.into_iter().map(|(r, j)| (r.h, j)).unzip();
    let matrix = outer_mean(&responses, n);
    Ok(CcmEstimate {
        ccm: Ccm {
            domain,
            matrix,
            n_mc: samples.len(),
        },
        responses,
        jacobians: if with_jacobian {
            Some(jacobians.into_iter().map(|j| j.expect("requested")).collect())
        } else {
            None
        },
        n_tiles: alpha.len(),
        no_paths,
    })
}
