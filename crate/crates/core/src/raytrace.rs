//! Single-bounce path enumeration `Tx -> tile -> Rx`.
//!
//! Each tile contributes at most one path, scattering at the tile center.
//! A path exists when both endpoints see the tile's front face and neither
//! leg is blocked by another scatterer. The direct `Tx -> Rx` path is never
//! produced. Geometry here is independent of roughness.

use crate::error::{Error, Result};
use crate::scene::{Scatterer, Scene, Vec3, PLANE_TOL, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    /// Index of the scatterer in scene order.
    pub scatterer: usize,
    pub tile: (usize, usize),
    /// Scene-wide tile index.
    pub tile_index: usize,
    pub point: Vec3,
    pub len_in: f64,
    pub len_out: f64,
    /// Incident propagation direction, Tx toward the tile.
    pub k_i: Vec3,
    /// Scattered propagation direction, tile toward Rx.
    pub k_s: Vec3,
    /// Specular reflection of `k_i` about the tile normal.
    pub k_r: Vec3,
    /// Incidence angle from the normal, radians.
    pub theta_i: f64,
    /// Propagation delay, seconds.
    pub tau: f64,
}

impl Path {
    pub fn length(&self) -> f64 {
        self.len_in + self.len_out
    }

    /// `1 - k_r . k_s`, the exponent driver of the scattering lobe.
    pub fn lobe_offset(&self) -> f64 {
        (1.0 - self.k_r.dot(&self.k_s)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub rx: Vec3,
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn n_ray(&self) -> usize {
        self.paths.len()
    }
}

/// Distance along a unit ray to the scatterer rectangle, bounds inclusive.
/// Rays parallel to the plane never hit.
pub fn ray_rect_intersect(origin: &Vec3, dir: &Vec3, s: &Scatterer) -> Option<f64> {
    let denom = dir.dot(&s.normal);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = (s.center - origin).dot(&s.normal) / denom;
    if !(t > 0.0) {
        return None;
    }
    let (a, b) = s.local(&(origin + dir * t));
    let (eu, ev) = s.extent();
    (a.abs() <= eu / 2.0 + PLANE_TOL && b.abs() <= ev / 2.0 + PLANE_TOL).then_some(t)
}

fn blocked(scene: &Scene, skip: usize, from: &Vec3, dir: &Vec3, len: f64) -> bool {
    scene.scatterers.iter().enumerate().any(|(j, s)| {
        j != skip
            && ray_rect_intersect(from, dir, s)
                .is_some_and(|t| t > PLANE_TOL && t < len - PLANE_TOL)
    })
}

/// Enumerates every visible single-bounce path to `rx`.
pub fn trace(scene: &Scene, rx: &Vec3) -> Result<PathSet> {
    let tx = scene.transmitter.position;
    if (rx - tx).norm() <= PLANE_TOL {
        return Err(Error::Degenerate("receiver coincides with the transmitter".into()));
    }
    let offsets = scene.tile_offsets();
    let mut paths = Vec::new();
    for (si, s) in scene.scatterers.iter().enumerate() {
        let n = s.normal;
        // front-side tests do not depend on the tile for a planar scatterer
        if (tx - s.center).dot(&n) <= 0.0 || (rx - s.center).dot(&n) <= 0.0 {
            continue;
        }
        for r in 0..s.m_tile {
            for c in 0..s.n_tile {
                let p = s.tile_center(r, c)?;
                let d_in = p - tx;
                let d_out = rx - p;
                let (len_in, len_out) = (d_in.norm(), d_out.norm());
                let k_i = d_in / len_in;
                let k_s = d_out / len_out;
                let cos_in = -k_i.dot(&n);
                if !(cos_in > 0.0 && k_s.dot(&n) > 0.0) {
                    continue;
                }
                if blocked(scene, si, &tx, &k_i, len_in) || blocked(scene, si, &p, &k_s, len_out) {
                    continue;
                }
                let k_r = k_i - n * (2.0 * k_i.dot(&n));
                paths.push(Path {
                    scatterer: si,
                    tile: (r, c),
                    tile_index: offsets[si] + s.flat_index(r, c),
                    point: p,
                    len_in,
                    len_out,
                    k_i,
                    k_s,
                    k_r,
                    theta_i: cos_in.min(1.0).acos(),
                    tau: (len_in + len_out) / SPEED_OF_LIGHT,
                });
            }
        }
    }
    Ok(PathSet { rx: *rx, paths })
}

/// One line per path: scatterer id, tile, delay, incidence angle and the
/// angle between the scattered and specular directions.
pub fn dump_paths(scene: &Scene, set: &PathSet) -> String {
    let mut out = format!(
        "# rx {} {} {}\n# scatterer row col tau_s theta_i_rad offspecular_rad\n",
        set.rx.x, set.rx.y, set.rx.z
    );
    for p in &set.paths {
        let off = p.k_r.dot(&p.k_s).clamp(-1.0, 1.0).acos();
        out.push_str(&format!(
            "{} {} {} {:.16e} {:.16e} {:.16e}\n",
            scene.scatterers[p.scatterer].id, p.tile.0, p.tile.1, p.tau, p.theta_i, off
        ));
    }
    out
}
