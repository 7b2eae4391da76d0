//! Propagation scene: tiled planar scatterers, materials, the transmitter,
//! the waveform and the named cubic areas.
//!
//! Scenes are read from a TOML document (see the book's "File formats"
//! chapter for the grammar). Once parsed, a [`Scene`] is immutable and
//! every geometric invariant has been checked.

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const ORTHO_TOL: f64 = 1e-12;
const AXIS_TOL: f64 = 1e-9;
/// Distance tolerance for on-plane and in-extent checks, meters.
pub const PLANE_TOL: f64 = 1e-9;

/// A rectangular planar scatterer divided into `m_tile x n_tile` square tiles.
///
/// Tile `(r, c)` sits at `r` steps along [`Scatterer::row_axis`] and `c`
/// steps along [`Scatterer::col_axis`]; `row_axis x col_axis = normal`.
/// Only the side the normal points to scatters.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatterer {
    pub id: usize,
    pub center: Vec3,
    pub row_axis: Vec3,
    pub col_axis: Vec3,
    pub normal: Vec3,
    pub m_tile: usize,
    pub n_tile: usize,
    pub tile_side: f64,
    /// Ground-truth material index per tile, row-major. Only used to
    /// synthesize reference data; calibration never reads it.
    pub tile_materials: Vec<usize>,
    /// Correlation length override for the roughness field, meters.
    pub l_corr: Option<f64>,
    /// Retained principal component count override.
    pub k_eig: Option<usize>,
}

impl Scatterer {
    pub fn n_tiles(&self) -> usize {
        self.m_tile * self.n_tile
    }

    /// `(length along row axis, length along column axis)` in meters.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.m_tile as f64 * self.tile_side,
            self.n_tile as f64 * self.tile_side,
        )
    }

    /// Row-major flat index of tile `(r, c)`.
    pub fn flat_index(&self, r: usize, c: usize) -> usize {
        r * self.n_tile + c
    }

    /// World-coordinate center of tile `(r, c)`.
    pub fn tile_center(&self, r: usize, c: usize) -> Result<Vec3> {
        if r >= self.m_tile || c >= self.n_tile {
            return Err(Error::TileIndex {
                row: r,
                col: c,
                rows: self.m_tile,
                cols: self.n_tile,
            });
        }
        let du = (r as f64 - (self.m_tile as f64 - 1.0) / 2.0) * self.tile_side;
        let dv = (c as f64 - (self.n_tile as f64 - 1.0) / 2.0) * self.tile_side;
        Ok(self.center + self.row_axis * du + self.col_axis * dv)
    }

    /// All tile centers in row-major order.
    pub fn tile_centers(&self) -> Vec<Vec3> {
        (0..self.m_tile)
            .flat_map(|r| (0..self.n_tile).map(move |c| (r, c)))
            .map(|(r, c)| self.tile_center(r, c).expect("in range"))
            .collect()
    }

    /// Tile containing `p`. Points on a shared edge go to the lower index.
    pub fn tile_of_point(&self, p: &Vec3) -> Result<(usize, usize)> {
        let d = p - self.center;
        let off = d.dot(&self.normal);
        if off.abs() > PLANE_TOL {
            return Err(Error::OffScatterer {
                scatterer: self.id,
                reason: format!("{off:e} m off the plane"),
            });
        }
        let (eu, ev) = self.extent();
        let a = d.dot(&self.row_axis) + eu / 2.0;
        let b = d.dot(&self.col_axis) + ev / 2.0;
        if a < -PLANE_TOL || a > eu + PLANE_TOL || b < -PLANE_TOL || b > ev + PLANE_TOL {
            return Err(Error::OffScatterer {
                scatterer: self.id,
                reason: "outside the rectangle".into(),
            });
        }
        Ok((
            edge_index(a / self.tile_side, self.m_tile),
            edge_index(b / self.tile_side, self.n_tile),
        ))
    }

    /// In-plane local coordinates of `p` relative to the scatterer center.
    pub(crate) fn local(&self, p: &Vec3) -> (f64, f64) {
        let d = p - self.center;
        (d.dot(&self.row_axis), d.dot(&self.col_axis))
    }
}

// ceil(t) - 1 sends an exact edge to the lower tile
fn edge_index(t: f64, count: usize) -> usize {
    let i = t.ceil() - 1.0;
    if i < 0.0 {
        0
    } else {
        (i as usize).min(count - 1)
    }
}

/// A surface material. Permittivity uses the `e^{+jwt}` time convention,
/// so lossy media have a non-positive imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    pub symbol: char,
    pub alpha_r_true: f64,
    pub permittivity: Complex64,
}

/// Uniform linear array: `elements` isotropic elements spaced `spacing`
/// wavelengths apart along `axis`, centered on the reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearArray {
    pub elements: usize,
    pub spacing: f64,
    pub axis: Vec3,
}

impl LinearArray {
    pub fn single() -> Self {
        LinearArray {
            elements: 1,
            spacing: 0.5,
            axis: Vec3::x(),
        }
    }

    /// Offsets of each element from the array reference, meters.
    pub fn offsets(&self, wavelength: f64) -> Vec<Vec3> {
        let mid = (self.elements as f64 - 1.0) / 2.0;
        (0..self.elements)
            .map(|k| self.axis * ((k as f64 - mid) * self.spacing * wavelength))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmitter {
    pub position: Vec3,
    /// Half-wave dipole axis, unit length.
    pub dipole_axis: Vec3,
    pub feed_voltage: f64,
    /// Optional transmit array. Responses are computed for the reference
    /// element at `position`.
    pub array: Option<LinearArray>,
}

/// Axis-aligned cube.
#[derive(Debug, Clone, PartialEq)]
pub struct Area {
    pub name: String,
    pub center: Vec3,
    pub side: f64,
}

impl Area {
    /// Closed cubes; touching faces count as intersecting.
    pub fn intersects(&self, other: &Area) -> bool {
        let reach = (self.side + other.side) / 2.0;
        (0..3).all(|i| (self.center[i] - other.center[i]).abs() <= reach)
    }

    /// `n` points i.i.d. uniform in the cube.
    pub fn sample_positions<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                let u: [f64; 3] = [rng.random(), rng.random(), rng.random()];
                self.center + Vec3::new(u[0] - 0.5, u[1] - 0.5, u[2] - 0.5) * self.side
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub n_freq: usize,
    pub rx_array: LinearArray,
}

impl Waveform {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Evenly spaced subcarriers over `[f_c - BW/2, f_c + BW/2]`, endpoints
    /// included. A single subcarrier sits on the carrier.
    pub fn subcarriers(&self) -> Vec<f64> {
        if self.n_freq == 1 {
            return vec![self.carrier_hz];
        }
        let lo = self.carrier_hz - self.bandwidth_hz / 2.0;
        let step = self.bandwidth_hz / (self.n_freq - 1) as f64;
        (0..self.n_freq).map(|k| lo + step * k as f64).collect()
    }
}

/// Support of the per-path random phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhaseSpan {
    /// Uniform on `[0, pi]`.
    #[default]
    Half,
    /// Uniform on `[0, 2 pi]`.
    Full,
}

impl PhaseSpan {
    pub fn width(self) -> f64 {
        match self {
            PhaseSpan::Half => std::f64::consts::PI,
            PhaseSpan::Full => 2.0 * std::f64::consts::PI,
        }
    }
}

/// Modelling constants shared by the truth generator and calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Preset permittivity used on the calibration side for every tile.
    pub eta_hat: Complex64,
    /// Upper bound of the roughness mapping `g`.
    pub g_max: f64,
    pub phase_span: PhaseSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub transmitter: Transmitter,
    pub waveform: Waveform,
    pub model: ModelConfig,
    pub materials: Vec<Material>,
    pub scatterers: Vec<Scatterer>,
    pub areas: Vec<Area>,
}

impl Scene {
    pub fn parse(text: &str) -> Result<Scene> {
        let raw: raw::SceneFile = toml::from_str(text).map_err(|e| Error::from_toml(text, &e))?;
        let scene = raw.into_scene()?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Scene> {
        Scene::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(&raw::SceneFile::from_scene(self)).expect("scene serializes")
    }

    pub fn area(&self, name: &str) -> Result<&Area> {
        self.areas
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::UnknownArea {
                name: name.to_string(),
                available: self
                    .areas
                    .iter()
                    .map(|a| a.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }

    pub fn total_tiles(&self) -> usize {
        self.scatterers.iter().map(Scatterer::n_tiles).sum()
    }

    /// Offset of each scatterer's first tile in the scene-wide tile order.
    pub fn tile_offsets(&self) -> Vec<usize> {
        self.scatterers
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s.n_tiles();
                Some(o)
            })
            .collect()
    }

    /// Ground-truth roughness per tile, scene-wide order.
    pub fn true_roughness(&self) -> Vec<f64> {
        self.scatterers
            .iter()
            .flat_map(|s| s.tile_materials.iter())
            .map(|&m| self.materials[m].alpha_r_true)
            .collect()
    }

    /// Ground-truth permittivity per tile, scene-wide order.
    pub fn true_permittivity(&self) -> Vec<Complex64> {
        self.scatterers
            .iter()
            .flat_map(|s| s.tile_materials.iter())
            .map(|&m| self.materials[m].permittivity)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let tx = &self.transmitter;
        check_unit(&tx.dipole_axis, AXIS_TOL, "transmitter dipole axis")?;
        if !(tx.feed_voltage.is_finite() && tx.feed_voltage > 0.0) {
            return Err(Error::InvalidScene("feed voltage must be positive".into()));
        }
        if let Some(arr) = &tx.array {
            check_array(arr, "transmitter array")?;
        }

        let w = &self.waveform;
        if !(w.carrier_hz > 0.0 && w.carrier_hz.is_finite()) {
            return Err(Error::InvalidScene("carrier frequency must be positive".into()));
        }
        if !(w.bandwidth_hz >= 0.0 && w.bandwidth_hz < 2.0 * w.carrier_hz) {
            return Err(Error::InvalidScene(
                "bandwidth must be in [0, 2 f_c)".into(),
            ));
        }
        if w.n_freq == 0 {
            return Err(Error::InvalidScene("n_freq must be at least 1".into()));
        }
        check_array(&w.rx_array, "receive array")?;

        if !(self.model.g_max > 0.0 && self.model.g_max.is_finite()) {
            return Err(Error::InvalidScene("g_max must be positive".into()));
        }
        check_permittivity(self.model.eta_hat, "eta_hat")?;

        if self.materials.is_empty() {
            return Err(Error::InvalidScene("no materials defined".into()));
        }
        for (i, m) in self.materials.iter().enumerate() {
            if !(m.alpha_r_true > 0.0 && m.alpha_r_true.is_finite()) {
                return Err(Error::InvalidScene(format!(
                    "material `{}`: alpha_r_true must be positive",
                    m.name
                )));
            }
            check_permittivity(m.permittivity, &m.name)?;
            if self.materials[..i].iter().any(|o| o.name == m.name || o.symbol == m.symbol) {
                return Err(Error::InvalidScene(format!(
                    "material `{}` duplicates a name or symbol",
                    m.name
                )));
            }
        }

        if self.scatterers.is_empty() {
            return Err(Error::InvalidScene("no scatterers defined".into()));
        }
        for (i, s) in self.scatterers.iter().enumerate() {
            if self.scatterers[..i].iter().any(|o| o.id == s.id) {
                return Err(Error::InvalidScene(format!("duplicate scatterer id {}", s.id)));
            }
            validate_scatterer(s)?;
        }

        for (i, a) in self.areas.iter().enumerate() {
            if !(a.side > 0.0 && a.side.is_finite()) {
                return Err(Error::InvalidScene(format!(
                    "area `{}`: side must be positive",
                    a.name
                )));
            }
            if self.areas[..i].iter().any(|o| o.name == a.name) {
                return Err(Error::InvalidScene(format!("duplicate area `{}`", a.name)));
            }
        }
        if let (Ok(train), Ok(test)) = (self.area("train"), self.area("test")) {
            if train.intersects(test) {
                return Err(Error::AreasIntersect(train.name.clone(), test.name.clone()));
            }
        }
        Ok(())
    }
}

fn check_unit(v: &Vec3, tol: f64, what: &str) -> Result<()> {
    if (v.norm() - 1.0).abs() > tol {
        return Err(Error::InvalidScene(format!(
            "{what} must be a unit vector (norm {})",
            v.norm()
        )));
    }
    Ok(())
}

fn check_array(arr: &LinearArray, what: &str) -> Result<()> {
    if arr.elements == 0 {
        return Err(Error::InvalidScene(format!("{what}: element count must be >= 1")));
    }
    if !(arr.spacing > 0.0 && arr.spacing.is_finite()) {
        return Err(Error::InvalidScene(format!("{what}: spacing must be positive")));
    }
    check_unit(&arr.axis, AXIS_TOL, what)
}

fn check_permittivity(eta: Complex64, what: &str) -> Result<()> {
    if !(eta.re.is_finite() && eta.im.is_finite()) || eta.im > 0.0 || eta.re <= 0.0 {
        return Err(Error::InvalidScene(format!(
            "{what}: permittivity needs a positive real part and a non-positive imaginary part"
        )));
    }
    Ok(())
}

fn validate_scatterer(s: &Scatterer) -> Result<()> {
    let bad = |msg: &str| Error::InvalidScene(format!("scatterer {}: {msg}", s.id));
    for (v, name) in [(&s.row_axis, "row axis"), (&s.col_axis, "column axis"), (&s.normal, "normal")] {
        if (v.norm() - 1.0).abs() > ORTHO_TOL {
            return Err(bad(&format!("{name} is not unit length")));
        }
    }
    if s.row_axis.dot(&s.col_axis).abs() > ORTHO_TOL
        || s.row_axis.dot(&s.normal).abs() > ORTHO_TOL
        || s.col_axis.dot(&s.normal).abs() > ORTHO_TOL
    {
        return Err(bad("axes are not orthogonal"));
    }
    if s.m_tile == 0 || s.n_tile == 0 {
        return Err(bad("tile counts must be positive"));
    }
    if !(s.tile_side > 0.0 && s.tile_side.is_finite()) {
        return Err(bad("tile side must be positive"));
    }
    if s.tile_materials.len() != s.n_tiles() {
        return Err(bad("material layout does not match the tile grid"));
    }
    if let Some(l) = s.l_corr {
        if !(l > 0.0 && l.is_finite()) {
            return Err(bad("l_corr must be positive"));
        }
    }
    if let Some(k) = s.k_eig {
        if k == 0 || k > s.n_tiles() {
            return Err(bad("k_eig must be in 1..=m_tile*n_tile"));
        }
    }
    Ok(())
}

pub(crate) fn format_complex(z: Complex64) -> String {
    format!("{},{}", z.re, z.im)
}

pub(crate) fn parse_complex(s: &str) -> Option<Complex64> {
    let (re, im) = s.split_once(',')?;
    Some(Complex64::new(re.trim().parse().ok()?, im.trim().parse().ok()?))
}

/// On-disk mirror of the scene types.
mod raw {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct SceneFile {
        pub transmitter: TxFile,
        pub waveform: WaveformFile,
        pub model: ModelFile,
        #[serde(rename = "material")]
        pub materials: Vec<MaterialFile>,
        #[serde(rename = "scatterer")]
        pub scatterers: Vec<ScattererFile>,
        #[serde(rename = "area", default)]
        pub areas: Vec<AreaFile>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct TxFile {
        pub position: [f64; 3],
        pub dipole_axis: [f64; 3],
        #[serde(default = "one")]
        pub feed_voltage: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub array: Option<ArrayFile>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct ArrayFile {
        pub elements: usize,
        #[serde(default = "half")]
        pub spacing: f64,
        #[serde(default = "x_axis")]
        pub axis: [f64; 3],
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct WaveformFile {
        pub carrier_hz: f64,
        pub bandwidth_hz: f64,
        pub n_freq: usize,
        pub rx_array: Option<ArrayFile>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct ModelFile {
        pub eta_hat: String,
        #[serde(default = "fifteen")]
        pub g_max: f64,
        #[serde(default)]
        pub phase_span: PhaseSpan,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct MaterialFile {
        pub name: String,
        pub symbol: String,
        pub alpha_r_true: f64,
        pub permittivity: String,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct ScattererFile {
        pub id: usize,
        pub center: [f64; 3],
        pub normal: [f64; 3],
        pub row_axis: [f64; 3],
        pub m_tile: usize,
        pub n_tile: usize,
        pub tile_side: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub l_corr: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub k_eig: Option<usize>,
        pub tiles: Vec<String>,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct AreaFile {
        pub name: String,
        pub center: [f64; 3],
        pub side: f64,
    }

    fn one() -> f64 {
        1.0
    }
    fn half() -> f64 {
        0.5
    }
    fn fifteen() -> f64 {
        15.0
    }
    fn x_axis() -> [f64; 3] {
        [1.0, 0.0, 0.0]
    }

    fn v3(a: [f64; 3]) -> Vec3 {
        Vec3::new(a[0], a[1], a[2])
    }
    fn arr3(v: &Vec3) -> [f64; 3] {
        [v.x, v.y, v.z]
    }

    impl ArrayFile {
        fn into_array(self) -> LinearArray {
            LinearArray {
                elements: self.elements,
                spacing: self.spacing,
                axis: v3(self.axis),
            }
        }
        fn from_array(a: &LinearArray) -> Self {
            ArrayFile {
                elements: a.elements,
                spacing: a.spacing,
                axis: arr3(&a.axis),
            }
        }
    }

    fn complex_field(s: &str, what: &str) -> Result<Complex64> {
        parse_complex(s).ok_or_else(|| {
            Error::InvalidScene(format!("{what}: expected permittivity as \"re,im\", got `{s}`"))
        })
    }

    impl SceneFile {
        pub fn into_scene(self) -> Result<Scene> {
            let materials = self
                .materials
                .into_iter()
                .map(|m| {
                    let mut chars = m.symbol.chars();
                    let symbol = match (chars.next(), chars.next()) {
                        (Some(c), None) => c,
                        _ => {
                            return Err(Error::InvalidScene(format!(
                                "material `{}`: symbol must be a single character",
                                m.name
                            )))
                        }
                    };
                    Ok(Material {
                        permittivity: complex_field(&m.permittivity, &m.name)?,
                        name: m.name,
                        symbol,
                        alpha_r_true: m.alpha_r_true,
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            let scatterers = self
                .scatterers
                .into_iter()
                .map(|s| {
                    let normal = v3(s.normal);
                    let row_axis = v3(s.row_axis);
                    let col_axis = normal.cross(&row_axis);
                    if s.tiles.len() != s.m_tile {
                        return Err(Error::InvalidScene(format!(
                            "scatterer {}: {} tile rows given, m_tile = {}",
                            s.id,
                            s.tiles.len(),
                            s.m_tile
                        )));
                    }
                    let mut tile_materials = Vec::with_capacity(s.m_tile * s.n_tile);
                    for (r, row) in s.tiles.iter().enumerate() {
                        let syms: Vec<char> = row.chars().collect();
                        if syms.len() != s.n_tile {
                            return Err(Error::InvalidScene(format!(
                                "scatterer {}: tile row {r} has {} symbols, n_tile = {}",
                                s.id,
                                syms.len(),
                                s.n_tile
                            )));
                        }
                        for ch in syms {
                            let m = materials.iter().position(|m| m.symbol == ch).ok_or_else(|| {
                                Error::InvalidScene(format!(
                                    "scatterer {}: unknown material symbol `{ch}`",
                                    s.id
                                ))
                            })?;
                            tile_materials.push(m);
                        }
                    }
                    Ok(Scatterer {
                        id: s.id,
                        center: v3(s.center),
                        row_axis,
                        col_axis,
                        normal,
                        m_tile: s.m_tile,
                        n_tile: s.n_tile,
                        tile_side: s.tile_side,
                        tile_materials,
                        l_corr: s.l_corr,
                        k_eig: s.k_eig,
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            let carrier = self.waveform.carrier_hz;
            Ok(Scene {
                transmitter: Transmitter {
                    position: v3(self.transmitter.position),
                    dipole_axis: v3(self.transmitter.dipole_axis),
                    feed_voltage: self.transmitter.feed_voltage,
                    array: self.transmitter.array.map(ArrayFile::into_array),
                },
                waveform: Waveform {
                    carrier_hz: carrier,
                    bandwidth_hz: self.waveform.bandwidth_hz,
                    n_freq: self.waveform.n_freq,
                    rx_array: self
                        .waveform
                        .rx_array
                        .map(ArrayFile::into_array)
                        .unwrap_or_else(LinearArray::single),
                },
                model: ModelConfig {
                    eta_hat: complex_field(&self.model.eta_hat, "eta_hat")?,
                    g_max: self.model.g_max,
                    phase_span: self.model.phase_span,
                },
                materials,
                scatterers,
                areas: self
                    .areas
                    .into_iter()
                    .map(|a| Area {
                        name: a.name,
                        center: v3(a.center),
                        side: a.side,
                    })
                    .collect(),
            })
        }

        pub fn from_scene(scene: &Scene) -> Self {
            let tx = &scene.transmitter;
            SceneFile {
                transmitter: TxFile {
                    position: arr3(&tx.position),
                    dipole_axis: arr3(&tx.dipole_axis),
                    feed_voltage: tx.feed_voltage,
                    array: tx.array.as_ref().map(ArrayFile::from_array),
                },
                waveform: WaveformFile {
                    carrier_hz: scene.waveform.carrier_hz,
                    bandwidth_hz: scene.waveform.bandwidth_hz,
                    n_freq: scene.waveform.n_freq,
                    rx_array: Some(ArrayFile::from_array(&scene.waveform.rx_array)),
                },
                model: ModelFile {
                    eta_hat: format_complex(scene.model.eta_hat),
                    g_max: scene.model.g_max,
                    phase_span: scene.model.phase_span,
                },
                materials: scene
                    .materials
                    .iter()
                    .map(|m| MaterialFile {
                        name: m.name.clone(),
                        symbol: m.symbol.to_string(),
                        alpha_r_true: m.alpha_r_true,
                        permittivity: format_complex(m.permittivity),
                    })
                    .collect(),
                scatterers: scene
                    .scatterers
                    .iter()
                    .map(|s| ScattererFile {
                        id: s.id,
                        center: arr3(&s.center),
                        normal: arr3(&s.normal),
                        row_axis: arr3(&s.row_axis),
                        m_tile: s.m_tile,
                        n_tile: s.n_tile,
                        tile_side: s.tile_side,
                        l_corr: s.l_corr,
                        k_eig: s.k_eig,
                        tiles: s
                            .tile_materials
                            .chunks(s.n_tile)
                            .map(|row| row.iter().map(|&m| scene.materials[m].symbol).collect())
                            .collect(),
                    })
                    .collect(),
                areas: scene
                    .areas
                    .iter()
                    .map(|a| AreaFile {
                        name: a.name.clone(),
                        center: arr3(&a.center),
                        side: a.side,
                    })
                    .collect(),
            }
        }
    }
}
