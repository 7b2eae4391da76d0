//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use ccmx::scene::Scene;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

pub fn reference_scene() -> Scene {
    Scene::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenes/paper.scene")).unwrap()
}

pub fn reference_text() -> String {
    std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenes/paper.scene")).unwrap()
}

const HEADER: &str = r#"
[transmitter]
position = [TXX, TXY, TXZ]
dipole_axis = [0.7071067811865476, 0.0, 0.7071067811865476]

[waveform]
carrier_hz = 3.0e9
bandwidth_hz = 1.5e8
n_freq = NFREQ
rx_array = { elements = 4, spacing = 0.5 }

[model]
eta_hat = "5.2,-0.2"

[[material]]
name = "concrete"
symbol = "c"
alpha_r_true = 1e-3
permittivity = "6.31,-0.26"

[[material]]
name = "glass"
symbol = "g"
alpha_r_true = 10.0
permittivity = "5.24,-0.34"

[[area]]
name = "train"
center = [5.0, 3.0, 3.0]
side = 2.0

[[area]]
name = "test"
center = [-4.0, -2.0, 4.0]
side = 2.0
"#;

fn layout<R: Rng>(rng: &mut R, m: usize, n: usize) -> String {
    let rows: Vec<String> = (0..m)
        .map(|_| {
            let row: String = (0..n).map(|_| if rng.random::<bool>() { 'c' } else { 'g' }).collect();
            format!("\"{row}\"")
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

/// A ground plate and optionally a wall facing it, each with at most 3x3
/// tiles, random sizes, materials and transmitter offset.
pub fn random_small_scene<R: Rng>(rng: &mut R, n_freq: usize) -> Scene {
    let tx = [-20.0 + rng.random::<f64>() * 4.0, rng.random::<f64>() * 4.0 - 2.0, 20.0 + rng.random::<f64>() * 5.0];
    let mut text = HEADER
        .replace("TXX", &tx[0].to_string())
        .replace("TXY", &tx[1].to_string())
        .replace("TXZ", &tx[2].to_string())
        .replace("NFREQ", &n_freq.to_string());
    let (m, n) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let side = 2.0 + rng.random::<f64>() * 2.0;
    text.push_str(&format!(
        "\n[[scatterer]]\nid = 1\ncenter = [0.0, 0.0, 0.0]\nnormal = [0.0, 0.0, 1.0]\nrow_axis = [1.0, 0.0, 0.0]\n\
         m_tile = {m}\nn_tile = {n}\ntile_side = {side}\ntiles = {}\n",
        layout(rng, m, n)
    ));
    if rng.random::<bool>() {
        let (m, n) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let side = 2.0 + rng.random::<f64>() * 2.0;
        text.push_str(&format!(
            "\n[[scatterer]]\nid = 2\ncenter = [2.0, 12.0, 5.0]\nnormal = [0.0, -1.0, 0.0]\nrow_axis = [1.0, 0.0, 0.0]\n\
             m_tile = {m}\nn_tile = {n}\ntile_side = {side}\ntiles = {}\n",
            layout(rng, m, n)
        ));
    }
    Scene::parse(&text).unwrap()
}

/// Cyclic Jacobi eigenvalues of a real symmetric matrix, ascending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut v: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = DMatrix::<Complex64>::identity(n, n);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[(i, col)].norm().total_cmp(&a[(j, col)].norm())).unwrap();
        a.swap_rows(col, piv);
        inv.swap_rows(col, piv);
        let d = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= d;
            inv[(col, j)] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = a[(i, col)];
                for j in 0..n {
                    let (aj, ij) = (a[(col, j)], inv[(col, j)]);
                    a[(i, j)] -= f * aj;
                    inv[(i, j)] -= f * ij;
                }
            }
        }
    }
    inv
}

/// Random Hermitian PSD matrix `A A^H / n` with complex Gaussian-ish `A`.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(n, rank, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let m = &a * a.adjoint() * Complex64::new(1.0 / rank as f64, 0.0);
    (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 40)
}

/// `(1/2pi) * integral over the upper hemisphere of g(cos theta)`, as a
/// nested adaptive quadrature over polar and azimuth angles.
pub fn hemisphere_mean(g: &dyn Fn(f64) -> f64, tol: f64) -> f64 {
    let inner = |theta: f64| {
        let (st, ct) = (theta.sin(), theta.cos());
        let per_phi = |_phi: f64| g(ct);
        adaptive_simpson(&per_phi, 0.0, 2.0 * std::f64::consts::PI, tol) * st
    };
    adaptive_simpson(&inner, 0.0, std::f64::consts::FRAC_PI_2, tol) / (2.0 * std::f64::consts::PI)
}

/// Relative distance `||a - b|| / max(||a||, ||b||)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let s = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if s == 0.0 {
        0.0
    } else {
        d / s
    }
}

/// One scatterer with a single tile whose true permittivity equals the
/// calibration preset, so roughness is the only unknown.
pub fn toy_scene(alpha_true: f64) -> Scene {
    let text = format!(
        r#"
[transmitter]
position = [-20.0, 0.0, 20.0]
dipole_axis = [0.7071067811865476, 0.0, 0.7071067811865476]

[waveform]
carrier_hz = 3.0e9
bandwidth_hz = 1.5e8
n_freq = 11
rx_array = {{ elements = 4, spacing = 0.5 }}

[model]
eta_hat = "5.2,-0.2"

[[material]]
name = "slab"
symbol = "s"
alpha_r_true = {alpha_true}
permittivity = "5.2,-0.2"

[[scatterer]]
id = 1
center = [0.0, 0.0, 0.0]
normal = [0.0, 0.0, 1.0]
row_axis = [1.0, 0.0, 0.0]
m_tile = 1
n_tile = 1
tile_side = 4.0
tiles = ["s"]

[[area]]
name = "train"
center = [8.0, 2.0, 6.0]
side = 6.0

[[area]]
name = "test"
center = [-2.0, 9.0, 5.0]
side = 4.0
"#
    );
    Scene::parse(&text).unwrap()
}
