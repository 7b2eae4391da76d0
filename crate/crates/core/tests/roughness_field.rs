mod common;

use approx::assert_relative_eq;
use ccmx::roughfield::*;
use ccmx::scene::Scatterer;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use common::{jacobi_eigenvalues, reference_scene, rel_err};

fn ground() -> Scatterer {
    reference_scene().scatterers[0].clone()
}

fn wall() -> Scatterer {
    reference_scene().scatterers[1].clone()
}

#[test]
fn corr_entries_follow_distance() {
    let s = wall();
    let rz = build_corr(&s, 5.0).unwrap();
    // horizontal neighbours are one tile side (5 m) apart
    assert_relative_eq!(rz[(0, 1)], (-1.0f64).exp(), epsilon = 1e-15);
    assert_relative_eq!(rz[(0, 6)], (-(50.0f64).sqrt() / 5.0).exp(), epsilon = 1e-15);
    for i in 0..25 {
        assert_eq!(rz[(i, i)], 1.0);
    }
    assert_eq!(rz, rz.transpose());
    assert!(build_corr(&s, 0.0).is_err());
}

#[test]
fn corr_is_psd_by_independent_eigensolve() {
    let rz = build_corr(&ground(), 5.0).unwrap();
    let eig = jacobi_eigenvalues(&rz);
    assert!(eig[0] >= -1e-9, "min eigenvalue {}", eig[0]);
    // the library spectrum agrees with the oracle
    let (vals, _) = sorted_spectrum(&rz).unwrap();
    let mut lib = vals.clone();
    lib.sort_by(f64::total_cmp);
    for (a, b) in lib.iter().zip(&eig) {
        assert_relative_eq!(a, b, epsilon = 1e-9);
    }
}

#[test]
fn truncation_error_decreases_with_rank() {
    let s = wall();
    let rz = build_corr(&s, 10.0).unwrap();
    let mut last = f64::INFINITY;
    for k in 1..=25 {
        let b = KlBasis::from_corr(s.id, 10.0, &rz, k).unwrap();
        let l = b.loading();
        let err = (&l * l.transpose() - &rz).norm();
        assert!(err <= last + 1e-12, "k = {k}: {err} > {last}");
        last = err;
    }
    assert!(last < 1e-10);
}

#[test]
fn identity_limit_keeps_unit_spectrum() {
    let s = wall();
    // tiles are 5 m apart, so exp(-5 / 1e-3) underflows to zero
    let rz = build_corr(&s, 1e-3).unwrap();
    assert_eq!(rz, DMatrix::identity(25, 25));
    let b = KlBasis::from_corr(s.id, 1e-3, &rz, 25).unwrap();
    assert!(b.eigvals.iter().all(|&v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn basis_columns_are_orthonormal() {
    let b = KlBasis::for_scatterer(&ground(), None, None).unwrap();
    let gram = b.basis.transpose() * &b.basis;
    assert!((gram - DMatrix::identity(b.k_eig(), b.k_eig())).amax() < 1e-10);
    assert!(b.eigvals.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn default_rank_holds_the_energy_fraction() {
    let s = ground();
    let b = KlBasis::for_scatterer(&s, None, None).unwrap();
    assert_eq!(b.l_corr, 2.0 * s.tile_side);
    let total = 100.0;
    let kept: f64 = b.eigvals.iter().sum();
    assert!(kept >= 0.95 * total - 1e-9);
    let (vals, _) = sorted_spectrum(&build_corr(&s, b.l_corr).unwrap()).unwrap();
    let one_less: f64 = vals[..b.k_eig() - 1].iter().sum();
    assert!(one_less < 0.95 * total);
}

#[test]
fn expansion_matches_dense_product() {
    let s = wall();
    let b = KlBasis::for_scatterer(&s, Some(7.0), Some(25)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let lambda: Vec<f64> = (0..25).map(|_| rng.sample(StandardNormal)).collect();
    let e = expand(&lambda, &b, 15.0).unwrap();
    // dense Q diag(sqrt(eig)) lambda, computed entry by entry
    for t in 0..25 {
        let z: f64 = (0..25).map(|j| b.basis[(t, j)] * b.eigvals[j].sqrt() * lambda[j]).sum();
        assert_relative_eq!(e.z[t], z, epsilon = 1e-12);
        assert_relative_eq!(e.alpha[t], 15.0 / (1.0 + (-z).exp()), epsilon = 1e-12);
    }
}

#[test]
fn zero_coefficients_give_half_scale() {
    let b = KlBasis::for_scatterer(&wall(), None, None).unwrap();
    let e = expand(&vec![0.0; b.k_eig()], &b, 15.0).unwrap();
    assert!(e.alpha.iter().all(|&a| a == 7.5));
}

#[test]
fn expansion_gradient_matches_finite_differences() {
    let b = KlBasis::for_scatterer(&ground(), None, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lambda: Vec<f64> = (0..b.k_eig()).map(|_| rng.sample(StandardNormal)).collect();
    let w: Vec<f64> = (0..b.n_tiles()).map(|_| rng.random::<f64>() - 0.5).collect();
    let f = |l: &[f64]| -> f64 {
        let e = expand(l, &b, 15.0).unwrap();
        e.alpha.iter().zip(&w).map(|(a, w)| a * w).sum()
    };
    let g = expand_grad(&lambda, &b, 15.0, &w).unwrap();
    let h = 1e-6;
    let fd: Vec<f64> = (0..lambda.len())
        .map(|i| {
            let (mut p, mut m) = (lambda.clone(), lambda.clone());
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect();
    assert!(rel_err(&g, &fd) < 1e-6, "{}", rel_err(&g, &fd));
}

#[test]
fn latent_inverts_the_mapping() {
    for a in [1e-3, 0.5, 7.5, 10.0, 14.9] {
        assert_relative_eq!(roughness(latent_of(a, 15.0), 15.0), a, max_relative = 1e-12);
    }
    // slope is the derivative of the mapping
    let z = 0.3;
    let fd = (roughness(z + 1e-6, 15.0) - roughness(z - 1e-6, 15.0)) / 2e-6;
    assert_relative_eq!(roughness_slope(z, 15.0), fd, max_relative = 1e-8);
    // far tails do not overflow
    assert!(roughness(-800.0, 15.0) >= 0.0 && roughness(800.0, 15.0) <= 15.0);
}

#[test]
fn field_statistics_match_the_kernel() {
    let s = wall();
    let l = 8.0;
    let b = KlBasis::for_scatterer(&s, Some(l), Some(s.n_tiles())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let mut acc = DMatrix::<f64>::zeros(25, 25);
    for _ in 0..n {
        let lambda: Vec<f64> = (0..25).map(|_| rng.sample(StandardNormal)).collect();
        let z: DVector<f64> = b.latent(&lambda).unwrap();
        acc += &z * z.transpose();
    }
    acc /= n as f64;
    let rz = build_corr(&s, l).unwrap();
    assert!((&acc - &rz).amax() < 0.05, "max deviation {}", (&acc - &rz).amax());
}

#[test]
fn params_text_round_trip_is_exact() {
    let scene = reference_scene();
    let set = BasisSet::for_scene(&scene).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = RoughnessParams::random(&set, 15.0, &mut rng);
    let (back, specs) = RoughnessParams::from_text(&p.to_text(&set)).unwrap();
    assert_eq!(back, p);
    assert_eq!(specs, set.specs());
    assert_eq!(p.with_flat(&p.flatten()), p);
}

#[test]
fn shape_mismatch_is_an_error() {
    let b = KlBasis::for_scatterer(&wall(), None, None).unwrap();
    assert!(expand(&vec![0.0; b.k_eig() + 1], &b, 15.0).is_err());
    assert!(KlBasis::from_corr(2, 5.0, &build_corr(&wall(), 5.0).unwrap(), 26).is_err());
    assert!(KlBasis::from_corr(2, 5.0, &build_corr(&wall(), 5.0).unwrap(), 0).is_err());
}

#[test]
fn scene_field_concatenates_scatterers() {
    let scene = reference_scene();
    let set = BasisSet::for_scene(&scene).unwrap();
    let p = RoughnessParams::zeros(&set, 15.0);
    let a = roughness_field(&p, &set).unwrap();
    assert_eq!(a.len(), scene.total_tiles());
    let g = roughness_field_grad(&p, &set, &vec![1.0; a.len()]).unwrap();
    assert_eq!(g.iter().map(Vec::len).sum::<usize>(), set.n_params());
}
