mod common;

use common::*;
use harmap_core::factor::iwasawa_real;
use harmap_core::linalg::{c, commutator, diag_real, eye, max_abs, max_abs_diff};
use harmap_core::symspace::{SpecError, SymmetricSpaceSpec};
use harmap_core::willmore::{closed_form_embeddings, default_pair};
use harmap_core::{CMat, LaurentLoop};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn willmore() -> SymmetricSpaceSpec {
    SymmetricSpaceSpec::willmore(4)
}

#[test]
fn basis_lies_in_the_algebra_and_s_is_involutive() {
    let spec = willmore();
    assert_eq!(spec.basis_g().len(), 28);
    let j = spec.j();
    for x in spec.basis_g() {
        assert!(max_abs(&(x.transpose() * j + j * x)) < 1e-12);
    }
    assert_eq!(spec.s() * spec.s(), eye(8));
}

#[test]
fn projection_of_block_matrices() {
    let spec = willmore();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = spec.random_algebra_element(&mut rng);
    let mut diag = x.clone();
    let mut off = x.clone();
    for i in 0..8 {
        for j in 0..8 {
            if (i < 4) == (j < 4) {
                off[(i, j)] = c(0.0, 0.0);
            } else {
                diag[(i, j)] = c(0.0, 0.0);
            }
        }
    }
    let (k, p) = spec.project_kp(&diag);
    assert_eq!(k, diag);
    assert_eq!(max_abs(&p), 0.0);
    let (k, p) = spec.project_kp(&off);
    assert_eq!(max_abs(&k), 0.0);
    assert_eq!(p, off);
}

#[test]
fn bracket_of_k_and_p_lies_in_p() {
    let spec = willmore();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (k, _) = spec.project_kp(&spec.random_algebra_element(&mut rng));
        let (_, p) = spec.project_kp(&spec.random_algebra_element(&mut rng));
        let b = commutator(&k, &p);
        let (bk, _) = spec.project_kp(&b);
        assert!(max_abs(&bk) < 1e-10 * max_abs(&b).max(1.0));
    }
}

#[test]
fn inner_space_check_on_the_willmore_realization() {
    let r = willmore().inner_space_check().unwrap();
    assert_eq!(r.dim_complex_k, 12);
    assert_eq!(r.dim_real_u_cap_k, 12);
    assert_eq!(r.span_rank, 12);
    assert!(r.inner);
    assert_eq!(r.rank_g, r.rank_k);
}

#[test]
fn trivial_sigma_passes_the_inner_check() {
    let spec = SymmetricSpaceSpec::orthogonal(vec![-1.0, 1.0, 1.0, 1.0], 4).unwrap();
    let r = spec.inner_space_check().unwrap();
    assert_eq!(r.dim_complex_k, 6);
    assert_eq!(r.span_rank, 6);
    assert!(r.inner);
}

#[test]
fn perturbed_s_is_rejected_at_construction() {
    let spec = willmore();
    let mut s = spec.s().clone();
    s[(0, 1)] = c(1e-9, 0.0);
    let err = SymmetricSpaceSpec::new(spec.metric().to_vec(), s, spec.tau().clone(), spec.rho().clone()).unwrap_err();
    assert!(matches!(err, SpecError::NotInvolutive(_)), "{err}");
    let bad = SymmetricSpaceSpec::orthogonal(vec![-1.0, 2.0, 1.0], 1).unwrap_err();
    assert!(matches!(bad, SpecError::BadMetric(_)), "{bad:?}");
}

#[test]
fn cartan_embedding_of_k_elements_is_s() {
    let spec = willmore();
    let one = c(1.0, 0.0);
    assert_eq!(spec.cartan_embed(&LaurentLoop::identity(8), one).unwrap(), spec.s().clone());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let k = random_real_k(&mut rng, &spec, 0.7);
        let e = spec.cartan_embed(&LaurentLoop::constant(k), one).unwrap();
        assert!(max_abs_diff(&e, spec.s()) < 1e-12);
    }
    assert!(spec.cartan_embed(&LaurentLoop::constant(CMat::zeros(8, 8)), one).is_err());
}

#[test]
fn cartan_embedding_is_right_k_invariant() {
    let spec = willmore();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = twisted_group_loop(&mut rng, &spec, 0.4, 2);
    for _ in 0..10 {
        let k = random_real_k(&mut rng, &spec, 1.0);
        for l in [c(1.0, 0.0), c(0.0, 1.0), c(0.6, 0.8)] {
            let a = spec.cartan_embed(&f, l).unwrap();
            let b = spec.cartan_embed(&f.right_mul(&k), l).unwrap();
            assert!(max_abs_diff(&a, &b) < 1e-10 * max_abs(&a).max(1.0));
        }
    }
}

#[test]
fn cartan_embedding_matches_the_closed_form_at_one() {
    let spec = willmore();
    let z = c(1.0, 0.0);
    let (left, _) = iwasawa_real(&example_minus(z), &spec).into_factors().expect("z = 1 lies in the Iwasawa cell");
    let got = spec.cartan_embed(&left, c(1.0, 0.0)).unwrap();
    let (want, _) = closed_form_embeddings(&default_pair(), &spec, c(0.0, 0.0), z).unwrap();
    assert!(max_abs_diff(&got, &want) < 1e-6, "{:e}", max_abs_diff(&got, &want));
}

#[test]
fn timelike_directions_follow_the_metric() {
    let spec = SymmetricSpaceSpec::orthogonal(vec![-1.0, 1.0, -1.0, 1.0], 2).unwrap();
    assert_eq!(spec.timelike(), vec![0, 2]);
    assert_eq!(spec.j(), &diag_real(&[-1.0, 1.0, -1.0, 1.0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn involutions_commute(seed in any::<u64>()) {
        let spec = willmore();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = spec.random_algebra_element(&mut rng);
        let s = |y: &CMat| spec.sigma_algebra(y);
        let t = |y: &CMat| spec.tau().apply_algebra(y);
        let r = |y: &CMat| spec.rho().apply_algebra(y);
        prop_assert!(max_abs_diff(&s(&t(&x)), &t(&s(&x))) < 1e-11);
        prop_assert!(max_abs_diff(&s(&r(&x)), &r(&s(&x))) < 1e-11);
        prop_assert!(max_abs_diff(&t(&r(&x)), &r(&t(&x))) < 1e-11);
        prop_assert!(max_abs_diff(&t(&t(&x)), &x) < 1e-12);
        prop_assert!(max_abs_diff(&r(&r(&x)), &x) < 1e-12);
    }

    #[test]
    fn projection_is_an_exact_direct_sum(seed in any::<u64>()) {
        let spec = willmore();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = spec.random_algebra_element(&mut rng);
        let (k, p) = spec.project_kp(&x);
        prop_assert_eq!(&k + &p, x.clone());
        prop_assert!(max_abs_diff(&spec.sigma_algebra(&k), &k) < 1e-15);
        prop_assert!(max_abs_diff(&spec.sigma_algebra(&p), &(-&p)) < 1e-15);
        let (kk, kp) = spec.project_kp(&k);
        prop_assert_eq!(&kk, &k);
        prop_assert_eq!(max_abs(&kp), 0.0);
        prop_assert!(spec.algebra_residual(&k) < 1e-12 && spec.algebra_residual(&p) < 1e-12);
    }
}
