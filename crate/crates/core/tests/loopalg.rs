use harmap_core::linalg::{c, eye, max_abs, max_abs_diff, CMat};
use harmap_core::loopalg::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMat {
    CMat::from_fn(n, n, |_, _| c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
}

fn random_loop(rng: &mut ChaCha8Rng, n: usize, w: DegreeWindow, scale: f64) -> LaurentLoop {
    LaurentLoop::new(w.lo, (0..w.width()).map(|_| random_matrix(rng, n, scale)).collect()).unwrap()
}

fn strictly_upper(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if j > i { c(1.0 + i as f64, 0.5 * j as f64) } else { c(0.0, 0.0) })
}

#[test]
fn identity_times_identity() {
    let i = LaurentLoop::identity(3);
    let p = loop_mul(&i, &i).unwrap();
    assert_eq!(p.window(), DegreeWindow::new(0, 0));
    assert!(max_abs_diff(p.coeff(0).unwrap(), &eye(3)) == 0.0);
}

#[test]
fn nilpotent_cancellation() {
    let mut n = CMat::zeros(4, 4);
    n[(0, 3)] = c(2.0, -1.0);
    let a = LaurentLoop::new(-1, vec![n.clone(), eye(4)]).unwrap();
    let b = LaurentLoop::new(-1, vec![-n, eye(4)]).unwrap();
    let p = loop_mul(&a, &b).unwrap();
    assert_eq!(p.window(), DegreeWindow::new(-2, 0));
    assert!(p.max_coeff_diff(&LaurentLoop::identity(4)) < 1e-15);
}

#[test]
fn product_matches_pointwise_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random_loop(&mut rng, 4, DegreeWindow::new(-2, 2), 1.0);
    let b = random_loop(&mut rng, 4, DegreeWindow::new(-2, 2), 1.0);
    let p = loop_mul(&a, &b).unwrap();
    assert_eq!(p.window(), DegreeWindow::new(-4, 4));
    for k in 0..16 {
        let l = root_of_unity(k, 16);
        assert!(max_abs_diff(&p.eval(l), &(a.eval(l) * b.eval(l))) < 1e-12);
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let a = LaurentLoop::identity(2);
    let b = LaurentLoop::identity(3);
    assert_eq!(loop_mul(&a, &b).unwrap_err(), LoopError::DimensionMismatch(2, 3));
}

#[test]
fn inverse_of_identity() {
    let inv = loop_inverse(&LaurentLoop::identity(3), DegreeWindow::symmetric(2)).unwrap();
    assert!(inv.max_coeff_diff(&LaurentLoop::identity(3)) < 1e-14);
}

#[test]
fn neumann_series_terminates() {
    let n = strictly_upper(4) * c(0.3, 0.0);
    let a = LaurentLoop::new(-1, vec![n.clone(), eye(4)]).unwrap();
    let inv = loop_inverse(&a, DegreeWindow::new(-3, 0)).unwrap();
    let expected = LaurentLoop::new(
        -3,
        vec![-(&n * &n * &n), &n * &n, -n.clone(), eye(4)],
    )
    .unwrap();
    assert!(inv.max_coeff_diff(&expected) < 1e-13);
    let check = loop_mul(&a, &inv).unwrap();
    assert!(check.circle_distance(&LaurentLoop::identity(4), 32) < 1e-10);
}

#[test]
fn unitary_loop_inverse_is_adjoint() {
    // u(λ) = P λ + (I − P) for an orthogonal projector P is unitary on the circle.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let v = random_matrix(&mut rng, 4, 1.0).column(0).into_owned();
    let p = &v * v.adjoint() / c(v.norm_squared(), 0.0);
    let u = LaurentLoop::new(0, vec![eye(4) - &p, p]).unwrap();
    let inv = loop_inverse(&u, DegreeWindow::new(-1, 0)).unwrap();
    for k in 0..16 {
        let l = root_of_unity(k, 16);
        assert!(max_abs_diff(&inv.eval(l), &u.eval(l).adjoint()) < 1e-12);
    }
}

#[test]
fn inverse_outside_window_overflows() {
    // (I − λ⁻¹/2)⁻¹ is an infinite series in λ⁻¹.
    let a = LaurentLoop::new(-1, vec![eye(2) * c(-0.5, 0.0), eye(2)]).unwrap();
    match loop_inverse(&a, DegreeWindow::new(-2, 0)) {
        Err(LoopError::WindowOverflow { .. }) => {}
        other => panic!("expected overflow, got {other:?}"),
    }
}

#[test]
fn singular_sample_is_reported() {
    // I − λ vanishes at λ = 1.
    let a = LaurentLoop::new(0, vec![eye(2), -eye(2)]).unwrap();
    assert!(matches!(
        loop_inverse(&a, DegreeWindow::symmetric(4)),
        Err(LoopError::SingularSample { .. })
    ));
}

#[test]
fn constant_loop_round_trip() {
    let m = CMat::from_fn(2, 2, |i, j| c(i as f64 + 1.0, j as f64));
    for count in [1, 3, 8] {
        let s = coeffs_to_samples(&LaurentLoop::constant(m.clone()), count);
        let back = samples_to_coeffs(&s, DegreeWindow::new(0, 0)).unwrap();
        assert!(max_abs_diff(back.coeff(0).unwrap(), &m) < 1e-15);
    }
}

#[test]
fn monomial_with_four_samples() {
    let a = LaurentLoop::monomial(eye(2), 1);
    let s = coeffs_to_samples(&a, 4);
    let back = samples_to_coeffs(&s, DegreeWindow::new(-1, 2)).unwrap();
    for (j, m) in back.terms() {
        let expected = if j == 1 { eye(2) } else { CMat::zeros(2, 2) };
        assert!(max_abs_diff(m, &expected) < 1e-14, "degree {j}");
    }
}

#[test]
fn degree_three_round_trip_with_eight_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random_loop(&mut rng, 3, DegreeWindow::new(0, 3), 1.0);
    let back = samples_to_coeffs(&coeffs_to_samples(&a, 8), DegreeWindow::new(0, 3)).unwrap();
    assert!(back.max_coeff_diff(&a) < 1e-13);
}

#[test]
fn too_few_samples_is_aliasing() {
    let s = coeffs_to_samples(&LaurentLoop::identity(2), 3);
    assert!(matches!(
        samples_to_coeffs(&s, DegreeWindow::new(-2, 2)),
        Err(LoopError::Aliasing { samples: 3, width: 5 })
    ));
}

fn sigma8() -> LoopInvolution {
    let s = harmap_core::linalg::diag_real(&[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]);
    LoopInvolution::new(PointInvolution::conjugation(s).unwrap(), LambdaAction::Negate)
}

#[test]
fn sigma_fixes_off_diagonal_minus_one_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut x = CMat::zeros(8, 8);
    let b = random_matrix(&mut rng, 4, 1.0);
    x.view_mut((0, 4), (4, 4)).copy_from(&b);
    x.view_mut((4, 0), (4, 4)).copy_from(&(-b.transpose()));
    let a = LaurentLoop::monomial(x, -1);
    let out = apply_involution(&sigma8(), &a);
    assert!(out.max_coeff_diff(&a) < 1e-15);
}

#[test]
fn conjugation_fixes_loops_real_on_the_circle() {
    let tau = LoopInvolution::new(
        PointInvolution::new(eye(3), true, false).unwrap(),
        LambdaAction::InvertConj,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let real = |m: CMat| m.map(|z| c(z.re, 0.0));
    let n1 = real(random_matrix(&mut rng, 3, 1.0));
    let n0 = real(random_matrix(&mut rng, 3, 1.0));
    // Real-valued on |λ| = 1: coefficient at −j is the conjugate of coefficient at j.
    let a = LaurentLoop::new(-1, vec![n1.clone(), n0.clone(), n1.clone()]).unwrap();
    assert!(apply_involution(&tau, &a).max_coeff_diff(&a) < 1e-15);
    assert!(apply_involution(&tau, &LaurentLoop::constant(n0.clone())).max_coeff_diff(&LaurentLoop::constant(n0)) < 1e-15);
    // A loop with real coefficients that is not real on the circle is moved.
    let b = LaurentLoop::new(0, vec![eye(3), n1]).unwrap();
    assert!(apply_involution(&tau, &b).max_coeff_diff(&b) > 1e-3);
}

#[test]
fn involution_matches_pointwise_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a = random_loop(&mut rng, 8, DegreeWindow::new(-2, 3), 1.0);
    let j = harmap_core::linalg::diag_real(&[-1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    let rho = LoopInvolution::new(PointInvolution::new(j.clone(), true, false).unwrap(), LambdaAction::NegInvertConj);
    let out = apply_involution(&rho, &a);
    for k in 0..16 {
        let l = root_of_unity(k, 16);
        let expected = &j * harmap_core::linalg::conj(&a.eval(-l)) * &j;
        assert!(max_abs_diff(&out.eval(l), &expected) < 1e-12);
    }
}

#[test]
fn inverse_transpose_involution_on_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_matrix(&mut rng, 3, 0.03);
    let a = LaurentLoop::new(0, vec![eye(3), x]).unwrap();
    let inv = LoopInvolution::new(PointInvolution::new(eye(3), false, true).unwrap(), LambdaAction::Identity);
    let out = apply_involution(&inv, &a);
    for k in 0..8 {
        let l = root_of_unity(k, 8);
        let expected = a.eval(l).try_inverse().unwrap().transpose();
        assert!(max_abs_diff(&out.eval(l), &expected) < 1e-10);
    }
}

#[test]
fn non_involutive_point_map_is_rejected() {
    let a = CMat::from_fn(2, 2, |i, j| c(1.0 + i as f64 + 2.0 * j as f64, 0.0));
    assert!(matches!(PointInvolution::conjugation(a), Err(LoopError::NotInvolutive(_))));
}

fn twisted_loop(rng: &mut ChaCha8Rng, w: DegreeWindow, scale: f64) -> LaurentLoop {
    let s = harmap_core::linalg::diag_real(&[1.0, 1.0, -1.0, -1.0]);
    let a = random_loop(rng, 4, w, scale);
    a.map(|j, m| {
        let sign = if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        (m + &s * m * &s * c(sign, 0.0)) * c(0.5, 0.0)
    })
}

#[test]
fn twisting_preserved_by_product_and_inverse() {
    let s = harmap_core::linalg::diag_real(&[1.0, 1.0, -1.0, -1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let a = twisted_loop(&mut rng, DegreeWindow::new(-2, 2), 0.5);
        let b = twisted_loop(&mut rng, DegreeWindow::new(-1, 1), 0.5);
        assert!(a.twist_residual(&s, &s) < 1e-15);
        let p = loop_mul(&a, &b).unwrap();
        assert!(p.twist_residual(&s, &s) < 1e-14);
        // A near-identity twisted loop has an inverse that decays fast.
        let small = twisted_loop(&mut rng, DegreeWindow::new(-1, 1), 0.02).add(&LaurentLoop::identity(4));
        let inv = loop_inverse(&small, DegreeWindow::symmetric(12)).unwrap();
        assert!(inv.twist_residual(&s, &s) < 1e-12);
    }
}

fn arb_loop(n: usize) -> impl Strategy<Value = LaurentLoop> {
    (-3i32..=0, 0usize..4, any::<u64>()).prop_map(move |(lo, len, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_loop(&mut rng, n, DegreeWindow::new(lo, lo + len as i32), 1.0)
    })
}

proptest! {
    #[test]
    fn evaluation_is_a_homomorphism(a in arb_loop(3), b in arb_loop(3)) {
        let p = loop_mul(&a, &b).unwrap();
        for k in 0..16 {
            let l = root_of_unity(k, 16);
            let scale = 1.0 + max_abs(&a.eval(l)) * max_abs(&b.eval(l));
            prop_assert!(max_abs_diff(&p.eval(l), &(a.eval(l) * b.eval(l))) < 1e-12 * scale);
        }
    }

    #[test]
    fn sample_round_trip(a in arb_loop(2), extra in 0usize..5) {
        let w = a.window();
        let count = w.safe_samples() + extra;
        let back = samples_to_coeffs(&coeffs_to_samples(&a, count), w).unwrap();
        prop_assert!(back.max_coeff_diff(&a) < 1e-13);
    }

    #[test]
    fn involutions_are_involutive(a in arb_loop(4), which in 0usize..4) {
        let s = harmap_core::linalg::diag_real(&[1.0, -1.0, 1.0, -1.0]);
        let j = harmap_core::linalg::diag_real(&[-1.0, 1.0, 1.0, 1.0]);
        let inv = match which {
            0 => LoopInvolution::new(PointInvolution::conjugation(s).unwrap(), LambdaAction::Negate),
            1 => LoopInvolution::new(PointInvolution::new(eye(4), true, false).unwrap(), LambdaAction::InvertConj),
            2 => LoopInvolution::new(PointInvolution::new(j, true, false).unwrap(), LambdaAction::NegInvertConj),
            _ => LoopInvolution::new(PointInvolution::new(s, false, false).unwrap(), LambdaAction::Identity),
        };
        let twice = apply_involution(&inv, &apply_involution(&inv, &a));
        prop_assert!(twice.max_coeff_diff(&a) < 1e-12);
    }
}

#[test]
fn support_and_trim() {
    let z = CMat::zeros(2, 2);
    let a = LaurentLoop::new(-3, vec![z.clone(), eye(2) * c(1e-3, 0.0), eye(2), z.clone(), z]).unwrap();
    assert_eq!(a.support(TAIL_TOL), Some(DegreeWindow::new(-2, -1)));
    assert_eq!(a.trim().window(), DegreeWindow::new(-2, 0));
    let _unused: Complex64 = c(0.0, 0.0);
}
