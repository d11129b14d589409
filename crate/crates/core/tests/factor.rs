mod common;

use common::*;
use harmap_core::factor::*;
use harmap_core::linalg::{c, eye, max_abs, max_abs_diff, CMat};
use harmap_core::loopalg::{root_of_unity, DegreeWindow, LaurentLoop};
use harmap_core::symspace::SymmetricSpaceSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nilpotent(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if j > i { c(0.3 * (i + j) as f64, 0.1) } else { c(0.0, 0.0) })
}

#[test]
fn birkhoff_of_identity() {
    let out = birkhoff(&LaurentLoop::identity(4), 4);
    assert_eq!(out.status, FactorStatus::Success);
    let (l, r) = out.factors().unwrap();
    assert!(l.max_coeff_diff(&LaurentLoop::identity(4)) < 1e-14);
    assert!(r.max_coeff_diff(&LaurentLoop::identity(4)) < 1e-14);
}

#[test]
fn birkhoff_of_normalized_minus_loop() {
    // exp(λ⁻¹N) = I + λ⁻¹N + λ⁻²N²/2 + … terminates for nilpotent N.
    let n = nilpotent(4);
    let n2 = &n * &n * c(0.5, 0.0);
    let n3 = &n2 * &n * c(1.0 / 3.0, 0.0);
    let gamma = LaurentLoop::new(-3, vec![n3, n2, n.clone(), eye(4)]).unwrap();
    let out = birkhoff(&gamma, 6);
    let (l, r) = out.factors().unwrap();
    assert!(l.max_coeff_diff(&gamma) < 1e-12);
    assert!(r.max_coeff_diff(&LaurentLoop::identity(4)) < 1e-12);
}

#[test]
fn birkhoff_recovers_constructed_factors() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..100 {
        let n = if trial % 2 == 0 { 4 } else { 8 };
        let scale = 0.1 / (n as f64).sqrt();
        let minus = twisted_minus(&mut rng, n, 2, scale);
        let plus = twisted_plus(&mut rng, n, 2, scale);
        let gamma = minus.mul(&plus).unwrap();
        let cfg = FactorConfig::with_window(24);
        let out = birkhoff_with(&gamma, &cfg);
        assert_eq!(out.status, FactorStatus::Success, "trial {trial}");
        let (l, r) = out.factors().unwrap();
        assert!(l.max_coeff_diff(&minus) < 1e-9, "trial {trial}: {}", l.max_coeff_diff(&minus));
        assert!(r.max_coeff_diff(&plus) < 1e-9, "trial {trial}: {}", r.max_coeff_diff(&plus));
    }
}

#[test]
fn birkhoff_factor_shapes_and_twist() {
    let s = split_s(4);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let gamma = twisted_gl_loop(&mut rng, 4, -3, 3, 0.05);
        let out = birkhoff_with(&gamma, &FactorConfig::with_window(24));
        let (l, r) = out.factors().unwrap();
        assert!(l.hi() <= 0 && max_abs_diff(l.coeff(0).unwrap(), &eye(4)) < 1e-15);
        assert!(r.lo() >= 0);
        assert!(l.twist_residual(&s, &s) < 1e-8);
        assert!(r.twist_residual(&s, &s) < 1e-8);
        assert!(l.mul(r).unwrap().circle_distance(&gamma, 32) < 1e-9);
    }
}

#[test]
fn birkhoff_is_stable_under_truncation_change() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let gamma = twisted_gl_loop(&mut rng, 4, -2, 2, 0.05);
        let a = birkhoff_with(&gamma, &FactorConfig::with_window(16));
        let b = birkhoff_with(&gamma, &FactorConfig { truncation: 18, ..FactorConfig::with_window(16) });
        let la = a.left.unwrap();
        let lb = b.left.unwrap();
        assert!(la.max_coeff_diff(&lb) < 1e-9);
    }
}

#[test]
fn birkhoff_detects_big_cell_boundary() {
    // λ·E₁₁ + (I − E₁₁) has a nontrivial middle term in its Birkhoff factorization.
    let mut e = CMat::zeros(2, 2);
    e[(0, 0)] = c(1.0, 0.0);
    let gamma = LaurentLoop::new(0, vec![eye(2) - &e, e]).unwrap();
    let out = birkhoff(&gamma, 4);
    assert_eq!(out.status, FactorStatus::OutsideBigCell);
    assert!(out.left.is_none() && out.right.is_none());
}

fn unitary_residual(l: &LaurentLoop) -> f64 {
    (0..16)
        .map(|k| {
            let u = l.eval(root_of_unity(k, 16));
            max_abs_diff(&(u.adjoint() * &u), &eye(u.nrows()))
        })
        .fold(0.0, f64::max)
}

#[test]
fn compact_iwasawa_of_identity() {
    let spec = SymmetricSpaceSpec::willmore(4);
    let out = iwasawa_compact(&LaurentLoop::identity(8), &spec);
    let (l, r) = out.factors().unwrap();
    assert!(l.max_coeff_diff(&LaurentLoop::identity(8)) < 1e-14);
    assert!(r.max_coeff_diff(&LaurentLoop::identity(8)) < 1e-14);
}

#[test]
fn constant_loop_gives_qr_under_triangular_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let m = random_matrix(&mut rng, 4, 1.0) + eye(4) * c(2.0, 0.0);
    let cfg = FactorConfig { normalization: Normalization::Triangular, ..Default::default() };
    let out = iwasawa_unitary(&LaurentLoop::constant(m.clone()), &cfg);
    let (u, r) = out.factors().unwrap();
    assert_eq!(r.window(), DegreeWindow::new(0, 0));
    let r0 = r.coeff(0).unwrap();
    for i in 0..4 {
        assert!(r0[(i, i)].im.abs() < 1e-12 && r0[(i, i)].re > 0.0);
        for j in 0..i {
            assert!(r0[(i, j)].norm() < 1e-12);
        }
    }
    assert!(unitary_residual(u) < 1e-12);
    assert!(max_abs_diff(&(u.eval(c(1.0, 0.0)) * r0), &m) < 1e-12);
    // Polar normalization: Hermitian positive constant term instead.
    let polar = iwasawa_unitary(&LaurentLoop::constant(m.clone()), &FactorConfig::default());
    let p0 = polar.right.unwrap().coeff_or_zero(0);
    assert!(max_abs_diff(&p0, &p0.adjoint()) < 1e-12);
}

#[test]
fn compact_iwasawa_of_example_minus_frame() {
    let spec = SymmetricSpaceSpec::willmore(4);
    let gamma = example_minus(c(0.3, 0.0));
    let out = iwasawa_compact(&gamma, &spec);
    assert_eq!(out.status, FactorStatus::Success);
    let (u, w) = out.factors().unwrap();
    for k in 0..16 {
        let l = root_of_unity(k, 16);
        let uk = u.eval(l);
        let rho = spec.rho().apply(&uk);
        assert!(max_abs_diff(&rho, &uk) < 1e-9, "rho-reality");
        assert!(spec.group_residual(&uk) < 1e-9, "orthogonal");
    }
    assert!(u.mul(w).unwrap().circle_distance(&gamma, 16) < 1e-9);
    assert!(w.lo() >= 0);
    assert!(spec.twist_residual(u) < 1e-8 && spec.twist_residual(w) < 1e-8);
}

#[test]
fn wilson_and_gram_routes_agree() {
    let spec = SymmetricSpaceSpec::willmore(4);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..5 {
        let gamma = twisted_group_loop(&mut rng, &spec, 0.15, 16);
        let a = iwasawa_compact_with(&gamma, &spec, &FactorConfig::with_window(16));
        let b = iwasawa_compact_gram(&gamma, &FactorConfig::with_window(16));
        let (ua, wa) = a.factors().unwrap();
        let (ub, wb) = b.factors().unwrap();
        assert!(ua.max_coeff_diff(ub) < 1e-9);
        assert!(wa.max_coeff_diff(wb) < 1e-9);
    }
}

#[test]
fn compact_iwasawa_reconstructs_random_twisted_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for trial in 0..100 {
        let n = if trial % 2 == 0 { 4 } else { 8 };
        let s = split_s(n);
        let gamma = twisted_gl_loop(&mut rng, n, -3, 3, 0.1 / (n as f64).sqrt());
        let out = iwasawa_unitary(&gamma, &FactorConfig::with_window(32));
        assert_eq!(out.status, FactorStatus::Success, "trial {trial}");
        let (u, w) = out.factors().unwrap();
        let d = u.mul(w).unwrap().circle_distance(&gamma, 32);
        assert!(d < 1e-9, "trial {trial}: {d:e} {:?} {:?}", u.window(), w.window());
        assert!(unitary_residual(u) < 1e-9);
        assert!(w.norm_outside(DegreeWindow::new(0, 1000)) < 1e-10);
        assert!(u.twist_residual(&s, &s) < 1e-8 && w.twist_residual(&s, &s) < 1e-8);
    }
}

#[test]
fn compact_iwasawa_keeps_group_loops_in_the_group() {
    let spec = SymmetricSpaceSpec::willmore(4);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let gamma = twisted_group_loop(&mut rng, &spec, 0.2, 16);
        let out = iwasawa_compact_with(&gamma, &spec, &FactorConfig::with_window(16));
        let (u, w) = out.factors().unwrap();
        for k in 0..16 {
            let l = root_of_unity(k, 16);
            assert!(spec.group_residual(&u.eval(l)) < 1e-9);
            assert!(spec.group_residual(&w.eval(l)) < 1e-9);
        }
    }
}

#[test]
fn real_iwasawa_of_identity_and_example() {
    let spec = SymmetricSpaceSpec::willmore(4);
    let out = iwasawa_real(&LaurentLoop::identity(8), &spec);
    assert!(out.left.unwrap().max_coeff_diff(&LaurentLoop::identity(8)) < 1e-14);
    let gamma = example_minus(c(0.3, 0.2));
    let out = iwasawa_real(&gamma, &spec);
    assert_eq!(out.status, FactorStatus::Success);
    let (g, w) = out.factors().unwrap();
    for k in 0..16 {
        let gk = g.eval(root_of_unity(k, 16));
        assert!(gk.iter().all(|z| z.im.abs() < 1e-9));
        assert!(spec.group_residual(&gk) < 1e-9);
        assert!(gk[(0, 0)].re > 0.0);
    }
    assert!(g.mul(w).unwrap().circle_distance(&gamma, 16) < 1e-9);
}

/// Constant complex boost `cosh(w)` block in the timelike plane: the real factor of
/// its Iwasawa splitting reverses time orientation once `Im w` passes `π/2`.
fn imaginary_boost(a: f64, t: f64) -> CMat {
    let w = c(a, t);
    let mut g = eye(8);
    g[(0, 0)] = w.cosh();
    g[(1, 1)] = w.cosh();
    g[(0, 1)] = w.sinh();
    g[(1, 0)] = w.sinh();
    g
}

#[test]
fn real_iwasawa_rejects_indefinite_gram_inputs() {
    let spec = SymmetricSpaceSpec::willmore(4);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for trial in 0..100 {
        let t = std::f64::consts::PI * rng.gen_range(0.55..1.45);
        let k = random_real_k(&mut rng, &spec, 0.5);
        let gamma = LaurentLoop::constant(k * imaginary_boost(rng.gen_range(-1.0..1.0), t));
        let out = iwasawa_real(&gamma, &spec);
        assert_eq!(out.status, FactorStatus::OutsideIwasawaCell, "trial {trial}, t = {t}");
        assert!(out.left.is_none());
    }
    // Below the threshold the same family factors.
    let ok = iwasawa_real(&LaurentLoop::constant(imaginary_boost(0.3, 0.4)), &spec);
    assert_eq!(ok.status, FactorStatus::Success);
    let _ = max_abs(&eye(2));
}

#[test]
fn tangent_split_matches_finite_differences() {
    let spec = SymmetricSpaceSpec::willmore(4);
    let z = c(0.3, 0.2);
    let h = 1e-6;
    let cfg = FactorConfig::default();
    let gamma = example_minus(z);
    let dgamma = example_minus(z + h).sub(&example_minus(z - h)).scale(c(0.5 / h, 0.0));
    for real in [false, true] {
        let fact = |g: &LaurentLoop| if real { iwasawa_real(g, &spec) } else { iwasawa_compact(g, &spec) };
        let (l, r) = fact(&gamma).into_factors().unwrap();
        let kind = if real { SplitKind::Real(spec.j()) } else { SplitKind::Unitary };
        let (dl, dr) = factor_tangent(&l, &r, &dgamma, kind, &cfg).unwrap();
        let (lp, rp) = fact(&example_minus(z + h)).into_factors().unwrap();
        let (lm, rm) = fact(&example_minus(z - h)).into_factors().unwrap();
        let fd_l = lp.sub(&lm).scale(c(0.5 / h, 0.0));
        let fd_r = rp.sub(&rm).scale(c(0.5 / h, 0.0));
        assert!(dl.max_coeff_diff(&fd_l) < 1e-6, "left {real}: {}", dl.max_coeff_diff(&fd_l));
        assert!(dr.max_coeff_diff(&fd_r) < 1e-6, "right {real}: {}", dr.max_coeff_diff(&fd_r));
    }
}
