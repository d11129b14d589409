#![allow(dead_code)]

use harmap_core::linalg::{c, diag_real, eye, CMat};
use harmap_core::loopalg::{samples_to_coeffs, root_of_unity, DegreeWindow, LaurentLoop, SampleSet};
use harmap_core::symspace::SymmetricSpaceSpec;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMat {
    CMat::from_fn(n, n, |_, _| c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
}

/// `S = diag(1,…,1,−1,…,−1)` with equal blocks.
pub fn split_s(n: usize) -> CMat {
    diag_real(&(0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect::<Vec<_>>())
}

/// Random σ-twisted `GL(n)` loop `I + Σ_{lo ≤ j ≤ hi} λ^j X_j`.
pub fn twisted_gl_loop(rng: &mut ChaCha8Rng, n: usize, lo: i32, hi: i32, scale: f64) -> LaurentLoop {
    let s = split_s(n);
    let coeffs = (lo..=hi)
        .map(|j| {
            let x = random_matrix(rng, n, scale);
            let sign = if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let mut m = (&x + &s * &x * &s * c(sign, 0.0)) * c(0.5, 0.0);
            if j == 0 {
                m += eye(n);
            }
            m
        })
        .collect();
    LaurentLoop::new(lo, coeffs).unwrap()
}

/// Random normalized minus loop `I + Σ_{j<0}` and plus loop with invertible constant term.
pub fn twisted_minus(rng: &mut ChaCha8Rng, n: usize, deg: i32, scale: f64) -> LaurentLoop {
    let mut a = twisted_gl_loop(rng, n, -deg, 0, scale);
    *a.coeff_mut(0).unwrap() = eye(n);
    a
}

pub fn twisted_plus(rng: &mut ChaCha8Rng, n: usize, deg: i32, scale: f64) -> LaurentLoop {
    twisted_gl_loop(rng, n, 0, deg, scale)
}

/// `exp(λ⁻¹P + K + λP')` with `P, P' ∈ p^C` and `K ∈ k^C` random, a group-valued
/// σ-twisted loop with rapidly decaying coefficients.
pub fn twisted_group_loop(rng: &mut ChaCha8Rng, spec: &SymmetricSpaceSpec, scale: f64, window: i32) -> LaurentLoop {
    let x_m = spec.project_kp(&(spec.random_algebra_element(rng) * c(scale, 0.0))).1;
    let x_0 = spec.project_kp(&(spec.random_algebra_element(rng) * c(scale, 0.0))).0;
    let x_p = spec.project_kp(&(spec.random_algebra_element(rng) * c(scale, 0.0))).1;
    let count = 64;
    let values = (0..count)
        .map(|k| {
            let l = root_of_unity(k, count);
            (&x_m * (c(1.0, 0.0) / l) + &x_0 + &x_p * l).exp()
        })
        .collect();
    samples_to_coeffs(&SampleSet { values }, DegreeWindow::symmetric(window)).unwrap().trim()
}

pub fn random_real_k(rng: &mut ChaCha8Rng, spec: &SymmetricSpaceSpec, scale: f64) -> CMat {
    let x = spec.project_kp(&spec.random_algebra_element(rng)).0;
    (x.map(|z| c(z.re, 0.0)) * c(scale, 0.0)).exp()
}

/// The worked-example negative frame `I + λ⁻¹N(z)` for `f₂ = z`, `f₄ = z²`.
pub fn example_minus(z: num_complex::Complex64) -> LaurentLoop {
    example_minus_from(z, z * z)
}

/// Same frame normalized to `I` at `z0`.
#[allow(dead_code)]
pub fn example_minus_shifted(z: num_complex::Complex64, z0: num_complex::Complex64) -> LaurentLoop {
    example_minus_from(z - z0, z * z - z0 * z0)
}

pub fn example_minus_from(f2: num_complex::Complex64, f4: num_complex::Complex64) -> LaurentLoop {
    let i = c(0.0, 1.0);
    let half = c(0.5, 0.0);
    let b = CMat::from_row_slice(4, 4, &[
        -i * f2 * half, f2 * half, c(0.0, 0.0), c(0.0, 0.0),
        i * f2 * half, -f2 * half, c(0.0, 0.0), c(0.0, 0.0),
        f4 * half, i * f4 * half, c(0.0, 0.0), c(0.0, 0.0),
        i * f4 * half, -f4 * half, c(0.0, 0.0), c(0.0, 0.0),
    ]);
    let j4 = diag_real(&[-1.0, 1.0, 1.0, 1.0]);
    let mut x = CMat::zeros(8, 8);
    x.view_mut((0, 4), (4, 4)).copy_from(&b);
    x.view_mut((4, 0), (4, 4)).copy_from(&(-(b.transpose() * j4)));
    LaurentLoop::new(-1, vec![x, eye(8)]).unwrap()
}
