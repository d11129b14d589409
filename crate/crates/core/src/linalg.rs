//! Dense complex matrix helpers shared by the loop and factorization code.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Largest entry modulus. All tolerances in the crate are stated in this norm.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn diag_real(d: &[f64]) -> CMat {
    let n = d.len();
    CMat::from_fn(n, n, |i, j| if i == j { re(d[i]) } else { Complex64::default() })
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn conj(m: &CMat) -> CMat {
    m.map(|z| z.conj())
}

/// Inverse through LU, rejected when the 1-norm condition estimate exceeds `max_cond`.
pub fn inverse_checked(m: &CMat, max_cond: f64) -> Option<CMat> {
    let inv = m.clone().lu().try_inverse()?;
    let cond = norm1(m) * norm1(&inv);
    if !cond.is_finite() || cond > max_cond {
        return None;
    }
    Some(inv)
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    inverse_checked(m, 1e14)
}

pub fn norm1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    let svd = m.clone().svd(false, false);
    svd.singular_values.iter().copied().collect()
}

/// Principal square root by the Denman–Beavers iteration. Returns `None` when the
/// iteration does not settle, which happens when the spectrum touches the closed
/// negative real axis.
pub fn sqrtm(a: &CMat) -> Option<CMat> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = eye(n);
    let scale = max_abs(a).max(1e-300);
    for _ in 0..200 {
        let yi = inverse_checked(&y, 1e13)?;
        let zi = inverse_checked(&z, 1e13)?;
        let y_next = (&y + zi) * re(0.5);
        let z_next = (&z + yi) * re(0.5);
        let step = max_abs_diff(&y_next, &y);
        y = y_next;
        z = z_next;
        if step <= 1e-15 * scale.sqrt() {
            break;
        }
    }
    let err = max_abs_diff(&(&y * &y), a);
    if err <= 1e-10 * scale {
        Some(y)
    } else {
        None
    }
}

/// Polar decomposition `m = u·p` with `u` unitary and `p` Hermitian positive definite,
/// by the scaled Newton iteration `X ← (ζX + X⁻ᴴ/ζ)/2`. The complex SVD is avoided
/// because it returns wrong singular vectors for repeated singular values.
pub fn polar(m: &CMat) -> Option<(CMat, CMat)> {
    let n = m.nrows();
    let mut x = m.clone();
    for _ in 0..100 {
        let xi = inverse_checked(&x, 1e13)?;
        // Frobenius-norm scaling speeds up the early steps.
        let zeta = (xi.norm() / x.norm()).sqrt();
        let next = (&x * re(zeta) + xi.adjoint() * re(1.0 / zeta)) * re(0.5);
        let step = max_abs_diff(&next, &x);
        x = next;
        if step <= 1e-15 {
            break;
        }
    }
    let u = x;
    if max_abs_diff(&(u.adjoint() * &u), &eye(n)) > 1e-12 {
        return None;
    }
    let p = u.adjoint() * m;
    let p = (&p + p.adjoint()) * re(0.5);
    Some((u, p))
}

/// Number of negative eigenvalues of a Hermitian matrix (its symmetrized part is used).
pub fn negative_inertia(h: &CMat) -> usize {
    let sym = (h + h.adjoint()) * re(0.5);
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .filter(|e| **e < 0.0)
        .count()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Numerical rank from singular values relative to the largest one.
pub fn rank(m: &CMat, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * top).count()
}
