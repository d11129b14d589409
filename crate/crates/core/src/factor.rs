//! Birkhoff and Iwasawa factorizations of finite-window loops.
//!
//! Birkhoff: one block-Toeplitz solve for the inverse of the plus factor.
//! Compact Iwasawa: Wilson's Newton iteration for the spectral factor of the Gram loop
//! `γ^H γ`. Real Iwasawa: Birkhoff factorization of the `J`-Gram loop `J γ^H J γ`
//! followed by a principal square root of its constant term, with signature and
//! time-orientation checks marking exit from the open cell.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, c, eye, max_abs, max_abs_diff, CMat};
use crate::loopalg::{
    coeffs_to_samples, loop_inverse_with, samples_to_coeffs, working_samples, DegreeWindow,
    LaurentLoop, LoopError, DEFAULT_SAMPLES, DEFAULT_WINDOW,
};
use crate::symspace::SymmetricSpaceSpec;

/// Toeplitz systems with a smaller singular value are outside the big cell.
pub const SINGULAR_CUTOFF: f64 = 1e-10;
/// Larger condition estimates are reported as ill-conditioned.
pub const CONDITION_CUTOFF: f64 = 1e12;
/// Reconstruction and reality tolerance below which a computed factor pair is accepted.
const ACCEPT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorStatus {
    Success,
    OutsideBigCell,
    OutsideIwasawaCell,
    IllConditioned,
}

#[derive(Clone, Debug)]
pub struct FactorizationOutcome {
    pub status: FactorStatus,
    pub left: Option<LaurentLoop>,
    pub right: Option<LaurentLoop>,
    /// Smallest singular value estimate of the governing linear problem.
    pub condition: f64,
}

impl FactorizationOutcome {
    fn failed(status: FactorStatus, condition: f64) -> Self {
        FactorizationOutcome {
            status,
            left: None,
            right: None,
            condition,
        }
    }

    fn success(left: LaurentLoop, right: LaurentLoop, condition: f64) -> Self {
        FactorizationOutcome {
            status: FactorStatus::Success,
            left: Some(left),
            right: Some(right),
            condition,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == FactorStatus::Success
    }

    pub fn factors(&self) -> Option<(&LaurentLoop, &LaurentLoop)> {
        Some((self.left.as_ref()?, self.right.as_ref()?))
    }

    pub fn into_factors(self) -> Option<(LaurentLoop, LaurentLoop)> {
        Some((self.left?, self.right?))
    }
}

/// How the constant term of the plus factor is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// `w₊(0)` Hermitian positive (compact) or `J`-Hermitian with spectrum in the right
    /// half plane (real form). Keeps both factors inside the orthogonal group.
    Polar,
    /// `w₊(0)` upper triangular with positive diagonal. Only meaningful for `GL(n)`
    /// inputs; it does not preserve orthogonal groups.
    Triangular,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorConfig {
    /// Truncation degree of the Toeplitz system.
    pub truncation: usize,
    /// Degree cap for computed factors.
    pub window: i32,
    pub samples: usize,
    pub normalization: Normalization,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig {
            truncation: DEFAULT_WINDOW as usize,
            window: DEFAULT_WINDOW,
            samples: DEFAULT_SAMPLES,
            normalization: Normalization::Polar,
        }
    }
}

impl FactorConfig {
    pub fn with_window(window: i32) -> Self {
        FactorConfig {
            truncation: window as usize,
            window,
            ..Default::default()
        }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }
}

/// Largest singular value of a square matrix by power iteration on `AᴴA`.
fn top_singular_value(a: &CMat) -> f64 {
    let m = a.ncols();
    let mut v = nalgebra::DVector::<Complex64>::from_fn(m, |i, _| c(1.0 + (i % 7) as f64 * 0.1, 0.3 * (i % 3) as f64));
    let mut est = 0.0;
    for _ in 0..40 {
        let w = a.ad_mul(&(a * &v));
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw / v.norm();
        v = w / c(nw, 0.0);
        if (next - est).abs() <= 1e-6 * next {
            est = next;
            break;
        }
        est = next;
    }
    est.sqrt()
}

/// `γ = γ₋·γ₊` with `γ₋ = I + O(λ⁻¹)` and `γ₊` holomorphic in the disk.
pub fn birkhoff(gamma: &LaurentLoop, truncation: usize) -> FactorizationOutcome {
    let cfg = FactorConfig {
        truncation,
        window: (truncation as i32).max(DEFAULT_WINDOW),
        ..Default::default()
    };
    birkhoff_with(gamma, &cfg)
}

pub fn birkhoff_with(gamma: &LaurentLoop, cfg: &FactorConfig) -> FactorizationOutcome {
    let n = gamma.dim();
    let m = cfg.truncation;
    let size = (m + 1) * n;
    let mut t = CMat::zeros(size, size);
    for k in 0..=m {
        for j in 0..=m {
            if let Some(block) = gamma.coeff(k as i32 - j as i32) {
                t.view_mut((k * n, j * n), (n, n)).copy_from(block);
            }
        }
    }
    let t_inv = match t.clone().lu().try_inverse() {
        Some(x) if x.iter().all(|z| z.is_finite()) => x,
        _ => return FactorizationOutcome::failed(FactorStatus::OutsideBigCell, 0.0),
    };
    let smin = 1.0 / top_singular_value(&t_inv);
    if smin < SINGULAR_CUTOFF {
        return FactorizationOutcome::failed(FactorStatus::OutsideBigCell, smin);
    }
    let smax = top_singular_value(&t);
    if smax / smin > CONDITION_CUTOFF {
        return FactorizationOutcome::failed(FactorStatus::IllConditioned, smin);
    }
    let delta_coeffs: Vec<CMat> = (0..=m)
        .map(|j| t_inv.view((j * n, 0), (n, n)).into_owned())
        .collect();
    let delta = LaurentLoop::new(0, delta_coeffs).expect("non-empty");
    let prod = gamma.mul(&delta).expect("same dimension");
    let mut left = prod.restrict(DegreeWindow::new(gamma.lo().min(0), 0));
    *left.coeff_mut(0).expect("degree 0 present") = eye(n);
    let right = match loop_inverse_with(&delta, DegreeWindow::new(0, cfg.window), cfg.samples) {
        Ok(r) => r.trim(),
        Err(_) => return FactorizationOutcome::failed(FactorStatus::IllConditioned, smin),
    };
    let left = left.trim();
    if !reconstructs(gamma, &left, &right, cfg.samples) {
        return FactorizationOutcome::failed(FactorStatus::IllConditioned, smin);
    }
    FactorizationOutcome::success(left, right, smin)
}

fn reconstructs(gamma: &LaurentLoop, left: &LaurentLoop, right: &LaurentLoop, samples: usize) -> bool {
    let prod = match left.mul(right) {
        Ok(p) => p,
        Err(_) => return false,
    };
    let scale = gamma.max_coeff().max(1.0);
    prod.circle_distance(gamma, samples.max(16)) <= ACCEPT_TOL * scale
}

/// Upper triangular factor `R` with positive diagonal and `RᴴR = h` for Hermitian
/// positive definite `h`.
fn cholesky_upper(h: &CMat) -> Option<CMat> {
    let sym = (h + h.adjoint()) * c(0.5, 0.0);
    let chol = sym.cholesky()?;
    Some(chol.l().adjoint())
}

/// Wilson's Newton iteration for `g = AᴴA` on the unit circle with `A` a plus loop whose
/// constant term is upper triangular with positive diagonal. Returns the factor and
/// the final relative residual.
pub fn spectral_factor(g: &LaurentLoop, cfg: &FactorConfig) -> Result<(LaurentLoop, f64), FactorStatus> {
    let n = g.dim();
    let w = DegreeWindow::new(0, cfg.window);
    let count = working_samples(g.window(), DegreeWindow::symmetric(cfg.window), cfg.samples.max(4 * cfg.window as usize + 4));
    let gs = coeffs_to_samples(g, count);
    let a0 = cholesky_upper(&g.coeff_or_zero(0)).ok_or(FactorStatus::IllConditioned)?;
    let mut a = LaurentLoop::constant(a0);
    let mut last = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..100 {
        let as_ = coeffs_to_samples(&a, count);
        let mut r_samples = Vec::with_capacity(count);
        for (ak, gk) in as_.values.iter().zip(&gs.values) {
            let ai = linalg::inverse_checked(ak, CONDITION_CUTOFF).ok_or(FactorStatus::IllConditioned)?;
            r_samples.push(ai.adjoint() * gk * &ai - eye(n));
        }
        let err = r_samples.iter().map(max_abs).fold(0.0, f64::max);
        if err < 1e-14 {
            return Ok((a.trim(), err));
        }
        if err >= last * 0.9 {
            stalled += 1;
            if stalled > 3 {
                return if err < 1e-10 { Ok((a.trim(), err)) } else { Err(FactorStatus::IllConditioned) };
            }
        }
        last = err;
        let r = samples_to_coeffs(&crate::loopalg::SampleSet { values: r_samples }, w)
            .map_err(|_| FactorStatus::IllConditioned)?;
        let mut l = r.clone();
        let r0 = r.coeff_or_zero(0);
        let l0 = l.coeff_mut(0).expect("degree 0 in window");
        for i in 0..n {
            for j in 0..n {
                l0[(i, j)] = if i < j {
                    r0[(i, j)]
                } else if i == j {
                    c(0.5 * r0[(i, i)].re, 0.0)
                } else {
                    Complex64::default()
                };
            }
        }
        let step = LaurentLoop::identity(n).add(&l);
        a = step.mul(&a).expect("same dimension").restrict(w);
    }
    Err(FactorStatus::IllConditioned)
}

/// `γ = u·w₊` with `u` unitary on the unit circle and `w₊` a plus loop.
pub fn iwasawa_compact(gamma: &LaurentLoop, spec: &SymmetricSpaceSpec) -> FactorizationOutcome {
    iwasawa_compact_with(gamma, spec, &FactorConfig::default())
}

pub fn iwasawa_compact_with(
    gamma: &LaurentLoop,
    _spec: &SymmetricSpaceSpec,
    cfg: &FactorConfig,
) -> FactorizationOutcome {
    iwasawa_unitary(gamma, cfg)
}

/// Compact Iwasawa for arbitrary invertible loops; `u` is unitary, `w₊` normalized by
/// `cfg.normalization`.
pub fn iwasawa_unitary(gamma: &LaurentLoop, cfg: &FactorConfig) -> FactorizationOutcome {
    let g = gamma.star().mul(gamma).expect("same dimension");
    let (a, residual) = match spectral_factor(&g, cfg) {
        Ok(x) => x,
        Err(status) => return FactorizationOutcome::failed(status, 0.0),
    };
    let w_plus = match cfg.normalization {
        Normalization::Triangular => a,
        Normalization::Polar => match linalg::polar(&a.coeff_or_zero(0)) {
            Some((v, _)) => a.left_mul(&v.adjoint()),
            None => return FactorizationOutcome::failed(FactorStatus::IllConditioned, 0.0),
        },
    };
    let margin = linalg::singular_values(&w_plus.coeff_or_zero(0))
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let _ = residual;
    finish_iwasawa(gamma, w_plus, None, cfg, margin)
}

/// `left = γ·w₊⁻¹`, then checks reconstruction and `J`-unitarity of `left`
/// (`J = I` for the compact form).
fn finish_iwasawa(
    gamma: &LaurentLoop,
    w_plus: LaurentLoop,
    form: Option<&CMat>,
    cfg: &FactorConfig,
    condition: f64,
) -> FactorizationOutcome {
    let n = gamma.dim();
    let w_inv = match loop_inverse_with(&w_plus, DegreeWindow::new(0, cfg.window), cfg.samples) {
        Ok(x) => x,
        Err(_) => return FactorizationOutcome::failed(FactorStatus::IllConditioned, condition),
    };
    let reach = gamma.lo().abs().max(gamma.hi().abs()).max(cfg.window);
    let left = gamma
        .mul(&w_inv)
        .expect("same dimension")
        .restrict(DegreeWindow::symmetric(reach))
        .trim();
    let j = form.cloned().unwrap_or_else(|| eye(n));
    let count = cfg.samples.max(16);
    let mut unitary = 0.0_f64;
    for s in coeffs_to_samples(&left, count).values {
        unitary = unitary.max(max_abs_diff(&(s.adjoint() * &j * &s), &j));
    }
    if unitary > ACCEPT_TOL || !reconstructs(gamma, &left, &w_plus, count) {
        return FactorizationOutcome::failed(FactorStatus::IllConditioned, condition);
    }
    FactorizationOutcome::success(left, w_plus, condition)
}

/// Compact Iwasawa through a Birkhoff factorization of the Gram loop and a principal
/// square root; agrees with [`iwasawa_compact`] under polar normalization and serves
/// as its independent cross-check.
pub fn iwasawa_compact_gram(gamma: &LaurentLoop, cfg: &FactorConfig) -> FactorizationOutcome {
    gram_iwasawa(gamma, None, cfg)
}

/// `γ = g·w₊` with `g` real on the unit circle, attempted. Exit from the open cell shows
/// up as a singular Gram Toeplitz system, a wrong signature of the constant Gram block,
/// a missing principal square root, or a real factor outside the identity component.
pub fn iwasawa_real(gamma: &LaurentLoop, spec: &SymmetricSpaceSpec) -> FactorizationOutcome {
    iwasawa_real_with(gamma, spec, &FactorConfig::default())
}

pub fn iwasawa_real_with(
    gamma: &LaurentLoop,
    spec: &SymmetricSpaceSpec,
    cfg: &FactorConfig,
) -> FactorizationOutcome {
    let out = gram_iwasawa(gamma, Some(spec.j()), cfg);
    if !out.is_success() {
        return out;
    }
    let left = out.left.as_ref().expect("success has factors");
    let at_one = left.eval(c(1.0, 0.0));
    let mut imag = 0.0_f64;
    for s in coeffs_to_samples(left, cfg.samples.max(16)).values {
        imag = imag.max(s.iter().fold(0.0_f64, |m, z| m.max(z.im.abs())));
    }
    if imag > ACCEPT_TOL {
        return FactorizationOutcome::failed(FactorStatus::IllConditioned, out.condition);
    }
    let t = spec.timelike();
    if !t.is_empty() {
        let block = CMat::from_fn(t.len(), t.len(), |a, b| at_one[(t[a], t[b])]);
        if block.determinant().re <= 0.0 {
            return FactorizationOutcome::failed(FactorStatus::OutsideIwasawaCell, out.condition);
        }
    }
    out
}

fn gram_iwasawa(gamma: &LaurentLoop, form: Option<&CMat>, cfg: &FactorConfig) -> FactorizationOutcome {
    let fail = match form {
        Some(_) => FactorStatus::OutsideIwasawaCell,
        None => FactorStatus::IllConditioned,
    };
    let mut adj = gamma.star();
    if let Some(j) = form {
        adj = adj.map(|_, m| j * m * j);
    }
    let g = adj.mul(gamma).expect("same dimension");
    let split = birkhoff_with(&g, cfg);
    let condition = split.condition;
    let (_, g_plus) = match split.into_factors() {
        Some(x) => x,
        None => return FactorizationOutcome::failed(fail, condition),
    };
    let g0 = g_plus.coeff_or_zero(0);
    if let Some(j) = form {
        let expected = j.diagonal().iter().filter(|z| z.re < 0.0).count();
        if linalg::negative_inertia(&(j * &g0)) != expected {
            return FactorizationOutcome::failed(fail, condition);
        }
    }
    let b = match linalg::sqrtm(&g0) {
        Some(b) => b,
        None => return FactorizationOutcome::failed(fail, condition),
    };
    let b_inv = match linalg::inverse(&b) {
        Some(x) => x,
        None => return FactorizationOutcome::failed(fail, condition),
    };
    let w_plus = g_plus.left_mul(&b_inv).restrict(DegreeWindow::new(0, cfg.window)).trim();
    finish_iwasawa(gamma, w_plus, form, cfg, condition)
}

/// Which factorization a tangent is split for.
#[derive(Clone, Copy, Debug)]
pub enum SplitKind<'a> {
    Birkhoff,
    /// Compact Iwasawa with polar normalization.
    Unitary,
    /// Real Iwasawa for the form `J`.
    Real(&'a CMat),
}

/// Given `γ = left·right` and a tangent `dγ`, returns `(d left, d right)` respecting the
/// factor types and the normalization of `right(0)`.
pub fn factor_tangent(
    left: &LaurentLoop,
    right: &LaurentLoop,
    dgamma: &LaurentLoop,
    kind: SplitKind<'_>,
    cfg: &FactorConfig,
) -> Result<(LaurentLoop, LaurentLoop), LoopError> {
    let n = left.dim();
    let reach = left.lo().abs().max(left.hi().abs()).max(cfg.window);
    let left_inv = loop_inverse_with(left, DegreeWindow::symmetric(reach), cfg.samples)?.trim();
    let p = left_inv.mul(dgamma)?;
    let lo = p.lo().min(0);
    let right_inv = loop_inverse_with(right, DegreeWindow::new(0, (-lo).max(cfg.window)), cfg.samples)?;
    let y = p.mul(&right_inv)?.restrict(DegreeWindow::new(lo, 0));
    let y_u = match kind {
        SplitKind::Birkhoff => {
            let mut m = y.clone();
            *m.coeff_mut(0).expect("degree 0") = CMat::zeros(n, n);
            m
        }
        SplitKind::Unitary | SplitKind::Real(_) => {
            let form = match kind {
                SplitKind::Real(j) => j.clone(),
                _ => eye(n),
            };
            let reflect = |x: &CMat| -(&form * x.adjoint() * &form);
            let mut m = LaurentLoop::zeros(n, DegreeWindow::symmetric(-lo));
            for j in lo..0 {
                let yj = y.coeff_or_zero(j);
                *m.coeff_mut(-j).expect("in window") = reflect(&yj);
                *m.coeff_mut(j).expect("in window") = yj;
            }
            let b = right.coeff_or_zero(0);
            *m.coeff_mut(0).expect("in window") = real_part_at_zero(&y.coeff_or_zero(0), &b, &form);
            m
        }
    };
    let dleft = left.mul(&y_u)?.trim();
    let dright = p.sub(&y_u.mul(right)?).restrict(DegreeWindow::new(0, p.hi().max(right.hi()).max(0))).trim();
    Ok((dleft, dright))
}

/// Splits `y0 = A + E` with `A` in the real form (`A = −J Aᴴ J`) and `E·b` tangent to the
/// normalization slice (`J·E·b` Hermitian), where `b = w₊(0)`.
fn real_part_at_zero(y0: &CMat, b: &CMat, form: &CMat) -> CMat {
    // With A = J·(iH) and E·b = J·D, H and D Hermitian:  J y0 b = iHb + D,
    // so H solves the Lyapunov equation  H b + bᴴ H = −i (Z − Zᴴ),  Z = J y0 b.
    let z = form * y0 * b;
    let rhs = (&z - z.adjoint()) * c(0.0, -1.0);
    let h = lyapunov(b, &rhs);
    form * h * c(0.0, 1.0)
}

/// Solves `X·b + bᴴ·X = C` through a complex Schur form of `b` (Bartels–Stewart).
fn lyapunov(b: &CMat, cmat: &CMat) -> CMat {
    // Column-major vec: vec(H·b) = (bᵀ ⊗ I)·vec H, vec(bᴴ·H) = (I ⊗ bᴴ)·vec H. A dense
    // solve is used because the complex Schur iteration can stall on clustered spectra.
    let n = b.nrows();
    let bh = b.adjoint();
    let m = CMat::from_fn(n * n, n * n, |r, col| {
        let (i, j) = (r % n, r / n);
        let (k, l) = (col % n, col / n);
        let mut v = c(0.0, 0.0);
        if i == k {
            v += b[(l, j)];
        }
        if j == l {
            v += bh[(i, k)];
        }
        v
    });
    let rhs = nalgebra::DVector::from_iterator(n * n, cmat.iter().copied());
    let sol = m.lu().solve(&rhs).unwrap_or_else(|| nalgebra::DVector::zeros(n * n));
    let x = CMat::from_column_slice(n, n, sol.as_slice());
    (&x + x.adjoint()) * c(0.5, 0.0)
}
