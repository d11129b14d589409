//! Matrix-valued Laurent loops in the spectral parameter, their circle samples, and
//! involutions acting on them.
//!
//! Products and involutions are done on coefficients. Inverses go through samples on
//! the unit circle and a discrete Fourier transform back to coefficients.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, c, eye, max_abs, max_abs_diff, CMat};

/// Coefficients below this norm are treated as absent. One constant for the whole crate.
pub const TAIL_TOL: f64 = 1e-8;
pub const DEFAULT_WINDOW: i32 = 8;
pub const DEFAULT_SAMPLES: usize = 32;
/// Sample matrices with a larger condition estimate count as singular.
pub const SAMPLE_COND_MAX: f64 = 1e12;
const TRIM_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoopError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("loop is numerically singular at sample {index} (lambda = {lambda})")]
    SingularSample { index: usize, lambda: Complex64 },
    #[error("coefficient of norm {tail:.3e} outside window [{lo}, {hi}]")]
    WindowOverflow { lo: i32, hi: i32, tail: f64 },
    #[error("{samples} samples cannot resolve a window of width {width}")]
    Aliasing { samples: usize, width: usize },
    #[error("empty coefficient list")]
    Empty,
    #[error("involution check failed: residual {0:.3e}")]
    NotInvolutive(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeWindow {
    pub lo: i32,
    pub hi: i32,
}

impl DegreeWindow {
    pub fn new(lo: i32, hi: i32) -> Self {
        assert!(lo <= hi, "empty degree window [{lo}, {hi}]");
        DegreeWindow { lo, hi }
    }

    pub fn symmetric(m: i32) -> Self {
        DegreeWindow::new(-m, m)
    }

    pub fn width(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn contains(&self, j: i32) -> bool {
        self.lo <= j && j <= self.hi
    }

    pub fn hull(&self, other: &DegreeWindow) -> DegreeWindow {
        DegreeWindow::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// Smallest N for which a loop in this window survives a sample round trip.
    pub fn safe_samples(&self) -> usize {
        2 * self.lo.unsigned_abs().max(self.hi.unsigned_abs()) as usize + 1
    }
}

#[derive(Clone, Debug)]
pub struct LaurentLoop {
    n: usize,
    lo: i32,
    coeffs: Vec<CMat>,
}

impl LaurentLoop {
    pub fn new(lo: i32, coeffs: Vec<CMat>) -> Result<Self, LoopError> {
        let first = coeffs.first().ok_or(LoopError::Empty)?;
        let n = first.nrows();
        for m in &coeffs {
            if m.nrows() != n || m.ncols() != n {
                return Err(LoopError::DimensionMismatch(n, m.nrows().max(m.ncols())));
            }
        }
        Ok(LaurentLoop { n, lo, coeffs })
    }

    pub fn zeros(n: usize, window: DegreeWindow) -> Self {
        LaurentLoop {
            n,
            lo: window.lo,
            coeffs: vec![CMat::zeros(n, n); window.width()],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(eye(n))
    }

    pub fn constant(m: CMat) -> Self {
        LaurentLoop {
            n: m.nrows(),
            lo: 0,
            coeffs: vec![m],
        }
    }

    /// `m·λ^degree`.
    pub fn monomial(m: CMat, degree: i32) -> Self {
        LaurentLoop {
            n: m.nrows(),
            lo: degree,
            coeffs: vec![m],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    pub fn hi(&self) -> i32 {
        self.lo + self.coeffs.len() as i32 - 1
    }

    pub fn window(&self) -> DegreeWindow {
        DegreeWindow::new(self.lo(), self.hi())
    }

    pub fn coeff(&self, j: i32) -> Option<&CMat> {
        if j < self.lo || j > self.hi() {
            None
        } else {
            Some(&self.coeffs[(j - self.lo) as usize])
        }
    }

    pub fn coeff_or_zero(&self, j: i32) -> CMat {
        self.coeff(j)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.n, self.n))
    }

    pub fn coeff_mut(&mut self, j: i32) -> Option<&mut CMat> {
        if j < self.lo || j > self.hi() {
            None
        } else {
            Some(&mut self.coeffs[(j - self.lo) as usize])
        }
    }

    /// Iterator over `(degree, coefficient)`.
    pub fn terms(&self) -> impl Iterator<Item = (i32, &CMat)> {
        let lo = self.lo;
        self.coeffs.iter().enumerate().map(move |(k, m)| (lo + k as i32, m))
    }

    pub fn eval(&self, lambda: Complex64) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        let mut p = lambda.powi(self.lo);
        for m in &self.coeffs {
            out.zip_apply(m, |o, x| *o += x * p);
            p *= lambda;
        }
        out
    }

    pub fn mul(&self, other: &LaurentLoop) -> Result<LaurentLoop, LoopError> {
        if self.n != other.n {
            return Err(LoopError::DimensionMismatch(self.n, other.n));
        }
        let mut out = LaurentLoop::zeros(
            self.n,
            DegreeWindow::new(self.lo + other.lo, self.hi() + other.hi()),
        );
        for (a, ma) in self.coeffs.iter().enumerate() {
            if max_abs(ma) == 0.0 {
                continue;
            }
            for (b, mb) in other.coeffs.iter().enumerate() {
                out.coeffs[a + b].gemm(Complex64::new(1.0, 0.0), ma, mb, Complex64::new(1.0, 0.0));
            }
        }
        Ok(out)
    }

    pub fn left_mul(&self, m: &CMat) -> LaurentLoop {
        self.map(|_, x| m * x)
    }

    pub fn right_mul(&self, m: &CMat) -> LaurentLoop {
        self.map(|_, x| x * m)
    }

    pub fn scale(&self, s: Complex64) -> LaurentLoop {
        self.map(|_, x| x * s)
    }

    pub fn map(&self, f: impl Fn(i32, &CMat) -> CMat) -> LaurentLoop {
        LaurentLoop {
            n: self.n,
            lo: self.lo,
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(k, m)| f(self.lo + k as i32, m))
                .collect(),
        }
    }

    fn combine(&self, other: &LaurentLoop, sign: f64) -> LaurentLoop {
        assert_eq!(self.n, other.n, "loop dimension mismatch");
        let w = self.window().hull(&other.window());
        let mut out = LaurentLoop::zeros(self.n, w);
        for (j, m) in self.terms() {
            out.coeffs[(j - w.lo) as usize] += m;
        }
        for (j, m) in other.terms() {
            out.coeffs[(j - w.lo) as usize] += m * c(sign, 0.0);
        }
        out
    }

    pub fn add(&self, other: &LaurentLoop) -> LaurentLoop {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &LaurentLoop) -> LaurentLoop {
        self.combine(other, -1.0)
    }

    /// Coefficients restricted (or zero-padded) to `w`.
    pub fn restrict(&self, w: DegreeWindow) -> LaurentLoop {
        let coeffs = (w.lo..=w.hi).map(|j| self.coeff_or_zero(j)).collect();
        LaurentLoop {
            n: self.n,
            lo: w.lo,
            coeffs,
        }
    }

    /// Largest coefficient norm outside `w`.
    pub fn norm_outside(&self, w: DegreeWindow) -> f64 {
        self.terms()
            .filter(|(j, _)| !w.contains(*j))
            .map(|(_, m)| max_abs(m))
            .fold(0.0, f64::max)
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(max_abs).fold(0.0, f64::max)
    }

    /// Degrees carrying a coefficient above `tol`, or `None` for the zero loop.
    pub fn support(&self, tol: f64) -> Option<DegreeWindow> {
        let mut lo = None;
        let mut hi = None;
        for (j, m) in self.terms() {
            if max_abs(m) > tol {
                lo.get_or_insert(j);
                hi = Some(j);
            }
        }
        Some(DegreeWindow::new(lo?, hi?))
    }

    /// Drops edge coefficients that are numerically zero, keeping degree 0 in range.
    pub fn trimmed(&self, tol: f64) -> LaurentLoop {
        let w = match self.support(tol) {
            Some(w) => w.hull(&DegreeWindow::new(0, 0)),
            None => DegreeWindow::new(0, 0),
        };
        self.restrict(w)
    }

    pub fn trim(&self) -> LaurentLoop {
        self.trimmed(TRIM_TOL)
    }

    /// Pointwise conjugate transpose on the unit circle: coefficient `j` becomes the
    /// adjoint of coefficient `-j`.
    pub fn star(&self) -> LaurentLoop {
        let mut coeffs: Vec<CMat> = self.coeffs.iter().map(|m| m.adjoint()).collect();
        coeffs.reverse();
        LaurentLoop {
            n: self.n,
            lo: -self.hi(),
            coeffs,
        }
    }

    pub fn samples(&self, count: usize) -> SampleSet {
        coeffs_to_samples(self, count)
    }

    /// Largest pointwise gap to `other` over `count` roots of unity.
    pub fn circle_distance(&self, other: &LaurentLoop, count: usize) -> f64 {
        (0..count)
            .map(|k| {
                let l = root_of_unity(k, count);
                max_abs_diff(&self.eval(l), &other.eval(l))
            })
            .fold(0.0, f64::max)
    }

    pub fn max_coeff_diff(&self, other: &LaurentLoop) -> f64 {
        self.sub(other).max_coeff()
    }

    /// Twisting residual `max |γ(−λ) − SγS⁻¹(λ)|` on the circle, computed on
    /// coefficients: degree `j` must satisfy `S γ_j S⁻¹ = (−1)^j γ_j`.
    pub fn twist_residual(&self, s: &CMat, s_inv: &CMat) -> f64 {
        self.terms()
            .map(|(j, m)| {
                let sign = if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                max_abs_diff(&(s * m * s_inv), &(m * c(sign, 0.0)))
            })
            .fold(0.0, f64::max)
    }
}

pub fn root_of_unity(k: usize, count: usize) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * k as f64 / count as f64)
}

/// Values of a loop at the `N`-th roots of unity `λ_k = e^{2πik/N}`.
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub values: Vec<CMat>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lambda(&self, k: usize) -> Complex64 {
        root_of_unity(k, self.values.len())
    }

    pub fn map(&self, f: impl Fn(usize, &CMat) -> CMat) -> SampleSet {
        SampleSet {
            values: self.values.iter().enumerate().map(|(k, m)| f(k, m)).collect(),
        }
    }
}

pub fn loop_mul(a: &LaurentLoop, b: &LaurentLoop) -> Result<LaurentLoop, LoopError> {
    a.mul(b)
}

pub fn coeffs_to_samples(a: &LaurentLoop, count: usize) -> SampleSet {
    SampleSet {
        values: (0..count).map(|k| a.eval(root_of_unity(k, count))).collect(),
    }
}

thread_local! {
    static FFT_PLANNER: std::cell::RefCell<rustfft::FftPlanner<f64>> =
        std::cell::RefCell::new(rustfft::FftPlanner::new());
}

/// Discrete Fourier transform back to coefficients on `window`. Frequencies outside
/// the window alias into it when the sample count is too small; that case is an
/// error when the window itself cannot be resolved and a logged warning when only
/// the symmetric safe bound is violated.
pub fn samples_to_coeffs(s: &SampleSet, window: DegreeWindow) -> Result<LaurentLoop, LoopError> {
    let count = s.len();
    if count == 0 {
        return Err(LoopError::Empty);
    }
    if count < window.width() {
        return Err(LoopError::Aliasing {
            samples: count,
            width: window.width(),
        });
    }
    if count < window.safe_samples() {
        log::warn!(
            "{} samples are below the safe bound {} for window [{}, {}]",
            count,
            window.safe_samples(),
            window.lo,
            window.hi
        );
    }
    Ok(full_band_coeffs(s, window))
}

/// Coefficients on `window` without the safe-bound warning, for callers that transform
/// over the whole resolvable band and test the part outside their target themselves.
/// Panics if the window is wider than the sample count.
pub fn full_band_coeffs(s: &SampleSet, window: DegreeWindow) -> LaurentLoop {
    let count = s.len();
    assert!(count >= window.width() && count > 0, "window wider than the sample set");
    let n = s.values[0].nrows();
    let inv = 1.0 / count as f64;
    // Entrywise FFT: X_m = Σ_k x_k λ_k^{-m}, so coefficient j sits at m = j mod N.
    let fft = FFT_PLANNER.with(|p| p.borrow_mut().plan_fft_forward(count));
    let mut coeffs = vec![CMat::zeros(n, n); window.width()];
    let mut buf = vec![Complex64::default(); count];
    for col in 0..n {
        for row in 0..n {
            for (b, m) in buf.iter_mut().zip(&s.values) {
                *b = m[(row, col)];
            }
            fft.process(&mut buf);
            for (slot, j) in coeffs.iter_mut().zip(window.lo..=window.hi) {
                slot[(row, col)] = buf[(j as i64).rem_euclid(count as i64) as usize] * inv;
            }
        }
    }
    LaurentLoop::new(window.lo, coeffs).expect("window matches coefficient count")
}

/// Sample count used for sample-space operations producing a loop in `target`
/// from an input in `input`.
pub fn working_samples(input: DegreeWindow, target: DegreeWindow, floor: usize) -> usize {
    let span = input.width() + target.width();
    let n = (2 * span + 1).max(floor).max(target.safe_samples());
    n.next_power_of_two()
}

/// Inverse loop on `target`. The transform is taken over a band wider than the target
/// so that significant coefficients outside it are detected instead of aliased.
pub fn loop_inverse(a: &LaurentLoop, target: DegreeWindow) -> Result<LaurentLoop, LoopError> {
    loop_inverse_with(a, target, DEFAULT_SAMPLES)
}

pub fn loop_inverse_with(
    a: &LaurentLoop,
    target: DegreeWindow,
    min_samples: usize,
) -> Result<LaurentLoop, LoopError> {
    let count = working_samples(a.window(), target, min_samples);
    let samples = coeffs_to_samples(a, count);
    let mut inv = Vec::with_capacity(count);
    for (k, m) in samples.values.iter().enumerate() {
        match linalg::inverse_checked(m, SAMPLE_COND_MAX) {
            Some(x) => inv.push(x),
            None => {
                return Err(LoopError::SingularSample {
                    index: k,
                    lambda: root_of_unity(k, count),
                })
            }
        }
    }
    band_limited(&SampleSet { values: inv }, target)
}

/// Coefficients on `target` from samples, checking that the rest of the resolvable band
/// is below [`TAIL_TOL`].
pub fn band_limited(s: &SampleSet, target: DegreeWindow) -> Result<LaurentLoop, LoopError> {
    let count = s.len();
    let extra = (count - target.width()) as i32;
    let below = extra / 2;
    let full = DegreeWindow::new(target.lo - below, target.hi + (extra - below));
    if count < target.width() {
        return Err(LoopError::Aliasing { samples: count, width: target.width() });
    }
    let all = full_band_coeffs(s, full);
    let tail = all.norm_outside(target);
    if tail > TAIL_TOL {
        return Err(LoopError::WindowOverflow {
            lo: target.lo,
            hi: target.hi,
            tail,
        });
    }
    Ok(all.restrict(target))
}

/// Action on the spectral parameter, seen on the unit circle. On `|λ| = 1` the map
/// `λ ↦ 1/conj(λ)` is the identity; it differs from `λ ↦ λ` only off the circle, which
/// is why anti-linear point maps pair with it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaAction {
    Identity,
    Negate,
    InvertConj,
    NegInvertConj,
}

impl LambdaAction {
    fn negates(self) -> bool {
        matches!(self, LambdaAction::Negate | LambdaAction::NegInvertConj)
    }
}

/// `X ↦ A·op(X)·A⁻¹` where `op` is optional entrywise conjugation followed by an
/// optional inverse-transpose.
#[derive(Clone, Debug)]
pub struct PointInvolution {
    a: CMat,
    a_inv: CMat,
    conj: bool,
    invert: bool,
}

impl PointInvolution {
    pub fn new(a: CMat, conj: bool, invert: bool) -> Result<Self, LoopError> {
        let a_inv = linalg::inverse(&a).ok_or(LoopError::NotInvolutive(f64::INFINITY))?;
        let inv = PointInvolution {
            a,
            a_inv,
            conj,
            invert,
        };
        let n = inv.a.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
        let mut worst = 0.0_f64;
        for _ in 0..4 {
            let mut x = CMat::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            if invert {
                x += eye(n) * c(n as f64, 0.0);
            }
            let back = inv.apply(&inv.apply(&x));
            worst = worst.max(max_abs_diff(&back, &x) / max_abs(&x).max(1.0));
        }
        if worst > 1e-12 {
            return Err(LoopError::NotInvolutive(worst));
        }
        Ok(inv)
    }

    pub fn conjugation(a: CMat) -> Result<Self, LoopError> {
        Self::new(a, false, false)
    }

    pub fn matrix(&self) -> &CMat {
        &self.a
    }

    pub fn is_antilinear(&self) -> bool {
        self.conj
    }

    pub fn inverts(&self) -> bool {
        self.invert
    }

    /// Group-level action.
    pub fn apply(&self, x: &CMat) -> CMat {
        let mut y = if self.conj { linalg::conj(x) } else { x.clone() };
        if self.invert {
            y = linalg::inverse(&y)
                .expect("inverse-transpose involution applied to a singular matrix")
                .transpose();
        }
        &self.a * y * &self.a_inv
    }

    /// Differential at the identity: inverse-transpose becomes `X ↦ −Xᵗ`.
    pub fn apply_algebra(&self, x: &CMat) -> CMat {
        let mut y = if self.conj { linalg::conj(x) } else { x.clone() };
        if self.invert {
            y = -y.transpose();
        }
        &self.a * y * &self.a_inv
    }
}

#[derive(Clone, Debug)]
pub struct LoopInvolution {
    pub point: PointInvolution,
    pub lambda_action: LambdaAction,
}

impl LoopInvolution {
    pub fn new(point: PointInvolution, lambda_action: LambdaAction) -> Self {
        LoopInvolution {
            point,
            lambda_action,
        }
    }
}

/// `result(λ) = ι.point(a(μ(λ)))` on the unit circle. Without inversion the map is
/// coefficientwise: degree `j` goes to `-j` for anti-linear point maps and picks up
/// `(−1)^j` when `μ` negates. With inversion it is done on samples.
pub fn apply_involution(inv: &LoopInvolution, a: &LaurentLoop) -> LaurentLoop {
    let negate = inv.lambda_action.negates();
    if inv.point.invert {
        let w = DegreeWindow::symmetric(a.lo().abs().max(a.hi().abs()).max(DEFAULT_WINDOW));
        let count = working_samples(a.window(), w, DEFAULT_SAMPLES);
        let s = coeffs_to_samples(a, count);
        let out = SampleSet {
            values: (0..count)
                .map(|k| {
                    let kk = if negate { (k + count / 2) % count } else { k };
                    inv.point.apply(&s.values[kk])
                })
                .collect(),
        };
        return samples_to_coeffs(&out, w)
            .expect("symmetric window resolved by construction")
            .trim();
    }
    let (lo, hi) = if inv.point.conj {
        (-a.hi(), -a.lo())
    } else {
        (a.lo(), a.hi())
    };
    let mut out = LaurentLoop::zeros(a.dim(), DegreeWindow::new(lo, hi));
    for (j, m) in a.terms() {
        let sign = if negate && j.rem_euclid(2) == 1 { -1.0 } else { 1.0 };
        let deg = if inv.point.conj { -j } else { j };
        *out.coeff_mut(deg).expect("degree in window") = inv.point.apply(m) * c(sign, 0.0);
    }
    out
}
