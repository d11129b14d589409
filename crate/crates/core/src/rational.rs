//! Complex polynomials and rational functions of one variable.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{c, CMat};

/// Coefficients lowest degree first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly(pub Vec<Complex64>);

impl Poly {
    pub fn new(mut coeffs: Vec<Complex64>) -> Self {
        while coeffs.len() > 1 && coeffs.last().is_some_and(|z| *z == Complex64::default()) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(Complex64::default());
        }
        Poly(coeffs)
    }

    pub fn real(coeffs: &[f64]) -> Self {
        Poly::new(coeffs.iter().map(|x| c(*x, 0.0)).collect())
    }

    pub fn constant(a: Complex64) -> Self {
        Poly::new(vec![a])
    }

    pub fn one() -> Self {
        Poly::constant(c(1.0, 0.0))
    }

    /// The monomial `z`.
    pub fn z() -> Self {
        Poly::real(&[0.0, 1.0])
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| *z == Complex64::default())
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.0.iter().rev().fold(Complex64::default(), |acc, a| acc * z + a)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::constant(Complex64::default());
        }
        Poly::new(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, a)| a * k as f64)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![Complex64::default(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let len = self.0.len().max(other.0.len());
        Poly::new(
            (0..len)
                .map(|k| {
                    self.0.get(k).copied().unwrap_or_default()
                        + other.0.get(k).copied().unwrap_or_default()
                })
                .collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> Poly {
        Poly::new(self.0.iter().map(|a| a * s).collect())
    }

    /// Roots by the Aberth–Ehrlich iteration.
    pub fn roots(&self) -> Vec<Complex64> {
        let d = self.degree();
        if d == 0 {
            return Vec::new();
        }
        let lead = self.0[d];
        let monic: Vec<Complex64> = self.0.iter().map(|a| a / lead).collect();
        let p = Poly(monic);
        let dp = p.derivative();
        let radius = 1.0 + p.0[..d].iter().map(|a| a.norm()).fold(0.0, f64::max);
        let mut z: Vec<Complex64> = (0..d)
            .map(|k| {
                Complex64::from_polar(
                    0.5 * radius,
                    2.0 * std::f64::consts::PI * k as f64 / d as f64 + 0.4,
                )
            })
            .collect();
        for _ in 0..500 {
            let mut moved = 0.0_f64;
            for i in 0..d {
                let pv = p.eval(z[i]);
                if pv == Complex64::default() {
                    continue;
                }
                let ratio = pv / dp.eval(z[i]);
                let repulse: Complex64 = (0..d)
                    .filter(|j| *j != i)
                    .map(|j| 1.0 / (z[i] - z[j]))
                    .sum();
                let step = ratio / (1.0 - ratio * repulse);
                if step.is_finite() {
                    z[i] -= step;
                    moved = moved.max(step.norm());
                }
            }
            if moved < 1e-15 * radius {
                break;
            }
        }
        z
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rational {
    pub num: Poly,
    pub den: Poly,
}

impl Rational {
    pub fn new(num: Poly, den: Poly) -> Self {
        assert!(!den.is_zero(), "rational function with zero denominator");
        Rational { num, den }
    }

    pub fn poly(p: Poly) -> Self {
        Rational::new(p, Poly::one())
    }

    pub fn constant(a: Complex64) -> Self {
        Rational::poly(Poly::constant(a))
    }

    pub fn zero() -> Self {
        Rational::constant(Complex64::default())
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    /// `None` at a zero of the denominator.
    pub fn eval(&self, z: Complex64) -> Option<Complex64> {
        let d = self.den.eval(z);
        if d.norm() < 1e-300 {
            return None;
        }
        let v = self.num.eval(z) / d;
        v.is_finite().then_some(v)
    }

    pub fn derivative(&self) -> Rational {
        if self.den.degree() == 0 {
            return Rational::poly(self.num.derivative().scale(1.0 / self.den.0[0]));
        }
        let num = self
            .num
            .derivative()
            .mul(&self.den)
            .add(&self.num.mul(&self.den.derivative()).scale(c(-1.0, 0.0)));
        Rational::new(num, self.den.mul(&self.den))
    }

    pub fn scale(&self, s: Complex64) -> Rational {
        Rational::new(self.num.scale(s), self.den.clone())
    }

    pub fn poles(&self) -> Vec<Complex64> {
        if self.num.is_zero() {
            return Vec::new();
        }
        self.den.roots()
    }
}

/// Square matrix of rational functions, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalMatrix {
    pub n: usize,
    pub entries: Vec<Rational>,
}

impl RationalMatrix {
    pub fn zeros(n: usize) -> Self {
        RationalMatrix {
            n,
            entries: vec![Rational::zero(); n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, r: Rational) {
        self.entries[i * self.n + j] = r;
    }

    pub fn eval(&self, z: Complex64) -> Option<CMat> {
        let mut m = CMat::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] = self.get(i, j).eval(z)?;
            }
        }
        Some(m)
    }

    /// Distinct poles of all entries (roots closer than 1e-9 are merged).
    pub fn poles(&self) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = Vec::new();
        for r in &self.entries {
            for p in r.poles() {
                if out.iter().all(|q| (q - p).norm() > 1e-9) {
                    out.push(p);
                }
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Rational::is_zero)
    }
}
