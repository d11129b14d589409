//! Matrix realization of a symmetric space `G/K` inside `SO(J; C)`, with the
//! involutions `σ` (conjugation by `S`), `τ` (fixing the real form `G`) and `ρ`
//! (fixing the maximal compact subgroup of `G^C`).

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, c, diag_real, eye, max_abs, max_abs_diff, CMat};
use crate::loopalg::{LambdaAction, LaurentLoop, LoopError, LoopInvolution, PointInvolution};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("metric entries must be ±1, got {0}")]
    BadMetric(f64),
    #[error("S must square to the identity (residual {0:.3e})")]
    NotInvolutive(f64),
    #[error("S has dimension {0}, metric has dimension {1}")]
    Dimension(usize, usize),
    #[error("sigma does not preserve the Lie algebra (residual {0:.3e})")]
    SigmaLeavesAlgebra(f64),
    #[error("basis element {index} is not in so(J) (residual {residual:.3e})")]
    NotInAlgebra { index: usize, residual: f64 },
    #[error("involutions {0} and {1} do not commute (residual {2:.3e})")]
    NotCommuting(&'static str, &'static str, f64),
    #[error("(u ∩ k) + i(u ∩ k) has rank {got}, expected {expected}")]
    SpanFailure { got: usize, expected: usize },
    #[error("frame value is singular")]
    SingularFrame,
    #[error(transparent)]
    Loop(#[from] LoopError),
}

#[derive(Clone, Debug)]
pub struct SymmetricSpaceSpec {
    n: usize,
    metric: Vec<f64>,
    j: CMat,
    s: CMat,
    s_inv: CMat,
    tau: PointInvolution,
    rho: PointInvolution,
    basis_g: Vec<CMat>,
}

/// Basis of `so(J; C)`: `J_j E_ij − J_i E_ji` for `i < j`.
pub fn orthogonal_basis(metric: &[f64]) -> Vec<CMat> {
    let n = metric.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut x = CMat::zeros(n, n);
            x[(i, j)] = c(metric[j], 0.0);
            x[(j, i)] = c(-metric[i], 0.0);
            out.push(x);
        }
    }
    out
}

impl SymmetricSpaceSpec {
    pub fn new(
        metric: Vec<f64>,
        s: CMat,
        tau: PointInvolution,
        rho: PointInvolution,
    ) -> Result<Self, SpecError> {
        let n = metric.len();
        if let Some(bad) = metric.iter().find(|x| (x.abs() - 1.0).abs() > 0.0) {
            return Err(SpecError::BadMetric(*bad));
        }
        if s.nrows() != n || s.ncols() != n {
            return Err(SpecError::Dimension(s.nrows(), n));
        }
        let s2 = &s * &s;
        let res = max_abs_diff(&s2, &eye(n));
        if res != 0.0 {
            return Err(SpecError::NotInvolutive(res));
        }
        let spec = SymmetricSpaceSpec {
            n,
            j: diag_real(&metric),
            s_inv: s.clone(),
            s,
            tau,
            rho,
            basis_g: orthogonal_basis(&metric),
            metric,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `SO(J)` with `J = diag(−1, 1, …, 1)` of size `4 + normal_dim`, `K` the block
    /// `SO(1,3) × SO(normal_dim)`. This is the conformal Gauss map target of a
    /// surface in `S^{normal_dim + 2}`.
    pub fn willmore(normal_dim: usize) -> Self {
        let mut metric = vec![1.0; normal_dim + 4];
        metric[0] = -1.0;
        Self::orthogonal(metric, 4).expect("willmore realization is valid")
    }

    /// `SO(J)` with `S = diag(1,…,1,−1,…,−1)` whose `+1` block has size `k_dim`;
    /// `τ` is entrywise conjugation and `ρ(g) = J·conj(g)·J`.
    pub fn orthogonal(metric: Vec<f64>, k_dim: usize) -> Result<Self, SpecError> {
        let n = metric.len();
        if let Some(bad) = metric.iter().find(|x| (x.abs() - 1.0).abs() > 0.0) {
            return Err(SpecError::BadMetric(*bad));
        }
        let s_diag: Vec<f64> = (0..n).map(|i| if i < k_dim { 1.0 } else { -1.0 }).collect();
        let j = diag_real(&metric);
        let tau = PointInvolution::new(eye(n), true, false)?;
        let rho = PointInvolution::new(j, true, false)?;
        Self::new(metric, diag_real(&s_diag), tau, rho)
    }

    fn validate(&self) -> Result<(), SpecError> {
        for (index, x) in self.basis_g.iter().enumerate() {
            let residual = self.algebra_residual(x);
            if residual > 1e-12 {
                return Err(SpecError::NotInAlgebra { index, residual });
            }
            let sx = self.sigma_algebra(x);
            let r = self.algebra_residual(&sx);
            if r > 1e-12 {
                return Err(SpecError::SigmaLeavesAlgebra(r));
            }
        }
        let pairs: [(&'static str, &'static str); 3] = [("sigma", "tau"), ("sigma", "rho"), ("tau", "rho")];
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
        let mut probes = self.basis_g.clone();
        for _ in 0..4 {
            probes.push(self.random_algebra_element(&mut rng));
        }
        for (a, b) in pairs {
            let mut worst = 0.0_f64;
            for x in &probes {
                let ab = self.apply_named(a, &self.apply_named(b, x));
                let ba = self.apply_named(b, &self.apply_named(a, x));
                worst = worst.max(max_abs_diff(&ab, &ba));
            }
            if worst > 1e-12 {
                return Err(SpecError::NotCommuting(a, b, worst));
            }
        }
        Ok(())
    }

    fn apply_named(&self, name: &str, x: &CMat) -> CMat {
        match name {
            "sigma" => self.sigma_algebra(x),
            "tau" => self.tau.apply_algebra(x),
            _ => self.rho.apply_algebra(x),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn metric(&self) -> &[f64] {
        &self.metric
    }

    pub fn j(&self) -> &CMat {
        &self.j
    }

    pub fn s(&self) -> &CMat {
        &self.s
    }

    pub fn s_inv(&self) -> &CMat {
        &self.s_inv
    }

    pub fn tau(&self) -> &PointInvolution {
        &self.tau
    }

    pub fn rho(&self) -> &PointInvolution {
        &self.rho
    }

    pub fn basis_g(&self) -> &[CMat] {
        &self.basis_g
    }

    /// Indices with negative metric entry.
    pub fn timelike(&self) -> Vec<usize> {
        (0..self.n).filter(|i| self.metric[*i] < 0.0).collect()
    }

    pub fn sigma_algebra(&self, x: &CMat) -> CMat {
        &self.s * x * &self.s_inv
    }

    pub fn sigma_loop(&self) -> LoopInvolution {
        LoopInvolution::new(
            PointInvolution::conjugation(self.s.clone()).expect("S is involutive"),
            LambdaAction::Negate,
        )
    }

    pub fn tau_loop(&self) -> LoopInvolution {
        LoopInvolution::new(self.tau.clone(), LambdaAction::InvertConj)
    }

    pub fn rho_loop(&self) -> LoopInvolution {
        LoopInvolution::new(self.rho.clone(), LambdaAction::InvertConj)
    }

    /// `max |XᵗJ + JX|`.
    pub fn algebra_residual(&self, x: &CMat) -> f64 {
        max_abs(&(x.transpose() * &self.j + &self.j * x))
    }

    /// `max |gᵗJg − J|`.
    pub fn group_residual(&self, g: &CMat) -> f64 {
        max_abs_diff(&(g.transpose() * &self.j * g), &self.j)
    }

    pub fn project_kp(&self, x: &CMat) -> (CMat, CMat) {
        let sx = self.sigma_algebra(x);
        let xk = (x + sx) * c(0.5, 0.0);
        let xp = x - &xk;
        (xk, xp)
    }

    pub fn twist_residual(&self, f: &LaurentLoop) -> f64 {
        f.twist_residual(&self.s, &self.s_inv)
    }

    pub fn random_algebra_element(&self, rng: &mut impl Rng) -> CMat {
        let mut x = CMat::zeros(self.n, self.n);
        for b in &self.basis_g {
            x += b * c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        x
    }

    /// `F(λ)·S·F(λ)⁻¹`, a representative of the map that does not depend on the frame's
    /// `K`-gauge.
    pub fn cartan_embed(&self, f: &LaurentLoop, lambda: Complex64) -> Result<CMat, SpecError> {
        self.cartan_of(&f.eval(lambda))
    }

    pub fn cartan_of(&self, g: &CMat) -> Result<CMat, SpecError> {
        let inv = linalg::inverse(g).ok_or(SpecError::SingularFrame)?;
        Ok(g * &self.s * inv)
    }

    /// The Cartan embedding of the `K`-orbit whose first block spans the columns of
    /// `phi`: `2P − I` with `P` the `J`-orthogonal projector onto that span.
    pub fn plane_embedding(&self, phi: &CMat) -> Result<CMat, SpecError> {
        let gram = phi.transpose() * &self.j * phi;
        let gi = linalg::inverse(&gram).ok_or(SpecError::SingularFrame)?;
        let p = phi * gi * phi.transpose() * &self.j;
        Ok(p * c(2.0, 0.0) - eye(self.n))
    }

    /// Complex span of the `σ`-fixed part of `g^C`.
    pub fn k_basis(&self) -> Vec<CMat> {
        independent(self.basis_g.iter().map(|x| self.project_kp(x).0).collect())
    }

    pub fn p_basis(&self) -> Vec<CMat> {
        independent(self.basis_g.iter().map(|x| self.project_kp(x).1).collect())
    }

    /// Checks that `(u ∩ k^C)` complexifies to `k^C` and compares ranks of `g` and `k`
    /// through centralizer dimensions of generic elements.
    pub fn inner_space_check(&self) -> Result<InnerSpaceReport, SpecError> {
        let k_dim = self.k_basis().len();
        let u_cap_k = self.real_fixed_subspace(true);
        let u = self.real_fixed_subspace(false);
        let span = complex_rank(&u_cap_k);
        if span != k_dim {
            return Err(SpecError::SpanFailure {
                got: span,
                expected: k_dim,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
        let generic = |space: &[CMat], rng: &mut ChaCha8Rng| {
            let mut x = CMat::zeros(self.n, self.n);
            for b in space {
                x += b * c(rng.gen_range(-1.0..1.0), 0.0);
            }
            x
        };
        let xk = generic(&u_cap_k, &mut rng);
        let xu = generic(&u, &mut rng);
        let k_basis = self.k_basis();
        let rank_k = k_basis.len() - complex_rank(&commutators(&xk, &k_basis));
        let rank_g = self.basis_g.len() - complex_rank(&commutators(&xu, &self.basis_g));
        Ok(InnerSpaceReport {
            dim_real_u_cap_k: u_cap_k.len(),
            dim_complex_k: k_dim,
            span_rank: span,
            rank_g,
            rank_k,
            inner: rank_g == rank_k,
        })
    }

    /// Real basis of `{X ∈ g^C : ρ(X) = X}` intersected, when `with_sigma`, with
    /// `{σ(X) = X}`.
    fn real_fixed_subspace(&self, with_sigma: bool) -> Vec<CMat> {
        let m = self.basis_g.len();
        let nn = self.n * self.n;
        let blocks = if with_sigma { 2 } else { 1 };
        let mut a = DMatrix::<f64>::zeros(2 * nn * blocks, 2 * m);
        for (col, (idx, scale)) in (0..m)
            .flat_map(|i| [(i, c(1.0, 0.0)), (i, c(0.0, 1.0))])
            .enumerate()
        {
            let x = &self.basis_g[idx] * scale;
            let mut constraints = vec![self.rho.apply_algebra(&x) - &x];
            if with_sigma {
                constraints.push(self.sigma_algebra(&x) - &x);
            }
            for (b, r) in constraints.iter().enumerate() {
                for (e, z) in r.iter().enumerate() {
                    a[(2 * nn * b + 2 * e, col)] = z.re;
                    a[(2 * nn * b + 2 * e + 1, col)] = z.im;
                }
            }
        }
        let svd = (a.transpose() * &a).symmetric_eigen();
        let mut out = Vec::new();
        for (k, ev) in svd.eigenvalues.iter().enumerate() {
            if ev.abs() < 1e-10 {
                let v = svd.eigenvectors.column(k);
                let mut x = CMat::zeros(self.n, self.n);
                for i in 0..m {
                    x += &self.basis_g[i] * c(v[2 * i], v[2 * i + 1]);
                }
                out.push(x);
            }
        }
        out
    }
}

fn commutators(x: &CMat, basis: &[CMat]) -> Vec<CMat> {
    basis.iter().map(|b| linalg::commutator(x, b)).collect()
}

fn stack(vs: &[CMat]) -> CMat {
    let rows = vs.first().map(|v| v.len()).unwrap_or(0);
    CMat::from_fn(rows, vs.len(), |r, k| vs[k][r])
}

pub fn complex_rank(vs: &[CMat]) -> usize {
    if vs.is_empty() {
        return 0;
    }
    linalg::rank(&stack(vs), 1e-9)
}

/// Greedy selection of a linearly independent subfamily.
fn independent(vs: Vec<CMat>) -> Vec<CMat> {
    let mut out: Vec<CMat> = Vec::new();
    for v in vs {
        if max_abs(&v) < 1e-14 {
            continue;
        }
        let mut trial = out.clone();
        trial.push(v);
        if complex_rank(&trial) == trial.len() {
            out = trial;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnerSpaceReport {
    pub dim_real_u_cap_k: usize,
    pub dim_complex_k: usize,
    pub span_rank: usize,
    pub rank_g: usize,
    pub rank_k: usize,
    pub inner: bool,
}
