//! Normalized potentials, holomorphic and extended frames on a grid, recovery of the
//! potential from frames, and the zero-curvature residual of the frame's
//! Maurer–Cartan form.

use std::collections::VecDeque;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor::{
    birkhoff_with, factor_tangent, iwasawa_compact_with, iwasawa_real_with, FactorConfig,
    FactorStatus, SplitKind,
};
use crate::linalg::{self, c, eye, max_abs, max_abs_diff, CMat, I};
use crate::loopalg::{
    full_band_coeffs, loop_inverse_with, root_of_unity, DegreeWindow, LaurentLoop, LoopError,
    SampleSet, DEFAULT_SAMPLES, DEFAULT_WINDOW, TAIL_TOL,
};
use crate::rational::RationalMatrix;
use crate::symspace::SymmetricSpaceSpec;

#[derive(Debug, Error)]
pub enum DpwError {
    #[error("potential is {got}x{got}, realization is {expected}x{expected}")]
    Dimension { got: usize, expected: usize },
    #[error("potential has a k-component of size {residual:.3e} at z = {z}")]
    KPart { residual: f64, z: Complex64 },
    #[error("potential leaves the Lie algebra (residual {residual:.3e} at z = {z})")]
    NotInAlgebra { residual: f64, z: Complex64 },
    #[error("base point {0} lies within the pole exclusion radius")]
    BaseNearPole(Complex64),
    #[error("no pole-avoiding grid path reaches {0} point(s)")]
    PathThroughPole(usize),
    #[error("holomorphic frame needs degrees below -{cap} at z = {z}")]
    WindowOverflow { cap: i32, z: Complex64 },
    #[error("factorization failed at the base point: {0:?}")]
    BaseFactorization(FactorStatus),
    #[error("frame at the base point deviates from I by {0:.3e}")]
    BaseNotIdentity(f64),
    #[error("empty grid")]
    EmptyGrid,
    #[error(transparent)]
    Loop(#[from] LoopError),
}

/// `η = λ⁻¹ η₋₁(z) dz` with `η₋₁` a matrix of rational functions taking values in `p^C`.
#[derive(Clone, Debug)]
pub struct NormalizedPotential {
    eta_minus1: RationalMatrix,
    spec: Arc<SymmetricSpaceSpec>,
    poles: Vec<Complex64>,
}

impl NormalizedPotential {
    pub fn new(eta_minus1: RationalMatrix, spec: Arc<SymmetricSpaceSpec>) -> Result<Self, DpwError> {
        if eta_minus1.n != spec.dim() {
            return Err(DpwError::Dimension {
                got: eta_minus1.n,
                expected: spec.dim(),
            });
        }
        let poles = eta_minus1.poles();
        let pot = NormalizedPotential {
            eta_minus1,
            spec,
            poles,
        };
        pot.validate()?;
        Ok(pot)
    }

    /// Checks `η₋₁(z) ∈ p^C` at 20 pseudo-random points away from the poles.
    fn validate(&self) -> Result<(), DpwError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
        let mut checked = 0;
        while checked < 20 {
            let z = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            if self.poles.iter().any(|p| (p - z).norm() < 1e-3) {
                continue;
            }
            let Some(x) = self.eta_minus1.eval(z) else { continue };
            checked += 1;
            let scale = max_abs(&x).max(1.0);
            let (xk, _) = self.spec.project_kp(&x);
            let residual = max_abs(&xk) / scale;
            if residual > 1e-12 {
                return Err(DpwError::KPart { residual, z });
            }
            let residual = self.spec.algebra_residual(&x) / scale;
            if residual > 1e-10 {
                return Err(DpwError::NotInAlgebra { residual, z });
            }
        }
        Ok(())
    }

    pub fn zero(spec: Arc<SymmetricSpaceSpec>) -> Self {
        let n = spec.dim();
        NormalizedPotential::new(RationalMatrix::zeros(n), spec).expect("zero potential is valid")
    }

    pub fn eval(&self, z: Complex64) -> Option<CMat> {
        self.eta_minus1.eval(z)
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn spec(&self) -> &Arc<SymmetricSpaceSpec> {
        &self.spec
    }

    pub fn matrix(&self) -> &RationalMatrix {
        &self.eta_minus1
    }
}

/// Rectangular grid `z = center + h·((ix − nx/2) + i(iy − ny/2))`; the center is the
/// grid point `(nx/2, ny/2)` and serves as base point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub center: Complex64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridGeometry {
    pub fn new(center: Complex64, h: f64, nx: usize, ny: usize) -> Self {
        GridGeometry { center, h, nx, ny }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn base(&self) -> (usize, usize) {
        (self.nx / 2, self.ny / 2)
    }

    pub fn base_index(&self) -> usize {
        let (bx, by) = self.base();
        self.index(bx, by)
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn point(&self, ix: usize, iy: usize) -> Complex64 {
        let (bx, by) = self.base();
        self.center + c((ix as f64 - bx as f64) * self.h, (iy as f64 - by as f64) * self.h)
    }

    pub fn point_at(&self, idx: usize) -> Complex64 {
        let (ix, iy) = self.coords(idx);
        self.point(ix, iy)
    }

    /// Physical side length of the longer grid axis.
    pub fn extent(&self) -> f64 {
        self.h * self.nx.max(self.ny) as f64
    }

    /// Same center, half the spacing, twice the points per axis (same physical box).
    pub fn refined(&self) -> GridGeometry {
        GridGeometry::new(self.center, self.h / 2.0, 2 * self.nx, 2 * self.ny)
    }

    fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (ix, iy) = self.coords(idx);
        let mut out = Vec::with_capacity(4);
        if ix > 0 {
            out.push(self.index(ix - 1, iy));
        }
        if ix + 1 < self.nx {
            out.push(self.index(ix + 1, iy));
        }
        if iy > 0 {
            out.push(self.index(ix, iy - 1));
        }
        if iy + 1 < self.ny {
            out.push(self.index(ix, iy + 1));
        }
        out.into_iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointStatus {
    Ok,
    NearPole,
    FactorFailed,
}

/// Frame values on a grid; optional exact `x`/`y` derivatives of each loop.
#[derive(Clone, Debug)]
pub struct FrameGrid {
    pub geometry: GridGeometry,
    pub values: Vec<Option<LaurentLoop>>,
    pub tangents: Vec<Option<[LaurentLoop; 2]>>,
    pub mask: Vec<PointStatus>,
}

impl FrameGrid {
    pub fn from_fn(geometry: GridGeometry, f: impl Fn(Complex64) -> LaurentLoop + Sync) -> Self {
        let values: Vec<Option<LaurentLoop>> = (0..geometry.len())
            .into_par_iter()
            .map(|i| Some(f(geometry.point_at(i))))
            .collect();
        FrameGrid {
            geometry,
            values,
            tangents: vec![None; geometry.len()],
            mask: vec![PointStatus::Ok; geometry.len()],
        }
    }

    pub fn constant(geometry: GridGeometry, value: LaurentLoop) -> Self {
        Self::from_fn(geometry, |_| value.clone())
    }

    pub fn value(&self, idx: usize) -> Option<&LaurentLoop> {
        if self.mask[idx] == PointStatus::Ok {
            self.values[idx].as_ref()
        } else {
            None
        }
    }

    pub fn ok_count(&self) -> usize {
        self.mask.iter().filter(|m| **m == PointStatus::Ok).count()
    }

    pub fn count(&self, status: PointStatus) -> usize {
        self.mask.iter().filter(|m| **m == status).count()
    }

    pub fn has_tangents(&self) -> bool {
        self.tangents
            .iter()
            .zip(&self.mask)
            .all(|(t, m)| *m != PointStatus::Ok || t.is_some())
    }

    /// Maurer–Cartan components `(F⁻¹∂ₓF, F⁻¹∂ᵧF)` from the exact tangents.
    pub fn maurer_cartan(&self, idx: usize, cfg: &DpwConfig) -> Option<[LaurentLoop; 2]> {
        let f = self.value(idx)?;
        let [dx, dy] = self.tangents[idx].as_ref()?;
        let reach = f.lo().abs().max(f.hi().abs()).max(cfg.window);
        let inv = loop_inverse_with(f, DegreeWindow::symmetric(reach), cfg.samples).ok()?.trim();
        Some([inv.mul(dx).ok()?.trim(), inv.mul(dy).ok()?.trim()])
    }

    /// Largest twisting residual over OK points.
    pub fn twist_residual(&self, spec: &SymmetricSpaceSpec) -> f64 {
        (0..self.values.len())
            .into_par_iter()
            .filter_map(|i| self.value(i).map(|f| spec.twist_residual(f)))
            .reduce(|| 0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpwConfig {
    /// Degree cap for frames and factors.
    pub window: i32,
    pub samples: usize,
    /// Pole exclusion radius; `None` means 5% of the grid extent.
    pub pole_radius: Option<f64>,
    /// Local error tolerance of the ODE integrator.
    pub ode_tol: f64,
}

impl Default for DpwConfig {
    fn default() -> Self {
        DpwConfig {
            window: DEFAULT_WINDOW,
            samples: DEFAULT_SAMPLES,
            pole_radius: None,
            ode_tol: 1e-14,
        }
    }
}

impl DpwConfig {
    pub fn factor_config(&self) -> FactorConfig {
        FactorConfig::with_window(self.window).with_samples(self.samples)
    }

    pub fn pole_radius_for(&self, g: &GridGeometry) -> f64 {
        self.pole_radius.unwrap_or(0.05 * g.extent())
    }
}

fn segment_distance(a: Complex64, b: Complex64, p: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (((p - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (a + d * t - p).norm()
}

/// Coefficients of `F₋` at degrees `0, −1, …, −(len−1)`.
type MinusCoeffs = Vec<CMat>;

fn rhs(coeffs: &MinusCoeffs, eta: &CMat, dz: Complex64) -> MinusCoeffs {
    let n = eta.nrows();
    let scaled = eta * dz;
    let mut out = Vec::with_capacity(coeffs.len());
    out.push(CMat::zeros(n, n));
    for k in 1..coeffs.len() {
        out.push(&coeffs[k - 1] * &scaled);
    }
    out
}

fn axpy(a: &MinusCoeffs, s: f64, b: &MinusCoeffs) -> MinusCoeffs {
    a.iter().zip(b).map(|(x, y)| x + y * c(s, 0.0)).collect()
}

fn rk4_step(
    eta: &NormalizedPotential,
    y: &MinusCoeffs,
    za: Complex64,
    zb: Complex64,
) -> Option<MinusCoeffs> {
    let dz = zb - za;
    let mid = za + dz * 0.5;
    let e0 = eta.eval(za)?;
    let e1 = eta.eval(mid)?;
    let e2 = eta.eval(zb)?;
    let k1 = rhs(y, &e0, dz);
    let k2 = rhs(&axpy(y, 0.5, &k1), &e1, dz);
    let k3 = rhs(&axpy(y, 0.5, &k2), &e1, dz);
    let k4 = rhs(&axpy(y, 1.0, &k3), &e2, dz);
    Some(
        (0..y.len())
            .map(|k| &y[k] + (&k1[k] + (&k2[k] + &k3[k]) * c(2.0, 0.0) + &k4[k]) * c(1.0 / 6.0, 0.0))
            .collect(),
    )
}

/// Classical RK4 along the straight segment with recursive step halving until one
/// step and two half steps agree to `tol`.
fn integrate_segment(
    eta: &NormalizedPotential,
    y: &MinusCoeffs,
    za: Complex64,
    zb: Complex64,
    tol: f64,
    depth: u32,
) -> Option<MinusCoeffs> {
    let full = rk4_step(eta, y, za, zb)?;
    let mid = za + (zb - za) * 0.5;
    let half = rk4_step(eta, y, za, mid)?;
    let two = rk4_step(eta, &half, mid, zb)?;
    let scale = 1.0 + two.iter().map(max_abs).fold(0.0, f64::max);
    let err = full
        .iter()
        .zip(&two)
        .map(|(a, b)| max_abs_diff(a, b))
        .fold(0.0, f64::max);
    if err <= tol * scale || depth >= 24 {
        return Some(two);
    }
    let first = integrate_segment(eta, y, za, mid, tol, depth + 1)?;
    integrate_segment(eta, &first, mid, zb, tol, depth + 1)
}

fn to_loop(coeffs: &MinusCoeffs) -> LaurentLoop {
    let mut rev = coeffs.clone();
    rev.reverse();
    LaurentLoop::new(-(coeffs.len() as i32 - 1), rev).expect("non-empty")
}

/// Parent pointers of the integration tree: horizontal along the base row, then
/// vertical; points whose preferred path is blocked by a pole are reached by a
/// breadth-first search through admissible edges.
fn path_tree(
    geometry: &GridGeometry,
    mask: &[PointStatus],
    poles: &[Complex64],
    radius: f64,
) -> Result<Vec<Option<usize>>, DpwError> {
    let len = geometry.len();
    let (bx, by) = geometry.base();
    let base = geometry.base_index();
    let edge_ok = |a: usize, b: usize| {
        mask[a] == PointStatus::Ok
            && mask[b] == PointStatus::Ok
            && poles.iter().all(|p| {
                segment_distance(geometry.point_at(a), geometry.point_at(b), *p) > radius
            })
    };
    let mut parent: Vec<Option<usize>> = vec![None; len];
    let mut reached = vec![false; len];
    reached[base] = true;
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by_key(|&i| {
        let (ix, iy) = geometry.coords(i);
        (ix.abs_diff(bx) + iy.abs_diff(by), i)
    });
    for &i in &order {
        if i == base || mask[i] != PointStatus::Ok {
            continue;
        }
        let (ix, iy) = geometry.coords(i);
        let pref = if iy == by {
            geometry.index(if ix > bx { ix - 1 } else { ix + 1 }, iy)
        } else {
            geometry.index(ix, if iy > by { iy - 1 } else { iy + 1 })
        };
        if reached[pref] && edge_ok(pref, i) {
            parent[i] = Some(pref);
            reached[i] = true;
        }
    }
    let mut queue: VecDeque<usize> = order.iter().copied().filter(|i| reached[*i]).collect();
    while let Some(i) = queue.pop_front() {
        for j in geometry.neighbors(i) {
            if !reached[j] && mask[j] == PointStatus::Ok && edge_ok(i, j) {
                reached[j] = true;
                parent[j] = Some(i);
                queue.push_back(j);
            }
        }
    }
    let missing = (0..len)
        .filter(|i| mask[*i] == PointStatus::Ok && !reached[*i])
        .count();
    if missing > 0 {
        return Err(DpwError::PathThroughPole(missing));
    }
    Ok(parent)
}

/// Solves `dF₋/dz = F₋·λ⁻¹η₋₁(z)`, `F₋(z₀) = I` on the grid. Also stores the exact
/// derivatives `∂ₓF₋ = F₋λ⁻¹η₋₁` and `∂ᵧF₋ = i∂ₓF₋`.
pub fn integrate_potential(
    eta: &NormalizedPotential,
    geometry: &GridGeometry,
    cfg: &DpwConfig,
) -> Result<FrameGrid, DpwError> {
    if geometry.is_empty() {
        return Err(DpwError::EmptyGrid);
    }
    let n = eta.spec().dim();
    let radius = cfg.pole_radius_for(geometry);
    let poles = eta.poles();
    let mask: Vec<PointStatus> = (0..geometry.len())
        .map(|i| {
            let z = geometry.point_at(i);
            if poles.iter().any(|p| (p - z).norm() <= radius) || eta.eval(z).is_none() {
                PointStatus::NearPole
            } else {
                PointStatus::Ok
            }
        })
        .collect();
    let base = geometry.base_index();
    if mask[base] != PointStatus::Ok {
        return Err(DpwError::BaseNearPole(geometry.center));
    }
    let parent = path_tree(geometry, &mask, poles, radius)?;
    let mut depth = vec![usize::MAX; geometry.len()];
    depth[base] = 0;
    let mut layers: Vec<Vec<usize>> = vec![vec![base]];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); geometry.len()];
    for (i, p) in parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }
    loop {
        let next: Vec<usize> = layers
            .last()
            .expect("non-empty")
            .iter()
            .flat_map(|p| children[*p].iter().copied())
            .collect();
        if next.is_empty() {
            break;
        }
        layers.push(next);
    }
    let len = cfg.window as usize + 2;
    let mut state: Vec<Option<MinusCoeffs>> = vec![None; geometry.len()];
    let mut start = vec![CMat::zeros(n, n); len];
    start[0] = eye(n);
    state[base] = Some(start);
    for layer in layers.iter().skip(1) {
        let computed: Vec<(usize, Option<MinusCoeffs>)> = layer
            .par_iter()
            .map(|&i| {
                let p = parent[i].expect("non-base node has a parent");
                let y = state[p].as_ref().expect("parent computed in previous layer");
                let out = integrate_segment(eta, y, geometry.point_at(p), geometry.point_at(i), cfg.ode_tol, 0);
                (i, out)
            })
            .collect();
        for (i, out) in computed {
            let out = out.ok_or(DpwError::PathThroughPole(1))?;
            state[i] = Some(out);
        }
    }
    let mut values = Vec::with_capacity(geometry.len());
    let mut tangents = Vec::with_capacity(geometry.len());
    for (i, s) in state.iter().enumerate() {
        match s {
            Some(coeffs) => {
                let tail = max_abs(coeffs.last().expect("non-empty"));
                if tail > TAIL_TOL {
                    return Err(DpwError::WindowOverflow {
                        cap: cfg.window,
                        z: geometry.point_at(i),
                    });
                }
                let f = to_loop(&coeffs[..len - 1].to_vec()).trim();
                let e = eta.eval(geometry.point_at(i)).expect("OK points are not poles");
                let dx = f.mul(&LaurentLoop::monomial(e, -1))?.trim();
                let dy = dx.scale(I);
                values.push(Some(f));
                tangents.push(Some([dx, dy]));
            }
            None => {
                values.push(None);
                tangents.push(None);
            }
        }
    }
    Ok(FrameGrid {
        geometry: *geometry,
        values,
        tangents,
        mask,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Compact,
    Noncompact,
}

/// Pointwise Iwasawa splitting of every OK loop; exact tangents are carried along
/// when the input has them. The base point value is set to `I` after checking it.
pub fn iwasawa_grid(
    input: &FrameGrid,
    spec: &SymmetricSpaceSpec,
    target: Target,
    cfg: &DpwConfig,
) -> Result<(FrameGrid, Vec<Option<LaurentLoop>>), DpwError> {
    let fcfg = cfg.factor_config();
    let with_tangents = input.has_tangents();
    let results: Vec<_> = (0..input.geometry.len())
        .into_par_iter()
        .map(|i| {
            let Some(gamma) = input.value(i) else {
                return (input.mask[i], None, None, None);
            };
            let out = match target {
                Target::Compact => iwasawa_compact_with(gamma, spec, &fcfg),
                Target::Noncompact => iwasawa_real_with(gamma, spec, &fcfg),
            };
            let Some((left, right)) = out.into_factors() else {
                return (PointStatus::FactorFailed, None, None, None);
            };
            let tangents = if with_tangents {
                let kind = match target {
                    Target::Compact => SplitKind::Unitary,
                    Target::Noncompact => SplitKind::Real(spec.j()),
                };
                let [dx, dy] = input.tangents[i].as_ref().expect("checked");
                let tx = factor_tangent(&left, &right, dx, kind, &fcfg);
                let ty = factor_tangent(&left, &right, dy, kind, &fcfg);
                match (tx, ty) {
                    (Ok((lx, _)), Ok((ly, _))) => Some([lx, ly]),
                    _ => return (PointStatus::FactorFailed, None, None, None),
                }
            } else {
                None
            };
            (PointStatus::Ok, Some(left), tangents, Some(right))
        })
        .collect();
    let mut grid = FrameGrid {
        geometry: input.geometry,
        values: Vec::with_capacity(results.len()),
        tangents: Vec::with_capacity(results.len()),
        mask: Vec::with_capacity(results.len()),
    };
    let mut rights = Vec::with_capacity(results.len());
    for (status, v, t, r) in results {
        grid.mask.push(status);
        grid.values.push(v);
        grid.tangents.push(t);
        rights.push(r);
    }
    let base = grid.geometry.base_index();
    if grid.mask[base] != PointStatus::Ok {
        return Err(DpwError::BaseFactorization(FactorStatus::OutsideIwasawaCell));
    }
    // A normalized input (identity at the base) must give a normalized output.
    let n = spec.dim();
    let id = LaurentLoop::identity(n);
    let input_normalized = input.value(base).is_some_and(|v| v.max_coeff_diff(&id) <= 1e-12);
    if input_normalized {
        let dev = grid.values[base].as_ref().expect("base OK").max_coeff_diff(&id);
        if dev > 1e-12 {
            return Err(DpwError::BaseNotIdentity(dev));
        }
        grid.values[base] = Some(id);
    }
    Ok((grid, rights))
}

/// Holomorphic frame followed by the Iwasawa splitting for the chosen real form.
pub fn frames_from_potential(
    eta: &NormalizedPotential,
    geometry: &GridGeometry,
    target: Target,
    cfg: &DpwConfig,
) -> Result<FrameGrid, DpwError> {
    let minus = integrate_potential(eta, geometry, cfg)?;
    Ok(iwasawa_grid(&minus, eta.spec(), target, cfg)?.0)
}

/// Second-order derivative of a grid field along one axis: central where both
/// neighbors exist, three-point one-sided otherwise.
pub fn grid_derivative(
    geometry: &GridGeometry,
    field: &[Option<CMat>],
    idx: usize,
    axis: usize,
) -> Option<CMat> {
    let (ix, iy) = geometry.coords(idx);
    let (pos, lim) = if axis == 0 { (ix, geometry.nx) } else { (iy, geometry.ny) };
    let at = |p: isize| -> Option<&CMat> {
        if p < 0 || p as usize >= lim {
            return None;
        }
        let j = if axis == 0 {
            geometry.index(p as usize, iy)
        } else {
            geometry.index(ix, p as usize)
        };
        field[j].as_ref()
    };
    let p = pos as isize;
    let h = geometry.h;
    field[idx].as_ref()?;
    if let (Some(a), Some(b)) = (at(p - 1), at(p + 1)) {
        return Some((b - a) * c(0.5 / h, 0.0));
    }
    let here = field[idx].as_ref()?;
    if let (Some(a), Some(b)) = (at(p + 1), at(p + 2)) {
        return Some((a * c(4.0, 0.0) - here * c(3.0, 0.0) - b) * c(0.5 / h, 0.0));
    }
    if let (Some(a), Some(b)) = (at(p - 1), at(p - 2)) {
        return Some((here * c(3.0, 0.0) - a * c(4.0, 0.0) + b) * c(0.5 / h, 0.0));
    }
    None
}

/// Sampled `η₋₁` recovered from frames, with the largest coefficient of `F₋⁻¹∂F₋` at
/// degrees other than −1.
#[derive(Clone, Debug)]
pub struct PotentialSamples {
    pub geometry: GridGeometry,
    pub values: Vec<Option<CMat>>,
    pub mask: Vec<PointStatus>,
    pub shape_residual: f64,
}

impl PotentialSamples {
    /// Largest gap to `other` over points OK in both.
    pub fn gap(&self, other: &PotentialSamples) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .filter_map(|(a, b)| Some(max_abs_diff(a.as_ref()?, b.as_ref()?)))
            .fold(0.0, f64::max)
    }

    /// Largest gap to `η₋₁` evaluated at the grid points.
    pub fn gap_to(&self, eta: &NormalizedPotential) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let e = eta.eval(self.geometry.point_at(i))?;
                Some(max_abs_diff(v.as_ref()?, &e))
            })
            .fold(0.0, f64::max)
    }

    pub fn ok_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Birkhoff splitting at every point, finite differences of the negative factors, and
/// extraction of the `λ⁻¹` coefficient of `F₋⁻¹∂_zF₋`.
pub fn potential_from_frames(frames: &FrameGrid, cfg: &DpwConfig) -> PotentialSamples {
    let geometry = frames.geometry;
    let fcfg = cfg.factor_config();
    let minus: Vec<(PointStatus, Option<LaurentLoop>)> = (0..geometry.len())
        .into_par_iter()
        .map(|i| match frames.value(i) {
            None => (frames.mask[i], None),
            Some(f) => match birkhoff_with(f, &fcfg).into_factors() {
                Some((l, _)) => (PointStatus::Ok, Some(l)),
                None => (PointStatus::FactorFailed, None),
            },
        })
        .collect();
    let lo = minus
        .iter()
        .filter_map(|(_, l)| l.as_ref().map(|l| l.lo()))
        .min()
        .unwrap_or(0);
    let degrees: Vec<i32> = (lo..=0).collect();
    // One scalar field per coefficient so the derivative helper can be reused.
    let coeff_field = |k: i32| -> Vec<Option<CMat>> {
        minus.iter().map(|(_, l)| l.as_ref().map(|l| l.coeff_or_zero(k))).collect()
    };
    let fields: Vec<Vec<Option<CMat>>> = degrees.iter().map(|k| coeff_field(*k)).collect();
    let results: Vec<(Option<CMat>, f64, PointStatus)> = (0..geometry.len())
        .into_par_iter()
        .map(|i| {
            let (status, Some(fm)) = &minus[i] else {
                return (None, 0.0, minus[i].0);
            };
            let mut dz = Vec::with_capacity(degrees.len());
            for f in &fields {
                let dx = grid_derivative(&geometry, f, i, 0);
                let dy = grid_derivative(&geometry, f, i, 1);
                match (dx, dy) {
                    (Some(dx), Some(dy)) => dz.push((dx - dy * I) * c(0.5, 0.0)),
                    _ => return (None, 0.0, *status),
                }
            }
            let dloop = LaurentLoop::new(lo, dz).expect("non-empty");
            let inv = match loop_inverse_with(fm, DegreeWindow::new(-cfg.window, 0), cfg.samples) {
                Ok(x) => x,
                Err(_) => return (None, 0.0, PointStatus::FactorFailed),
            };
            let g = inv.mul(&dloop).expect("same dimension");
            let shape = g.terms().filter(|(j, _)| *j != -1).map(|(_, m)| max_abs(m)).fold(0.0, f64::max);
            (Some(g.coeff_or_zero(-1)), shape, PointStatus::Ok)
        })
        .collect();
    let mut out = PotentialSamples {
        geometry,
        values: Vec::with_capacity(results.len()),
        mask: Vec::with_capacity(results.len()),
        shape_residual: 0.0,
    };
    for (v, s, m) in results {
        out.values.push(v);
        out.mask.push(m);
        out.shape_residual = out.shape_residual.max(s);
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub per_point: Vec<Option<f64>>,
    /// Largest zero-curvature residual `∂ₓαᵧ − ∂ᵧαₓ + [αₓ, αᵧ]`.
    pub max_curvature: f64,
    /// Largest violation of the `λ⁻¹α′_p + α_k + λα″_p` shape.
    pub max_shape: f64,
    pub max: f64,
}

/// Maurer–Cartan form by central differences at `lambda_count` roots of unity,
/// zero-curvature residual by a second round of differences, and the λ-shape check on
/// the Fourier coefficients of the `dz` and `dz̄` parts.
pub fn flatness_residual(frames: &FrameGrid, spec: &SymmetricSpaceSpec, lambda_count: usize) -> FlatnessReport {
    let g = frames.geometry;
    let len = g.len();
    let mut curvature = vec![0.0_f64; len];
    let mut alpha_z: Vec<Vec<CMat>> = vec![Vec::with_capacity(lambda_count); len];
    let mut alpha_zb: Vec<Vec<CMat>> = vec![Vec::with_capacity(lambda_count); len];
    let mut usable = vec![true; len];
    for k in 0..lambda_count {
        let l = root_of_unity(k, lambda_count);
        let fvals: Vec<Option<CMat>> = (0..len).map(|i| frames.value(i).map(|f| f.eval(l))).collect();
        let alphas: Vec<Option<(CMat, CMat)>> = (0..len)
            .into_par_iter()
            .map(|i| {
                let f = fvals[i].as_ref()?;
                let fi = linalg::inverse(f)?;
                let dx = grid_derivative(&g, &fvals, i, 0)?;
                let dy = grid_derivative(&g, &fvals, i, 1)?;
                Some((&fi * dx, &fi * dy))
            })
            .collect();
        let ax: Vec<Option<CMat>> = alphas.iter().map(|a| a.as_ref().map(|a| a.0.clone())).collect();
        let ay: Vec<Option<CMat>> = alphas.iter().map(|a| a.as_ref().map(|a| a.1.clone())).collect();
        let curv: Vec<Option<f64>> = (0..len)
            .into_par_iter()
            .map(|i| {
                let (x, y) = alphas[i].as_ref()?;
                let dyx = grid_derivative(&g, &ay, i, 0)?;
                let dxy = grid_derivative(&g, &ax, i, 1)?;
                Some(max_abs(&(dyx - dxy + linalg::commutator(x, y))))
            })
            .collect();
        for i in 0..len {
            match (&alphas[i], curv[i]) {
                (Some((x, y)), Some(r)) => {
                    curvature[i] = curvature[i].max(r);
                    alpha_z[i].push((x - y * I) * c(0.5, 0.0));
                    alpha_zb[i].push((x + y * I) * c(0.5, 0.0));
                }
                _ => usable[i] = false,
            }
        }
    }
    let half = lambda_count as i32 / 2;
    let window = DegreeWindow::new(-(half - 1).max(0), half);
    let shape: Vec<Option<f64>> = (0..len)
        .into_par_iter()
        .map(|i| {
            if !usable[i] || frames.value(i).is_none() {
                return None;
            }
            let az = full_band_coeffs(&SampleSet { values: alpha_z[i].clone() }, window);
            let azb = full_band_coeffs(&SampleSet { values: alpha_zb[i].clone() }, window);
            let mut worst = 0.0_f64;
            for (j, m) in az.terms() {
                let r = match j {
                    -1 => max_abs(&spec.project_kp(m).0),
                    0 => max_abs(&spec.project_kp(m).1),
                    _ => max_abs(m),
                };
                worst = worst.max(r);
            }
            for (j, m) in azb.terms() {
                let r = match j {
                    1 => max_abs(&spec.project_kp(m).0),
                    0 => max_abs(&spec.project_kp(m).1),
                    _ => max_abs(m),
                };
                worst = worst.max(r);
            }
            Some(worst)
        })
        .collect();
    let per_point: Vec<Option<f64>> = (0..len)
        .map(|i| shape[i].map(|s| s.max(curvature[i])))
        .collect();
    let max_curvature = (0..len).filter(|i| shape[*i].is_some()).map(|i| curvature[i]).fold(0.0, f64::max);
    let max_shape = shape.iter().flatten().copied().fold(0.0, f64::max);
    FlatnessReport {
        per_point,
        max_curvature,
        max_shape,
        max: max_curvature.max(max_shape),
    }
}
