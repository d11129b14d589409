//! Finite-uniton diagnostics: the Laurent degree of a frame and of its adjoint action,
//! the extended solution `Φ(λ) = F(λ)F(1)⁻¹`, and the residual of Uhlenbeck's
//! equation for `Φ`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dpw::{grid_derivative, FrameGrid, GridGeometry};
use crate::linalg::{self, c, max_abs, max_abs_diff, CMat, I};
use crate::loopalg::{full_band_coeffs, root_of_unity, DegreeWindow, LaurentLoop, SampleSet, TAIL_TOL};
use crate::symspace::SymmetricSpaceSpec;

#[derive(Debug, Error)]
pub enum UnitonError {
    #[error("adjoint action has significant coefficients at degree {degree}, the resolvable cap")]
    WindowOverflow { degree: i32 },
    #[error("frame is singular at z = {z}, λ = {lambda}")]
    Singular { z: Complex64, lambda: Complex64 },
    #[error("no usable grid point")]
    Empty,
}

#[derive(Clone, Debug, Serialize)]
pub struct UnitonReport {
    /// Hull of the significant degrees of `F` over the grid.
    pub frame_window: (i32, i32),
    /// Smallest `k` with `Ad(F)` supported in `|j| ≤ k` at every point.
    pub ad_degree: i32,
    /// Largest discarded coefficient of `Ad(F)` (relative to its largest coefficient).
    pub tail_mass: f64,
    /// Laurent-polynomial verdict: `tail_mass` below the tail tolerance.
    pub finite: bool,
    pub points: usize,
}

fn degree_cap(frames: &FrameGrid) -> i32 {
    frames
        .values
        .iter()
        .flatten()
        .map(|f| f.lo().abs().max(f.hi().abs()))
        .max()
        .unwrap_or(0)
}

/// Fourier support of `λ ↦ F(λ)XF(λ)⁻¹` over a basis of the Lie algebra, maximized over
/// the grid.
pub fn uniton_number(frames: &FrameGrid, spec: &SymmetricSpaceSpec) -> Result<UnitonReport, UnitonError> {
    let basis = spec.basis_g();
    // Ad(F) of a frame with degrees in [−d, d] has degrees in [−2d, 2d]; sample well
    // beyond that so that a longer tail is seen rather than aliased.
    let d = degree_cap(frames).max(1);
    let resolvable = 4 * d + 2;
    let count = (2 * resolvable + 2) as usize;
    let count = count.next_power_of_two();
    let window = DegreeWindow::new(-(count as i32 / 2 - 1), count as i32 / 2);
    let results: Vec<Result<Option<(i32, f64, (i32, i32))>, UnitonError>> = (0..frames.geometry.len())
        .into_par_iter()
        .map(|i| {
            let Some(f) = frames.value(i) else { return Ok(None) };
            let z = frames.geometry.point_at(i);
            let mut samples: Vec<Vec<CMat>> = vec![Vec::with_capacity(count); basis.len()];
            for k in 0..count {
                let l = root_of_unity(k, count);
                let fv = f.eval(l);
                let fi = linalg::inverse(&fv).ok_or(UnitonError::Singular { z, lambda: l })?;
                for (b, x) in basis.iter().enumerate() {
                    samples[b].push(&fv * x * &fi);
                }
            }
            let mut norms = vec![0.0_f64; window.width()];
            for s in samples {
                let coeffs = full_band_coeffs(&SampleSet { values: s }, window);
                for (slot, (_, m)) in norms.iter_mut().zip(coeffs.terms()) {
                    *slot = slot.max(max_abs(m));
                }
            }
            let top = norms.iter().copied().fold(0.0, f64::max).max(1e-300);
            let deg = |idx: usize| window.lo + idx as i32;
            let k = norms
                .iter()
                .enumerate()
                .filter(|(_, v)| **v > TAIL_TOL * top)
                .map(|(idx, _)| deg(idx).abs())
                .max()
                .unwrap_or(0);
            if k >= resolvable.min(window.hi) {
                return Err(UnitonError::WindowOverflow { degree: k });
            }
            let tail = norms
                .iter()
                .enumerate()
                .filter(|(idx, _)| deg(*idx).abs() > k)
                .map(|(_, v)| v / top)
                .fold(0.0, f64::max);
            let support = f.support(TAIL_TOL).map_or((0, 0), |w| (w.lo, w.hi));
            Ok(Some((k, tail, support)))
        })
        .collect();
    let mut report = UnitonReport {
        frame_window: (0, 0),
        ad_degree: 0,
        tail_mass: 0.0,
        finite: true,
        points: 0,
    };
    for r in results {
        if let Some((k, tail, (lo, hi))) = r? {
            report.ad_degree = report.ad_degree.max(k);
            report.tail_mass = report.tail_mass.max(tail);
            report.frame_window = (report.frame_window.0.min(lo), report.frame_window.1.max(hi));
            report.points += 1;
        }
    }
    if report.points == 0 {
        return Err(UnitonError::Empty);
    }
    report.finite = report.tail_mass < TAIL_TOL;
    Ok(report)
}

/// `Φ(z,λ) = F(z,λ)F(z,1)⁻¹` and `𝔸 = ½𝔽⁻¹d𝔽` with `𝔽 = F(−1)F(1)⁻¹`, the latter as its
/// `dz` and `dz̄` components.
#[derive(Clone, Debug)]
pub struct ExtendedSolution {
    pub geometry: GridGeometry,
    pub phi: Vec<Option<LaurentLoop>>,
    pub a_z: Vec<Option<CMat>>,
    pub a_zbar: Vec<Option<CMat>>,
}

pub fn extended_solution(frames: &FrameGrid) -> Result<ExtendedSolution, UnitonError> {
    let g = frames.geometry;
    let one = c(1.0, 0.0);
    let phi_and_ff: Vec<Result<(Option<LaurentLoop>, Option<CMat>), UnitonError>> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let Some(f) = frames.value(i) else { return Ok((None, None)) };
            let z = g.point_at(i);
            let f1 = f.eval(one);
            let f1i = linalg::inverse(&f1).ok_or(UnitonError::Singular { z, lambda: one })?;
            let phi = f.right_mul(&f1i);
            let dev = max_abs_diff(&phi.eval(one), &linalg::eye(f.dim()));
            assert!(dev < 1e-10, "Φ(z,1) deviates from I by {dev:e}");
            let ff = f.eval(c(-1.0, 0.0)) * f1i;
            Ok((Some(phi), Some(ff)))
        })
        .collect();
    let mut phi = Vec::with_capacity(g.len());
    let mut ff = Vec::with_capacity(g.len());
    for r in phi_and_ff {
        let (p, f) = r?;
        phi.push(p);
        ff.push(f);
    }
    let base = g.base_index();
    if let Some(p) = &phi[base] {
        let dev = p.max_coeff_diff(&LaurentLoop::identity(p.dim()));
        assert!(dev < 1e-10, "Φ(z₀,λ) deviates from I by {dev:e}");
    }
    let half = c(0.5, 0.0);
    let parts: Vec<(Option<CMat>, Option<CMat>)> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let Some(f) = ff[i].as_ref() else { return (None, None) };
            let (Some(dx), Some(dy)) = (grid_derivative(&g, &ff, i, 0), grid_derivative(&g, &ff, i, 1)) else {
                return (None, None);
            };
            let Some(fi) = linalg::inverse(f) else { return (None, None) };
            let ax = &fi * dx * half;
            let ay = &fi * dy * half;
            (Some((&ax - &ay * I) * half), Some((&ax + &ay * I) * half))
        })
        .collect();
    let (a_z, a_zbar) = parts.into_iter().unzip();
    Ok(ExtendedSolution { geometry: g, phi, a_z, a_zbar })
}

/// Largest gap in `Φ⁻¹dΦ = (1−λ⁻¹)𝔸^{(1,0)} + (1−λ)𝔸^{(0,1)}` over the grid and
/// `samples` roots of unity, with `Φ⁻¹dΦ` from central differences.
pub fn uhlenbeck_residual(sol: &ExtendedSolution, samples: usize) -> f64 {
    let g = sol.geometry;
    let one = c(1.0, 0.0);
    (0..samples)
        .map(|k| {
            let l = root_of_unity(k, samples);
            let vals: Vec<Option<CMat>> = sol.phi.iter().map(|p| p.as_ref().map(|p| p.eval(l))).collect();
            (0..g.len())
                .into_par_iter()
                .filter_map(|i| {
                    let p = vals[i].as_ref()?;
                    let (az, azb) = (sol.a_z[i].as_ref()?, sol.a_zbar[i].as_ref()?);
                    let dx = grid_derivative(&g, &vals, i, 0)?;
                    let dy = grid_derivative(&g, &vals, i, 1)?;
                    let pi = linalg::inverse(p)?;
                    let lx = &pi * dx;
                    let ly = &pi * dy;
                    let a = one - l.inv();
                    let b = one - l;
                    let rx = az * a + azb * b;
                    let ry = az * (I * a) - azb * (I * b);
                    Some(max_abs_diff(&lx, &rx).max(max_abs_diff(&ly, &ry)))
                })
                .reduce(|| 0.0, f64::max)
        })
        .fold(0.0, f64::max)
}
