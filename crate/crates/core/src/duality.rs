//! Duality between harmonic maps into a non-compact symmetric space and its compact
//! dual: both directions go through an Iwasawa splitting of the frame, and the two maps
//! share one normalized potential.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dpw::{iwasawa_grid, potential_from_frames, DpwConfig, DpwError, FrameGrid, PointStatus, Target};
use crate::linalg::{c, max_abs, max_abs_diff, CMat, I};
use crate::loopalg::{apply_involution, LaurentLoop, PointInvolution};
use crate::symspace::SymmetricSpaceSpec;

#[derive(Debug, Error)]
pub enum DualityError {
    #[error("the Iwasawa splitting fails already at the base point")]
    EmptyDomain,
    #[error("input and dual grids differ in geometry")]
    GeometryMismatch,
    #[error(transparent)]
    Dpw(#[from] DpwError),
}

/// Residuals of the splitting `α = λ⁻¹α′_p + α_k + λα″_p` of a frame's Maurer–Cartan
/// form, measured on exact tangents.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct StructureResiduals {
    /// Degree-zero part outside the real form of `k`.
    pub k_part: f64,
    /// `|α″_p − θ(α′_p)|`.
    pub pairing: f64,
    /// Coefficients the splitting forbids, and `p`-membership of `α′_p`.
    pub shape: f64,
    pub points: usize,
}

impl StructureResiduals {
    pub fn max(&self) -> f64 {
        self.k_part.max(self.pairing).max(self.shape)
    }

    fn merge(self, o: Self) -> Self {
        StructureResiduals {
            k_part: self.k_part.max(o.k_part),
            pairing: self.pairing.max(o.pairing),
            shape: self.shape.max(o.shape),
            points: self.points + o.points,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    /// Largest gap between the normalized potentials of the two sides.
    pub potential_gap: Option<f64>,
    /// Largest deviation of the produced frames from the fixed set of their real form.
    pub reality_gap: f64,
    /// `None` when the input carries no tangents.
    pub structure: Option<StructureResiduals>,
    /// Points of the connected component of successful splittings containing the base.
    pub local_domain: Vec<bool>,
    pub local_domain_size: usize,
    pub failed_points: usize,
    pub mask_preserved: bool,
    /// Right factors of the splitting per point.
    #[serde(skip)]
    pub w_plus_record: Vec<Option<LaurentLoop>>,
}

/// Structural residuals of a frame grid whose real form is fixed by `theta`.
pub fn structure_residuals(
    frames: &FrameGrid,
    spec: &SymmetricSpaceSpec,
    theta: &PointInvolution,
    cfg: &DpwConfig,
) -> Option<StructureResiduals> {
    if !frames.has_tangents() {
        return None;
    }
    let half = c(0.5, 0.0);
    let per_point: Vec<StructureResiduals> = (0..frames.geometry.len())
        .into_par_iter()
        .filter_map(|i| {
            let [ax, ay] = frames.maurer_cartan(i, cfg)?;
            let az = ax.sub(&ay.scale(I)).scale(half);
            let azb = ax.add(&ay.scale(I)).scale(half);
            let mut r = StructureResiduals { points: 1, ..Default::default() };
            for a in [&ax, &ay] {
                let a0 = a.coeff_or_zero(0);
                let (_, p) = spec.project_kp(&a0);
                r.k_part = r.k_part.max(max_abs(&p)).max(max_abs_diff(&theta.apply_algebra(&a0), &a0));
            }
            for (j, m) in az.terms() {
                if j != -1 && j != 0 {
                    r.shape = r.shape.max(max_abs(m));
                }
            }
            for (j, m) in azb.terms() {
                if j != 1 && j != 0 {
                    r.shape = r.shape.max(max_abs(m));
                }
            }
            let a1 = az.coeff_or_zero(-1);
            r.shape = r.shape.max(max_abs(&spec.project_kp(&a1).0));
            r.pairing = max_abs_diff(&azb.coeff_or_zero(1), &theta.apply_algebra(&a1));
            Some(r)
        })
        .collect();
    Some(per_point.into_iter().fold(StructureResiduals::default(), StructureResiduals::merge))
}

fn reality_gap(frames: &FrameGrid, theta: &crate::loopalg::LoopInvolution) -> f64 {
    (0..frames.geometry.len())
        .into_par_iter()
        .filter_map(|i| {
            let f = frames.value(i)?;
            Some(apply_involution(theta, f).max_coeff_diff(f))
        })
        .reduce(|| 0.0, f64::max)
}

/// OK points 4-connected to the base point.
fn base_component(frames: &FrameGrid) -> Vec<bool> {
    let g = &frames.geometry;
    let mut seen = vec![false; g.len()];
    let base = g.base_index();
    if frames.mask[base] != PointStatus::Ok {
        return seen;
    }
    seen[base] = true;
    let mut queue = VecDeque::from([base]);
    while let Some(i) = queue.pop_front() {
        let (ix, iy) = g.coords(i);
        let mut next = Vec::with_capacity(4);
        if ix > 0 {
            next.push(g.index(ix - 1, iy));
        }
        if ix + 1 < g.nx {
            next.push(g.index(ix + 1, iy));
        }
        if iy > 0 {
            next.push(g.index(ix, iy - 1));
        }
        if iy + 1 < g.ny {
            next.push(g.index(ix, iy + 1));
        }
        for j in next {
            if !seen[j] && frames.mask[j] == PointStatus::Ok {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

fn report(
    input: &FrameGrid,
    out: &FrameGrid,
    rights: Vec<Option<LaurentLoop>>,
    spec: &SymmetricSpaceSpec,
    target: Target,
    cfg: &DpwConfig,
    with_potential: bool,
) -> DualityReport {
    let (theta, theta_loop) = match target {
        Target::Compact => (spec.rho().clone(), spec.rho_loop()),
        Target::Noncompact => (spec.tau().clone(), spec.tau_loop()),
    };
    let local_domain = base_component(out);
    let mask_preserved = input
        .mask
        .iter()
        .zip(&out.mask)
        .all(|(a, b)| a == b || *a != PointStatus::Ok);
    DualityReport {
        potential_gap: with_potential.then(|| same_potential_check(input, out, cfg)).flatten(),
        reality_gap: reality_gap(out, &theta_loop),
        structure: structure_residuals(out, spec, &theta, cfg),
        local_domain_size: local_domain.iter().filter(|b| **b).count(),
        local_domain,
        failed_points: out.count(PointStatus::FactorFailed),
        mask_preserved,
        w_plus_record: rights,
    }
}

/// Compact dual of a non-compact harmonic map given by its frames: `F = F_Ũ·W₊`
/// pointwise. The compact Iwasawa splitting is global, so the mask is preserved.
pub fn compact_dual(
    frames: &FrameGrid,
    spec: &SymmetricSpaceSpec,
    cfg: &DpwConfig,
) -> Result<(FrameGrid, DualityReport), DualityError> {
    compact_dual_with(frames, spec, cfg, true)
}

/// As [`compact_dual`], optionally skipping the potential comparison (the costly part).
pub fn compact_dual_with(
    frames: &FrameGrid,
    spec: &SymmetricSpaceSpec,
    cfg: &DpwConfig,
    with_potential: bool,
) -> Result<(FrameGrid, DualityReport), DualityError> {
    let (out, rights) = iwasawa_grid(frames, spec, Target::Compact, cfg)?;
    let rep = report(frames, &out, rights, spec, Target::Compact, cfg, with_potential);
    Ok((out, rep))
}

/// Local converse: non-compact frames from compact ones by the real Iwasawa splitting;
/// the mask charts where it exists.
pub fn noncompact_from_compact(
    frames: &FrameGrid,
    spec: &SymmetricSpaceSpec,
    cfg: &DpwConfig,
) -> Result<(FrameGrid, DualityReport), DualityError> {
    noncompact_from_compact_with(frames, spec, cfg, true)
}

pub fn noncompact_from_compact_with(
    frames: &FrameGrid,
    spec: &SymmetricSpaceSpec,
    cfg: &DpwConfig,
    with_potential: bool,
) -> Result<(FrameGrid, DualityReport), DualityError> {
    let (out, rights) = match iwasawa_grid(frames, spec, Target::Noncompact, cfg) {
        Ok(x) => x,
        Err(DpwError::BaseFactorization(_)) => return Err(DualityError::EmptyDomain),
        Err(e) => return Err(e.into()),
    };
    let rep = report(frames, &out, rights, spec, Target::Noncompact, cfg, with_potential);
    Ok((out, rep))
}

/// Largest gap between the potentials recovered from two frame grids over their common
/// OK points; `None` if there is none.
pub fn same_potential_check(a: &FrameGrid, b: &FrameGrid, cfg: &DpwConfig) -> Option<f64> {
    if a.geometry != b.geometry {
        return None;
    }
    let pa = potential_from_frames(a, cfg);
    let pb = potential_from_frames(b, cfg);
    let common = pa
        .values
        .iter()
        .zip(&pb.values)
        .filter(|(x, y)| x.is_some() && y.is_some())
        .count();
    (common > 0).then(|| pa.gap(&pb))
}

/// Largest gap between Cartan embeddings of two frame grids at `λ` over common OK points.
pub fn embedding_gap(
    a: &FrameGrid,
    b: &FrameGrid,
    spec: &SymmetricSpaceSpec,
    lambda: num_complex::Complex64,
    region: Option<&[bool]>,
) -> f64 {
    (0..a.geometry.len())
        .into_par_iter()
        .filter(|i| region.map_or(true, |r| r[*i]))
        .filter_map(|i| {
            let ea: CMat = spec.cartan_embed(a.value(i)?, lambda).ok()?;
            let eb: CMat = spec.cartan_embed(b.value(i)?, lambda).ok()?;
            Some(max_abs_diff(&ea, &eb))
        })
        .reduce(|| 0.0, f64::max)
}
