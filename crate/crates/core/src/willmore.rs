//! The Willmore example: a normalized potential built from two meromorphic functions,
//! closed-form frames of the harmonic map and of its compact dual, and the associated
//! family of minimal surfaces in ℝ⁴.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::dpw::{DpwError, GridGeometry, NormalizedPotential};
use crate::linalg::{c, max_abs, CMat, I};
use crate::rational::{Rational, RationalMatrix};
use crate::symspace::SymmetricSpaceSpec;

/// Reality tolerance for surface coordinates.
pub const REALITY_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum WillmoreError {
    #[error("the second function has identically vanishing derivative")]
    ConstantF4,
    #[error("evaluation at a pole: z = {0}")]
    Pole(Complex64),
    #[error("derivative of the second function vanishes at z = {0}")]
    DivisionByZero(Complex64),
    #[error("surface coordinate {component} has imaginary part {imag:.3e} at z = {z}")]
    NonReal { component: usize, imag: f64, z: Complex64 },
    #[error("no grid point survives the exclusions")]
    EmptyGrid,
    #[error(transparent)]
    Potential(#[from] DpwError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The pair `(f₂, f₄)` of rational functions.
#[derive(Clone, Debug)]
pub struct MeromorphicPair {
    pub f2: Rational,
    pub f4: Rational,
    df2: Rational,
    df4: Rational,
}

impl MeromorphicPair {
    pub fn new(f2: Rational, f4: Rational) -> Result<Self, WillmoreError> {
        let pair = Self::unchecked(f2, f4);
        if pair.df4.is_zero() {
            return Err(WillmoreError::ConstantF4);
        }
        Ok(pair)
    }

    /// Skips the `f₄′ ≢ 0` requirement; the potential is still defined, the surface is not.
    pub fn unchecked(f2: Rational, f4: Rational) -> Self {
        let df2 = f2.derivative();
        let df4 = f4.derivative();
        MeromorphicPair { f2, f4, df2, df4 }
    }

    pub fn df2(&self) -> &Rational {
        &self.df2
    }

    pub fn df4(&self) -> &Rational {
        &self.df4
    }

    /// Poles of `f₂`, `f₄` and zeros of `f₄′`: every point where the surface formula breaks.
    pub fn surface_singularities(&self) -> Vec<Complex64> {
        let mut out = self.f2.poles();
        out.extend(self.f4.poles());
        if !self.df4.is_zero() {
            out.extend(self.df4.num.roots());
        }
        out
    }

    fn values(&self, z: Complex64) -> Result<[Complex64; 4], WillmoreError> {
        let ev = |r: &Rational| r.eval(z).ok_or(WillmoreError::Pole(z));
        Ok([ev(&self.f2)?, ev(&self.f4)?, ev(&self.df2)?, ev(&self.df4)?])
    }
}

/// The `4×4` block `B` of the potential at `z`.
pub fn potential_block(pair: &MeromorphicPair, z: Complex64) -> Result<CMat, WillmoreError> {
    let [_, _, d2, d4] = pair.values(z)?;
    Ok(block_from_derivatives(d2, d4))
}

fn block_from_derivatives(d2: Complex64, d4: Complex64) -> CMat {
    let h = c(0.5, 0.0);
    let o = c(0.0, 0.0);
    CMat::from_row_slice(4, 4, &[
        -I * d2 * h, d2 * h, o, o,
        I * d2 * h, -d2 * h, o, o,
        d4 * h, I * d4 * h, o, o,
        I * d4 * h, -d4 * h, o, o,
    ])
}

/// `η₋₁ = [[0, B], [−BᵗJ₄, 0]]` on the 8×8 realization, as a matrix of rational functions.
pub fn example_potential(pair: &MeromorphicPair) -> Result<NormalizedPotential, WillmoreError> {
    let spec = Arc::new(SymmetricSpaceSpec::willmore(4));
    let h = c(0.5, 0.0);
    // B entries as multiples of f₂′ and f₄′.
    let pattern: [[(usize, Complex64); 2]; 4] = [
        [(2, -I * h), (2, h)],
        [(2, I * h), (2, -h)],
        [(4, h), (4, I * h)],
        [(4, I * h), (4, -h)],
    ];
    let base = |k: usize| if k == 2 { &pair.df2 } else { &pair.df4 };
    let mut eta = RationalMatrix::zeros(8);
    let j4 = [-1.0, 1.0, 1.0, 1.0];
    for (r, row) in pattern.iter().enumerate() {
        for (col, (k, s)) in row.iter().enumerate() {
            let entry = base(*k).scale(*s);
            eta.set(r, 4 + col, entry.clone());
            // (−BᵗJ₄)[col][r] = −B[r][col]·J₄[r]
            eta.set(4 + col, r, entry.scale(c(-j4[r], 0.0)));
        }
    }
    let pot = NormalizedPotential::new(eta, spec)?;
    let probe = potential_block(pair, c(0.37, -0.21)).or_else(|_| potential_block(pair, c(-0.53, 0.44)))?;
    let j4m = crate::linalg::diag_real(&j4);
    let iso = max_abs(&(probe.transpose() * j4m * &probe));
    assert!(iso <= 1e-12 * max_abs(&probe).max(1.0).powi(2), "B is not isotropic: {iso:e}");
    Ok(pot)
}

/// The pair `f₂ = z`, `f₄ = z²`.
pub fn default_pair() -> MeromorphicPair {
    use crate::rational::Poly;
    MeromorphicPair::new(
        Rational::poly(Poly::z()),
        Rational::poly(Poly::new(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])),
    )
    .expect("f₄′ = 2z is not identically zero")
}

#[derive(Clone, Debug)]
pub struct ClosedFormFrames {
    /// Columns spanning the non-compact harmonic map.
    pub noncompact: CMat,
    /// Columns spanning its compact dual.
    pub compact: CMat,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

/// Closed-form `8×4` frames at `z` from the values of `f₂`, `f₄`.
pub fn closed_form_frames(pair: &MeromorphicPair, z: Complex64) -> Result<ClosedFormFrames, WillmoreError> {
    let [f2, f4, _, _] = pair.values(z)?;
    Ok(closed_form_from_values(f2, f4))
}

pub fn closed_form_from_values(f2: Complex64, f4: Complex64) -> ClosedFormFrames {
    let d1 = 1.0 + f2.norm_sqr() + f4.norm_sqr();
    let d2 = 1.0 + f2.norm_sqr();
    let d3 = 1.0 + f4.norm_sqr();
    let (s2, s3, s12, sd1) = (d2.sqrt(), d3.sqrt(), (d1 * d2).sqrt(), d1.sqrt());
    let (g2, g4) = (f2.conj(), f4.conj());
    let a = g2 * f4 + f2 * g4;
    let b = g2 * f4 - f2 * g4;
    let a2 = c(f2.norm_sqr(), 0.0);
    let o = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let r = |x: f64| c(x, 0.0);
    let noncompact = CMat::from_row_slice(8, 4, &[
        one + a2 / 2.0, a2 / 2.0, -I * b / (2.0 * s3), a / (2.0 * s3),
        -a2 / 2.0, one - a2 / 2.0, I * b / (2.0 * s3), -a / (2.0 * s3),
        o, o, r(1.0 / s3), o,
        o, o, o, r(1.0 / s3),
        -I * (f2 - g2) / 2.0, -I * (f2 - g2) / 2.0, -(f4 + g4) / (2.0 * s3), -I * (f4 - g4) / (2.0 * s3),
        (f2 + g2) / 2.0, (f2 + g2) / 2.0, -I * (f4 - g4) / (2.0 * s3), (f4 + g4) / (2.0 * s3),
        o, o, o, o,
        o, o, o, o,
    ]);
    let compact = CMat::from_row_slice(8, 4, &[
        r(1.0 / s2), o, a / (2.0 * s12), I * b / (2.0 * s12),
        o, r(1.0 / s2), I * b / (2.0 * s12), -a / (2.0 * s12),
        o, o, r(s2 / sd1), o,
        o, o, o, r(s2 / sd1),
        (f2 + g2) / (2.0 * s2), -I * (f2 - g2) / (2.0 * s2), -(f4 + g4) / (2.0 * s12), -I * (f4 - g4) / (2.0 * s12),
        I * (f2 - g2) / (2.0 * s2), (f2 + g2) / (2.0 * s2), -I * (f4 - g4) / (2.0 * s12), (f4 + g4) / (2.0 * s12),
        o, o, o, o,
        o, o, o, o,
    ]);
    ClosedFormFrames { noncompact, compact, d1, d2, d3 }
}

/// Cartan embeddings of the closed-form frames for a map normalized to the identity at
/// `z0`: the functions are shifted by their values there. The compact frame is first
/// carried to the realization used by the factorizations (first coordinate times `i`).
pub fn closed_form_embeddings(
    pair: &MeromorphicPair,
    spec: &SymmetricSpaceSpec,
    z0: Complex64,
    z: Complex64,
) -> Result<(CMat, CMat), WillmoreError> {
    let [a2, a4, _, _] = pair.values(z0)?;
    let [f2, f4, _, _] = pair.values(z)?;
    let frames = closed_form_from_values(f2 - a2, f4 - a4);
    let mut compact = frames.compact.clone();
    for j in 0..4 {
        compact[(0, j)] *= I;
    }
    let nc = spec.plane_embedding(&frames.noncompact).map_err(|_| WillmoreError::Pole(z))?;
    let cp = spec.plane_embedding(&compact).map_err(|_| WillmoreError::Pole(z))?;
    Ok((nc, cp))
}

/// The associated family member `x_λ(z) ∈ ℝ⁴`.
pub fn minimal_surface(pair: &MeromorphicPair, z: Complex64, lambda: Complex64) -> Result<[f64; 4], WillmoreError> {
    let [f2, f4, d2, d4] = pair.values(z)?;
    if d4.norm() == 0.0 {
        return Err(WillmoreError::DivisionByZero(z));
    }
    let g = d2 / d4;
    let q = d2 * f4 / d4;
    let li = lambda.inv();
    let x = [
        -I * g + I * g.conj(),
        -g - g.conj(),
        -I * (li * f2 - lambda * f2.conj()) + I * li * q - I * lambda * q.conj(),
        (li * f2 + lambda * f2.conj()) - li * q - lambda * q.conj(),
    ];
    let mut out = [0.0; 4];
    for (k, v) in x.iter().enumerate() {
        let scale = v.norm().max(1.0);
        if v.im.abs() > REALITY_TOL * scale {
            return Err(WillmoreError::NonReal { component: k, imag: v.im, z });
        }
        out[k] = v.re;
    }
    Ok(out)
}

/// Eighth-order central stencil for the first derivative, weights for offsets 1..=4.
const D1: [f64; 4] = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
/// Eighth-order central stencil for the second derivative, center weight then offsets 1..=4.
const D2: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];

/// Local differential residuals of `x_λ` at one point.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceResiduals {
    /// `|x_{zz̄}|` (max over components).
    pub laplacian: f64,
    /// `|⟨∂_z x, ∂_z x⟩| / |∂_z x|²`.
    pub conformality: f64,
    pub value_scale: f64,
}

/// Derivatives by eighth-order stencils with a step of 2% of the distance to the
/// nearest singularity (capped at `max_step`).
pub fn surface_residuals(
    pair: &MeromorphicPair,
    z: Complex64,
    lambda: Complex64,
    max_step: f64,
) -> Result<SurfaceResiduals, WillmoreError> {
    let sing = pair.surface_singularities();
    let dist = sing.iter().map(|p| (p - z).norm()).fold(f64::INFINITY, f64::min);
    let d = (0.02 * dist).min(max_step);
    let x0 = minimal_surface(pair, z, lambda)?;
    let at = |dz: Complex64| minimal_surface(pair, z + dz, lambda);
    let mut dx = [0.0; 4];
    let mut dy = [0.0; 4];
    let mut lap = [0.0; 4];
    for k in 0..4 {
        lap[k] = 2.0 * D2[0] * x0[k];
    }
    for m in 1..=4 {
        let s = m as f64 * d;
        let (xp, xm) = (at(c(s, 0.0))?, at(c(-s, 0.0))?);
        let (yp, ym) = (at(c(0.0, s))?, at(c(0.0, -s))?);
        for k in 0..4 {
            dx[k] += D1[m - 1] * (xp[k] - xm[k]);
            dy[k] += D1[m - 1] * (yp[k] - ym[k]);
            lap[k] += D2[m] * (xp[k] + xm[k] + yp[k] + ym[k]);
        }
    }
    let dz: Vec<Complex64> = (0..4).map(|k| c(dx[k], -dy[k]) / (2.0 * d)).collect();
    let square: Complex64 = dz.iter().map(|v| v * v).sum();
    let norm2: f64 = dz.iter().map(|v| v.norm_sqr()).sum();
    let laplacian = lap.iter().map(|v| (v / (d * d) / 4.0).abs()).fold(0.0, f64::max);
    Ok(SurfaceResiduals {
        laplacian,
        conformality: if norm2 > 0.0 { square.norm() / norm2 } else { 0.0 },
        value_scale: x0.iter().map(|v| v.abs()).fold(0.0, f64::max),
    })
}

/// Surface samples on a grid; excluded points (near a singularity) are `None`.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    pub geometry: GridGeometry,
    pub lambda: Complex64,
    pub vertices: Vec<Option<[f64; 4]>>,
}

impl SurfaceMesh {
    pub fn sample(
        pair: &MeromorphicPair,
        geometry: &GridGeometry,
        lambda: Complex64,
        exclusion: f64,
    ) -> Result<Self, WillmoreError> {
        let sing = pair.surface_singularities();
        let vertices: Vec<Option<[f64; 4]>> = (0..geometry.len())
            .into_par_iter()
            .map(|i| {
                let z = geometry.point_at(i);
                if sing.iter().any(|p| (p - z).norm() < exclusion) {
                    return Ok(None);
                }
                minimal_surface(pair, z, lambda).map(Some)
            })
            .collect::<Result<_, _>>()?;
        if vertices.iter().all(|v| v.is_none()) {
            return Err(WillmoreError::EmptyGrid);
        }
        Ok(SurfaceMesh {
            geometry: *geometry,
            lambda,
            vertices,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.iter().filter(|v| v.is_some()).count()
    }

    /// Quads `(i,j),(i+1,j),(i+1,j+1),(i,j+1)` with all four corners present, as
    /// 0-based grid indices.
    pub fn faces(&self) -> Vec<[usize; 4]> {
        let g = &self.geometry;
        let mut out = Vec::new();
        for iy in 0..g.ny.saturating_sub(1) {
            for ix in 0..g.nx.saturating_sub(1) {
                let q = [g.index(ix, iy), g.index(ix + 1, iy), g.index(ix + 1, iy + 1), g.index(ix, iy + 1)];
                if q.iter().all(|i| self.vertices[*i].is_some()) {
                    out.push(q);
                }
            }
        }
        out
    }

    /// ASCII OBJ with the first three coordinates; vertices row-major, excluded points
    /// dropped and indices compacted.
    pub fn write_obj(&self, w: &mut impl Write) -> io::Result<()> {
        let mut index = vec![0usize; self.vertices.len()];
        let mut next = 1;
        writeln!(w, "# lambda {:.17e} {:.17e}", self.lambda.re, self.lambda.im)?;
        for (i, v) in self.vertices.iter().enumerate() {
            if let Some(x) = v {
                writeln!(w, "v {:.17e} {:.17e} {:.17e}", x[0], x[1], x[2])?;
                index[i] = next;
                next += 1;
            }
        }
        for q in self.faces() {
            writeln!(w, "f {} {} {} {}", index[q[0]], index[q[1]], index[q[2]], index[q[3]])?;
        }
        Ok(())
    }
}

/// Writes `surface_<k>.obj` per λ and one `surface.csv` with all four coordinates.
pub fn export_mesh(
    pair: &MeromorphicPair,
    geometry: &GridGeometry,
    lambdas: &[Complex64],
    exclusion: f64,
    dir: &Path,
) -> Result<Vec<PathBuf>, WillmoreError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut csv = String::from("lambda_index,re_z,im_z,x1,x2,x3,x4\n");
    for (k, lambda) in lambdas.iter().enumerate() {
        let mesh = SurfaceMesh::sample(pair, geometry, *lambda, exclusion)?;
        let path = dir.join(format!("surface_{k}.obj"));
        let mut buf = Vec::new();
        mesh.write_obj(&mut buf)?;
        fs::write(&path, buf)?;
        written.push(path);
        for (i, v) in mesh.vertices.iter().enumerate() {
            if let Some(x) = v {
                let z = geometry.point_at(i);
                csv.push_str(&format!(
                    "{k},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                    z.re, z.im, x[0], x[1], x[2], x[3]
                ));
            }
        }
    }
    let path = dir.join("surface.csv");
    fs::write(&path, csv)?;
    written.push(path);
    Ok(written)
}
