//! End-to-end run: potential → frames → duality → uniton diagnostics → surface, driven by
//! a TOML configuration and summarized as a list of named checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpw::{
    flatness_residual, frames_from_potential, potential_from_frames, DpwConfig, FrameGrid,
    GridGeometry, NormalizedPotential, PointStatus, PotentialSamples, Target,
};
use crate::duality::{compact_dual_with, embedding_gap, noncompact_from_compact_with, StructureResiduals};
use crate::linalg::{c, max_abs_diff};
use crate::loopalg::TAIL_TOL;
use crate::rational::{Poly, Rational, RationalMatrix};
use crate::symspace::SymmetricSpaceSpec;
use crate::uniton::{extended_solution, uhlenbeck_residual, uniton_number, UnitonReport};
use crate::willmore::{
    closed_form_embeddings, example_potential, export_mesh, surface_residuals, MeromorphicPair, SurfaceMesh,
    WillmoreError,
};

/// Largest window the pipeline accepts; frames need `2M+1` resolvable degrees and the
/// holomorphic frame is generated degreewise up to this cap.
pub const MAX_WINDOW: i32 = 64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("invalid potential: {0}")]
    Potential(String),
}

/// A polynomial coefficient: a real number or `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coeff {
    Real(f64),
    Complex([f64; 2]),
}

impl Coeff {
    fn value(self) -> Complex64 {
        match self {
            Coeff::Real(x) => c(x, 0.0),
            Coeff::Complex([re, im]) => c(re, im),
        }
    }
}

fn poly(coeffs: &[Coeff]) -> Poly {
    Poly::new(coeffs.iter().map(|x| x.value()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryConfig {
    pub row: usize,
    pub col: usize,
    pub num: Vec<Coeff>,
    #[serde(default = "one_poly")]
    pub den: Vec<Coeff>,
}

fn one_poly() -> Vec<Coeff> {
    vec![Coeff::Real(1.0)]
}

/// Either the worked example built from `f₂`, `f₄`, or an explicit `η₋₁` on the 8×8
/// realization. Polynomials are coefficient lists, lowest degree first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialConfig {
    Example { f2: Vec<Coeff>, f4: Vec<Coeff> },
    Custom {
        #[serde(default)]
        entries: Vec<EntryConfig>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub center: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetChoice {
    Compact,
    Noncompact,
    Both,
}

impl std::str::FromStr for TargetChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "compact" => Ok(TargetChoice::Compact),
            "noncompact" => Ok(TargetChoice::Noncompact),
            "both" => Ok(TargetChoice::Both),
            _ => Err(format!("unknown target `{s}` (expected compact, noncompact or both)")),
        }
    }
}

/// Check thresholds. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub closed_form: f64,
    pub potential_roundtrip: f64,
    pub flatness: f64,
    pub duality_potential: f64,
    pub reality: f64,
    pub structure: f64,
    pub converse_embedding: f64,
    pub tail_mass: f64,
    pub uhlenbeck: f64,
    /// Relative to the largest surface coordinate on the grid.
    pub harmonicity: f64,
    pub conformality: f64,
    /// Radius of the disks around surface singularities left out of the mesh and checks.
    pub surface_exclusion: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            closed_form: 1e-6,
            potential_roundtrip: 1e-6,
            flatness: 1e-5,
            duality_potential: 1e-6,
            reality: 1e-8,
            structure: 1e-7,
            converse_embedding: 1e-6,
            tail_mass: TAIL_TOL,
            uhlenbeck: 1e-5,
            harmonicity: 1e-6,
            conformality: 1e-8,
            surface_exclusion: 0.1,
        }
    }
}

/// Check names (or name prefixes such as `flatness`) that are measured and reported
/// but do not decide the exit code.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    pub disabled: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub frames_csv: bool,
    pub meshes: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            frames_csv: true,
            meshes: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub potential: PotentialConfig,
    pub grid: GridConfig,
    #[serde(default = "default_window")]
    pub window: i32,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_target")]
    pub target: TargetChoice,
    /// Associated-family parameters on the unit circle, as `[re, im]`.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<[f64; 2]>,
    /// Roots of unity at which flatness is tested.
    #[serde(default = "default_flatness_lambdas")]
    pub flatness_lambdas: usize,
    /// Uhlenbeck residual sample count on the circle.
    #[serde(default = "default_flatness_lambdas")]
    pub uhlenbeck_lambdas: usize,
    /// Pole exclusion radius; defaults to 5% of the grid extent.
    #[serde(default)]
    pub pole_radius: Option<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default, skip_serializing)]
    pub output: OutputConfig,
}

fn default_window() -> i32 {
    crate::loopalg::DEFAULT_WINDOW
}
fn default_samples() -> usize {
    crate::loopalg::DEFAULT_SAMPLES
}
fn default_target() -> TargetChoice {
    TargetChoice::Both
}
fn default_lambdas() -> Vec<[f64; 2]> {
    vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]]
}
fn default_flatness_lambdas() -> usize {
    8
}

/// Every check name the pipeline can emit; `disabled` entries must match one of these
/// or be a prefix ending before an underscore.
pub const CHECK_NAMES: &[&str] = &[
    "closed_form_compact",
    "closed_form_noncompact",
    "potential_roundtrip_compact",
    "potential_roundtrip_noncompact",
    "flatness_compact",
    "flatness_noncompact",
    "duality_potential_gap",
    "duality_reality",
    "duality_structure",
    "duality_mask_preserved",
    "converse_embedding_gap",
    "uniton_tail_compact",
    "uniton_tail_noncompact",
    "uniton_agreement",
    "uhlenbeck_compact",
    "uhlenbeck_noncompact",
    "surface_harmonicity",
    "surface_conformality",
];

fn disabled_matches(pattern: &str, name: &str) -> bool {
    name == pattern || name.strip_prefix(pattern).is_some_and(|rest| rest.starts_with('_'))
}

/// Strict parse: unknown keys and duplicate keys are errors.
pub fn parse_config_str(text: &str) -> Result<PipelineConfig, ConfigError> {
    let cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

impl PipelineConfig {
    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(c(self.grid.center[0], self.grid.center[1]), self.grid.h, self.grid.nx, self.grid.ny)
    }

    pub fn dpw_config(&self) -> DpwConfig {
        DpwConfig {
            window: self.window,
            samples: self.samples,
            pole_radius: self.pole_radius,
            ..DpwConfig::default()
        }
    }

    pub fn lambda_values(&self) -> Vec<Complex64> {
        self.lambdas.iter().map(|[re, im]| c(*re, *im)).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let g = &self.grid;
        if !(g.h.is_finite() && g.h > 0.0) {
            return bad(format!("grid.h must be positive, got {}", g.h));
        }
        if !g.center.iter().all(|x| x.is_finite()) {
            return bad("grid.center must be finite".into());
        }
        if g.nx < 3 || g.ny < 3 {
            return bad(format!("grid needs at least 3×3 points for differences, got {}×{}", g.nx, g.ny));
        }
        if self.window < 1 || self.window > MAX_WINDOW {
            return bad(format!("window must lie in 1..={MAX_WINDOW}, got {}", self.window));
        }
        let need = 2 * self.window as usize + 1;
        if self.samples < need {
            return bad(format!(
                "samples = {} aliases the window [−{m}, {m}]: N ≥ 2M+1 = {need} circle samples are required",
                self.samples,
                m = self.window
            ));
        }
        if self.lambdas.is_empty() {
            return bad("lambdas must not be empty".into());
        }
        for l in self.lambda_values() {
            if (l.norm() - 1.0).abs() > 1e-12 {
                return bad(format!("lambda {l} is not on the unit circle"));
            }
        }
        if self.flatness_lambdas < 2 || self.uhlenbeck_lambdas < 2 {
            return bad("flatness_lambdas and uhlenbeck_lambdas must be at least 2".into());
        }
        if let Some(r) = self.pole_radius {
            if !(r.is_finite() && r >= 0.0) {
                return bad(format!("pole_radius must be non-negative, got {r}"));
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("closed_form", t.closed_form),
            ("potential_roundtrip", t.potential_roundtrip),
            ("flatness", t.flatness),
            ("duality_potential", t.duality_potential),
            ("reality", t.reality),
            ("structure", t.structure),
            ("converse_embedding", t.converse_embedding),
            ("tail_mass", t.tail_mass),
            ("uhlenbeck", t.uhlenbeck),
            ("harmonicity", t.harmonicity),
            ("conformality", t.conformality),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("tolerances.{name} must be positive, got {v}"));
            }
        }
        if !(t.surface_exclusion.is_finite() && t.surface_exclusion >= 0.0) {
            return bad("tolerances.surface_exclusion must be non-negative".into());
        }
        for d in &self.checks.disabled {
            if !CHECK_NAMES.iter().any(|n| disabled_matches(d, n)) {
                return bad(format!("checks.disabled: unknown check `{d}`"));
            }
        }
        if let PotentialConfig::Custom { entries } = &self.potential {
            for e in entries {
                if e.row >= 8 || e.col >= 8 {
                    return bad(format!("potential entry ({}, {}) outside the 8×8 realization", e.row, e.col));
                }
                if poly(&e.den).is_zero() {
                    return bad(format!("potential entry ({}, {}) has a zero denominator", e.row, e.col));
                }
            }
        }
        Ok(())
    }
}

/// The potential and, for the worked example, the function pair behind it.
pub struct BuiltPotential {
    pub eta: NormalizedPotential,
    pub pair: Option<MeromorphicPair>,
}

pub fn build_potential(cfg: &PotentialConfig) -> Result<BuiltPotential, ConfigError> {
    let err = |e: &dyn std::fmt::Display| ConfigError::Potential(e.to_string());
    match cfg {
        PotentialConfig::Example { f2, f4 } => {
            let (f2, f4) = (Rational::poly(poly(f2)), Rational::poly(poly(f4)));
            match MeromorphicPair::new(f2.clone(), f4.clone()) {
                Ok(pair) => {
                    let eta = example_potential(&pair).map_err(|e| err(&e))?;
                    Ok(BuiltPotential { eta, pair: Some(pair) })
                }
                // A constant f₄ still defines a potential (possibly zero) but no surface.
                Err(WillmoreError::ConstantF4) => {
                    let pair = MeromorphicPair::unchecked(f2, f4);
                    let eta = example_potential(&pair).map_err(|e| err(&e))?;
                    Ok(BuiltPotential { eta, pair: None })
                }
                Err(e) => Err(err(&e)),
            }
        }
        PotentialConfig::Custom { entries } => {
            let mut m = RationalMatrix::zeros(8);
            for e in entries {
                m.set(e.row, e.col, Rational::new(poly(&e.num), poly(&e.den)));
            }
            let spec = Arc::new(SymmetricSpaceSpec::willmore(4));
            let eta = NormalizedPotential::new(m, spec).map_err(|e| err(&e))?;
            Ok(BuiltPotential { eta, pair: None })
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Disabled checks are reported but do not decide the exit code.
    pub enabled: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct MaskStats {
    pub ok: usize,
    pub near_pole: usize,
    pub factor_failed: usize,
}

impl MaskStats {
    fn of(frames: &FrameGrid) -> Self {
        MaskStats {
            ok: frames.count(PointStatus::Ok),
            near_pole: frames.count(PointStatus::NearPole),
            factor_failed: frames.count(PointStatus::FactorFailed),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FlatnessSummary {
    pub max_curvature: f64,
    pub max_shape: f64,
    pub max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TargetReport {
    pub mask: MaskStats,
    pub flatness: FlatnessSummary,
    pub potential_roundtrip_gap: Option<f64>,
    pub recovered_potential_shape: f64,
    pub uniton: Option<UnitonReport>,
    pub uhlenbeck_residual: Option<f64>,
    pub closed_form_gap: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualitySummary {
    pub potential_gap: Option<f64>,
    pub reality_gap: f64,
    pub structure: Option<StructureResiduals>,
    pub mask_preserved: bool,
    pub failed_points: usize,
    pub converse_local_domain_size: usize,
    pub converse_failed_points: usize,
    pub converse_potential_gap: Option<f64>,
    pub converse_embedding_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SurfaceSummary {
    pub points: usize,
    pub scale: f64,
    pub max_laplacian: f64,
    pub max_conformality: f64,
}

/// Everything in `report.json`; free of wall-clock data so that identical
/// configurations give identical bytes.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config: PipelineConfig,
    pub targets: BTreeMap<String, TargetReport>,
    pub duality: Option<DualitySummary>,
    pub surface: Option<SurfaceSummary>,
    pub errors: Vec<String>,
    pub checks: Vec<CheckResult>,
    pub files: Vec<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Contents of `timing.json`, kept apart from the report.
#[derive(Clone, Debug, Serialize)]
pub struct TimingReport {
    pub unix_time: u64,
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub timing: TimingReport,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Compute and report the checks without writing frame or mesh files.
    pub check_only: bool,
}

struct Timer {
    start: Instant,
    last: Instant,
    stages: Vec<StageTiming>,
}

impl Timer {
    fn new() -> Self {
        let now = Instant::now();
        Timer { start: now, last: now, stages: Vec::new() }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds: (now - self.last).as_secs_f64(),
        });
        log::info!("{stage}: {:.2?}", now - self.last);
        self.last = now;
    }
}

struct Checks<'a> {
    cfg: &'a PipelineConfig,
    list: Vec<CheckResult>,
}

impl Checks<'_> {
    /// `value < threshold`, or exact equality for a zero threshold. NaN fails.
    fn push(&mut self, name: &str, value: f64, threshold: f64) {
        let pass = if threshold == 0.0 { value == 0.0 } else { value < threshold };
        let enabled = !self.cfg.checks.disabled.iter().any(|d| disabled_matches(d, name));
        self.list.push(CheckResult {
            name: name.to_string(),
            value,
            threshold,
            pass,
            enabled,
        });
    }
}

fn target_name(t: Target) -> &'static str {
    match t {
        Target::Compact => "compact",
        Target::Noncompact => "noncompact",
    }
}

/// Largest gap between pipeline and closed-form Cartan embeddings at λ = 1 over OK points.
fn closed_form_gap(frames: &FrameGrid, pair: &MeromorphicPair, spec: &SymmetricSpaceSpec, target: Target) -> f64 {
    use rayon::prelude::*;
    let g = frames.geometry;
    let z0 = g.point_at(g.base_index());
    (0..g.len())
        .into_par_iter()
        .filter_map(|i| {
            let f = frames.value(i)?;
            let (nc, cp) = closed_form_embeddings(pair, spec, z0, g.point_at(i)).ok()?;
            let want = match target {
                Target::Compact => cp,
                Target::Noncompact => nc,
            };
            let got = spec.cartan_embed(f, c(1.0, 0.0)).ok()?;
            Some(max_abs_diff(&got, &want))
        })
        .reduce(|| 0.0, f64::max)
}

fn frames_csv(out: &mut String, name: &str, frames: &FrameGrid, spec: &SymmetricSpaceSpec) {
    let g = frames.geometry;
    let one = c(1.0, 0.0);
    for i in 0..g.len() {
        let (ix, iy) = g.coords(i);
        let z = g.point_at(i);
        let status = match frames.mask[i] {
            PointStatus::Ok => "ok",
            PointStatus::NearPole => "near_pole",
            PointStatus::FactorFailed => "factor_failed",
        };
        let _ = write!(out, "{name},{ix},{iy},{:.17e},{:.17e},{status}", z.re, z.im);
        let e = frames.value(i).and_then(|f| spec.cartan_embed(f, one).ok());
        let n = spec.dim();
        for r in 0..n {
            for col in 0..n {
                match &e {
                    Some(m) => {
                        let v = m[(r, col)];
                        let _ = write!(out, ",{:.17e},{:.17e}", v.re, v.im);
                    }
                    None => out.push_str(",,"),
                }
            }
        }
        out.push('\n');
    }
}

fn frames_csv_header(n: usize) -> String {
    let mut h = String::from("target,ix,iy,re_z,im_z,status");
    for r in 0..n {
        for col in 0..n {
            let _ = write!(h, ",e{r}_{col}_re,e{r}_{col}_im");
        }
    }
    h.push('\n');
    h
}

fn dpw_error(stage: &str, e: impl std::fmt::Display) -> String {
    format!("{stage}: {e}")
}

/// Runs every stage the configuration asks for. Configuration problems are returned as
/// errors; numerical failures are recorded in the report and fail the run.
pub fn run_pipeline(cfg: &PipelineConfig, opts: RunOptions) -> Result<RunOutcome, ConfigError> {
    cfg.validate()?;
    let built = build_potential(&cfg.potential)?;
    let spec = built.eta.spec().clone();
    let geometry = cfg.geometry();
    let dcfg = cfg.dpw_config();
    let mut timer = Timer::new();
    let mut checks = Checks { cfg, list: Vec::new() };
    let mut errors = Vec::new();
    let mut targets = BTreeMap::new();
    let mut duality = None;
    let tol = &cfg.tolerances;

    let wanted: Vec<Target> = match cfg.target {
        TargetChoice::Compact => vec![Target::Compact],
        TargetChoice::Noncompact => vec![Target::Noncompact],
        TargetChoice::Both => vec![Target::Noncompact, Target::Compact],
    };

    // Frames per target. With both targets the compact frames are the compact dual of
    // the non-compact ones.
    let mut grids: Vec<(Target, FrameGrid)> = Vec::new();
    let mut potentials: BTreeMap<&'static str, PotentialSamples> = BTreeMap::new();
    for &t in &wanted {
        if t == Target::Compact && cfg.target == TargetChoice::Both {
            continue;
        }
        match frames_from_potential(&built.eta, &geometry, t, &dcfg) {
            Ok(f) => grids.push((t, f)),
            Err(e) => errors.push(dpw_error(&format!("frames_{}", target_name(t)), e)),
        }
        timer.lap(&format!("frames_{}", target_name(t)));
    }

    if cfg.target == TargetChoice::Both {
        if let Some((_, nc)) = grids.iter().find(|(t, _)| *t == Target::Noncompact).cloned() {
            match compact_dual_with(&nc, &spec, &dcfg, false) {
                Ok((hc, rep)) => {
                    timer.lap("compact_dual");
                    let converse = noncompact_from_compact_with(&hc, &spec, &dcfg, false);
                    timer.lap("converse");
                    let (domain, failed, emb, back) = match &converse {
                        Ok((back, crep)) => (
                            crep.local_domain_size,
                            crep.failed_points,
                            embedding_gap(&nc, back, &spec, c(1.0, 0.0), Some(&crep.local_domain)),
                            Some(back.clone()),
                        ),
                        Err(e) => {
                            errors.push(dpw_error("converse", e));
                            (0, 0, f64::NAN, None)
                        }
                    };
                    let p_nc = potential_from_frames(&nc, &dcfg);
                    let p_c = potential_from_frames(&hc, &dcfg);
                    let converse_gap = back.as_ref().map(|b| potential_from_frames(b, &dcfg).gap(&p_nc));
                    timer.lap("duality_potentials");
                    duality = Some(DualitySummary {
                        potential_gap: Some(p_nc.gap(&p_c)),
                        reality_gap: rep.reality_gap,
                        structure: rep.structure,
                        mask_preserved: rep.mask_preserved,
                        failed_points: rep.failed_points,
                        converse_local_domain_size: domain,
                        converse_failed_points: failed,
                        converse_potential_gap: converse_gap,
                        converse_embedding_gap: emb,
                    });
                    potentials.insert("noncompact", p_nc);
                    potentials.insert("compact", p_c);
                    grids.push((Target::Compact, hc));
                }
                Err(e) => errors.push(dpw_error("compact_dual", e)),
            }
        }
    }

    let mut adegree: Vec<i32> = Vec::new();
    for (t, frames) in &grids {
        let name = target_name(*t);
        let pot = potentials
            .remove(name)
            .unwrap_or_else(|| potential_from_frames(frames, &dcfg));
        let roundtrip = (pot.ok_count() > 0).then(|| pot.gap_to(&built.eta));
        timer.lap(&format!("potential_{name}"));
        let flat = flatness_residual(frames, &spec, cfg.flatness_lambdas);
        timer.lap(&format!("flatness_{name}"));
        let uniton = match uniton_number(frames, &spec) {
            Ok(u) => Some(u),
            Err(e) => {
                errors.push(dpw_error(&format!("uniton_{name}"), e));
                None
            }
        };
        timer.lap(&format!("uniton_{name}"));
        let uhl = match extended_solution(frames) {
            Ok(sol) => Some(uhlenbeck_residual(&sol, cfg.uhlenbeck_lambdas)),
            Err(e) => {
                errors.push(dpw_error(&format!("uhlenbeck_{name}"), e));
                None
            }
        };
        timer.lap(&format!("uhlenbeck_{name}"));
        let closed = built.pair.as_ref().map(|p| closed_form_gap(frames, p, &spec, *t));
        if let Some(gap) = closed {
            checks.push(&format!("closed_form_{name}"), gap, tol.closed_form);
        }
        checks.push(
            &format!("potential_roundtrip_{name}"),
            roundtrip.unwrap_or(f64::NAN),
            tol.potential_roundtrip,
        );
        checks.push(&format!("flatness_{name}"), flat.max, tol.flatness);
        if let Some(u) = &uniton {
            checks.push(&format!("uniton_tail_{name}"), u.tail_mass, tol.tail_mass);
            adegree.push(u.ad_degree);
        }
        if let Some(r) = uhl {
            checks.push(&format!("uhlenbeck_{name}"), r, tol.uhlenbeck);
        }
        targets.insert(
            name.to_string(),
            TargetReport {
                mask: MaskStats::of(frames),
                flatness: FlatnessSummary {
                    max_curvature: flat.max_curvature,
                    max_shape: flat.max_shape,
                    max: flat.max,
                },
                potential_roundtrip_gap: roundtrip,
                recovered_potential_shape: pot.shape_residual,
                uniton,
                uhlenbeck_residual: uhl,
                closed_form_gap: closed,
            },
        );
        timer.lap(&format!("checks_{name}"));
    }

    if let Some(d) = &duality {
        checks.push("duality_potential_gap", d.potential_gap.unwrap_or(f64::NAN), tol.duality_potential);
        checks.push("duality_reality", d.reality_gap, tol.reality);
        checks.push(
            "duality_structure",
            d.structure.map_or(f64::NAN, |s| s.max()),
            tol.structure,
        );
        checks.push("duality_mask_preserved", if d.mask_preserved { 0.0 } else { 1.0 }, 0.0);
        checks.push("converse_embedding_gap", d.converse_embedding_gap, tol.converse_embedding);
        if adegree.len() == 2 {
            checks.push("uniton_agreement", (adegree[0] - adegree[1]).abs() as f64, 0.0);
        }
    }

    let surface = built.pair.as_ref().and_then(|pair| {
        let lambdas = cfg.lambda_values();
        let mut s = SurfaceSummary { points: 0, scale: 0.0, max_laplacian: 0.0, max_conformality: 0.0 };
        for &l in &lambdas {
            let mesh = match SurfaceMesh::sample(pair, &geometry, l, tol.surface_exclusion) {
                Ok(m) => m,
                Err(e) => {
                    errors.push(dpw_error("surface", e));
                    return None;
                }
            };
            let scale = mesh.vertices.iter().flatten().flat_map(|x| x.iter().map(|v| v.abs())).fold(0.0, f64::max);
            s.scale = s.scale.max(scale);
            for i in 0..geometry.len() {
                if mesh.vertices[i].is_none() {
                    continue;
                }
                match surface_residuals(pair, geometry.point_at(i), l, geometry.h) {
                    Ok(r) => {
                        s.points += 1;
                        s.max_laplacian = s.max_laplacian.max(r.laplacian / scale.max(f64::MIN_POSITIVE));
                        s.max_conformality = s.max_conformality.max(r.conformality);
                    }
                    Err(e) => {
                        errors.push(dpw_error("surface", e));
                        return None;
                    }
                }
            }
        }
        Some(s)
    });
    if let Some(s) = &surface {
        checks.push("surface_harmonicity", s.max_laplacian, tol.harmonicity);
        checks.push("surface_conformality", s.max_conformality, tol.conformality);
    }
    timer.lap("surface_checks");

    let mut files = Vec::new();
    let dir = &cfg.output.dir;
    let io_err = |e: std::io::Error| ConfigError::Io { path: dir.clone(), source: e };
    fs::create_dir_all(dir).map_err(io_err)?;
    if !opts.check_only {
        if cfg.output.frames_csv && !grids.is_empty() {
            let mut csv = frames_csv_header(spec.dim());
            let mut sorted: Vec<&(Target, FrameGrid)> = grids.iter().collect();
            sorted.sort_by_key(|(t, _)| target_name(*t));
            for (t, f) in sorted {
                frames_csv(&mut csv, target_name(*t), f, &spec);
            }
            fs::write(dir.join("frames.csv"), csv).map_err(io_err)?;
            files.push("frames.csv".to_string());
        }
        if cfg.output.meshes {
            if let Some(pair) = &built.pair {
                match export_mesh(pair, &geometry, &cfg.lambda_values(), tol.surface_exclusion, dir) {
                    Ok(paths) => files.extend(
                        paths.iter().filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())),
                    ),
                    Err(e) => errors.push(dpw_error("mesh_export", e)),
                }
            }
        }
        timer.lap("export");
    }
    files.push("report.json".to_string());

    let passed = errors.is_empty() && checks.list.iter().all(|c| c.pass || !c.enabled);
    let report = RunReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        targets,
        duality,
        surface,
        errors,
        checks: checks.list,
        files,
        passed,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(dir.join("report.json"), json + "\n").map_err(io_err)?;
    let timing = TimingReport {
        unix_time: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        total_seconds: timer.start.elapsed().as_secs_f64(),
        stages: timer.stages,
    };
    let tjson = serde_json::to_string_pretty(&timing).expect("timing serializes");
    fs::write(dir.join("timing.json"), tjson + "\n").map_err(io_err)?;
    Ok(RunOutcome { report, timing })
}

/// One line per check, for terminal output.
pub fn format_checks(report: &RunReport) -> String {
    let mut s = String::new();
    for ch in &report.checks {
        let verdict = match (ch.pass, ch.enabled) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (disabled)",
        };
        let bound = if ch.threshold == 0.0 { "= 0".to_string() } else { format!("< {:.1e}", ch.threshold) };
        let _ = writeln!(s, "{verdict:<16} {:<32} {:>12.3e} {bound}", ch.name, ch.value);
    }
    for e in &report.errors {
        let _ = writeln!(s, "ERROR {e}");
    }
    s
}
