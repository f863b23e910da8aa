//! Per-pixel nonlinear refinement: normals by cross-correlation
//! maximization, the Ward lobe by normalized least squares, albedos by
//! linear least squares, plus correlation-weighted normal fusion.

pub mod objective;
pub mod solver;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Direction3, ShadingFrame};
use crate::raster::Image;

pub use objective::{gradient_check, AlbedoObjective, NormalCorrelation, SigmaObjective};
pub use solver::{
    minimize, minimize_least_squares, Backend, LeastSquares, LineSearchParams, Objective,
    SolveResult, SolveStatus, SolverConfig,
};

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("under-determined problem: {0} usable samples (need 3)")]
    Underdetermined(usize),
    #[error("observation/direction lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("backend does not support this objective")]
    UnsupportedBackend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    DiffuseNormal,
    SpecularNormal,
    Sigma,
    DiffuseAlbedo,
    SpecularAlbedo,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::DiffuseNormal => "diffuse-normal",
            ProblemKind::SpecularNormal => "specular-normal",
            ProblemKind::Sigma => "sigma",
            ProblemKind::DiffuseAlbedo => "diffuse-albedo",
            ProblemKind::SpecularAlbedo => "specular-albedo",
        }
    }
}

/// One pixel's filtered fitting problem: constraint-satisfying samples only
/// (visibility and `n . w_k > 0` applied upstream), with matched directions.
#[derive(Debug, Clone)]
pub struct PixelProblem {
    pub observations: Vec<f64>,
    pub directions: Vec<Direction3>,
    pub omega_o: Direction3,
    pub kind: ProblemKind,
}

impl PixelProblem {
    pub fn new(
        observations: Vec<f64>,
        directions: Vec<Direction3>,
        omega_o: Direction3,
        kind: ProblemKind,
    ) -> Result<PixelProblem, FitError> {
        if observations.len() != directions.len() {
            return Err(FitError::LengthMismatch(observations.len(), directions.len()));
        }
        Ok(PixelProblem { observations, directions, omega_o, kind })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Keeps samples that are visible and in front of the reference normal;
/// the constraint filter applied before every solve.
pub fn filter_samples(
    observations: &[f64],
    directions: &[Direction3],
    visibility: Option<&[bool]>,
    n_ref: Direction3,
) -> (Vec<f64>, Vec<Direction3>) {
    let mut obs = Vec::new();
    let mut dirs = Vec::new();
    for k in 0..observations.len() {
        if let Some(vis) = visibility {
            if !vis[k] {
                continue;
            }
        }
        if directions[k].dot(n_ref) <= 0.0 {
            continue;
        }
        obs.push(observations[k]);
        dirs.push(directions[k]);
    }
    (obs, dirs)
}

#[derive(Debug, Clone, Copy)]
pub struct SolveDiag {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub status: SolveStatus,
}

impl From<&SolveResult> for SolveDiag {
    fn from(r: &SolveResult) -> SolveDiag {
        SolveDiag { iterations: r.iterations, gradient_norm: r.gradient_norm, status: r.status }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NormalFit {
    pub normal: Direction3,
    pub correlation: f64,
    pub diag: SolveDiag,
}

fn refine_normal(
    problem: &PixelProblem,
    n_init: Direction3,
    config: &SolverConfig,
    specular: bool,
) -> Result<NormalFit, FitError> {
    let obj = if specular {
        NormalCorrelation::specular(&problem.directions, &problem.observations, n_init, problem.omega_o)?
    } else {
        NormalCorrelation::diffuse(&problem.directions, &problem.observations, n_init)?
    };
    let res = minimize(&obj, &[0.0, 0.0], config).ok_or(FitError::UnsupportedBackend)?;
    Ok(NormalFit {
        normal: obj.normal_at(&res.x),
        correlation: obj.correlation(&res.x),
        diag: SolveDiag::from(&res),
    })
}

/// Diffuse normal by maximizing the cross-correlation between
/// `[nu_k n . w_k]` and the observed diffuse sequence.
pub fn refine_diffuse_normal(
    problem: &PixelProblem,
    n_init: Direction3,
    config: &SolverConfig,
) -> Result<NormalFit, FitError> {
    refine_normal(problem, n_init, config, false)
}

/// Specular normal by correlating the reflected-ray alignment
/// `[nu_k (w_r^k . w_o)]` with the observed specular sequence.
pub fn refine_specular_normal(
    problem: &PixelProblem,
    n_init: Direction3,
    config: &SolverConfig,
) -> Result<NormalFit, FitError> {
    refine_normal(problem, n_init, config, true)
}

#[derive(Debug, Clone, Copy)]
pub struct SigmaFit {
    pub sigma: [f64; 2],
    pub residual: f64,
    pub diag: SolveDiag,
}

pub const SIGMA_INIT: [f64; 2] = [0.2, 0.2];

/// Ward lobe variance by minimizing the distance between the normalized
/// lobe response and the normalized observation. Positivity of sigma is
/// structural (log parameterization).
pub fn fit_sigma(
    problem: &PixelProblem,
    frame: &ShadingFrame,
    config: &SolverConfig,
) -> Result<SigmaFit, FitError> {
    fit_sigma_from(problem, frame, SIGMA_INIT, config)
}

pub fn fit_sigma_from(
    problem: &PixelProblem,
    frame: &ShadingFrame,
    sigma0: [f64; 2],
    config: &SolverConfig,
) -> Result<SigmaFit, FitError> {
    let obj = SigmaObjective::new(&problem.directions, &problem.observations, problem.omega_o, frame)?;
    let res = minimize_least_squares(&obj, &SigmaObjective::params_for(sigma0), config);
    Ok(SigmaFit {
        sigma: SigmaObjective::sigma_at(&res.x),
        residual: res.value,
        diag: SolveDiag::from(&res),
    })
}

/// Anisotropy and roughness from the lobe variances:
/// `(sx - sy) / (sx + sy)` and `sx^2 + sy^2`.
pub fn derive_anisotropy_roughness(sigma: [f64; 2]) -> (f64, f64) {
    let (sx, sy) = (sigma[0], sigma[1]);
    ((sx - sy) / (sx + sy), sx * sx + sy * sy)
}

/// Canonical component order for reported lobes: sigma_x >= sigma_y.
pub fn canonicalize_sigma(sigma: [f64; 2]) -> [f64; 2] {
    if sigma[0] >= sigma[1] {
        sigma
    } else {
        [sigma[1], sigma[0]]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AlbedoFit {
    pub rho: f64,
    /// Negative least-squares solutions clamp to zero and flag.
    pub clamped: bool,
    pub diag: SolveDiag,
}

/// Albedo by linear least squares against a geometric basis: `n . w_k` for
/// diffuse (per channel), the fitted Ward lobe response for specular
/// (luminance). Iterative backends start from `rho_init`; their optimum is
/// the closed-form scalar.
pub fn refine_albedo(
    problem: &PixelProblem,
    n_hat: Direction3,
    sigma: Option<([f64; 2], ShadingFrame)>,
    rho_init: f64,
    config: &SolverConfig,
) -> Result<AlbedoFit, FitError> {
    let basis: Vec<f64> = match (problem.kind, &sigma) {
        (ProblemKind::SpecularAlbedo, Some((s, frame))) => {
            let lobe = crate::synth::WardLobeParams::new(s[0], s[1], *frame)
                .map_err(|_| FitError::Underdetermined(0))?;
            problem
                .directions
                .iter()
                .map(|wi| crate::synth::ward_brdf(*wi, problem.omega_o, &lobe).unwrap_or(0.0))
                .collect()
        }
        _ => problem.directions.iter().map(|wi| wi.dot(n_hat)).collect(),
    };
    let obj = AlbedoObjective::new(basis, problem.observations.clone())?;
    let res = minimize_least_squares(&obj, &[rho_init], config);
    let rho = res.x[0];
    Ok(AlbedoFit {
        rho: rho.max(0.0),
        clamped: rho < 0.0,
        diag: SolveDiag::from(&res),
    })
}

/// Closed-form scalar least squares for an explicit basis; the oracle the
/// configured backends are checked against.
pub fn closed_form_albedo(basis: &[f64], obs: &[f64]) -> Result<f64, FitError> {
    Ok(AlbedoObjective::new(basis.to_vec(), obs.to_vec())?.closed_form())
}

/// Correlation-weighted normal fusion. Weights are the non-negative
/// clamped correlation coefficients; a degenerate weight pair falls back to
/// the higher-correlation normal.
pub fn fuse_normal_pixel(
    n_d: Direction3,
    n_s: Direction3,
    corr_d: f64,
    corr_s: f64,
) -> Direction3 {
    let w_d = corr_d.max(0.0);
    let w_s = corr_s.max(0.0);
    let fallback = || if corr_d >= corr_s { n_d } else { n_s };
    let sum = w_d + w_s;
    if sum < 1e-12 {
        return fallback();
    }
    let blended = n_d.as_vec().scale(w_d / sum) + n_s.as_vec().scale(w_s / sum);
    Direction3::from_vec(blended).unwrap_or_else(|_| fallback())
}

/// Map-level fusion over normal and correlation maps. Pixels whose normals
/// are unset (zero vectors, from degenerate estimates) fall back to the
/// other side's normal.
pub fn fuse_normals(
    n_d: &Image,
    n_s: &Image,
    corr_d: &Image,
    corr_s: &Image,
) -> Image {
    let (w, h) = (n_d.width(), n_d.height());
    let mut fused = Image::zeros(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let vd = n_d.rgb(x, y);
            let vs = n_s.rgb(x, y);
            let nd = Direction3::new(vd[0], vd[1], vd[2]).ok();
            let ns = Direction3::new(vs[0], vs[1], vs[2]).ok();
            let cd = corr_d.gray(x, y);
            let cs = corr_s.gray(x, y);
            let out = match (nd, ns) {
                (Some(nd), Some(ns)) => Some(fuse_normal_pixel(nd, ns, cd, cs)),
                (Some(nd), None) => Some(nd),
                (None, Some(ns)) => Some(ns),
                (None, None) => None,
            };
            if let Some(n) = out {
                fused.set_rgb(x, y, [n.x(), n.y(), n.z()]);
            }
        }
    }
    fused
}

/// Refined per-pixel material bundle produced by the optimization stage.
#[derive(Debug, Clone)]
pub struct RefinedMaterial {
    pub n_d: Image,
    pub n_s: Image,
    pub n_fused: Image,
    /// (sigma_x, sigma_y, 0), canonicalized to sigma_x >= sigma_y.
    pub sigma: Image,
    pub anisotropy: Image,
    pub roughness: Image,
    pub rho_d: Image,
    pub rho_s: Image,
    pub correlation_d: Image,
    pub correlation_s: Image,
}

/// One batch entry: a problem plus its initialization.
#[derive(Debug, Clone)]
pub enum BatchTask {
    DiffuseNormal { problem: PixelProblem, n_init: Direction3 },
    SpecularNormal { problem: PixelProblem, n_init: Direction3 },
    Sigma { problem: PixelProblem, frame: ShadingFrame },
    Albedo {
        problem: PixelProblem,
        n_hat: Direction3,
        sigma: Option<([f64; 2], ShadingFrame)>,
        rho_init: f64,
    },
}

impl BatchTask {
    pub fn kind(&self) -> ProblemKind {
        match self {
            BatchTask::DiffuseNormal { .. } => ProblemKind::DiffuseNormal,
            BatchTask::SpecularNormal { .. } => ProblemKind::SpecularNormal,
            BatchTask::Sigma { .. } => ProblemKind::Sigma,
            BatchTask::Albedo { problem, .. } => problem.kind,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchItem {
    pub pixel: usize,
    pub task: BatchTask,
}

#[derive(Debug, Clone)]
pub enum TaskOutput {
    Normal { normal: Direction3, correlation: f64 },
    Sigma { sigma: [f64; 2] },
    Albedo { rho: f64, clamped: bool },
}

#[derive(Debug, Clone)]
pub struct BatchRecord {
    pub pixel: usize,
    pub kind: ProblemKind,
    pub backend: Backend,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub status: String,
    pub output: Option<TaskOutput>,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub records: Vec<BatchRecord>,
    pub wall: Duration,
}

impl BatchReport {
    pub fn mean_gradient_norm(&self) -> f64 {
        let solved: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.output.is_some())
            .map(|r| r.gradient_norm)
            .collect();
        if solved.is_empty() {
            return 0.0;
        }
        solved.iter().sum::<f64>() / solved.len() as f64
    }
}

fn run_task(task: &BatchTask, config: &SolverConfig) -> (Result<TaskOutput, FitError>, Option<SolveDiag>) {
    match task {
        BatchTask::DiffuseNormal { problem, n_init } => {
            match refine_diffuse_normal(problem, *n_init, config) {
                Ok(f) => (
                    Ok(TaskOutput::Normal { normal: f.normal, correlation: f.correlation }),
                    Some(f.diag),
                ),
                Err(e) => (Err(e), None),
            }
        }
        BatchTask::SpecularNormal { problem, n_init } => {
            match refine_specular_normal(problem, *n_init, config) {
                Ok(f) => (
                    Ok(TaskOutput::Normal { normal: f.normal, correlation: f.correlation }),
                    Some(f.diag),
                ),
                Err(e) => (Err(e), None),
            }
        }
        BatchTask::Sigma { problem, frame } => match fit_sigma(problem, frame, config) {
            Ok(f) => (Ok(TaskOutput::Sigma { sigma: f.sigma }), Some(f.diag)),
            Err(e) => (Err(e), None),
        },
        BatchTask::Albedo { problem, n_hat, sigma, rho_init } => {
            match refine_albedo(problem, *n_hat, *sigma, *rho_init, config) {
                Ok(f) => (Ok(TaskOutput::Albedo { rho: f.rho, clamped: f.clamped }), Some(f.diag)),
                Err(e) => (Err(e), None),
            }
        }
    }
}

/// Runs the configured backend over a batch of independent per-pixel
/// problems. Each solve is deterministic and order-independent; failed
/// pixels are flagged in their record, never fatal for the batch.
pub fn solve_batch(items: &[BatchItem], config: &SolverConfig) -> BatchReport {
    let start = Instant::now();
    let records: Vec<BatchRecord> = items
        .par_iter()
        .map(|item| {
            let (outcome, diag) = run_task(&item.task, config);
            match (outcome, diag) {
                (Ok(output), Some(diag)) => BatchRecord {
                    pixel: item.pixel,
                    kind: item.task.kind(),
                    backend: config.backend,
                    iterations: diag.iterations,
                    gradient_norm: diag.gradient_norm,
                    status: diag.status.name().to_string(),
                    output: Some(output),
                },
                (Err(e), _) => BatchRecord {
                    pixel: item.pixel,
                    kind: item.task.kind(),
                    backend: config.backend,
                    iterations: 0,
                    gradient_norm: f64::NAN,
                    status: match e {
                        FitError::Underdetermined(_) => "underdetermined".to_string(),
                        FitError::UnsupportedBackend => "unsupported-backend".to_string(),
                        FitError::LengthMismatch(_, _) => "length-mismatch".to_string(),
                    },
                    output: None,
                },
                (Ok(_), None) => unreachable!("success always carries diagnostics"),
            }
        })
        .collect();
    BatchReport { records, wall: start.elapsed() }
}
