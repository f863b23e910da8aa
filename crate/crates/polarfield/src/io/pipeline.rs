//! Staged pipeline: separate -> preprocess -> estimate -> optimize, with
//! per-stage dumps so any contiguous stage range can resume from a previous
//! run's output directory and reproduce the single-shot result bit for bit.

use std::path::Path;

use crate::capture::{LightRig, PolarizedOlatStack};
use crate::estimate::{initial_estimates, InitialEstimates};
use crate::geometry::Direction3;
use crate::optimize::{
    canonicalize_sigma, derive_anisotropy_roughness, fuse_normals, solve_batch, BatchItem,
    BatchReport, BatchTask, PixelProblem, ProblemKind, RefinedMaterial, TaskOutput,
};
use crate::preprocess::{
    clean_stack, default_zeta, geometry_maps, shadow_compensate, CleanStack, GeometryMaps,
};
use crate::raster::{luminance, FrameStack, Image};
use crate::synth::{presets, render_olat, synthesize_gradient_images, ArtifactConfig};

use super::bundle::{
    map_names, read_capture_stack, read_map, read_stack, write_diagnostics_csv, write_map,
    write_stack, Provenance, SolverEntry,
};
use super::manifest::{CaptureManifest, RawCapture, RawManifest, ViewMode};
use super::{fnv1a64, IoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Separate,
    Preprocess,
    Estimate,
    Optimize,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Separate, Stage::Preprocess, Stage::Estimate, Stage::Optimize];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Separate => "separate",
            Stage::Preprocess => "preprocess",
            Stage::Estimate => "estimate",
            Stage::Optimize => "optimize",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Some(match s {
            "separate" => Stage::Separate,
            "preprocess" => Stage::Preprocess,
            "estimate" => Stage::Estimate,
            "optimize" => Stage::Optimize,
            _ => return None,
        })
    }
}

/// A contiguous, ordered range of pipeline stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSet {
    stages: Vec<Stage>,
}

impl StageSet {
    pub fn all() -> StageSet {
        StageSet { stages: Stage::ALL.to_vec() }
    }

    pub fn new(mut stages: Vec<Stage>) -> Result<StageSet, IoError> {
        stages.sort();
        stages.dedup();
        if stages.is_empty() {
            return Err(IoError::Invalid("empty stage set".into()));
        }
        let first = Stage::ALL.iter().position(|s| *s == stages[0]).unwrap();
        for (i, s) in stages.iter().enumerate() {
            if Stage::ALL[first + i] != *s {
                return Err(IoError::Invalid(
                    "stages must form a contiguous range of separate,preprocess,estimate,optimize"
                        .into(),
                ));
            }
        }
        Ok(StageSet { stages })
    }

    pub fn parse(spec: &str) -> Result<StageSet, IoError> {
        let stages: Result<Vec<Stage>, IoError> = spec
            .split(',')
            .map(|tok| {
                Stage::parse(tok.trim())
                    .ok_or_else(|| IoError::Invalid(format!("unknown stage {tok:?}")))
            })
            .collect();
        StageSet::new(stages?)
    }

    pub fn contains(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    pub fn first(&self) -> Stage {
        self.stages[0]
    }

    pub fn last(&self) -> Stage {
        *self.stages.last().unwrap()
    }

    pub fn names(&self) -> Vec<String> {
        self.stages.iter().map(|s| s.name().to_string()).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for the per-pixel stages; `None` uses the rayon
    /// default. Results are identical for any value.
    pub threads: Option<usize>,
    /// Also dump the Algorithm-1 removed-sample masks as 0/1 stacks.
    pub dump_removed_masks: bool,
    /// When set, also write shadow-compensated albedo maps `rho / max(tau, floor)`.
    pub shadow_floor: Option<f64>,
}

/// In-memory results of the stages that ran.
#[derive(Debug, Default)]
pub struct PipelineOutput {
    pub separated: Option<(FrameStack, FrameStack)>,
    pub zeta: Option<(Image, Image)>,
    pub clean: Option<CleanStack>,
    pub geometry: Option<GeometryMaps>,
    pub initial: Option<InitialEstimates>,
    pub refined: Option<RefinedMaterial>,
    pub reports: Vec<BatchReport>,
}

/// The per-pixel view direction map from the manifest's camera model.
pub fn omega_o_map(manifest: &CaptureManifest) -> Result<Image, IoError> {
    let (w, h) = (manifest.width, manifest.height);
    let mut map = Image::zeros(w, h, 3);
    match manifest.view {
        ViewMode::Constant(d) => {
            for y in 0..h {
                for x in 0..w {
                    map.set_rgb(x, y, [d.x(), d.y(), d.z()]);
                }
            }
        }
        ViewMode::Pinhole => {
            for y in 0..h {
                for x in 0..w {
                    let d = manifest
                        .pose
                        .omega_o_for_pixel(x, y)
                        .map_err(|e| IoError::Invalid(e.to_string()))?;
                    map.set_rgb(x, y, [d.x(), d.y(), d.z()]);
                }
            }
        }
    }
    Ok(map)
}

fn direction_at(map: &Image, x: usize, y: usize) -> Option<Direction3> {
    let v = map.rgb(x, y);
    Direction3::new(v[0], v[1], v[2]).ok()
}

fn mask_to_stack(mask: &crate::preprocess::SampleMask, w: usize, h: usize) -> FrameStack {
    let mut stack = FrameStack::zeros(mask.lights(), w, h, 3);
    for k in 0..mask.lights() {
        for y in 0..h {
            for x in 0..w {
                let v = [
                    mask.get(k, x, y, 0) as u8 as f64,
                    mask.get(k, x, y, 1) as u8 as f64,
                    mask.get(k, x, y, 2) as u8 as f64,
                ];
                stack.frame_mut(k).set_rgb(x, y, v);
            }
        }
    }
    stack
}

struct OptimizeInputs<'a> {
    clean: &'a CleanStack,
    zeta_d: &'a Image,
    zeta_s: &'a Image,
    initial: &'a InitialEstimates,
    rig: &'a LightRig,
    omega_o: &'a Image,
    manifest: &'a CaptureManifest,
}

fn luminance_signal(stack: &FrameStack, x: usize, y: usize) -> Vec<f64> {
    stack.signal_at(x, y).into_iter().map(luminance).collect()
}

fn run_optimize(inputs: OptimizeInputs, reports: &mut Vec<BatchReport>) -> Result<(RefinedMaterial, GeometryMaps), IoError> {
    let OptimizeInputs { clean, zeta_d, zeta_s, initial, rig, omega_o, manifest } = inputs;
    let (w, h) = (clean.diffuse.width(), clean.diffuse.height());
    let dirs = rig.directions();

    // pass-1 geometry with the initialized normals drives sample filtering
    let geo1 = geometry_maps(clean, &initial.n_d, &initial.n_s, zeta_d, zeta_s, rig)
        .map_err(|e| IoError::Invalid(e.to_string()))?;

    // ---- normal refinement -------------------------------------------------
    let mut diffuse_items = Vec::new();
    let mut specular_items = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if let Some(n_init) = direction_at(&initial.n_d, x, y) {
                let obs_all = luminance_signal(&clean.diffuse, x, y);
                let vis = geo1.nu_d.pixel(x, y);
                let mut obs = Vec::new();
                let mut kept = Vec::new();
                for k in 0..dirs.len() {
                    if vis[k] && dirs[k].dot(n_init) > 0.0 {
                        obs.push(obs_all[k]);
                        kept.push(dirs[k]);
                    }
                }
                if let Ok(problem) = PixelProblem::new(
                    obs,
                    kept,
                    direction_at(omega_o, x, y).unwrap_or(Direction3::PLUS_Z),
                    ProblemKind::DiffuseNormal,
                ) {
                    diffuse_items.push(BatchItem {
                        pixel: p,
                        task: BatchTask::DiffuseNormal { problem, n_init },
                    });
                }
            }
            if initial.degenerate_s[p] || initial.backfacing_s[p] {
                continue;
            }
            if let Some(n_init) = direction_at(&initial.n_s, x, y) {
                let obs_all = luminance_signal(&clean.specular, x, y);
                let vis = geo1.nu_s.pixel(x, y);
                let mut obs = Vec::new();
                let mut kept = Vec::new();
                for k in 0..dirs.len() {
                    if vis[k] && dirs[k].dot(n_init) > 0.0 {
                        obs.push(obs_all[k]);
                        kept.push(dirs[k]);
                    }
                }
                if let Ok(problem) = PixelProblem::new(
                    obs,
                    kept,
                    direction_at(omega_o, x, y).unwrap_or(Direction3::PLUS_Z),
                    ProblemKind::SpecularNormal,
                ) {
                    specular_items.push(BatchItem {
                        pixel: p,
                        task: BatchTask::SpecularNormal { problem, n_init },
                    });
                }
            }
        }
    }

    let mut n_d = initial.n_d.clone();
    let mut n_s = initial.n_s.clone();
    let mut corr_d = Image::zeros(w, h, 1);
    let mut corr_s = Image::zeros(w, h, 1);

    let report_d = solve_batch(&diffuse_items, &manifest.solvers.config(ProblemKind::DiffuseNormal));
    for r in &report_d.records {
        if let Some(TaskOutput::Normal { normal, correlation }) = &r.output {
            let (x, y) = (r.pixel % w, r.pixel / w);
            n_d.set_rgb(x, y, [normal.x(), normal.y(), normal.z()]);
            corr_d.set_gray(x, y, *correlation);
        }
    }
    let report_s =
        solve_batch(&specular_items, &manifest.solvers.config(ProblemKind::SpecularNormal));
    for r in &report_s.records {
        if let Some(TaskOutput::Normal { normal, correlation }) = &r.output {
            let (x, y) = (r.pixel % w, r.pixel / w);
            n_s.set_rgb(x, y, [normal.x(), normal.y(), normal.z()]);
            corr_s.set_gray(x, y, *correlation);
        }
    }

    let n_fused = fuse_normals(&n_d, &n_s, &corr_d, &corr_s);

    // geometry maps recomputed once with the fused normals
    let geo2 = geometry_maps(clean, &n_fused, &n_fused, zeta_d, zeta_s, rig)
        .map_err(|e| IoError::Invalid(e.to_string()))?;

    // ---- sigma -------------------------------------------------------------
    let mut sigma_items = Vec::new();
    let mut frames = vec![None; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let Some(ns) = direction_at(&n_s, x, y) else { continue };
            if initial.degenerate_s[p] || initial.backfacing_s[p] {
                continue;
            }
            let frame = crate::geometry::ShadingFrame::from_normal(ns);
            frames[p] = Some(frame);
            let obs_all = luminance_signal(&clean.specular, x, y);
            let vis = geo2.nu_s.pixel(x, y);
            let mut obs = Vec::new();
            let mut kept = Vec::new();
            for k in 0..dirs.len() {
                if vis[k] && dirs[k].dot(ns) > 0.0 {
                    obs.push(obs_all[k]);
                    kept.push(dirs[k]);
                }
            }
            if let Ok(problem) = PixelProblem::new(
                obs,
                kept,
                direction_at(omega_o, x, y).unwrap_or(Direction3::PLUS_Z),
                ProblemKind::Sigma,
            ) {
                sigma_items.push(BatchItem { pixel: p, task: BatchTask::Sigma { problem, frame } });
            }
        }
    }
    let report_sigma = solve_batch(&sigma_items, &manifest.solvers.config(ProblemKind::Sigma));
    let mut sigma_map = Image::zeros(w, h, 3);
    let mut anisotropy = Image::zeros(w, h, 1);
    let mut roughness = Image::zeros(w, h, 1);
    let mut sigma_raw: Vec<Option<[f64; 2]>> = vec![None; w * h];
    for r in &report_sigma.records {
        if let Some(TaskOutput::Sigma { sigma }) = &r.output {
            let (x, y) = (r.pixel % w, r.pixel / w);
            sigma_raw[r.pixel] = Some(*sigma);
            let canon = canonicalize_sigma(*sigma);
            let (zeta, gamma) = derive_anisotropy_roughness(canon);
            sigma_map.set_rgb(x, y, [canon[0], canon[1], 0.0]);
            anisotropy.set_gray(x, y, zeta);
            roughness.set_gray(x, y, gamma);
        }
    }

    // ---- albedo ------------------------------------------------------------
    // Eq. 16/17 recover rho * L0 * A0 (the basis is unitless); kappa converts
    // the fitted scale into albedo units.
    let kappa = rig.kappa();
    let light_scale = rig.light_scale();

    let mut rho_d = Image::zeros(w, h, 3);
    for channel in 0..3 {
        let mut items = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let Some(nd) = direction_at(&n_d, x, y) else { continue };
                let sig = clean.diffuse.signal_at(x, y);
                let zd = zeta_d.rgb(x, y);
                let mut obs = Vec::new();
                let mut kept = Vec::new();
                for k in 0..dirs.len() {
                    let above = sig[k].iter().zip(&zd).any(|(v, z)| v > z);
                    if above && dirs[k].dot(nd) > 0.0 {
                        obs.push(sig[k][channel]);
                        kept.push(dirs[k]);
                    }
                }
                if let Ok(problem) = PixelProblem::new(
                    obs,
                    kept,
                    direction_at(omega_o, x, y).unwrap_or(Direction3::PLUS_Z),
                    ProblemKind::DiffuseAlbedo,
                ) {
                    let rho_init = initial.rho_d.rgb(x, y)[channel] * light_scale;
                    items.push(BatchItem {
                        pixel: p,
                        task: BatchTask::Albedo { problem, n_hat: nd, sigma: None, rho_init },
                    });
                }
            }
        }
        let report = solve_batch(&items, &manifest.solvers.config(ProblemKind::DiffuseAlbedo));
        for r in &report.records {
            if let Some(TaskOutput::Albedo { rho, .. }) = &r.output {
                let (x, y) = (r.pixel % w, r.pixel / w);
                let mut v = rho_d.rgb(x, y);
                v[channel] = rho * kappa;
                rho_d.set_rgb(x, y, v);
            }
        }
        reports.push(report);
    }

    let mut specular_albedo_items = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let (Some(ns), Some(sigma), Some(frame)) =
                (direction_at(&n_s, x, y), sigma_raw[p], frames[p])
            else {
                continue;
            };
            let sig = clean.specular.signal_at(x, y);
            let zs = zeta_s.rgb(x, y);
            let mut obs = Vec::new();
            let mut kept = Vec::new();
            for k in 0..dirs.len() {
                let above = sig[k].iter().zip(&zs).any(|(v, z)| v > z);
                if above && dirs[k].dot(ns) > 0.0 {
                    obs.push(luminance(sig[k]));
                    kept.push(dirs[k]);
                }
            }
            if let Ok(problem) = PixelProblem::new(
                obs,
                kept,
                direction_at(omega_o, x, y).unwrap_or(Direction3::PLUS_Z),
                ProblemKind::SpecularAlbedo,
            ) {
                let rho_init = initial.rho_s.gray(x, y) * light_scale;
                specular_albedo_items.push(BatchItem {
                    pixel: p,
                    task: BatchTask::Albedo {
                        problem,
                        n_hat: ns,
                        sigma: Some((sigma, frame)),
                        rho_init,
                    },
                });
            }
        }
    }
    let report_rho_s =
        solve_batch(&specular_albedo_items, &manifest.solvers.config(ProblemKind::SpecularAlbedo));
    let mut rho_s = Image::zeros(w, h, 1);
    for r in &report_rho_s.records {
        if let Some(TaskOutput::Albedo { rho, .. }) = &r.output {
            let (x, y) = (r.pixel % w, r.pixel / w);
            rho_s.set_gray(x, y, rho * kappa);
        }
    }

    reports.push(report_d);
    reports.push(report_s);
    reports.push(report_sigma);
    reports.push(report_rho_s);

    Ok((
        RefinedMaterial {
            n_d,
            n_s,
            n_fused,
            sigma: sigma_map,
            anisotropy,
            roughness,
            rho_d,
            rho_s,
            correlation_d: corr_d,
            correlation_s: corr_s,
        },
        geo2,
    ))
}

fn write_geometry(dir: &Path, geo: &GeometryMaps, w: usize, h: usize) -> Result<(), IoError> {
    write_map(dir, map_names::NU_D, &geo.nu_d.fraction_map(w, h))?;
    write_map(dir, map_names::NU_S, &geo.nu_s.fraction_map(w, h))?;
    write_map(dir, map_names::TAU_D, &geo.tau_d)?;
    write_map(dir, map_names::TAU_S, &geo.tau_s)?;
    write_map(dir, map_names::VARRHO_D, &geo.varrho_d)?;
    write_map(dir, map_names::VARRHO_S, &geo.varrho_s)?;
    Ok(())
}

fn compute_initial(
    clean: &CleanStack,
    rig: &LightRig,
    omega_o: &Image,
) -> Result<InitialEstimates, IoError> {
    let gradients_d = synthesize_gradient_images(&clean.diffuse, rig)
        .map_err(|e| IoError::Invalid(e.to_string()))?;
    let gradients_s = synthesize_gradient_images(&clean.specular, rig)
        .map_err(|e| IoError::Invalid(e.to_string()))?;
    initial_estimates(&clean.diffuse, &clean.specular, &gradients_d, &gradients_s, rig, omega_o)
        .map_err(|e| IoError::Invalid(e.to_string()))
}

fn load_initial(dir: &Path, omega_o: &Image) -> Result<InitialEstimates, IoError> {
    let rho_d = read_map(dir, map_names::RHO_D_INIT)?;
    let rho_s = read_map(dir, map_names::RHO_S_INIT)?;
    let n_d = read_map(dir, map_names::N_D_INIT)?;
    let n_s = read_map(dir, map_names::N_S_INIT)?;
    let (w, h) = (rho_d.width(), rho_d.height());
    let mut degenerate_d = vec![false; w * h];
    let mut degenerate_s = vec![false; w * h];
    let mut backfacing_s = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            degenerate_d[p] = direction_at(&n_d, x, y).is_none();
            match direction_at(&n_s, x, y) {
                None => degenerate_s[p] = true,
                Some(ns) => {
                    let wo = direction_at(omega_o, x, y).unwrap_or(Direction3::PLUS_Z);
                    backfacing_s[p] = ns.dot(wo) <= 0.0;
                }
            }
        }
    }
    Ok(InitialEstimates { rho_d, rho_s, n_d, n_s, degenerate_d, degenerate_s, backfacing_s })
}

fn provenance_for(
    manifest: &CaptureManifest,
    stages: &StageSet,
    out_dir: &Path,
) -> Provenance {
    // stage lists accumulate across split invocations so a resumed run ends
    // with the same provenance as a single-shot run
    let mut stage_names: Vec<String> = match Provenance::read(out_dir) {
        Ok(prev) if prev.manifest_hash == fnv1a64(manifest.raw_text.as_bytes()) => prev.stages,
        _ => Vec::new(),
    };
    for s in stages.names() {
        if !stage_names.contains(&s) {
            stage_names.push(s);
        }
    }
    let order = |n: &String| Stage::ALL.iter().position(|s| s.name() == n).unwrap_or(usize::MAX);
    stage_names.sort_by_key(order);
    Provenance {
        tool: "polarfield".into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        manifest_hash: fnv1a64(manifest.raw_text.as_bytes()),
        stages: stage_names,
        epsilon: manifest.epsilon,
        iterations: manifest.iterations,
        solvers: manifest
            .solvers
            .entries()
            .map(|(kind, c)| SolverEntry {
                kind: kind.to_string(),
                backend: c.backend.name().to_string(),
                max_iterations: c.max_iterations,
                gradient_tolerance: c.gradient_tolerance,
            })
            .collect(),
    }
}

/// Runs the requested stage range. The first stage pulls its inputs either
/// from the manifest's capture files (`separate`) or from a previous dump in
/// `out_dir`; later stages consume in-memory results. Identical inputs give
/// bitwise-identical bundles for any thread count.
pub fn run_pipeline(
    manifest: &CaptureManifest,
    stages: &StageSet,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<PipelineOutput, IoError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.unwrap_or(0))
        .build()
        .map_err(|e| IoError::Invalid(e.to_string()))?;
    pool.install(|| run_pipeline_inner(manifest, stages, out_dir, options))
}

fn run_pipeline_inner(
    manifest: &CaptureManifest,
    stages: &StageSet,
    out_dir: &Path,
    options: &RunOptions,
) -> Result<PipelineOutput, IoError> {
    std::fs::create_dir_all(out_dir).map_err(IoError::Io)?;
    let mut output = PipelineOutput::default();
    let omega_o = omega_o_map(manifest)?;
    let n = manifest.lights;

    // ---- separate ----------------------------------------------------------
    let mut separated: Option<(FrameStack, FrameStack)> = None;
    let mut zeta: Option<(Image, Image)> = None;
    if stages.contains(Stage::Separate) {
        let capture = manifest.capture.as_ref().ok_or_else(|| {
            IoError::Invalid("manifest has no [capture] block to separate".into())
                .in_stage("separate")
        })?;
        let cross = read_capture_stack(&capture.cross).map_err(|e| e.in_stage("separate"))?;
        let parallel = read_capture_stack(&capture.parallel).map_err(|e| e.in_stage("separate"))?;
        let ambient = match &capture.ambient {
            Some(p) => Some(super::pfm::read_pfm(p).map_err(|e| e.in_stage("separate"))?),
            None => None,
        };
        let stack = PolarizedOlatStack {
            cross,
            parallel,
            rig: manifest.rig.clone(),
            pose: manifest.pose.clone(),
            ambient: ambient
                .clone()
                .unwrap_or_else(|| Image::zeros(manifest.width, manifest.height, 3)),
        };
        if stack.cross.len() != n {
            return Err(IoError::DimensionMismatch(format!(
                "capture has {} frames, manifest declares {n}",
                stack.cross.len()
            ))
            .in_stage("separate"));
        }
        let (d, s) = stack.separate();
        // ambient threshold: the separation doubles ambient in the diffuse
        // sequence; the specular difference cancels it
        let zeta_d = match &ambient {
            Some(a) => {
                let mut z = a.clone();
                for v in z.data_mut() {
                    *v *= 2.0;
                }
                z
            }
            None => default_zeta(&d),
        };
        let zeta_s = default_zeta(&s);
        write_stack(out_dir, map_names::SEPARATED_DIFFUSE, &d)
            .and_then(|_| write_stack(out_dir, map_names::SEPARATED_SPECULAR, &s))
            .and_then(|_| write_map(out_dir, map_names::ZETA_D, &zeta_d))
            .and_then(|_| write_map(out_dir, map_names::ZETA_S, &zeta_s))
            .map_err(|e| e.in_stage("separate"))?;
        separated = Some((d, s));
        zeta = Some((zeta_d, zeta_s));
    } else if stages.first() == Stage::Preprocess {
        let d = read_stack(out_dir, map_names::SEPARATED_DIFFUSE, n)
            .map_err(|e| e.in_stage("preprocess"))?;
        let s = read_stack(out_dir, map_names::SEPARATED_SPECULAR, n)
            .map_err(|e| e.in_stage("preprocess"))?;
        separated = Some((d, s));
    }
    let needs_zeta = stages.contains(Stage::Preprocess) || stages.contains(Stage::Optimize);
    if needs_zeta && zeta.is_none() {
        let zd = read_map(out_dir, map_names::ZETA_D)
            .map_err(|e| e.in_stage(stages.first().name()))?;
        let zs = read_map(out_dir, map_names::ZETA_S)
            .map_err(|e| e.in_stage(stages.first().name()))?;
        zeta = Some((zd, zs));
    }

    // ---- preprocess ---------------------------------------------------------
    let mut clean: Option<CleanStack> = None;
    if stages.contains(Stage::Preprocess) {
        let (d, s) = separated
            .as_ref()
            .ok_or_else(|| IoError::Invalid("separate stage output missing".into()))?;
        let cleaned = clean_stack(d, s, manifest.epsilon, manifest.iterations)
            .map_err(|e| IoError::Invalid(e.to_string()).in_stage("preprocess"))?;
        write_stack(out_dir, map_names::CLEAN_DIFFUSE, &cleaned.diffuse)
            .and_then(|_| write_stack(out_dir, map_names::CLEAN_SPECULAR, &cleaned.specular))
            .map_err(|e| e.in_stage("preprocess"))?;
        if options.dump_removed_masks {
            let (w, h) = (cleaned.diffuse.width(), cleaned.diffuse.height());
            write_stack(out_dir, map_names::REMOVED_DIFFUSE, &mask_to_stack(&cleaned.removed_diffuse, w, h))
                .and_then(|_| {
                    write_stack(
                        out_dir,
                        map_names::REMOVED_SPECULAR,
                        &mask_to_stack(&cleaned.removed_specular, w, h),
                    )
                })
                .map_err(|e| e.in_stage("preprocess"))?;
        }
        // geometry maps need normals: use the initialization internally
        let (zeta_d, zeta_s) = zeta.as_ref().expect("zeta available by construction");
        let initial = compute_initial(&cleaned, &manifest.rig, &omega_o)
            .map_err(|e| e.in_stage("preprocess"))?;
        let geo = geometry_maps(&cleaned, &initial.n_d, &initial.n_s, zeta_d, zeta_s, &manifest.rig)
            .map_err(|e| IoError::Invalid(e.to_string()).in_stage("preprocess"))?;
        write_geometry(out_dir, &geo, manifest.width, manifest.height)
            .map_err(|e| e.in_stage("preprocess"))?;
        output.geometry = Some(geo);
        clean = Some(cleaned);
    } else if stages.first() >= Stage::Estimate {
        let d = read_stack(out_dir, map_names::CLEAN_DIFFUSE, n)
            .map_err(|e| e.in_stage(stages.first().name()))?;
        let s = read_stack(out_dir, map_names::CLEAN_SPECULAR, n)
            .map_err(|e| e.in_stage(stages.first().name()))?;
        let (w, h) = (d.width(), d.height());
        clean = Some(CleanStack {
            removed_diffuse: crate::preprocess::SampleMask::empty(n, w, h),
            removed_specular: crate::preprocess::SampleMask::empty(n, w, h),
            diffuse: d,
            specular: s,
        });
    }

    // ---- estimate ------------------------------------------------------------
    let mut initial: Option<InitialEstimates> = None;
    if stages.contains(Stage::Estimate) {
        let cleaned = clean.as_ref().ok_or_else(|| IoError::Invalid("clean stack missing".into()))?;
        let est = compute_initial(cleaned, &manifest.rig, &omega_o)
            .map_err(|e| e.in_stage("estimate"))?;
        write_map(out_dir, map_names::RHO_D_INIT, &est.rho_d)
            .and_then(|_| write_map(out_dir, map_names::RHO_S_INIT, &est.rho_s))
            .and_then(|_| write_map(out_dir, map_names::N_D_INIT, &est.n_d))
            .and_then(|_| write_map(out_dir, map_names::N_S_INIT, &est.n_s))
            .map_err(|e| e.in_stage("estimate"))?;
        initial = Some(est);
    } else if stages.contains(Stage::Optimize) {
        initial = Some(load_initial(out_dir, &omega_o).map_err(|e| e.in_stage("optimize"))?);
    }

    // ---- optimize -------------------------------------------------------------
    if stages.contains(Stage::Optimize) {
        let cleaned = clean.as_ref().ok_or_else(|| IoError::Invalid("clean stack missing".into()))?;
        let est = initial.as_ref().expect("initial estimates prepared above");
        let (zeta_d, zeta_s) = zeta.as_ref().expect("zeta prepared above");
        let (refined, geo2) = run_optimize(
            OptimizeInputs {
                clean: cleaned,
                zeta_d,
                zeta_s,
                initial: est,
                rig: &manifest.rig,
                omega_o: &omega_o,
                manifest,
            },
            &mut output.reports,
        )
        .map_err(|e| e.in_stage("optimize"))?;

        write_map(out_dir, map_names::N_D, &refined.n_d)
            .and_then(|_| write_map(out_dir, map_names::N_S, &refined.n_s))
            .and_then(|_| write_map(out_dir, map_names::N_FUSED, &refined.n_fused))
            .and_then(|_| write_map(out_dir, map_names::SIGMA, &refined.sigma))
            .and_then(|_| write_map(out_dir, map_names::ANISOTROPY, &refined.anisotropy))
            .and_then(|_| write_map(out_dir, map_names::ROUGHNESS, &refined.roughness))
            .and_then(|_| write_map(out_dir, map_names::RHO_D, &refined.rho_d))
            .and_then(|_| write_map(out_dir, map_names::RHO_S, &refined.rho_s))
            .and_then(|_| write_map(out_dir, map_names::CORRELATION_D, &refined.correlation_d))
            .and_then(|_| write_map(out_dir, map_names::CORRELATION_S, &refined.correlation_s))
            .map_err(|e| e.in_stage("optimize"))?;
        write_geometry(out_dir, &geo2, manifest.width, manifest.height)
            .map_err(|e| e.in_stage("optimize"))?;

        if let Some(floor) = options.shadow_floor {
            let comp_d = shadow_compensate(&refined.rho_d, &geo2.tau_d, floor)
                .map_err(|e| IoError::Invalid(e.to_string()).in_stage("optimize"))?;
            let comp_s = shadow_compensate(&refined.rho_s, &geo2.tau_s, floor)
                .map_err(|e| IoError::Invalid(e.to_string()).in_stage("optimize"))?;
            write_map(out_dir, map_names::RHO_D_COMPENSATED, &comp_d)
                .and_then(|_| write_map(out_dir, map_names::RHO_S_COMPENSATED, &comp_s))
                .map_err(|e| e.in_stage("optimize"))?;
        }

        let records: Vec<&crate::optimize::BatchRecord> =
            output.reports.iter().flat_map(|r| r.records.iter()).collect();
        write_diagnostics_csv(out_dir, &records).map_err(|e| e.in_stage("optimize"))?;
        output.geometry = Some(geo2);
        output.refined = Some(refined);
    }

    provenance_for(manifest, stages, out_dir).write(out_dir)?;
    output.separated = separated;
    output.zeta = zeta;
    output.clean = clean;
    output.initial = initial;
    Ok(output)
}

/// Renders the synthetic capture described by the manifest's `[synthetic]`
/// block into `out_dir`: polarized frame stacks, the ambient map, ground
/// truth maps (under `ground_truth/`) and a complete capture manifest.
pub fn synthesize_capture(
    manifest: &CaptureManifest,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<(), IoError> {
    let spec = manifest
        .synthetic
        .as_ref()
        .ok_or_else(|| IoError::Invalid("manifest has no [synthetic] block".into()))?;
    let (w, h) = (manifest.width, manifest.height);
    let material = match spec.preset.as_str() {
        "flat-lambert" => presets::flat_lambert(w, h, [0.5, 0.5, 0.5]),
        "tri-material" => presets::tri_material(w, h),
        "half-occluded" => presets::half_occluded_lambert(w, h, [0.5, 0.5, 0.5]),
        "broad-gloss" => presets::broad_gloss(w, h),
        other => return Err(IoError::Invalid(format!("unknown synthetic preset {other:?}"))),
    };
    let omega_o = match manifest.view {
        ViewMode::Constant(d) => d,
        ViewMode::Pinhole => {
            return Err(IoError::Invalid(
                "synthetic rendering uses one constant view per stack; set camera.view.mode = \"constant\"".into(),
            ))
        }
    };
    let artifacts = ArtifactConfig {
        overexposure_probability: spec.overexposure_probability,
        overexposure_magnitude: spec.overexposure_magnitude,
        lens_flare_enabled: spec.lens_flare,
        lens_flare_magnitude: spec.lens_flare_magnitude,
        ambient_level: spec.ambient,
        sensor_noise_stddev: spec.noise,
    };
    let seed = seed_override.unwrap_or(spec.seed);
    let stack = render_olat(&material, &manifest.rig, omega_o, &artifacts, seed)
        .map_err(|e| IoError::Invalid(e.to_string()))?;

    write_stack(out_dir, "cross/%04d.pfm", &stack.cross)?;
    write_stack(out_dir, "parallel/%04d.pfm", &stack.parallel)?;
    write_map(out_dir, "ambient.pfm", &stack.ambient)?;
    write_map(out_dir, "ground_truth/rho_d.pfm", &material.rho_d)?;
    write_map(out_dir, "ground_truth/rho_s.pfm", &material.rho_s)?;
    write_map(out_dir, "ground_truth/n_d.pfm", &material.n_d)?;
    write_map(out_dir, "ground_truth/n_s.pfm", &material.n_s)?;
    write_map(out_dir, "ground_truth/sigma.pfm", &material.sigma)?;

    // emit a complete capture manifest next to the data
    let mut raw: RawManifest = toml::from_str(&manifest.raw_text)
        .map_err(|e| IoError::ParseError(e.to_string()))?;
    raw.capture = Some(RawCapture {
        cross: super::manifest::PathSpec::Pattern("cross/%04d.pfm".into()),
        parallel: super::manifest::PathSpec::Pattern("parallel/%04d.pfm".into()),
        ambient: Some("ambient.pfm".into()),
    });
    if let Some(s) = raw.synthetic.as_mut() {
        s.seed = seed;
    }
    super::manifest::write_manifest(&out_dir.join("manifest.toml"), &raw)?;
    Ok(())
}
