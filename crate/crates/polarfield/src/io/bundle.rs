//! Output bundle layout: map naming, the provenance file and the solver
//! diagnostics table.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::optimize::BatchRecord;
use crate::raster::{FrameStack, Image};

use super::pfm::{read_pfm, write_pfm};
use super::IoError;

/// Canonical file names of the persisted maps, relative to the bundle root.
pub mod map_names {
    pub const ZETA_D: &str = "separated/zeta_d.pfm";
    pub const ZETA_S: &str = "separated/zeta_s.pfm";
    pub const SEPARATED_DIFFUSE: &str = "separated/diffuse/%04d.pfm";
    pub const SEPARATED_SPECULAR: &str = "separated/specular/%04d.pfm";
    pub const CLEAN_DIFFUSE: &str = "clean/diffuse/%04d.pfm";
    pub const CLEAN_SPECULAR: &str = "clean/specular/%04d.pfm";
    pub const REMOVED_DIFFUSE: &str = "clean/removed_diffuse/%04d.pfm";
    pub const REMOVED_SPECULAR: &str = "clean/removed_specular/%04d.pfm";
    pub const NU_D: &str = "maps/nu_d.pfm";
    pub const NU_S: &str = "maps/nu_s.pfm";
    pub const TAU_D: &str = "maps/tau_d.pfm";
    pub const TAU_S: &str = "maps/tau_s.pfm";
    pub const VARRHO_D: &str = "maps/varrho_d.pfm";
    pub const VARRHO_S: &str = "maps/varrho_s.pfm";
    pub const RHO_D_INIT: &str = "maps/rho_d_init.pfm";
    pub const RHO_S_INIT: &str = "maps/rho_s_init.pfm";
    pub const N_D_INIT: &str = "maps/n_d_init.pfm";
    pub const N_S_INIT: &str = "maps/n_s_init.pfm";
    pub const N_D: &str = "maps/n_d.pfm";
    pub const N_S: &str = "maps/n_s.pfm";
    pub const N_FUSED: &str = "maps/n_fused.pfm";
    pub const SIGMA: &str = "maps/sigma.pfm";
    pub const ANISOTROPY: &str = "maps/anisotropy.pfm";
    pub const ROUGHNESS: &str = "maps/roughness.pfm";
    pub const RHO_D: &str = "maps/rho_d.pfm";
    pub const RHO_S: &str = "maps/rho_s.pfm";
    pub const CORRELATION_D: &str = "maps/correlation_d.pfm";
    pub const CORRELATION_S: &str = "maps/correlation_s.pfm";
    pub const RHO_D_COMPENSATED: &str = "maps/rho_d_compensated.pfm";
    pub const RHO_S_COMPENSATED: &str = "maps/rho_s_compensated.pfm";
    pub const DIAGNOSTICS: &str = "diagnostics.csv";
    pub const PROVENANCE: &str = "provenance.toml";
}

/// Self-description written with every bundle: the manifest fingerprint,
/// tool version, stages run and the per-stage parameters. Deliberately free
/// of timestamps and timings so reruns are bitwise identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    pub manifest_hash: String,
    pub stages: Vec<String>,
    pub epsilon: f64,
    pub iterations: usize,
    pub solvers: Vec<SolverEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverEntry {
    pub kind: String,
    pub backend: String,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Provenance {
    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        let text = toml::to_string_pretty(self).map_err(|e| IoError::ParseError(e.to_string()))?;
        std::fs::create_dir_all(dir).map_err(IoError::Io)?;
        std::fs::write(dir.join(map_names::PROVENANCE), text).map_err(IoError::Io)
    }

    pub fn read(dir: &Path) -> Result<Provenance, IoError> {
        let text = std::fs::read_to_string(dir.join(map_names::PROVENANCE)).map_err(|e| {
            match e.kind() {
                std::io::ErrorKind::NotFound => IoError::MissingFile {
                    path: dir.join(map_names::PROVENANCE),
                    index: None,
                },
                _ => IoError::Io(e),
            }
        })?;
        toml::from_str(&text).map_err(|e| IoError::ParseError(e.to_string()))
    }
}

pub fn stack_path(dir: &Path, pattern: &str, index: usize) -> PathBuf {
    dir.join(super::manifest::expand_pattern(pattern, index).expect("static pattern"))
}

/// Writes every frame of a stack under a `%04d` pattern.
pub fn write_stack(dir: &Path, pattern: &str, stack: &FrameStack) -> Result<(), IoError> {
    for (k, frame) in stack.frames().iter().enumerate() {
        write_pfm(&stack_path(dir, pattern, k), frame)?;
    }
    Ok(())
}

/// Reads `n` frames of a stack written by [`write_stack`].
pub fn read_stack(dir: &Path, pattern: &str, n: usize) -> Result<FrameStack, IoError> {
    let mut frames = Vec::with_capacity(n);
    for k in 0..n {
        let path = stack_path(dir, pattern, k);
        let img = read_pfm(&path).map_err(|e| match e {
            IoError::MissingFile { path, .. } => IoError::MissingFile { path, index: Some(k) },
            other => other,
        })?;
        frames.push(img);
    }
    FrameStack::new(frames).map_err(|e| IoError::DimensionMismatch(e.to_string()))
}

/// Reads an arbitrary list of capture frames (manifest paths).
pub fn read_capture_stack(paths: &[PathBuf]) -> Result<FrameStack, IoError> {
    let mut frames = Vec::with_capacity(paths.len());
    for (k, path) in paths.iter().enumerate() {
        let img = read_pfm(path).map_err(|e| match e {
            IoError::MissingFile { path, .. } => IoError::MissingFile { path, index: Some(k) },
            other => other,
        })?;
        frames.push(img);
    }
    FrameStack::new(frames).map_err(|e| IoError::DimensionMismatch(e.to_string()))
}

pub fn write_map(dir: &Path, name: &str, image: &Image) -> Result<(), IoError> {
    write_pfm(&dir.join(name), image)
}

pub fn read_map(dir: &Path, name: &str) -> Result<Image, IoError> {
    read_pfm(&dir.join(name))
}

/// Solver diagnostics table. Columns: pixel index, problem kind, backend,
/// iterations, final gradient norm (L2), status. Wall time stays out of the
/// file on purpose (bundles must be run-to-run identical).
pub fn write_diagnostics_csv(dir: &Path, records: &[&BatchRecord]) -> Result<(), IoError> {
    let mut out = String::from("pixel,kind,backend,iterations,gradient_norm,status\n");
    for r in records {
        let grad = if r.gradient_norm.is_finite() {
            format!("{:.12e}", r.gradient_norm)
        } else {
            "nan".to_string()
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.pixel,
            r.kind.name(),
            r.backend.name(),
            r.iterations,
            grad,
            r.status
        ));
    }
    std::fs::create_dir_all(dir).map_err(IoError::Io)?;
    std::fs::write(dir.join(map_names::DIAGNOSTICS), out).map_err(IoError::Io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::{Backend, ProblemKind};

    #[test]
    fn stack_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut stack = FrameStack::zeros(3, 2, 2, 3);
        stack.frame_mut(1).set_rgb(1, 0, [0.25, 0.5, 0.75]);
        write_stack(dir.path(), "s/%04d.pfm", &stack).unwrap();
        let back = read_stack(dir.path(), "s/%04d.pfm", 3).unwrap();
        for k in 0..3 {
            assert_eq!(stack.frame(k).data(), back.frame(k).data());
        }
    }

    #[test]
    fn provenance_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = Provenance {
            tool: "polarfield".into(),
            tool_version: "0.1.0".into(),
            manifest_hash: "abc".into(),
            stages: vec!["separate".into()],
            epsilon: 1.0,
            iterations: 2,
            solvers: vec![SolverEntry {
                kind: "sigma".into(),
                backend: "gauss-newton".into(),
                max_iterations: 500,
                gradient_tolerance: 1e-10,
            }],
        };
        p.write(dir.path()).unwrap();
        let back = Provenance::read(dir.path()).unwrap();
        assert_eq!(back.manifest_hash, "abc");
        assert_eq!(back.solvers.len(), 1);
    }

    #[test]
    fn diagnostics_format_is_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let rec = BatchRecord {
            pixel: 5,
            kind: ProblemKind::Sigma,
            backend: Backend::GaussNewton,
            iterations: 12,
            gradient_norm: 1.5e-11,
            status: "converged".into(),
            output: None,
        };
        write_diagnostics_csv(dir.path(), &[&rec]).unwrap();
        let text = std::fs::read_to_string(dir.path().join(map_names::DIAGNOSTICS)).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "pixel,kind,backend,iterations,gradient_norm,status");
        let row = lines.next().unwrap();
        assert!(row.starts_with("5,sigma,gauss-newton,12,"));
        assert!(row.ends_with(",converged"));
    }
}
