//! Persistence and orchestration: manifest parsing, PFM stacks, the output
//! bundle, false-color previews and the staged pipeline.

pub mod bundle;
pub mod manifest;
pub mod pfm;
pub mod pipeline;
pub mod preview;

use std::path::PathBuf;

use thiserror::Error;

pub use bundle::{map_names, write_diagnostics_csv, Provenance};
pub use manifest::{
    expand_pattern, manifest_from_str, read_manifest, write_manifest, CaptureManifest,
    CapturePaths, RawManifest, SolverTable, SyntheticSpec, ViewMode,
};
pub use pfm::{read_pfm, read_pfm_dimensions, write_pfm};
pub use pipeline::{run_pipeline, PipelineOutput, RunOptions, Stage, StageSet};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("missing file {path}{}", .index.map(|i| format!(" (light index {i})")).unwrap_or_default())]
    MissingFile { path: PathBuf, index: Option<usize> },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unsupported manifest version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt image {path} at byte offset {offset}: {reason}")]
    CorruptImage { path: PathBuf, offset: u64, reason: String },
    #[error("stage {stage} failed: {source}")]
    Stage { stage: &'static str, #[source] source: Box<IoError> },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IoError {
    pub fn in_stage(self, stage: &'static str) -> IoError {
        IoError::Stage { stage, source: Box::new(self) }
    }
}

/// FNV-1a 64-bit hash, hex-encoded; stable across platforms and versions,
/// used to fingerprint manifests in provenance files.
pub fn fnv1a64(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_is_stable() {
        assert_eq!(fnv1a64(b""), "cbf29ce484222325");
        assert_eq!(fnv1a64(b"polarfield"), fnv1a64(b"polarfield"));
        assert_ne!(fnv1a64(b"a"), fnv1a64(b"b"));
    }
}
