//! Capture manifest: a UTF-8 TOML file describing dimensions, the light
//! rig, camera, polarized file layout, preprocessing parameters and solver
//! choices. A manifest with a `[synthetic]` block (and no `[capture]`)
//! describes a capture to be rendered by `synth`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capture::LightRig;
use crate::geometry::{CameraPose, Direction3};
use crate::optimize::{Backend, LineSearchParams, ProblemKind, SolverConfig};

use super::pfm::read_pfm_dimensions;
use super::IoError;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawManifest {
    pub version: u32,
    pub dimensions: RawDimensions,
    pub rig: RawRig,
    #[serde(default)]
    pub camera: RawCamera,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capture: Option<RawCapture>,
    #[serde(default)]
    pub preprocess: RawPreprocess,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub solvers: BTreeMap<String, RawSolver>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDimensions {
    pub lights: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawRig {
    /// Spiral generator light count (mutually exclusive with `directions`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spiral: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<[f64; 3]>>,
    /// L0. Default: N / (4 pi), making L0 * A0 = 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radiant_intensity: Option<f64>,
    /// A0 in steradians. Default: 4 pi / N (lights tile the sphere).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solid_angle: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RawCamera {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub intrinsics: [[f64; 3]; 3],
    pub view: RawView,
}

impl Default for RawCamera {
    fn default() -> Self {
        RawCamera {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            intrinsics: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            view: RawView::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RawView {
    /// "constant" (one view direction for the whole stack) or "pinhole"
    /// (per-pixel through the intrinsics).
    pub mode: String,
    pub direction: [f64; 3],
}

impl Default for RawView {
    fn default() -> Self {
        RawView { mode: "constant".into(), direction: [0.0, 0.0, 1.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawCapture {
    /// Path or pattern for cross-polarized frames; `%d`-style patterns
    /// (e.g. `cross/%04d.pfm`) expand over the light index.
    pub cross: PathSpec,
    pub parallel: PathSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ambient: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathSpec {
    Pattern(String),
    Files(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RawPreprocess {
    /// Overexposure gap threshold (separated-sequence units).
    pub epsilon: f64,
    /// Algorithm iterations M.
    pub iterations: usize,
}

impl Default for RawPreprocess {
    fn default() -> Self {
        RawPreprocess { epsilon: 1.0, iterations: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSolver {
    pub backend: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line_search_c1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line_search_c2: Option<f64>,
}

/// Ground-truth description for the `synth` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// One of: "flat-lambert", "tri-material", "half-occluded", "broad-gloss".
    pub preset: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ambient: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub overexposure_probability: f64,
    #[serde(default)]
    pub overexposure_magnitude: f64,
    #[serde(default)]
    pub lens_flare: bool,
    #[serde(default)]
    pub lens_flare_magnitude: f64,
}

/// Per-pixel view-direction model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViewMode {
    Constant(Direction3),
    Pinhole,
}

/// Fully validated manifest with resolved rig, pose and file lists.
#[derive(Debug, Clone)]
pub struct CaptureManifest {
    pub version: u32,
    pub lights: usize,
    pub width: usize,
    pub height: usize,
    pub rig: LightRig,
    pub pose: CameraPose,
    pub view: ViewMode,
    pub capture: Option<CapturePaths>,
    pub epsilon: f64,
    pub iterations: usize,
    pub solvers: SolverTable,
    pub synthetic: Option<SyntheticSpec>,
    /// Directory of the manifest file; capture paths resolve against it.
    pub base_dir: PathBuf,
    /// Raw manifest text, hashed into provenance.
    pub raw_text: String,
}

#[derive(Debug, Clone)]
pub struct CapturePaths {
    pub cross: Vec<PathBuf>,
    pub parallel: Vec<PathBuf>,
    pub ambient: Option<PathBuf>,
}

/// Solver configuration per problem kind, with the backend defaults from
/// the solver study: L-BFGS (backtracking) for normals, L-BFGS (zoom) for
/// albedos, Gauss-Newton for sigma.
#[derive(Debug, Clone)]
pub struct SolverTable {
    configs: BTreeMap<&'static str, SolverConfig>,
}

impl Default for SolverTable {
    fn default() -> Self {
        let mut configs = BTreeMap::new();
        configs.insert(
            ProblemKind::DiffuseNormal.name(),
            SolverConfig::with_backend(Backend::LbfgsBacktracking),
        );
        configs.insert(
            ProblemKind::SpecularNormal.name(),
            SolverConfig::with_backend(Backend::LbfgsBacktracking),
        );
        configs.insert(ProblemKind::Sigma.name(), SolverConfig::with_backend(Backend::GaussNewton));
        configs.insert(
            ProblemKind::DiffuseAlbedo.name(),
            SolverConfig::with_backend(Backend::LbfgsZoom),
        );
        configs.insert(
            ProblemKind::SpecularAlbedo.name(),
            SolverConfig::with_backend(Backend::LbfgsZoom),
        );
        SolverTable { configs }
    }
}

impl SolverTable {
    pub fn config(&self, kind: ProblemKind) -> SolverConfig {
        self.configs[kind.name()]
    }

    pub fn set(&mut self, kind: ProblemKind, config: SolverConfig) {
        self.configs.insert(kind.name(), config);
    }

    pub fn set_backend(&mut self, kind: ProblemKind, backend: Backend) {
        let mut c = self.config(kind);
        c.backend = backend;
        self.set(kind, c);
    }

    pub fn entries(&self) -> impl Iterator<Item = (&'static str, &SolverConfig)> {
        self.configs.iter().map(|(k, v)| (*k, v))
    }
}

fn kind_from_name(name: &str) -> Option<ProblemKind> {
    Some(match name {
        "diffuse-normal" => ProblemKind::DiffuseNormal,
        "specular-normal" => ProblemKind::SpecularNormal,
        "sigma" => ProblemKind::Sigma,
        "diffuse-albedo" => ProblemKind::DiffuseAlbedo,
        "specular-albedo" => ProblemKind::SpecularAlbedo,
        _ => return None,
    })
}

/// Expands `%d` / zero-padded `%0Nd` patterns over a light index.
pub fn expand_pattern(pattern: &str, index: usize) -> Result<String, IoError> {
    if let Some(pos) = pattern.find('%') {
        let rest = &pattern[pos + 1..];
        if let Some(stripped) = rest.strip_prefix('0') {
            let digits_end = stripped
                .find(|c: char| !c.is_ascii_digit())
                .ok_or_else(|| IoError::ParseError(format!("bad pattern {pattern:?}")))?;
            let width: usize = stripped[..digits_end]
                .parse()
                .map_err(|_| IoError::ParseError(format!("bad pattern {pattern:?}")))?;
            if !stripped[digits_end..].starts_with('d') {
                return Err(IoError::ParseError(format!("bad pattern {pattern:?}")));
            }
            let tail = &stripped[digits_end + 1..];
            return Ok(format!("{}{:0width$}{}", &pattern[..pos], index, tail));
        }
        if let Some(tail) = rest.strip_prefix('d') {
            return Ok(format!("{}{}{}", &pattern[..pos], index, tail));
        }
        return Err(IoError::ParseError(format!("bad pattern {pattern:?}")));
    }
    Err(IoError::ParseError(format!(
        "capture path {pattern:?} has no %d placeholder for {index} lights"
    )))
}

fn resolve_paths(
    spec: &PathSpec,
    n: usize,
    base: &Path,
    label: &str,
) -> Result<Vec<PathBuf>, IoError> {
    let names: Vec<String> = match spec {
        PathSpec::Pattern(p) => {
            (0..n).map(|k| expand_pattern(p, k)).collect::<Result<_, _>>()?
        }
        PathSpec::Files(files) => {
            if files.len() != n {
                return Err(IoError::DimensionMismatch(format!(
                    "{label}: manifest declares {n} lights but lists {} files",
                    files.len()
                )));
            }
            files.clone()
        }
    };
    Ok(names.into_iter().map(|f| base.join(f)).collect())
}

fn build_solver_table(raw: &BTreeMap<String, RawSolver>) -> Result<SolverTable, IoError> {
    let mut table = SolverTable::default();
    for (name, spec) in raw {
        let kind = kind_from_name(name)
            .ok_or_else(|| IoError::ParseError(format!("unknown solver kind {name:?}")))?;
        let backend = Backend::parse(&spec.backend)
            .ok_or_else(|| IoError::ParseError(format!("unknown backend {:?}", spec.backend)))?;
        let mut config = SolverConfig::with_backend(backend);
        if let Some(mi) = spec.max_iterations {
            if mi == 0 {
                return Err(IoError::ParseError("max_iterations must be >= 1".into()));
            }
            config.max_iterations = mi;
        }
        if let Some(gt) = spec.gradient_tolerance {
            if !(gt > 0.0) {
                return Err(IoError::ParseError("gradient_tolerance must be > 0".into()));
            }
            config.gradient_tolerance = gt;
        }
        let mut ls = LineSearchParams::default();
        if let Some(c1) = spec.line_search_c1 {
            ls.c1 = c1;
        }
        if let Some(c2) = spec.line_search_c2 {
            ls.c2 = c2;
        }
        config.line_search = ls;
        table.set(kind, config);
    }
    Ok(table)
}

/// Parses and fully validates a manifest. Every referenced capture file must
/// exist and match the declared dimensions; the first violation is reported.
pub fn read_manifest(path: &Path) -> Result<CaptureManifest, IoError> {
    let raw_text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IoError::MissingFile { path: path.to_path_buf(), index: None },
        _ => IoError::Io(e),
    })?;
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    manifest_from_str(&raw_text, &base_dir, true)
}

/// Parses a manifest from text. `check_files` controls capture-file
/// validation (synth inputs have no files yet).
pub fn manifest_from_str(
    raw_text: &str,
    base_dir: &Path,
    check_files: bool,
) -> Result<CaptureManifest, IoError> {
    let raw: RawManifest =
        toml::from_str(raw_text).map_err(|e| IoError::ParseError(e.to_string()))?;
    if raw.version != MANIFEST_VERSION {
        return Err(IoError::UnsupportedVersion(raw.version));
    }
    let n = raw.dimensions.lights;
    if n < 4 {
        return Err(IoError::ParseError(format!("need at least 4 lights, got {n}")));
    }
    if raw.dimensions.width == 0 || raw.dimensions.height == 0 {
        return Err(IoError::ParseError("image dimensions must be positive".into()));
    }

    let l0 = raw
        .rig
        .radiant_intensity
        .unwrap_or(n as f64 / (4.0 * std::f64::consts::PI));
    let a0 = raw.rig.solid_angle.unwrap_or(4.0 * std::f64::consts::PI / n as f64);
    let rig = match (&raw.rig.spiral, &raw.rig.directions) {
        (Some(count), None) => {
            if *count != n {
                return Err(IoError::DimensionMismatch(format!(
                    "rig spiral count {count} != declared lights {n}"
                )));
            }
            LightRig::spiral(n, l0, Some(a0)).map_err(|e| IoError::ParseError(e.to_string()))?
        }
        (None, Some(dirs)) => {
            if dirs.len() != n {
                return Err(IoError::DimensionMismatch(format!(
                    "rig lists {} directions but declares {n} lights",
                    dirs.len()
                )));
            }
            let directions: Result<Vec<Direction3>, _> =
                dirs.iter().map(|d| Direction3::new(d[0], d[1], d[2])).collect();
            let directions = directions.map_err(|e| IoError::ParseError(e.to_string()))?;
            LightRig::new(directions, l0, a0).map_err(|e| IoError::ParseError(e.to_string()))?
        }
        _ => {
            return Err(IoError::ParseError(
                "rig needs exactly one of `spiral` or `directions`".into(),
            ))
        }
    };

    let pose = CameraPose::new(raw.camera.rotation, raw.camera.translation, raw.camera.intrinsics)
        .map_err(|e| IoError::ParseError(e.to_string()))?;
    let view = match raw.camera.view.mode.as_str() {
        "constant" => {
            let d = raw.camera.view.direction;
            ViewMode::Constant(
                Direction3::new(d[0], d[1], d[2])
                    .map_err(|e| IoError::ParseError(e.to_string()))?,
            )
        }
        "pinhole" => ViewMode::Pinhole,
        other => return Err(IoError::ParseError(format!("unknown view mode {other:?}"))),
    };

    let capture = match &raw.capture {
        Some(spec) => {
            let cross = resolve_paths(&spec.cross, n, base_dir, "cross")?;
            let parallel = resolve_paths(&spec.parallel, n, base_dir, "parallel")?;
            let ambient = spec.ambient.as_ref().map(|a| base_dir.join(a));
            if check_files {
                for (list_name, list) in [("cross", &cross), ("parallel", &parallel)] {
                    for (k, p) in list.iter().enumerate() {
                        if !p.exists() {
                            return Err(IoError::MissingFile {
                                path: p.clone(),
                                index: Some(k),
                            });
                        }
                        let (w, h, c) = read_pfm_dimensions(p)?;
                        if w != raw.dimensions.width || h != raw.dimensions.height || c != 3 {
                            return Err(IoError::DimensionMismatch(format!(
                                "{list_name} frame {k}: {w}x{h}x{c} vs declared {}x{}x3",
                                raw.dimensions.width, raw.dimensions.height
                            )));
                        }
                    }
                }
                if let Some(a) = &ambient {
                    if !a.exists() {
                        return Err(IoError::MissingFile { path: a.clone(), index: None });
                    }
                }
            }
            Some(CapturePaths { cross, parallel, ambient })
        }
        None => None,
    };

    if capture.is_none() && raw.synthetic.is_none() {
        return Err(IoError::ParseError(
            "manifest needs a [capture] block, a [synthetic] block, or both".into(),
        ));
    }
    if !(raw.preprocess.epsilon > 0.0) {
        return Err(IoError::ParseError("preprocess epsilon must be > 0".into()));
    }
    if raw.preprocess.iterations == 0 {
        return Err(IoError::ParseError("preprocess iterations must be >= 1".into()));
    }

    Ok(CaptureManifest {
        version: raw.version,
        lights: n,
        width: raw.dimensions.width,
        height: raw.dimensions.height,
        rig,
        pose,
        view,
        capture,
        epsilon: raw.preprocess.epsilon,
        iterations: raw.preprocess.iterations,
        solvers: build_solver_table(&raw.solvers)?,
        synthetic: raw.synthetic.clone(),
        base_dir: base_dir.to_path_buf(),
        raw_text: raw_text.to_string(),
    })
}

pub fn write_manifest(path: &Path, raw: &RawManifest) -> Result<(), IoError> {
    let text = toml::to_string_pretty(raw).map_err(|e| IoError::ParseError(e.to_string()))?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(IoError::Io)?;
    }
    std::fs::write(path, text).map_err(IoError::Io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::pfm::write_pfm;
    use crate::raster::Image;

    fn minimal_toml() -> String {
        r#"
version = 1

[dimensions]
lights = 4
width = 2
height = 2

[rig]
spiral = 4

[capture]
cross = "cross/%04d.pfm"
parallel = "parallel/%04d.pfm"
"#
        .to_string()
    }

    fn write_frames(dir: &Path, sub: &str, n: usize, w: usize, h: usize) {
        for k in 0..n {
            let img = Image::zeros(w, h, 3);
            write_pfm(&dir.join(format!("{sub}/{k:04}.pfm")), &img).unwrap();
        }
    }

    #[test]
    fn minimal_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), "cross", 4, 2, 2);
        write_frames(dir.path(), "parallel", 4, 2, 2);
        let path = dir.path().join("manifest.toml");
        std::fs::write(&path, minimal_toml()).unwrap();
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.lights, 4);
        assert_eq!((m.width, m.height), (2, 2));
        assert_eq!(m.capture.as_ref().unwrap().cross.len(), 4);
        // round trip: re-read gives the identical resolved structure
        let again = read_manifest(&path).unwrap();
        assert_eq!(m.raw_text, again.raw_text);
        assert_eq!(m.rig.directions(), again.rig.directions());
    }

    #[test]
    fn missing_frame_is_reported_with_its_index() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), "cross", 4, 2, 2);
        write_frames(dir.path(), "parallel", 3, 2, 2); // one short
        let path = dir.path().join("manifest.toml");
        std::fs::write(&path, minimal_toml()).unwrap();
        match read_manifest(&path).unwrap_err() {
            IoError::MissingFile { index, .. } => assert_eq!(index, Some(3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let toml = minimal_toml().replace("version = 1", "version = 9");
        let path = dir.path().join("manifest.toml");
        std::fs::write(&path, toml).unwrap();
        assert!(matches!(read_manifest(&path).unwrap_err(), IoError::UnsupportedVersion(9)));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), "cross", 4, 3, 2); // wrong width
        write_frames(dir.path(), "parallel", 4, 2, 2);
        let path = dir.path().join("manifest.toml");
        std::fs::write(&path, minimal_toml()).unwrap();
        assert!(matches!(read_manifest(&path).unwrap_err(), IoError::DimensionMismatch(_)));
    }

    #[test]
    fn synthetic_manifest_needs_no_files() {
        let toml = r#"
version = 1

[dimensions]
lights = 16
width = 4
height = 4

[rig]
spiral = 16

[synthetic]
preset = "flat-lambert"
seed = 7
"#;
        let m = manifest_from_str(toml, Path::new("."), true).unwrap();
        assert!(m.capture.is_none());
        assert_eq!(m.synthetic.as_ref().unwrap().preset, "flat-lambert");
        assert_eq!(m.synthetic.as_ref().unwrap().seed, 7);
    }

    #[test]
    fn pattern_expansion() {
        assert_eq!(expand_pattern("a/%04d.pfm", 7).unwrap(), "a/0007.pfm");
        assert_eq!(expand_pattern("a/%d.pfm", 12).unwrap(), "a/12.pfm");
        assert!(expand_pattern("a/plain.pfm", 0).is_err());
    }

    #[test]
    fn solver_table_defaults_follow_the_study() {
        let t = SolverTable::default();
        assert_eq!(t.config(ProblemKind::DiffuseNormal).backend, Backend::LbfgsBacktracking);
        assert_eq!(t.config(ProblemKind::DiffuseAlbedo).backend, Backend::LbfgsZoom);
        assert_eq!(t.config(ProblemKind::Sigma).backend, Backend::GaussNewton);
        assert_eq!(t.config(ProblemKind::Sigma).max_iterations, 500);
    }
}
