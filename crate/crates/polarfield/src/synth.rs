//! Synthetic forward renderer: produces polarized OLAT stacks from known
//! ground-truth material maps. The only data source at desk scale and the
//! oracle every recovery stage is verified against.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::capture::{LightRig, PolarizedOlatStack};
use crate::geometry::{CameraPose, Direction3, ShadingFrame, Vec3};
use crate::raster::{FrameStack, Image};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("direction below horizon: {0}")]
    BelowHorizon(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid lobe: sigma must be positive, got ({0}, {1})")]
    InvalidSigma(f64, f64),
}

/// Anisotropic specular lobe: standard deviations along the tangent and
/// bitangent of an orthonormal shading frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WardLobeParams {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub frame: ShadingFrame,
}

impl WardLobeParams {
    pub fn new(sigma_x: f64, sigma_y: f64, frame: ShadingFrame) -> Result<Self, SynthError> {
        if !(sigma_x > 0.0) || !(sigma_y > 0.0) {
            return Err(SynthError::InvalidSigma(sigma_x, sigma_y));
        }
        Ok(WardLobeParams { sigma_x, sigma_y, frame })
    }

    pub fn isotropic(sigma: f64, normal: Direction3) -> Result<Self, SynthError> {
        WardLobeParams::new(sigma, sigma, ShadingFrame::from_normal(normal))
    }
}

/// Ward specular lobe density:
///
/// ```text
/// f = exp(-2 ((h.t / sx)^2 + (h.b / sy)^2) / (1 + h.n))
///     / (4 pi sx sy sqrt((wo.n)(wi.n)))
/// ```
///
/// with `h` the halfway vector. Integrates to ~1 over the hemisphere.
pub fn ward_brdf(
    omega_i: Direction3,
    omega_o: Direction3,
    lobe: &WardLobeParams,
) -> Result<f64, SynthError> {
    let n = lobe.frame.normal;
    let cos_i = omega_i.dot(n);
    let cos_o = omega_o.dot(n);
    if cos_i <= 0.0 || cos_o <= 0.0 {
        return Err(SynthError::BelowHorizon(format!(
            "wi.n = {cos_i:.4}, wo.n = {cos_o:.4}"
        )));
    }
    let h = (omega_i.as_vec() + omega_o.as_vec())
        .normalized()
        .expect("wi + wo cannot vanish above the horizon");
    let ht = h.dot(lobe.frame.tangent.as_vec());
    let hb = h.dot(lobe.frame.bitangent.as_vec());
    let hn = h.dot(n.as_vec());
    let expo = -2.0 * ((ht / lobe.sigma_x).powi(2) + (hb / lobe.sigma_y).powi(2)) / (1.0 + hn);
    let norm = 4.0 * std::f64::consts::PI * lobe.sigma_x * lobe.sigma_y * (cos_o * cos_i).sqrt();
    Ok(expo.exp() / norm)
}

/// Blocks a set of incident directions, independent of the surface normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Occluder {
    None,
    /// Lights with `w . axis > 0` are blocked.
    HalfSpace { axis: Direction3 },
}

impl Occluder {
    pub fn visible(&self, omega_i: Direction3) -> bool {
        match self {
            Occluder::None => true,
            Occluder::HalfSpace { axis } => omega_i.dot(*axis) <= 0.0,
        }
    }
}

/// Per-pixel ground truth driving the renderer: albedos, normals, lobe
/// variances and an optional occluder.
#[derive(Debug, Clone)]
pub struct GroundTruthMaterial {
    pub rho_d: Image,
    pub rho_s: Image,
    pub n_d: Image,
    pub n_s: Image,
    /// (sigma_x, sigma_y, 0); meaningful where rho_s > 0.
    pub sigma: Image,
    pub occluder: Occluder,
}

impl GroundTruthMaterial {
    pub fn width(&self) -> usize {
        self.rho_d.width()
    }

    pub fn height(&self) -> usize {
        self.rho_d.height()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let (w, h) = (self.width(), self.height());
        for (name, img, ch) in [
            ("rho_d", &self.rho_d, 3),
            ("rho_s", &self.rho_s, 1),
            ("n_d", &self.n_d, 3),
            ("n_s", &self.n_s, 3),
            ("sigma", &self.sigma, 3),
        ] {
            if img.width() != w || img.height() != h || img.channels() != ch {
                return Err(SynthError::DimensionMismatch(format!(
                    "{name}: {}x{}x{}",
                    img.width(),
                    img.height(),
                    img.channels()
                )));
            }
        }
        for v in self.rho_d.data().iter().chain(self.rho_s.data()) {
            if !v.is_finite() || *v < 0.0 {
                return Err(SynthError::DimensionMismatch("negative or non-finite albedo".into()));
            }
        }
        Ok(())
    }

    pub fn normal_d(&self, x: usize, y: usize) -> Direction3 {
        let v = self.n_d.rgb(x, y);
        Direction3::new(v[0], v[1], v[2]).expect("ground-truth normal must be nonzero")
    }

    pub fn normal_s(&self, x: usize, y: usize) -> Direction3 {
        let v = self.n_s.rgb(x, y);
        Direction3::new(v[0], v[1], v[2]).expect("ground-truth normal must be nonzero")
    }

    pub fn sigma_at(&self, x: usize, y: usize) -> [f64; 2] {
        let v = self.sigma.rgb(x, y);
        [v[0], v[1]]
    }
}

/// Capture artifacts injected by the renderer, all seed-deterministic.
/// Overexposure is modeled as additive saturated pulses at sampled
/// (pixel, light, frame) slots; lens flare as an additive ramp on lights
/// facing the camera's opposite side; sensor noise as clamped Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArtifactConfig {
    pub overexposure_probability: f64,
    pub overexposure_magnitude: f64,
    pub lens_flare_enabled: bool,
    pub lens_flare_magnitude: f64,
    pub ambient_level: f64,
    pub sensor_noise_stddev: f64,
}

impl ArtifactConfig {
    pub fn none() -> ArtifactConfig {
        ArtifactConfig {
            overexposure_probability: 0.0,
            overexposure_magnitude: 0.0,
            lens_flare_enabled: false,
            lens_flare_magnitude: 0.0,
            ambient_level: 0.0,
            sensor_noise_stddev: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(0.0..=1.0).contains(&self.overexposure_probability) {
            return Err(SynthError::DimensionMismatch(format!(
                "overexposure probability {} outside [0,1]",
                self.overexposure_probability
            )));
        }
        for (name, v) in [
            ("overexposure_magnitude", self.overexposure_magnitude),
            ("lens_flare_magnitude", self.lens_flare_magnitude),
            ("ambient_level", self.ambient_level),
            ("sensor_noise_stddev", self.sensor_noise_stddev),
        ] {
            if !(v >= 0.0) {
                return Err(SynthError::DimensionMismatch(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Position-based sample seed; results never depend on pixel visit order.
fn sample_seed(seed: u64, pixel: u64, light: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ pixel.wrapping_mul(0x51_7cc1_b727_220a_95)) ^ light)
}

/// Renders the polarized OLAT stack for a ground-truth material under the
/// rig, viewed from `omega_o` (one camera per stack). Per light:
/// `cross = d/2 + ambient`, `parallel = d/2 + s/2 + ambient`, where
/// `d = rho_d L0 A0 max(wi.n_d, 0) nu` and `s = rho_s L0 A0 f_sigma nu`.
pub fn render_olat(
    material: &GroundTruthMaterial,
    rig: &LightRig,
    omega_o: Direction3,
    artifacts: &ArtifactConfig,
    seed: u64,
) -> Result<PolarizedOlatStack, SynthError> {
    material.validate()?;
    artifacts.validate()?;
    let (w, h) = (material.width(), material.height());
    let n_lights = rig.len();
    let scale = rig.light_scale();

    let mut cross = FrameStack::zeros(n_lights, w, h, 3);
    let mut parallel = FrameStack::zeros(n_lights, w, h, 3);
    let mut ambient = Image::zeros(w, h, 3);
    for px in ambient.data_mut() {
        *px = artifacts.ambient_level as f32;
    }

    // Per-pixel shading, gathered per frame afterwards. Rows are processed in
    // parallel; every write lands in a per-pixel slot, so the result is
    // independent of scheduling.
    let rows: Vec<Vec<([f32; 3], [f32; 3])>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(w * n_lights);
            for x in 0..w {
                let pixel_index = (y * w + x) as u64;
                let rho_d = material.rho_d.rgb(x, y);
                let rho_s = material.rho_s.gray(x, y);
                let n_d = material.normal_d(x, y);
                let n_s = material.normal_s(x, y);
                let sg = material.sigma_at(x, y);
                let lobe = if rho_s > 0.0 {
                    Some(
                        WardLobeParams::new(sg[0], sg[1], ShadingFrame::from_normal(n_s))
                            .expect("ground-truth sigma must be positive where rho_s > 0"),
                    )
                } else {
                    None
                };
                for (k, wi) in rig.directions().iter().enumerate() {
                    let nu = if material.occluder.visible(*wi) { 1.0 } else { 0.0 };
                    let cos_d = wi.dot(n_d).max(0.0);
                    let d: [f64; 3] = [
                        rho_d[0] * scale * cos_d * nu,
                        rho_d[1] * scale * cos_d * nu,
                        rho_d[2] * scale * cos_d * nu,
                    ];
                    let s = match &lobe {
                        Some(lobe) if wi.dot(n_s) > 0.0 && omega_o.dot(n_s) > 0.0 => {
                            rho_s * scale * ward_brdf(*wi, omega_o, lobe).expect("guarded") * nu
                        }
                        _ => 0.0,
                    };

                    let mut cr = [0.0f64; 3];
                    let mut pa = [0.0f64; 3];
                    for c in 0..3 {
                        cr[c] = d[c] / 2.0 + artifacts.ambient_level;
                        pa[c] = d[c] / 2.0 + s / 2.0 + artifacts.ambient_level;
                    }

                    if artifacts.lens_flare_enabled {
                        let flare =
                            artifacts.lens_flare_magnitude * (-wi.dot(omega_o)).max(0.0);
                        for c in 0..3 {
                            cr[c] += flare;
                            pa[c] += flare;
                        }
                    }

                    let needs_rng = artifacts.overexposure_probability > 0.0
                        || artifacts.sensor_noise_stddev > 0.0;
                    if needs_rng {
                        let mut rng =
                            ChaCha8Rng::seed_from_u64(sample_seed(seed, pixel_index, k as u64));
                        if artifacts.overexposure_probability > 0.0 {
                            let u_cross: f64 = rand::Rng::gen(&mut rng);
                            let u_par: f64 = rand::Rng::gen(&mut rng);
                            if u_cross < artifacts.overexposure_probability {
                                for v in cr.iter_mut() {
                                    *v += artifacts.overexposure_magnitude;
                                }
                            }
                            if u_par < artifacts.overexposure_probability {
                                for v in pa.iter_mut() {
                                    *v += artifacts.overexposure_magnitude;
                                }
                            }
                        }
                        if artifacts.sensor_noise_stddev > 0.0 {
                            let normal = Normal::new(0.0, artifacts.sensor_noise_stddev)
                                .expect("stddev validated");
                            for v in cr.iter_mut() {
                                *v = (*v + normal.sample(&mut rng)).max(0.0);
                            }
                            for v in pa.iter_mut() {
                                *v = (*v + normal.sample(&mut rng)).max(0.0);
                            }
                        }
                    }

                    row.push((
                        [cr[0] as f32, cr[1] as f32, cr[2] as f32],
                        [pa[0] as f32, pa[1] as f32, pa[2] as f32],
                    ));
                }
            }
            row
        })
        .collect();

    for (y, row) in rows.iter().enumerate() {
        for x in 0..w {
            for k in 0..n_lights {
                let (cr, pa) = row[x * n_lights + k];
                cross
                    .frame_mut(k)
                    .set_rgb(x, y, [cr[0] as f64, cr[1] as f64, cr[2] as f64]);
                parallel
                    .frame_mut(k)
                    .set_rgb(x, y, [pa[0] as f64, pa[1] as f64, pa[2] as f64]);
            }
        }
    }

    Ok(PolarizedOlatStack {
        cross,
        parallel,
        rig: rig.clone(),
        pose: CameraPose::identity(),
        ambient,
    })
}

/// Synthesizes the response under first-order gradient illumination: the
/// weighted sums `I_j = sum_k w_j^k I^k` with `w_j^k` the j-th Cartesian
/// component of the k-th light direction. Returns the (x, y, z) images.
pub fn synthesize_gradient_images(
    stack: &FrameStack,
    rig: &LightRig,
) -> Result<[Image; 3], SynthError> {
    if stack.len() != rig.len() {
        return Err(SynthError::DimensionMismatch(format!(
            "stack has {} frames, rig has {} lights",
            stack.len(),
            rig.len()
        )));
    }
    let (w, h) = (stack.width(), stack.height());
    let mut out = [Image::zeros(w, h, 3), Image::zeros(w, h, 3), Image::zeros(w, h, 3)];
    let mut acc = vec![[0.0f64; 3]; w * h * 3]; // [axis][pixel][ch] flattened below
    for (k, frame) in stack.frames().iter().enumerate() {
        let wi = rig.direction(k);
        let weights = [wi.x(), wi.y(), wi.z()];
        for (i, v) in frame.data().iter().enumerate() {
            let pix = i / 3;
            let ch = i % 3;
            for (axis, wgt) in weights.iter().enumerate() {
                acc[axis * w * h + pix][ch] += wgt * *v as f64;
            }
        }
    }
    for axis in 0..3 {
        let data = out[axis].data_mut();
        for pix in 0..w * h {
            for ch in 0..3 {
                data[pix * 3 + ch] = acc[axis * w * h + pix][ch] as f32;
            }
        }
    }
    Ok(out)
}

/// Ground-truth presets for desk-scale synthetic captures.
pub mod presets {
    use super::*;

    /// Sphere-cap normal field: tilts grow radially from the image center,
    /// reaching `max_tilt_deg` at the corners.
    pub fn sphere_cap_normals(w: usize, h: usize, max_tilt_deg: f64) -> Image {
        let mut img = Image::zeros(w, h, 3);
        let s = max_tilt_deg.to_radians().tan() / std::f64::consts::SQRT_2;
        for y in 0..h {
            for x in 0..w {
                let u = (x as f64 + 0.5) / w as f64 * 2.0 - 1.0;
                let v = (y as f64 + 0.5) / h as f64 * 2.0 - 1.0;
                let n = Direction3::from_vec(Vec3::new(u * s, v * s, 1.0)).unwrap();
                img.set_rgb(x, y, [n.x(), n.y(), n.z()]);
            }
        }
        img
    }

    pub fn flat_normals(w: usize, h: usize) -> Image {
        let mut img = Image::zeros(w, h, 3);
        for y in 0..h {
            for x in 0..w {
                img.set_rgb(x, y, [0.0, 0.0, 1.0]);
            }
        }
        img
    }

    fn constant_rgb(w: usize, h: usize, v: [f64; 3]) -> Image {
        let mut img = Image::zeros(w, h, 3);
        for y in 0..h {
            for x in 0..w {
                img.set_rgb(x, y, v);
            }
        }
        img
    }

    fn constant_gray(w: usize, h: usize, v: f64) -> Image {
        let mut img = Image::zeros(w, h, 1);
        for y in 0..h {
            for x in 0..w {
                img.set_gray(x, y, v);
            }
        }
        img
    }

    /// Uniform Lambertian plate facing +z.
    pub fn flat_lambert(w: usize, h: usize, rho_d: [f64; 3]) -> GroundTruthMaterial {
        let normals = flat_normals(w, h);
        GroundTruthMaterial {
            rho_d: constant_rgb(w, h, rho_d),
            rho_s: constant_gray(w, h, 0.0),
            n_d: normals.clone(),
            n_s: normals,
            sigma: constant_rgb(w, h, [0.2, 0.2, 0.0]),
            occluder: Occluder::None,
        }
    }

    /// Lambertian plate with the +x half of the light sphere blocked.
    pub fn half_occluded_lambert(w: usize, h: usize, rho_d: [f64; 3]) -> GroundTruthMaterial {
        let mut m = flat_lambert(w, h, rho_d);
        m.occluder = Occluder::HalfSpace { axis: Direction3::PLUS_X };
        m
    }

    /// Three vertical bands over a sphere-cap normal field: Lambertian,
    /// isotropic Ward (sigma 0.1) and anisotropic Ward (sigma (0.05, 0.3)).
    pub fn tri_material(w: usize, h: usize) -> GroundTruthMaterial {
        let normals = sphere_cap_normals(w, h, 25.0);
        let mut rho_d = Image::zeros(w, h, 3);
        let mut rho_s = Image::zeros(w, h, 1);
        let mut sigma = Image::zeros(w, h, 3);
        for y in 0..h {
            for x in 0..w {
                let band = x * 3 / w;
                match band {
                    0 => {
                        rho_d.set_rgb(x, y, [0.8, 0.4, 0.2]);
                        rho_s.set_gray(x, y, 0.0);
                        sigma.set_rgb(x, y, [0.2, 0.2, 0.0]);
                    }
                    1 => {
                        rho_d.set_rgb(x, y, [0.35, 0.45, 0.55]);
                        rho_s.set_gray(x, y, 0.4);
                        sigma.set_rgb(x, y, [0.1, 0.1, 0.0]);
                    }
                    _ => {
                        rho_d.set_rgb(x, y, [0.25, 0.5, 0.3]);
                        rho_s.set_gray(x, y, 0.6);
                        sigma.set_rgb(x, y, [0.05, 0.3, 0.0]);
                    }
                }
            }
        }
        GroundTruthMaterial {
            rho_d,
            rho_s,
            n_d: normals.clone(),
            n_s: normals,
            sigma,
            occluder: Occluder::None,
        }
    }

    /// Broad-lobe glossy plate; used where genuine specular peaks must stay
    /// distinguishable from injected overexposure pulses.
    pub fn broad_gloss(w: usize, h: usize) -> GroundTruthMaterial {
        let normals = flat_normals(w, h);
        GroundTruthMaterial {
            rho_d: constant_rgb(w, h, [0.5, 0.45, 0.4]),
            rho_s: constant_gray(w, h, 0.3),
            n_d: normals.clone(),
            n_s: normals,
            sigma: constant_rgb(w, h, [0.5, 0.5, 0.0]),
            occluder: Occluder::None,
        }
    }
}
