//! Closed-form initialization of albedos and normals from cleaned sequences
//! and synthesized gradient responses.

use thiserror::Error;

use crate::capture::LightRig;
use crate::geometry::{Direction3, Vec3};
use crate::raster::{luminance, FrameStack, Image};

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("gradient vector norm below 1e-9; pixel is degenerate")]
    DegeneratePixel,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Initial diffuse albedo for one pixel: `(4 kappa / N) * sum_k I_d^k`
/// per channel.
pub fn init_rho_d_pixel(diffuse: &[[f64; 3]], rig: &LightRig) -> [f64; 3] {
    let scale = 4.0 * rig.kappa() / rig.len() as f64;
    let mut acc = [0.0; 3];
    for s in diffuse {
        for c in 0..3 {
            acc[c] += s[c];
        }
    }
    [acc[0] * scale, acc[1] * scale, acc[2] * scale]
}

/// Initial specular albedo for one pixel: `(4 pi kappa / N) * sum_k I_s^k`,
/// collapsed to a scalar through Rec. 709 luminance.
pub fn init_rho_s_pixel(specular: &[[f64; 3]], rig: &LightRig) -> f64 {
    let scale = 4.0 * std::f64::consts::PI * rig.kappa() / rig.len() as f64;
    specular.iter().map(|s| luminance(*s)).sum::<f64>() * scale
}

/// Map-level albedo initialization over the cleaned sequences.
pub fn init_albedo(
    diffuse: &FrameStack,
    specular: &FrameStack,
    rig: &LightRig,
) -> Result<(Image, Image), EstimateError> {
    if diffuse.len() != rig.len() || specular.len() != rig.len() {
        return Err(EstimateError::DimensionMismatch(format!(
            "stacks have {}/{} frames, rig has {} lights",
            diffuse.len(),
            specular.len(),
            rig.len()
        )));
    }
    let (w, h) = (diffuse.width(), diffuse.height());
    let mut rho_d = Image::zeros(w, h, 3);
    let mut rho_s = Image::zeros(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            rho_d.set_rgb(x, y, init_rho_d_pixel(&diffuse.signal_at(x, y), rig));
            rho_s.set_gray(x, y, init_rho_s_pixel(&specular.signal_at(x, y), rig));
        }
    }
    Ok((rho_d, rho_s))
}

/// Initial diffuse normal from the gradient responses of one pixel:
/// normalize((3 / (2 pi rho_d)) * [I_dx, I_dy, I_dz]), channels combined by
/// a luminance-weighted mean before normalization. Pixels with no usable
/// channel (rho ~ 0) or a vanishing gradient are degenerate.
pub fn init_normal_d_pixel(
    gradients: [[f64; 3]; 3],
    rho_d: [f64; 3],
) -> Result<Direction3, EstimateError> {
    let mut combined = Vec3::ZERO;
    let mut total_weight = 0.0;
    for c in 0..3 {
        if rho_d[c] <= 1e-9 {
            continue;
        }
        let scale = 3.0 / (2.0 * std::f64::consts::PI * rho_d[c]);
        let v = Vec3::new(gradients[0][c], gradients[1][c], gradients[2][c]).scale(scale);
        combined = combined + v.scale(LUMA_WEIGHTS[c]);
        total_weight += LUMA_WEIGHTS[c];
    }
    if total_weight <= 0.0 {
        return Err(EstimateError::DegeneratePixel);
    }
    let mean = combined.scale(1.0 / total_weight);
    if mean.norm() < 1e-9 {
        return Err(EstimateError::DegeneratePixel);
    }
    Direction3::from_vec(mean).map_err(|_| EstimateError::DegeneratePixel)
}

/// Initial specular normal: half-vector inversion of the reflection
/// gradient, `normalize(normalize([I_sx, I_sy, I_sz]) + omega_o)` on the
/// luminance response.
pub fn init_normal_s_pixel(
    gradient_lum: [f64; 3],
    omega_o: Direction3,
) -> Result<Direction3, EstimateError> {
    let g = Vec3::new(gradient_lum[0], gradient_lum[1], gradient_lum[2]);
    if g.norm() < 1e-9 {
        return Err(EstimateError::DegeneratePixel);
    }
    let reflection = g.normalized().map_err(|_| EstimateError::DegeneratePixel)?;
    Direction3::from_vec(reflection + omega_o.as_vec()).map_err(|_| EstimateError::DegeneratePixel)
}

/// Initial estimates plus per-pixel validity flags. Degenerate pixels carry
/// a zero normal in the maps and are skipped by the refinement stages.
#[derive(Debug, Clone)]
pub struct InitialEstimates {
    pub rho_d: Image,
    pub rho_s: Image,
    pub n_d: Image,
    pub n_s: Image,
    /// diffuse normal undefined (zero signal)
    pub degenerate_d: Vec<bool>,
    /// specular normal undefined (zero signal)
    pub degenerate_s: Vec<bool>,
    /// specular normal faces away from the camera; invalid for specular fits
    pub backfacing_s: Vec<bool>,
}

/// Full initialization: albedos from the cleaned sums, normals from the
/// gradient images. `omega_o` is the per-pixel view direction map.
pub fn initial_estimates(
    diffuse: &FrameStack,
    specular: &FrameStack,
    gradients_d: &[Image; 3],
    gradients_s: &[Image; 3],
    rig: &LightRig,
    omega_o: &Image,
) -> Result<InitialEstimates, EstimateError> {
    let (w, h) = (diffuse.width(), diffuse.height());
    let (rho_d, rho_s) = init_albedo(diffuse, specular, rig)?;
    let mut n_d = Image::zeros(w, h, 3);
    let mut n_s = Image::zeros(w, h, 3);
    let mut degenerate_d = vec![false; w * h];
    let mut degenerate_s = vec![false; w * h];
    let mut backfacing_s = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let grads_d = [gradients_d[0].rgb(x, y), gradients_d[1].rgb(x, y), gradients_d[2].rgb(x, y)];
            match init_normal_d_pixel(grads_d, rho_d.rgb(x, y)) {
                Ok(n) => n_d.set_rgb(x, y, [n.x(), n.y(), n.z()]),
                Err(_) => degenerate_d[p] = true,
            }
            let wo = {
                let v = omega_o.rgb(x, y);
                Direction3::new(v[0], v[1], v[2])
                    .map_err(|_| EstimateError::DimensionMismatch("omega_o map has a zero entry".into()))?
            };
            let grad_s_lum = [
                luminance(gradients_s[0].rgb(x, y)),
                luminance(gradients_s[1].rgb(x, y)),
                luminance(gradients_s[2].rgb(x, y)),
            ];
            match init_normal_s_pixel(grad_s_lum, wo) {
                Ok(n) => {
                    if n.dot(wo) <= 0.0 {
                        backfacing_s[p] = true;
                    }
                    n_s.set_rgb(x, y, [n.x(), n.y(), n.z()]);
                }
                Err(_) => degenerate_s[p] = true,
            }
        }
    }
    Ok(InitialEstimates { rho_d, rho_s, n_d, n_s, degenerate_d, degenerate_s, backfacing_s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::PixelSignal;
    use crate::geometry::spiral_directions;
    use crate::synth::{presets, render_olat, synthesize_gradient_images, ArtifactConfig};

    #[test]
    fn lambertian_albedo_recovers_within_three_percent() {
        let material = presets::flat_lambert(2, 2, [0.5, 0.5, 0.5]);
        let rig = LightRig::spiral(346, 1.0, None).unwrap();
        let stack =
            render_olat(&material, &rig, Direction3::PLUS_Z, &ArtifactConfig::none(), 0).unwrap();
        let (d, s) = stack.separate();
        let (rho_d, rho_s) = init_albedo(&d, &s, &rig).unwrap();
        for c in 0..3 {
            let got = rho_d.rgb(1, 1)[c];
            assert!((got - 0.5).abs() / 0.5 < 0.03, "channel {c}: {got}");
        }
        assert!(rho_s.gray(1, 1).abs() < 1e-6);
    }

    #[test]
    fn unit_albedo_single_pixel_within_two_percent() {
        let material = presets::flat_lambert(1, 1, [1.0, 1.0, 1.0]);
        let rig = LightRig::spiral(346, 1.0, None).unwrap();
        let stack =
            render_olat(&material, &rig, Direction3::PLUS_Z, &ArtifactConfig::none(), 0).unwrap();
        let (d, _) = stack.separate();
        let sig = PixelSignal::new(d.signal_at(0, 0));
        let got = init_rho_d_pixel(&sig.samples, &rig);
        // oracle: the analytic integral gives I_d = pi * L0 * rho_d, and the
        // estimator inverts it up to lattice discretization
        for c in 0..3 {
            assert!((got[c] - 1.0).abs() < 0.02, "channel {c}: {}", got[c]);
        }
    }

    #[test]
    fn zero_signal_gives_zero_albedo() {
        let rig = LightRig::spiral(64, 1.0, None).unwrap();
        let zeros = vec![[0.0; 3]; 64];
        assert_eq!(init_rho_d_pixel(&zeros, &rig), [0.0; 3]);
        assert_eq!(init_rho_s_pixel(&zeros, &rig), 0.0);
    }

    #[test]
    fn kappa_cancels_light_intensity() {
        let material = presets::flat_lambert(1, 1, [0.4, 0.4, 0.4]);
        let rig1 = LightRig::spiral(128, 1.0, None).unwrap();
        let rig2 = LightRig::spiral(128, 2.0, None).unwrap();
        let s1 = render_olat(&material, &rig1, Direction3::PLUS_Z, &ArtifactConfig::none(), 0)
            .unwrap();
        let s2 = render_olat(&material, &rig2, Direction3::PLUS_Z, &ArtifactConfig::none(), 0)
            .unwrap();
        let r1 = init_rho_d_pixel(&s1.separate().0.signal_at(0, 0), &rig1);
        let r2 = init_rho_d_pixel(&s2.separate().0.signal_at(0, 0), &rig2);
        for c in 0..3 {
            assert!((r1[c] - r2[c]).abs() < 1e-6);
        }
    }

    fn estimates_for(material: &crate::synth::GroundTruthMaterial, rig: &LightRig) -> InitialEstimates {
        let stack =
            render_olat(material, rig, Direction3::PLUS_Z, &ArtifactConfig::none(), 0).unwrap();
        let (d, s) = stack.separate();
        let gd = synthesize_gradient_images(&d, rig).unwrap();
        let gs = synthesize_gradient_images(&s, rig).unwrap();
        let mut wo = Image::zeros(material.width(), material.height(), 3);
        for y in 0..material.height() {
            for x in 0..material.width() {
                wo.set_rgb(x, y, [0.0, 0.0, 1.0]);
            }
        }
        initial_estimates(&d, &s, &gd, &gs, rig, &wo).unwrap()
    }

    #[test]
    fn lambert_normal_init_within_two_degrees() {
        let material = presets::flat_lambert(1, 1, [0.7, 0.6, 0.5]);
        let rig = LightRig::spiral(346, 1.0, None).unwrap();
        let est = estimates_for(&material, &rig);
        let v = est.n_d.rgb(0, 0);
        let n = Direction3::new(v[0], v[1], v[2]).unwrap();
        assert!(n.angle_deg(Direction3::PLUS_Z) < 2.0);
    }

    #[test]
    fn aligned_specular_normal_is_plus_z() {
        let mut material = presets::flat_lambert(1, 1, [0.3, 0.3, 0.3]);
        material.rho_s.set_gray(0, 0, 0.5);
        material.sigma.set_rgb(0, 0, [0.1, 0.1, 0.0]);
        let rig = LightRig::spiral(346, 1.0, None).unwrap();
        let est = estimates_for(&material, &rig);
        let v = est.n_s.rgb(0, 0);
        let n = Direction3::new(v[0], v[1], v[2]).unwrap();
        assert!(n.angle_deg(Direction3::PLUS_Z) < 1.0, "{:?}", v);
        assert!(!est.degenerate_s[0]);
        assert!(!est.backfacing_s[0]);
    }

    #[test]
    fn zero_diffuse_signal_is_degenerate() {
        let e = init_normal_d_pixel([[0.0; 3]; 3], [0.0; 3]).unwrap_err();
        assert_eq!(e, EstimateError::DegeneratePixel);
        let e = init_normal_s_pixel([0.0; 3], Direction3::PLUS_Z).unwrap_err();
        assert_eq!(e, EstimateError::DegeneratePixel);
    }

    #[test]
    fn normals_are_scale_invariant() {
        // scaling every intensity by a > 0 scales the gradients and rho by a;
        // the 1/rho ratio and the normalization both absorb it
        let g = [[0.2, 0.1, 0.05], [0.1, 0.06, 0.02], [0.6, 0.5, 0.4]];
        let rho = [0.5, 0.4, 0.3];
        let a = 7.3;
        let g_scaled = g.map(|row| row.map(|v| v * a));
        let rho_scaled = rho.map(|v| v * a);
        let n1 = init_normal_d_pixel(g, rho).unwrap();
        let n2 = init_normal_d_pixel(g_scaled, rho_scaled).unwrap();
        assert!(n1.angle_deg(n2) < 1e-9);

        let gs = [0.3, -0.2, 0.9];
        let m1 = init_normal_s_pixel(gs, Direction3::PLUS_Z).unwrap();
        let m2 = init_normal_s_pixel(gs.map(|v| v * a), Direction3::PLUS_Z).unwrap();
        assert!(m1.angle_deg(m2) < 1e-9);
    }

    #[test]
    fn normal_init_rotation_equivariance() {
        // rotate rig, ground truth and view by 40 degrees about y
        let angle = 40f64.to_radians();
        let (c, s) = (angle.cos(), angle.sin());
        let rot = |v: Vec3| Vec3::new(c * v.x + s * v.z, v.y, -s * v.x + c * v.z);

        let n0 = Direction3::new(0.2, -0.1, 0.97).unwrap();
        let mut m1 = presets::flat_lambert(1, 1, [0.6, 0.6, 0.6]);
        m1.n_d.set_rgb(0, 0, [n0.x(), n0.y(), n0.z()]);
        m1.n_s = m1.n_d.clone();

        let nr = Direction3::from_vec(rot(n0.as_vec())).unwrap();
        let mut m2 = m1.clone();
        m2.n_d.set_rgb(0, 0, [nr.x(), nr.y(), nr.z()]);
        m2.n_s = m2.n_d.clone();

        let rig = LightRig::spiral(346, 1.0, None).unwrap();
        let dirs_r: Vec<Direction3> = rig
            .directions()
            .iter()
            .map(|d| Direction3::from_vec(rot(d.as_vec())).unwrap())
            .collect();
        let rig_r = LightRig::new(dirs_r, 1.0, rig.solid_angle()).unwrap();

        let wo1 = Direction3::PLUS_Z;
        let wo2 = Direction3::from_vec(rot(wo1.as_vec())).unwrap();

        let s1 = render_olat(&m1, &rig, wo1, &ArtifactConfig::none(), 0).unwrap();
        let s2 = render_olat(&m2, &rig_r, wo2, &ArtifactConfig::none(), 0).unwrap();
        let g1 = synthesize_gradient_images(&s1.separate().0, &rig).unwrap();
        let g2 = synthesize_gradient_images(&s2.separate().0, &rig_r).unwrap();

        let rho = [0.6, 0.6, 0.6];
        let got1 = init_normal_d_pixel(
            [g1[0].rgb(0, 0), g1[1].rgb(0, 0), g1[2].rgb(0, 0)],
            rho,
        )
        .unwrap();
        let got2 = init_normal_d_pixel(
            [g2[0].rgb(0, 0), g2[1].rgb(0, 0), g2[2].rgb(0, 0)],
            rho,
        )
        .unwrap();
        let rotated = Direction3::from_vec(rot(got1.as_vec())).unwrap();
        assert!(rotated.angle_deg(got2) < 3.0);
    }

    #[test]
    fn random_normal_sweep_stays_accurate() {
        // 100 random normals in the visible hemisphere on a 10x10 plate
        let rig = LightRig::spiral(346, 1.0, None).unwrap();
        let mut material = presets::flat_lambert(10, 10, [0.65, 0.55, 0.45]);
        let mut state = 0xfeed_beefu64;
        let mut rand01 = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut truth = Vec::new();
        for y in 0..10 {
            for x in 0..10 {
                // z uniform in [0.45, 1): tilts up to ~63 degrees
                let z = 0.45 + 0.55 * rand01();
                let phi = std::f64::consts::TAU * rand01();
                let r = (1.0 - z * z).sqrt();
                let n = Direction3::new(r * phi.cos(), r * phi.sin(), z).unwrap();
                material.n_d.set_rgb(x, y, [n.x(), n.y(), n.z()]);
                truth.push(n);
            }
        }
        material.n_s = material.n_d.clone();
        let est = estimates_for(&material, &rig);
        let mut errors: Vec<f64> = Vec::new();
        for y in 0..10 {
            for x in 0..10 {
                let v = est.n_d.rgb(x, y);
                let n = Direction3::new(v[0], v[1], v[2]).unwrap();
                errors.push(n.angle_deg(truth[y * 10 + x]));
            }
        }
        errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = errors[errors.len() / 2];
        let max = errors.last().copied().unwrap();
        assert!(median <= 2.0, "median {median}");
        assert!(max <= 5.0, "max {max}");
    }

    #[test]
    fn spiral_lattice_mean_cosine_reference() {
        // reference point used by the albedo estimators
        let dirs = spiral_directions(346).unwrap();
        let mean: f64 =
            dirs.iter().map(|d| d.z().max(0.0)).sum::<f64>() / dirs.len() as f64;
        assert!((mean - 0.25).abs() < 0.01);
    }
}
