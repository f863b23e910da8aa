//! Sequence cleaning and geometry-map estimation: overexposure removal,
//! per-light visibility, inter-reflection and occlusion.

use rayon::prelude::*;
use thiserror::Error;

use crate::capture::{LightRig, PixelSignal};
use crate::geometry::Direction3;
use crate::raster::{luminance, FrameStack, Image};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("signal is empty")]
    EmptySignal,
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("iterations must be at least 1")]
    InvalidIterations,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Per-sample boolean mask over an N x H x W x 3 stack.
#[derive(Debug, Clone)]
pub struct SampleMask {
    lights: usize,
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl SampleMask {
    fn zeros(lights: usize, width: usize, height: usize) -> SampleMask {
        SampleMask { lights, width, height, bits: vec![false; lights * width * height * 3] }
    }

    /// All-clear mask; stands in for masks that were not persisted when a
    /// pipeline resumes from cleaned dumps.
    pub fn empty(lights: usize, width: usize, height: usize) -> SampleMask {
        SampleMask::zeros(lights, width, height)
    }

    fn index(&self, k: usize, x: usize, y: usize, c: usize) -> usize {
        ((k * self.height + y) * self.width + x) * 3 + c
    }

    pub fn get(&self, k: usize, x: usize, y: usize, c: usize) -> bool {
        self.bits[self.index(k, x, y, c)]
    }

    fn set(&mut self, k: usize, x: usize, y: usize, c: usize) {
        let i = self.index(k, x, y, c);
        self.bits[i] = true;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn total(&self) -> usize {
        self.bits.len()
    }

    pub fn lights(&self) -> usize {
        self.lights
    }
}

/// Calibrated sequences after overexposure removal, plus the altered-sample
/// masks. Values outside the masks equal the separated input exactly.
#[derive(Debug, Clone)]
pub struct CleanStack {
    pub diffuse: FrameStack,
    pub specular: FrameStack,
    pub removed_diffuse: SampleMask,
    pub removed_specular: SampleMask,
}

fn auto_delta(values: &[f64], epsilon: f64) -> f64 {
    // mean after dropping the top 1% of samples, capped at eps/10 so that
    // delta << eps holds even on spike-inflated signals
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let drop = values.len().div_ceil(100);
    let keep = &sorted[..values.len() - drop.min(values.len() - 1)];
    let mean = keep.iter().sum::<f64>() / keep.len() as f64;
    mean.min(epsilon / 10.0).max(0.0)
}

/// One channel of Algorithm-1 cleaning. Per iteration: sort descending, find
/// the first consecutive gap above epsilon, replace the value at the gap with
/// the largest value below it plus delta. At most one sample changes per
/// iteration; sorting makes the result independent of light order.
fn clean_channel(
    values: &mut [f64],
    epsilon: f64,
    iterations: usize,
    delta: f64,
    mut on_replace: impl FnMut(usize),
) {
    let n = values.len();
    for _ in 0..iterations {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| values[*b].partial_cmp(&values[*a]).unwrap().then(a.cmp(b)));
        let mut break_at = None;
        for j in 0..n.saturating_sub(1) {
            if values[order[j]] - values[order[j + 1]] > epsilon {
                break_at = Some(j);
                break;
            }
        }
        let Some(j) = break_at else { break };
        let replacement = values[order[j + 1]] + delta;
        values[order[j]] = replacement;
        on_replace(order[j]);
    }
}

/// Overexposure removal on one pixel signal (Algorithm 1), with delta taken
/// from the signal itself.
pub fn remove_overexposure(
    signal: &PixelSignal,
    epsilon: f64,
    iterations: usize,
) -> Result<(PixelSignal, Vec<[bool; 3]>), PreprocessError> {
    remove_overexposure_with(signal, epsilon, iterations, None)
}

/// As [`remove_overexposure`] but with an explicit ambient replacement
/// offset delta (must satisfy delta << epsilon to keep cleaned values inside
/// the signal's continuity range).
pub fn remove_overexposure_with(
    signal: &PixelSignal,
    epsilon: f64,
    iterations: usize,
    delta: Option<f64>,
) -> Result<(PixelSignal, Vec<[bool; 3]>), PreprocessError> {
    if signal.is_empty() {
        return Err(PreprocessError::EmptySignal);
    }
    if !(epsilon > 0.0) {
        return Err(PreprocessError::InvalidEpsilon(epsilon));
    }
    if iterations == 0 {
        return Err(PreprocessError::InvalidIterations);
    }
    let mut samples = signal.samples.clone();
    let mut mask = vec![[false; 3]; samples.len()];
    for c in 0..3 {
        let mut channel: Vec<f64> = samples.iter().map(|s| s[c]).collect();
        let d = delta.unwrap_or_else(|| auto_delta(&channel, epsilon));
        clean_channel(&mut channel, epsilon, iterations, d, |k| mask[k][c] = true);
        for (s, v) in samples.iter_mut().zip(&channel) {
            s[c] = *v;
        }
    }
    Ok((PixelSignal::new(samples), mask))
}

/// Stack-level Algorithm 1 over both separated sequences.
pub fn clean_stack(
    diffuse: &FrameStack,
    specular: &FrameStack,
    epsilon: f64,
    iterations: usize,
) -> Result<CleanStack, PreprocessError> {
    if diffuse.len() != specular.len()
        || diffuse.width() != specular.width()
        || diffuse.height() != specular.height()
    {
        return Err(PreprocessError::DimensionMismatch(format!(
            "diffuse {}x{}x{} vs specular {}x{}x{}",
            diffuse.len(),
            diffuse.width(),
            diffuse.height(),
            specular.len(),
            specular.width(),
            specular.height()
        )));
    }
    let run = |stack: &FrameStack| -> Result<(FrameStack, SampleMask), PreprocessError> {
        let (n, w, h) = (stack.len(), stack.width(), stack.height());
        let mut out = stack.clone();
        let mut mask = SampleMask::zeros(n, w, h);
        let results: Vec<(usize, usize, PixelSignal, Vec<[bool; 3]>)> = (0..w * h)
            .into_par_iter()
            .map(|p| {
                let (x, y) = (p % w, p / w);
                let signal = PixelSignal::new(stack.signal_at(x, y));
                let (cleaned, m) =
                    remove_overexposure(&signal, epsilon, iterations).expect("nonempty");
                (x, y, cleaned, m)
            })
            .collect();
        for (x, y, cleaned, m) in results {
            out.write_signal(x, y, &cleaned.samples);
            for (k, flags) in m.iter().enumerate() {
                for (c, f) in flags.iter().enumerate() {
                    if *f {
                        mask.set(k, x, y, c);
                    }
                }
            }
        }
        Ok((out, mask))
    };
    let (clean_d, mask_d) = run(diffuse)?;
    let (clean_s, mask_s) = run(specular)?;
    Ok(CleanStack {
        diffuse: clean_d,
        specular: clean_s,
        removed_diffuse: mask_d,
        removed_specular: mask_s,
    })
}

/// Per-pixel ambient noise estimate: mean of the darkest 5% of frames,
/// per channel. Used when the capture supplies no ambient map.
pub fn default_zeta(stack: &FrameStack) -> Image {
    let (w, h) = (stack.width(), stack.height());
    let n = stack.len();
    let take = n.div_ceil(20).max(1);
    let mut zeta = Image::zeros(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let signal = stack.signal_at(x, y);
            let mut out = [0.0; 3];
            for (c, o) in out.iter_mut().enumerate() {
                let mut vals: Vec<f64> = signal.iter().map(|s| s[c]).collect();
                vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
                *o = vals[..take].iter().sum::<f64>() / take as f64;
            }
            zeta.set_rgb(x, y, out);
        }
    }
    zeta
}

fn above_zeta(sample: [f64; 3], zeta: [f64; 3]) -> bool {
    sample.iter().zip(&zeta).any(|(v, z)| v > z)
}

/// Per-light visibility: a light is visible when the response clears the
/// ambient noise in any channel and the light is above the horizon.
pub fn visibility(
    signal: &PixelSignal,
    zeta: [f64; 3],
    rig: &LightRig,
    n: Direction3,
) -> Vec<bool> {
    signal
        .samples
        .iter()
        .zip(rig.directions())
        .map(|(s, wi)| above_zeta(*s, zeta) && wi.dot(n) > 0.0)
        .collect()
}

/// Below-horizon energy attributed to inter-reflection, per channel:
/// `sum_k ind(I^k > zeta) * max(-wi.n, 0) * I^k`.
pub fn interreflection_pixel(signal: &PixelSignal, zeta: [f64; 3], rig: &LightRig, n: Direction3) -> [f64; 3] {
    let mut acc = [0.0; 3];
    for (s, wi) in signal.samples.iter().zip(rig.directions()) {
        if !above_zeta(*s, zeta) {
            continue;
        }
        let w = (-wi.dot(n)).max(0.0);
        for c in 0..3 {
            acc[c] += w * s[c];
        }
    }
    acc
}

/// Normalized occlusion: `(4/N) sum_k ind(I^k > zeta) * max(wi.n, 0)`.
/// The 4/N factor normalizes a fully visible hemisphere to 1 when the rig
/// covers the sphere.
pub fn occlusion_pixel(signal: &PixelSignal, zeta: [f64; 3], rig: &LightRig, n: Direction3) -> f64 {
    let sum: f64 = signal
        .samples
        .iter()
        .zip(rig.directions())
        .map(|(s, wi)| if above_zeta(*s, zeta) { wi.dot(n).max(0.0) } else { 0.0 })
        .sum();
    4.0 / rig.len() as f64 * sum
}

/// Shadow compensation `rho / max(tau, floor)`; the floor keeps deep-shadow
/// noise from blowing up.
pub fn shadow_compensate(albedo: &Image, tau: &Image, floor: f64) -> Result<Image, PreprocessError> {
    if albedo.width() != tau.width() || albedo.height() != tau.height() {
        return Err(PreprocessError::DimensionMismatch(format!(
            "albedo {}x{} vs tau {}x{}",
            albedo.width(),
            albedo.height(),
            tau.width(),
            tau.height()
        )));
    }
    if !(floor > 0.0) {
        return Err(PreprocessError::InvalidEpsilon(floor));
    }
    let mut out = albedo.clone();
    for y in 0..albedo.height() {
        for x in 0..albedo.width() {
            let t = tau.gray(x, y).max(floor);
            let v = albedo.rgb(x, y);
            out.set_rgb(x, y, [v[0] / t, v[1] / t, v[2] / t]);
        }
    }
    Ok(out)
}

/// Per-light visibility over a map, bit-packed per pixel in light order.
#[derive(Debug, Clone)]
pub struct VisibilityMap {
    width: usize,
    lights: usize,
    bits: Vec<bool>,
}

impl VisibilityMap {
    pub fn get(&self, x: usize, y: usize, k: usize) -> bool {
        self.bits[(y * self.width + x) * self.lights + k]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[bool] {
        let o = (y * self.width + x) * self.lights;
        &self.bits[o..o + self.lights]
    }

    /// Fraction of visible lights per pixel; the persisted summary of the
    /// per-light map.
    pub fn fraction_map(&self, width: usize, height: usize) -> Image {
        let mut img = Image::zeros(width, height, 1);
        for y in 0..height {
            for x in 0..width {
                let vis = self.pixel(x, y).iter().filter(|b| **b).count();
                img.set_gray(x, y, vis as f64 / self.lights as f64);
            }
        }
        img
    }
}

/// Visibility, occlusion and inter-reflection for the diffuse and specular
/// sequences of a cleaned stack.
#[derive(Debug, Clone)]
pub struct GeometryMaps {
    pub nu_d: VisibilityMap,
    pub nu_s: VisibilityMap,
    pub tau_d: Image,
    pub tau_s: Image,
    pub varrho_d: Image,
    pub varrho_s: Image,
}

/// Builds all geometry maps from cleaned sequences and (current-best)
/// normal maps. Run once with the initialized normals and once more after
/// refinement.
pub fn geometry_maps(
    clean: &CleanStack,
    n_d: &Image,
    n_s: &Image,
    zeta_d: &Image,
    zeta_s: &Image,
    rig: &LightRig,
) -> Result<GeometryMaps, PreprocessError> {
    let (w, h) = (clean.diffuse.width(), clean.diffuse.height());
    if clean.diffuse.len() != rig.len() {
        return Err(PreprocessError::DimensionMismatch(format!(
            "stack has {} frames, rig {} lights",
            clean.diffuse.len(),
            rig.len()
        )));
    }
    let n_lights = rig.len();
    let mut maps = GeometryMaps {
        nu_d: VisibilityMap { width: w, lights: n_lights, bits: vec![false; w * h * n_lights] },
        nu_s: VisibilityMap { width: w, lights: n_lights, bits: vec![false; w * h * n_lights] },
        tau_d: Image::zeros(w, h, 1),
        tau_s: Image::zeros(w, h, 1),
        varrho_d: Image::zeros(w, h, 3),
        varrho_s: Image::zeros(w, h, 1),
    };
    for y in 0..h {
        for x in 0..w {
            let nd = {
                let v = n_d.rgb(x, y);
                Direction3::new(v[0], v[1], v[2]).unwrap_or(Direction3::PLUS_Z)
            };
            let ns = {
                let v = n_s.rgb(x, y);
                Direction3::new(v[0], v[1], v[2]).unwrap_or(Direction3::PLUS_Z)
            };
            let zd = zeta_d.rgb(x, y);
            let zs = zeta_s.rgb(x, y);
            let sig_d = PixelSignal::new(clean.diffuse.signal_at(x, y));
            let sig_s = PixelSignal::new(clean.specular.signal_at(x, y));

            let vis_d = visibility(&sig_d, zd, rig, nd);
            let vis_s = visibility(&sig_s, zs, rig, ns);
            let base = (y * w + x) * n_lights;
            for k in 0..n_lights {
                maps.nu_d.bits[base + k] = vis_d[k];
                maps.nu_s.bits[base + k] = vis_s[k];
            }

            maps.tau_d.set_gray(x, y, occlusion_pixel(&sig_d, zd, rig, nd));
            maps.tau_s.set_gray(x, y, occlusion_pixel(&sig_s, zs, rig, ns));
            maps.varrho_d.set_rgb(x, y, interreflection_pixel(&sig_d, zd, rig, nd));
            let vr_s = interreflection_pixel(&sig_s, zs, rig, ns);
            maps.varrho_s.set_gray(x, y, luminance(vr_s));
        }
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_signal(vals: &[f64]) -> PixelSignal {
        PixelSignal::new(vals.iter().map(|v| [*v; 3]).collect())
    }

    #[test]
    fn algorithm1_hand_trace() {
        let sig = gray_signal(&[0.1, 0.2, 0.3, 5.0]);
        let (cleaned, mask) = remove_overexposure_with(&sig, 1.0, 2, Some(0.05)).unwrap();
        let got: Vec<f64> = cleaned.samples.iter().map(|s| s[0]).collect();
        for (a, b) in got.iter().zip(&[0.1, 0.2, 0.3, 0.35]) {
            assert!((a - b).abs() < 1e-12, "{got:?}");
        }
        assert!(mask[3][0] && !mask[0][0] && !mask[1][0] && !mask[2][0]);
    }

    #[test]
    fn algorithm1_leaves_smooth_signals_alone() {
        let sig = gray_signal(&[0.1, 0.2, 0.3]);
        let (cleaned, mask) = remove_overexposure(&sig, 1.0, 2).unwrap();
        assert_eq!(cleaned.samples, sig.samples);
        assert!(mask.iter().all(|m| !m[0] && !m[1] && !m[2]));
    }

    #[test]
    fn algorithm1_is_idempotent_on_clean_signals() {
        let sig = gray_signal(&[0.1, 0.9, 0.4, 6.0, 0.2]);
        let (once, _) = remove_overexposure(&sig, 1.0, 2).unwrap();
        let (twice, mask) = remove_overexposure(&once, 1.0, 2).unwrap();
        assert_eq!(once.samples, twice.samples);
        assert!(mask.iter().all(|m| !m[0]));
    }

    #[test]
    fn algorithm1_damage_bound_one_sample_per_iteration() {
        let sig = gray_signal(&[0.1, 7.0, 0.2, 9.0, 0.3, 8.0]);
        let (_, mask1) = remove_overexposure(&sig, 1.0, 1).unwrap();
        assert_eq!(mask1.iter().filter(|m| m[0]).count(), 1);
        let (_, mask2) = remove_overexposure(&sig, 1.0, 2).unwrap();
        assert_eq!(mask2.iter().filter(|m| m[0]).count(), 2);
    }

    #[test]
    fn algorithm1_two_pulses_peeled_by_two_iterations() {
        let sig = gray_signal(&[0.15, 6.0, 0.1, 0.2, 6.01, 0.3]);
        let (cleaned, _) = remove_overexposure_with(&sig, 1.0, 2, Some(0.01)).unwrap();
        let max = cleaned.samples.iter().map(|s| s[0]).fold(f64::MIN, f64::max);
        assert!(max < 0.5, "pulses must be gone, max {max}");
    }

    #[test]
    fn algorithm1_order_invariance() {
        let base = vec![0.1, 0.5, 4.2, 0.3, 0.2, 0.45, 0.05];
        let perm = [3usize, 0, 6, 2, 5, 1, 4];
        let sig = gray_signal(&base);
        let permuted: Vec<f64> = perm.iter().map(|i| base[*i]).collect();
        let sig_p = gray_signal(&permuted);
        let (clean_a, _) = remove_overexposure_with(&sig, 1.0, 2, Some(0.01)).unwrap();
        let (clean_b, _) = remove_overexposure_with(&sig_p, 1.0, 2, Some(0.01)).unwrap();
        for (j, i) in perm.iter().enumerate() {
            assert!((clean_a.samples[*i][0] - clean_b.samples[j][0]).abs() < 1e-12);
        }
    }

    #[test]
    fn algorithm1_rejects_bad_arguments() {
        assert_eq!(
            remove_overexposure(&PixelSignal::new(vec![]), 1.0, 2).unwrap_err(),
            PreprocessError::EmptySignal
        );
        assert!(matches!(
            remove_overexposure(&gray_signal(&[1.0]), 0.0, 2),
            Err(PreprocessError::InvalidEpsilon(_))
        ));
        assert_eq!(
            remove_overexposure(&gray_signal(&[1.0]), 1.0, 0).unwrap_err(),
            PreprocessError::InvalidIterations
        );
    }

    #[test]
    fn auto_delta_is_small_against_epsilon() {
        // spike-inflated signal: the mean alone would exceed eps/10
        let mut vals = vec![0.2; 100];
        vals[7] = 50.0;
        let d = auto_delta(&vals, 1.0);
        assert!(d <= 0.1 + 1e-12);
        assert!(d > 0.0);
    }

    #[test]
    fn visibility_dark_signal_is_invisible() {
        let rig = LightRig::spiral(8, 1.0, None).unwrap();
        let sig = gray_signal(&[0.0; 8]);
        let vis = visibility(&sig, [0.01; 3], &rig, Direction3::PLUS_Z);
        assert!(vis.iter().all(|v| !v));
    }

    #[test]
    fn visibility_horizon_constraint_wins() {
        let rig = LightRig::spiral(8, 1.0, None).unwrap();
        // bright everywhere, but lights below the horizon stay invisible
        let sig = gray_signal(&[1.0; 8]);
        let vis = visibility(&sig, [0.01; 3], &rig, Direction3::PLUS_Z);
        for (v, wi) in vis.iter().zip(rig.directions()) {
            assert_eq!(*v, wi.z() > 0.0);
        }
    }

    #[test]
    fn interreflection_single_term() {
        let rig = LightRig::spiral(64, 1.0, None).unwrap();
        // find a light well below the horizon and inject energy there
        let k = rig
            .directions()
            .iter()
            .position(|d| d.z() < -0.75)
            .expect("spiral reaches -z");
        let eta = -rig.direction(k).z();
        let mut vals = vec![[0.0; 3]; 64];
        vals[k] = [0.5, 0.5, 0.5];
        let sig = PixelSignal::new(vals);
        let got = interreflection_pixel(&sig, [1e-6; 3], &rig, Direction3::PLUS_Z);
        for c in 0..3 {
            assert!((got[c] - eta * 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn interreflection_zero_on_clean_convex_signal() {
        let rig = LightRig::spiral(64, 1.0, None).unwrap();
        let vals: Vec<[f64; 3]> =
            rig.directions().iter().map(|d| [d.z().max(0.0); 3]).collect();
        let sig = PixelSignal::new(vals);
        let got = interreflection_pixel(&sig, [1e-9; 3], &rig, Direction3::PLUS_Z);
        assert_eq!(got, [0.0; 3]);
    }

    #[test]
    fn occlusion_of_fully_visible_pixel_is_one() {
        let rig = LightRig::spiral(346, 1.0, None).unwrap();
        let vals: Vec<[f64; 3]> =
            rig.directions().iter().map(|d| [d.z().max(0.0); 3]).collect();
        let sig = PixelSignal::new(vals);
        let tau = occlusion_pixel(&sig, [1e-9; 3], &rig, Direction3::PLUS_Z);
        assert!((tau - 1.0).abs() < 0.05, "tau {tau}");
    }

    #[test]
    fn occlusion_of_shadowed_pixel_is_zero() {
        let rig = LightRig::spiral(32, 1.0, None).unwrap();
        let sig = gray_signal(&[0.0; 32]);
        assert_eq!(occlusion_pixel(&sig, [0.01; 3], &rig, Direction3::PLUS_Z), 0.0);
    }

    #[test]
    fn occlusion_half_hemisphere_is_half() {
        let rig = LightRig::spiral(346, 1.0, None).unwrap();
        let vals: Vec<[f64; 3]> = rig
            .directions()
            .iter()
            .map(|d| if d.x() > 0.0 { [0.0; 3] } else { [d.z().max(0.0); 3] })
            .collect();
        let sig = PixelSignal::new(vals);
        let tau = occlusion_pixel(&sig, [1e-9; 3], &rig, Direction3::PLUS_Z);

        // oracle: Monte Carlo of the integral form over the unit sphere
        let mut state = 42u64;
        let mut rand01 = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let m = 200_000;
        let mut acc = 0.0;
        for _ in 0..m {
            let z: f64 = 1.0 - 2.0 * rand01();
            let phi = std::f64::consts::TAU * rand01();
            let r = (1.0 - z * z).sqrt();
            let (x, _y) = (r * phi.cos(), r * phi.sin());
            if x <= 0.0 {
                acc += z.max(0.0);
            }
        }
        let oracle = 4.0 * acc / m as f64;
        assert!((tau - oracle).abs() < 0.03, "tau {tau} vs oracle {oracle}");
        assert!((tau - 0.5).abs() < 0.05);
    }

    #[test]
    fn occlusion_bounds_hold() {
        let rig = LightRig::spiral(64, 1.0, None).unwrap();
        let sig = gray_signal(&[10.0; 64]);
        let tau = occlusion_pixel(&sig, [0.0; 3], &rig, Direction3::PLUS_Z);
        assert!((0.0..=4.0).contains(&tau));
    }

    #[test]
    fn shadow_compensation_cases() {
        let mut albedo = Image::zeros(2, 1, 3);
        albedo.set_rgb(0, 0, [0.3, 0.3, 0.3]);
        albedo.set_rgb(1, 0, [0.3, 0.3, 0.3]);
        let mut tau = Image::zeros(2, 1, 1);
        tau.set_gray(0, 0, 1.0);
        tau.set_gray(1, 0, 0.5);
        let out = shadow_compensate(&albedo, &tau, 0.05).unwrap();
        assert!((out.rgb(0, 0)[0] - 0.3).abs() < 1e-6);
        assert!((out.rgb(1, 0)[0] - 0.6).abs() < 1e-6);

        let mut tiny = Image::zeros(2, 1, 1);
        tiny.set_gray(0, 0, 1e-6);
        tiny.set_gray(1, 0, 1e-6);
        let clamped = shadow_compensate(&albedo, &tiny, 0.05).unwrap();
        assert!((clamped.rgb(0, 0)[0] - 6.0).abs() < 1e-5);
    }

    #[test]
    fn default_zeta_of_dark_floor() {
        let mut stack = FrameStack::zeros(20, 1, 1, 3);
        for k in 0..20 {
            let v = if k < 2 { 0.001 } else { 0.5 + k as f64 * 0.01 };
            stack.frame_mut(k).set_rgb(0, 0, [v; 3]);
        }
        let zeta = default_zeta(&stack);
        assert!((zeta.rgb(0, 0)[0] - 0.001).abs() < 1e-9);
    }
}
