//! Capture-side types: light rig, per-pixel signals, polarized OLAT stacks
//! and the diffuse/specular separation.

use thiserror::Error;

use crate::geometry::{spiral_directions, CameraPose, Direction3, GeometryError};
use crate::raster::{FrameStack, Image};

#[derive(Debug, Error, PartialEq)]
pub enum CaptureError {
    #[error("signal lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("signal is empty")]
    EmptySignal,
    #[error("stack dimensions inconsistent: {0}")]
    DimensionMismatch(String),
    #[error("rig is invalid: {0}")]
    InvalidRig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One pixel's length-N RGB intensity sequence; the unit of all estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelSignal {
    pub samples: Vec<[f64; 3]>,
}

impl PixelSignal {
    pub fn new(samples: Vec<[f64; 3]>) -> PixelSignal {
        PixelSignal { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn luminance(&self) -> Vec<f64> {
        self.samples.iter().map(|s| crate::raster::luminance(*s)).collect()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[c]).collect()
    }
}

/// The set of N incident light directions with the per-light radiometric
/// constants. `kappa = 1 / (L0 * A0)` converts summed intensities back to
/// albedo units.
#[derive(Debug, Clone, PartialEq)]
pub struct LightRig {
    directions: Vec<Direction3>,
    radiant_intensity: f64,
    solid_angle: f64,
}

impl LightRig {
    pub fn new(
        directions: Vec<Direction3>,
        radiant_intensity: f64,
        solid_angle: f64,
    ) -> Result<LightRig, CaptureError> {
        if directions.len() < 4 {
            return Err(CaptureError::InvalidRig(format!(
                "need at least 4 directions, got {}",
                directions.len()
            )));
        }
        if !(radiant_intensity > 0.0) || !(solid_angle > 0.0) {
            return Err(CaptureError::InvalidRig(
                "radiant intensity and solid angle must be positive".into(),
            ));
        }
        for (i, a) in directions.iter().enumerate() {
            for b in directions.iter().skip(i + 1) {
                if (a.as_vec() - b.as_vec()).norm() < 1e-12 {
                    return Err(CaptureError::InvalidRig(format!("duplicate direction at {i}")));
                }
            }
        }
        if directions.len() >= 32 {
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    for sz in [-1.0, 1.0] {
                        if !directions
                            .iter()
                            .any(|d| d.x() * sx > 0.0 && d.y() * sy > 0.0 && d.z() * sz > 0.0)
                        {
                            return Err(CaptureError::InvalidRig(format!(
                                "octant ({sx},{sy},{sz}) has no direction"
                            )));
                        }
                    }
                }
            }
        }
        Ok(LightRig { directions, radiant_intensity, solid_angle })
    }

    /// Spiral rig with N lights. When `solid_angle` is None the lights tile
    /// the sphere: A0 = 4 pi / N.
    pub fn spiral(n: usize, radiant_intensity: f64, solid_angle: Option<f64>) -> Result<LightRig, CaptureError> {
        let directions = spiral_directions(n)?;
        let a0 = solid_angle.unwrap_or(4.0 * std::f64::consts::PI / n as f64);
        LightRig::new(directions, radiant_intensity, a0)
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Direction3] {
        &self.directions
    }

    pub fn direction(&self, k: usize) -> Direction3 {
        self.directions[k]
    }

    pub fn radiant_intensity(&self) -> f64 {
        self.radiant_intensity
    }

    pub fn solid_angle(&self) -> f64 {
        self.solid_angle
    }

    /// Irradiance scale delivered by one light: L0 * A0.
    pub fn light_scale(&self) -> f64 {
        self.radiant_intensity * self.solid_angle
    }

    pub fn kappa(&self) -> f64 {
        1.0 / self.light_scale()
    }
}

/// Diffuse/specular separation of one pixel's cross/parallel sequences:
/// `d = 2*cross`, `s = max(2*parallel - 2*cross, 0)` per channel. Negative
/// specular differences (sensor noise) clamp to zero.
pub fn separate(
    cross: &PixelSignal,
    parallel: &PixelSignal,
) -> Result<(PixelSignal, PixelSignal), CaptureError> {
    if cross.len() != parallel.len() {
        return Err(CaptureError::LengthMismatch(cross.len(), parallel.len()));
    }
    let mut diffuse = Vec::with_capacity(cross.len());
    let mut specular = Vec::with_capacity(cross.len());
    for (c, p) in cross.samples.iter().zip(&parallel.samples) {
        let mut d = [0.0; 3];
        let mut s = [0.0; 3];
        for ch in 0..3 {
            d[ch] = 2.0 * c[ch];
            s[ch] = (2.0 * (p[ch] - c[ch])).max(0.0);
        }
        diffuse.push(d);
        specular.push(s);
    }
    Ok((PixelSignal::new(diffuse), PixelSignal::new(specular)))
}

/// Raw polarized OLAT capture: cross and parallel stacks plus the ambient
/// noise map (capture units).
#[derive(Debug, Clone)]
pub struct PolarizedOlatStack {
    pub cross: FrameStack,
    pub parallel: FrameStack,
    pub rig: LightRig,
    pub pose: CameraPose,
    pub ambient: Image,
}

impl PolarizedOlatStack {
    pub fn validate(&self, noise_floor: f64) -> Result<(), CaptureError> {
        if self.cross.len() != self.parallel.len() || self.cross.len() != self.rig.len() {
            return Err(CaptureError::DimensionMismatch(format!(
                "cross {} / parallel {} / rig {}",
                self.cross.len(),
                self.parallel.len(),
                self.rig.len()
            )));
        }
        if self.cross.width() != self.parallel.width()
            || self.cross.height() != self.parallel.height()
        {
            return Err(CaptureError::DimensionMismatch(format!(
                "cross {}x{} vs parallel {}x{}",
                self.cross.width(),
                self.cross.height(),
                self.parallel.width(),
                self.parallel.height()
            )));
        }
        for k in 0..self.cross.len() {
            let c = self.cross.frame(k);
            let p = self.parallel.frame(k);
            for (cv, pv) in c.data().iter().zip(p.data()) {
                if !cv.is_finite() || !pv.is_finite() || *cv < 0.0 || *pv < 0.0 {
                    return Err(CaptureError::DimensionMismatch(format!(
                        "non-finite or negative sample in frame {k}"
                    )));
                }
                // specular adds in expectation; allow the configured noise floor
                if (*pv as f64) < (*cv as f64) - noise_floor {
                    return Err(CaptureError::DimensionMismatch(format!(
                        "parallel < cross - noise floor in frame {k}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.cross.width()
    }

    pub fn height(&self) -> usize {
        self.cross.height()
    }

    /// Stack-level separation into diffuse and specular sequences.
    pub fn separate(&self) -> (FrameStack, FrameStack) {
        let n = self.cross.len();
        let (w, h) = (self.width(), self.height());
        let mut diffuse = FrameStack::zeros(n, w, h, 3);
        let mut specular = FrameStack::zeros(n, w, h, 3);
        for k in 0..n {
            let c = self.cross.frame(k).data();
            let p = self.parallel.frame(k).data();
            let d = diffuse.frame_mut(k).data_mut();
            let s = specular.frame_mut(k).data_mut();
            for i in 0..c.len() {
                d[i] = 2.0 * c[i];
                s[i] = (2.0 * (p[i] - c[i])).max(0.0);
            }
        }
        (diffuse, specular)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(vals: &[[f64; 3]]) -> PixelSignal {
        PixelSignal::new(vals.to_vec())
    }

    #[test]
    fn separate_direct_substitution() {
        let (d, s) = separate(&sig(&[[0.3; 3]]), &sig(&[[0.5; 3]])).unwrap();
        assert_eq!(d.samples[0], [0.6; 3]);
        assert!((s.samples[0][0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn separate_purely_diffuse() {
        let (d, s) = separate(&sig(&[[0.2; 3]]), &sig(&[[0.2; 3]])).unwrap();
        assert_eq!(d.samples[0], [0.4; 3]);
        assert_eq!(s.samples[0], [0.0; 3]);
    }

    #[test]
    fn separate_clamps_noise_negative() {
        let (_, s) = separate(&sig(&[[0.1; 3]]), &sig(&[[0.08; 3]])).unwrap();
        assert_eq!(s.samples[0], [0.0; 3]);
    }

    #[test]
    fn separate_rejects_length_mismatch() {
        let e = separate(&sig(&[[0.1; 3]]), &sig(&[[0.1; 3], [0.2; 3]])).unwrap_err();
        assert_eq!(e, CaptureError::LengthMismatch(1, 2));
    }

    #[test]
    fn rig_kappa_inverts_light_scale() {
        let rig = LightRig::spiral(64, 2.0, Some(0.25)).unwrap();
        assert!((rig.kappa() - 2.0).abs() < 1e-15);
        assert!((rig.kappa() * rig.light_scale() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rig_rejects_duplicates() {
        let d = Direction3::PLUS_Z;
        let dirs = vec![d, d, Direction3::PLUS_X, Direction3::PLUS_Y];
        assert!(LightRig::new(dirs, 1.0, 0.1).is_err());
    }
}
