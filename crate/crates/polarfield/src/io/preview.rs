//! False-color preview rendering (8-bit RGB buffers) and map statistics for
//! the `inspect` command.

use crate::raster::Image;

/// Map statistics per channel plus a unit-norm check for 3-channel maps.
#[derive(Debug, Clone)]
pub struct MapStats {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub mean: [f64; 3],
    /// Count of nonzero 3-channel pixels whose vector norm deviates from 1
    /// by more than 1e-3. Zero-filled pixels (undefined normals) are skipped.
    pub unit_norm_violations: usize,
    pub non_finite: usize,
}

pub fn map_stats(image: &Image) -> MapStats {
    let c = image.channels();
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    let mut sum = [0.0f64; 3];
    let mut non_finite = 0usize;
    let mut unit_norm_violations = 0usize;
    for y in 0..image.height() {
        for x in 0..image.width() {
            let v = image.rgb(x, y);
            for ch in 0..c {
                let val = v[ch];
                if !val.is_finite() {
                    non_finite += 1;
                    continue;
                }
                min[ch] = min[ch].min(val);
                max[ch] = max[ch].max(val);
                sum[ch] += val;
            }
            if c == 3 {
                let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if norm > 1e-6 && (norm - 1.0).abs() > 1e-3 {
                    unit_norm_violations += 1;
                }
            }
        }
    }
    let count = (image.width() * image.height()) as f64;
    MapStats {
        width: image.width(),
        height: image.height(),
        channels: c,
        min,
        max,
        mean: [sum[0] / count, sum[1] / count, sum[2] / count],
        unit_norm_violations,
        non_finite,
    }
}

/// Five-stop ramp approximating the usual perceptual colormaps.
fn ramp(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [0.267, 0.005, 0.329],
        [0.229, 0.322, 0.546],
        [0.128, 0.567, 0.551],
        [0.369, 0.789, 0.383],
        [0.993, 0.906, 0.144],
    ];
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        let v = STOPS[i][c] * (1.0 - f) + STOPS[i + 1][c] * f;
        out[c] = (v * 255.0).round() as u8;
    }
    out
}

/// False-color preview of a map, RGB8 row-major.
///
/// - 3-channel unit maps (normals): components mapped from [-1, 1] to RGB.
/// - scalar maps: normalized to the value range and run through a ramp.
/// - other RGB maps: tone-mapped by the max value with gamma 1/2.2.
pub fn false_color(image: &Image) -> Vec<u8> {
    let stats = map_stats(image);
    let looks_like_normals = image.channels() == 3
        && stats.min.iter().all(|v| *v >= -1.0 - 1e-6)
        && stats.max.iter().all(|v| *v <= 1.0 + 1e-6)
        && stats.min.iter().any(|v| *v < -1e-6);
    let mut out = Vec::with_capacity(image.width() * image.height() * 3);
    if image.channels() == 1 {
        let lo = stats.min[0];
        let span = (stats.max[0] - lo).max(1e-12);
        for y in 0..image.height() {
            for x in 0..image.width() {
                out.extend_from_slice(&ramp((image.gray(x, y) - lo) / span));
            }
        }
    } else if looks_like_normals {
        for y in 0..image.height() {
            for x in 0..image.width() {
                let v = image.rgb(x, y);
                for ch in 0..3 {
                    out.push((((v[ch] + 1.0) * 0.5).clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
    } else {
        let peak = stats.max.iter().cloned().fold(1e-12, f64::max);
        for y in 0..image.height() {
            for x in 0..image.width() {
                let v = image.rgb(x, y);
                for ch in 0..3 {
                    let t = (v[ch].max(0.0) / peak).powf(1.0 / 2.2);
                    out.push((t.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
    }
    out
}
