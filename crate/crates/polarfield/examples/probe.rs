// scratch probe: specular correlation argmax with the ambient-noise gate applied
use polarfield::geometry::{spiral_directions, Direction3, ShadingFrame};
use polarfield::optimize::{NormalCorrelation, Objective};
use polarfield::synth::{ward_brdf, WardLobeParams};

fn main() {
    let all: Vec<Direction3> = spiral_directions(346).unwrap().into_iter().filter(|d| d.z() > 0.02).collect();
    for sigma in [0.05f64, 0.1] {
        let lobe = WardLobeParams::new(sigma, sigma, ShadingFrame::from_normal(Direction3::PLUS_Z)).unwrap();
        let full: Vec<f64> = all.iter().map(|wi| ward_brdf(*wi, Direction3::PLUS_Z, &lobe).unwrap_or(0.0)).collect();
        let peak = full.iter().cloned().fold(0.0, f64::max);
        for zeta_rel in [0.0f64, 1e-6, 1e-4, 1e-3, 1e-2] {
            let zeta = zeta_rel * peak;
            let mut dirs = Vec::new();
            let mut obs = Vec::new();
            for (d, o) in all.iter().zip(&full) {
                if *o > zeta { dirs.push(*d); obs.push(*o); }
            }
            if obs.len() < 3 { continue; }
            let obj = NormalCorrelation::specular(&dirs, &obs, Direction3::PLUS_Z, Direction3::PLUS_Z).unwrap();
            let mut best_val = f64::INFINITY;
            let mut best_uv = [0.0f64, 0.0];
            let r = 0.06;
            let steps = 240;
            for i in 0..=steps {
                for j in 0..=steps {
                    let u = -r + 2.0 * r * i as f64 / steps as f64;
                    let v = -r + 2.0 * r * j as f64 / steps as f64;
                    let val = obj.value(&[u, v]);
                    if val < best_val { best_val = val; best_uv = [u, v]; }
                }
            }
            let n_star = obj.normal_at(&best_uv);
            println!("sigma {sigma} zeta {zeta_rel:>7.0e}: kept {:3} samples, corr {:.6}, argmax angle {:.4} deg",
                obs.len(), -best_val, n_star.angle_deg(Direction3::PLUS_Z));
        }
    }
}
