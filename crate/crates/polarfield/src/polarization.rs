//! Stokes vectors, Mueller matrices and Malus's law.
//!
//! Physical intensities are kept throughout: an ideal linear polarizer
//! halves unpolarized light, and the factor of 2 in the diffuse/specular
//! separation absorbs exactly that loss. (A common alternative drops the
//! global 1/2 when normalizing Stokes vectors; this crate does not.)

/// Malus's law: transmitted intensity of polarized light through an analyzer
/// at angle `theta` to its polarization axis.
pub fn malus_intensity(i0: f64, theta: f64) -> f64 {
    let c = theta.cos();
    i0 * c * c
}

/// Polarization state `[s0, s1, s2, s3]`; `s0` is total intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub fn unpolarized(intensity: f64) -> StokesVector {
        StokesVector { s0: intensity, s1: 0.0, s2: 0.0, s3: 0.0 }
    }

    pub fn total_intensity(&self) -> f64 {
        self.s0
    }

    /// Physical bound: s0 >= 0 and s1^2 + s2^2 + s3^2 <= s0^2 (with a small
    /// rounding allowance).
    pub fn is_physical(&self) -> bool {
        self.s0 >= 0.0
            && self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3
                <= self.s0 * self.s0 * (1.0 + 1e-12) + 1e-300
    }
}

/// 4x4 Mueller matrix acting on Stokes vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuellerMatrix(pub [[f64; 4]; 4]);

impl MuellerMatrix {
    pub fn identity() -> MuellerMatrix {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        MuellerMatrix(m)
    }

    pub fn apply(&self, s: StokesVector) -> StokesVector {
        let v = [s.s0, s.s1, s.s2, s.s3];
        let mut out = [0.0; 4];
        for (i, row) in self.0.iter().enumerate() {
            out[i] = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        }
        StokesVector { s0: out[0], s1: out[1], s2: out[2], s3: out[3] }
    }

    /// Matrix product `self * rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &MuellerMatrix) -> MuellerMatrix {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = (0..4).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        MuellerMatrix(out)
    }
}

/// Mueller matrix of an ideal linear polarizer at angle `theta` to the
/// reference axis.
pub fn polarizer_mueller(theta: f64) -> MuellerMatrix {
    let c = (2.0 * theta).cos();
    let s = (2.0 * theta).sin();
    MuellerMatrix([
        [0.5, 0.5 * c, 0.5 * s, 0.0],
        [0.5 * c, 0.5 * c * c, 0.5 * c * s, 0.0],
        [0.5 * s, 0.5 * c * s, 0.5 * s * s, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malus_endpoints() {
        assert_eq!(malus_intensity(1.0, 0.0), 1.0);
        assert!(malus_intensity(1.0, std::f64::consts::FRAC_PI_2).abs() < 1e-30);
        assert!((malus_intensity(2.0, std::f64::consts::FRAC_PI_4) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn polarizer_halves_unpolarized_light() {
        let s = polarizer_mueller(0.0).apply(StokesVector::unpolarized(1.0));
        assert!((s.s0 - 0.5).abs() < 1e-15);
        assert!((s.s1 - 0.5).abs() < 1e-15);
        assert!(s.s2.abs() < 1e-15 && s.s3.abs() < 1e-15);
        assert!(s.is_physical());
    }

    #[test]
    fn crossed_analyzer_blocks_everything() {
        let polarized = polarizer_mueller(0.0).apply(StokesVector::unpolarized(1.0));
        let out = polarizer_mueller(std::f64::consts::FRAC_PI_2).apply(polarized);
        assert!(out.total_intensity().abs() < 1e-15);
    }

    #[test]
    fn aligned_analyzer_passes_polarized_light() {
        // A linear-polarizer Mueller matrix is a projection: the aligned
        // analyzer costs nothing beyond the first polarizer's half loss.
        let polarized = polarizer_mueller(0.0).apply(StokesVector::unpolarized(1.0));
        let out = polarizer_mueller(0.0).apply(polarized);
        assert!((out.total_intensity() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn polarizer_matrix_shape() {
        let m = polarizer_mueller(0.37).0;
        assert!((m[0][0] - 0.5).abs() < 1e-15);
        assert!(m[3].iter().all(|v| *v == 0.0));
        // rank deficiency: last row/column zero
        assert!((0..4).all(|i| m[i][3] == 0.0));
    }

    #[test]
    fn malus_consistency_over_random_angles() {
        // polarizer(0) + analyzer(phi) on unpolarized light transmits
        // (1/2) cos^2(phi).
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..100 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let phi = (state >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
            let chain = polarizer_mueller(phi).compose(&polarizer_mueller(0.0));
            let out = chain.apply(StokesVector::unpolarized(1.0));
            let expected = 0.5 * phi.cos().powi(2);
            assert!(
                (out.total_intensity() - expected).abs() < 1e-12,
                "phi {phi}: {} vs {expected}",
                out.total_intensity()
            );
        }
    }

    #[test]
    fn mueller_round_trip_kills_all_stokes_vectors() {
        for i in 0..100 {
            let theta = i as f64 * 0.061;
            let chain =
                polarizer_mueller(theta + std::f64::consts::FRAC_PI_2).compose(&polarizer_mueller(theta));
            for s in [
                StokesVector::unpolarized(1.0),
                StokesVector { s0: 2.0, s1: 0.3, s2: -0.4, s3: 0.1 },
                StokesVector { s0: 1.0, s1: -1.0, s2: 0.0, s3: 0.0 },
            ] {
                let out = chain.apply(s);
                assert!(out.total_intensity().abs() < 1e-12);
            }
        }
    }
}
