//! Directions, shading frames and camera geometry.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("spiral direction count must be at least 4, got {0}")]
    InvalidCount(usize),
    #[error("vector norm {0} too small to normalize")]
    Degenerate(f64),
    #[error("rotation matrix is not orthonormal (max deviation {0})")]
    NotOrthonormal(f64),
    #[error("rotation matrix determinant is {0}, expected +1")]
    NotProperRotation(f64),
}

/// Plain 3-vector used for all geometric math (f64 throughout).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn normalized(self) -> Result<Vec3, GeometryError> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(GeometryError::Degenerate(n));
        }
        Ok(self.scale(1.0 / n))
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A unit-length direction. Constructors normalize, so the unit invariant
/// holds to within 1e-9 at all times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction3(Vec3);

impl Direction3 {
    pub const PLUS_Z: Direction3 = Direction3(Vec3 { x: 0.0, y: 0.0, z: 1.0 });
    pub const PLUS_X: Direction3 = Direction3(Vec3 { x: 1.0, y: 0.0, z: 0.0 });
    pub const PLUS_Y: Direction3 = Direction3(Vec3 { x: 0.0, y: 1.0, z: 0.0 });

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        Ok(Direction3(Vec3::new(x, y, z).normalized()?))
    }

    pub fn from_vec(v: Vec3) -> Result<Self, GeometryError> {
        Ok(Direction3(v.normalized()?))
    }

    pub fn as_vec(self) -> Vec3 {
        self.0
    }

    pub fn x(self) -> f64 {
        self.0.x
    }

    pub fn y(self) -> f64 {
        self.0.y
    }

    pub fn z(self) -> f64 {
        self.0.z
    }

    pub fn dot(self, o: Direction3) -> f64 {
        self.0.dot(o.0)
    }

    pub fn flipped(self) -> Direction3 {
        Direction3(-self.0)
    }

    /// Angle to another direction, in degrees.
    pub fn angle_deg(self, o: Direction3) -> f64 {
        self.dot(o).clamp(-1.0, 1.0).acos().to_degrees()
    }
}

/// Orthonormal shading frame `[n, b, t]` (normal, bitangent, tangent) with
/// `n = t × b`. Built by Gram-Schmidt of the global +x axis against `n`,
/// falling back to +y when `n` is within ~0.6° of ±x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadingFrame {
    pub normal: Direction3,
    pub bitangent: Direction3,
    pub tangent: Direction3,
}

impl ShadingFrame {
    pub fn from_normal(normal: Direction3) -> ShadingFrame {
        let n = normal.as_vec();
        let reference = if normal.x().abs() > 0.999_95 {
            Vec3::new(0.0, 1.0, 0.0)
        } else {
            Vec3::new(1.0, 0.0, 0.0)
        };
        let tangent = (reference - n.scale(reference.dot(n)))
            .normalized()
            .expect("reference not parallel to normal");
        let bitangent = n.cross(tangent);
        ShadingFrame {
            normal,
            bitangent: Direction3(bitangent),
            tangent: Direction3(tangent),
        }
    }

    /// Any two orthonormal tangent-plane axes, for 2-DOF normal
    /// parameterizations. Same construction as `from_normal`.
    pub fn tangent_basis(normal: Direction3) -> (Vec3, Vec3) {
        let f = ShadingFrame::from_normal(normal);
        (f.tangent.as_vec(), f.bitangent.as_vec())
    }
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653; // pi * (3 - sqrt(5))

/// Directions on a golden-angle Fibonacci lattice, ordered from +z down to
/// -z (strictly decreasing z), covering the full sphere near-uniformly.
pub fn spiral_directions(n: usize) -> Result<Vec<Direction3>, GeometryError> {
    if n < 4 {
        return Err(GeometryError::InvalidCount(n));
    }
    let mut dirs = Vec::with_capacity(n);
    for k in 0..n {
        let z = 1.0 - (2 * k + 1) as f64 / n as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let phi = GOLDEN_ANGLE * k as f64;
        dirs.push(Direction3::new(r * phi.cos(), r * phi.sin(), z)?);
    }
    Ok(dirs)
}

fn mat_mul_vec(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Camera pose: world-to-camera rotation `R`, translation `t`, intrinsics `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraPose {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub intrinsics: [[f64; 3]; 3],
}

impl CameraPose {
    pub fn new(
        rotation: [[f64; 3]; 3],
        translation: [f64; 3],
        intrinsics: [[f64; 3]; 3],
    ) -> Result<Self, GeometryError> {
        // R R^T = I within 1e-9, det +1
        let mut max_dev: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut dot = 0.0;
                for k in 0..3 {
                    dot += rotation[i][k] * rotation[j][k];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                max_dev = max_dev.max((dot - expect).abs());
            }
        }
        if max_dev > 1e-9 {
            return Err(GeometryError::NotOrthonormal(max_dev));
        }
        let det = det3(&rotation);
        if (det - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NotProperRotation(det));
        }
        Ok(CameraPose { rotation, translation, intrinsics })
    }

    /// Identity pose looking down +z with unit intrinsics; used for desk-scale
    /// synthetic captures where the view direction is a constant.
    pub fn identity() -> CameraPose {
        CameraPose {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0, 0.0, 0.0],
            intrinsics: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Surface-to-camera direction for pixel (x, y): the reversed, world-frame
    /// camera ray through the pixel center.
    pub fn omega_o_for_pixel(&self, x: usize, y: usize) -> Result<Direction3, GeometryError> {
        let k = &self.intrinsics;
        // K is upper triangular; back-substitute K d = [x+0.5, y+0.5, 1].
        let px = x as f64 + 0.5;
        let py = y as f64 + 0.5;
        let dz = 1.0 / k[2][2];
        let dy = (py - k[1][2] * dz) / k[1][1];
        let dx = (px - k[0][1] * dy - k[0][2] * dz) / k[0][0];
        let cam_ray = Vec3::new(dx, dy, dz);
        // camera-to-world is R^T
        let world = Vec3::new(
            self.rotation[0][0] * cam_ray.x + self.rotation[1][0] * cam_ray.y + self.rotation[2][0] * cam_ray.z,
            self.rotation[0][1] * cam_ray.x + self.rotation[1][1] * cam_ray.y + self.rotation[2][1] * cam_ray.z,
            self.rotation[0][2] * cam_ray.x + self.rotation[1][2] * cam_ray.y + self.rotation[2][2] * cam_ray.z,
        );
        Direction3::from_vec(-world)
    }

    pub fn rotate_world(&self, v: Vec3) -> Vec3 {
        mat_mul_vec(&self.rotation, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spiral_rejects_small_counts() {
        assert_eq!(spiral_directions(3).unwrap_err(), GeometryError::InvalidCount(3));
        assert!(spiral_directions(4).is_ok());
    }

    #[test]
    fn spiral_endpoints_face_the_poles() {
        let dirs = spiral_directions(4).unwrap();
        assert!(dirs.first().unwrap().z() > 0.7);
        assert!(dirs.last().unwrap().z() < -0.7);
    }

    #[test]
    fn spiral_directions_are_unit_and_z_monotone() {
        let dirs = spiral_directions(346).unwrap();
        let mut prev_z = f64::INFINITY;
        for d in &dirs {
            assert!((d.as_vec().norm() - 1.0).abs() < 1e-12);
            assert!(d.z() < prev_z, "z must be strictly decreasing");
            prev_z = d.z();
        }
    }

    #[test]
    fn spiral_mean_z_is_balanced() {
        let dirs = spiral_directions(346).unwrap();
        let mean_z: f64 = dirs.iter().map(|d| d.z()).sum::<f64>() / dirs.len() as f64;
        assert!(mean_z.abs() < 0.02, "mean z {mean_z}");
    }

    #[test]
    fn spiral_hemisphere_cosine_matches_half() {
        // Average of e_z . w over the visible hemisphere; the lattice estimate
        // of the 0.500 constant.
        let dirs = spiral_directions(1000).unwrap();
        let (mut sum, mut count) = (0.0, 0usize);
        for d in &dirs {
            if d.z() > 0.0 {
                sum += d.z();
                count += 1;
            }
        }
        let y = sum / count as f64;
        assert!((0.49..=0.51).contains(&y), "hemisphere mean {y}");
    }

    #[test]
    fn spiral_covers_every_octant() {
        let dirs = spiral_directions(32).unwrap();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let hit = dirs
                        .iter()
                        .any(|d| d.x() * sx > 0.0 && d.y() * sy > 0.0 && d.z() * sz > 0.0);
                    assert!(hit, "octant ({sx},{sy},{sz}) empty");
                }
            }
        }
    }

    #[test]
    fn shading_frame_is_orthonormal_and_right_handed() {
        for dir in [
            Direction3::PLUS_Z,
            Direction3::new(0.3, -0.4, 0.87).unwrap(),
            Direction3::PLUS_X,
            Direction3::new(-1.0, 1e-6, 0.0).unwrap(),
        ] {
            let f = ShadingFrame::from_normal(dir);
            let n = f.normal.as_vec();
            let b = f.bitangent.as_vec();
            let t = f.tangent.as_vec();
            assert!(n.dot(b).abs() < 1e-9);
            assert!(n.dot(t).abs() < 1e-9);
            assert!(b.dot(t).abs() < 1e-9);
            let recon = t.cross(b);
            assert!((recon - n).norm() < 1e-9, "n = t x b violated");
        }
    }

    #[test]
    fn pinhole_omega_o_points_back_at_the_camera() {
        let pose = CameraPose::identity();
        let w = pose.omega_o_for_pixel(0, 0).unwrap();
        // ray through (0.5, 0.5, 1) reversed
        assert!(w.z() < 0.0);
        let expected = Direction3::new(-0.5, -0.5, -1.0).unwrap();
        assert!(w.angle_deg(expected) < 1e-9);
    }

    #[test]
    fn pose_validation_rejects_sheared_rotation() {
        let r = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let e = CameraPose::new(r, [0.0; 3], CameraPose::identity().intrinsics).unwrap_err();
        assert!(matches!(e, GeometryError::NotOrthonormal(_)));
    }
}
