//! Recovery of spatially-varying reflectance from polarized OLAT captures.
//!
//! The pipeline separates cross/parallel-polarized one-light-at-a-time
//! sequences into diffuse and specular reflection, cleans overexposure,
//! estimates visibility/occlusion/inter-reflection, initializes albedos and
//! normals from synthesized gradient illumination, and refines normals, the
//! anisotropic specular lobe and albedos with per-pixel solvers. A synthetic
//! forward renderer doubles as the verification oracle.

pub mod capture;
pub mod estimate;
pub mod geometry;
pub mod io;
pub mod optimize;
pub mod polarization;
pub mod preprocess;
pub mod raster;
pub mod synth;

pub use capture::{separate, LightRig, PixelSignal, PolarizedOlatStack};
pub use geometry::{spiral_directions, CameraPose, Direction3, ShadingFrame, Vec3};
pub use polarization::{malus_intensity, polarizer_mueller, MuellerMatrix, StokesVector};
pub use raster::{luminance, FrameStack, Image};
