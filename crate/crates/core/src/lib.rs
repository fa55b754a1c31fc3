//! Physics-based hand-object interaction fitting.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: triangle meshes, point clouds, nearest-neighbour search,
//!   farthest point sampling, alpha-shape reconstruction and mesh I/O.
//! * [`gaussmap`]: one-to-one vertex/Gaussian binding and the KNN Laplacian
//!   regulariser with analytic gradients.
//! * [`hand`]: a linear-blend-skinned parametric hand with analytic Jacobians.
//! * [`hoiopt`]: penetration, contact, reposition and consistency losses and
//!   the Adam loop that fits the hand to a frozen object.
//! * [`refine`]: candidate translation grid, pre-filter and the mini-batch
//!   tournament driven by a pluggable (vision-language) selector.
//! * [`render`]: a small deterministic z-buffer rasterizer with PNG output.

pub mod gaussmap;
pub mod geometry;
pub mod hand;
pub mod hoiopt;
pub mod refine;
pub mod render;

pub use nalgebra;

/// Three-component `f64` vector used for positions, directions and normals.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 `f64` matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Lowercase hex SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
