//! Mesh and point-cloud kernel.

mod alpha;
mod delaunay;
mod fps;
mod io;
mod knn;
mod mesh;
mod predicates;
pub mod primitives;
mod upsample;

pub use alpha::{alpha_shape, is_inside, ConciseMesh};
pub use delaunay::Delaunay3;
pub use fps::farthest_point_sample;
pub use io::{load_mesh, save_mesh, MeshFormat};
pub(crate) use io::{read_ply, write_ply};
pub use knn::{nearest_on_set, KnnIndex, Neighbor};
pub use mesh::{is_watertight, vertex_normals, PointCloud, TriMesh, VertexNormals, Watertightness};
pub use upsample::{upsample_to_target, EdgeParent, Upsampled};

use thiserror::Error;

/// Errors raised by the geometry kernel.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("face {face} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange { face: usize, index: usize, vertex_count: usize },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("requested {requested} points but only {available} are available")]
    NotEnoughPoints { requested: usize, available: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("alpha complex is empty for alpha radius {alpha_radius}")]
    EmptyComplex { alpha_radius: f64 },

    #[error("upsampling target {target} is below the current vertex count {current}")]
    TargetBelowCurrent { target: usize, current: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;
