use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{GeometryError, Result};
use crate::Vec3;

/// Indexed triangle surface.
///
/// Faces are stored as vertex-index triples and keep the winding they were
/// created or loaded with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    /// Builds a mesh and checks its invariants.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Every face index in range, no face repeating a vertex, finite coordinates.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(GeometryError::InvalidMesh(format!("vertex {i} has a non-finite coordinate")));
            }
        }
        for (fi, f) in self.faces.iter().enumerate() {
            for &idx in f {
                if idx >= n {
                    return Err(GeometryError::IndexOutOfRange { face: fi, index: idx, vertex_count: n });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(GeometryError::InvalidMesh(format!("face {fi} repeats a vertex: {f:?}")));
            }
        }
        Ok(())
    }

    /// Twice the area-weighted normal of face `fi` (unnormalised cross product).
    pub fn face_cross(&self, fi: usize) -> Vec3 {
        let [a, b, c] = self.faces[fi];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (pb - pa).cross(&(pc - pa))
    }

    pub fn face_area(&self, fi: usize) -> f64 {
        0.5 * self.face_cross(fi).norm()
    }

    /// Axis-aligned bounds `(min, max)`; `None` for an empty mesh.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        bounds_of(&self.vertices)
    }

    /// Applies `f` to every vertex.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> TriMesh {
        TriMesh { vertices: self.vertices.iter().map(f).collect(), faces: self.faces.clone() }
    }
}

pub(crate) fn bounds_of(points: &[Vec3]) -> Option<(Vec3, Vec3)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
}

/// Unstructured set of 3D points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(GeometryError::InvalidMesh(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl From<&TriMesh> for PointCloud {
    fn from(mesh: &TriMesh) -> Self {
        Self { points: mesh.vertices.clone() }
    }
}

/// Per-vertex unit normals plus the vertices that received no face contribution.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexNormals {
    pub normals: Vec<Vec3>,
    /// Vertices with no non-degenerate incident face (or whose incident
    /// normals cancel); their normal is the zero vector.
    pub isolated: Vec<usize>,
}

/// Area-weighted vertex normals.
///
/// Each face contributes its unnormalised cross product (twice its area times
/// its unit normal) to its three corners. Faces of zero area contribute
/// nothing. Accumulation runs in face order so results are reproducible.
pub fn vertex_normals(mesh: &TriMesh) -> VertexNormals {
    let mut acc = vec![Vec3::zeros(); mesh.vertices.len()];
    for fi in 0..mesh.faces.len() {
        let n = mesh.face_cross(fi);
        if n.norm_squared() == 0.0 {
            continue;
        }
        for &v in &mesh.faces[fi] {
            acc[v] += n;
        }
    }
    let mut isolated = Vec::new();
    let normals = acc
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                isolated.push(i);
                Vec3::zeros()
            }
        })
        .collect();
    VertexNormals { normals, isolated }
}

/// Result of [`is_watertight`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Watertightness {
    pub watertight: bool,
    /// `V - E + F` over all stored vertices, unique undirected edges and faces.
    pub euler_characteristic: i64,
}

/// Closed, consistently oriented 2-manifold edge check plus Euler characteristic.
///
/// An edge passes when exactly two non-degenerate faces use it, once in each
/// direction. Degenerate (zero-area) faces are skipped by the manifold test but
/// still counted in `V - E + F`.
pub fn is_watertight(mesh: &TriMesh) -> Watertightness {
    let mut undirected: HashMap<(usize, usize), ()> = HashMap::new();
    let mut directed: HashMap<(usize, usize), u32> = HashMap::new();
    for (fi, f) in mesh.faces.iter().enumerate() {
        let degenerate = mesh.face_cross(fi).norm_squared() == 0.0;
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            undirected.insert((a.min(b), a.max(b)), ());
            if !degenerate {
                *directed.entry((a, b)).or_default() += 1;
            }
        }
    }
    let manifold = !directed.is_empty()
        && directed.iter().all(|(&(a, b), &count)| count == 1 && directed.get(&(b, a)) == Some(&1));
    let euler = mesh.vertices.len() as i64 - undirected.len() as i64 + mesh.faces.len() as i64;
    Watertightness { watertight: manifold, euler_characteristic: euler }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives::{icosphere, unit_cube};
    use nalgebra::Rotation3;

    #[test]
    fn rejects_bad_faces() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(matches!(
            TriMesh::new(v.clone(), vec![[0, 1, 5]]),
            Err(GeometryError::IndexOutOfRange { index: 5, .. })
        ));
        assert!(matches!(TriMesh::new(v, vec![[0, 1, 1]]), Err(GeometryError::InvalidMesh(_))));
    }

    #[test]
    fn planar_square_normals_point_up() {
        let mesh = TriMesh::new(
            vec![Vec3::new(0., 0., 0.), Vec3::new(1., 0., 0.), Vec3::new(1., 1., 0.), Vec3::new(0., 1., 0.)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let vn = vertex_normals(&mesh);
        assert!(vn.isolated.is_empty());
        for n in vn.normals {
            assert_eq!(n, Vec3::z());
        }
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let mesh = icosphere(1.0, 2);
        let vn = vertex_normals(&mesh);
        let max_angle = mesh
            .vertices
            .iter()
            .zip(&vn.normals)
            .map(|(p, n)| p.normalize().dot(n).clamp(-1.0, 1.0).acos().to_degrees())
            .fold(0.0, f64::max);
        assert!(max_angle < 2.0, "max deviation {max_angle} deg");
    }

    #[test]
    fn zero_area_face_is_ignored() {
        let mesh = TriMesh::new(
            vec![Vec3::new(0., 0., 0.), Vec3::new(1., 0., 0.), Vec3::new(0., 1., 0.), Vec3::new(2., 0., 0.)],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        let vn = vertex_normals(&mesh);
        assert!(vn.normals[..3].iter().all(|n| n.iter().all(|c| c.is_finite())));
        assert_eq!(vn.normals[0], Vec3::z());
        assert_eq!(vn.isolated, vec![3]);
    }

    #[test]
    fn normals_are_rotation_equivariant() {
        let mesh = icosphere(0.7, 1).map_vertices(|p| Vec3::new(p.x * 2.0, p.y, p.z * 0.5));
        let rot = Rotation3::from_scaled_axis(Vec3::new(0.3, -1.1, 0.4));
        let rotated = mesh.map_vertices(|p| rot * p);
        let a = vertex_normals(&mesh).normals;
        let b = vertex_normals(&rotated).normals;
        for (na, nb) in a.iter().zip(&b) {
            assert!((rot * na - nb).norm() < 1e-9);
        }
    }

    #[test]
    fn cube_watertightness() {
        let cube = unit_cube();
        assert_eq!(is_watertight(&cube), Watertightness { watertight: true, euler_characteristic: 2 });

        // Removing one square side drops two triangles and their shared diagonal:
        // V = 8, E = 18 - 1 = 17, F = 10.
        let mut open = cube.clone();
        open.faces.truncate(10);
        assert_eq!(is_watertight(&open), Watertightness { watertight: false, euler_characteristic: 1 });

        let tri = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        assert_eq!(is_watertight(&tri), Watertightness { watertight: false, euler_characteristic: 1 });
    }

    #[test]
    fn flipped_face_breaks_orientation() {
        let mut cube = unit_cube();
        cube.faces[0].swap(1, 2);
        assert!(!is_watertight(&cube).watertight);
    }
}
