//! Alpha-shape surface reconstruction.
//!
//! Convention: a Delaunay tetrahedron belongs to the complex iff its
//! circumradius is `<= alpha_radius`. Libraries that take an "alpha" value
//! use either this radius directly, its square, or its reciprocal; convert
//! before calling (e.g. a `1/alpha` style parameter of 0.1 is a radius of 10).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::delaunay::{circumradius, FACE};
use super::io::{read_ply, write_ply};
use super::{is_watertight, vertex_normals, Delaunay3, GeometryError, KnnIndex, Neighbor, PointCloud, Result, TriMesh};
use crate::Vec3;

/// Low-count closed surface with trusted outward vertex normals.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "ConciseMeshParts", into = "ConciseMeshParts")]
pub struct ConciseMesh {
    pub mesh: TriMesh,
    pub normals: Vec<Vec3>,
    /// For each vertex, its index in the point set it was reconstructed from.
    pub source_indices: Vec<usize>,
    pub watertight: bool,
    index: KnnIndex,
}

#[derive(Serialize, Deserialize)]
struct ConciseMeshParts {
    mesh: TriMesh,
    normals: Vec<Vec3>,
    source_indices: Vec<usize>,
}

impl From<ConciseMeshParts> for ConciseMesh {
    fn from(p: ConciseMeshParts) -> Self {
        ConciseMesh::assemble(p.mesh, p.normals, p.source_indices)
    }
}

impl From<ConciseMesh> for ConciseMeshParts {
    fn from(c: ConciseMesh) -> Self {
        ConciseMeshParts { mesh: c.mesh, normals: c.normals, source_indices: c.source_indices }
    }
}

impl ConciseMesh {
    /// Wraps a surface, computing area-weighted normals. Vertices whose
    /// normal is undefined fall back to the direction from the mesh centroid.
    pub fn from_mesh(mesh: TriMesh, source_indices: Vec<usize>) -> Result<Self> {
        mesh.validate()?;
        if source_indices.len() != mesh.vertex_count() {
            return Err(GeometryError::InvalidMesh("source index count differs from vertex count".into()));
        }
        let vn = vertex_normals(&mesh);
        let mut normals = vn.normals;
        if !vn.isolated.is_empty() {
            let centroid = mesh.vertices.iter().sum::<Vec3>() / mesh.vertex_count().max(1) as f64;
            for i in vn.isolated {
                let d = mesh.vertices[i] - centroid;
                normals[i] = if d.norm() > 0.0 { d.normalize() } else { Vec3::z() };
            }
        }
        Ok(Self::assemble(mesh, normals, source_indices))
    }

    /// Wraps a surface with caller-supplied normals (unit length within 1e-6).
    pub fn with_normals(mesh: TriMesh, normals: Vec<Vec3>, source_indices: Vec<usize>) -> Result<Self> {
        mesh.validate()?;
        if normals.len() != mesh.vertex_count() || source_indices.len() != mesh.vertex_count() {
            return Err(GeometryError::InvalidMesh("normal/source count differs from vertex count".into()));
        }
        if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(GeometryError::InvalidMesh(format!("normal {i} is not unit length")));
        }
        Ok(Self::assemble(mesh, normals, source_indices))
    }

    fn assemble(mesh: TriMesh, normals: Vec<Vec3>, source_indices: Vec<usize>) -> Self {
        let watertight = is_watertight(&mesh).watertight;
        let index = KnnIndex::from_points(mesh.vertices.clone());
        Self { mesh, normals, source_indices, watertight, index }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.mesh.vertices
    }

    pub fn index(&self) -> &KnnIndex {
        &self.index
    }

    /// Nearest mesh vertex; `None` for an empty mesh.
    pub fn nearest(&self, p: &Vec3) -> Option<Neighbor> {
        self.index.nearest(p)
    }

    /// Nearest-vertex normal sign test: inside iff `n . (p - v) < 0` for the
    /// nearest vertex `v`.
    pub fn contains(&self, p: &Vec3) -> bool {
        match self.nearest(p) {
            Some(nb) => self.normals[nb.index].dot(&(p - self.mesh.vertices[nb.index])) < 0.0,
            None => false,
        }
    }

    /// Rigidly transforms vertices and normals.
    pub fn transformed(&self, rotation: &crate::Mat3, translation: &Vec3) -> Self {
        let mesh = self.mesh.map_vertices(|v| rotation * v + translation);
        let normals = self.normals.iter().map(|n| rotation * n).collect();
        Self::assemble(mesh, normals, self.source_indices.clone())
    }

    /// Saves as PLY with `nx/ny/nz` normals and a `source_index` property.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .mesh
            .vertices
            .iter()
            .zip(&self.normals)
            .zip(&self.source_indices)
            .map(|((v, n), &s)| vec![v.x, v.y, v.z, n.x, n.y, n.z, s as f64])
            .collect();
        let mut out = Vec::new();
        write_ply(&mut out, &["x", "y", "z", "nx", "ny", "nz", "source_index"], &rows, &self.mesh.faces, false)?;
        fs::write(path, out)?;
        Ok(())
    }

    /// Loads a PLY written by [`ConciseMesh::save`]. Files without normals get
    /// recomputed normals; files without `source_index` get the identity.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ply = read_ply(&fs::read(path)?)?;
        let (x, y, z) = (ply.column("x")?, ply.column("y")?, ply.column("z")?);
        let vertices: Vec<Vec3> = (0..x.len()).map(|i| Vec3::new(x[i], y[i], z[i])).collect();
        let faces = ply
            .faces
            .iter()
            .flat_map(|p| (1..p.len() - 1).map(move |k| [p[0], p[k], p[k + 1]]))
            .collect();
        let mesh = TriMesh::new(vertices, faces)?;
        let source = match ply.column("source_index") {
            Ok(s) => s.into_iter().map(|v| v as usize).collect(),
            Err(_) => (0..mesh.vertex_count()).collect(),
        };
        match (ply.column("nx"), ply.column("ny"), ply.column("nz")) {
            (Ok(nx), Ok(ny), Ok(nz)) => {
                let normals = (0..nx.len()).map(|i| Vec3::new(nx[i], ny[i], nz[i])).collect();
                Self::with_normals(mesh, normals, source)
            }
            _ => Self::from_mesh(mesh, source),
        }
    }
}

/// Free-function form of [`ConciseMesh::contains`].
pub fn is_inside(point: &Vec3, mesh: &ConciseMesh) -> bool {
    mesh.contains(point)
}

/// Boundary of the union of Delaunay tetrahedra with circumradius `<= alpha_radius`.
///
/// Faces are oriented outward from the kept tetrahedra and only vertices used
/// by some boundary face are kept (in increasing source-index order).
pub fn alpha_shape(cloud: &PointCloud, alpha_radius: f64) -> Result<ConciseMesh> {
    if !(alpha_radius > 0.0) {
        return Err(GeometryError::Degenerate(format!("alpha radius must be positive, got {alpha_radius}")));
    }
    let pts = &cloud.points;
    let dt = Delaunay3::new(pts)?;
    let kept: Vec<[usize; 4]> = dt
        .finite_tets()
        .into_iter()
        .filter(|t| circumradius(&pts[t[0]], &pts[t[1]], &pts[t[2]], &pts[t[3]]) <= alpha_radius)
        .collect();
    if kept.is_empty() {
        return Err(GeometryError::EmptyComplex { alpha_radius });
    }

    let mut faces: HashMap<[usize; 3], Option<[usize; 3]>> = HashMap::new();
    for t in &kept {
        for f in FACE {
            let oriented = [t[f[0]], t[f[1]], t[f[2]]];
            let mut key = oriented;
            key.sort_unstable();
            faces.entry(key).and_modify(|e| *e = None).or_insert(Some(oriented));
        }
    }
    let mut boundary: Vec<[usize; 3]> = faces.into_values().flatten().collect();
    boundary.sort_unstable_by_key(|f| {
        let mut k = *f;
        k.sort_unstable();
        k
    });

    let mut used: Vec<usize> = boundary.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let mut remap = vec![usize::MAX; pts.len()];
    for (new, &old) in used.iter().enumerate() {
        remap[old] = new;
    }
    let mesh = TriMesh {
        vertices: used.iter().map(|&i| pts[i]).collect(),
        faces: boundary.iter().map(|f| f.map(|i| remap[i])).collect(),
    };
    ConciseMesh::from_mesh(mesh, used)
}
