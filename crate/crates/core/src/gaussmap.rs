//! Vertex-bound Gaussians and the KNN Laplacian regulariser.
//!
//! Each mesh vertex owns exactly one Gaussian (vertex `i` <-> Gaussian `i`).
//! The Laplacian of a per-Gaussian field `x` is
//! `L(x)_i = x_i - sum_k w_ik * x_{j_k(i)}` over the `K` nearest neighbours
//! of Gaussian `i`, computed once on the bind-time positions and then frozen.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{read_ply, write_ply, GeometryError, KnnIndex, TriMesh};
use crate::Vec3;

#[derive(Debug, Error)]
pub enum GaussmapError {
    #[error("cannot bind Gaussians to an empty mesh")]
    EmptyMesh,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("neighbour count {k} needs at least {} points, got {n}", k + 1)]
    TooFewPoints { k: usize, n: usize },
    #[error("invalid Gaussian set: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GaussmapError> = std::result::Result<T, E>;

/// Object Gaussians never drop below this opacity.
pub const OBJECT_MIN_OPACITY: f64 = 0.5;
/// Hand Gaussians are fully opaque.
pub const HAND_MIN_OPACITY: f64 = 1.0;
/// Default neighbour count of the Laplacian stencil.
pub const DEFAULT_NEIGHBORS: usize = 8;

/// Per-element Gaussian attributes, struct-of-arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSet {
    pub positions: Vec<Vec3>,
    pub scales: Vec<Vec3>,
    pub colors: Vec<Vec3>,
    pub opacities: Vec<f64>,
    /// Unit quaternions stored `[w, x, y, z]`.
    pub orientations: Vec<[f64; 4]>,
    pub min_opacity: f64,
}

impl GaussianSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if [self.scales.len(), self.colors.len(), self.opacities.len(), self.orientations.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(GaussmapError::Invalid("attribute arrays differ in length".into()));
        }
        for i in 0..n {
            let q = self.orientations[i];
            let qn = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (qn - 1.0).abs() > 1e-6 {
                return Err(GaussmapError::Invalid(format!("quaternion {i} has norm {qn}")));
            }
            if self.scales[i].iter().any(|&s| !(s > 0.0)) {
                return Err(GaussmapError::Invalid(format!("scale {i} is not positive")));
            }
            let a = self.opacities[i];
            if !(self.min_opacity..=1.0).contains(&a) {
                return Err(GaussmapError::Invalid(format!("opacity {i} = {a} outside [{}, 1]", self.min_opacity)));
            }
        }
        Ok(())
    }

    /// Raises opacities to the floor and caps them at 1.
    pub fn enforce_opacity_floor(&mut self) {
        for a in &mut self.opacities {
            *a = a.clamp(self.min_opacity, 1.0);
        }
    }

    /// Writes a binary little-endian PLY with all-`double` vertex properties
    /// `x y z scale_x scale_y scale_z red green blue opacity quat_w quat_x quat_y quat_z`.
    pub fn save_ply(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let rows: Vec<Vec<f64>> = (0..self.len())
            .map(|i| {
                let (p, s, c, q) = (self.positions[i], self.scales[i], self.colors[i], self.orientations[i]);
                vec![p.x, p.y, p.z, s.x, s.y, s.z, c.x, c.y, c.z, self.opacities[i], q[0], q[1], q[2], q[3]]
            })
            .collect();
        let mut out = Vec::new();
        write_ply(&mut out, &PLY_FIELDS, &rows, &[], true)?;
        fs::write(path, out)?;
        Ok(())
    }

    /// Reads a PLY produced by [`GaussianSet::save_ply`] (any PLY encoding
    /// with the same property names works).
    pub fn load_ply(path: impl AsRef<Path>, min_opacity: f64) -> Result<Self> {
        let ply = read_ply(&fs::read(path)?)?;
        let cols: Vec<Vec<f64>> = PLY_FIELDS.iter().map(|f| ply.column(f)).collect::<Result<_, _>>()?;
        let n = cols[0].len();
        let v = |a: usize, i: usize| Vec3::new(cols[a][i], cols[a + 1][i], cols[a + 2][i]);
        let set = GaussianSet {
            positions: (0..n).map(|i| v(0, i)).collect(),
            scales: (0..n).map(|i| v(3, i)).collect(),
            colors: (0..n).map(|i| v(6, i)).collect(),
            opacities: cols[9].clone(),
            orientations: (0..n).map(|i| [cols[10][i], cols[11][i], cols[12][i], cols[13][i]]).collect(),
            min_opacity,
        };
        set.validate()?;
        Ok(set)
    }
}

const PLY_FIELDS: [&str; 14] = [
    "x", "y", "z", "scale_x", "scale_y", "scale_z", "red", "green", "blue", "opacity", "quat_w", "quat_x", "quat_y",
    "quat_z",
];

/// Identity pairing between mesh vertices and Gaussians, remembering the
/// bind-time vertex positions used as the Laplacian reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexGaussianMap {
    pub reference: Vec<Vec3>,
}

impl VertexGaussianMap {
    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    pub fn gaussian_of_vertex(&self, v: usize) -> Option<usize> {
        (v < self.len()).then_some(v)
    }

    pub fn vertex_of_gaussian(&self, g: usize) -> Option<usize> {
        (g < self.len()).then_some(g)
    }
}

/// Places one Gaussian on every vertex.
///
/// Scales are isotropic, half the mean length of the vertex's incident edges
/// (vertices without edges fall back to half the mean edge length of the
/// whole mesh, or 1e-3 for an edgeless mesh).
pub fn bind_vertices(mesh: &TriMesh, min_opacity: f64) -> Result<(GaussianSet, VertexGaussianMap)> {
    mesh.validate()?;
    if mesh.vertex_count() == 0 {
        return Err(GaussmapError::EmptyMesh);
    }
    if !(0.0..=1.0).contains(&min_opacity) {
        return Err(GaussmapError::Invalid(format!("minimum opacity {min_opacity} outside [0, 1]")));
    }
    let n = mesh.vertex_count();
    let mut edges: Vec<(usize, usize)> = mesh
        .faces
        .iter()
        .flat_map(|f| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
        .filter(|(a, b)| a != b)
        .collect();
    edges.sort_unstable();
    edges.dedup();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    let mut total = 0.0;
    for &(a, b) in &edges {
        let l = (mesh.vertices[a] - mesh.vertices[b]).norm();
        sum[a] += l;
        sum[b] += l;
        count[a] += 1;
        count[b] += 1;
        total += l;
    }
    let fallback = if edges.is_empty() { 1e-3 } else { 0.5 * total / edges.len() as f64 };
    let scales = (0..n)
        .map(|i| {
            let s = if count[i] > 0 { 0.5 * sum[i] / count[i] as f64 } else { fallback };
            Vec3::repeat(if s > 0.0 { s } else { fallback })
        })
        .collect();
    let set = GaussianSet {
        positions: mesh.vertices.clone(),
        scales,
        colors: vec![Vec3::repeat(0.5); n],
        opacities: vec![min_opacity; n],
        orientations: vec![[1.0, 0.0, 0.0, 0.0]; n],
        min_opacity,
    };
    Ok((set, VertexGaussianMap { reference: mesh.vertices.clone() }))
}

/// How neighbour weights are assigned within a stencil row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilWeights {
    /// `1/K` for every neighbour.
    #[default]
    Uniform,
    /// Proportional to `1/distance`, normalised per row. Coincident
    /// neighbours share the row equally.
    InverseDistance,
}

/// Frozen K-nearest-neighbour stencil, row-major `N x K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianStencil {
    pub k: usize,
    pub neighbors: Vec<usize>,
    pub weights: Vec<f64>,
}

impl LaplacianStencil {
    pub fn len(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.neighbors.len() / self.k
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = i * self.k..(i + 1) * self.k;
        (&self.neighbors[r.clone()], &self.weights[r])
    }
}

pub fn build_stencil(points: &[Vec3], k: usize) -> Result<LaplacianStencil> {
    build_stencil_with(points, k, StencilWeights::Uniform)
}

/// Neighbours are the `k` nearest other points (ties to the lower index).
pub fn build_stencil_with(points: &[Vec3], k: usize, scheme: StencilWeights) -> Result<LaplacianStencil> {
    if k == 0 || points.len() <= k {
        return Err(GaussmapError::TooFewPoints { k, n: points.len() });
    }
    let index = KnnIndex::from_points(points.to_vec());
    let mut neighbors = Vec::with_capacity(points.len() * k);
    let mut weights = Vec::with_capacity(points.len() * k);
    for (i, p) in points.iter().enumerate() {
        // Query one extra so self can be dropped; with duplicates self may
        // not come first, so filter by index.
        let found = index.query(p, k + 1)?;
        let row: Vec<_> = found.into_iter().filter(|nb| nb.index != i).take(k).collect();
        match scheme {
            StencilWeights::Uniform => weights.extend(std::iter::repeat_n(1.0 / k as f64, k)),
            StencilWeights::InverseDistance => {
                if row.iter().any(|nb| nb.distance == 0.0) {
                    let zeros = row.iter().filter(|nb| nb.distance == 0.0).count() as f64;
                    weights.extend(row.iter().map(|nb| if nb.distance == 0.0 { 1.0 / zeros } else { 0.0 }));
                } else {
                    let total: f64 = row.iter().map(|nb| 1.0 / nb.distance).sum();
                    weights.extend(row.iter().map(|nb| (1.0 / nb.distance) / total));
                }
            }
        }
        neighbors.extend(row.iter().map(|nb| nb.index));
    }
    Ok(LaplacianStencil { k, neighbors, weights })
}

fn check_rows(x: &[Vec3], stencil: &LaplacianStencil) -> Result<()> {
    if x.len() != stencil.len() {
        return Err(GaussmapError::Shape(format!("field has {} rows, stencil has {}", x.len(), stencil.len())));
    }
    Ok(())
}

/// `L(x)_i = x_i - sum_k w_ik x_{j_k(i)}`.
pub fn laplacian(x: &[Vec3], stencil: &LaplacianStencil) -> Result<Vec<Vec3>> {
    check_rows(x, stencil)?;
    Ok((0..x.len())
        .map(|i| {
            let (js, ws) = stencil.row(i);
            let mut acc = x[i];
            for (&j, &w) in js.iter().zip(ws) {
                acc -= x[j] * w;
            }
            acc
        })
        .collect())
}

/// `L^T y`: scatters each row's neighbour terms back onto the neighbours.
pub fn laplacian_transpose(y: &[Vec3], stencil: &LaplacianStencil) -> Result<Vec<Vec3>> {
    check_rows(y, stencil)?;
    let mut out = y.to_vec();
    for i in 0..y.len() {
        let (js, ws) = stencil.row(i);
        for (&j, &w) in js.iter().zip(ws) {
            out[j] -= y[i] * w;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacianWeights {
    pub position: f64,
    pub color: f64,
    pub scale: f64,
}

impl Default for LaplacianWeights {
    fn default() -> Self {
        Self { position: 1e5, color: 1e5, scale: 1e5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianLoss {
    pub value: f64,
    pub grad_positions: Vec<Vec3>,
    pub grad_colors: Vec<Vec3>,
    pub grad_scales: Vec<Vec3>,
}

/// `w_mu |L(mu) - L(V)|^2 + w_c |L(c)|^2 + w_s |L(s)|^2` (sums of squared
/// entries) with exact gradients `2 w L^T (residual)`.
pub fn laplacian_loss(
    positions: &[Vec3],
    reference: &[Vec3],
    colors: &[Vec3],
    scales: &[Vec3],
    weights: LaplacianWeights,
    stencil: &LaplacianStencil,
) -> Result<LaplacianLoss> {
    let n = positions.len();
    if reference.len() != n || colors.len() != n || scales.len() != n {
        return Err(GaussmapError::Shape(format!(
            "positions {n}, reference {}, colors {}, scales {}",
            reference.len(),
            colors.len(),
            scales.len()
        )));
    }
    let lv = laplacian(reference, stencil)?;
    let mut res_mu = laplacian(positions, stencil)?;
    for (r, v) in res_mu.iter_mut().zip(&lv) {
        *r -= v;
    }
    let res_c = laplacian(colors, stencil)?;
    let res_s = laplacian(scales, stencil)?;
    let sq = |r: &[Vec3]| r.iter().map(|v| v.norm_squared()).sum::<f64>();
    let value = weights.position * sq(&res_mu) + weights.color * sq(&res_c) + weights.scale * sq(&res_s);
    let grad = |r: Vec<Vec3>, w: f64| -> Result<Vec<Vec3>> {
        Ok(laplacian_transpose(&r, stencil)?.into_iter().map(|g| g * (2.0 * w)).collect())
    };
    Ok(LaplacianLoss {
        value,
        grad_positions: grad(res_mu, weights.position)?,
        grad_colors: grad(res_c, weights.color)?,
        grad_scales: grad(res_s, weights.scale)?,
    })
}

/// Adjacency used by some callers to sanity-check the stencil against mesh
/// edges: for each vertex, its distinct mesh neighbours.
pub fn mesh_adjacency(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
    }
    (0..mesh.vertex_count())
        .map(|i| {
            let mut v = adj.remove(&i).unwrap_or_default();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect()
}
