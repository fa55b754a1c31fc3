use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::{GeometryError, Result, TriMesh};

/// Provenance of a vertex created by edge splitting:
/// `position = (1 - weight) * vertices[a] + weight * vertices[b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeParent {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Upsampled {
    pub mesh: TriMesh,
    /// Parent edge of every vertex with index `>= original vertex count`, in order.
    pub parents: Vec<EdgeParent>,
}

impl Upsampled {
    /// Propagates a per-vertex attribute to the new vertices by linear
    /// interpolation along parent edges.
    pub fn interpolate<T>(&self, original: &[T]) -> Vec<T>
    where
        T: Clone + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let mut out = original.to_vec();
        for p in &self.parents {
            let v = out[p.a].clone() * (1.0 - p.weight) + out[p.b].clone() * p.weight;
            out.push(v);
        }
        out
    }
}

#[derive(Debug, PartialEq)]
struct EdgeEntry {
    len2: f64,
    a: usize,
    b: usize,
}

impl Eq for EdgeEntry {}

impl Ord for EdgeEntry {
    // Longest first; equal lengths pop the lexicographically smallest edge.
    fn cmp(&self, other: &Self) -> Ordering {
        self.len2.total_cmp(&other.len2).then((other.a, other.b).cmp(&(self.a, self.b)))
    }
}

impl PartialOrd for EdgeEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Longest-edge midpoint subdivision until the mesh has at least `target` vertices.
///
/// Each step splits the currently longest edge (ties: smallest vertex pair)
/// at its midpoint, splitting every face incident to it in two with the
/// original winding. Existing vertices never move.
pub fn upsample_to_target(mesh: &TriMesh, target: usize) -> Result<Upsampled> {
    let current = mesh.vertex_count();
    if target < current {
        return Err(GeometryError::TargetBelowCurrent { target, current });
    }
    let mut vertices = mesh.vertices.clone();
    let mut faces = mesh.faces.clone();
    let mut parents = Vec::new();
    if target == current {
        return Ok(Upsampled { mesh: TriMesh { vertices, faces }, parents });
    }

    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            edge_faces.entry(key(f[k], f[(k + 1) % 3])).or_default().push(fi);
        }
    }
    let mut heap: BinaryHeap<EdgeEntry> = edge_faces
        .keys()
        .map(|&(a, b)| EdgeEntry { len2: (vertices[a] - vertices[b]).norm_squared(), a, b })
        .collect();

    while vertices.len() < target {
        let Some(EdgeEntry { a, b, .. }) = heap.pop() else {
            return Err(GeometryError::InvalidMesh("mesh has no edges to split".into()));
        };
        let Some(incident) = edge_faces.remove(&(a, b)) else { continue };
        let m = vertices.len();
        vertices.push((vertices[a] + vertices[b]) * 0.5);
        parents.push(EdgeParent { a, b, weight: 0.5 });

        let mut touched = vec![(a, m), (m, b)];
        for fi in incident {
            let f = faces[fi];
            let k = (0..3).find(|&k| key(f[k], f[(k + 1) % 3]) == (a, b)).expect("face owns the edge");
            let (p, q, r) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            // p->q is the split edge, r the opposite corner.
            let new_fi = faces.len();
            faces[fi] = [p, m, r];
            faces.push([m, q, r]);
            let qr = edge_faces.get_mut(&key(q, r)).expect("edge exists");
            if let Some(slot) = qr.iter_mut().find(|x| **x == fi) {
                *slot = new_fi;
            }
            edge_faces.entry(key(p, m)).or_default().push(fi);
            edge_faces.entry(key(m, q)).or_default().push(new_fi);
            edge_faces.entry(key(m, r)).or_default().extend([fi, new_fi]);
            touched.push((m, r));
        }
        for (x, y) in touched {
            let (x, y) = key(x, y);
            heap.push(EdgeEntry { len2: (vertices[x] - vertices[y]).norm_squared(), a: x, b: y });
        }
    }
    Ok(Upsampled { mesh: TriMesh { vertices, faces }, parents })
}
