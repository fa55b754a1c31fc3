//! Procedural test shapes. All faces wind counter-clockwise seen from outside.

use std::collections::HashMap;

use super::TriMesh;
use crate::Vec3;

/// Axis-aligned unit cube `[0,1]^3`; faces come in pairs, one pair per side.
pub fn unit_cube() -> TriMesh {
    box_mesh(Vec3::repeat(0.5), Vec3::repeat(0.5))
}

/// Axis-aligned box with the given centre and half extents.
pub fn box_mesh(center: Vec3, half: Vec3) -> TriMesh {
    let corner = |i: usize| {
        Vec3::new(
            center.x + if i & 1 == 1 { half.x } else { -half.x },
            center.y + if i & 2 == 2 { half.y } else { -half.y },
            center.z + if i & 4 == 4 { half.z } else { -half.z },
        )
    };
    let vertices = (0..8).map(corner).collect();
    let quads = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let faces = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    TriMesh { vertices, faces }
}

/// Regular tetrahedron inscribed in the sphere of the given radius.
pub fn regular_tetrahedron(radius: f64) -> TriMesh {
    let s = radius / 3f64.sqrt();
    let vertices = vec![
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ];
    let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    TriMesh { vertices, faces }
}

/// Icosphere made by repeated 1-to-4 subdivision of an icosahedron.
///
/// Vertex count is `10 * 4^subdivisions + 2`.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    TriMesh { vertices, faces }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{is_watertight, vertex_normals};

    #[test]
    fn primitives_are_closed_and_outward() {
        for mesh in [unit_cube(), regular_tetrahedron(1.0), icosphere(1.0, 0), icosphere(2.0, 2)] {
            mesh.validate().unwrap();
            let w = is_watertight(&mesh);
            assert!(w.watertight);
            assert_eq!(w.euler_characteristic, 2);
            let (lo, hi) = mesh.bounds().unwrap();
            let c = (lo + hi) * 0.5;
            let vn = vertex_normals(&mesh);
            for (p, n) in mesh.vertices.iter().zip(&vn.normals) {
                assert!((p - c).dot(n) > 0.0);
            }
        }
        assert_eq!(icosphere(1.0, 3).vertex_count(), 642);
    }
}
