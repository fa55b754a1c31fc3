//! Incremental (Bowyer-Watson) 3D Delaunay tetrahedralization.
//!
//! Points are inserted into an enclosing super-tetrahedron. Exact predicates
//! plus symbolic perturbation of the in-sphere test make every cavity
//! star-shaped, so the construction never needs numerical tolerances. Finite
//! tetrahedra whose circumsphere would contain a super vertex (circumradius on
//! the order of `SUPER_SCALE` times the input extent) are not recovered; every
//! other Delaunay tetrahedron is.

use std::collections::HashMap;

use super::predicates::{in_sphere_perturbed, orient};
use super::{GeometryError, Result};
use crate::Vec3;

const NONE: usize = usize::MAX;
const SUPER_SCALE: f64 = 1.0e6;
/// Outward faces of a positively oriented tetrahedron, indexed by the opposite vertex.
pub(crate) const FACE: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

#[derive(Debug, Clone)]
struct Tet {
    v: [usize; 4],
    nb: [usize; 4],
    alive: bool,
}

/// Delaunay tetrahedralization of a point set.
#[derive(Debug, Clone)]
pub struct Delaunay3 {
    points: Vec<Vec3>,
    n_input: usize,
    tets: Vec<Tet>,
    free: Vec<usize>,
    last: usize,
    walk_seed: usize,
}

impl Delaunay3 {
    /// Triangulates `points`; needs at least four distinct, non-coplanar points.
    pub fn new(points: &[Vec3]) -> Result<Self> {
        check_input(points)?;
        let n = points.len();
        let (lo, hi) = super::mesh::bounds_of(points).expect("non-empty");
        let center = (lo + hi) * 0.5;
        let extent = (hi - lo).max().max(f64::MIN_POSITIVE);
        let m = SUPER_SCALE * extent;
        let mut all = points.to_vec();
        for s in [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]] {
            all.push(center + Vec3::new(s[0], s[1], s[2]) * m);
        }
        let mut sv = [n, n + 1, n + 2, n + 3];
        if orient(&all[sv[0]], &all[sv[1]], &all[sv[2]], &all[sv[3]]) < 0.0 {
            sv.swap(0, 1);
        }
        let mut dt = Self {
            points: all,
            n_input: n,
            tets: vec![Tet { v: sv, nb: [NONE; 4], alive: true }],
            free: Vec::new(),
            last: 0,
            walk_seed: 0,
        };
        for i in 0..n {
            dt.insert(i)?;
        }
        Ok(dt)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points[..self.n_input]
    }

    /// Tetrahedra spanned by input points only, positively oriented.
    pub fn finite_tets(&self) -> Vec<[usize; 4]> {
        self.tets
            .iter()
            .filter(|t| t.alive && t.v.iter().all(|&v| v < self.n_input))
            .map(|t| t.v)
            .collect()
    }

    fn tet_points(&self, t: usize) -> [&Vec3; 4] {
        let v = self.tets[t].v;
        [&self.points[v[0]], &self.points[v[1]], &self.points[v[2]], &self.points[v[3]]]
    }

    fn locate(&mut self, p: &Vec3) -> usize {
        let mut t = self.last;
        if !self.tets[t].alive {
            t = self.tets.iter().position(|t| t.alive).expect("triangulation is never empty");
        }
        let limit = 4 * self.tets.len() + 16;
        'walk: for _ in 0..limit {
            self.walk_seed = self.walk_seed.wrapping_add(1);
            let v = self.tets[t].v;
            for k in 0..4 {
                let i = (k + self.walk_seed) % 4;
                let f = FACE[i];
                let (a, b, c) = (&self.points[v[f[0]]], &self.points[v[f[1]]], &self.points[v[f[2]]]);
                if orient(a, b, c, p) > 0.0 {
                    let next = self.tets[t].nb[i];
                    debug_assert!(next != NONE, "point escaped the super tetrahedron");
                    t = next;
                    continue 'walk;
                }
            }
            return t;
        }
        // Fallback scan, not expected in practice.
        (0..self.tets.len())
            .find(|&t| {
                self.tets[t].alive && {
                    let v = self.tets[t].v;
                    FACE.iter().all(|f| {
                        orient(&self.points[v[f[0]]], &self.points[v[f[1]]], &self.points[v[f[2]]], p) <= 0.0
                    })
                }
            })
            .expect("point lies inside the super tetrahedron")
    }

    fn insert(&mut self, pi: usize) -> Result<()> {
        let p = self.points[pi];
        let start = self.locate(&p);

        let mut in_cavity: HashMap<usize, ()> = HashMap::new();
        in_cavity.insert(start, ());
        let mut stack = vec![start];
        let mut cavity = Vec::new();
        // (outside tet or NONE, outward face vertices of the cavity boundary)
        let mut boundary: Vec<(usize, [usize; 3])> = Vec::new();
        while let Some(t) = stack.pop() {
            cavity.push(t);
            for i in 0..4 {
                let nb = self.tets[t].nb[i];
                let v = self.tets[t].v;
                let face = [v[FACE[i][0]], v[FACE[i][1]], v[FACE[i][2]]];
                if nb == NONE {
                    boundary.push((NONE, face));
                    continue;
                }
                if in_cavity.contains_key(&nb) {
                    continue;
                }
                if in_sphere_perturbed(self.tet_points(nb), &p) {
                    in_cavity.insert(nb, ());
                    stack.push(nb);
                } else {
                    boundary.push((nb, face));
                }
            }
        }

        let mut created = Vec::with_capacity(boundary.len());
        let mut edge_map: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(boundary.len() * 3);
        for &(outside, [a, b, c]) in &boundary {
            if orient(&self.points[a], &self.points[c], &self.points[b], &p) <= 0.0 {
                return Err(GeometryError::Degenerate(format!(
                    "insertion of point {pi} produced a flat tetrahedron"
                )));
            }
            let v = [a, c, b, pi];
            let id = self.alloc(Tet { v, nb: [NONE, NONE, NONE, outside], alive: true });
            if outside != NONE {
                let back = self.face_index_of(outside, [a, b, c]).expect("outside tet shares the face");
                self.tets[outside].nb[back] = id;
            }
            created.push(id);
            for (opp, (x, y)) in [(0usize, (v[1], v[2])), (1, (v[0], v[2])), (2, (v[0], v[1]))] {
                let key = (x.min(y), x.max(y));
                if let Some((other, other_face)) = edge_map.remove(&key) {
                    self.tets[id].nb[opp] = other;
                    self.tets[other].nb[other_face] = id;
                } else {
                    edge_map.insert(key, (id, opp));
                }
            }
        }
        debug_assert!(edge_map.is_empty(), "cavity boundary is not a closed surface");
        for t in cavity {
            self.tets[t].alive = false;
            self.free.push(t);
        }
        self.last = *created.last().expect("cavity has a boundary");
        Ok(())
    }

    fn face_index_of(&self, t: usize, face: [usize; 3]) -> Option<usize> {
        let v = self.tets[t].v;
        let missing: Vec<usize> = (0..4).filter(|&i| !face.contains(&v[i])).collect();
        (missing.len() == 1).then(|| missing[0])
    }

    fn alloc(&mut self, tet: Tet) -> usize {
        if let Some(i) = self.free.pop() {
            self.tets[i] = tet;
            i
        } else {
            self.tets.push(tet);
            self.tets.len() - 1
        }
    }
}

fn check_input(points: &[Vec3]) -> Result<()> {
    if points.len() < 4 {
        return Err(GeometryError::Degenerate(format!("need at least 4 points, got {}", points.len())));
    }
    if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(GeometryError::Degenerate(format!("point {i} is not finite")));
    }
    let mut sorted: Vec<usize> = (0..points.len()).collect();
    let key = |i: usize| (points[i].x, points[i].y, points[i].z);
    sorted.sort_by(|&a, &b| key(a).partial_cmp(&key(b)).unwrap());
    if let Some(w) = sorted.windows(2).find(|w| points[w[0]] == points[w[1]]) {
        return Err(GeometryError::Degenerate(format!("points {} and {} coincide", w[0], w[1])));
    }
    let a = points[0];
    let b = *points.iter().max_by(|p, q| (*p - a).norm_squared().total_cmp(&(*q - a).norm_squared())).unwrap();
    let c = *points
        .iter()
        .max_by(|p, q| (b - a).cross(&(*p - a)).norm_squared().total_cmp(&(b - a).cross(&(*q - a)).norm_squared()))
        .unwrap();
    if (b - a).cross(&(c - a)).norm_squared() == 0.0 || !points.iter().any(|d| orient(&a, &b, &c, d) != 0.0) {
        return Err(GeometryError::Degenerate("all points are coplanar".into()));
    }
    Ok(())
}

/// Circumradius of a tetrahedron (infinite when flat).
pub(crate) fn circumradius(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    let (u, v, w) = (b - a, c - a, d - a);
    let denom = 2.0 * u.dot(&v.cross(&w));
    if denom == 0.0 {
        return f64::INFINITY;
    }
    let center = (v.cross(&w) * u.norm_squared() + w.cross(&u) * v.norm_squared() + u.cross(&v) * w.norm_squared()) / denom;
    center.norm()
}
