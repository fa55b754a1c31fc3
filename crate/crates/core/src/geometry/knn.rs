use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{GeometryError, PointCloud, Result};
use crate::Vec3;

const LEAF_SIZE: usize = 12;

/// A neighbour returned by [`KnnIndex::query`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Exact k-nearest-neighbour index over a fixed point set (kd-tree).
///
/// Results are ordered by `(squared distance, index)`, so ties always resolve
/// to the lowest point index and every query reproduces a brute-force scan.
#[derive(Debug, Clone)]
pub struct KnnIndex {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
    lo: Vec3,
    hi: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KnnIndex {
    pub fn build(cloud: &PointCloud) -> Self {
        Self::from_points(cloud.points.clone())
    }

    pub fn from_points(points: Vec<Vec3>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let (lo, hi) = super::mesh::bounds_of(&points).unwrap_or((Vec3::zeros(), Vec3::zeros()));
        let mut index = Self { points, order: Vec::new(), nodes: Vec::new(), lo, hi };
        if !order.is_empty() {
            let n = order.len();
            index.build_node(&mut order, 0, n);
        }
        index.order = order;
        index
    }

    fn build_node(&mut self, order: &mut [usize], start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &mut order[start..end];
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for &i in slice.iter() {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = slice.len() / 2;
        let pts = &self.points;
        slice.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let value = self.points[slice[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(order, start, start + mid);
        let right = self.build_node(order, start + mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// The `k` nearest stored points to `query`, ascending by distance.
    pub fn query(&self, query: &Vec3, k: usize) -> Result<Vec<Neighbor>> {
        if k > self.points.len() {
            return Err(GeometryError::NotEnoughPoints { requested: k, available: self.points.len() });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        let mut gap = Vec3::zeros();
        for a in 0..3 {
            gap[a] = (self.lo[a] - query[a]).max(0.0).max(query[a] - self.hi[a]);
        }
        self.search(0, query, k, &mut heap, gap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        Ok(out.into_iter().map(|c| Neighbor { index: c.index, distance: c.d2.sqrt() }).collect())
    }

    /// Nearest stored point; `None` only for an empty index.
    pub fn nearest(&self, query: &Vec3) -> Option<Neighbor> {
        if self.points.is_empty() {
            return None;
        }
        self.query(query, 1).ok().and_then(|v| v.into_iter().next())
    }

    // `gap` holds the per-axis distance from the query to the node's cell.
    fn search(&self, node: usize, q: &Vec3, k: usize, heap: &mut BinaryHeap<Candidate>, gap: Vec3) {
        if heap.len() == k && gap.norm_squared() > heap.peek().unwrap().d2 {
            return;
        }
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate { d2: (self.points[i] - q).norm_squared(), index: i };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap, gap);
                let mut far_gap = gap;
                far_gap[axis] = diff.abs();
                self.search(far, q, k, heap, far_gap);
            }
        }
    }
}

/// For every point of `queries`, its nearest neighbour in `index`.
pub fn nearest_on_set(index: &KnnIndex, queries: &[Vec3]) -> Vec<Neighbor> {
    if index.is_empty() {
        return Vec::new();
    }
    queries.iter().map(|q| index.nearest(q).expect("non-empty index")).collect()
}
