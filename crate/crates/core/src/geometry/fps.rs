use super::{GeometryError, PointCloud, Result};

/// Greedy farthest point sampling.
///
/// Starts from `start` and repeatedly adds the unselected point whose squared
/// distance to the selected set is largest, ties going to the lowest index.
/// Deterministic; cost is `O(n * len)`.
pub fn farthest_point_sample(cloud: &PointCloud, n: usize, start: usize) -> Result<Vec<usize>> {
    let pts = &cloud.points;
    if n > pts.len() {
        return Err(GeometryError::NotEnoughPoints { requested: n, available: pts.len() });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if start >= pts.len() {
        return Err(GeometryError::NotEnoughPoints { requested: start + 1, available: pts.len() });
    }
    let mut min_d2: Vec<f64> = pts.iter().map(|p| (p - pts[start]).norm_squared()).collect();
    let mut taken = vec![false; pts.len()];
    taken[start] = true;
    let mut out = Vec::with_capacity(n);
    out.push(start);
    while out.len() < n {
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, &d2) in min_d2.iter().enumerate() {
            if !taken[i] && d2 > best_d2 {
                best = i;
                best_d2 = d2;
            }
        }
        taken[best] = true;
        out.push(best);
        let p = pts[best];
        for (d2, q) in min_d2.iter_mut().zip(pts) {
            let d = (q - p).norm_squared();
            if d < *d2 {
                *d2 = d;
            }
        }
    }
    Ok(out)
}
