//! Exact 3-D nearest-neighbour and radius queries over a static point set.

/// Squared Euclidean distance. Every metric in the crate uses this exact
/// expression so indexed and brute-force paths agree bit-for-bit.
#[inline]
pub fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Implicit kd-tree: `order` is permuted so every subrange `[lo, hi)` is a
/// node split at `mid = (lo + hi) / 2` on axis `depth % 3`.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
}

const LEAF: usize = 8;

impl KdTree {
    pub fn new(points: &[[f64; 3]]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(points, &mut order, 0);
        Self {
            points: points.to_vec(),
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    /// Index and squared distance of the nearest point; ties go to the lower
    /// index. `None` on an empty tree.
    pub fn nearest(&self, q: &[f64; 3]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(q, 0, self.order.len(), 0, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, q: &[f64; 3], lo: usize, hi: usize, depth: usize, best: &mut (usize, f64)) {
        if hi - lo <= LEAF {
            for &i in &self.order[lo..hi] {
                let d = dist2(q, &self.points[i]);
                if d < best.1 || (d == best.1 && i < best.0) {
                    *best = (i, d);
                }
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = depth % 3;
        let pivot = self.order[mid];
        let diff = q[axis] - self.points[pivot][axis];
        let d = dist2(q, &self.points[pivot]);
        if d < best.1 || (d == best.1 && pivot < best.0) {
            *best = (pivot, d);
        }
        let (first, second) = if diff <= 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_rec(q, first.0, first.1, depth + 1, best);
        if diff * diff <= best.1 {
            self.nearest_rec(q, second.0, second.1, depth + 1, best);
        }
    }

    /// True iff some point lies within `radius` (inclusive) of `q`.
    pub fn any_within(&self, q: &[f64; 3], radius: f64) -> bool {
        let r2 = radius * radius;
        self.any_rec(q, r2, 0, self.order.len(), 0)
    }

    fn any_rec(&self, q: &[f64; 3], r2: f64, lo: usize, hi: usize, depth: usize) -> bool {
        if hi - lo <= LEAF {
            return self.order[lo..hi].iter().any(|&i| dist2(q, &self.points[i]) <= r2);
        }
        let mid = (lo + hi) / 2;
        let axis = depth % 3;
        let pivot = self.order[mid];
        if dist2(q, &self.points[pivot]) <= r2 {
            return true;
        }
        let diff = q[axis] - self.points[pivot][axis];
        let near = if diff <= 0.0 { (lo, mid) } else { (mid + 1, hi) };
        let far = if diff <= 0.0 { (mid + 1, hi) } else { (lo, mid) };
        self.any_rec(q, r2, near.0, near.1, depth + 1)
            || (diff * diff <= r2 && self.any_rec(q, r2, far.0, far.1, depth + 1))
    }

    /// Indices of all points within `radius` (inclusive), ascending.
    pub fn within(&self, q: &[f64; 3], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_rec(q, radius * radius, 0, self.order.len(), 0, &mut out);
        out.sort_unstable();
        out
    }

    fn within_rec(&self, q: &[f64; 3], r2: f64, lo: usize, hi: usize, depth: usize, out: &mut Vec<usize>) {
        if hi - lo <= LEAF {
            out.extend(self.order[lo..hi].iter().filter(|&&i| dist2(q, &self.points[i]) <= r2));
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = depth % 3;
        let pivot = self.order[mid];
        if dist2(q, &self.points[pivot]) <= r2 {
            out.push(pivot);
        }
        let diff = q[axis] - self.points[pivot][axis];
        if diff <= 0.0 || diff * diff <= r2 {
            self.within_rec(q, r2, lo, mid, depth + 1, out);
        }
        if diff >= 0.0 || diff * diff <= r2 {
            self.within_rec(q, r2, mid + 1, hi, depth + 1, out);
        }
    }
}

fn build(points: &[[f64; 3]], order: &mut [usize], depth: usize) {
    if order.len() <= LEAF {
        return;
    }
    let axis = depth % 3;
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    let (left, right) = order.split_at_mut(mid);
    build(points, left, depth + 1);
    build(points, &mut right[1..], depth + 1);
}
