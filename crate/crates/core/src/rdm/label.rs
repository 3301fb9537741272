use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::cloud::FeaturedCloud;
use crate::error::{Error, Result};
use crate::spatial::KdTree;

/// Label each point 1 if a reference point lies within `radius` (inclusive),
/// else 0. An empty reference labels everything 0.
pub fn label_points(radar: &FeaturedCloud, reference: &FeaturedCloud, radius: f64) -> Result<FeaturedCloud> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("label radius must be positive, got {radius}")));
    }
    let tree = KdTree::new(&reference.positions());
    let labels = radar
        .positions()
        .par_iter()
        .map(|p| u8::from(tree.any_within(p, radius)))
        .collect();
    let mut out = radar.clone();
    out.set_labels(labels)?;
    Ok(out)
}

/// Directed k-nearest-neighbour graph: `k` out-edges per vertex, self
/// excluded, ties broken by lower index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    pub k: usize,
    neighbors: Vec<usize>,
}

impl KnnGraph {
    pub fn len(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.neighbors.len() / self.k
        }
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |i| self.neighbors(i).iter().map(move |&j| (i, j)))
    }
}

/// KNN graph over the rows of `features` with squared Euclidean distance.
pub fn knn_graph(features: ArrayView2<f64>, k: usize) -> Result<KnnGraph> {
    let n = features.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("k = {k} needs 0 < k < N = {n}")));
    }
    let neighbors = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let xi = features.row(i);
            let mut d: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let s: f64 = xi.iter().zip(features.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (s, j)
                })
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < d.len() {
                d.select_nth_unstable_by(k - 1, cmp);
                d.truncate(k);
            }
            d.sort_unstable_by(cmp);
            d.into_iter().map(|(_, j)| j)
        })
        .collect();
    Ok(KnnGraph { k, neighbors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Provenance;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn label_examples() {
        let radar = FeaturedCloud::from_positions(&[[0.0; 3], [0.3, 0.0, 0.0], [0.15, 0.0, 0.0]]);
        let reference = FeaturedCloud::from_positions(&[[0.0; 3]]);
        let l = label_points(&radar, &reference, 0.15).unwrap();
        assert_eq!(l.labels().unwrap(), &[1, 0, 1]);
        let empty = label_points(&radar, &FeaturedCloud::new(Provenance::Reference), 0.15).unwrap();
        assert_eq!(empty.labels().unwrap(), &[0, 0, 0]);
        assert!(label_points(&radar, &reference, 0.0).is_err());
    }

    #[test]
    fn collinear_middle_pairs_with_nearer_end() {
        let f = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 3.0]).unwrap();
        let g = knn_graph(f.view(), 1).unwrap();
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.neighbors(2), &[1]);
    }

    #[test]
    fn fixed_out_degree_and_index_tie_break() {
        // unit square: each corner has two neighbours at distance 1
        let f = Array2::from_shape_vec((4, 2), vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let g = knn_graph(f.view(), 2).unwrap();
        assert_eq!(g.edges().count(), 8);
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.neighbors(3), &[1, 2]);
        let g1 = knn_graph(f.view(), 1).unwrap();
        assert_eq!(g1.neighbors(3), &[1]);
        assert!(knn_graph(f.view(), 4).is_err());
        assert!(knn_graph(f.view(), 0).is_err());
    }

    #[test]
    fn knn_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Array2::from_shape_fn((32, 5), |_| rng.random_range(-1.0..1.0));
        let g = knn_graph(f.view(), 6).unwrap();
        for i in 0..32 {
            let mut all: Vec<(f64, usize)> = (0..32)
                .filter(|&j| j != i)
                .map(|j| ((0..5).map(|c| (f[[i, c]] - f[[j, c]]).powi(2)).sum(), j))
                .collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expected: Vec<usize> = all[..6].iter().map(|p| p.1).collect();
            assert_eq!(g.neighbors(i), &expected[..]);
        }
    }

    proptest::proptest! {
        #[test]
        fn labels_match_the_distance_predicate(
            radar in proptest::collection::vec(proptest::array::uniform3(-1.0..1.0f64), 0..256),
            reference in proptest::collection::vec(proptest::array::uniform3(-1.0..1.0f64), 0..256),
            radius in 0.01..0.6f64,
        ) {
            let out = label_points(
                &FeaturedCloud::from_positions(&radar),
                &FeaturedCloud::from_positions(&reference),
                radius,
            )
            .unwrap();
            let brute: Vec<u8> = radar
                .iter()
                .map(|p| u8::from(reference.iter().any(|q| crate::spatial::dist2(p, q) <= radius * radius)))
                .collect();
            proptest::prop_assert_eq!(out.labels().unwrap(), brute.as_slice());
        }
    }
}
