//! Point-cloud quality metrics: Chamfer distance, earth mover's distance and
//! F-score. Only point positions are used; squared distances are in m².

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::FeaturedCloud;
use crate::error::{Error, Result};
use crate::spatial::{dist2, KdTree};

/// Largest set solved exactly by [`emd`]; larger sets use a greedy matching
/// refined by pairwise swaps.
pub const EMD_EXACT_LIMIT: usize = 1024;

fn non_empty(out: &FeaturedCloud, gt: &FeaturedCloud) -> Result<()> {
    if out.is_empty() || gt.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "metric needs non-empty clouds (got {} and {} points)",
            out.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// Squared distance from each query to its nearest target.
pub fn nearest_sq_distances(queries: &[[f64; 3]], targets: &[[f64; 3]]) -> Vec<f64> {
    let tree = KdTree::new(targets);
    queries
        .par_iter()
        .map(|q| tree.nearest(q).map_or(f64::INFINITY, |(_, d)| d))
        .collect()
}

/// `mean_out min_gt |x − y|² + mean_gt min_out |x − y|²`
pub fn chamfer(out: &FeaturedCloud, gt: &FeaturedCloud) -> Result<f64> {
    non_empty(out, gt)?;
    let (a, b) = (out.positions(), gt.positions());
    let ab: f64 = nearest_sq_distances(&a, &b).iter().sum::<f64>() / a.len() as f64;
    let ba: f64 = nearest_sq_distances(&b, &a).iter().sum::<f64>() / b.len() as f64;
    Ok(ab + ba)
}

/// Precision/recall harmonic mean at match radius `tr` (inclusive).
pub fn fscore(out: &FeaturedCloud, gt: &FeaturedCloud, tr: f64) -> Result<f64> {
    if !(tr > 0.0) {
        return Err(Error::InvalidParameter(format!("tr must be positive, got {tr}")));
    }
    non_empty(out, gt)?;
    let (a, b) = (out.positions(), gt.positions());
    let covered = |q: &[[f64; 3]], t: &[[f64; 3]]| {
        let tree = KdTree::new(t);
        q.par_iter().filter(|p| tree.any_within(p, tr)).count() as f64 / q.len() as f64
    };
    let precision = covered(&a, &b);
    let recall = covered(&b, &a);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmdResult {
    /// Mean squared distance over matched pairs.
    pub value: f64,
    /// Indices into the (possibly subsampled) `out` and `gt` sets.
    pub out_indices: Vec<usize>,
    pub gt_indices: Vec<usize>,
    /// `assignment[i]` is the position in `gt_indices` matched to
    /// `out_indices[i]`.
    pub assignment: Vec<usize>,
    pub exact: bool,
}

/// Earth mover's distance with unit masses. The larger cloud is first
/// subsampled uniformly without replacement (seeded) to the smaller size.
pub fn emd(out: &FeaturedCloud, gt: &FeaturedCloud, seed: u64) -> Result<EmdResult> {
    non_empty(out, gt)?;
    let n = out.len().min(gt.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |len: usize| -> Vec<usize> {
        if len == n {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, n).into_vec();
            v.sort_unstable();
            v
        }
    };
    let out_indices = pick(out.len());
    let gt_indices = pick(gt.len());
    let a: Vec<[f64; 3]> = out_indices.iter().map(|&i| out.position(i)).collect();
    let b: Vec<[f64; 3]> = gt_indices.iter().map(|&i| gt.position(i)).collect();
    let exact = n <= EMD_EXACT_LIMIT;
    let assignment = if exact {
        hungarian(&a, &b)
    } else {
        greedy_two_opt(&a, &b)
    };
    Ok(EmdResult {
        value: assignment_cost(&a, &b, &assignment),
        out_indices,
        gt_indices,
        assignment,
        exact,
    })
}

/// Mean of `|a_i − b_{σ(i)}|²`, summed in index order.
pub fn assignment_cost(a: &[[f64; 3]], b: &[[f64; 3]], assignment: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, &j) in assignment.iter().enumerate() {
        s += dist2(&a[i], &b[j]);
    }
    s / a.len() as f64
}

/// Minimum-cost perfect matching on squared distances (square case),
/// shortest augmenting paths with vertex potentials, O(n³).
pub fn hungarian(a: &[[f64; 3]], b: &[[f64; 3]]) -> Vec<usize> {
    let n = a.len();
    assert_eq!(n, b.len());
    // 1-based rows/cols; column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = dist2(&a[i0 - 1], &b[j - 1]) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Greedy nearest-available matching followed by improving pairwise swaps.
fn greedy_two_opt(a: &[[f64; 3]], b: &[[f64; 3]]) -> Vec<usize> {
    let n = a.len();
    let mut taken = vec![false; n];
    let mut assignment = vec![0; n];
    for i in 0..n {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in 0..n {
            if !taken[j] {
                let d = dist2(&a[i], &b[j]);
                if d < best.1 {
                    best = (j, d);
                }
            }
        }
        taken[best.0] = true;
        assignment[i] = best.0;
    }
    for _ in 0..4 {
        let mut improved = false;
        for i in 0..n {
            for k in i + 1..n {
                let (ji, jk) = (assignment[i], assignment[k]);
                let now = dist2(&a[i], &b[ji]) + dist2(&a[k], &b[jk]);
                let swapped = dist2(&a[i], &b[jk]) + dist2(&a[k], &b[ji]);
                if swapped < now {
                    assignment.swap(i, k);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub cd: f64,
    pub emd: f64,
    pub fscore: f64,
    pub n_out: usize,
    pub n_gt: usize,
    pub tr: f64,
    pub seed: u64,
    /// Fraction of output points whose nearest reference point is closer
    /// than 0.3 m.
    pub frac_nn_below_0_3m: f64,
}

pub fn evaluate(out: &FeaturedCloud, gt: &FeaturedCloud, tr: f64, seed: u64) -> Result<EvaluationReport> {
    let cd = chamfer(out, gt)?;
    let f = fscore(out, gt, tr)?;
    let e = emd(out, gt, seed)?;
    let nn = nearest_sq_distances(&out.positions(), &gt.positions());
    let below = nn.iter().filter(|&&d| d.sqrt() < 0.3).count() as f64 / nn.len() as f64;
    Ok(EvaluationReport {
        cd,
        emd: e.value,
        fscore: f,
        n_out: out.len(),
        n_gt: gt.len(),
        tr,
        seed,
        frac_nn_below_0_3m: below,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{transform_cloud, Pose};
    use proptest::prelude::*;
    use rand::Rng;

    fn cloud(points: &[[f64; 3]]) -> FeaturedCloud {
        FeaturedCloud::from_positions(points)
    }

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
        (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect()
    }

    #[test]
    fn chamfer_basics() {
        let a = cloud(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        let p = cloud(&[[0.0; 3]]);
        let q = cloud(&[[0.0, 3.0, 4.0]]);
        assert_eq!(chamfer(&p, &q).unwrap(), 50.0);
        assert!(matches!(chamfer(&p, &cloud(&[])), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn fscore_basics() {
        let a = cloud(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert_eq!(fscore(&a, &a, 0.15).unwrap(), 1.0);
        let far = cloud(&[[5.0, 0.0, 0.0]]);
        assert_eq!(fscore(&a, &far, 0.15).unwrap(), 0.0);
        // half of out near gt, all gt covered
        let gt = cloud(&[[0.0; 3]]);
        let out = cloud(&[[0.05, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert!((fscore(&out, &gt, 0.15).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(fscore(&out, &gt, 0.0).is_err());
    }

    #[test]
    fn emd_crossed_pairs() {
        let a = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let b = [[1.1, 0.0, 0.0], [0.1, 0.0, 0.0]];
        let r = emd(&cloud(&a), &cloud(&b), 0).unwrap();
        assert_eq!(r.assignment, vec![1, 0]);
        assert!((r.value - 0.01).abs() < 1e-15);
        let same = emd(&cloud(&a), &cloud(&a), 0).unwrap();
        assert_eq!(same.value, 0.0);
        assert_eq!(same.assignment, vec![0, 1]);
    }

    #[test]
    fn emd_subsamples_larger_set_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = cloud(&random(&mut rng, 10));
        let b = cloud(&random(&mut rng, 25));
        let r1 = emd(&a, &b, 9).unwrap();
        let r2 = emd(&a, &b, 9).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.gt_indices.len(), 10);
        assert_eq!(r1.out_indices, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn greedy_path_never_beats_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random(&mut rng, 60);
        let b = random(&mut rng, 60);
        let exact = assignment_cost(&a, &b, &hungarian(&a, &b));
        let approx = assignment_cost(&a, &b, &greedy_two_opt(&a, &b));
        assert!(approx >= exact - 1e-12);
        assert!(approx <= exact * 1.5);
    }

    #[test]
    fn report_for_identical_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = cloud(&random(&mut rng, 40));
        let r = evaluate(&a, &a, 0.15, 3).unwrap();
        assert_eq!((r.cd, r.emd, r.fscore, r.frac_nn_below_0_3m), (0.0, 0.0, 1.0, 1.0));
    }

    proptest! {
        #[test]
        fn metrics_survive_rigid_motion(
            seed in 0u64..500,
            yaw in -3.0..3.0f64,
            shift in prop::array::uniform3(-10.0..10.0f64),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = cloud(&random(&mut rng, 20));
            let b = cloud(&random(&mut rng, 20));
            let pose = Pose::from_yaw(shift, yaw);
            let (ta, tb) = (transform_cloud(&pose, &a).unwrap(), transform_cloud(&pose, &b).unwrap());
            prop_assert!((chamfer(&a, &b).unwrap() - chamfer(&ta, &tb).unwrap()).abs() < 1e-9);
            prop_assert!((emd(&a, &b, 0).unwrap().value - emd(&ta, &tb, 0).unwrap().value).abs() < 1e-9);
            prop_assert_eq!(fscore(&a, &b, 0.5).unwrap(), fscore(&ta, &tb, 0.5).unwrap());
        }

        #[test]
        fn chamfer_and_fscore_are_symmetric(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = cloud(&random(&mut rng, 15));
            let b = cloud(&random(&mut rng, 9));
            prop_assert_eq!(chamfer(&a, &b).unwrap(), chamfer(&b, &a).unwrap());
            prop_assert_eq!(fscore(&a, &b, 0.4).unwrap(), fscore(&b, &a, 0.4).unwrap());
            prop_assert!(emd(&a, &b, seed).unwrap().value >= 0.0);
        }
    }
}
