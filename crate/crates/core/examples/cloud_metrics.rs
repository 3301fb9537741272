//! Chamfer distance, earth mover's distance and F-score of a noisy copy of
//! a wall against the clean wall.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use radar_pcd::cloud::FeaturedCloud;
use radar_pcd::metrics::evaluate;

fn main() -> radar_pcd::error::Result<()> {
    let wall: Vec<[f64; 3]> = (0..40)
        .flat_map(|i| (0..20).map(move |j| [3.0, i as f64 * 0.1 - 2.0, j as f64 * 0.1]))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for sigma in [0.0, 0.02, 0.05, 0.1, 0.2] {
        let noisy: Vec<[f64; 3]> = wall
            .iter()
            .map(|p| p.map(|v| v + sigma * rng.random_range(-1.0..1.0)))
            .collect();
        let report = evaluate(&FeaturedCloud::from_positions(&noisy), &FeaturedCloud::from_positions(&wall), 0.15, 1)?;
        println!(
            "jitter {sigma:.2} m: cd {:.5} m², emd {:.5} m², fscore {:.3}, {:.0}% of points within 0.3 m",
            report.cd,
            report.emd,
            report.fscore,
            100.0 * report.frac_nn_below_0_3m
        );
    }
    Ok(())
}
