//! Simulate a radar sweeping along a wall and a pillar, reconstruct the
//! scene both by accumulating detections and by back-projection, and score
//! each against the ground truth. Run with `--release`.

use radar_pcd::cli::{cmd_reconstruct, cmd_simulate, Mode, ReconstructConfig, SimulateConfig, TrajectorySpec};
use radar_pcd::metrics::evaluate;
use radar_pcd::saa::{GridExtent, SaaParams};
use radar_pcd::sim::Scene;

fn main() -> radar_pcd::error::Result<()> {
    let dir = std::env::temp_dir().join("radar-pcd-reconstruct");
    let mut scene = Scene {
        noise_power: 1e-3,
        ..Scene::default()
    };
    scene.add_patch([3.0, -1.0, -0.2], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], 21, 5, 0.1, 0.02);
    scene.add_patch([2.0, 0.8, -0.2], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 3, 5, 0.1, 0.03);
    let config = SimulateConfig {
        chirps_per_frame: Some(16),
        scene,
        trajectory: TrajectorySpec::Linear {
            start: [0.0, -0.05, 0.0],
            end: [0.0, 0.05, 0.0],
            orientation: [1.0, 0.0, 0.0, 0.0],
            frames: 24,
            dt: 0.02,
        },
        ..SimulateConfig::default()
    };
    let dataset = cmd_simulate(&config, &dir, 3)?;
    let reference = dataset.reference()?;

    let recon = ReconstructConfig {
        saa: SaaParams {
            extent: GridExtent::Bounds {
                min: [1.5, -1.5, -0.3],
                max: [3.5, 1.5, 0.3],
            },
            ..SaaParams::default()
        },
        ..ReconstructConfig::default()
    };
    for mode in [Mode::Nca, Mode::Saa] {
        let out = cmd_reconstruct(&dir, mode, None, &recon, &dir)?;
        let cloud = out.nca.or(out.saa).expect("one cloud per mode");
        let report = evaluate(&cloud, &reference, 0.15, 0)?;
        println!(
            "{mode:?}: {} points, cd {:.4} m², fscore {:.3}, timing {}",
            cloud.len(),
            report.cd,
            report.fscore,
            serde_json::to_string(&out.timing).expect("serializable")
        );
    }
    Ok(())
}
