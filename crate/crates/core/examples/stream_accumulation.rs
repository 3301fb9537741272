//! Accumulate per-frame detections in the global frame while the radar
//! drives past a row of posts, keeping only the last half second.

use radar_pcd::config::RadarConfig;
use radar_pcd::detect::{single_frame_pointcloud, PointCloudParams};
use radar_pcd::nca::{stream_step, AccumulationWindow, FrameCloud, NcaState};
use radar_pcd::pose::Trajectory;
use radar_pcd::sim::{amplitude_for_snr, simulate_trajectory, Scatterer, Scene};

fn main() -> radar_pcd::error::Result<()> {
    let cfg = RadarConfig::horizontal().with_chirps(32);
    let noise = 1.0;
    let scene = Scene {
        scatterers: (0..6)
            .map(|i| Scatterer::fixed([1.0 + i as f64, 2.0, 0.0], amplitude_for_snr(&cfg, 22.0, noise)))
            .collect(),
        noise_power: noise,
        ..Scene::default()
    };
    let trajectory = Trajectory::linear([0.0; 3], [3.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], 20, 0.1)?;
    let cubes = simulate_trajectory(&cfg, &scene, &trajectory, 4)?;

    let params = PointCloudParams::default();
    let mut state = NcaState::new(AccumulationWindow::Duration(0.5))?;
    for cube in &cubes {
        let frame = FrameCloud {
            cloud: single_frame_pointcloud(cube, &params)?,
            pose: cube.pose,
            t: cube.timestamp,
        };
        let detections = frame.cloud.len();
        let accumulated = stream_step(&mut state, &frame)?;
        println!(
            "t = {:.1} s  x = {:.2} m  {detections:>2} new points, {:>3} in window",
            cube.timestamp,
            cube.pose.position[0],
            accumulated.len()
        );
    }
    Ok(())
}
