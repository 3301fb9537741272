//! Simulate one frame with three moving targets and run range-Doppler
//! processing, CFAR and angle estimation on it.

use radar_pcd::config::RadarConfig;
use radar_pcd::detect::{single_frame_pointcloud, PointCloudParams};
use radar_pcd::pose::Pose;
use radar_pcd::sim::{amplitude_for_snr, simulate_frame, Scatterer, Scene};

fn main() -> radar_pcd::error::Result<()> {
    let cfg = RadarConfig::horizontal().with_chirps(64);
    let noise = 1.0;
    let target = |range: f64, az_deg: f64, speed: f64, snr_db: f64| {
        let a = az_deg.to_radians();
        let dir = [a.cos(), a.sin(), 0.0];
        Scatterer {
            position: dir.map(|d| d * range),
            velocity: dir.map(|d| d * speed),
            reflectivity: amplitude_for_snr(&cfg, snr_db, noise),
        }
    };
    let scene = Scene {
        scatterers: vec![target(3.0, -20.0, 0.0, 25.0), target(5.0, 10.0, 1.0, 20.0), target(8.5, 30.0, -2.0, 18.0)],
        noise_power: noise,
        ..Scene::default()
    };
    let cube = simulate_frame(&cfg, &scene, &Pose::identity(), 0.0, 1)?;
    let cloud = single_frame_pointcloud(&cube, &PointCloudParams::default())?;

    println!("{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "range", "az(deg)", "z", "v", "snr_rd", "snr_aoa");
    for p in cloud.rows() {
        let range = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        println!(
            "{range:8.3} {:8.2} {:8.3} {:8.3} {:8.1} {:8.1}",
            p[1].atan2(p[0]).to_degrees(),
            p[2],
            p[3],
            p[4],
            p[5]
        );
    }
    Ok(())
}
