//! Derived waveform and aperture figures of the two preset radars.

use radar_pcd::config::{angular_resolution, max_range, range_resolution, velocity_limits, ArrayAxis, RadarConfig};

fn main() -> radar_pcd::error::Result<()> {
    for name in ["horizontal", "vertical"] {
        let cfg = RadarConfig::preset(name).expect("known preset");
        let (v_res, v_max) = velocity_limits(&cfg)?;
        println!("{name}");
        println!("  wavelength        {:.3} mm", cfg.wavelength() * 1e3);
        println!("  range resolution  {:.5} m", range_resolution(&cfg)?);
        println!("  max range         {:.2} m", max_range(&cfg)?);
        println!("  velocity          {v_res:.3} m/s resolution, ±{v_max:.2} m/s");
        for axis in [ArrayAxis::Azimuth, ArrayAxis::Elevation] {
            let theta = angular_resolution(&cfg, axis, 0.0)?;
            println!("  {axis:?} resolution  {:.2}° at boresight", theta.to_degrees());
        }
    }
    Ok(())
}
