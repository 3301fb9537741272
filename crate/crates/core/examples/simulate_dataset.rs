//! Simulate a short sequence, write it to disk and read it back.

use radar_pcd::cli::{cmd_simulate, SimulateConfig};
use radar_pcd::dataset::Dataset;

fn main() -> radar_pcd::error::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("radar-pcd-sequence"));
    let config = SimulateConfig::default();
    println!("{}", serde_json::to_string_pretty(&config).expect("serializable"));

    let written = cmd_simulate(&config, &dir, 7)?;
    let dataset = Dataset::open(&dir)?;
    assert_eq!(dataset.manifest, written.manifest);
    let first = dataset.load_frame(0)?;
    println!(
        "{}: {} frames of {:?} (chirps, virtual, samples), first pose {:?}",
        dir.display(),
        dataset.manifest.frames,
        first.dims(),
        first.pose.position
    );
    Ok(())
}
