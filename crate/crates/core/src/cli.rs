//! Command implementations behind the `radar-pcd` binary.
//!
//! Each command takes already-parsed arguments and returns a value the
//! binary prints. Configuration files are JSON; every field has a default.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{FeaturedCloud, Provenance};
use crate::config::RadarConfig;
use crate::corpus::{synthetic_corpus, CorpusParams};
use crate::dataset::{load_json, save_json, Dataset};
use crate::detect::{single_frame_pointcloud, PointCloudParams};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvaluationReport};
use crate::nca::{accumulate, AccumulationWindow, FrameCloud};
use crate::pose::{Trajectory, TrajectorySample};
use crate::rdm::{
    denoise, label_points, read_checkpoint, train_with_progress, write_checkpoint, write_metrics_csv, DenoiseParams,
    TrainConfig,
};
use crate::saa::{reconstruct, SaaParams};
use crate::sim::{simulate_trajectory, Scene};

/// Load an optional JSON config, falling back to defaults.
pub fn load_config<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => load_json(p),
        None => Ok(T::default()),
    }
}

/// A named preset or a full radar description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RadarSpec {
    Preset(String),
    Full(RadarConfig),
}

impl RadarSpec {
    pub fn resolve(&self) -> Result<RadarConfig> {
        match self {
            RadarSpec::Preset(name) => RadarConfig::preset(name)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown radar preset `{name}`"))),
            RadarSpec::Full(cfg) => Ok(cfg.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    Linear {
        start: [f64; 3],
        end: [f64; 3],
        #[serde(default = "identity_quaternion")]
        orientation: [f64; 4],
        frames: usize,
        dt: f64,
    },
    Samples(Vec<TrajectorySample>),
}

fn identity_quaternion() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl TrajectorySpec {
    pub fn resolve(&self) -> Result<Trajectory> {
        match self {
            TrajectorySpec::Linear {
                start,
                end,
                orientation,
                frames,
                dt,
            } => Trajectory::linear(*start, *end, *orientation, *frames, *dt),
            TrajectorySpec::Samples(s) => Trajectory::new(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub radar: RadarSpec,
    /// Overrides the radar's chirp count.
    #[serde(default)]
    pub chirps_per_frame: Option<usize>,
    pub scene: Scene,
    pub trajectory: TrajectorySpec,
}

impl Default for SimulateConfig {
    /// One static scatterer seen along a short sideways sweep.
    fn default() -> Self {
        Self {
            radar: RadarSpec::Preset("horizontal".into()),
            chirps_per_frame: None,
            scene: Scene {
                scatterers: vec![crate::sim::Scatterer::fixed([4.0, 0.5, 0.0], 1.0)],
                noise_power: 1e-3,
                ..Scene::default()
            },
            trajectory: TrajectorySpec::Linear {
                start: [0.0, 0.0, 0.0],
                end: [0.0, 0.2, 0.0],
                orientation: identity_quaternion(),
                frames: 10,
                dt: 0.05,
            },
        }
    }
}

/// Simulate a sequence and write it as a dataset directory.
pub fn cmd_simulate(config: &SimulateConfig, out: &Path, seed: u64) -> Result<Dataset> {
    let mut radar = config.radar.resolve()?;
    if let Some(n) = config.chirps_per_frame {
        radar = radar.with_chirps(n);
    }
    let trajectory = config.trajectory.resolve()?;
    let cubes = simulate_trajectory(&radar, &config.scene, &trajectory, seed)?;
    let positions: Vec<[f64; 3]> = config.scene.scatterers.iter().map(|s| s.position).collect();
    Dataset::write(out, &cubes, &FeaturedCloud::from_positions(&positions), seed)
}

/// Write `n` synthetic labelled scenes as `scene_NNN/{nca,saa,ref}.csv`.
pub fn cmd_simulate_corpus(params: &CorpusParams, n: usize, out: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    let scenes = synthetic_corpus(seed, n, params)?;
    scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let dir = out.join(format!("scene_{i:03}"));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            s.nca.write_csv(&dir.join("nca.csv"))?;
            s.saa.write_csv(&dir.join("saa.csv"))?;
            s.reference.write_csv(&dir.join("ref.csv"))?;
            Ok(dir)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Nca,
    Saa,
    Full,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "nca" => Ok(Mode::Nca),
            "saa" => Ok(Mode::Saa),
            "full" => Ok(Mode::Full),
            _ => Err(format!("unknown mode `{s}`, expected nca, saa or full")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    pub point_cloud: PointCloudParams,
    pub window: AccumulationWindow,
    pub saa: SaaParams,
    pub denoise: DenoiseParams,
}

/// Milliseconds per frame spent in each stage that ran.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingReport {
    pub mode: Option<Mode>,
    pub frames: usize,
    pub load_ms_per_frame: f64,
    pub point_cloud_ms_per_frame: Option<f64>,
    pub accumulate_ms_per_frame: Option<f64>,
    pub saa_ms_per_frame: Option<f64>,
    pub denoise_ms_per_frame: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub nca: Option<FeaturedCloud>,
    pub saa: Option<FeaturedCloud>,
    pub rdm: Option<FeaturedCloud>,
    pub timing: TimingReport,
}

fn ms_per_frame(t: Instant, frames: usize) -> f64 {
    t.elapsed().as_secs_f64() * 1e3 / frames.max(1) as f64
}

/// Reconstruct clouds from a dataset. Writes `nca.csv`, `saa.csv`,
/// `saa.voxg`, `rdm.csv` (whichever apply) and `timing.json` into `out`.
pub fn cmd_reconstruct(
    data: &Path,
    mode: Mode,
    model: Option<&Path>,
    config: &ReconstructConfig,
    out: &Path,
) -> Result<Reconstruction> {
    if mode == Mode::Full && model.is_none() {
        return Err(Error::Usage("mode `full` requires --model".into()));
    }
    let model = model.map(read_checkpoint).transpose()?;
    let t = Instant::now();
    let dataset = Dataset::open(data)?;
    let cubes = dataset.load_frames()?;
    let frames = cubes.len();
    let mut timing = TimingReport {
        mode: Some(mode),
        frames,
        load_ms_per_frame: ms_per_frame(t, frames),
        ..TimingReport::default()
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut nca = None;
    if mode != Mode::Saa {
        let t = Instant::now();
        let clouds = cubes
            .par_iter()
            .map(|c| single_frame_pointcloud(c, &config.point_cloud))
            .collect::<Result<Vec<_>>>()?;
        timing.point_cloud_ms_per_frame = Some(ms_per_frame(t, frames));
        let t = Instant::now();
        let framed: Vec<FrameCloud> = clouds
            .into_iter()
            .zip(&cubes)
            .map(|(cloud, c)| FrameCloud {
                cloud,
                pose: c.pose,
                t: c.timestamp,
            })
            .collect();
        let cloud = accumulate(&framed, config.window)?;
        timing.accumulate_ms_per_frame = Some(ms_per_frame(t, frames));
        cloud.write_csv(&out.join("nca.csv"))?;
        nca = Some(cloud);
    }

    let mut saa = None;
    if mode != Mode::Nca {
        let t = Instant::now();
        let (grid, cloud) = reconstruct(&cubes, &config.saa)?;
        timing.saa_ms_per_frame = Some(ms_per_frame(t, frames));
        grid.write_voxg(&out.join("saa.voxg"))?;
        cloud.write_csv(&out.join("saa.csv"))?;
        saa = Some(cloud);
    }

    let mut rdm = None;
    if let (Some(model), Some(a), Some(b)) = (&model, &nca, &saa) {
        let t = Instant::now();
        let cloud = denoise(model, &strip(a), b, &config.denoise)?;
        timing.denoise_ms_per_frame = Some(ms_per_frame(t, frames));
        cloud.write_csv(&out.join("rdm.csv"))?;
        rdm = Some(cloud);
    }
    save_json(&timing, &out.join("timing.json"))?;
    Ok(Reconstruction { nca, saa, rdm, timing })
}

/// Same rows and provenance without labels or frame indices.
fn strip(cloud: &FeaturedCloud) -> FeaturedCloud {
    FeaturedCloud::from_rows(cloud.provenance(), cloud.data().to_vec()).expect("rows of a valid cloud")
}

fn read_cloud(path: &Path) -> Result<FeaturedCloud> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => FeaturedCloud::read_ply(path),
        _ => FeaturedCloud::read_csv(path),
    }
}

/// Labelled training clouds of one scene directory: `nca.csv` and/or
/// `saa.csv`, labelled against `ref.csv`.
pub fn load_scene(dir: &Path, label_radius: f64) -> Result<Vec<FeaturedCloud>> {
    let reference = FeaturedCloud::read_csv(&dir.join("ref.csv"))?;
    let mut out = Vec::new();
    for name in ["nca.csv", "saa.csv"] {
        let path = dir.join(name);
        if path.exists() {
            let cloud = strip(&FeaturedCloud::read_csv(&path)?);
            out.push(label_points(&cloud, &reference, label_radius)?);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("{} has neither nca.csv nor saa.csv", dir.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub val_f1: Option<f64>,
    pub seed: u64,
}

/// Train on labelled scene directories; writes the checkpoint and a
/// per-epoch metrics CSV.
pub fn cmd_train(
    train_dirs: &[PathBuf],
    val_dirs: &[PathBuf],
    config: &TrainConfig,
    label_radius: f64,
    model_out: &Path,
    metrics_out: &Path,
) -> Result<TrainSummary> {
    if train_dirs.is_empty() {
        return Err(Error::Usage("at least one training scene is required".into()));
    }
    if val_dirs.is_empty() {
        return Err(Error::Usage("at least one validation scene is required (--val)".into()));
    }
    let load = |dirs: &[PathBuf]| -> Result<Vec<FeaturedCloud>> {
        let per: Vec<Vec<FeaturedCloud>> = dirs.iter().map(|d| load_scene(d, label_radius)).collect::<Result<_>>()?;
        Ok(per.into_iter().flatten().collect())
    };
    let train = load(train_dirs)?;
    let val = load(val_dirs)?;
    let outcome = train_with_progress(&train, &val, config, |m| {
        eprintln!(
            "epoch {:>3}  train {:.4}  val {:.4}  f1 {:.3}",
            m.epoch, m.train_loss, m.val_loss, m.val_f1
        )
    })?;
    write_checkpoint(&outcome.model, model_out)?;
    write_metrics_csv(&outcome.history, metrics_out)?;
    Ok(TrainSummary {
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        val_f1: outcome.model.val_f1,
        seed: config.seed,
    })
}

/// Denoise a pair of clouds with a trained model.
pub fn cmd_denoise(model: &Path, nca: &Path, saa: &Path, params: &DenoiseParams, out: &Path) -> Result<FeaturedCloud> {
    let model = read_checkpoint(model)?;
    let a = strip(&read_cloud(nca)?);
    let b = strip(&read_cloud(saa)?);
    for (c, want, path) in [(&a, Provenance::Nca, nca), (&b, Provenance::Saa, saa)] {
        if c.provenance() != want {
            return Err(Error::parse(path, format!("expected a {want:?} cloud, found {:?}", c.provenance())));
        }
    }
    let cloud = denoise(&model, &a, &b, params)?;
    match out.extension().and_then(|e| e.to_str()) {
        Some("ply") => cloud.write_ply(out)?,
        _ => cloud.write_csv(out)?,
    }
    Ok(cloud)
}

/// Compare a cloud against a reference.
pub fn cmd_evaluate(cloud: &Path, reference: &Path, tr: f64, seed: u64) -> Result<EvaluationReport> {
    let a = read_cloud(cloud)?;
    let b = read_cloud(reference)?;
    evaluate(&a, &b, tr, seed)
}
