//! On-disk sequences.
//!
//! ```text
//! <dir>/manifest.json      radar config, frame count, dims, timestamps, seed
//! <dir>/adc/000000.adcc    one cube per frame
//! <dir>/adc/000000.json    its timestamp and pose
//! <dir>/poses.csv          t,px,py,pz,qw,qx,qy,qz
//! <dir>/ref.csv            reference cloud (x,y,z)
//! ```
//!
//! An ADCC file is `ADCC`, u32 version, u32 chirps, u32 virtual channels,
//! u32 samples, then little-endian f32 `(re, im)` pairs in
//! `[chirp][virtual][sample]` order. Samples are rounded to f32 on write.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cloud::FeaturedCloud;
use crate::config::RadarConfig;
use crate::error::{Error, Result};
use crate::pose::{Pose, Trajectory, TrajectorySample};
use crate::sim::AdcCube;

pub const ADCC_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;

/// Parse JSON, naming the offending key path on failure.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> std::result::Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.inner().to_string()
        } else {
            format!("at `{path}`: {}", e.inner())
        }
    })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json_str(&text).map_err(|m| Error::parse(path, m))
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_adcc_to<W: Write>(cube: &AdcCube, mut w: W) -> std::io::Result<()> {
    let (c, v, s) = cube.dims();
    let mut buf = Vec::with_capacity(20 + 8 * cube.samples.len());
    buf.extend_from_slice(b"ADCC");
    for x in [ADCC_VERSION, c as u32, v as u32, s as u32] {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for z in &cube.samples {
        buf.extend_from_slice(&(z.re as f32).to_le_bytes());
        buf.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

/// Samples and `(chirps, virtual, samples)` dims of an ADCC stream.
pub fn read_adcc_from<R: Read>(mut r: R) -> std::result::Result<(Vec<Complex64>, [usize; 3]), String> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| e.to_string())?;
    if buf.len() < 20 || &buf[..4] != b"ADCC" {
        return Err("bad magic, expected ADCC".into());
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    if word(0) != ADCC_VERSION {
        return Err(format!("unsupported ADCC version {}", word(0)));
    }
    let dims = [word(1) as usize, word(2) as usize, word(3) as usize];
    let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("dims overflow")?;
    let body = &buf[20..];
    if body.len() != 8 * n {
        return Err(format!("expected {} sample bytes for dims {dims:?}, found {}", 8 * n, body.len()));
    }
    let f = |b: &[u8]| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64;
    let samples = body.chunks_exact(8).map(|b| Complex64::new(f(&b[..4]), f(&b[4..]))).collect();
    Ok((samples, dims))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMeta {
    pub timestamp: f64,
    pub pose: Pose,
}

/// Write `<stem>.adcc` and its `<stem>.json` sidecar.
pub fn write_cube(cube: &AdcCube, stem: &Path) -> Result<()> {
    let adcc = stem.with_extension("adcc");
    let mut w = std::io::BufWriter::new(fs::File::create(&adcc).map_err(|e| Error::io(&adcc, e))?);
    write_adcc_to(cube, &mut w).map_err(|e| Error::io(&adcc, e))?;
    w.flush().map_err(|e| Error::io(&adcc, e))?;
    let meta = FrameMeta {
        timestamp: cube.timestamp,
        pose: cube.pose,
    };
    save_json(&meta, &stem.with_extension("json"))
}

/// Read a cube written by [`write_cube`]; its dims must match `config`.
pub fn read_cube(stem: &Path, config: &RadarConfig) -> Result<AdcCube> {
    let adcc = stem.with_extension("adcc");
    let bytes = fs::read(&adcc).map_err(|e| Error::io(&adcc, e))?;
    let (samples, dims) = read_adcc_from(bytes.as_slice()).map_err(|m| Error::parse(&adcc, m))?;
    let expected = [config.chirps_per_frame, config.n_virtual(), config.samples_per_chirp];
    if dims != expected {
        return Err(Error::parse(&adcc, format!("dims {dims:?} differ from config {expected:?}")));
    }
    let meta: FrameMeta = load_json(&stem.with_extension("json"))?;
    let cube = AdcCube {
        config: config.clone(),
        pose: meta.pose,
        timestamp: meta.timestamp,
        samples,
    };
    cube.validate().map_err(|e| Error::parse(&adcc, e.to_string()))?;
    Ok(cube)
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    t: f64,
    px: f64,
    py: f64,
    pz: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

pub fn write_poses_csv_to<W: Write>(trajectory: &Trajectory, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for s in &trajectory.samples {
        let [px, py, pz] = s.pose.position;
        let [qw, qx, qy, qz] = s.pose.orientation;
        wr.serialize(PoseRow {
            t: s.t,
            px,
            py,
            pz,
            qw,
            qx,
            qy,
            qz,
        })
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    wr.flush().map_err(|e| Error::io("poses", e))
}

pub fn read_poses_csv_from<R: Read>(r: R) -> std::result::Result<Trajectory, String> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"] {
        return Err(format!("line 1: unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut samples = Vec::new();
    for (i, row) in rd.deserialize::<PoseRow>().enumerate() {
        let line = i + 2;
        let p = row.map_err(|e| format!("line {line}: {e}"))?;
        let pose = Pose::new([p.px, p.py, p.pz], [p.qw, p.qx, p.qy, p.qz]).map_err(|e| format!("line {line}: {e}"))?;
        samples.push(TrajectorySample { t: p.t, pose });
    }
    Trajectory::new(samples).map_err(|e| e.to_string())
}

pub fn write_poses_csv(trajectory: &Trajectory, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_poses_csv_to(trajectory, std::io::BufWriter::new(f))
}

pub fn read_poses_csv(path: &Path) -> Result<Trajectory> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_poses_csv_from(std::io::BufReader::new(f)).map_err(|m| Error::parse(path, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub radar: RadarConfig,
    pub frames: usize,
    /// `(chirps, virtual, samples)`
    pub dims: [usize; 3],
    pub timestamps: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub trajectory: Trajectory,
}

pub fn frame_stem(dir: &Path, i: usize) -> PathBuf {
    dir.join("adc").join(format!("{i:06}"))
}

impl Dataset {
    /// Write a full sequence. Frame `i` of `cubes` becomes `adc/{i:06}`.
    pub fn write(dir: &Path, cubes: &[AdcCube], reference: &FeaturedCloud, seed: u64) -> Result<Dataset> {
        let first = cubes.first().ok_or_else(|| Error::InvalidInput("no frames to write".into()))?;
        let radar = first.config.clone();
        fs::create_dir_all(dir.join("adc")).map_err(|e| Error::io(dir, e))?;
        cubes
            .par_iter()
            .enumerate()
            .try_for_each(|(i, c)| write_cube(c, &frame_stem(dir, i)))?;
        let trajectory = Trajectory::from_poses(
            &cubes.iter().map(|c| c.timestamp).collect::<Vec<_>>(),
            &cubes.iter().map(|c| c.pose).collect::<Vec<_>>(),
        )?;
        write_poses_csv(&trajectory, &dir.join("poses.csv"))?;
        reference.to_reference().write_csv(&dir.join("ref.csv"))?;
        let (c, v, s) = first.dims();
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            radar,
            frames: cubes.len(),
            dims: [c, v, s],
            timestamps: trajectory.samples.iter().map(|s| s.t).collect(),
            seed,
        };
        save_json(&manifest, &dir.join("manifest.json"))?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
            trajectory,
        })
    }

    /// Open and cross-check manifest, pose file and frame files.
    pub fn open(dir: &Path) -> Result<Dataset> {
        let mpath = dir.join("manifest.json");
        let manifest: Manifest = load_json(&mpath)?;
        let bad = |m: String| Error::parse(&mpath, m);
        if manifest.version != MANIFEST_VERSION {
            return Err(bad(format!("unsupported manifest version {}", manifest.version)));
        }
        manifest.radar.validate().map_err(|e| bad(e.to_string()))?;
        let r = &manifest.radar;
        if manifest.dims != [r.chirps_per_frame, r.n_virtual(), r.samples_per_chirp] {
            return Err(bad(format!("dims {:?} do not match the radar config", manifest.dims)));
        }
        if manifest.timestamps.len() != manifest.frames {
            return Err(bad(format!(
                "{} timestamps for {} frames",
                manifest.timestamps.len(),
                manifest.frames
            )));
        }
        let trajectory = read_poses_csv(&dir.join("poses.csv"))?;
        let times: Vec<f64> = trajectory.samples.iter().map(|s| s.t).collect();
        if times != manifest.timestamps {
            return Err(bad("poses.csv timestamps differ from the manifest".into()));
        }
        for i in 0..manifest.frames {
            let stem = frame_stem(dir, i);
            let adcc = stem.with_extension("adcc");
            let expected = 20 + 8 * manifest.dims.iter().product::<usize>() as u64;
            let len = fs::metadata(&adcc).map_err(|e| Error::io(&adcc, e))?.len();
            if len != expected {
                return Err(Error::parse(&adcc, format!("{len} bytes, manifest dims imply {expected}")));
            }
            let meta: FrameMeta = load_json(&stem.with_extension("json"))?;
            if meta.timestamp != manifest.timestamps[i] || meta.pose != trajectory.samples[i].pose {
                return Err(Error::parse(
                    stem.with_extension("json"),
                    "frame timestamp or pose differs from poses.csv",
                ));
            }
        }
        let extra = fs::read_dir(dir.join("adc"))
            .map_err(|e| Error::io(dir.join("adc"), e))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "adcc"))
            .count();
        if extra != manifest.frames {
            return Err(bad(format!("{extra} ADCC files on disk for {} frames", manifest.frames)));
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
            trajectory,
        })
    }

    pub fn load_frame(&self, i: usize) -> Result<AdcCube> {
        read_cube(&frame_stem(&self.dir, i), &self.manifest.radar)
    }

    pub fn load_frames(&self) -> Result<Vec<AdcCube>> {
        (0..self.manifest.frames).into_par_iter().map(|i| self.load_frame(i)).collect()
    }

    pub fn reference(&self) -> Result<FeaturedCloud> {
        FeaturedCloud::read_csv(&self.dir.join("ref.csv"))
    }
}
