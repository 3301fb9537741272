//! Synthetic aperture accumulation.
//!
//! Each frame is reduced to one record: a chirp-averaged, windowed,
//! zero-padded range profile per virtual channel. Records are resampled to
//! equal path-length spacing, then coherently back-projected onto a voxel
//! grid and thresholded into a 4-feature cloud `(x, y, z, intensity)`.
//!
//! Range profiles are referenced to the middle of the sampled ramp: bin `k`
//! of an `M`-point FFT over `N` samples is multiplied by
//! `exp(jπ k (N − 1) / M)`. A point target at delay `τ` then has phase
//! `2π f_mid τ` at every bin of its main lobe, so interpolating between bins
//! keeps the phase, and back-projection removes it with `exp(−j2π f_mid τ)`.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cloud::{FeaturedCloud, Provenance};
use crate::config::{max_range, RadarConfig, SPEED_OF_LIGHT};
use crate::detect::Window;
use crate::error::{Error, Result};
use crate::pose::{Pose, Trajectory};
use crate::sim::AdcCube;

/// Upper bound on voxels in a grid built by [`VoxelGrid::around_trajectory`].
pub const MAX_VOXELS: usize = 1 << 25;

/// Range profiles of one frame, `[virtual][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfiles {
    pub n_virtual: usize,
    pub n_bins: usize,
    pub data: Vec<Complex64>,
}

impl RangeProfiles {
    pub fn channel(&self, v: usize) -> &[Complex64] {
        &self.data[v * self.n_bins..(v + 1) * self.n_bins]
    }

    fn zeros_like(&self) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); self.data.len()],
            ..*self
        }
    }
}

/// A range-profile set tagged with the pose it was recorded at.
#[derive(Debug, Clone, PartialEq)]
pub struct SaaRecord {
    pub t: f64,
    pub pose: Pose,
    pub profiles: RangeProfiles,
}

/// Chirp-averaged range profiles with `pad` times zero padding.
pub fn range_profiles(cube: &AdcCube, window: Window, pad: usize) -> Result<RangeProfiles> {
    cube.validate()?;
    let (nc, nv, ns) = cube.dims();
    if pad == 0 {
        return Err(Error::InvalidParameter("pad must be >= 1".into()));
    }
    let m = ns * pad;
    let w = window.coefficients(ns);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let mut data = vec![Complex64::new(0.0, 0.0); nv * m];
    for v in 0..nv {
        let row = &mut data[v * m..(v + 1) * m];
        for l in 0..nc {
            let o = cube.index(l, v, 0);
            for n in 0..ns {
                row[n] += cube.samples[o + n];
            }
        }
        for n in 0..ns {
            row[n] *= w[n] / nc as f64;
        }
        fft.process(row);
        for (k, x) in row.iter_mut().enumerate() {
            *x *= Complex64::from_polar(1.0, PI * k as f64 * (ns as f64 - 1.0) / m as f64);
        }
    }
    Ok(RangeProfiles {
        n_virtual: nv,
        n_bins: m,
        data,
    })
}

/// Record for one cube, at the cube's pose and timestamp.
pub fn record_from_cube(cube: &AdcCube, window: Window, pad: usize) -> Result<SaaRecord> {
    Ok(SaaRecord {
        t: cube.timestamp,
        pose: cube.pose,
        profiles: range_profiles(cube, window, pad)?,
    })
}

/// Piecewise interpolant of time, position, orientation and range profiles
/// over cumulative path length.
#[derive(Debug, Clone)]
pub struct PathInterpolant {
    dist: Vec<f64>,
    records: Vec<SaaRecord>,
}

const STATIONARY: f64 = 1e-6;

impl PathInterpolant {
    pub fn new(trajectory: &Trajectory, profiles: &[RangeProfiles]) -> Result<Self> {
        trajectory.validate()?;
        if trajectory.len() != profiles.len() {
            return Err(Error::InvalidInput(format!(
                "{} trajectory samples for {} records",
                trajectory.len(),
                profiles.len()
            )));
        }
        if trajectory.len() < 2 {
            return Err(Error::InvalidInput("need at least two trajectory samples".into()));
        }
        let shape = (profiles[0].n_virtual, profiles[0].n_bins);
        if profiles.iter().any(|p| (p.n_virtual, p.n_bins) != shape) {
            return Err(Error::InvalidInput("records differ in shape".into()));
        }
        let mut dist = vec![0.0];
        let mut records = vec![SaaRecord {
            t: trajectory.samples[0].t,
            pose: trajectory.samples[0].pose,
            profiles: profiles[0].clone(),
        }];
        let mut total = 0.0;
        for i in 1..trajectory.len() {
            let a = trajectory.samples[i - 1].pose.position;
            let b = trajectory.samples[i].pose.position;
            total += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
            if total - dist[dist.len() - 1] < STATIONARY {
                continue;
            }
            dist.push(total);
            records.push(SaaRecord {
                t: trajectory.samples[i].t,
                pose: trajectory.samples[i].pose,
                profiles: profiles[i].clone(),
            });
        }
        Ok(Self { dist, records })
    }

    /// Cumulative distance of every retained node.
    pub fn node_distances(&self) -> &[f64] {
        &self.dist
    }

    pub fn total_length(&self) -> f64 {
        self.dist[self.dist.len() - 1]
    }

    /// Interpolated record at path length `d`, clamped to the path ends.
    /// Node distances return the node itself.
    pub fn at(&self, d: f64) -> SaaRecord {
        let n = self.dist.len();
        if d <= self.dist[0] {
            return self.records[0].clone();
        }
        if d >= self.dist[n - 1] {
            return self.records[n - 1].clone();
        }
        let a = self.dist.partition_point(|&x| x <= d) - 1;
        let (ra, rb) = (&self.records[a], &self.records[a + 1]);
        let w = (d - self.dist[a]) / (self.dist[a + 1] - self.dist[a]);
        if w == 0.0 {
            return ra.clone();
        }
        let mut profiles = ra.profiles.zeros_like();
        for ((o, x), y) in profiles.data.iter_mut().zip(&ra.profiles.data).zip(&rb.profiles.data) {
            *o = x + (y - x) * w;
        }
        SaaRecord {
            t: ra.t + w * (rb.t - ra.t),
            pose: ra.pose.interpolate(&rb.pose, w),
            profiles,
        }
    }
}

/// Records at path lengths `0, spacing, 2·spacing, …` up to the total length.
pub fn resample(trajectory: &Trajectory, profiles: &[RangeProfiles], spacing: f64) -> Result<Vec<SaaRecord>> {
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidParameter(format!("spacing must be positive, got {spacing}")));
    }
    let path = PathInterpolant::new(trajectory, profiles)?;
    let total = path.total_length();
    if total < spacing {
        return Err(Error::InsufficientMotion { length: total, spacing });
    }
    let n = (total * (1.0 + 1e-9) / spacing).floor() as usize + 1;
    Ok((0..n).map(|j| path.at(j as f64 * spacing)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: [f64; 3],
    pub voxel_size: f64,
    pub dims: [usize; 3],
    pub values: Vec<Complex64>,
}

impl VoxelGrid {
    pub fn new(origin: [f64; 3], voxel_size: f64, dims: [usize; 3]) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) || !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("voxel size must be positive and origin finite".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidParameter("grid dims must be >= 1".into()));
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= MAX_VOXELS)
            .ok_or_else(|| Error::Resource(format!("grid exceeds {MAX_VOXELS} voxels")))?;
        Ok(Self {
            origin,
            voxel_size,
            dims,
            values: vec![Complex64::new(0.0, 0.0); n],
        })
    }

    /// Smallest grid whose voxels cover the box `[min, max]`.
    pub fn covering(min: [f64; 3], max: [f64; 3], voxel_size: f64) -> Result<Self> {
        let mut dims = [0; 3];
        for k in 0..3 {
            if !(max[k] >= min[k]) {
                return Err(Error::InvalidParameter("grid bounds are inverted".into()));
            }
            dims[k] = (((max[k] - min[k]) / voxel_size).ceil() as usize).max(1);
        }
        Self::new(min, voxel_size, dims)
    }

    /// Grid covering the trajectory's bounding box grown by `reach` metres,
    /// with `reach` clipped to the radar's maximum range.
    pub fn around_trajectory(trajectory: &Trajectory, cfg: &RadarConfig, voxel_size: f64, reach: f64) -> Result<Self> {
        if trajectory.is_empty() {
            return Err(Error::InvalidInput("empty trajectory".into()));
        }
        let reach = reach.min(max_range(cfg)?);
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for s in &trajectory.samples {
            for k in 0..3 {
                lo[k] = lo[k].min(s.pose.position[k] - reach);
                hi[k] = hi[k].max(s.pose.position[k] + reach);
            }
        }
        Self::covering(lo, hi, voxel_size)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.dims[1] + iy) * self.dims[2] + iz
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        let iz = i % self.dims[2];
        let iy = (i / self.dims[2]) % self.dims[1];
        let ix = i / (self.dims[1] * self.dims[2]);
        [ix, iy, iz]
    }

    pub fn center(&self, i: usize) -> [f64; 3] {
        let c = self.coords(i);
        [0, 1, 2].map(|k| self.origin[k] + (c[k] as f64 + 0.5) * self.voxel_size)
    }

    /// Voxel containing `p`, if inside the grid.
    pub fn voxel_of(&self, p: [f64; 3]) -> Option<usize> {
        let mut c = [0usize; 3];
        for k in 0..3 {
            let f = ((p[k] - self.origin[k]) / self.voxel_size).floor();
            if f < 0.0 || f >= self.dims[k] as f64 {
                return None;
            }
            c[k] = f as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.dims.iter().product::<usize>() {
            return Err(Error::InvalidInput("voxel count does not match dims".into()));
        }
        if !self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite voxel value".into()));
        }
        Ok(())
    }

    pub fn write_voxg(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_voxg_to(&mut f).map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_voxg_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"VOXG")?;
        w.write_all(&1u32.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for o in self.origin {
            w.write_all(&o.to_le_bytes())?;
        }
        w.write_all(&self.voxel_size.to_le_bytes())?;
        for v in &self.values {
            let c = Complex32::new(v.re as f32, v.im as f32);
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_voxg(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_voxg_from(bytes.as_slice()).map_err(|m| Error::parse(path, m))
    }

    pub fn read_voxg_from<R: Read>(mut r: R) -> std::result::Result<Self, String> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| e.to_string())?;
        let mut cur = Cursor(&buf, 0);
        if cur.take(4)? != b"VOXG" {
            return Err("bad magic, expected VOXG".into());
        }
        let version = cur.u32()?;
        if version != 1 {
            return Err(format!("unsupported VOXG version {version}"));
        }
        let dims = [cur.u32()? as usize, cur.u32()? as usize, cur.u32()? as usize];
        let origin = [cur.f64()?, cur.f64()?, cur.f64()?];
        let voxel_size = cur.f64()?;
        let mut grid = VoxelGrid::new(origin, voxel_size, dims).map_err(|e| e.to_string())?;
        for v in &mut grid.values {
            *v = Complex64::new(cur.f32()? as f64, cur.f32()? as f64);
        }
        if cur.1 != buf.len() {
            return Err(format!("{} trailing bytes", buf.len() - cur.1));
        }
        grid.validate().map_err(|e| e.to_string())?;
        Ok(grid)
    }
}

struct Cursor<'a>(&'a [u8], usize);

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let s = self
            .0
            .get(self.1..self.1 + n)
            .ok_or_else(|| format!("truncated at byte {}", self.1))?;
        self.1 += n;
        Ok(s)
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> std::result::Result<f32, String> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Closed field-of-view test of a global point against an antenna pose:
/// `0 < r <= r_max`, `|azimuth| <= azimuth_fov`, `|elevation| <= elevation_fov`.
fn visible(pose: &Pose, cfg: &RadarConfig, r_max: f64, p: [f64; 3]) -> bool {
    let [x, y, z] = pose.apply_inverse(p);
    let r = (x * x + y * y + z * z).sqrt();
    if !(r > 0.0 && r <= r_max) {
        return false;
    }
    let az = y.atan2(x);
    let el = z.atan2((x * x + y * y).sqrt());
    az.abs() <= cfg.azimuth_fov && el.abs() <= cfg.elevation_fov
}

/// Per-voxel visibility from one antenna pose.
pub fn fov_mask(grid: &VoxelGrid, pose: &Pose, cfg: &RadarConfig) -> Result<Vec<bool>> {
    let r_max = max_range(cfg)?;
    Ok((0..grid.len()).map(|i| visible(pose, cfg, r_max, grid.center(i))).collect())
}

/// Coherently accumulate `records` into `grid`. Each voxel sums, over
/// records that see it and every TX/RX pair, the range profile sampled at
/// the voxel's round-trip delay times `exp(−j2π f_mid τ)`.
pub fn backproject(records: &[SaaRecord], mut grid: VoxelGrid, cfg: &RadarConfig) -> Result<VoxelGrid> {
    cfg.validate()?;
    grid.validate()?;
    let nv = cfg.n_virtual();
    let Some(first) = records.first() else {
        return Ok(grid);
    };
    let m = first.profiles.n_bins;
    if m % cfg.samples_per_chirp != 0 {
        return Err(Error::InvalidInput(format!(
            "{m} profile bins is not a multiple of {} samples per chirp",
            cfg.samples_per_chirp
        )));
    }
    for r in records {
        r.pose.validate()?;
        if r.profiles.n_virtual != nv || r.profiles.n_bins != m {
            return Err(Error::InvalidInput(format!(
                "record shape {}x{} does not match {nv}x{m}",
                r.profiles.n_virtual, r.profiles.n_bins
            )));
        }
    }
    let r_max = max_range(cfg)?;
    let bins_per_second = cfg.sweep_rate * m as f64 / cfg.sample_rate;
    let phase_per_second = -2.0 * PI * cfg.mid_ramp_freq();

    // Global TX/RX phase centres per record, in virtual-channel order.
    let centres: Vec<Vec<([f64; 3], [f64; 3])>> = records
        .iter()
        .map(|r| {
            cfg.tx_positions
                .iter()
                .flat_map(|tx| cfg.rx_positions.iter().map(move |rx| (r.pose.apply(*tx), r.pose.apply(*rx))))
                .collect()
        })
        .collect();

    let g = &grid;
    let contributions: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let c = g.center(i);
            let mut acc = Complex64::new(0.0, 0.0);
            for (rec, pairs) in records.iter().zip(&centres) {
                if !visible(&rec.pose, cfg, r_max, c) {
                    continue;
                }
                for (v, (tx, rx)) in pairs.iter().enumerate() {
                    let tau = (dist(c, *tx) + dist(c, *rx)) / SPEED_OF_LIGHT;
                    let k = tau * bins_per_second;
                    let k0 = k.floor();
                    if k0 < 0.0 || k0 as usize + 1 >= m {
                        continue;
                    }
                    let j = k0 as usize;
                    let f = k - k0;
                    let prof = rec.profiles.channel(v);
                    let s = prof[j] + (prof[j + 1] - prof[j]) * f;
                    acc += s * Complex64::from_polar(1.0, phase_per_second * tau);
                }
            }
            acc
        })
        .collect();
    for (v, c) in grid.values.iter_mut().zip(contributions) {
        *v += c;
    }
    Ok(grid)
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Keep voxels at or above this nearest-rank percentile of `|value|`.
    Percentile(f64),
    /// Keep voxels with `|value|` strictly above this.
    Absolute(f64),
}

/// Voxel centres passing `threshold` (and nonzero), in voxel order.
pub fn discretize(grid: &VoxelGrid, threshold: Threshold) -> Result<FeaturedCloud> {
    grid.validate()?;
    let mags = grid.magnitudes();
    let keep: Box<dyn Fn(f64) -> bool> = match threshold {
        Threshold::Percentile(p) => {
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("percentile {p} outside [0, 100]")));
            }
            let mut sorted = mags.clone();
            sorted.sort_by(f64::total_cmp);
            let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
            let q = sorted[rank - 1];
            Box::new(move |m| m >= q && m > 0.0)
        }
        Threshold::Absolute(a) => Box::new(move |m| m > a),
    };
    let mut cloud = FeaturedCloud::new(Provenance::Saa);
    for (i, &m) in mags.iter().enumerate() {
        if keep(m) {
            let c = grid.center(i);
            cloud.push(&[c[0], c[1], c[2], m]);
        }
    }
    Ok(cloud)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridExtent {
    /// Trajectory bounding box grown by this many metres.
    Around(f64),
    Bounds { min: [f64; 3], max: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaaParams {
    /// Path-length spacing of resampled records; `None` means λ/4.
    pub spacing: Option<f64>,
    pub voxel_size: f64,
    pub extent: GridExtent,
    pub threshold: Threshold,
    pub window: Window,
    pub pad: usize,
}

impl Default for SaaParams {
    fn default() -> Self {
        Self {
            spacing: None,
            voxel_size: 0.05,
            extent: GridExtent::Around(3.0),
            threshold: Threshold::Percentile(99.0),
            window: Window::Hann,
            pad: 2,
        }
    }
}

/// Resample, back-project and discretize a sequence of cubes.
pub fn reconstruct(cubes: &[AdcCube], params: &SaaParams) -> Result<(VoxelGrid, FeaturedCloud)> {
    let first = cubes.first().ok_or_else(|| Error::InvalidInput("no frames".into()))?;
    let cfg = &first.config;
    if cubes.iter().any(|c| &c.config != cfg) {
        return Err(Error::InvalidInput("frames use different radar configs".into()));
    }
    let profiles = cubes
        .par_iter()
        .map(|c| range_profiles(c, params.window, params.pad))
        .collect::<Result<Vec<_>>>()?;
    let spacing = params.spacing.unwrap_or(cfg.wavelength() / 4.0);
    if cubes.len() < 2 {
        return Err(Error::InsufficientMotion { length: 0.0, spacing });
    }
    let times: Vec<f64> = cubes.iter().map(|c| c.timestamp).collect();
    let poses: Vec<Pose> = cubes.iter().map(|c| c.pose).collect();
    let trajectory = Trajectory::from_poses(&times, &poses)?;
    let records = resample(&trajectory, &profiles, spacing)?;
    let grid = match params.extent {
        GridExtent::Around(reach) => VoxelGrid::around_trajectory(&trajectory, cfg, params.voxel_size, reach)?,
        GridExtent::Bounds { min, max } => VoxelGrid::covering(min, max, params.voxel_size)?,
    };
    let grid = backproject(&records, grid, cfg)?;
    let cloud = discretize(&grid, params.threshold)?;
    Ok((grid, cloud))
}
