//! Point-target FMCW simulator.
//!
//! The simulator is the ground-truth oracle for the rest of the crate. Each
//! scatterer contributes, for every chirp `l`, virtual channel `(tx, rx)` and
//! fast-time sample `n`,
//!
//! ```text
//! a · exp(j 2π (f0 + k_f n / F_s) τ),   τ = (|p_l − tx| + |p_l − rx|) / c
//! ```
//!
//! where `p_l = p + v l T_c` is the scatterer position at the start of chirp
//! `l` and `tx`, `rx` are the global antenna phase centres. The radar is held
//! at its frame pose for all chirps (stop-and-hop). This is the
//! `tx · conj(rx)` dechirp convention: the beat tone sits at `+k_f τ`, and a
//! receding target advances the phase by `4π v T_c / λ` per chirp.
//!
//! First-order multipath is modelled by mirroring every scatterer across each
//! reflector plane that it shares a side with the radar; the mirror image is
//! scaled by `ghost_attenuation`. Scatterers (and ghosts) outside the angular
//! field of view contribute nothing. Noise is circular complex Gaussian with
//! `E|n|² = noise_power`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RadarConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::pose::{Pose, Trajectory};

/// Upper bound on `chirps × virtual × samples` for one simulated frame.
pub const MAX_CUBE_LEN: usize = 1 << 26;

fn default_attenuation() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scatterer {
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    pub reflectivity: f64,
}

impl Scatterer {
    pub fn fixed(position: [f64; 3], reflectivity: f64) -> Self {
        Self {
            position,
            velocity: [0.0; 3],
            reflectivity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectorPlane {
    pub point: [f64; 3],
    /// Unit normal.
    pub normal: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub scatterers: Vec<Scatterer>,
    #[serde(default)]
    pub reflector_planes: Vec<ReflectorPlane>,
    #[serde(default)]
    pub noise_power: f64,
    #[serde(default = "default_attenuation")]
    pub ghost_attenuation: f64,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            scatterers: Vec::new(),
            reflector_planes: Vec::new(),
            noise_power: 0.0,
            ghost_attenuation: default_attenuation(),
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        for s in &self.scatterers {
            if !(s.reflectivity >= 0.0 && s.reflectivity.is_finite()) {
                return Err(Error::InvalidInput(format!("reflectivity {} must be >= 0", s.reflectivity)));
            }
            if !s.position.iter().chain(&s.velocity).all(|v| v.is_finite()) {
                return Err(Error::InvalidInput("non-finite scatterer state".into()));
            }
        }
        for p in &self.reflector_planes {
            let n = p.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("reflector normal has norm {n}")));
            }
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(Error::InvalidInput("noise_power must be >= 0".into()));
        }
        if !(self.ghost_attenuation >= 0.0) {
            return Err(Error::InvalidInput("ghost_attenuation must be >= 0".into()));
        }
        Ok(())
    }

    /// Scatterers on a rectangular patch `origin + i·spacing·u + j·spacing·v`.
    pub fn add_patch(&mut self, origin: [f64; 3], u: [f64; 3], v: [f64; 3], nu: usize, nv: usize, spacing: f64, reflectivity: f64) {
        for i in 0..nu {
            for j in 0..nv {
                let mut p = origin;
                for k in 0..3 {
                    p[k] += spacing * (i as f64 * u[k] + j as f64 * v[k]);
                }
                self.scatterers.push(Scatterer::fixed(p, reflectivity));
            }
        }
    }

    /// Ghost images as seen from a radar at `radar_position`.
    pub fn ghosts(&self, radar_position: [f64; 3]) -> Vec<Scatterer> {
        let mut out = Vec::new();
        for plane in &self.reflector_planes {
            let side_r = dot(sub(radar_position, plane.point), plane.normal);
            for s in &self.scatterers {
                let side_s = dot(sub(s.position, plane.point), plane.normal);
                if side_s * side_r <= 0.0 {
                    continue;
                }
                let vn = dot(s.velocity, plane.normal);
                let mut g = *s;
                for k in 0..3 {
                    g.position[k] -= 2.0 * side_s * plane.normal[k];
                    g.velocity[k] -= 2.0 * vn * plane.normal[k];
                }
                g.reflectivity *= self.ghost_attenuation;
                out.push(g);
            }
        }
        out
    }
}

/// Complex baseband samples of one frame, `[chirp][virtual][sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcCube {
    pub config: RadarConfig,
    pub pose: Pose,
    pub timestamp: f64,
    pub samples: Vec<Complex64>,
}

impl AdcCube {
    pub fn zeros(config: RadarConfig, pose: Pose, timestamp: f64) -> Self {
        let n = config.cube_len();
        Self {
            config,
            pose,
            timestamp,
            samples: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// `(chirps, virtual, samples)`
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.config.chirps_per_frame, self.config.n_virtual(), self.config.samples_per_chirp)
    }

    pub fn index(&self, chirp: usize, virt: usize, sample: usize) -> usize {
        let (_, nv, ns) = self.dims();
        (chirp * nv + virt) * ns + sample
    }

    pub fn get(&self, chirp: usize, virt: usize, sample: usize) -> Complex64 {
        self.samples[self.index(chirp, virt, sample)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != self.config.cube_len() {
            return Err(Error::InvalidInput(format!(
                "cube holds {} samples, config expects {}",
                self.samples.len(),
                self.config.cube_len()
            )));
        }
        if !self.samples.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite ADC sample".into()));
        }
        Ok(())
    }
}

/// Reflectivity giving `snr_db` of coherent range-Doppler integration gain
/// per virtual channel (rectangular window) against `noise_power`.
pub fn amplitude_for_snr(cfg: &RadarConfig, snr_db: f64, noise_power: f64) -> f64 {
    let cells = (cfg.samples_per_chirp * cfg.chirps_per_frame) as f64;
    (noise_power * 10f64.powf(snr_db / 10.0) / cells).sqrt()
}

/// True when a body-frame point lies inside the angular field of view.
pub fn in_angular_fov(cfg: &RadarConfig, local: [f64; 3]) -> bool {
    let [x, y, z] = local;
    let r = (x * x + y * y + z * z).sqrt();
    if r == 0.0 {
        return false;
    }
    let az = y.atan2(x);
    let el = z.atan2((x * x + y * y).sqrt());
    az.abs() <= cfg.azimuth_fov && el.abs() <= cfg.elevation_fov
}

/// Simulate one frame with noise drawn from stream 0 of `seed`.
pub fn simulate_frame(cfg: &RadarConfig, scene: &Scene, pose: &Pose, t: f64, seed: u64) -> Result<AdcCube> {
    simulate_frame_stream(cfg, scene, pose, t, seed, 0)
}

/// Simulate one frame with noise drawn from stream `stream` of `seed`.
/// Frame `i` of [`simulate_trajectory`] uses stream `i`.
pub fn simulate_frame_stream(
    cfg: &RadarConfig,
    scene: &Scene,
    pose: &Pose,
    t: f64,
    seed: u64,
    stream: u64,
) -> Result<AdcCube> {
    cfg.validate()?;
    scene.validate()?;
    pose.validate()?;
    let len = cfg
        .chirps_per_frame
        .checked_mul(cfg.n_virtual())
        .and_then(|v| v.checked_mul(cfg.samples_per_chirp))
        .filter(|&n| n <= MAX_CUBE_LEN)
        .ok_or_else(|| Error::Resource(format!("cube exceeds {MAX_CUBE_LEN} samples")))?;
    debug_assert_eq!(len, cfg.cube_len());

    let mut cube = AdcCube::zeros(cfg.clone(), *pose, t);
    let (nc, nv, ns) = cube.dims();

    let channels: Vec<([f64; 3], [f64; 3])> = cfg
        .tx_positions
        .iter()
        .flat_map(|tx| cfg.rx_positions.iter().map(move |rx| (pose.apply(*tx), pose.apply(*rx))))
        .collect();

    let mut sources: Vec<Scatterer> = scene.scatterers.clone();
    sources.extend(scene.ghosts(pose.position));
    sources.retain(|s| s.reflectivity > 0.0 && in_angular_fov(cfg, pose.apply_inverse(s.position)));

    let f0 = cfg.carrier_start_freq;
    let slope_per_sample = cfg.sweep_rate / cfg.sample_rate;
    for s in &sources {
        for l in 0..nc {
            let dt = l as f64 * cfg.chirp_interval;
            let p = [
                s.position[0] + s.velocity[0] * dt,
                s.position[1] + s.velocity[1] * dt,
                s.position[2] + s.velocity[2] * dt,
            ];
            for (v, (tx, rx)) in channels.iter().enumerate() {
                let tau = (norm(sub(p, *tx)) + norm(sub(p, *rx))) / SPEED_OF_LIGHT;
                let start = Complex64::from_polar(s.reflectivity, 2.0 * PI * f0 * tau);
                let step = Complex64::from_polar(1.0, 2.0 * PI * slope_per_sample * tau);
                let base = (l * nv + v) * ns;
                let mut z = start;
                for x in &mut cube.samples[base..base + ns] {
                    *x += z;
                    z *= step;
                }
            }
        }
    }

    if scene.noise_power > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let normal = Normal::new(0.0, (scene.noise_power / 2.0).sqrt()).expect("finite sigma");
        for x in &mut cube.samples {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            *x += Complex64::new(re, im);
        }
    }
    Ok(cube)
}

/// One cube per trajectory sample; frame `i` draws noise from stream `i`.
pub fn simulate_trajectory(cfg: &RadarConfig, scene: &Scene, trajectory: &Trajectory, seed: u64) -> Result<Vec<AdcCube>> {
    if trajectory.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    trajectory.validate()?;
    trajectory
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| simulate_frame_stream(cfg, scene, &s.pose, s.t, seed, i as u64))
        .collect()
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}
