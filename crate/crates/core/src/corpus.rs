//! Seeded synthetic scenes for training and evaluating the denoiser.
//!
//! Each scene is a box-shaped room around the origin. Its four walls are
//! densely sampled into a reference cloud. Radar clouds mix three kinds of
//! points: jittered wall returns, uniform clutter over the room (and a
//! margin beyond its walls) and mirror ghosts, which are wall points
//! reflected across a different wall. Per-point features are drawn from
//! overlapping kind-specific distributions. Labels come from
//! [`label_points`] against the reference cloud.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{FeaturedCloud, Provenance};
use crate::error::{Error, Result};
use crate::rdm::label_points;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusParams {
    pub nca_points: usize,
    pub saa_points: usize,
    pub noise_fraction: f64,
    pub ghost_fraction: f64,
    /// Standard deviation of wall-point scatter, m.
    pub wall_jitter: f64,
    pub reference_spacing: f64,
    pub label_radius: f64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            nca_points: 600,
            saa_points: 500,
            noise_fraction: 0.4,
            ghost_fraction: 0.2,
            wall_jitter: 0.03,
            reference_spacing: 0.1,
            label_radius: 0.15,
        }
    }
}

impl CorpusParams {
    pub fn validate(&self) -> Result<()> {
        let f = self.noise_fraction + self.ghost_fraction;
        if !(self.noise_fraction >= 0.0 && self.ghost_fraction >= 0.0 && f <= 1.0)
            || !(self.wall_jitter >= 0.0)
            || !(self.reference_spacing > 0.0)
            || !(self.label_radius > 0.0)
        {
            return Err(Error::InvalidParameter(format!("invalid corpus parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Wall,
    Noise,
    Ghost,
}

/// Axis-aligned room, floor at `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub height: f64,
}

impl Room {
    fn perimeter(&self) -> f64 {
        2.0 * ((self.max[0] - self.min[0]) + (self.max[1] - self.min[1]))
    }

    /// Point at arc length `s` along the floor outline and height `z`, with
    /// the index of its wall (0: y = min, 1: x = max, 2: y = max, 3: x = min).
    fn wall_point(&self, s: f64, z: f64) -> ([f64; 3], usize) {
        let wx = self.max[0] - self.min[0];
        let wy = self.max[1] - self.min[1];
        if s < wx {
            ([self.min[0] + s, self.min[1], z], 0)
        } else if s < wx + wy {
            ([self.max[0], self.min[1] + s - wx, z], 1)
        } else if s < 2.0 * wx + wy {
            ([self.max[0] - (s - wx - wy), self.max[1], z], 2)
        } else {
            ([self.min[0], self.max[1] - (s - 2.0 * wx - wy), z], 3)
        }
    }

    fn mirror(&self, p: [f64; 3], wall: usize) -> [f64; 3] {
        match wall {
            0 => [p[0], 2.0 * self.min[1] - p[1], p[2]],
            1 => [2.0 * self.max[0] - p[0], p[1], p[2]],
            2 => [p[0], 2.0 * self.max[1] - p[1], p[2]],
            _ => [2.0 * self.min[0] - p[0], p[1], p[2]],
        }
    }

    /// Wall surfaces sampled on a regular grid.
    pub fn reference(&self, spacing: f64) -> FeaturedCloud {
        let n_s = (self.perimeter() / spacing).round() as usize;
        let n_z = (self.height / spacing).round() as usize + 1;
        let mut pts = Vec::with_capacity(n_s * n_z);
        for i in 0..n_s {
            let s = self.perimeter() * i as f64 / n_s as f64;
            for k in 0..n_z {
                pts.push(self.wall_point(s, self.height * k as f64 / (n_z - 1) as f64).0);
            }
        }
        FeaturedCloud::from_positions(&pts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub room: Room,
    /// Labelled NCA-style cloud.
    pub nca: FeaturedCloud,
    pub nca_kinds: Vec<PointKind>,
    /// Labelled SAA-style cloud.
    pub saa: FeaturedCloud,
    pub saa_kinds: Vec<PointKind>,
    pub reference: FeaturedCloud,
}

fn normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).expect("finite parameters").sample(rng)
}

struct Sampler<'a> {
    room: Room,
    jitter: f64,
    rng: &'a mut ChaCha8Rng,
}

impl Sampler<'_> {
    fn wall(&mut self) -> ([f64; 3], usize) {
        let s = self.rng.random_range(0.0..self.room.perimeter());
        let z = self.rng.random_range(0.0..self.room.height);
        let (p, w) = self.room.wall_point(s, z);
        let j = self.jitter;
        let q = [
            p[0] + normal(self.rng, 0.0, j),
            p[1] + normal(self.rng, 0.0, j),
            p[2] + normal(self.rng, 0.0, j),
        ];
        (q, w)
    }

    fn noise(&mut self) -> [f64; 3] {
        let m = 0.5;
        [
            self.rng.random_range(self.room.min[0] - m..self.room.max[0] + m),
            self.rng.random_range(self.room.min[1] - m..self.room.max[1] + m),
            self.rng.random_range(0.0..self.room.height),
        ]
    }

    fn ghost(&mut self) -> [f64; 3] {
        let (p, w) = self.wall();
        let other = (w + self.rng.random_range(1..4)) % 4;
        let g = self.room.mirror(p, other);
        let j = 2.0 * self.jitter;
        [
            g[0] + normal(self.rng, 0.0, j),
            g[1] + normal(self.rng, 0.0, j),
            g[2] + normal(self.rng, 0.0, j),
        ]
    }

    fn points(&mut self, n: usize, params: &CorpusParams) -> (Vec<[f64; 3]>, Vec<PointKind>) {
        let n_noise = (n as f64 * params.noise_fraction).round() as usize;
        let n_ghost = (n as f64 * params.ghost_fraction).round() as usize;
        let n_wall = n - n_noise - n_ghost;
        let mut kinds = vec![PointKind::Wall; n_wall];
        kinds.extend(std::iter::repeat_n(PointKind::Noise, n_noise));
        kinds.extend(std::iter::repeat_n(PointKind::Ghost, n_ghost));
        kinds.shuffle(self.rng);
        let pts = kinds
            .iter()
            .map(|k| match k {
                PointKind::Wall => self.wall().0,
                PointKind::Noise => self.noise(),
                PointKind::Ghost => self.ghost(),
            })
            .collect();
        (pts, kinds)
    }
}

/// CFAR detection threshold the clutter barely clears, dB.
const DETECTION_FLOOR_DB: f64 = 12.0;

/// Ghost paths carry half the amplitude of the direct return.
const GHOST_LOSS_DB: f64 = 6.0;

fn above_floor(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    loop {
        let v = normal(rng, mean, sd);
        if v > DETECTION_FLOOR_DB {
            return v;
        }
    }
}

fn exponential(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    -mean * (1.0 - rng.random::<f64>()).ln()
}

/// `(velocity, snr_rd, snr_aoa)`. Walls and their ghosts are static;
/// clutter is a false alarm with arbitrary Doppler and an SNR just above
/// the detection floor.
fn nca_features(rng: &mut ChaCha8Rng, kind: PointKind) -> [f64; 3] {
    match kind {
        PointKind::Wall => [normal(rng, 0.0, 0.05), above_floor(rng, 20.0, 5.0), normal(rng, 12.0, 4.0)],
        PointKind::Noise => [
            rng.random_range(-2.0..2.0),
            DETECTION_FLOOR_DB + exponential(rng, 1.5),
            normal(rng, 4.0, 2.0),
        ],
        PointKind::Ghost => [
            normal(rng, 0.0, 0.05),
            above_floor(rng, 20.0 - GHOST_LOSS_DB, 5.0),
            normal(rng, 12.0 - GHOST_LOSS_DB, 4.0),
        ],
    }
}

/// Voxel magnitude, log-normal around the kind's mean amplitude.
fn saa_intensity(rng: &mut ChaCha8Rng, kind: PointKind) -> f64 {
    let log = match kind {
        PointKind::Wall => normal(rng, 0.0, 0.6),
        PointKind::Noise => normal(rng, -1.5, 0.5),
        PointKind::Ghost => normal(rng, -(GHOST_LOSS_DB / 20.0) * 10f64.ln(), 0.6),
    };
    log.exp()
}

/// One scene from `seed`.
pub fn synthetic_scene(seed: u64, params: &CorpusParams) -> Result<SyntheticScene> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wx = rng.random_range(4.0..8.0);
    let wy = rng.random_range(4.0..8.0);
    let x0 = -rng.random_range(1.0..wx - 1.0);
    let y0 = -rng.random_range(1.0..wy - 1.0);
    let room = Room {
        min: [x0, y0],
        max: [x0 + wx, y0 + wy],
        height: rng.random_range(2.5..3.0),
    };
    let reference = room.reference(params.reference_spacing);

    let (nca_pts, nca_kinds) = Sampler {
        room,
        jitter: params.wall_jitter,
        rng: &mut rng,
    }
    .points(params.nca_points, params);
    let mut nca = FeaturedCloud::new(Provenance::Nca);
    for (p, &k) in nca_pts.iter().zip(&nca_kinds) {
        let f = nca_features(&mut rng, k);
        nca.push(&[p[0], p[1], p[2], f[0], f[1], f[2]]);
    }

    let (saa_pts, saa_kinds) = Sampler {
        room,
        jitter: params.wall_jitter,
        rng: &mut rng,
    }
    .points(params.saa_points, params);
    let mut saa = FeaturedCloud::new(Provenance::Saa);
    for (p, &k) in saa_pts.iter().zip(&saa_kinds) {
        saa.push(&[p[0], p[1], p[2], saa_intensity(&mut rng, k)]);
    }

    Ok(SyntheticScene {
        room,
        nca: label_points(&nca, &reference, params.label_radius)?,
        nca_kinds,
        saa: label_points(&saa, &reference, params.label_radius)?,
        saa_kinds,
        reference,
    })
}

/// `n` scenes; scene `i` is seeded from `(seed, i)`.
pub fn synthetic_corpus(seed: u64, n: usize, params: &CorpusParams) -> Result<Vec<SyntheticScene>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| synthetic_scene(rng.random(), params)).collect()
}
