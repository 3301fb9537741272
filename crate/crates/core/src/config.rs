//! FMCW waveform and antenna geometry.
//!
//! All resolution and limit formulas are evaluated from a [`RadarConfig`].
//! The wavelength is taken at the carrier start frequency and the speed of
//! light is the conventional rounded value `3e8` m/s, which reproduces the
//! tabulated resolution figures of single-chip 77 GHz radars exactly
//! (1.6 GHz of bandwidth gives 0.09375 m).
//!
//! Body frame: x forward (boresight), y left, z up. Antenna offsets live in
//! the y-z plane; azimuth is the y axis of the virtual array, elevation the
//! z axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light used throughout the crate, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarConfig {
    /// Hz
    pub carrier_start_freq: f64,
    /// Swept bandwidth over the sampled part of the chirp, Hz.
    pub bandwidth: f64,
    /// Hz/s
    pub sweep_rate: f64,
    /// Hz
    pub sample_rate: f64,
    pub samples_per_chirp: usize,
    pub chirps_per_frame: usize,
    /// Time between the starts of consecutive chirps, s.
    pub chirp_interval: f64,
    /// Active chirping time of a frame, s.
    pub frame_duration: f64,
    /// TX phase centres in the body frame, m.
    pub tx_positions: Vec<[f64; 3]>,
    /// RX phase centres in the body frame, m.
    pub rx_positions: Vec<[f64; 3]>,
    /// Half-angle, rad.
    pub azimuth_fov: f64,
    /// Half-angle, rad.
    pub elevation_fov: f64,
}

/// Axis of the virtual array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayAxis {
    Azimuth,
    Elevation,
}

/// One MIMO virtual element: the sum of a TX and an RX offset.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualElement {
    pub position: [f64; 3],
    pub tx: usize,
    pub rx: usize,
    /// Number of virtual elements (including this one) at the same position.
    pub multiplicity: usize,
}

/// Placement of the virtual elements on a uniform azimuth/elevation lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualLattice {
    /// Lattice pitch along azimuth (body y), m. Zero when `n_az == 1`.
    pub az_spacing: f64,
    /// Lattice pitch along elevation (body z), m. Zero when `n_el == 1`.
    pub el_spacing: f64,
    pub n_az: usize,
    pub n_el: usize,
    /// `(az index, el index)` of each virtual channel, tx-major order.
    pub cells: Vec<(usize, usize)>,
}

impl VirtualLattice {
    /// Number of channels that landed on each lattice cell, `[el][az]` flattened.
    pub fn occupancy(&self) -> Vec<usize> {
        let mut occ = vec![0; self.n_az * self.n_el];
        for &(a, e) in &self.cells {
            occ[e * self.n_az + a] += 1;
        }
        occ
    }
}

impl RadarConfig {
    /// TI AWR1843-style 3TX/4RX layout: RX at 0, λ/2, λ, 3λ/2 along y; TX1 at
    /// the origin, TX2 at (λ, λ/2) in (y, z), TX3 at 2λ along y. The virtual
    /// array is an 8 x 2 lattice with λ/2 pitch (12 elements).
    pub fn awr1843(
        carrier_start_freq: f64,
        bandwidth: f64,
        samples_per_chirp: usize,
        sample_rate: f64,
        chirps_per_frame: usize,
        chirp_interval: f64,
    ) -> Self {
        let lambda = SPEED_OF_LIGHT / carrier_start_freq;
        let half = lambda / 2.0;
        let rx_positions = (0..4).map(|i| [0.0, i as f64 * half, 0.0]).collect();
        let tx_positions = vec![[0.0, 0.0, 0.0], [0.0, lambda, half], [0.0, 2.0 * lambda, 0.0]];
        let ramp_time = samples_per_chirp as f64 / sample_rate;
        Self {
            carrier_start_freq,
            bandwidth,
            sweep_rate: bandwidth / ramp_time,
            sample_rate,
            samples_per_chirp,
            chirps_per_frame,
            chirp_interval,
            frame_duration: chirps_per_frame as f64 * chirp_interval,
            tx_positions,
            rx_positions,
            azimuth_fov: 50f64.to_radians(),
            elevation_fov: 20f64.to_radians(),
        }
    }

    /// Horizontally mounted single-chip radar, 77.7 GHz start, 1.2 GHz sweep.
    ///
    /// Reconstructed, not measured: sampling rate, chirp interval and chirp
    /// count are back-solved so that the derived figures come out as 0.125 m
    /// range resolution, 16 m maximum range, 7.63 m/s maximum and ~0.12 m/s
    /// velocity resolution.
    pub fn horizontal() -> Self {
        let f0 = 77.7e9;
        let lambda = SPEED_OF_LIGHT / f0;
        let chirp_interval = lambda / (4.0 * 7.63);
        Self::awr1843(f0, 1.2e9, 128, 10.0e6, 128, chirp_interval)
    }

    /// Vertically mounted single-chip radar, 79.1 GHz start, 1.6 GHz sweep.
    ///
    /// Reconstructed like [`RadarConfig::horizontal`]: 0.09375 m range
    /// resolution, 12 m maximum range, 4.47 m/s maximum and ~0.55 m/s velocity
    /// resolution. The array is rotated a quarter turn about boresight so the
    /// 8-element axis is vertical.
    pub fn vertical() -> Self {
        let f0 = 79.1e9;
        let lambda = SPEED_OF_LIGHT / f0;
        let chirp_interval = lambda / (4.0 * 4.47);
        let mut cfg = Self::awr1843(f0, 1.6e9, 128, 10.0e6, 16, chirp_interval);
        for p in cfg.tx_positions.iter_mut().chain(cfg.rx_positions.iter_mut()) {
            *p = [p[0], -p[2], p[1]];
        }
        cfg.azimuth_fov = 20f64.to_radians();
        cfg.elevation_fov = 50f64.to_radians();
        cfg
    }

    /// Look up a named preset (`"horizontal"` or `"vertical"`).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "horizontal" => Some(Self::horizontal()),
            "vertical" => Some(Self::vertical()),
            _ => None,
        }
    }

    /// Same waveform with a different chirp count; the frame duration follows.
    pub fn with_chirps(mut self, chirps_per_frame: usize) -> Self {
        self.chirps_per_frame = chirps_per_frame;
        self.frame_duration = chirps_per_frame as f64 * self.chirp_interval;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_start_freq", self.carrier_start_freq),
            ("bandwidth", self.bandwidth),
            ("sweep_rate", self.sweep_rate),
            ("sample_rate", self.sample_rate),
            ("chirp_interval", self.chirp_interval),
            ("frame_duration", self.frame_duration),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.samples_per_chirp == 0 || self.chirps_per_frame == 0 {
            return Err(Error::InvalidConfig("empty chirp or frame".into()));
        }
        let swept = self.sweep_rate * self.samples_per_chirp as f64 / self.sample_rate;
        if ((swept - self.bandwidth) / self.bandwidth).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "bandwidth {} Hz inconsistent with sweep_rate x ramp time = {swept} Hz",
                self.bandwidth
            )));
        }
        if self.frame_duration < self.chirps_per_frame as f64 * self.chirp_interval * (1.0 - 1e-12) {
            return Err(Error::InvalidConfig(
                "frame_duration shorter than chirps_per_frame x chirp_interval".into(),
            ));
        }
        if self.tx_positions.is_empty() || self.rx_positions.is_empty() {
            return Err(Error::InvalidConfig("tx and rx lists must be non-empty".into()));
        }
        let finite = self
            .tx_positions
            .iter()
            .chain(&self.rx_positions)
            .all(|p| p.iter().all(|c| c.is_finite()));
        if !finite {
            return Err(Error::InvalidConfig("non-finite antenna offset".into()));
        }
        if !(self.azimuth_fov > 0.0 && self.elevation_fov > 0.0) {
            return Err(Error::InvalidConfig("field of view half-angles must be positive".into()));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_start_freq
    }

    pub fn n_virtual(&self) -> usize {
        self.tx_positions.len() * self.rx_positions.len()
    }

    /// Range covered by one range-FFT bin (without zero padding), m.
    pub fn range_bin_size(&self) -> f64 {
        SPEED_OF_LIGHT * self.sample_rate / (2.0 * self.sweep_rate * self.samples_per_chirp as f64)
    }

    /// Velocity covered by one Doppler-FFT bin, m/s.
    pub fn doppler_bin_size(&self) -> f64 {
        self.wavelength() / (2.0 * self.chirps_per_frame as f64 * self.chirp_interval)
    }

    /// Carrier frequency at the middle of the sampled ramp, Hz.
    pub fn mid_ramp_freq(&self) -> f64 {
        self.carrier_start_freq
            + self.sweep_rate * (self.samples_per_chirp as f64 - 1.0) / (2.0 * self.sample_rate)
    }

    /// Number of `(chirp, virtual, sample)` values in one frame.
    pub fn cube_len(&self) -> usize {
        self.chirps_per_frame * self.n_virtual() * self.samples_per_chirp
    }
}

/// `c / 2B`
pub fn range_resolution(cfg: &RadarConfig) -> Result<f64> {
    if !(cfg.bandwidth > 0.0) {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {}", cfg.bandwidth)));
    }
    Ok(SPEED_OF_LIGHT / (2.0 * cfg.bandwidth))
}

/// `F_s c / 2 k_f`
pub fn max_range(cfg: &RadarConfig) -> Result<f64> {
    if !(cfg.sweep_rate > 0.0) {
        return Err(Error::InvalidConfig(format!("sweep rate must be positive, got {}", cfg.sweep_rate)));
    }
    Ok(cfg.sample_rate * SPEED_OF_LIGHT / (2.0 * cfg.sweep_rate))
}

/// Returns `(v_res, v_max) = (λ / 2T_f, λ / 4T_c)`.
pub fn velocity_limits(cfg: &RadarConfig) -> Result<(f64, f64)> {
    if !(cfg.chirp_interval > 0.0 && cfg.frame_duration > 0.0) {
        return Err(Error::InvalidConfig("chirp interval and frame duration must be positive".into()));
    }
    if !(cfg.carrier_start_freq > 0.0) {
        return Err(Error::InvalidConfig("carrier frequency must be positive".into()));
    }
    let lambda = cfg.wavelength();
    Ok((lambda / (2.0 * cfg.frame_duration), lambda / (4.0 * cfg.chirp_interval)))
}

/// `λ / (N d_a cos θ)` with `N` and `d_a` read off the virtual lattice.
pub fn angular_resolution(cfg: &RadarConfig, axis: ArrayAxis, theta: f64) -> Result<f64> {
    let lattice = virtual_lattice(cfg)?;
    let (n, d) = match axis {
        ArrayAxis::Azimuth => (lattice.n_az, lattice.az_spacing),
        ArrayAxis::Elevation => (lattice.n_el, lattice.el_spacing),
    };
    if n < 2 {
        return Err(Error::DegenerateAperture(format!("{axis:?} aperture has {n} element(s)")));
    }
    let cos = theta.cos();
    if !(theta.abs() < std::f64::consts::FRAC_PI_2) || cos <= 1e-12 {
        return Err(Error::Singularity(theta));
    }
    Ok(cfg.wavelength() / (n as f64 * d * cos))
}

/// All TX + RX offset sums in tx-major order.
pub fn virtual_array(cfg: &RadarConfig) -> Vec<VirtualElement> {
    let mut out = Vec::with_capacity(cfg.n_virtual());
    for (t, tx) in cfg.tx_positions.iter().enumerate() {
        for (r, rx) in cfg.rx_positions.iter().enumerate() {
            out.push(VirtualElement {
                position: [tx[0] + rx[0], tx[1] + rx[1], tx[2] + rx[2]],
                tx: t,
                rx: r,
                multiplicity: 1,
            });
        }
    }
    let tol = 1e-9;
    let positions: Vec<[f64; 3]> = out.iter().map(|e| e.position).collect();
    for e in &mut out {
        e.multiplicity = positions
            .iter()
            .filter(|p| (0..3).all(|k| (p[k] - e.position[k]).abs() <= tol))
            .count();
    }
    out
}

fn axis_lattice(coords: &[f64]) -> Result<(f64, usize, Vec<usize>)> {
    let tol = 1e-9;
    let mut uniq: Vec<f64> = coords.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup_by(|a, b| (*a - *b).abs() <= tol);
    if uniq.len() == 1 {
        return Ok((0.0, 1, vec![0; coords.len()]));
    }
    let pitch = uniq
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let min = uniq[0];
    let mut idx = Vec::with_capacity(coords.len());
    for &c in coords {
        let k = (c - min) / pitch;
        let r = k.round();
        if (k - r).abs() > 1e-3 {
            return Err(Error::UnsupportedGeometry(format!(
                "offset {c} m is not on a {pitch} m lattice"
            )));
        }
        idx.push(r as usize);
    }
    let n = idx.iter().copied().max().unwrap_or(0) + 1;
    Ok((pitch, n, idx))
}

/// Place the virtual array on a uniform (azimuth, elevation) lattice.
pub fn virtual_lattice(cfg: &RadarConfig) -> Result<VirtualLattice> {
    let elems = virtual_array(cfg);
    if elems.is_empty() {
        return Err(Error::InvalidConfig("empty antenna lists".into()));
    }
    let ys: Vec<f64> = elems.iter().map(|e| e.position[1]).collect();
    let zs: Vec<f64> = elems.iter().map(|e| e.position[2]).collect();
    let (az_spacing, n_az, ia) = axis_lattice(&ys)?;
    let (el_spacing, n_el, ie) = axis_lattice(&zs)?;
    Ok(VirtualLattice {
        az_spacing,
        el_spacing,
        n_az,
        n_el,
        cells: ia.into_iter().zip(ie).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> RadarConfig {
        RadarConfig::horizontal()
    }

    #[test]
    fn range_resolution_values() {
        let mut cfg = base();
        cfg.bandwidth = 4.0e9;
        assert!((range_resolution(&cfg).unwrap() - 0.0375).abs() < 1e-15);
        cfg.bandwidth = 1.6e9;
        assert_eq!(range_resolution(&cfg).unwrap(), 0.09375);
        cfg.bandwidth = 1.2e9;
        assert!((range_resolution(&cfg).unwrap() - 0.125).abs() < 1e-15);
        cfg.bandwidth = 0.0;
        assert!(matches!(range_resolution(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn max_range_values() {
        let mut cfg = base();
        cfg.sample_rate = 10e6;
        cfg.sweep_rate = 100e6 / 1e-6;
        assert!((max_range(&cfg).unwrap() - 15.0).abs() < 1e-12);
        let doubled = RadarConfig { sample_rate: 20e6, ..cfg.clone() };
        assert!((max_range(&doubled).unwrap() - 30.0).abs() < 1e-12);
        cfg.sample_rate = 0.0;
        assert_eq!(max_range(&cfg).unwrap(), 0.0);
        cfg.sweep_rate = -1.0;
        assert!(max_range(&cfg).is_err());
    }

    #[test]
    fn velocity_limit_values() {
        let mut cfg = base();
        // λ = 4 mm, T_c = 131 µs
        cfg.carrier_start_freq = SPEED_OF_LIGHT / 4e-3;
        cfg.chirp_interval = 131e-6;
        let (_, vmax) = velocity_limits(&cfg).unwrap();
        assert!((vmax - 7.633587786).abs() < 1e-6);
        cfg.chirp_interval *= 2.0;
        let (_, vmax2) = velocity_limits(&cfg).unwrap();
        assert!((vmax2 - vmax / 2.0).abs() < 1e-12);
        cfg.frame_duration = 0.0;
        assert!(velocity_limits(&cfg).is_err());
    }

    #[test]
    fn presets_reproduce_tabulated_figures() {
        let h = RadarConfig::horizontal();
        h.validate().unwrap();
        let (vres, vmax) = velocity_limits(&h).unwrap();
        assert!((vmax - 7.63).abs() < 1e-9);
        assert!((vres - 0.12).abs() < 0.005, "{vres}");
        assert!((max_range(&h).unwrap() - 16.0).abs() < 1e-9);

        let v = RadarConfig::vertical();
        v.validate().unwrap();
        let (vres, vmax) = velocity_limits(&v).unwrap();
        assert!((vmax - 4.47).abs() < 1e-9);
        assert!((vres - 0.55).abs() < 0.02, "{vres}");
        assert!((max_range(&v).unwrap() - 12.0).abs() < 1e-9);
        assert_eq!(range_resolution(&v).unwrap(), 0.09375);
        let lat = virtual_lattice(&v).unwrap();
        assert_eq!((lat.n_az, lat.n_el), (2, 8));
    }

    #[test]
    fn angular_resolution_of_1843_array() {
        let cfg = base();
        let az = angular_resolution(&cfg, ArrayAxis::Azimuth, 0.0).unwrap();
        assert!((az - 0.25).abs() < 1e-12);
        assert!((az.to_degrees() - 14.3239).abs() < 1e-4);
        let el = angular_resolution(&cfg, ArrayAxis::Elevation, 0.0).unwrap();
        assert!((el - 1.0).abs() < 1e-12);
        let az60 = angular_resolution(&cfg, ArrayAxis::Azimuth, 60f64.to_radians()).unwrap();
        assert!((az60 - 0.5).abs() < 1e-12);
        assert!(matches!(
            angular_resolution(&cfg, ArrayAxis::Azimuth, std::f64::consts::FRAC_PI_2),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn single_element_aperture_is_degenerate() {
        let mut cfg = base();
        cfg.tx_positions = vec![[0.0; 3]];
        cfg.rx_positions = vec![[0.0; 3]];
        assert!(matches!(
            angular_resolution(&cfg, ArrayAxis::Azimuth, 0.0),
            Err(Error::DegenerateAperture(_))
        ));
        let va = virtual_array(&cfg);
        assert_eq!(va.len(), 1);
        assert_eq!(va[0].position, [0.0; 3]);
    }

    #[test]
    fn virtual_array_layout() {
        let cfg = base();
        let va = virtual_array(&cfg);
        assert_eq!(va.len(), 12);
        assert!(va.iter().all(|e| e.multiplicity == 1));
        let lat = virtual_lattice(&cfg).unwrap();
        assert_eq!((lat.n_az, lat.n_el), (8, 2));
        assert_eq!(lat.occupancy().iter().filter(|&&c| c > 0).count(), 12);

        let mut overlapped = cfg.clone();
        overlapped.tx_positions[1][2] = 0.0;
        let va = virtual_array(&overlapped);
        assert_eq!(va.iter().filter(|e| e.multiplicity == 2).count(), 8);
    }

    #[test]
    fn translating_tx_translates_virtual_array() {
        let cfg = base();
        let mut moved = cfg.clone();
        let u = [0.1, -0.2, 0.3];
        for p in &mut moved.tx_positions {
            for k in 0..3 {
                p[k] += u[k];
            }
        }
        for (a, b) in virtual_array(&cfg).iter().zip(virtual_array(&moved)) {
            for k in 0..3 {
                assert!((b.position[k] - a.position[k] - u[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn off_grid_array_is_rejected() {
        let mut cfg = base();
        cfg.rx_positions[3][1] += 0.3e-3;
        assert!(matches!(virtual_lattice(&cfg), Err(Error::UnsupportedGeometry(_))));
    }

    #[test]
    fn validate_catches_inconsistent_sweep() {
        let mut cfg = base();
        cfg.bandwidth *= 1.01;
        assert!(cfg.validate().is_err());
        let mut cfg = base();
        cfg.frame_duration = cfg.chirp_interval;
        assert!(cfg.validate().is_err());
        let json = serde_json::to_string(&base()).unwrap();
        let back: RadarConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, base());
    }

    proptest::proptest! {
        #[test]
        fn resolutions_improve_with_their_governing_parameter(
            b in 1.0e8..4.0e9f64,
            grow in 1.01..4.0f64,
            tf in 1e-4..1e-1f64,
            fs in 1e6..5e7f64,
        ) {
            let mut cfg = base();
            cfg.bandwidth = b;
            let r1 = range_resolution(&cfg).unwrap();
            cfg.bandwidth = b * grow;
            let r2 = range_resolution(&cfg).unwrap();
            proptest::prop_assert!(r1.is_finite() && r2 > 0.0 && r2 < r1);

            cfg.frame_duration = tf;
            let (v1, _) = velocity_limits(&cfg).unwrap();
            cfg.frame_duration = tf * grow;
            let (v2, _) = velocity_limits(&cfg).unwrap();
            proptest::prop_assert!(v1.is_finite() && v2 > 0.0 && v2 < v1);

            cfg.sample_rate = fs;
            let m1 = max_range(&cfg).unwrap();
            cfg.sample_rate = fs * grow;
            let m2 = max_range(&cfg).unwrap();
            proptest::prop_assert!(m1 > 0.0 && m2.is_finite() && m2 > m1);

            let a8 = angular_resolution(&base(), ArrayAxis::Azimuth, 0.0).unwrap();
            let a2 = angular_resolution(&base(), ArrayAxis::Elevation, 0.0).unwrap();
            proptest::prop_assert!(a8 > 0.0 && a8 < a2);
        }
    }
}
