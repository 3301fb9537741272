//! Single-frame point clouds from raw ADC cubes.
//!
//! Range FFT, Doppler FFT, cell-averaging CFAR on the non-coherent power map,
//! then per-detection 2-D angle FFT and prominence peak picking. Each
//! surviving angle peak becomes one 6-feature point
//! `(x, y, z, v, snr_rd, snr_aoa)` in the radar body frame.

mod angle;
mod cfar;
mod range_doppler;

pub use angle::{aoa_map, padded_size, peak_extract, prominence, AnglePeak, AngleSpectrum};
pub use cfar::{alpha_for_pfa, ca_cfar, ring_size, Detection};
pub use range_doppler::{range_doppler, RangeDopplerMap, Window};

use serde::{Deserialize, Serialize};

use crate::cloud::{FeaturedCloud, Provenance};
use crate::config::virtual_lattice;
use crate::error::Result;
use crate::sim::AdcCube;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfarThreshold {
    /// Fixed threshold factor.
    Alpha(f64),
    /// Expected false alarms per frame in white noise, spread evenly over
    /// the map's cells. Window-induced correlation between neighbouring
    /// cells shrinks the effective training count accordingly.
    FalseAlarmsPerFrame(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointCloudParams {
    pub window: Window,
    pub threshold: CfarThreshold,
    pub guard: usize,
    pub train: usize,
    /// Keep only detections that are 8-neighbour maxima of the power map.
    pub local_maxima_only: bool,
    pub angle_pad_factor: usize,
    pub min_prominence: f64,
    pub max_peaks: usize,
    /// Drop angle peaks more than this many dB below the strongest.
    pub peak_floor_db: f64,
}

impl Default for PointCloudParams {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            threshold: CfarThreshold::FalseAlarmsPerFrame(1e-3),
            guard: 2,
            train: 4,
            local_maxima_only: true,
            angle_pad_factor: 4,
            min_prominence: 3.0,
            max_peaks: 2,
            peak_floor_db: 6.0,
        }
    }
}

impl PointCloudParams {
    /// Threshold factor for a map of the given shape.
    pub fn alpha(&self, n_doppler: usize, n_range: usize, channels: usize) -> Result<f64> {
        match self.threshold {
            CfarThreshold::Alpha(a) => Ok(a),
            CfarThreshold::FalseAlarmsPerFrame(f) => {
                let correlation =
                    self.window.power_correlation_spread(n_doppler) * self.window.power_correlation_spread(n_range);
                let n_train = ring_size(self.guard, self.train) as f64 / correlation;
                alpha_for_pfa(f / (n_doppler * n_range) as f64, n_train, channels)
            }
        }
    }
}

/// Detections that outrank all 8 neighbours by (power, lower index).
pub fn local_maxima(rdm: &RangeDopplerMap, dets: Vec<Detection>) -> Vec<Detection> {
    let power = rdm.power_map();
    let (nd, nr) = (rdm.n_doppler, rdm.n_range);
    dets.into_iter()
        .filter(|det| {
            let (d, r) = (det.doppler_bin, det.range_bin);
            let me = d * nr + r;
            for dd in d.saturating_sub(1)..=(d + 1).min(nd - 1) {
                for rr in r.saturating_sub(1)..=(r + 1).min(nr - 1) {
                    let o = dd * nr + rr;
                    if o != me && (power[o] > power[me] || (power[o] == power[me] && o < me)) {
                        return false;
                    }
                }
            }
            true
        })
        .collect()
}

/// Sub-bin `(doppler, range)` position of a detection by parabolic fits on dB.
fn refine_cell(rdm: &RangeDopplerMap, d: usize, r: usize) -> (f64, f64) {
    let db = |dd: usize, rr: usize| 10.0 * rdm.power(dd, rr).max(f64::MIN_POSITIVE).log10();
    let dr = if r > 0 && r + 1 < rdm.n_range {
        angle::parabolic(db(d, r - 1), db(d, r), db(d, r + 1))
    } else {
        0.0
    };
    let dd = if d > 0 && d + 1 < rdm.n_doppler {
        angle::parabolic(db(d - 1, r), db(d, r), db(d + 1, r))
    } else {
        0.0
    };
    (d as f64 + dd, r as f64 + dr)
}

/// Full single-frame chain; points are in the radar body frame.
pub fn single_frame_pointcloud(adc: &AdcCube, params: &PointCloudParams) -> Result<FeaturedCloud> {
    let cfg = &adc.config;
    let rdm = range_doppler(adc, params.window)?;
    let alpha = params.alpha(rdm.n_doppler, rdm.n_range, rdm.n_virtual)?;
    let mut dets = ca_cfar(&rdm, alpha, params.guard, params.train)?;
    if params.local_maxima_only {
        dets = local_maxima(&rdm, dets);
    }
    let lattice = virtual_lattice(cfg)?;
    let pad = padded_size(&lattice, params.angle_pad_factor);

    let mut cloud = FeaturedCloud::new(Provenance::Nca);
    for det in &dets {
        let spectrum = angle::aoa_map_on(&det.snapshot, cfg, &lattice, pad)?;
        let peaks = peak_extract(&spectrum, params.min_prominence, params.max_peaks);
        let Some(strongest) = peaks.first().map(|p| p.power) else {
            continue;
        };
        let floor = strongest * 10f64.powf(-params.peak_floor_db / 10.0);
        let (db, rb) = refine_cell(&rdm, det.doppler_bin, det.range_bin);
        let range = rdm.range_of(rb);
        let velocity = rdm.velocity_of(db);
        for p in peaks.iter().filter(|p| p.power >= floor) {
            let ux2 = 1.0 - p.u_y * p.u_y - p.u_z * p.u_z;
            if ux2 < 0.0 {
                continue;
            }
            cloud.push(&[
                range * ux2.sqrt(),
                range * p.u_y,
                range * p.u_z,
                velocity,
                det.snr_rd,
                p.snr_aoa,
            ]);
        }
    }
    Ok(cloud)
}
