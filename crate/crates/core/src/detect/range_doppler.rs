use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::AdcCube;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    None,
    #[default]
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            Window::Hann if n == 1 => vec![1.0],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }

    /// Sum over all lags of the squared correlation between the powers of
    /// two FFT bins of windowed white noise, `N Σw⁴ / (Σw²)²`. Dividing a
    /// count of adjacent cells by this gives the number of independent ones.
    pub fn power_correlation_spread(self, n: usize) -> f64 {
        let w = self.coefficients(n);
        let s2: f64 = w.iter().map(|v| v * v).sum();
        let s4: f64 = w.iter().map(|v| v.powi(4)).sum();
        n as f64 * s4 / (s2 * s2)
    }
}

/// Range-Doppler spectra of every virtual channel, stored
/// `[doppler][range][virtual]` so that one cell's snapshot is contiguous.
/// The Doppler axis is shifted: bin `n_doppler / 2` is zero velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub n_doppler: usize,
    pub n_range: usize,
    pub n_virtual: usize,
    /// Metres per range bin.
    pub range_bin_size: f64,
    /// m/s per Doppler bin; positive velocity is receding.
    pub doppler_bin_size: f64,
    pub cells: Vec<Complex64>,
}

impl RangeDopplerMap {
    pub fn zero_doppler_bin(&self) -> usize {
        self.n_doppler / 2
    }

    pub fn range_of(&self, bin: f64) -> f64 {
        bin * self.range_bin_size
    }

    pub fn velocity_of(&self, bin: f64) -> f64 {
        (bin - self.zero_doppler_bin() as f64) * self.doppler_bin_size
    }

    pub fn snapshot(&self, doppler: usize, range: usize) -> &[Complex64] {
        let o = (doppler * self.n_range + range) * self.n_virtual;
        &self.cells[o..o + self.n_virtual]
    }

    /// Power of one cell summed non-coherently over channels.
    pub fn power(&self, doppler: usize, range: usize) -> f64 {
        self.snapshot(doppler, range).iter().map(|z| z.norm_sqr()).sum()
    }

    /// `[doppler][range]` non-coherent power.
    pub fn power_map(&self) -> Vec<f64> {
        self.cells
            .chunks_exact(self.n_virtual)
            .map(|s| s.iter().map(|z| z.norm_sqr()).sum())
            .collect()
    }
}

/// Windowed fast-time FFT, then windowed slow-time FFT with the Doppler axis
/// shifted to centre zero velocity.
pub fn range_doppler(adc: &AdcCube, window: Window) -> Result<RangeDopplerMap> {
    adc.validate()?;
    let (nc, nv, ns) = adc.dims();
    if nc == 0 || nv == 0 || ns == 0 {
        return Err(Error::InvalidInput("empty cube".into()));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft_r = planner.plan_fft_forward(ns);
    let fft_d = planner.plan_fft_forward(nc);
    let wr = window.coefficients(ns);
    let wd = window.coefficients(nc);

    // fast time, in place on a copy of the cube
    let mut fast = adc.samples.clone();
    for row in fast.chunks_exact_mut(ns) {
        for (x, w) in row.iter_mut().zip(&wr) {
            *x *= w;
        }
        fft_r.process(row);
    }

    let mut cells = vec![Complex64::new(0.0, 0.0); nc * ns * nv];
    let mut col = vec![Complex64::new(0.0, 0.0); nc];
    let half = nc / 2;
    for v in 0..nv {
        for r in 0..ns {
            for (l, c) in col.iter_mut().enumerate() {
                *c = fast[(l * nv + v) * ns + r] * wd[l];
            }
            fft_d.process(&mut col);
            for (k, c) in col.iter().enumerate() {
                let d = (k + half) % nc;
                cells[(d * ns + r) * nv + v] = *c;
            }
        }
    }
    Ok(RangeDopplerMap {
        n_doppler: nc,
        n_range: ns,
        n_virtual: nv,
        range_bin_size: adc.config.range_bin_size(),
        doppler_bin_size: adc.config.doppler_bin_size(),
        cells,
    })
}
