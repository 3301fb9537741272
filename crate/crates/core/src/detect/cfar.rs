use num_complex::Complex64;
use statrs::function::beta::beta_reg;

use super::RangeDopplerMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub range_bin: usize,
    pub doppler_bin: usize,
    /// Non-coherent cell power.
    pub power: f64,
    /// Mean training-cell power.
    pub noise: f64,
    /// σ1, dB.
    pub snr_rd: f64,
    pub snapshot: Vec<Complex64>,
}

/// Number of training cells in a full (untruncated) 2-D ring.
pub fn ring_size(guard: usize, train: usize) -> usize {
    let outer = 2 * (guard + train) + 1;
    let inner = 2 * guard + 1;
    outer * outer - inner * inner
}

/// Threshold factor for a per-cell false-alarm probability `pfa`, when the
/// cell and each of `n_train` training cells are sums of `channels`
/// independent unit-mean exponential powers.
///
/// With `X ~ Gamma(K)` and `S ~ Gamma(N K)`, `P(X > α S / N)` equals
/// `1 − I_{α/(N+α)}(K, N K)`; the factor is found by bisection. `n_train`
/// may be fractional to account for correlated training cells.
pub fn alpha_for_pfa(pfa: f64, n_train: f64, channels: usize) -> Result<f64> {
    if !(pfa > 0.0 && pfa < 1.0) || !(n_train > 0.0) || channels == 0 {
        return Err(Error::InvalidParameter(format!(
            "pfa {pfa} must lie in (0, 1) with non-empty training set and channels"
        )));
    }
    let k = channels as f64;
    let n = n_train;
    let tail = |alpha: f64| 1.0 - beta_reg(k, n * k, alpha / (n + alpha));
    let (mut lo, mut hi) = (0.0, 1.0);
    while tail(hi) > pfa {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InvalidParameter(format!("pfa {pfa} unreachable")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > pfa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Cell-averaging CFAR over a square ring of `train` cells outside `guard`
/// cells on each side. The ring is truncated at the map edges.
pub fn ca_cfar(rdm: &RangeDopplerMap, alpha: f64, guard: usize, train: usize) -> Result<Vec<Detection>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if guard == 0 || train == 0 {
        return Err(Error::InvalidParameter("guard and train must be at least 1".into()));
    }
    let w = guard + train;
    if 2 * w >= rdm.n_doppler || 2 * w >= rdm.n_range {
        return Err(Error::InvalidParameter(format!(
            "CFAR window of half-width {w} does not fit a {}x{} map",
            rdm.n_doppler, rdm.n_range
        )));
    }
    let power = rdm.power_map();
    Ok(cfar_on_power(&power, rdm.n_doppler, rdm.n_range, alpha, guard, train)
        .into_iter()
        .map(|(d, r, noise)| {
            let p = power[d * rdm.n_range + r];
            Detection {
                range_bin: r,
                doppler_bin: d,
                power: p,
                noise,
                snr_rd: 10.0 * (p / noise.max(f64::MIN_POSITIVE)).log10(),
                snapshot: rdm.snapshot(d, r).to_vec(),
            }
        })
        .collect())
}

/// `(row, col, noise)` of every cell exceeding `alpha` times its ring mean.
pub(crate) fn cfar_on_power(
    power: &[f64],
    rows: usize,
    cols: usize,
    alpha: f64,
    guard: usize,
    train: usize,
) -> Vec<(usize, usize, f64)> {
    let w = guard + train;
    let mut out = Vec::new();
    for d in 0..rows {
        let (d0, d1) = (d.saturating_sub(w), (d + w).min(rows - 1));
        for r in 0..cols {
            let (r0, r1) = (r.saturating_sub(w), (r + w).min(cols - 1));
            let mut sum = 0.0;
            let mut n = 0usize;
            for dd in d0..=d1 {
                let inner_row = dd.abs_diff(d) <= guard;
                for rr in r0..=r1 {
                    if inner_row && rr.abs_diff(r) <= guard {
                        continue;
                    }
                    sum += power[dd * cols + rr];
                    n += 1;
                }
            }
            let mean = sum / n as f64;
            if power[d * cols + r] > alpha * mean {
                out.push((d, r, mean));
            }
        }
    }
    out
}
