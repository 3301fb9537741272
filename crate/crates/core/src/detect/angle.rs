use std::cmp::Ordering;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::Detection;
use crate::config::{virtual_lattice, RadarConfig, VirtualLattice, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Power of the zero-padded 2-D angle FFT, stored `[az][el]` with both axes
/// shifted so that the centre bin is boresight.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSpectrum {
    pub n_az: usize,
    pub n_el: usize,
    pub power: Vec<f64>,
    /// Lattice pitch along y and z, m (0 for a single-element axis).
    pub az_spacing: f64,
    pub el_spacing: f64,
    /// Wavelength at the middle of the sampled ramp, m.
    pub wavelength: f64,
}

impl AngleSpectrum {
    pub fn at(&self, az: usize, el: usize) -> f64 {
        self.power[az * self.n_el + el]
    }

    /// Direction cosines `(u_y, u_z)` at fractional bin coordinates.
    pub fn direction(&self, az: f64, el: f64) -> (f64, f64) {
        let u = |bin: f64, n: usize, d: f64| {
            if n <= 1 || d == 0.0 {
                0.0
            } else {
                -(bin - (n / 2) as f64) * self.wavelength / (n as f64 * d)
            }
        };
        (u(az, self.n_az, self.az_spacing), u(el, self.n_el, self.el_spacing))
    }

    pub fn median(&self) -> f64 {
        let mut v = self.power.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    fn db(&self) -> Vec<f64> {
        let max = self.power.iter().copied().fold(0.0, f64::max);
        let floor = (max * 1e-30).max(f64::MIN_POSITIVE);
        self.power.iter().map(|p| 10.0 * p.max(floor).log10()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePeak {
    pub az_bin: usize,
    pub el_bin: usize,
    /// Sub-bin refined direction cosines.
    pub u_y: f64,
    pub u_z: f64,
    pub power: f64,
    /// Topographic prominence, dB.
    pub prominence: f64,
    /// σ2 = peak power over spectrum median, dB.
    pub snr_aoa: f64,
}

impl AnglePeak {
    pub fn azimuth(&self) -> f64 {
        let ux = (1.0 - self.u_y * self.u_y - self.u_z * self.u_z).max(0.0).sqrt();
        self.u_y.atan2(ux)
    }

    pub fn elevation(&self) -> f64 {
        self.u_z.clamp(-1.0, 1.0).asin()
    }
}

/// FFT size per axis: `factor` times the lattice extent, rounded up to a
/// power of two; a single-element axis stays at one bin.
pub fn padded_size(lattice: &VirtualLattice, factor: usize) -> (usize, usize) {
    let p = |n: usize| if n <= 1 { 1 } else { (n * factor.max(1)).next_power_of_two() };
    (p(lattice.n_az), p(lattice.n_el))
}

/// Zero-padded 2-D FFT beamforming of one detection's snapshot.
pub fn aoa_map(det: &Detection, cfg: &RadarConfig, pad: (usize, usize)) -> Result<AngleSpectrum> {
    let lattice = virtual_lattice(cfg)?;
    aoa_map_on(&det.snapshot, cfg, &lattice, pad)
}

pub(crate) fn aoa_map_on(
    snapshot: &[Complex64],
    cfg: &RadarConfig,
    lattice: &VirtualLattice,
    pad: (usize, usize),
) -> Result<AngleSpectrum> {
    if snapshot.len() != lattice.cells.len() {
        return Err(Error::InvalidInput(format!(
            "snapshot has {} elements, array has {}",
            snapshot.len(),
            lattice.cells.len()
        )));
    }
    let (na, ne) = pad;
    if na < lattice.n_az || ne < lattice.n_el {
        return Err(Error::InvalidParameter(format!(
            "padding {na}x{ne} smaller than the {}x{} lattice",
            lattice.n_az, lattice.n_el
        )));
    }
    let mut grid = vec![Complex64::new(0.0, 0.0); na * ne];
    let occupancy = lattice.occupancy();
    for (x, &(a, e)) in snapshot.iter().zip(&lattice.cells) {
        grid[a * ne + e] += x / occupancy[e * lattice.n_az + a] as f64;
    }

    let mut planner = FftPlanner::<f64>::new();
    if ne > 1 {
        let f = planner.plan_fft_forward(ne);
        for row in grid.chunks_exact_mut(ne) {
            f.process(row);
        }
    }
    if na > 1 {
        let f = planner.plan_fft_forward(na);
        let mut col = vec![Complex64::new(0.0, 0.0); na];
        for e in 0..ne {
            for a in 0..na {
                col[a] = grid[a * ne + e];
            }
            f.process(&mut col);
            for a in 0..na {
                grid[a * ne + e] = col[a];
            }
        }
    }
    let mut power = vec![0.0; na * ne];
    for a in 0..na {
        for e in 0..ne {
            let sa = (a + na / 2) % na;
            let se = (e + ne / 2) % ne;
            power[sa * ne + se] = grid[a * ne + e].norm_sqr();
        }
    }
    Ok(AngleSpectrum {
        n_az: na,
        n_el: ne,
        power,
        az_spacing: lattice.az_spacing,
        el_spacing: lattice.el_spacing,
        wavelength: SPEED_OF_LIGHT / cfg.mid_ramp_freq(),
    })
}

/// Topographic prominence (dB) of every cell of a `rows x cols` height map,
/// 8-connected without wrap-around. Cells are ranked by height, then by
/// lower index; a cell that is not the top of its component gets 0.
pub fn prominence(height: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let n = height.len();
    assert_eq!(n, rows * cols);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| height[b].total_cmp(&height[a]).then(a.cmp(&b)));

    let mut parent: Vec<usize> = (0..n).collect();
    let mut top = vec![usize::MAX; n];
    let mut seen = vec![false; n];
    let mut prom = vec![0.0; n];
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let rank = |a: usize, b: usize| height[b].total_cmp(&height[a]).then(a.cmp(&b));

    for &c in &order {
        let (r, q) = (c / cols, c % cols);
        let mut roots: Vec<usize> = Vec::new();
        for dr in -1i64..=1 {
            for dq in -1i64..=1 {
                if dr == 0 && dq == 0 {
                    continue;
                }
                let (nr, nq) = (r as i64 + dr, q as i64 + dq);
                if nr < 0 || nq < 0 || nr >= rows as i64 || nq >= cols as i64 {
                    continue;
                }
                let nb = nr as usize * cols + nq as usize;
                if seen[nb] {
                    let root = find(&mut parent, nb);
                    if !roots.contains(&root) {
                        roots.push(root);
                    }
                }
            }
        }
        seen[c] = true;
        if roots.is_empty() {
            top[c] = c;
            continue;
        }
        roots.sort_by(|&a, &b| rank(top[a], top[b]));
        let keep = roots[0];
        for &other in &roots[1..] {
            let t = top[other];
            prom[t] = height[t] - height[c];
            parent[other] = keep;
        }
        parent[c] = keep;
    }
    let min = height.iter().copied().fold(f64::INFINITY, f64::min);
    for c in 0..n {
        if find(&mut parent, c) == c {
            let t = top[c];
            prom[t] = height[t] - min;
        }
    }
    prom
}

/// Peaks with prominence at least `min_prominence` dB (and above zero),
/// strongest first, ties broken by lower azimuth then lower elevation bin.
pub fn peak_extract(spectrum: &AngleSpectrum, min_prominence: f64, max_peaks: usize) -> Vec<AnglePeak> {
    let (na, ne) = (spectrum.n_az, spectrum.n_el);
    if spectrum.power.is_empty() {
        return Vec::new();
    }
    let db = spectrum.db();
    let prom = prominence(&db, na, ne);
    let median = spectrum.median();
    let mut peaks: Vec<AnglePeak> = (0..na * ne)
        .filter(|&i| prom[i] > 0.0 && prom[i] >= min_prominence)
        .map(|i| {
            let (a, e) = (i / ne, i % ne);
            let da = refine(&db, na, ne, a, e, true);
            let de = refine(&db, na, ne, a, e, false);
            let (u_y, u_z) = spectrum.direction(a as f64 + da, e as f64 + de);
            let power = spectrum.power[i];
            AnglePeak {
                az_bin: a,
                el_bin: e,
                u_y,
                u_z,
                power,
                prominence: prom[i],
                snr_aoa: 10.0 * (power / median.max(f64::MIN_POSITIVE)).log10(),
            }
        })
        .collect();
    peaks.sort_by(|x, y| {
        y.power
            .partial_cmp(&x.power)
            .unwrap_or(Ordering::Equal)
            .then(x.az_bin.cmp(&y.az_bin))
            .then(x.el_bin.cmp(&y.el_bin))
    });
    peaks.truncate(max_peaks);
    peaks
}

/// Parabolic vertex offset through three samples, in `[-0.5, 0.5]`.
pub(crate) fn parabolic(a: f64, b: f64, c: f64) -> f64 {
    let den = a - 2.0 * b + c;
    if den >= 0.0 || !den.is_finite() {
        return 0.0;
    }
    (0.5 * (a - c) / den).clamp(-0.5, 0.5)
}

fn refine(db: &[f64], na: usize, ne: usize, a: usize, e: usize, along_az: bool) -> f64 {
    let (i, n) = if along_az { (a, na) } else { (e, ne) };
    if i == 0 || i + 1 >= n {
        return 0.0;
    }
    let at = |k: usize| if along_az { db[k * ne + e] } else { db[a * ne + k] };
    parabolic(at(i - 1), at(i), at(i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::virtual_array;
    use std::f64::consts::PI;

    /// Snapshot of unit plane waves from the given (azimuth, elevation) pairs.
    fn plane_waves(cfg: &RadarConfig, dirs: &[(f64, f64)]) -> Vec<Complex64> {
        let lambda = SPEED_OF_LIGHT / cfg.mid_ramp_freq();
        virtual_array(cfg)
            .iter()
            .map(|v| {
                dirs.iter()
                    .map(|&(az, el)| {
                        let u = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
                        let path = u[0] * v.position[0] + u[1] * v.position[1] + u[2] * v.position[2];
                        Complex64::from_polar(1.0, -2.0 * PI * path / lambda)
                    })
                    .sum()
            })
            .collect()
    }

    fn det(snapshot: Vec<Complex64>) -> Detection {
        Detection {
            range_bin: 0,
            doppler_bin: 0,
            power: 1.0,
            noise: 1.0,
            snr_rd: 0.0,
            snapshot,
        }
    }

    fn argmax(s: &AngleSpectrum) -> (usize, usize) {
        let i = (0..s.power.len()).max_by(|&a, &b| s.power[a].total_cmp(&s.power[b])).unwrap();
        (i / s.n_el, i % s.n_el)
    }

    #[test]
    fn azimuth_ten_degrees() {
        let cfg = RadarConfig::horizontal();
        let lattice = virtual_lattice(&cfg).unwrap();
        let pad = padded_size(&lattice, 4);
        assert_eq!(pad, (32, 8));
        let s = aoa_map(&det(plane_waves(&cfg, &[(10f64.to_radians(), 0.0)])), &cfg, pad).unwrap();
        let (a, e) = argmax(&s);
        let (u_y, _) = s.direction(a as f64, e as f64);
        let bin_width = s.wavelength / (s.n_az as f64 * s.az_spacing);
        assert!((u_y - 10f64.to_radians().sin()).abs() <= bin_width);
    }

    #[test]
    fn equal_phases_point_at_boresight() {
        let cfg = RadarConfig::horizontal();
        let snap = vec![Complex64::new(0.3, -0.2); 12];
        let s = aoa_map(&det(snap), &cfg, (32, 8)).unwrap();
        assert_eq!(argmax(&s), (16, 4));
        assert_eq!(s.direction(16.0, 4.0), (0.0, 0.0));
    }

    #[test]
    fn two_sources_thirty_degrees_apart() {
        let cfg = RadarConfig::horizontal();
        let s = aoa_map(
            &det(plane_waves(&cfg, &[(-15f64.to_radians(), 0.0), (15f64.to_radians(), 0.0)])),
            &cfg,
            (32, 8),
        )
        .unwrap();
        let peaks = peak_extract(&s, 3.0, 4);
        assert!(peaks.len() >= 2);
        let mut az: Vec<f64> = peaks[..2].iter().map(|p| p.azimuth().to_degrees()).collect();
        az.sort_by(f64::total_cmp);
        assert!((az[0] + 15.0).abs() < 3.0 && (az[1] - 15.0).abs() < 3.0, "{az:?}");
    }

    #[test]
    fn argmax_matches_matched_filter() {
        // brute-force steering-vector scan over the padded bin directions
        let cfg = RadarConfig::horizontal();
        let elems = virtual_array(&cfg);
        let lambda = SPEED_OF_LIGHT / cfg.mid_ramp_freq();
        for (az, el) in [(0.2, 0.0), (-0.5, 0.1), (0.7, -0.2), (0.05, 0.3)] {
            let snap = plane_waves(&cfg, &[(az, el)]);
            let s = aoa_map(&det(snap.clone()), &cfg, (32, 8)).unwrap();
            let occupancy = virtual_lattice(&cfg).unwrap().occupancy();
            let lattice = virtual_lattice(&cfg).unwrap();
            let mut best = (0, 0, f64::NEG_INFINITY);
            for a in 0..32 {
                for e in 0..8 {
                    let (uy, uz) = s.direction(a as f64, e as f64);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (i, v) in elems.iter().enumerate() {
                        let (la, le) = lattice.cells[i];
                        let w = 1.0 / occupancy[le * lattice.n_az + la] as f64;
                        let path = uy * v.position[1] + uz * v.position[2];
                        acc += snap[i] * w * Complex64::from_polar(1.0, 2.0 * PI * path / lambda);
                    }
                    if acc.norm_sqr() > best.2 {
                        best = (a, e, acc.norm_sqr());
                    }
                }
            }
            let (a, e) = argmax(&s);
            assert!(a.abs_diff(best.0) <= 1 && e.abs_diff(best.1) <= 1);
        }
    }

    #[test]
    fn wrong_snapshot_length_is_rejected() {
        let cfg = RadarConfig::horizontal();
        assert!(aoa_map(&det(vec![Complex64::new(1.0, 0.0); 5]), &cfg, (32, 8)).is_err());
    }

    fn spectrum(power: Vec<f64>, n_az: usize, n_el: usize) -> AngleSpectrum {
        AngleSpectrum {
            n_az,
            n_el,
            power,
            az_spacing: 0.5,
            el_spacing: 0.5,
            wavelength: 1.0,
        }
    }

    /// Prominence by flooding: lower the water level until the cell connects
    /// to a higher-ranked one.
    fn brute_prominence(h: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let outranks = |a: usize, b: usize| h[a] > h[b] || (h[a] == h[b] && a < b);
        let mut levels: Vec<f64> = h.to_vec();
        levels.sort_by(|a, b| b.total_cmp(a));
        levels.dedup();
        let min = *levels.last().unwrap();
        (0..h.len())
            .map(|p| {
                for &level in levels.iter().filter(|&&l| l <= h[p]) {
                    let mut seen = vec![false; h.len()];
                    let mut stack = vec![p];
                    seen[p] = true;
                    let mut found = false;
                    while let Some(c) = stack.pop() {
                        if outranks(c, p) {
                            found = true;
                            break;
                        }
                        let (r, q) = ((c / cols) as i64, (c % cols) as i64);
                        for dr in -1..=1 {
                            for dq in -1..=1 {
                                let (nr, nq) = (r + dr, q + dq);
                                if nr < 0 || nq < 0 || nr >= rows as i64 || nq >= cols as i64 {
                                    continue;
                                }
                                let nb = (nr * cols as i64 + nq) as usize;
                                if !seen[nb] && h[nb] >= level {
                                    seen[nb] = true;
                                    stack.push(nb);
                                }
                            }
                        }
                    }
                    if found {
                        return h[p] - level;
                    }
                }
                h[p] - min
            })
            .collect()
    }

    #[test]
    fn prominence_matches_flood_fill() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            // quantised heights create plateaus and ties
            let h: Vec<f64> = (0..256).map(|_| rng.random_range(0..12) as f64).collect();
            assert_eq!(prominence(&h, 16, 16), brute_prominence(&h, 16, 16));
        }
    }

    #[test]
    fn two_equal_lobes_follow_tie_break() {
        let mut p = vec![1e-3; 256];
        let lobe = |p: &mut Vec<f64>, a: usize, e: usize| {
            for da in 0..3 {
                for de in 0..3 {
                    p[(a + da - 1) * 16 + e + de - 1] = if da == 1 && de == 1 { 100.0 } else { 10.0 };
                }
            }
        };
        lobe(&mut p, 10, 4);
        lobe(&mut p, 3, 12);
        let s = spectrum(p, 16, 16);
        let peaks = peak_extract(&s, 3.0, 5);
        assert_eq!(peaks.len(), 2);
        assert_eq!((peaks[0].az_bin, peaks[0].el_bin), (3, 12));
        assert_eq!((peaks[1].az_bin, peaks[1].el_bin), (10, 4));
        let db = s.db();
        let expected = brute_prominence(&db, 16, 16);
        for pk in &peaks {
            assert_eq!(pk.prominence, expected[pk.az_bin * 16 + pk.el_bin]);
        }
    }

    #[test]
    fn single_lobe_and_flat_spectra() {
        let mut p = vec![1.0; 64];
        p[3 * 8 + 5] = 50.0;
        let peaks = peak_extract(&spectrum(p, 8, 8), 1.0, 3);
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].az_bin, peaks[0].el_bin), (3, 5));
        assert!(peak_extract(&spectrum(vec![2.0; 64], 8, 8), 0.0, 3).is_empty());
    }
}
