//! Causal denoising: classify the current accumulated clouds, fuse each
//! point's probability history through a per-track Kalman filter, keep the
//! points whose fused label is clean.
//!
//! Tracks are anchored where they were first seen. A point joins the
//! nearest track created in an earlier step if one lies within the
//! association radius, otherwise the nearest track created earlier in the
//! same step, otherwise it opens a new track. All tracks predict once per
//! step; each associated point then updates its track in point order.

use serde::{Deserialize, Serialize};

use super::kalman::{KalmanParams, ScalarKalman};
use super::net::ClassifierModel;
use crate::cloud::{FeaturedCloud, Provenance};
use crate::error::{Error, Result};
use crate::spatial::{dist2, KdTree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseParams {
    pub kalman: KalmanParams,
    pub association_radius: f64,
}

impl Default for DenoiseParams {
    fn default() -> Self {
        Self {
            kalman: KalmanParams::default(),
            association_radius: 0.15,
        }
    }
}

impl DenoiseParams {
    pub fn validate(&self) -> Result<()> {
        self.kalman.validate()?;
        if !(self.association_radius > 0.0 && self.association_radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "association radius must be positive, got {}",
                self.association_radius
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackSet {
    positions: Vec<[f64; 3]>,
    filters: Vec<ScalarKalman>,
}

impl TrackSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Track index assigned to each point.
    fn associate(&mut self, points: &[[f64; 3]], params: &DenoiseParams) -> Vec<usize> {
        let r2 = params.association_radius * params.association_radius;
        let old = self.positions.len();
        let tree = KdTree::new(&self.positions);
        let mut assigned = Vec::with_capacity(points.len());
        for p in points {
            if let Some((i, d)) = tree.nearest(p) {
                if d <= r2 {
                    assigned.push(i);
                    continue;
                }
            }
            let mut best: Option<(usize, f64)> = None;
            for (t, q) in self.positions.iter().enumerate().skip(old) {
                let d = dist2(p, q);
                if d <= r2 && best.is_none_or(|b| d < b.1) {
                    best = Some((t, d));
                }
            }
            match best {
                Some((t, _)) => assigned.push(t),
                None => {
                    self.positions.push(*p);
                    self.filters.push(ScalarKalman::new(&params.kalman));
                    assigned.push(self.positions.len() - 1);
                }
            }
        }
        assigned
    }

    /// One fusion step; returns the fused label of every point.
    pub fn step(&mut self, points: &[[f64; 3]], probs: &[f64], params: &DenoiseParams) -> Vec<u8> {
        for f in &mut self.filters {
            f.predict(params.kalman.q);
        }
        let assigned = self.associate(points, params);
        for (&t, &z) in assigned.iter().zip(probs) {
            self.filters[t].update(z, params.kalman.r);
        }
        assigned.iter().map(|&t| self.filters[t].label()).collect()
    }
}

/// Points kept from each input cloud at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoisedFrame {
    pub nca: FeaturedCloud,
    pub saa: FeaturedCloud,
}

impl DenoisedFrame {
    /// Positions of both clouds as one geometry-only cloud, NCA first.
    pub fn merged(&self) -> FeaturedCloud {
        let mut out = self.nca.to_reference();
        out.extend_from(&self.saa.to_reference()).expect("same provenance");
        out
    }
}

/// Streaming denoiser with explicit per-provenance track state.
#[derive(Debug, Clone)]
pub struct Denoiser<'m> {
    model: &'m ClassifierModel,
    params: DenoiseParams,
    nca_tracks: TrackSet,
    saa_tracks: TrackSet,
    steps: usize,
}

fn kept(cloud: &FeaturedCloud, labels: Vec<u8>) -> Result<FeaturedCloud> {
    let idx: Vec<usize> = (0..cloud.len()).filter(|&i| labels[i] == 1).collect();
    let mut out = cloud.clone();
    out.set_labels(labels)?;
    Ok(out.select(&idx))
}

impl<'m> Denoiser<'m> {
    pub fn new(model: &'m ClassifierModel, params: DenoiseParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            model,
            params,
            nca_tracks: TrackSet::default(),
            saa_tracks: TrackSet::default(),
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tracks(&self) -> (&TrackSet, &TrackSet) {
        (&self.nca_tracks, &self.saa_tracks)
    }

    /// Feed the current global-frame clouds. On error the state is left
    /// untouched.
    pub fn step(&mut self, p_nca: &FeaturedCloud, p_saa: &FeaturedCloud) -> Result<DenoisedFrame> {
        for (c, want) in [(p_nca, Provenance::Nca), (p_saa, Provenance::Saa)] {
            if c.provenance() != want {
                return Err(Error::InvalidInput(format!(
                    "expected a {want:?} cloud, got {:?}",
                    c.provenance()
                )));
            }
        }
        let prob_nca = self.model.predict(p_nca)?;
        let prob_saa = self.model.predict(p_saa)?;
        let l_nca = self.nca_tracks.step(&p_nca.positions(), &prob_nca, &self.params);
        let l_saa = self.saa_tracks.step(&p_saa.positions(), &prob_saa, &self.params);
        self.steps += 1;
        Ok(DenoisedFrame {
            nca: kept(p_nca, l_nca)?,
            saa: kept(p_saa, l_saa)?,
        })
    }
}

/// Single-step denoising of one pair of clouds.
pub fn denoise(
    model: &ClassifierModel,
    p_nca: &FeaturedCloud,
    p_saa: &FeaturedCloud,
    params: &DenoiseParams,
) -> Result<FeaturedCloud> {
    Ok(Denoiser::new(model, *params)?.step(p_nca, p_saa)?.merged())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rdm::Topology;

    fn nca(points: &[[f64; 3]]) -> FeaturedCloud {
        let mut c = FeaturedCloud::new(Provenance::Nca);
        for (i, p) in points.iter().enumerate() {
            c.push(&[p[0], p[1], p[2], 0.0, 10.0 + i as f64, 5.0]);
        }
        c
    }

    fn saa(points: &[[f64; 3]]) -> FeaturedCloud {
        let mut c = FeaturedCloud::new(Provenance::Saa);
        for p in points {
            c.push(&[p[0], p[1], p[2], 1.0]);
        }
        c
    }

    fn small() -> Topology {
        Topology {
            input_width: 4,
            block_widths: vec![4, 4],
            global_width: 4,
            head_width: 4,
            k: 2,
            dropout: 0.5,
        }
    }

    #[test]
    fn all_pass_and_all_reject_models() {
        let a = nca(&[[1.0, 0.0, 0.0], [2.0, 1.0, 0.0], [3.0, -1.0, 0.5]]);
        let b = saa(&[[0.0, 2.0, 0.0], [5.0, 5.0, 1.0]]);
        let params = DenoiseParams::default();
        let pass = ClassifierModel::constant(small(), 30.0).unwrap();
        let out = denoise(&pass, &a, &b, &params).unwrap();
        let mut expected = a.positions();
        expected.extend(b.positions());
        assert_eq!(out.positions(), expected);
        let reject = ClassifierModel::constant(small(), -30.0).unwrap();
        assert!(denoise(&reject, &a, &b, &params).unwrap().is_empty());
    }

    #[test]
    fn nearby_points_share_a_track() {
        let mut t = TrackSet::default();
        let params = DenoiseParams::default();
        let labels = t.step(&[[0.0; 3], [0.1, 0.0, 0.0], [1.0, 0.0, 0.0]], &[0.9, 0.9, 0.1], &params);
        assert_eq!(t.len(), 2);
        assert_eq!(labels, vec![1, 1, 0]);
        t.step(&[[0.05, 0.0, 0.0]], &[0.9], &params);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn wrong_provenance_leaves_state_untouched() {
        let m = ClassifierModel::constant(small(), 1.0).unwrap();
        let mut d = Denoiser::new(&m, DenoiseParams::default()).unwrap();
        d.step(&nca(&[[1.0; 3]]), &saa(&[])).unwrap();
        let before = d.tracks().0.clone();
        assert!(d.step(&saa(&[[1.0; 3]]), &saa(&[])).is_err());
        assert_eq!(d.tracks().0, &before);
        assert_eq!(d.steps(), 1);
    }

    #[test]
    fn earlier_outputs_ignore_later_frames() {
        let m = ClassifierModel::new(small(), 5).unwrap();
        let frames: Vec<(FeaturedCloud, FeaturedCloud)> = (0..6)
            .map(|f| {
                let pts: Vec<[f64; 3]> = (0..=f).map(|i| [i as f64 * 0.4, (i * f) as f64 * 0.1, 0.0]).collect();
                (nca(&pts), saa(&pts[..pts.len() / 2]))
            })
            .collect();
        let run = |n: usize| {
            let mut d = Denoiser::new(&m, DenoiseParams::default()).unwrap();
            frames[..n].iter().map(|(a, b)| d.step(a, b).unwrap()).collect::<Vec<_>>()
        };
        let short = run(3);
        let long = run(6);
        assert_eq!(short[..], long[..3]);
    }
}
