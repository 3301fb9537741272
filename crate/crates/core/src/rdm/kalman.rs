//! Probability-domain label fusion: one scalar random-walk Kalman filter per
//! tracked point, observing the classifier's clean probability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanParams {
    /// Process noise added per predict step.
    pub q: f64,
    /// Observation noise.
    pub r: f64,
    pub prior: f64,
    pub prior_variance: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            q: 1e-3,
            r: 0.1,
            prior: 0.5,
            prior_variance: 1.0,
        }
    }
}

impl KalmanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0 && self.r > 0.0 && self.prior_variance > 0.0 && self.prior.is_finite())
            || !self.q.is_finite()
            || !self.r.is_finite()
            || !self.prior_variance.is_finite()
        {
            return Err(Error::InvalidParameter(format!("invalid Kalman parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarKalman {
    pub x: f64,
    pub p: f64,
}

impl ScalarKalman {
    pub fn new(params: &KalmanParams) -> Self {
        Self {
            x: params.prior,
            p: params.prior_variance,
        }
    }

    pub fn predict(&mut self, q: f64) {
        self.p += q;
    }

    pub fn update(&mut self, z: f64, r: f64) {
        let k = self.p / (self.p + r);
        self.x += k * (z - self.x);
        self.p *= 1.0 - k;
    }

    pub fn label(&self) -> u8 {
        u8::from(self.x > 0.5)
    }
}

/// Filtered state after a predict/update pair per observation.
pub fn filter_sequence(observations: &[f64], params: &KalmanParams) -> ScalarKalman {
    let mut f = ScalarKalman::new(params);
    for &z in observations {
        f.predict(params.q);
        f.update(z, params.r);
    }
    f
}

/// Fused label of each track from its time-ordered observations.
pub fn kalman_fuse(history: &[Vec<f64>], params: &KalmanParams) -> Vec<u8> {
    history.iter().map(|obs| filter_sequence(obs, params).label()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_high_observation_is_clean() {
        assert_eq!(kalman_fuse(&[vec![0.9; 5], vec![0.1; 5]], &KalmanParams::default()), vec![1, 0]);
    }

    #[test]
    fn fifty_steps_reach_the_observation() {
        // independent recursion on the variance: P⁻ = P + q, K = P⁻/(P⁻ + r)
        let params = KalmanParams::default();
        for &z in &[0.0, 0.2, 0.77, 1.0] {
            let mut x = 0.5;
            let mut p = 1.0;
            for _ in 0..50 {
                let pm = p + 1e-3;
                let k = pm / (pm + 0.1);
                x = (1.0 - k) * x + k * z;
                p = (1.0 - k) * pm;
            }
            let f = filter_sequence(&vec![z; 50], &params);
            assert!((f.x - x).abs() < 1e-12);
            assert!((f.x - z).abs() < 1e-3, "{z}: {}", f.x);
        }
        // steady-state gain solves K² r + K q − q = 0
        let f = filter_sequence(&vec![0.3; 400], &params);
        let pm = f.p + params.q;
        let k = pm / (pm + params.r);
        let k_ss = (-params.q + (params.q * params.q + 4.0 * params.q * params.r).sqrt()) / (2.0 * params.r);
        assert!((k - k_ss).abs() < 1e-9, "{k} {k_ss}");
    }

    proptest! {
        #[test]
        fn single_observation_blends_toward_it(z in 0.0..1.0f64) {
            let params = KalmanParams::default();
            let x = filter_sequence(&[z], &params).x;
            prop_assert!(x >= z.min(0.5) - 1e-15 && x <= z.max(0.5) + 1e-15);
        }
    }
}
