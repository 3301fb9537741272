//! Focal loss `−α_t (1 − p_t)^γ log p_t` with `p_t = p` for clean points
//! (label 1) and `1 − p` otherwise; `α_t = α` for clean points, `1 − α`
//! otherwise. The log argument is clamped at [`LOG_CLAMP`].

use crate::error::{Error, Result};

pub const LOG_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Focal {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for Focal {
    fn default() -> Self {
        Self { alpha: 0.25, gamma: 2.0 }
    }
}

impl Focal {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "focal alpha {} must lie in (0, 1) and gamma {} must be >= 0",
                self.alpha, self.gamma
            )));
        }
        Ok(())
    }

    fn alpha_t(&self, label: u8) -> f64 {
        if label == 1 {
            self.alpha
        } else {
            1.0 - self.alpha
        }
    }

    /// Per-point term for probability `p` of the clean class.
    pub fn term(&self, p: f64, label: u8) -> f64 {
        let pt = if label == 1 { p } else { 1.0 - p };
        let w = if self.gamma == 0.0 { 1.0 } else { (1.0 - pt).powf(self.gamma) };
        if w == 0.0 {
            return 0.0;
        }
        -self.alpha_t(label) * w * pt.max(LOG_CLAMP).ln()
    }

    /// Per-point term and its derivative with respect to the logit `z`,
    /// evaluated without forming `p` near 0 or 1.
    pub fn term_and_grad_logit(&self, z: f64, label: u8) -> (f64, f64) {
        let s = if label == 1 { 1.0 } else { -1.0 };
        let sz = s * z;
        let pt = sigmoid(sz);
        let one_minus = sigmoid(-sz);
        let log_pt_raw = -softplus(-sz);
        let clamped = log_pt_raw < LOG_CLAMP.ln();
        let log_pt = if clamped { LOG_CLAMP.ln() } else { log_pt_raw };
        let a = self.alpha_t(label);
        let w = if self.gamma == 0.0 { 1.0 } else { one_minus.powf(self.gamma) };
        let loss = if w == 0.0 { 0.0 } else { -a * w * log_pt };
        let mut g = self.gamma * pt * log_pt;
        if !clamped {
            g -= one_minus;
        }
        (loss, s * a * w * g)
    }
}

/// Mean focal loss over points.
pub fn focal_loss(probs: &[f64], labels: &[u8], focal: Focal) -> Result<f64> {
    focal.validate()?;
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    Ok(probs.iter().zip(labels).map(|(&p, &l)| focal.term(p, l)).sum::<f64>() / probs.len() as f64)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_values() {
        let f = Focal::default();
        assert_eq!(f.term(1.0, 1), 0.0);
        assert_eq!(f.term(0.0, 0), 0.0);
        let v = focal_loss(&[0.5], &[1], f).unwrap();
        assert!((v - 0.25 * 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((v - 0.04332).abs() < 5e-6);
    }

    #[test]
    fn gamma_zero_is_half_cross_entropy() {
        let f = Focal { alpha: 0.5, gamma: 0.0 };
        let probs = [0.1, 0.7, 0.95, 0.3];
        let labels = [0, 1, 1, 0];
        let bce: f64 = probs
            .iter()
            .zip(labels)
            .map(|(&p, l)| if l == 1 { -f64::ln(p) } else { -f64::ln(1.0 - p) })
            .sum::<f64>()
            / 4.0;
        assert!((focal_loss(&probs, &labels, f).unwrap() - 0.5 * bce).abs() < 1e-15);
    }

    #[test]
    fn bad_parameters() {
        assert!(focal_loss(&[0.5], &[1], Focal { alpha: 1.0, gamma: 2.0 }).is_err());
        assert!(focal_loss(&[0.5], &[1], Focal { alpha: 0.5, gamma: -1.0 }).is_err());
        assert!(focal_loss(&[0.5, 0.2], &[1], Focal::default()).is_err());
    }

    #[test]
    fn logit_gradient_matches_central_difference() {
        for focal in [Focal::default(), Focal { alpha: 0.6, gamma: 0.0 }, Focal { alpha: 0.3, gamma: 1.5 }] {
            for &z in &[-4.0, -0.7, 0.0, 0.3, 2.5, 6.0] {
                for label in [0u8, 1] {
                    let (l, g) = focal.term_and_grad_logit(z, label);
                    assert!((l - focal.term(sigmoid(z), label)).abs() < 1e-12);
                    let h = 1e-5;
                    let num = (focal.term_and_grad_logit(z + h, label).0 - focal.term_and_grad_logit(z - h, label).0)
                        / (2.0 * h);
                    let rel = (g - num).abs() / g.abs().max(num.abs()).max(1e-12);
                    assert!(rel < 1e-4, "{focal:?} z={z} label={label}: {g} vs {num}");
                }
            }
        }
    }

    #[test]
    fn saturated_logits_stay_finite() {
        let f = Focal::default();
        let (l, g) = f.term_and_grad_logit(-80.0, 1);
        assert!(l.is_finite() && g.is_finite());
        assert!((l - 0.25 * -LOG_CLAMP.ln()).abs() < 1e-12);
        assert!(f.term_and_grad_logit(80.0, 1).0 < 1e-100);
    }

    proptest! {
        #[test]
        fn non_negative_and_decreasing_in_pt(
            a in 0.01..0.99f64,
            gamma in 0.0..5.0f64,
            p in 1e-6..0.999f64,
            dp in 1e-4..0.1f64,
            label in 0u8..2,
        ) {
            let f = Focal { alpha: a, gamma };
            let q = (p + dp).min(1.0);
            let (lo, hi) = if label == 1 { (p, q) } else { (1.0 - p, 1.0 - q) };
            prop_assert!(f.term(lo, label) >= 0.0);
            prop_assert!(f.term(hi, label) < f.term(lo, label));
        }
    }
}
