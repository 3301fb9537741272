use std::io::Write;
use std::path::Path;

use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::focal::Focal;
use super::net::{loss_and_grad, ClassifierModel, Network, Normalization, Topology};
use crate::cloud::{FeaturedCloud, Provenance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub lr_max: f64,
    pub lr_min: f64,
    /// Length of the first cosine cycle, in epochs.
    pub restart_period: f64,
    /// Growth factor of each following cycle.
    pub restart_mult: f64,
    /// Non-improving validation evaluations tolerated before stopping.
    pub patience: usize,
    /// Points drawn (without replacement) from a cloud per step.
    pub points_per_sample: usize,
    pub epochs: usize,
    pub seed: u64,
    pub topology: Topology,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            lr_max: 1e-3,
            lr_min: 1e-5,
            restart_period: 10.0,
            restart_mult: 2.0,
            patience: 10,
            points_per_sample: 512,
            epochs: 60,
            seed: 0,
            topology: Topology::default(),
        }
    }
}

impl TrainConfig {
    pub fn focal(&self) -> Focal {
        Focal {
            alpha: self.focal_alpha,
            gamma: self.focal_gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.focal().validate()?;
        self.topology.validate()?;
        let ok = self.lr_max > 0.0
            && self.lr_min >= 0.0
            && self.lr_min <= self.lr_max
            && self.restart_period > 0.0
            && self.restart_mult >= 1.0
            && self.points_per_sample > 0;
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }

    /// Cosine-annealed learning rate with warm restarts at fractional
    /// epoch `t`.
    pub fn learning_rate(&self, t: f64) -> f64 {
        let mut period = self.restart_period;
        let mut t = t;
        while t >= period {
            t -= period;
            period *= self.restart_mult;
        }
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (std::f64::consts::PI * t / period).cos())
    }
}

struct Adam {
    m: Network,
    v: Network,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(t: &Topology) -> Self {
        Self {
            m: Network::zeros(t),
            v: Network::zeros(t),
            step: 0,
        }
    }

    fn update(&mut self, net: &mut Network, grad: &Network, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        let grads = grad.tensors();
        for (((w, g), m), v) in net
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..w.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint with the lowest validation loss.
    pub model: ClassifierModel,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

/// F1 of the positive (label 1) class. Defined as 1 when there are no
/// positives to find and none were predicted.
pub fn f1_score(predicted: &[u8], truth: &[u8]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 1) => fneg += 1,
            _ => {}
        }
    }
    if tp + fp + fneg == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
}

fn labels_of(c: &FeaturedCloud) -> Result<&[u8]> {
    c.labels()
        .ok_or_else(|| Error::InvalidInput("training clouds must carry labels".into()))
}

/// Mean per-cloud focal loss and pooled point F1 in inference mode.
pub fn evaluate_clouds(model: &ClassifierModel, clouds: &[FeaturedCloud], focal: Focal) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut counted = 0usize;
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for c in clouds.iter().filter(|c| !c.is_empty()) {
        let labels = labels_of(c)?;
        let z = model.logits(c)?;
        loss += z.iter().zip(labels).map(|(&zi, &l)| focal.term_and_grad_logit(zi, l).0).sum::<f64>() / z.len() as f64;
        counted += 1;
        predicted.extend(z.iter().map(|&zi| u8::from(zi > 0.0)));
        truth.extend_from_slice(labels);
    }
    if counted == 0 {
        return Err(Error::InvalidInput("no non-empty clouds to evaluate".into()));
    }
    Ok((loss / counted as f64, f1_score(&predicted, &truth)))
}

/// Adam on the focal loss, one cloud per step, with early stopping on
/// validation loss. Deterministic for a given configuration.
pub fn train(train: &[FeaturedCloud], validation: &[FeaturedCloud], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(train, validation, cfg, |_| {})
}

pub fn train_with_progress(
    train: &[FeaturedCloud],
    validation: &[FeaturedCloud],
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Err(Error::Untrained("epochs = 0".into()));
    }
    let train: Vec<&FeaturedCloud> = train.iter().filter(|c| !c.is_empty()).collect();
    if train.is_empty() || validation.iter().all(|c| c.is_empty()) {
        return Err(Error::InvalidInput("training needs non-empty train and validation clouds".into()));
    }
    for c in train.iter().copied().chain(validation) {
        labels_of(c)?;
        if c.provenance() == Provenance::Reference {
            return Err(Error::InvalidInput("geometry-only clouds cannot be classified".into()));
        }
    }
    let focal = cfg.focal();
    let mut model = ClassifierModel::new(cfg.topology.clone(), cfg.seed)?;
    let of = |p: Provenance| train.iter().copied().filter(move |c| c.provenance() == p);
    model.norm_nca = Normalization::fit(Provenance::Nca.feature_count(), of(Provenance::Nca));
    model.norm_saa = Normalization::fit(Provenance::Saa.feature_count(), of(Provenance::Saa));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_6461_7270_6364);
    let mut adam = Adam::new(&cfg.topology);
    let mut grad = Network::zeros(&cfg.topology);
    let mut history = Vec::new();
    let mut best: Option<(f64, ClassifierModel, usize)> = None;
    let mut stale = 0usize;
    let steps = train.len() as f64;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (s, &ci) in order.iter().enumerate() {
            let cloud = train[ci];
            let labels = labels_of(cloud)?;
            let n = cloud.len();
            let (sub, sub_labels) = if n > cfg.points_per_sample {
                let mut idx = sample(&mut rng, n, cfg.points_per_sample).into_vec();
                idx.sort_unstable();
                let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
                (cloud.select(&idx), l)
            } else {
                (cloud.clone(), labels.to_vec())
            };
            for t in grad.tensors_mut() {
                t.fill(0.0);
            }
            let loss = loss_and_grad(&model, &sub, &sub_labels, focal, Some(&mut rng), &mut grad)?;
            if !loss.is_finite() || !grad.all_finite() {
                return Err(Error::TrainingFailure {
                    epoch,
                    reason: format!("non-finite loss {loss}"),
                });
            }
            total += loss;
            let lr = cfg.learning_rate(epoch as f64 + s as f64 / steps);
            adam.update(&mut model.network, &grad, lr);
        }
        let (val_loss, val_f1) = evaluate_clouds(&model, validation, focal)?;
        if !val_loss.is_finite() {
            return Err(Error::TrainingFailure {
                epoch,
                reason: format!("non-finite validation loss {val_loss}"),
            });
        }
        let m = EpochMetrics {
            epoch,
            train_loss: total / steps,
            val_loss,
            val_f1,
        };
        progress(&m);
        history.push(m);
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            let mut snapshot = model.clone();
            snapshot.val_f1 = Some(val_f1);
            best = Some((val_loss, snapshot, epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                break;
            }
        }
    }
    let (_, model, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

pub fn write_metrics_csv_to<W: Write>(history: &[EpochMetrics], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for m in history {
        wr.serialize(m).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    wr.flush().map_err(|e| Error::io("metrics", e))?;
    Ok(())
}

pub fn write_metrics_csv(history: &[EpochMetrics], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics_csv_to(history, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FeaturedCloud {
        let mut c = FeaturedCloud::from_rows(
            Provenance::Nca,
            vec![0.0, 0.0, 0.0, 0.0, 20.0, 10.0, 1.0, 1.0, 0.0, 2.0, 5.0, 1.0],
        )
        .unwrap();
        c.set_labels(vec![1, 0]).unwrap();
        c
    }

    fn small() -> Topology {
        Topology {
            input_width: 8,
            block_widths: vec![8, 8],
            global_width: 8,
            head_width: 8,
            k: 4,
            dropout: 0.0,
        }
    }

    #[test]
    fn schedule_restarts() {
        let cfg = TrainConfig {
            lr_max: 1.0,
            lr_min: 0.0,
            restart_period: 2.0,
            restart_mult: 2.0,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.learning_rate(0.0), 1.0);
        assert!((cfg.learning_rate(1.0) - 0.5).abs() < 1e-12);
        assert_eq!(cfg.learning_rate(2.0), 1.0);
        assert!((cfg.learning_rate(4.0) - 0.5).abs() < 1e-12);
        assert_eq!(cfg.learning_rate(6.0), 1.0);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1_score(&[1, 0, 1, 0], &[1, 0, 0, 1]), 0.5);
        assert_eq!(f1_score(&[0, 0], &[0, 0]), 1.0);
        assert_eq!(f1_score(&[0, 0], &[1, 1]), 0.0);
    }

    #[test]
    fn separable_pair_is_learned() {
        let cfg = TrainConfig {
            lr_max: 1e-2,
            lr_min: 1e-2,
            epochs: 500,
            patience: 500,
            topology: Topology::default(),
            ..TrainConfig::default()
        };
        let out = train(&[toy()], &[toy()], &cfg).unwrap();
        let (loss, f1) = evaluate_clouds(&out.model, &[toy()], cfg.focal()).unwrap();
        assert!(loss < 1e-2, "{loss}");
        assert_eq!(f1, 1.0);
    }

    #[test]
    fn zero_epochs_and_missing_validation() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&[toy()], &[toy()], &cfg), Err(Error::Untrained(_))));
        let cfg = TrainConfig::default();
        assert!(matches!(train(&[toy()], &[], &cfg), Err(Error::InvalidInput(_))));
        let mut unlabeled = toy();
        unlabeled.clear_labels();
        assert!(train(&[unlabeled], &[toy()], &cfg).is_err());
    }

    #[test]
    fn patience_zero_stops_after_first_setback() {
        // a large constant step overshoots, so validation loss worsens early
        let cfg = TrainConfig {
            lr_max: 0.5,
            lr_min: 0.5,
            epochs: 200,
            patience: 0,
            topology: small(),
            ..TrainConfig::default()
        };
        let out = train(&[toy()], &[toy()], &cfg).unwrap();
        let h = &out.history;
        assert!(h.len() < 200);
        let last = h.last().unwrap();
        let best_before = h[..h.len() - 1].iter().map(|m| m.val_loss).fold(f64::INFINITY, f64::min);
        assert!(last.val_loss >= best_before);
        assert!(h[..h.len() - 1].windows(2).all(|w| w[1].val_loss < w[0].val_loss));
        assert_eq!(out.best_epoch, h.len() - 2);
    }

    #[test]
    fn same_seed_same_weights_and_csv() {
        let cfg = TrainConfig {
            epochs: 5,
            topology: Topology {
                dropout: 0.5,
                ..small()
            },
            ..TrainConfig::default()
        };
        let a = train(&[toy()], &[toy()], &cfg).unwrap();
        let b = train(&[toy()], &[toy()], &cfg).unwrap();
        assert_eq!(a.model, b.model);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        write_metrics_csv_to(&a.history, &mut ca).unwrap();
        write_metrics_csv_to(&b.history, &mut cb).unwrap();
        assert_eq!(ca, cb);
        assert!(String::from_utf8(ca).unwrap().starts_with("epoch,train_loss,val_loss,val_f1\n"));
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let mut bad = toy();
        bad.row_mut(0)[4] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 3,
            topology: small(),
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&[bad], &[toy()], &cfg),
            Err(Error::TrainingFailure { epoch: 0, .. })
        ));
    }
}
