//! Seeded training loop for the candidate scorer.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{mse_grad, PptNet};
use super::NetError;
use crate::grid::pool_mask_targets;
use crate::mask::SegmentationMask;
use crate::nn::{Adam, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Learning rate is multiplied by `lr_decay_factor` every
    /// `lr_decay_every` epochs.
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    /// Shuffling seed; weight initialization is seeded separately.
    pub seed: u64,
    /// Leave the backbone untouched and train only the head.
    pub freeze_encoder: bool,
    /// Emit a checkpoint every this many epochs (plus one at the end) when
    /// `checkpoint_dir` is set.
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 300,
            lr_decay_every: 100,
            lr_decay_factor: 0.1,
            seed: 0,
            freeze_encoder: false,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(NetError::BadTrainConfig(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(NetError::BadTrainConfig("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(NetError::BadTrainConfig("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Source of `(image, ground-truth mask)` pairs.
pub trait TrainingSet {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn load(&self, idx: usize) -> Result<(Tensor, SegmentationMask), NetError>;
}

impl TrainingSet for Vec<(Tensor, SegmentationMask)> {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn load(&self, idx: usize) -> Result<(Tensor, SegmentationMask), NetError> {
        Ok(self[idx].clone())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    pub final_lr: f64,
}

/// Trains the scorer with Adam on the pooled-mask MSE objective.
///
/// Fully seeded: identical inputs and config produce bit-identical loss
/// histories and weights.
pub fn train(
    net: &mut PptNet,
    data: &dyn TrainingSet,
    cfg: &TrainConfig,
) -> Result<TrainReport, NetError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let m = net.config().m;
    let include_backbone = !cfg.freeze_encoder;
    let mut opt = Adam::new(cfg.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    net.zero_grads();

    let mut lr = cfg.learning_rate;
    for epoch in 0..cfg.epochs {
        if epoch > 0 && cfg.lr_decay_every > 0 && epoch % cfg.lr_decay_every == 0 {
            lr *= cfg.lr_decay_factor;
        }
        opt.set_lr(lr);
        indices.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        for batch in indices.chunks(cfg.batch_size) {
            let mut batch_loss = 0.0;
            for &idx in batch {
                let (image, mask) = data.load(idx)?;
                let cache = net.forward_cached(&image)?;
                let targets = pool_mask_targets(&mask, m).map_err(NetError::Target)?;
                let n = cache.scores.len() as f64;
                let sample_loss: f64 = cache
                    .scores
                    .iter()
                    .zip(&targets.values)
                    .map(|(p, t)| (p - t) * (p - t))
                    .sum::<f64>()
                    / n;
                batch_loss += sample_loss;
                let dscores = mse_grad(&cache.scores, &targets.values, 1.0 / batch.len() as f64);
                net.backward(&cache, &dscores);
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(NetError::NonFiniteLoss {
                    epoch,
                    value: batch_loss,
                });
            }
            epoch_loss += batch_loss * batch.len() as f64;
            opt.step(&mut net.params_mut(include_backbone));
            // Frozen backbone parameters still accumulate gradients; drop them.
            if cfg.freeze_encoder {
                net.zero_grads();
            }
        }
        history.push(epoch_loss / data.len() as f64);

        if let (Some(every), Some(dir)) = (cfg.checkpoint_every, cfg.checkpoint_dir.as_ref()) {
            if every > 0 && (epoch + 1) % every == 0 {
                std::fs::create_dir_all(dir).map_err(NetError::CheckpointIo)?;
                super::checkpoint::save(net, &dir.join(format!("ppt-epoch{:04}.tar", epoch + 1)))?;
            }
        }
    }

    Ok(TrainReport {
        loss_history: history,
        final_lr: lr,
    })
}
