//! Deterministic minibatch gradient descent on the toy detector.
//!
//! One ChaCha8 stream, seeded from `TrainConfig::seed`, drives everything in
//! a fixed order: parameter initialization first, then one shuffle per
//! epoch. Batches are consumed in shuffle order and gradients accumulate in
//! input order, so two runs with the same config and data produce
//! bit-identical parameters.

use crate::bpc::BpcConfig;
use crate::error::{Error, Result};
use crate::toydet::loss::{bpc_term, detection_loss, total_loss, FocalParams};
use crate::toydet::model::ToyModel;
use crate::toydet::scene::SyntheticScene;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Training hyperparameters. Defaults are the benchmark configuration:
/// batch size 2, seed 42, confidence threshold 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub seed: u64,
    pub bpc: BpcConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub focal: FocalParams,
    /// Optimize detection + calibration when true, detection alone when
    /// false. The calibration term is still measured for the curve either
    /// way.
    pub with_bpc: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 2,
            seed: 42,
            bpc: BpcConfig::default(),
            learning_rate: 0.005,
            epochs: 500,
            focal: FocalParams::default(),
            with_bpc: false,
        }
    }
}

impl TrainConfig {
    /// Range checks for every field. Learning rate 0 is allowed — it makes
    /// training a deterministic no-op, which the tests rely on.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.focal.alpha.is_nan() || self.focal.alpha <= 0.0 || self.focal.alpha >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "focal alpha must be in (0, 1), got {}",
                self.focal.alpha
            )));
        }
        if self.focal.gamma.is_nan() || self.focal.gamma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "focal gamma must be >= 0, got {}",
                self.focal.gamma
            )));
        }
        // The nested config has public fields, so revalidate its ranges.
        BpcConfig::new(self.bpc.score_threshold, self.bpc.epsilon)?;
        Ok(())
    }
}

/// Mean per-batch losses for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub detection: f64,
    pub bpc: f64,
    /// Mean of the objective actually optimized: detection + bpc when
    /// training with the calibration term, detection alone otherwise.
    pub total: f64,
}

/// A trained model plus its per-epoch loss curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub model: ToyModel,
    pub curve: Vec<EpochStats>,
}

fn problem_shape(data: &[SyntheticScene]) -> Result<(usize, usize)> {
    let feature_dim = data
        .iter()
        .flat_map(|s| &s.proposals)
        .map(|p| p.features.len())
        .next()
        .ok_or_else(|| Error::InvalidConfig("training data has no proposals".into()))?;
    if data
        .iter()
        .flat_map(|s| &s.proposals)
        .any(|p| p.features.len() != feature_dim)
    {
        return Err(Error::InvalidConfig(
            "proposals disagree on feature dimension".into(),
        ));
    }
    let num_classes = data
        .iter()
        .flat_map(|s| &s.ground_truth)
        .map(|g| g.class_id as usize + 1)
        .max()
        .ok_or_else(|| Error::InvalidConfig("training data has no ground truth".into()))?;
    Ok((num_classes, feature_dim))
}

/// Trains a fresh model on the data. Deterministic given the config; aborts
/// with [`Error::Diverged`] if any batch produces a non-finite loss.
pub fn train(config: &TrainConfig, data: &[SyntheticScene]) -> Result<TrainResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("training data is empty".into()));
    }
    let (num_classes, feature_dim) = problem_shape(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ToyModel::random(num_classes, feature_dim, &mut rng);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut indices: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        let mut num_batches = 0usize;
        for (batch_idx, chunk) in indices.chunks(config.batch_size).enumerate() {
            let batch: Vec<SyntheticScene> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (det, bpc, total, grads) = if config.with_bpc {
                let tl = total_loss(&model, &batch, config.focal, &config.bpc);
                (tl.detection, tl.bpc, tl.total, tl.gradients)
            } else {
                let (det, grads) = detection_loss(&model, &batch, config.focal);
                let (bpc, _) = bpc_term(&model, &batch, &config.bpc);
                (det, bpc, det, grads)
            };
            if !total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    loss: total,
                });
            }
            model.step(&grads, config.learning_rate);
            if !model.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    loss: total,
                });
            }
            sums.0 += det;
            sums.1 += bpc;
            sums.2 += total;
            num_batches += 1;
        }
        let inv = 1.0 / num_batches as f64;
        curve.push(EpochStats {
            epoch,
            detection: sums.0 * inv,
            bpc: sums.1 * inv,
            total: sums.2 * inv,
        });
    }

    Ok(TrainResult { model, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toydet::scene::{generate_dataset, GenConfig};

    fn small_data() -> Vec<SyntheticScene> {
        generate_dataset(&GenConfig { num_scenes: 8, ..Default::default() })
    }

    fn small_config() -> TrainConfig {
        TrainConfig { epochs: 3, ..Default::default() }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = small_data();
        let cfg = TrainConfig { with_bpc: true, ..small_config() };
        let a = train(&cfg, &data).unwrap();
        let b = train(&cfg, &data).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_at_init() {
        let data = small_data();
        let cfg = TrainConfig { learning_rate: 0.0, ..small_config() };
        let trained = train(&cfg, &data).unwrap().model;
        let init = train(&TrainConfig { epochs: 0, ..cfg }, &data).unwrap().model;
        assert_eq!(trained, init);
    }

    #[test]
    fn zero_epochs_returns_initialized_model_and_empty_curve() {
        let data = small_data();
        let result = train(&TrainConfig { epochs: 0, ..small_config() }, &data).unwrap();
        assert!(result.curve.is_empty());
        assert!(result.model.is_finite());
        assert_eq!(result.model.num_classes, 4);
        assert_eq!(result.model.feature_dim, 16);
    }

    #[test]
    fn curve_has_one_row_per_epoch_and_totals_compose() {
        let data = small_data();
        let cfg = TrainConfig { with_bpc: true, epochs: 4, ..Default::default() };
        let result = train(&cfg, &data).unwrap();
        assert_eq!(result.curve.len(), 4);
        for (i, stats) in result.curve.iter().enumerate() {
            assert_eq!(stats.epoch, i);
            assert!((stats.total - stats.detection - stats.bpc).abs() < 1e-12);
        }
        let baseline = train(&TrainConfig { with_bpc: false, ..cfg }, &data).unwrap();
        for stats in &baseline.curve {
            assert_eq!(stats.total, stats.detection);
            assert!(stats.bpc >= 0.0);
        }
    }

    #[test]
    fn divergence_is_reported_with_location() {
        // Gradients are bounded, so parameters grow by about lr per step; a
        // near-overflow rate compounds the logits past f64 range within a
        // few batches.
        let data = small_data();
        let cfg = TrainConfig { learning_rate: 1e308, epochs: 5, ..Default::default() };
        assert!(matches!(train(&cfg, &data), Err(Error::Diverged { .. })));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = small_data();
        assert!(train(&TrainConfig { batch_size: 0, ..Default::default() }, &data).is_err());
        assert!(train(&TrainConfig { learning_rate: -1.0, ..Default::default() }, &data).is_err());
        assert!(train(&TrainConfig::default(), &[]).is_err());
        let bad_focal = TrainConfig {
            focal: FocalParams { alpha: 1.5, gamma: 2.0 },
            ..Default::default()
        };
        assert!(train(&bad_focal, &data).is_err());
    }

    #[test]
    fn loss_decreases_over_training() {
        let data = small_data();
        let cfg = TrainConfig { epochs: 30, ..Default::default() };
        let result = train(&cfg, &data).unwrap();
        let first = result.curve.first().unwrap().total;
        let last = result.curve.last().unwrap().total;
        assert!(last < first, "loss did not decrease: {first} -> {last}");
    }
}
