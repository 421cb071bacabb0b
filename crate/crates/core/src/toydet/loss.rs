//! Training objectives for the toy detector.
//!
//! The detection loss is a focal classification loss over per-class sigmoid
//! outputs plus an L1 loss on box corners for positive proposals, reduced as
//! a mean over the scenes in the batch. The calibration term is the
//! batch-level partition loss from [`crate::bpc`], fed by the detector's own
//! scores with accuracy labels from the matcher, and back-propagated into
//! the classification head through each detection's sigmoid.
//!
//! All gradients are analytic. Discrete structure — proposal-to-target
//! assignment, argmax classes, match labels, partition membership — is
//! frozen at the forward values, so the gradients are exact wherever the
//! loss is differentiable.

use crate::bpc::{bpc_loss, BpcConfig};
use crate::geometry::BoundingBox;
use crate::matcher::{match_image, MatchConfig};
use crate::toydet::model::{forward, Gradients, ToyModel};
use crate::toydet::scene::SyntheticScene;
use serde::{Deserialize, Serialize};

/// Focal-loss shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    /// Weight on positive targets, in (0, 1); negatives get `1 - alpha`.
    pub alpha: f64,
    /// Focusing exponent, >= 0. Zero recovers weighted cross-entropy.
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self { alpha: 0.25, gamma: 2.0 }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    crate::calibration::sigmoid(z)
}

/// Binary focal loss on one logit, with its z-derivative.
///
/// Written in terms of softplus so the log stays finite at saturation,
/// where a plain `ln(1 - sigmoid(z))` underflows to -inf.
fn focal_term(z: f64, target: bool, params: FocalParams) -> (f64, f64) {
    let p = sigmoid(z);
    let q = sigmoid(-z);
    let ln_p = -softplus(-z);
    let ln_q = -softplus(z);
    if target {
        let weight = params.alpha * q.powf(params.gamma);
        (-weight * ln_p, weight * (params.gamma * p * ln_p - q))
    } else {
        let weight = (1.0 - params.alpha) * p.powf(params.gamma);
        (-weight * ln_q, weight * (p - params.gamma * q * ln_q))
    }
}

fn corners(b: &BoundingBox) -> [f64; 4] {
    [b.x_min, b.y_min, b.x_max, b.y_max]
}

/// Per-proposal training target: the index of the ground-truth object whose
/// box the anchor overlaps best, provided that IoU reaches 0.5. Assignment
/// is class-agnostic and ties keep the lowest ground-truth index.
fn assign_proposals(scene: &SyntheticScene) -> Vec<Option<usize>> {
    scene
        .proposals
        .iter()
        .map(|proposal| {
            let mut best: Option<(usize, f64)> = None;
            for (gi, gt) in scene.ground_truth.iter().enumerate() {
                let overlap = crate::geometry::iou(&proposal.anchor, &gt.bbox);
                if best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((gi, overlap));
                }
            }
            best.and_then(|(gi, overlap)| (overlap >= 0.5).then_some(gi))
        })
        .collect()
}

/// Focal classification loss plus L1 corner loss, mean-reduced over scenes,
/// with exact analytic gradients for every model parameter.
///
/// Classification targets: for a positive proposal the assigned object's
/// class is 1 and every other class is 0; unassigned proposals are all-zero.
/// The box loss compares the raw refined corners (anchor + offsets, before
/// any output sanitization) of positive proposals against the assigned box.
pub fn detection_loss(
    model: &ToyModel,
    scenes: &[SyntheticScene],
    focal: FocalParams,
) -> (f64, Gradients) {
    assert!(!scenes.is_empty(), "detection loss needs a non-empty batch");
    let mut value = 0.0;
    let mut grads = Gradients::zeros_like(model);
    let fdim = model.feature_dim;

    for scene in scenes {
        let assignments = assign_proposals(scene);
        for (proposal, assignment) in scene.proposals.iter().zip(&assignments) {
            let features = &proposal.features;
            let logits = model.class_logits(features);
            let target_class = assignment.map(|gi| scene.ground_truth[gi].class_id as usize);
            for (c, &z) in logits.iter().enumerate() {
                let (l, dz) = focal_term(z, target_class == Some(c), focal);
                value += l;
                for (slot, &f) in grads.class_weights[c * fdim..(c + 1) * fdim]
                    .iter_mut()
                    .zip(features)
                {
                    *slot += dz * f;
                }
                grads.class_biases[c] += dz;
            }
            if let Some(gi) = assignment {
                let offsets = model.box_offsets(features);
                let anchor = corners(&proposal.anchor);
                let target = corners(&scene.ground_truth[*gi].bbox);
                for corner in 0..4 {
                    let diff = anchor[corner] + offsets[corner] - target[corner];
                    value += diff.abs();
                    let sign = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    for (slot, &f) in grads.box_weights[corner * fdim..(corner + 1) * fdim]
                        .iter_mut()
                        .zip(features)
                    {
                        *slot += sign * f;
                    }
                    grads.box_biases[corner] += sign;
                }
            }
        }
    }

    let inv = 1.0 / scenes.len() as f64;
    grads.scale(inv);
    (value * inv, grads)
}

/// The calibration term over one batch: forwards every scene, labels each
/// detection with the matcher at IoU 0.5, runs the partition loss over all
/// of the batch's (score, k) pairs, and chains the score gradients into the
/// classification head through d(sigmoid)/dz = s(1 - s) on each detection's
/// argmax class. Match labels are constants of the backward pass, so the
/// box head receives no gradient from this term.
pub fn bpc_term(
    model: &ToyModel,
    scenes: &[SyntheticScene],
    bpc: &BpcConfig,
) -> (f64, Gradients) {
    let match_cfg = MatchConfig::default();
    let mut scores = Vec::new();
    let mut ks = Vec::new();
    // (scene index, proposal index, class) per detection, in score order.
    let mut origins = Vec::new();
    for (si, scene) in scenes.iter().enumerate() {
        let detections = forward(model, scene);
        let outcomes = match_image(&detections, &scene.ground_truth, &match_cfg);
        for (pi, (det, outcome)) in detections.iter().zip(&outcomes).enumerate() {
            debug_assert_eq!(outcome.detection_index, pi);
            scores.push(det.score);
            ks.push(outcome.k);
            origins.push((si, pi, det.class_id as usize));
        }
    }

    let loss = bpc_loss(&scores, &ks, bpc).expect("scores and labels are built in lockstep");
    let mut grads = Gradients::zeros_like(model);
    let fdim = model.feature_dim;
    for ((&g, &s), &(si, pi, class)) in loss.gradients.iter().zip(&scores).zip(&origins) {
        let dz = g * s * (1.0 - s);
        let features = &scenes[si].proposals[pi].features;
        for (slot, &f) in grads.class_weights[class * fdim..(class + 1) * fdim]
            .iter_mut()
            .zip(features)
        {
            *slot += dz * f;
        }
        grads.class_biases[class] += dz;
    }
    (loss.value, grads)
}

/// The combined objective and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub detection: f64,
    pub bpc: f64,
    pub total: f64,
    pub gradients: Gradients,
}

/// Detection loss plus the batch-level calibration term,
/// `total = detection + bpc`, with summed gradients.
pub fn total_loss(
    model: &ToyModel,
    scenes: &[SyntheticScene],
    focal: FocalParams,
    bpc: &BpcConfig,
) -> TotalLoss {
    let (detection, mut gradients) = detection_loss(model, scenes, focal);
    let (bpc_value, bpc_grads) = bpc_term(model, scenes, bpc);
    gradients.add_scaled(&bpc_grads, 1.0);
    TotalLoss {
        detection,
        bpc: bpc_value,
        total: detection + bpc_value,
        gradients,
    }
}
