//! The toy detector: a linear classification head with per-class sigmoid
//! scores and a linear box-refinement head that offsets anchor corners.
//!
//! Small enough that every gradient in this crate is analytic and checkable
//! by finite differences, yet it produces real TPs and FPs with continuous
//! confidences — all the calibration machinery needs.

use crate::geometry::{BoundingBox, Detection};
use crate::toydet::scene::{Proposal, SyntheticScene};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Standard deviation for random weight initialization.
const INIT_STD: f64 = 0.1;

/// Initial class-head bias. Starting below zero keeps initial scores low,
/// mimicking a detector that has to earn its confidence.
const INIT_CLASS_BIAS: f64 = -1.0;

/// Linear detector parameters. Weight matrices are stored row-major:
/// `class_weights[c * feature_dim + f]`, `box_weights[corner * feature_dim + f]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_weights: Vec<f64>,
    pub class_biases: Vec<f64>,
    pub box_weights: Vec<f64>,
    pub box_biases: Vec<f64>,
}

impl ToyModel {
    /// All-zero parameters: every class score is sigmoid(0) = 0.5 and boxes
    /// pass through unchanged.
    pub fn zeros(num_classes: usize, feature_dim: usize) -> Self {
        assert!(num_classes >= 1, "num_classes must be >= 1");
        assert!(feature_dim >= 1, "feature_dim must be >= 1");
        Self {
            num_classes,
            feature_dim,
            class_weights: vec![0.0; num_classes * feature_dim],
            class_biases: vec![0.0; num_classes],
            box_weights: vec![0.0; 4 * feature_dim],
            box_biases: vec![0.0; 4],
        }
    }

    /// Random initialization: Gaussian weights (std 0.1), class biases at
    /// -1 so untrained scores sit low, box head zeroed (anchors pass
    /// through). Deterministic: the generator is consumed in field order.
    pub fn random(num_classes: usize, feature_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut model = Self::zeros(num_classes, feature_dim);
        for w in &mut model.class_weights {
            *w = INIT_STD * rng.sample::<f64, _>(StandardNormal);
        }
        for b in &mut model.class_biases {
            *b = INIT_CLASS_BIAS;
        }
        model
    }

    /// Number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.class_weights.len() + self.class_biases.len() + self.box_weights.len() + self.box_biases.len()
    }

    /// Flat parameter view in the fixed order class_weights, class_biases,
    /// box_weights, box_biases. Used by the optimizer and gradient checks.
    pub fn param(&self, index: usize) -> f64 {
        *self.param_slot(index)
    }

    pub fn param_mut(&mut self, index: usize) -> &mut f64 {
        let (cw, cb, bw) = (self.class_weights.len(), self.class_biases.len(), self.box_weights.len());
        if index < cw {
            &mut self.class_weights[index]
        } else if index < cw + cb {
            &mut self.class_biases[index - cw]
        } else if index < cw + cb + bw {
            &mut self.box_weights[index - cw - cb]
        } else {
            &mut self.box_biases[index - cw - cb - bw]
        }
    }

    fn param_slot(&self, index: usize) -> &f64 {
        let (cw, cb, bw) = (self.class_weights.len(), self.class_biases.len(), self.box_weights.len());
        if index < cw {
            &self.class_weights[index]
        } else if index < cw + cb {
            &self.class_biases[index - cw]
        } else if index < cw + cb + bw {
            &self.box_weights[index - cw - cb]
        } else {
            &self.box_biases[index - cw - cb - bw]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.class_weights.iter().chain(&self.class_biases).chain(&self.box_weights).chain(&self.box_biases).all(|x| x.is_finite())
    }

    /// Per-class logits w_c . f + b_c for one proposal.
    pub fn class_logits(&self, features: &[f64]) -> Vec<f64> {
        debug_assert_eq!(features.len(), self.feature_dim);
        (0..self.num_classes)
            .map(|c| {
                let row = &self.class_weights[c * self.feature_dim..(c + 1) * self.feature_dim];
                dot(row, features) + self.class_biases[c]
            })
            .collect()
    }

    /// Corner offsets the box head adds to an anchor.
    pub fn box_offsets(&self, features: &[f64]) -> [f64; 4] {
        debug_assert_eq!(features.len(), self.feature_dim);
        let mut out = [0.0; 4];
        for (corner, slot) in out.iter_mut().enumerate() {
            let row = &self.box_weights[corner * self.feature_dim..(corner + 1) * self.feature_dim];
            *slot = dot(row, features) + self.box_biases[corner];
        }
        out
    }

    /// Applies one gradient-descent step: p -= lr * g.
    pub fn step(&mut self, gradients: &Gradients, learning_rate: f64) {
        debug_assert_eq!(gradients.class_weights.len(), self.class_weights.len());
        for (p, g) in self.class_weights.iter_mut().zip(&gradients.class_weights) {
            *p -= learning_rate * g;
        }
        for (p, g) in self.class_biases.iter_mut().zip(&gradients.class_biases) {
            *p -= learning_rate * g;
        }
        for (p, g) in self.box_weights.iter_mut().zip(&gradients.box_weights) {
            *p -= learning_rate * g;
        }
        for (p, g) in self.box_biases.iter_mut().zip(&gradients.box_biases) {
            *p -= learning_rate * g;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameter gradients, same shapes and ordering as [`ToyModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub class_weights: Vec<f64>,
    pub class_biases: Vec<f64>,
    pub box_weights: Vec<f64>,
    pub box_biases: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &ToyModel) -> Self {
        Self {
            class_weights: vec![0.0; model.class_weights.len()],
            class_biases: vec![0.0; model.class_biases.len()],
            box_weights: vec![0.0; model.box_weights.len()],
            box_biases: vec![0.0; model.box_biases.len()],
        }
    }

    pub fn param(&self, index: usize) -> f64 {
        let (cw, cb, bw) = (self.class_weights.len(), self.class_biases.len(), self.box_weights.len());
        if index < cw {
            self.class_weights[index]
        } else if index < cw + cb {
            self.class_biases[index - cw]
        } else if index < cw + cb + bw {
            self.box_weights[index - cw - cb]
        } else {
            self.box_biases[index - cw - cb - bw]
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self
            .class_weights
            .iter_mut()
            .chain(&mut self.class_biases)
            .chain(&mut self.box_weights)
            .chain(&mut self.box_biases)
        {
            *g *= factor;
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.class_weights.iter_mut().zip(&other.class_weights) {
            *a += scale * b;
        }
        for (a, b) in self.class_biases.iter_mut().zip(&other.class_biases) {
            *a += scale * b;
        }
        for (a, b) in self.box_weights.iter_mut().zip(&other.box_weights) {
            *a += scale * b;
        }
        for (a, b) in self.box_biases.iter_mut().zip(&other.box_biases) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.class_weights.iter().chain(&self.class_biases).chain(&self.box_weights).chain(&self.box_biases).all(|x| x.is_finite())
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    crate::calibration::sigmoid(z)
}

/// The argmax class for one proposal: highest logit, ties to the lowest
/// class index. Sigmoid is monotone, so argmax logit == argmax score.
pub(crate) fn argmax_class(logits: &[f64]) -> usize {
    let mut best = 0;
    for (c, &z) in logits.iter().enumerate().skip(1) {
        if z > logits[best] {
            best = c;
        }
    }
    best
}

fn refined_box(anchor: &BoundingBox, offsets: [f64; 4]) -> BoundingBox {
    let x_min = anchor.x_min + offsets[0];
    let y_min = anchor.y_min + offsets[1];
    // A wild box head can cross the corners; collapse to a zero-area box at
    // the midpoint rather than produce an inverted rectangle.
    let x_max = (anchor.x_max + offsets[2]).max(x_min);
    let y_max = (anchor.y_max + offsets[3]).max(y_min);
    BoundingBox::new(x_min, y_min, x_max, y_max)
}

/// Runs the detector on one scene: one Detection per proposal, carrying the
/// argmax class and its sigmoid score, and the anchor refined by the box
/// head.
pub fn forward(model: &ToyModel, scene: &SyntheticScene) -> Vec<Detection> {
    scene
        .proposals
        .iter()
        .map(|proposal| forward_proposal(model, scene, proposal))
        .collect()
}

fn forward_proposal(model: &ToyModel, scene: &SyntheticScene, proposal: &Proposal) -> Detection {
    assert_eq!(
        proposal.features.len(),
        model.feature_dim,
        "feature dimension mismatch"
    );
    let logits = model.class_logits(&proposal.features);
    let class = argmax_class(&logits);
    let score = sigmoid(logits[class]);
    let bbox = refined_box(&proposal.anchor, model.box_offsets(&proposal.features));
    Detection::new(scene.image_id, bbox, class as u32, score)
}

/// Forward over a dataset, one detection list per scene, in scene order.
pub fn forward_dataset(model: &ToyModel, scenes: &[SyntheticScene]) -> Vec<Vec<Detection>> {
    scenes.iter().map(|scene| forward(model, scene)).collect()
}

/// Parallel forward. Scene order is preserved by the indexed collect, so
/// output is identical to [`forward_dataset`].
#[cfg(feature = "parallel")]
pub fn par_forward_dataset(model: &ToyModel, scenes: &[SyntheticScene]) -> Vec<Vec<Detection>> {
    use rayon::prelude::*;
    scenes.par_iter().map(|scene| forward(model, scene)).collect()
}

pub(crate) fn forward_dataset_dispatch(model: &ToyModel, scenes: &[SyntheticScene]) -> Vec<Vec<Detection>> {
    #[cfg(feature = "parallel")]
    {
        par_forward_dataset(model, scenes)
    }
    #[cfg(not(feature = "parallel"))]
    {
        forward_dataset(model, scenes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ImageId;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn scene_with(proposals: Vec<Proposal>) -> SyntheticScene {
        SyntheticScene {
            image_id: ImageId(7),
            ground_truth: vec![],
            proposals,
        }
    }

    fn unit_anchor() -> BoundingBox {
        BoundingBox::new(0.2, 0.2, 0.4, 0.4)
    }

    #[test]
    fn zero_model_scores_half_and_passes_anchors_through() {
        let model = ToyModel::zeros(3, 2);
        let scene = scene_with(vec![Proposal { features: vec![1.0, -2.0], anchor: unit_anchor() }]);
        let dets = forward(&model, &scene);
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].score, 0.5);
        assert_eq!(dets[0].class_id, 0); // tie on equal logits -> lowest class
        assert_eq!(dets[0].bbox, unit_anchor());
        assert_eq!(dets[0].image_id, ImageId(7));
    }

    #[test]
    fn single_class_single_proposal_yields_one_detection() {
        let model = ToyModel::zeros(1, 4);
        let scene = scene_with(vec![Proposal { features: vec![0.0; 4], anchor: unit_anchor() }]);
        assert_eq!(forward(&model, &scene).len(), 1);
    }

    #[test]
    fn hand_set_weights_match_scalar_arithmetic() {
        // Two features, two classes:
        //   z_0 = 1.0*f0 - 1.0*f1 + 0.5, z_1 = 0.5*f0 + 0.5*f1 - 0.25
        // f = (0.6, 0.2): z_0 = 0.9, z_1 = 0.15 -> class 0, score sigmoid(0.9).
        let mut model = ToyModel::zeros(2, 2);
        model.class_weights = vec![1.0, -1.0, 0.5, 0.5];
        model.class_biases = vec![0.5, -0.25];
        let scene = scene_with(vec![Proposal { features: vec![0.6, 0.2], anchor: unit_anchor() }]);
        let det = &forward(&model, &scene)[0];
        assert_eq!(det.class_id, 0);
        assert_relative_eq!(det.score, 1.0 / (1.0 + (-0.9f64).exp()), max_relative = 1e-15);
    }

    #[test]
    fn box_head_offsets_anchor_corners() {
        let mut model = ToyModel::zeros(1, 1);
        model.box_biases = vec![0.01, -0.02, 0.03, 0.04];
        let scene = scene_with(vec![Proposal { features: vec![0.0], anchor: unit_anchor() }]);
        let det = &forward(&model, &scene)[0];
        assert_relative_eq!(det.bbox.x_min, 0.21, max_relative = 1e-12);
        assert_relative_eq!(det.bbox.y_min, 0.18, max_relative = 1e-12);
        assert_relative_eq!(det.bbox.x_max, 0.43, max_relative = 1e-12);
        assert_relative_eq!(det.bbox.y_max, 0.44, max_relative = 1e-12);
    }

    #[test]
    fn crossed_corners_collapse_instead_of_inverting() {
        let mut model = ToyModel::zeros(1, 1);
        model.box_biases = vec![0.5, 0.0, -0.5, 0.0]; // pushes x_min past x_max
        let scene = scene_with(vec![Proposal { features: vec![0.0], anchor: unit_anchor() }]);
        let det = &forward(&model, &scene)[0];
        assert!(det.bbox.x_max >= det.bbox.x_min);
        assert_eq!(det.bbox.area(), 0.0);
    }

    #[test]
    fn param_flat_view_covers_every_slot_in_order() {
        let mut model = ToyModel::zeros(2, 3);
        let n = model.param_count();
        assert_eq!(n, 2 * 3 + 2 + 4 * 3 + 4);
        for i in 0..n {
            *model.param_mut(i) = i as f64;
        }
        assert_eq!(model.class_weights, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(model.class_biases, vec![6.0, 7.0]);
        assert_eq!(model.box_weights[0], 8.0);
        assert_eq!(model.box_biases, vec![20.0, 21.0, 22.0, 23.0]);
        for i in 0..n {
            assert_eq!(model.param(i), i as f64);
        }
    }

    #[test]
    fn random_init_is_deterministic_per_stream_position() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let m1 = ToyModel::random(4, 16, &mut a);
        let m2 = ToyModel::random(4, 16, &mut b);
        assert_eq!(m1, m2);
        assert!(m1.is_finite());
        assert!(m1.class_biases.iter().all(|&b| b == INIT_CLASS_BIAS));
        assert!(m1.box_weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn step_moves_against_gradient() {
        let mut model = ToyModel::zeros(1, 1);
        let mut grad = Gradients::zeros_like(&model);
        grad.class_weights[0] = 2.0;
        grad.box_biases[3] = -1.0;
        model.step(&grad, 0.1);
        assert_relative_eq!(model.class_weights[0], -0.2, max_relative = 1e-15);
        assert_relative_eq!(model.box_biases[3], 0.1, max_relative = 1e-15);
    }

    #[test]
    fn parallel_forward_matches_sequential() {
        let cfg = crate::toydet::scene::GenConfig { num_scenes: 12, ..Default::default() };
        let scenes = crate::toydet::scene::generate_dataset(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = ToyModel::random(cfg.num_classes, cfg.feature_dim, &mut rng);
        let seq = forward_dataset(&model, &scenes);
        #[cfg(feature = "parallel")]
        assert_eq!(seq, par_forward_dataset(&model, &scenes));
        assert_eq!(seq, forward_dataset_dispatch(&model, &scenes));
    }
}
