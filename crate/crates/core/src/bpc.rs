//! Four-way precision/confidence partition counts and the differentiable
//! calibration loss over them.
//!
//! Detections split into four partitions by their accuracy indicator `k`
//! and whether the score clears a confidence threshold `th`:
//!
//! | partition | k | score   | meaning                  |
//! |-----------|---|---------|--------------------------|
//! | AC        | 1 | >= th   | accurate, confident      |
//! | AN        | 1 | <  th   | accurate, not confident  |
//! | IC        | 0 | >= th   | inaccurate, confident    |
//! | IN        | 0 | <  th   | inaccurate, not confident|
//!
//! A calibrated detector concentrates mass in AC and IN; the ratio
//! `(t_ac + t_in) / total` is the quantity to maximize. The differentiable
//! loss replaces the hard counts with soft, tanh-weighted ones and minimizes
//!
//! ```text
//! L = ln(1 + (t_an + t_ic) / (t_ac + t_in + epsilon))
//! ```
//!
//! which is the negative log of the soft ratio, rearranged so the epsilon
//! guard only touches the denominator. Gradients are analytic in the scores,
//! with partition membership frozen at the forward values (the indicator
//! predicates act as constants, as they would under automatic
//! differentiation of an indicator-gated loss). Scores exactly at `th` take
//! the `>= th` branch.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Loss configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpcConfig {
    /// Confidence threshold separating "confident" from "not confident",
    /// strictly inside (0, 1).
    pub score_threshold: f64,
    /// Positive guard added to the loss denominator so batches with
    /// `t_ac + t_in = 0` stay finite.
    pub epsilon: f64,
}

impl Default for BpcConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.5,
            epsilon: 1e-8,
        }
    }
}

impl BpcConfig {
    pub fn new(score_threshold: f64, epsilon: f64) -> Result<Self> {
        if score_threshold.is_nan() || score_threshold <= 0.0 || score_threshold >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "score threshold must be in (0, 1), got {score_threshold}"
            )));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            score_threshold,
            epsilon,
        })
    }

    /// Threshold with its own default, for callers that keep the default
    /// epsilon.
    pub fn with_threshold(score_threshold: f64) -> Result<Self> {
        Self::new(score_threshold, Self::default().epsilon)
    }
}

/// How a [`PartitionCounts`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountMode {
    #[serde(rename = "hard")]
    Hard,
    #[serde(rename = "soft")]
    Soft,
}

/// The four partition totals. Hard mode stores integer-valued counts; soft
/// mode stores the tanh-weighted sums the loss differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub t_ac: f64,
    pub t_an: f64,
    pub t_ic: f64,
    pub t_in: f64,
    pub mode: CountMode,
}

/// PC ratio with a flag for the all-zero case the ratio leaves undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcRatio {
    pub value: f64,
    pub degenerate: bool,
}

impl PartitionCounts {
    pub fn total(&self) -> f64 {
        self.t_ac + self.t_an + self.t_ic + self.t_in
    }

    /// Aligned mass: accurate-confident plus inaccurate-not-confident.
    pub fn aligned(&self) -> f64 {
        self.t_ac + self.t_in
    }

    /// Misaligned mass: accurate-not-confident plus inaccurate-confident.
    pub fn misaligned(&self) -> f64 {
        self.t_an + self.t_ic
    }

    /// `(t_ac + t_in) / total`, the fraction of partition mass where
    /// confidence agrees with accuracy. All-zero counts yield 0 with the
    /// degenerate flag set.
    pub fn pc_ratio(&self) -> PcRatio {
        let total = self.total();
        if total == 0.0 {
            PcRatio {
                value: 0.0,
                degenerate: true,
            }
        } else {
            PcRatio {
                value: self.aligned() / total,
                degenerate: false,
            }
        }
    }
}

/// Loss value with analytic gradients, one per input score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    pub gradients: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Partition {
    Ac,
    An,
    Ic,
    In,
}

fn partition(score: f64, k: bool, th: f64) -> Partition {
    match (k, score >= th) {
        (true, true) => Partition::Ac,
        (true, false) => Partition::An,
        (false, true) => Partition::Ic,
        (false, false) => Partition::In,
    }
}

fn check_lengths(scores: &[f64], k: &[bool]) -> Result<()> {
    if scores.len() != k.len() {
        return Err(Error::LengthMismatch {
            scores: scores.len(),
            labels: k.len(),
        });
    }
    debug_assert!(
        scores.iter().all(|s| (0.0..=1.0).contains(s)),
        "scores must lie in [0, 1]"
    );
    Ok(())
}

/// Hard partition counts: each detection contributes 1 to its partition.
pub fn hard_counts(scores: &[f64], k: &[bool], cfg: &BpcConfig) -> Result<PartitionCounts> {
    check_lengths(scores, k)?;
    let mut counts = [0u64; 4];
    for (&s, &ki) in scores.iter().zip(k) {
        counts[partition(s, ki, cfg.score_threshold) as usize] += 1;
    }
    Ok(PartitionCounts {
        t_ac: counts[Partition::Ac as usize] as f64,
        t_an: counts[Partition::An as usize] as f64,
        t_ic: counts[Partition::Ic as usize] as f64,
        t_in: counts[Partition::In as usize] as f64,
        mode: CountMode::Hard,
    })
}

/// Per-detection soft contribution to its partition and the derivative of
/// that contribution in the score, with membership fixed.
///
/// The weights pair the score (or its complement) with a tanh factor that
/// tapers mass near 0 so low scores cannot dominate the confident
/// partitions:
///
/// * AC: `s * tanh(s)`          — grows with confidence of a correct det
/// * AN: `s * (1 - tanh(s))`    — mass an accurate det leaves below `th`
/// * IC: `(1 - s) * tanh(s)`    — confident mass of an inaccurate det
/// * IN: `(1 - s) * (1 - tanh(s))`
fn soft_term(score: f64, part: Partition) -> (f64, f64) {
    let t = score.tanh();
    let sech2 = 1.0 - t * t;
    match part {
        Partition::Ac => (score * t, t + score * sech2),
        Partition::An => (score * (1.0 - t), (1.0 - t) - score * sech2),
        Partition::Ic => ((1.0 - score) * t, -t + (1.0 - score) * sech2),
        Partition::In => (
            (1.0 - score) * (1.0 - t),
            -(1.0 - t) - (1.0 - score) * sech2,
        ),
    }
}

/// Soft partition counts. Membership uses the same hard predicates as
/// [`hard_counts`]; within a partition each detection contributes its
/// tanh-weighted term (see [`soft_term`]).
pub fn soft_counts(scores: &[f64], k: &[bool], cfg: &BpcConfig) -> Result<PartitionCounts> {
    check_lengths(scores, k)?;
    let mut sums = [0.0f64; 4];
    for (&s, &ki) in scores.iter().zip(k) {
        let part = partition(s, ki, cfg.score_threshold);
        sums[part as usize] += soft_term(s, part).0;
    }
    Ok(PartitionCounts {
        t_ac: sums[Partition::Ac as usize],
        t_an: sums[Partition::An as usize],
        t_ic: sums[Partition::Ic as usize],
        t_in: sums[Partition::In as usize],
        mode: CountMode::Soft,
    })
}

/// The calibration loss over soft counts, with analytic score gradients.
///
/// `value = ln(1 + misaligned / (aligned + epsilon))`, which is zero exactly
/// when the misaligned mass is zero and finite for every input thanks to the
/// epsilon guard.
pub fn bpc_loss(scores: &[f64], k: &[bool], cfg: &BpcConfig) -> Result<LossValue> {
    check_lengths(scores, k)?;
    let th = cfg.score_threshold;
    let mut parts = Vec::with_capacity(scores.len());
    let mut aligned = 0.0f64;
    let mut misaligned = 0.0f64;
    for (&s, &ki) in scores.iter().zip(k) {
        let part = partition(s, ki, th);
        let (term, dterm) = soft_term(s, part);
        match part {
            Partition::Ac | Partition::In => aligned += term,
            Partition::An | Partition::Ic => misaligned += term,
        }
        parts.push((part, dterm));
    }

    let denom = aligned + cfg.epsilon;
    let value = (misaligned / denom).ln_1p();
    // d/d_misaligned ln(1 + m/d) = 1 / (d + m)
    // d/d_aligned   ln(1 + m/d) = -m / (d * (d + m))
    let d_misaligned = 1.0 / (denom + misaligned);
    let d_aligned = -misaligned / (denom * (denom + misaligned));
    let gradients = parts
        .into_iter()
        .map(|(part, dterm)| match part {
            Partition::Ac | Partition::In => d_aligned * dterm,
            Partition::An | Partition::Ic => d_misaligned * dterm,
        })
        .collect();
    Ok(LossValue { value, gradients })
}

/// Absolute difference between the two algebraic forms of the loss at
/// epsilon 0:
///
/// ```text
/// -ln(aligned / total)  vs  ln(1 + misaligned / aligned)
/// ```
///
/// They are identical symbolically; this diagnostic exposes the numerical
/// gap. Requires `t_ac + t_in > 0`.
pub fn equivalence_check(scores: &[f64], k: &[bool], cfg: &BpcConfig) -> Result<f64> {
    let counts = soft_counts(scores, k, cfg)?;
    let aligned = counts.aligned();
    if aligned <= 0.0 {
        return Err(Error::DegenerateCounts);
    }
    let misaligned = counts.misaligned();
    let negative_log_ratio = -(aligned / (aligned + misaligned)).ln();
    let rearranged = (misaligned / aligned).ln_1p();
    Ok((negative_log_ratio - rearranged).abs())
}
