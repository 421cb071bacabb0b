//! Class-aware greedy IoU matching: labels each detection as a true or false
//! positive against ground truth.
//!
//! The convention is the usual COCO-style greedy assignment: detections are
//! visited in descending score order (ties broken by ascending input index)
//! and each one consumes the unmatched same-class ground truth with the
//! highest IoU, provided that IoU reaches the threshold. Matching is
//! one-to-one: a consumed ground truth is unavailable to later detections.

use crate::error::{Error, Result};
use crate::geometry::{iou, Detection, GroundTruth, ImageId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Matching configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// IoU threshold in (0, 1] a detection must reach to count as accurate.
    pub iou_threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.5 }
    }
}

impl MatchConfig {
    pub fn new(iou_threshold: f64) -> Result<Self> {
        if iou_threshold.is_nan() || iou_threshold <= 0.0 || iou_threshold > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "iou threshold must be in (0, 1], got {iou_threshold}"
            )));
        }
        Ok(Self { iou_threshold })
    }
}

/// Per-detection match result.
///
/// `detection_index` and `matched_gt_index` refer to positions in the input
/// slices of the call that produced this outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub detection_index: usize,
    /// Accuracy indicator: true when the detection matched a same-class
    /// ground truth at or above the IoU threshold.
    pub k: bool,
    pub matched_gt_index: Option<usize>,
    pub iou_at_match: Option<f64>,
}

impl MatchOutcome {
    fn unmatched(detection_index: usize) -> Self {
        Self {
            detection_index,
            k: false,
            matched_gt_index: None,
            iou_at_match: None,
        }
    }
}

/// Greedy matching over detection/ground-truth indices into shared slices.
/// Outcomes are returned in ascending `det_indices` order.
fn match_group(
    det_indices: &[usize],
    dets: &[Detection],
    gt_indices: &[usize],
    gts: &[GroundTruth],
    cfg: &MatchConfig,
) -> Vec<MatchOutcome> {
    let mut order: Vec<usize> = (0..det_indices.len()).collect();
    order.sort_by(|&a, &b| {
        dets[det_indices[b]]
            .score
            .total_cmp(&dets[det_indices[a]].score)
            .then(det_indices[a].cmp(&det_indices[b]))
    });

    let mut consumed = vec![false; gt_indices.len()];
    let mut outcomes: Vec<Option<MatchOutcome>> = vec![None; det_indices.len()];
    for &pos in &order {
        let det_idx = det_indices[pos];
        let det = &dets[det_idx];
        // Highest-IoU unmatched same-class ground truth; ties keep the
        // lowest ground-truth index.
        let mut best: Option<(usize, f64)> = None;
        for (slot, &gt_idx) in gt_indices.iter().enumerate() {
            if consumed[slot] || gts[gt_idx].class_id != det.class_id {
                continue;
            }
            let overlap = iou(&det.bbox, &gts[gt_idx].bbox);
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((slot, overlap));
            }
        }
        outcomes[pos] = Some(match best {
            Some((slot, overlap)) if overlap >= cfg.iou_threshold => {
                consumed[slot] = true;
                MatchOutcome {
                    detection_index: det_idx,
                    k: true,
                    matched_gt_index: Some(gt_indices[slot]),
                    iou_at_match: Some(overlap),
                }
            }
            _ => MatchOutcome::unmatched(det_idx),
        });
    }
    outcomes.into_iter().map(|o| o.expect("every slot filled")).collect()
}

/// Matches the detections of a single image against its ground truth.
///
/// All inputs must share one `image_id`. Outcomes are returned in input
/// detection order; indices refer to positions in `dets` and `gts`.
pub fn match_image(
    dets: &[Detection],
    gts: &[GroundTruth],
    cfg: &MatchConfig,
) -> Vec<MatchOutcome> {
    debug_assert!(
        dets.iter()
            .map(|d| d.image_id)
            .chain(gts.iter().map(|g| g.image_id))
            .collect::<std::collections::HashSet<_>>()
            .len()
            <= 1,
        "match_image inputs must share one image_id"
    );
    let det_indices: Vec<usize> = (0..dets.len()).collect();
    let gt_indices: Vec<usize> = (0..gts.len()).collect();
    match_group(&det_indices, dets, &gt_indices, gts, cfg)
}

/// Groups detections and ground truth by `image_id` in ascending id order.
/// Per-image index lists preserve the global input order.
fn group_by_image(
    dets: &[Detection],
    gts: &[GroundTruth],
) -> BTreeMap<ImageId, (Vec<usize>, Vec<usize>)> {
    let mut groups: BTreeMap<ImageId, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, det) in dets.iter().enumerate() {
        groups.entry(det.image_id).or_default().0.push(i);
    }
    for (i, gt) in gts.iter().enumerate() {
        groups.entry(gt.image_id).or_default().1.push(i);
    }
    groups
}

/// Matches a whole dataset image by image.
///
/// Outcomes are grouped by ascending `image_id` and, within an image, by
/// ascending detection index; `detection_index` and `matched_gt_index` are
/// global positions in the input slices. A detection whose `image_id` has no
/// ground truth is matched against an empty list (`k = false`).
pub fn match_dataset(
    dets: &[Detection],
    gts: &[GroundTruth],
    cfg: &MatchConfig,
) -> Vec<MatchOutcome> {
    let groups = group_by_image(dets, gts);
    let mut outcomes = Vec::with_capacity(dets.len());
    for (det_indices, gt_indices) in groups.values() {
        outcomes.extend(match_group(det_indices, dets, gt_indices, gts, cfg));
    }
    outcomes
}

/// Parallel [`match_dataset`]: images are matched concurrently and the
/// per-image outcomes are concatenated in ascending `image_id` order, so the
/// result is identical to the sequential version.
#[cfg(feature = "parallel")]
pub fn par_match_dataset(
    dets: &[Detection],
    gts: &[GroundTruth],
    cfg: &MatchConfig,
) -> Vec<MatchOutcome> {
    use rayon::prelude::*;
    let groups: Vec<(Vec<usize>, Vec<usize>)> = group_by_image(dets, gts).into_values().collect();
    groups
        .par_iter()
        .map(|(det_indices, gt_indices)| match_group(det_indices, dets, gt_indices, gts, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// [`match_dataset`] through whichever implementation the build enables.
pub(crate) fn match_dataset_dispatch(
    dets: &[Detection],
    gts: &[GroundTruth],
    cfg: &MatchConfig,
) -> Vec<MatchOutcome> {
    #[cfg(feature = "parallel")]
    {
        par_match_dataset(dets, gts, cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        match_dataset(dets, gts, cfg)
    }
}
