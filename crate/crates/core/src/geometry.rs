//! Core value types: boxes, detections, ground truth, and axis-aligned IoU.
//!
//! Coordinates are unitless (pixels or normalized, the caller's choice) but
//! must be consistent within a dataset. All types are immutable values and
//! every operation here is pure.

use serde::{Deserialize, Serialize};

/// Opaque image identifier.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ImageId(pub u64);

impl std::fmt::Display for ImageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Axis-aligned bounding box in corner form.
///
/// Corner form keeps the intersection arithmetic branch-free; COCO's
/// `(x, y, w, h)` is converted at ingestion. Degenerate zero-area boxes are
/// permitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    /// Builds a box from its corners. Requires `x_max >= x_min` and
    /// `y_max >= y_min` (checked in debug builds).
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        debug_assert!(x_max >= x_min, "x_max {x_max} < x_min {x_min}");
        debug_assert!(y_max >= y_min, "y_max {y_max} < y_min {y_min}");
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Converts COCO `(x, y, w, h)` to corner form.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y_max - self.y_min).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Returns the box shifted by `(dx, dy)`.
    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }
}

/// A predicted box with class label and confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: ImageId,
    pub bbox: BoundingBox,
    pub class_id: u32,
    /// Confidence in [0, 1].
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: ImageId, bbox: BoundingBox, class_id: u32, score: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&score), "score {score} outside [0,1]");
        Self {
            image_id,
            bbox,
            class_id,
            score,
        }
    }
}

/// An annotated ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: ImageId,
    pub bbox: BoundingBox,
    pub class_id: u32,
}

impl GroundTruth {
    pub fn new(image_id: ImageId, bbox: BoundingBox, class_id: u32) -> Self {
        Self {
            image_id,
            bbox,
            class_id,
        }
    }
}

/// Intersection-over-union of two boxes.
///
/// Returns 0 when the union has zero area (two degenerate boxes). The result
/// is always in [0, 1]: the union is floored at the intersection area so that
/// rounding on near-identical boxes cannot push the ratio above 1.
///
/// # Example
///
/// ```
/// use detcal_core::geometry::{iou, BoundingBox};
/// let a = BoundingBox::new(0.0, 0.0, 2.0, 2.0);
/// let b = BoundingBox::new(1.0, 1.0, 3.0, 3.0);
/// assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
/// ```
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = (a.area() + b.area() - inter).max(inter);
    if union == 0.0 {
        return 0.0;
    }
    inter / union
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_boxes_have_iou_one() {
        let a = BoundingBox::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn disjoint_boxes_have_iou_zero() {
        let a = BoundingBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BoundingBox::new(2.0, 2.0, 3.0, 3.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn overlapping_boxes_match_hand_arithmetic() {
        // Intersection 1, union 4 + 4 - 1 = 7.
        let a = BoundingBox::new(0.0, 0.0, 2.0, 2.0);
        let b = BoundingBox::new(1.0, 1.0, 3.0, 3.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
        assert_eq!(iou(&a, &b), iou(&b, &a));
    }

    #[test]
    fn zero_area_union_is_zero_not_nan() {
        let a = BoundingBox::new(1.0, 1.0, 1.0, 1.0);
        let b = BoundingBox::new(2.0, 2.0, 2.0, 2.0);
        assert_eq!(iou(&a, &b), 0.0);
        assert_eq!(iou(&a, &a), 0.0);
    }

    #[test]
    fn degenerate_against_overlapping_positive_box() {
        // A zero-area box inside a real box: intersection 0, union positive.
        let line = BoundingBox::new(0.5, 0.0, 0.5, 1.0);
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0);
        assert_eq!(iou(&line, &b), 0.0);
    }

    #[test]
    fn touching_boxes_have_iou_zero() {
        let a = BoundingBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BoundingBox::new(1.0, 0.0, 2.0, 1.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn xywh_conversion() {
        let b = BoundingBox::from_xywh(10.0, 20.0, 30.0, 40.0);
        assert_eq!(b, BoundingBox::new(10.0, 20.0, 40.0, 60.0));
    }

    #[test]
    fn translation_preserves_iou_on_a_dyadic_grid() {
        let a = BoundingBox::new(0.0, 0.25, 2.0, 2.25);
        let b = BoundingBox::new(1.0, 1.25, 3.0, 3.25);
        let before = iou(&a, &b);
        let after = iou(&a.translate(8.5, -3.25), &b.translate(8.5, -3.25));
        assert_eq!(before, after);
    }
}
