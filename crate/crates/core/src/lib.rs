//! Detection confidence calibration toolkit.
//!
//! Measures how well a detector's confidence scores track its actual
//! precision (binned calibration error, reliability diagrams), provides the
//! post-hoc temperature-scaling baseline, and implements a differentiable
//! train-time loss that pushes partition mass toward the
//! accurate-confident / inaccurate-not-confident diagonal. A desk-scale
//! synthetic detection benchmark with a small trainable detector
//! demonstrates the loss end to end.
//!
//! Modules, bottom of the stack first:
//!
//! * [`geometry`] — boxes, detections, ground truth, IoU
//! * [`matcher`] — greedy class-aware TP/FP assignment
//! * [`calibration`] — binning, ECE / D-ECE, reliability data, temperature
//!   scaling
//! * [`bpc`] — partition counts and the differentiable calibration loss
//! * [`toydet`] — synthetic scenes, a linear detector, trainer, evaluation
//! * [`io`] — COCO-style ingestion and report serialization
//!
//! With the default `parallel` feature, dataset matching, binning, and
//! batch forward passes offer rayon-backed `par_*` variants; every parallel
//! path reduces in a fixed order and returns bit-identical results to its
//! sequential counterpart, so enabling parallelism never changes an output.

pub mod bpc;
pub mod calibration;
pub mod error;
pub mod geometry;
pub mod io;
pub mod matcher;
pub mod toydet;

pub use error::{Error, Result};
