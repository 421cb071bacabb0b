//! File formats: COCO-style ground-truth and detection JSON in, report JSON
//! and CSV out.
//!
//! Loaders walk the JSON tree by hand so that every failure names the exact
//! JSON path (`annotations[3].bbox`) instead of a byte offset. Reports
//! serialize with struct field order, so keys are stable across runs and the
//! JSON round-trips exactly. CSV output uses 6-decimal fixed-point values
//! and LF line endings.
//!
//! CSV schemas:
//! * reliability table: `bin_lower,bin_upper,count,mean_confidence,precision,gap`
//! * evaluation summary: `metric,value` key/value rows
//! * training curve: `epoch,detection_loss,bpc_loss,total_loss`
//! * matched detections (input): `score,k` with k in {0, 1}, header optional

use crate::calibration::{reliability_data, CalibrationReport};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Detection, GroundTruth, ImageId};
use crate::toydet::eval::EvalSummary;
use crate::toydet::train::EpochStats;
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Ground truth with its category names and the number of crowd
/// annotations the loader skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct GtDataset {
    pub ground_truths: Vec<GroundTruth>,
    pub categories: BTreeMap<u32, String>,
    pub crowd_skipped: usize,
}

/// A matched pair of inputs for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub ground_truths: Vec<GroundTruth>,
    pub detections: Vec<Detection>,
    pub categories: BTreeMap<u32, String>,
}

impl DatasetBundle {
    /// Bundles ground truth and detections, rejecting detections whose
    /// class is missing from a non-empty category map.
    pub fn new(gt: GtDataset, detections: Vec<Detection>) -> Result<Self> {
        if !gt.categories.is_empty() {
            for (i, det) in detections.iter().enumerate() {
                if !gt.categories.contains_key(&det.class_id) {
                    return Err(Error::InvalidConfig(format!(
                        "detection {i} has category_id {} not present in the category map",
                        det.class_id
                    )));
                }
            }
        }
        Ok(Self {
            ground_truths: gt.ground_truths,
            detections,
            categories: gt.categories,
        })
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn parse_error(path: &Path, detail: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), detail: detail.into() }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, format!("malformed JSON: {e}")))
}

fn require<'a>(value: &'a Value, key: &str, ctx: &str, path: &Path) -> Result<&'a Value> {
    value
        .get(key)
        .ok_or_else(|| parse_error(path, format!("{ctx}.{key}: missing required key")))
}

fn require_u64(value: &Value, key: &str, ctx: &str, path: &Path) -> Result<u64> {
    require(value, key, ctx, path)?
        .as_u64()
        .ok_or_else(|| parse_error(path, format!("{ctx}.{key}: expected a non-negative integer")))
}

fn require_category_id(value: &Value, ctx: &str, path: &Path) -> Result<u32> {
    let id = require_u64(value, "category_id", ctx, path)?;
    u32::try_from(id)
        .map_err(|_| parse_error(path, format!("{ctx}.category_id: {id} exceeds u32 range")))
}

/// Parses a COCO `[x, y, w, h]` array into corner form, rejecting negative
/// extents.
fn parse_xywh(value: &Value, ctx: &str, path: &Path) -> Result<BoundingBox> {
    let arr = value
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| parse_error(path, format!("{ctx}: expected an array of 4 numbers")))?;
    let mut nums = [0.0f64; 4];
    for (i, v) in arr.iter().enumerate() {
        nums[i] = v
            .as_f64()
            .ok_or_else(|| parse_error(path, format!("{ctx}[{i}]: expected a number")))?;
    }
    let [x, y, w, h] = nums;
    if w < 0.0 {
        return Err(parse_error(path, format!("{ctx}: negative width {w}")));
    }
    if h < 0.0 {
        return Err(parse_error(path, format!("{ctx}: negative height {h}")));
    }
    Ok(BoundingBox::from_xywh(x, y, w, h))
}

/// Loads COCO-style ground truth: `annotations` and `categories` are
/// required, `images` is ignored. Annotations flagged `iscrowd: 1` are
/// skipped and counted in [`GtDataset::crowd_skipped`]. Record order is
/// preserved.
pub fn load_coco_gt(path: &Path) -> Result<GtDataset> {
    let root = read_json(path)?;
    let annotations = require(&root, "annotations", "$", path)?
        .as_array()
        .ok_or_else(|| parse_error(path, "$.annotations: expected an array"))?;
    let categories_raw = require(&root, "categories", "$", path)?
        .as_array()
        .ok_or_else(|| parse_error(path, "$.categories: expected an array"))?;

    let mut categories = BTreeMap::new();
    for (i, cat) in categories_raw.iter().enumerate() {
        let ctx = format!("categories[{i}]");
        let id = require_u64(cat, "id", &ctx, path)?;
        let id = u32::try_from(id)
            .map_err(|_| parse_error(path, format!("{ctx}.id: {id} exceeds u32 range")))?;
        let name = require(cat, "name", &ctx, path)?
            .as_str()
            .ok_or_else(|| parse_error(path, format!("{ctx}.name: expected a string")))?;
        categories.insert(id, name.to_owned());
    }

    let mut ground_truths = Vec::with_capacity(annotations.len());
    let mut crowd_skipped = 0usize;
    for (i, ann) in annotations.iter().enumerate() {
        let ctx = format!("annotations[{i}]");
        if ann.get("iscrowd").and_then(Value::as_u64) == Some(1) {
            crowd_skipped += 1;
            continue;
        }
        let image_id = ImageId(require_u64(ann, "image_id", &ctx, path)?);
        let class_id = require_category_id(ann, &ctx, path)?;
        let bbox = parse_xywh(
            require(ann, "bbox", &ctx, path)?,
            &format!("{ctx}.bbox"),
            path,
        )?;
        ground_truths.push(GroundTruth::new(image_id, bbox, class_id));
    }
    Ok(GtDataset { ground_truths, categories, crowd_skipped })
}

/// Loads a COCO-style results array of
/// `{image_id, category_id, bbox, score}` records. Scores outside [0, 1]
/// are rejected with the offending index. Record order is preserved.
pub fn load_coco_dets(path: &Path) -> Result<Vec<Detection>> {
    let root = read_json(path)?;
    let records = root
        .as_array()
        .ok_or_else(|| parse_error(path, "$: expected a JSON array of detection records"))?;
    let mut detections = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let ctx = format!("results[{i}]");
        let image_id = ImageId(require_u64(rec, "image_id", &ctx, path)?);
        let class_id = require_category_id(rec, &ctx, path)?;
        let bbox = parse_xywh(
            require(rec, "bbox", &ctx, path)?,
            &format!("{ctx}.bbox"),
            path,
        )?;
        let score = require(rec, "score", &ctx, path)?
            .as_f64()
            .ok_or_else(|| parse_error(path, format!("{ctx}.score: expected a number")))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(parse_error(
                path,
                format!("{ctx}.score: {score} outside [0, 1]"),
            ));
        }
        detections.push(Detection::new(image_id, bbox, class_id, score));
    }
    Ok(detections)
}

/// Output serialization format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// A writable report.
#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Calibration(&'a CalibrationReport),
    Eval(&'a EvalSummary),
}

/// The reliability table for a calibration report, one row per bin
/// (including empty bins), 6-decimal fixed point, LF endings.
pub fn reliability_csv(report: &CalibrationReport) -> String {
    let mut out = String::from("bin_lower,bin_upper,count,mean_confidence,precision,gap\n");
    for row in reliability_data(report) {
        let _ = writeln!(
            out,
            "{:.6},{:.6},{},{:.6},{:.6},{:.6}",
            row.bin_lower, row.bin_upper, row.count, row.mean_confidence, row.precision, row.gap
        );
    }
    out
}

fn eval_summary_csv(summary: &EvalSummary) -> String {
    let c = &summary.partition_counts_hard;
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "domain,{}", summary.domain);
    let _ = writeln!(out, "d_ece,{:.6}", summary.d_ece);
    let _ = writeln!(out, "d_ece_degenerate,{}", summary.d_ece_degenerate);
    let _ = writeln!(out, "ap_at_05,{:.6}", summary.ap_at_05);
    let _ = writeln!(out, "map_at_05,{:.6}", summary.map_at_05);
    let _ = writeln!(out, "t_ac,{:.6}", c.t_ac);
    let _ = writeln!(out, "t_an,{:.6}", c.t_an);
    let _ = writeln!(out, "t_ic,{:.6}", c.t_ic);
    let _ = writeln!(out, "t_in,{:.6}", c.t_in);
    let _ = writeln!(out, "pc_ratio,{:.6}", c.pc_ratio().value);
    out
}

/// Writes a report as stable-key JSON or CSV. JSON output re-loads to an
/// identical value via [`read_calibration_report`] / [`read_eval_summary`].
pub fn write_report(report: Report<'_>, path: &Path, format: ReportFormat) -> Result<()> {
    let payload = match (report, format) {
        (Report::Calibration(r), ReportFormat::Json) => to_json(r, path)?,
        (Report::Eval(s), ReportFormat::Json) => to_json(s, path)?,
        (Report::Calibration(r), ReportFormat::Csv) => reliability_csv(r),
        (Report::Eval(s), ReportFormat::Csv) => eval_summary_csv(s),
    };
    fs::write(path, payload).map_err(|e| io_error(path, e))
}

fn to_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| parse_error(path, format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn read_calibration_report(path: &Path) -> Result<CalibrationReport> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, format!("malformed report: {e}")))
}

pub fn read_eval_summary(path: &Path) -> Result<EvalSummary> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, format!("malformed summary: {e}")))
}

/// Writes the per-epoch loss curve: `epoch,detection_loss,bpc_loss,total_loss`.
pub fn write_training_curve(curve: &[EpochStats], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,detection_loss,bpc_loss,total_loss\n");
    for stats in curve {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6}",
            stats.epoch, stats.detection, stats.bpc, stats.total
        );
    }
    fs::write(path, out).map_err(|e| io_error(path, e))
}

/// Reads a `score,k` CSV of matched detections. The header row is optional,
/// `k` must be 0 or 1, scores must lie in [0, 1]. An empty file yields empty
/// vectors.
pub fn read_matched_csv(path: &Path) -> Result<(Vec<f64>, Vec<bool>)> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut scores = Vec::new();
    let mut ks = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if lineno == 0 && line.starts_with("score") {
            continue;
        }
        let (score_str, k_str) = line.split_once(',').ok_or_else(|| {
            parse_error(path, format!("line {}: expected 'score,k'", lineno + 1))
        })?;
        let score: f64 = score_str.trim().parse().map_err(|_| {
            parse_error(
                path,
                format!("line {}: invalid score '{}'", lineno + 1, score_str.trim()),
            )
        })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(parse_error(
                path,
                format!("line {}: score {score} outside [0, 1]", lineno + 1),
            ));
        }
        let k = match k_str.trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_error(
                    path,
                    format!("line {}: k must be 0 or 1, got '{other}'", lineno + 1),
                ))
            }
        };
        scores.push(score);
        ks.push(k);
    }
    Ok((scores, ks))
}
