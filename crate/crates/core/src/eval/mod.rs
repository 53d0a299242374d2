//! Detection and representation metrics.

mod ap;
mod iou;
mod retrieval;

pub use ap::{
    average_precision, categorize_box, evaluate_detections, greedy_match, iou_thresholds, mean_ap, pr_curve, Category,
    CategoryReport, Detection, DetectionReport, GroundTruth, MatchResult, PrCurve, RECALL_POINTS,
};
pub use iou::{polygon_area, rotated_iou};
pub use retrieval::{retrieval_topk, true_key_ranks};
