use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::iou::rotated_iou;
use crate::error::{Error, Result};
use crate::model::{wrap_angle, RotatedBox};

/// Number of points on the interpolated recall grid.
pub const RECALL_POINTS: usize = 101;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_id: String,
    #[serde(rename = "box")]
    pub bbox: RotatedBox,
}

impl Detection {
    pub fn new(frame_id: impl Into<String>, bbox: RotatedBox, score: f64) -> Self {
        Self {
            frame_id: frame_id.into(),
            bbox: bbox.with_score(score),
        }
    }

    pub fn score(&self) -> f64 {
        self.bbox.score.unwrap_or(f64::NAN)
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        match self.bbox.score {
            Some(s) if (0.0..=1.0).contains(&s) => Ok(()),
            Some(s) => Err(Error::invalid("detection", format!("score {s} outside [0, 1]"))),
            None => Err(Error::invalid(
                "detection",
                format!("frame {}: missing score", self.frame_id),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame_id: String,
    #[serde(rename = "box")]
    pub bbox: RotatedBox,
}

impl GroundTruth {
    pub fn new(frame_id: impl Into<String>, bbox: RotatedBox) -> Self {
        Self {
            frame_id: frame_id.into(),
            bbox,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchResult {
    /// Per detection, in input order.
    pub true_positive: Vec<bool>,
    pub false_negatives: usize,
}

/// Descending score, stable: equal scores keep input order.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].score().total_cmp(&dets[i].score()));
    order
}

/// Greedy matching over detections and ground truths, grouped by frame.
/// Each detection, taken in descending score order, claims the unmatched
/// ground truth in its frame with the highest IoU at or above `iou_thr`.
pub fn greedy_match(dets: &[Detection], gts: &[GroundTruth], iou_thr: f64) -> Result<MatchResult> {
    for d in dets {
        d.validate()?;
    }
    let mut by_frame: HashMap<&str, Vec<usize>> = HashMap::new();
    for (g, gt) in gts.iter().enumerate() {
        gt.bbox.validate()?;
        by_frame.entry(gt.frame_id.as_str()).or_default().push(g);
    }
    let mut taken = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for i in score_order(dets) {
        let Some(cands) = by_frame.get(dets[i].frame_id.as_str()) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for &g in cands {
            if taken[g] {
                continue;
            }
            let iou = rotated_iou(&dets[i].bbox, &gts[g].bbox)?;
            if iou >= iou_thr && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            tp[i] = true;
        }
    }
    Ok(MatchResult {
        true_positive: tp,
        false_negatives: taken.iter().filter(|t| !**t).count(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    /// Raw (precision, recall) after each detection in score order.
    pub points: Vec<(f64, f64)>,
    /// Interpolated precision at recall i/100.
    pub interpolated: [f64; RECALL_POINTS],
}

impl PrCurve {
    pub fn ap(&self) -> f64 {
        self.interpolated.iter().sum::<f64>() / RECALL_POINTS as f64
    }
}

pub fn pr_curve(dets: &[Detection], gts: &[GroundTruth], iou_thr: f64) -> Result<PrCurve> {
    if gts.is_empty() {
        return Err(Error::EmptyDataset("no ground-truth boxes".into()));
    }
    let m = greedy_match(dets, gts, iou_thr)?;
    let mut points = Vec::with_capacity(dets.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for i in score_order(dets) {
        if m.true_positive[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((tp as f64 / (tp + fp) as f64, tp as f64 / gts.len() as f64));
    }
    let mut interpolated = [0.0; RECALL_POINTS];
    for (i, slot) in interpolated.iter_mut().enumerate() {
        let r = i as f64 / 100.0;
        *slot = points
            .iter()
            .filter(|&&(_, rec)| rec >= r)
            .map(|&(p, _)| p)
            .fold(0.0, f64::max);
    }
    Ok(PrCurve { points, interpolated })
}

/// 101-point interpolated average precision at one IoU threshold.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], iou_thr: f64) -> Result<f64> {
    Ok(pr_curve(dets, gts, iou_thr)?.ap())
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

pub fn mean_ap(dets: &[Detection], gts: &[GroundTruth]) -> Result<f64> {
    let t = iou_thresholds();
    let mut sum = 0.0;
    for thr in t {
        sum += average_precision(dets, gts, thr)?;
    }
    Ok(sum / t.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Straight,
    Oriented,
    Incoming,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Straight, Category::Oriented, Category::Incoming];

    pub fn name(self) -> &'static str {
        match self {
            Category::Straight => "straight",
            Category::Oriented => "oriented",
            Category::Incoming => "incoming",
        }
    }
}

const CATEGORY_TOL: f64 = 5.0 * std::f64::consts::PI / 180.0;

pub fn categorize_box(b: &RotatedBox) -> Category {
    if wrap_angle(b.yaw).abs() <= CATEGORY_TOL {
        Category::Straight
    } else if wrap_angle(b.yaw - std::f64::consts::PI).abs() <= CATEGORY_TOL {
        Category::Incoming
    } else {
        Category::Oriented
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub num_gt: usize,
    pub num_det: usize,
    /// Absent when the category has no ground truth.
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub map: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub ap50: f64,
    pub ap75: f64,
    pub map: f64,
    pub num_gt: usize,
    pub num_det: usize,
    pub per_category: BTreeMap<String, CategoryReport>,
}

/// AP at 0.5 and 0.75, mAP, and the same split by box category. Both
/// detections and ground truths are categorized by their own yaw.
pub fn evaluate_detections(dets: &[Detection], gts: &[GroundTruth]) -> Result<DetectionReport> {
    let mut per_category = BTreeMap::new();
    for cat in Category::ALL {
        let d: Vec<Detection> = dets
            .iter()
            .filter(|x| categorize_box(&x.bbox) == cat)
            .cloned()
            .collect();
        let g: Vec<GroundTruth> = gts.iter().filter(|x| categorize_box(&x.bbox) == cat).cloned().collect();
        let report = if g.is_empty() {
            CategoryReport {
                num_gt: 0,
                num_det: d.len(),
                ap50: None,
                ap75: None,
                map: None,
            }
        } else {
            CategoryReport {
                num_gt: g.len(),
                num_det: d.len(),
                ap50: Some(average_precision(&d, &g, 0.5)?),
                ap75: Some(average_precision(&d, &g, 0.75)?),
                map: Some(mean_ap(&d, &g)?),
            }
        };
        per_category.insert(cat.name().to_string(), report);
    }
    Ok(DetectionReport {
        ap50: average_precision(dets, gts, 0.5)?,
        ap75: average_precision(dets, gts, 0.75)?,
        map: mean_ap(dets, gts)?,
        num_gt: gts.len(),
        num_det: dets.len(),
        per_category,
    })
}
