use serde::{Deserialize, Serialize};

use super::{assign_difficulty_with, inside, label_box, DetectionSet, Difficulty, DifficultyThresholds, GroundTruth};
use crate::bev::CropArea;
use crate::geometry::{iou_3d, Box3D};
use crate::kitti_io::ObjectClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    /// Recall levels `0, 0.1, …, 1.0`.
    R11,
    /// Recall levels `1/40, 2/40, …, 1.0`.
    R40,
}

impl Interpolation {
    pub fn recall_levels(&self) -> Vec<f64> {
        match self {
            Interpolation::R11 => (0..=10).map(|i| i as f64 / 10.0).collect(),
            Interpolation::R40 => (1..=40).map(|i| i as f64 / 40.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApOptions {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    /// Ground truths outside the area are treated like ignored ones.
    pub area: Option<CropArea>,
    pub thresholds: DifficultyThresholds,
}

impl Default for ApOptions {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            interpolation: Interpolation::R11,
            area: None,
            thresholds: DifficultyThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub class_name: ObjectClass,
    pub difficulty: Difficulty,
    pub iou_threshold: f64,
    /// Percentage in `[0, 100]`; `None` when the bucket has no ground truth.
    pub ap: Option<f64>,
    pub interpolation: Interpolation,
    /// One point per counted (true- or false-positive) detection, in score order.
    pub precision_recall_points: Vec<PrPoint>,
    pub num_gt: usize,
    pub true_positives: usize,
    pub false_positives: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Outcome {
    TruePositive,
    FalsePositive,
    Absorbed,
}

struct FrameGt {
    boxes: Vec<Box3D<f64>>,
    counted: Vec<bool>,
}

/// Greedy one-to-one matching in descending score order. Ground truths that
/// are harder than `difficulty` (or ignored, or outside the area) can absorb a
/// detection without it counting either way.
pub fn average_precision(
    dets: &DetectionSet,
    gts: &GroundTruth,
    class: &ObjectClass,
    difficulty: Difficulty,
    opts: &ApOptions,
) -> ApResult {
    let mut scored: Vec<(f64, usize, Outcome)> = Vec::new();
    let mut num_gt = 0;
    let empty = Vec::new();

    let frames: std::collections::BTreeSet<&String> = dets.frames.keys().chain(gts.keys()).collect();
    for frame in frames {
        let labels = gts.get(frame).unwrap_or(&empty);
        let fg = {
            let class_labels: Vec<_> = labels.iter().filter(|l| &l.class_name == class).collect();
            FrameGt {
                boxes: class_labels.iter().map(|l| label_box(l)).collect(),
                counted: class_labels
                    .iter()
                    .map(|l| {
                        inside(opts.area.as_ref(), l) && assign_difficulty_with(l, &opts.thresholds) <= difficulty
                    })
                    .collect(),
            }
        };
        num_gt += fg.counted.iter().filter(|&&c| c).count();

        let mut frame_dets: Vec<_> = dets
            .frames
            .get(frame)
            .map(|v| v.iter().filter(|d| &d.record.class_name == class).collect())
            .unwrap_or_else(Vec::new);
        frame_dets.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.order.cmp(&b.order)));

        let mut taken = vec![false; fg.boxes.len()];
        for d in frame_dets {
            let db = d.record.to_box3d();
            let mut best: Option<(usize, f64)> = None;
            for (g, gb) in fg.boxes.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let iou = iou_3d(&db, gb);
                if iou >= opts.iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            let outcome = match best {
                Some((g, _)) => {
                    taken[g] = true;
                    if fg.counted[g] {
                        Outcome::TruePositive
                    } else {
                        Outcome::Absorbed
                    }
                }
                None => Outcome::FalsePositive,
            };
            scored.push((d.score, d.order, outcome));
        }
    }

    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points = Vec::new();
    for &(_, _, outcome) in &scored {
        match outcome {
            Outcome::TruePositive => tp += 1,
            Outcome::FalsePositive => fp += 1,
            Outcome::Absorbed => continue,
        }
        points.push(PrPoint {
            recall: if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 },
            precision: tp as f64 / (tp + fp) as f64,
        });
    }

    let ap = (num_gt > 0).then(|| interpolated_ap(&points, opts.interpolation));
    ApResult {
        class_name: class.clone(),
        difficulty,
        iou_threshold: opts.iou_threshold,
        ap,
        interpolation: opts.interpolation,
        precision_recall_points: points,
        num_gt,
        true_positives: tp,
        false_positives: fp,
    }
}

/// Mean over recall levels of the best precision achieved at recall ≥ level, ×100.
fn interpolated_ap(points: &[PrPoint], interp: Interpolation) -> f64 {
    // suffix maximum of precision gives the envelope
    let mut envelope = vec![0.0f64; points.len()];
    let mut running = 0.0f64;
    for i in (0..points.len()).rev() {
        running = running.max(points[i].precision);
        envelope[i] = running;
    }
    let levels = interp.recall_levels();
    let mut sum = 0.0;
    for &r in &levels {
        // recall is non-decreasing, so the first point at or above r carries the envelope
        let idx = points.partition_point(|p| p.recall < r);
        if idx < points.len() {
            sum += envelope[idx];
        }
    }
    100.0 * sum / levels.len() as f64
}
