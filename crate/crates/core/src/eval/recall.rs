use serde::{Deserialize, Serialize};

use super::{assign_difficulty_with, inside, label_box, Difficulty, DifficultyThresholds, GroundTruth, ProposalSet};
use crate::bev::CropArea;
use crate::error::{Error, Result};
use crate::geometry::iou_3d;
use crate::kitti_io::ObjectClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallOptions {
    pub iou_threshold: f64,
    /// Restrict to ground truths at or below this difficulty.
    pub difficulty: Option<Difficulty>,
    pub area: Option<CropArea>,
    pub thresholds: DifficultyThresholds,
}

impl Default for RecallOptions {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            difficulty: None,
            area: None,
            thresholds: DifficultyThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub proposals: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub class_name: ObjectClass,
    pub iou_threshold: f64,
    pub points: Vec<RecallPoint>,
    pub total_gt: usize,
    pub excluded_outside: usize,
}

/// Fraction of ground truths matched (3D IoU ≥ threshold) by at least one
/// of their frame's top-`N` proposals of the same class, for each `N`.
/// A proposal may recall several ground truths.
pub fn recall_at_n(
    proposals: &ProposalSet,
    gts: &GroundTruth,
    class: &ObjectClass,
    ns: &[usize],
    opts: &RecallOptions,
) -> Result<RecallCurve> {
    if ns.contains(&0) {
        return Err(Error::Argument("proposal counts must be positive".into()));
    }
    if ns.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Argument("proposal counts must be sorted ascending".into()));
    }
    if let Some(Difficulty::Ignored) = opts.difficulty {
        return Err(Error::Argument("Ignored is not an evaluation level".into()));
    }
    // rank position of the first matching proposal, per counted ground truth
    let mut first_hit: Vec<Option<usize>> = Vec::new();
    let mut excluded = 0;
    for (frame, labels) in gts {
        let ranked: Vec<_> = proposals
            .ranked(frame)
            .into_iter()
            .filter(|p| &p.record.class_name == class)
            .map(|p| p.record.to_box3d())
            .collect();
        for l in labels.iter().filter(|l| &l.class_name == class) {
            if !inside(opts.area.as_ref(), l) {
                excluded += 1;
                continue;
            }
            if let Some(level) = opts.difficulty {
                if assign_difficulty_with(l, &opts.thresholds) > level {
                    continue;
                }
            }
            let gt = label_box(l);
            first_hit.push(ranked.iter().position(|p| iou_3d(p, &gt) >= opts.iou_threshold));
        }
    }
    let total = first_hit.len();
    let points = ns
        .iter()
        .map(|&n| {
            let hit = first_hit.iter().filter(|k| k.is_some_and(|k| k < n)).count();
            RecallPoint {
                proposals: n,
                recall: if total == 0 { 0.0 } else { hit as f64 / total as f64 },
            }
        })
        .collect();
    Ok(RecallCurve {
        class_name: class.clone(),
        iou_threshold: opts.iou_threshold,
        points,
        total_gt: total,
        excluded_outside: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::super::test_support::label;
    use super::super::{BoxRecord, Proposal};
    use super::*;

    fn ped() -> ObjectClass {
        ObjectClass::Pedestrian
    }

    #[test]
    fn gt_copies_recall_everything_at_one() {
        let mut gts = GroundTruth::new();
        let mut props = ProposalSet::default();
        for f in 0..3 {
            let l = label(ped(), [f as f64, 1.6, 10.0], [0.8, 1.7, 0.6], 0.1);
            props.push(&f.to_string(), Proposal { rank: 1, record: BoxRecord::from_label(&l) });
            gts.insert(f.to_string(), vec![l]);
        }
        let c = recall_at_n(&props, &gts, &ped(), &[1, 10], &RecallOptions::default()).unwrap();
        assert_eq!(c.points[0].recall, 1.0);
        assert_eq!(c.points[1].recall, 1.0);
    }

    #[test]
    fn no_proposals_zero_recall() {
        let mut gts = GroundTruth::new();
        gts.insert("0".into(), vec![label(ped(), [0.0, 1.6, 10.0], [0.8, 1.7, 0.6], 0.0)]);
        let c = recall_at_n(&ProposalSet::default(), &gts, &ped(), &[1, 5], &RecallOptions::default()).unwrap();
        assert!(c.points.iter().all(|p| p.recall == 0.0));
    }

    #[test]
    fn argument_checks() {
        let gts = GroundTruth::new();
        let p = ProposalSet::default();
        assert!(recall_at_n(&p, &gts, &ped(), &[0, 1], &RecallOptions::default()).is_err());
        assert!(recall_at_n(&p, &gts, &ped(), &[5, 1], &RecallOptions::default()).is_err());
    }

    #[test]
    fn one_proposal_recalls_overlapping_gts() {
        let a = label(ped(), [0.0, 1.6, 10.0], [0.8, 1.7, 0.6], 0.0);
        let b = label(ped(), [0.05, 1.6, 10.0], [0.8, 1.7, 0.6], 0.0);
        let mut gts = GroundTruth::new();
        gts.insert("0".into(), vec![a.clone(), b]);
        let mut props = ProposalSet::default();
        props.push("0", Proposal { rank: 0, record: BoxRecord::from_label(&a) });
        let c = recall_at_n(&props, &gts, &ped(), &[1], &RecallOptions::default()).unwrap();
        assert_eq!(c.points[0].recall, 1.0);
    }

    #[test]
    fn area_excludes_outside_gts() {
        let mut gts = GroundTruth::new();
        gts.insert("0".into(), vec![label(ped(), [60.0, 1.6, 10.0], [0.8, 1.7, 0.6], 0.0)]);
        let opts = RecallOptions { area: Some(CropArea::default()), ..Default::default() };
        let c = recall_at_n(&ProposalSet::default(), &gts, &ped(), &[1], &opts).unwrap();
        assert_eq!((c.total_gt, c.excluded_outside), (0, 1));
    }
}
