//! Anchor coverage, proposal recall and 3D average precision.

mod ap;
mod coverage;
mod ingest;
mod recall;
mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use ap::{average_precision, ApOptions, ApResult, Interpolation, PrPoint};
pub use coverage::{
    coverage_histogram, coverage_overlaps, AnchorSource, CoverageHistogram, FrameAnchors, IndexedAnchors,
    SharedAnchors, ThresholdFraction, COVERAGE_THRESHOLDS,
};
pub use ingest::{
    ingest_detections, ingest_proposals, parse_detections_csv, parse_proposals_csv, Detection, DetectionSet,
    Proposal, ProposalSet,
};
pub use recall::{recall_at_n, RecallCurve, RecallOptions, RecallPoint};
pub use report::{ap_table_csv, coverage_summary_csv, recall_csv};

use crate::bev::CropArea;
use crate::geometry::Box3D;
use crate::kitti_io::{ObjectClass, ObjectLabel};

/// Ground-truth labels keyed by frame ID.
pub type GroundTruth = BTreeMap<String, Vec<ObjectLabel>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    /// Fails even the Hard thresholds.
    Ignored,
}

impl Difficulty {
    pub const LEVELS: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn as_str(&self) -> &'static str {
        match self {
            Difficulty::Easy => "Easy",
            Difficulty::Moderate => "Moderate",
            Difficulty::Hard => "Hard",
            Difficulty::Ignored => "Ignored",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyFilter {
    pub level: Difficulty,
    pub min_bbox_height_px: f64,
    pub max_occlusion: i8,
    pub max_truncation: f64,
}

impl DifficultyFilter {
    /// Benchmark thresholds: 40/25/25 px, occlusion 0/1/2, truncation 0.15/0.30/0.50.
    pub fn for_level(level: Difficulty) -> Self {
        let (h, o, t) = match level {
            Difficulty::Easy => (40.0, 0, 0.15),
            Difficulty::Moderate => (25.0, 1, 0.30),
            Difficulty::Hard | Difficulty::Ignored => (25.0, 2, 0.50),
        };
        Self {
            level,
            min_bbox_height_px: h,
            max_occlusion: o,
            max_truncation: t,
        }
    }

    pub fn accepts(&self, label: &ObjectLabel) -> bool {
        label.bbox2d.height() >= self.min_bbox_height_px
            && label.occlusion <= self.max_occlusion
            && label.truncation <= self.max_truncation
    }
}

/// Easy, Moderate and Hard filters, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyThresholds(pub [DifficultyFilter; 3]);

impl Default for DifficultyThresholds {
    fn default() -> Self {
        Self(Difficulty::LEVELS.map(DifficultyFilter::for_level))
    }
}

pub fn assign_difficulty(label: &ObjectLabel) -> Difficulty {
    assign_difficulty_with(label, &DifficultyThresholds::default())
}

/// Easiest level whose thresholds the label meets.
pub fn assign_difficulty_with(label: &ObjectLabel, thresholds: &DifficultyThresholds) -> Difficulty {
    thresholds
        .0
        .iter()
        .find(|f| f.accepts(label))
        .map(|f| f.level)
        .unwrap_or(Difficulty::Ignored)
}

/// A box row as stored in proposal/detection/anchor CSVs: bottom center
/// `(x, y, z)` in camera coordinates, `(l, h, w)`, and KITTI `rotation_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub x: f64,
    pub z: f64,
    pub y: f64,
    pub l: f64,
    pub h: f64,
    pub w: f64,
    pub yaw: f64,
    pub class_name: ObjectClass,
}

impl BoxRecord {
    pub fn to_box3d(&self) -> Box3D<f64> {
        Box3D::from_kitti([self.x, self.y, self.z], self.l, self.h, self.w, self.yaw)
    }

    pub fn from_label(l: &ObjectLabel) -> Self {
        Self {
            x: l.location[0],
            z: l.location[2],
            y: l.location[1],
            l: l.dims.length,
            h: l.dims.height,
            w: l.dims.width,
            yaw: l.rotation_y,
            class_name: l.class_name.clone(),
        }
    }
}

pub fn label_box(l: &ObjectLabel) -> Box3D<f64> {
    Box3D::from_kitti(l.location, l.dims.length, l.dims.height, l.dims.width, l.rotation_y)
}

/// Whether the label's BEV center lies inside `area` (always true without one).
pub(crate) fn inside(area: Option<&CropArea>, l: &ObjectLabel) -> bool {
    area.is_none_or(|a| a.contains(l.location[0], l.location[2]))
}
