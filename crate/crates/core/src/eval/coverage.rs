use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{inside, label_box, GroundTruth};
use crate::anchor_gen::AnchorSet;
use crate::bev::CropArea;
use crate::error::{Error, Result};
use crate::geometry::{box_corners, polygon_intersection_area, OrientedBox2D};
use crate::kitti_io::ObjectClass;

/// Overlap thresholds reported in every histogram.
pub const COVERAGE_THRESHOLDS: [f64; 3] = [0.5, 0.65, 0.85];

/// Anchor footprints bucketed by center on a uniform grid for overlap queries.
#[derive(Debug, Clone)]
pub struct IndexedAnchors {
    footprints: Vec<(ObjectClass, OrientedBox2D<f64>)>,
    cell: f64,
    origin: (f64, f64),
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<u32>>,
    max_radius: f64,
}

impl IndexedAnchors {
    pub fn new(set: &AnchorSet) -> Self {
        let footprints: Vec<_> = set
            .anchors
            .iter()
            .map(|a| (a.class_name.clone(), a.footprint()))
            .collect();
        let max_radius = footprints
            .iter()
            .map(|(_, f)| f.bounding_radius())
            .fold(0.0, f64::max);
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for (_, f) in &footprints {
            lo = (lo.0.min(f.center[0]), lo.1.min(f.center[1]));
            hi = (hi.0.max(f.center[0]), hi.1.max(f.center[1]));
        }
        let cell = 1.0;
        let (cols, rows) = if footprints.is_empty() {
            (0, 0)
        } else {
            (
                ((hi.0 - lo.0) / cell).floor() as usize + 1,
                ((hi.1 - lo.1) / cell).floor() as usize + 1,
            )
        };
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, (_, f)) in footprints.iter().enumerate() {
            let c = ((f.center[0] - lo.0) / cell).floor() as usize;
            let r = ((f.center[1] - lo.1) / cell).floor() as usize;
            buckets[r.min(rows - 1) * cols + c.min(cols - 1)].push(i as u32);
        }
        Self {
            footprints,
            cell,
            origin: lo,
            cols,
            rows,
            buckets,
            max_radius,
        }
    }

    pub fn len(&self) -> usize {
        self.footprints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.footprints.is_empty()
    }

    pub fn has_class(&self, class: &ObjectClass) -> bool {
        self.footprints.iter().any(|(c, _)| c == class)
    }

    /// Largest intersection area between `gt` and any anchor of `class`.
    pub fn max_intersection(&self, gt: &OrientedBox2D<f64>, class: &ObjectClass) -> f64 {
        if self.footprints.is_empty() {
            return 0.0;
        }
        let (lo, hi) = gt.aabb();
        let reach = self.max_radius;
        let to_col = |x: f64| ((x - self.origin.0) / self.cell).floor();
        let to_row = |z: f64| ((z - self.origin.1) / self.cell).floor();
        let c0 = to_col(lo[0] - reach).max(0.0) as usize;
        let c1 = (to_col(hi[0] + reach) + 1.0).clamp(0.0, self.cols as f64) as usize;
        let r0 = to_row(lo[1] - reach).max(0.0) as usize;
        let r1 = (to_row(hi[1] + reach) + 1.0).clamp(0.0, self.rows as f64) as usize;
        let corners = box_corners(gt);
        let mut best = 0.0f64;
        for r in r0..r1 {
            for c in c0..c1 {
                for &i in &self.buckets[r * self.cols + c] {
                    let (ac, fp) = &self.footprints[i as usize];
                    if ac != class {
                        continue;
                    }
                    let (alo, ahi) = fp.aabb();
                    if alo[0] >= hi[0] || ahi[0] <= lo[0] || alo[1] >= hi[1] || ahi[1] <= lo[1] {
                        continue;
                    }
                    best = best.max(polygon_intersection_area(&corners, &box_corners(fp)));
                }
            }
        }
        best
    }
}

/// Where coverage evaluation finds each frame's anchors.
pub trait AnchorSource: Sync {
    fn anchors_for(&self, frame: &str) -> Option<&IndexedAnchors>;
}

/// One anchor set used for every frame (anchors without empty filtering
/// depend only on configuration).
pub struct SharedAnchors(pub IndexedAnchors);

impl AnchorSource for SharedAnchors {
    fn anchors_for(&self, _frame: &str) -> Option<&IndexedAnchors> {
        Some(&self.0)
    }
}

/// Distinct anchors per frame, e.g. after empty-anchor filtering.
pub struct FrameAnchors(pub BTreeMap<String, IndexedAnchors>);

impl AnchorSource for FrameAnchors {
    fn anchors_for(&self, frame: &str) -> Option<&IndexedAnchors> {
        self.0.get(frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFraction {
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageHistogram {
    pub class_name: ObjectClass,
    pub n_clusters: usize,
    pub bin_edges: Vec<f64>,
    pub normalized_counts: Vec<f64>,
    pub mean_overlap: Option<f64>,
    pub frac_above: Vec<ThresholdFraction>,
    /// Ground truths that entered the histogram.
    pub evaluated: usize,
    /// Ground truths skipped because their center lies outside the crop.
    pub excluded_outside: usize,
    pub empty: bool,
}

impl CoverageHistogram {
    pub fn fraction_above(&self, threshold: f64) -> Option<f64> {
        self.frac_above
            .iter()
            .find(|t| t.threshold == threshold)
            .map(|t| t.fraction)
    }
}

/// Overlap fraction of every in-area ground truth of `class`, in frame order,
/// plus the count excluded for lying outside `area`.
pub fn coverage_overlaps(
    gts: &GroundTruth,
    anchors: &impl AnchorSource,
    class: &ObjectClass,
    area: &CropArea,
) -> Result<(Vec<f64>, usize)> {
    let per_frame: Vec<Result<(Vec<f64>, usize)>> = gts
        .par_iter()
        .map(|(frame, labels)| {
            let mut out = Vec::new();
            let mut excluded = 0;
            let class_labels: Vec<_> = labels.iter().filter(|l| &l.class_name == class).collect();
            if class_labels.is_empty() {
                return Ok((out, 0));
            }
            let index = anchors
                .anchors_for(frame)
                .ok_or_else(|| Error::Argument(format!("no anchors for frame {frame}")))?;
            for l in class_labels {
                if !inside(Some(area), l) {
                    excluded += 1;
                    continue;
                }
                let fp = label_box(l).footprint;
                let a_gt = fp.area();
                if !(a_gt > 0.0) {
                    return Err(Error::Argument(format!("zero-area ground truth in frame {frame}")));
                }
                out.push((index.max_intersection(&fp, class) / a_gt).min(1.0));
            }
            Ok((out, excluded))
        })
        .collect();
    let mut overlaps = Vec::new();
    let mut excluded = 0;
    for r in per_frame {
        let (o, e) = r?;
        overlaps.extend(o);
        excluded += e;
    }
    Ok((overlaps, excluded))
}

/// Normalized histogram of [`coverage_overlaps`] over `bins` equal bins on `[0, 1]`.
pub fn coverage_histogram(
    gts: &GroundTruth,
    anchors: &impl AnchorSource,
    class: &ObjectClass,
    n_clusters: usize,
    bins: usize,
    area: &CropArea,
) -> Result<CoverageHistogram> {
    if bins == 0 {
        return Err(Error::Argument("histogram needs at least one bin".into()));
    }
    let (overlaps, excluded) = coverage_overlaps(gts, anchors, class, area)?;
    let mut counts = vec![0usize; bins];
    for &v in &overlaps {
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = overlaps.len();
    let empty = total == 0;
    let norm = |c: usize| if empty { 0.0 } else { c as f64 / total as f64 };
    Ok(CoverageHistogram {
        class_name: class.clone(),
        n_clusters,
        bin_edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
        normalized_counts: counts.iter().map(|&c| norm(c)).collect(),
        mean_overlap: (!empty).then(|| overlaps.iter().sum::<f64>() / total as f64),
        frac_above: COVERAGE_THRESHOLDS
            .iter()
            .map(|&t| ThresholdFraction {
                threshold: t,
                fraction: norm(overlaps.iter().filter(|&&v| v >= t).count()),
            })
            .collect(),
        evaluated: total,
        excluded_outside: excluded,
        empty,
    })
}
