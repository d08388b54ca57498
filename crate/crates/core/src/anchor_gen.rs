//! Dense anchor layout over the BEV crop area.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::bev::CropArea;
use crate::error::{Error, Result};
use crate::format::sig6;
use crate::geometry::{Box3D, OrientedBox2D};
use crate::kitti_io::{Frame, ObjectClass, PointCloud};

/// Anchor dimensions `(L, H, W)` in meters.
pub type AnchorSize = [f64; 3];

pub const ANCHOR_YAWS: [f64; 2] = [0.0, FRAC_PI_2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub x: f64,
    pub z: f64,
    /// Camera-frame y of the anchor's bottom face.
    pub ground_y: f64,
    pub size: AnchorSize,
    pub yaw: f64,
    pub class_name: ObjectClass,
    pub cluster_index: usize,
}

impl Anchor {
    pub fn footprint(&self) -> OrientedBox2D<f64> {
        OrientedBox2D::new([self.x, self.z], self.size[0], self.size[2], -self.yaw)
    }

    pub fn to_box3d(&self) -> Box3D<f64> {
        Box3D::from_kitti([self.x, self.ground_y, self.z], self.size[0], self.size[1], self.size[2], self.yaw)
    }

    /// Half extents of the footprint along x and z.
    pub fn half_extents(&self) -> (f64, f64) {
        let (l, w) = (self.size[0] * 0.5, self.size[2] * 0.5);
        if self.yaw == 0.0 {
            (l, w)
        } else {
            (w, l)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorConfig {
    pub stride: f64,
    pub area: CropArea,
    pub ground_plane_y: f64,
    pub filter_empty: bool,
    /// Cell size of the occupancy grid used by empty-anchor filtering.
    pub occupancy_resolution: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            stride: 0.5,
            area: CropArea::default(),
            ground_plane_y: 1.65,
            filter_empty: false,
            occupancy_resolution: 0.1,
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        let min_extent = self.area.x_extent().min(self.area.z_extent());
        if !(min_extent > 0.0) {
            return Err(Error::Argument("anchor area has no extent".into()));
        }
        if !(self.stride > 0.0 && self.stride <= min_extent) {
            return Err(Error::Argument(format!(
                "stride {} must be in (0, {min_extent}]",
                self.stride
            )));
        }
        if !(self.occupancy_resolution > 0.0) {
            return Err(Error::Argument("occupancy_resolution must be positive".into()));
        }
        Ok(())
    }

    /// Grid locations along x and z.
    pub fn locations(&self) -> (usize, usize) {
        let count = |extent: f64| (extent / self.stride + 1e-9).floor() as usize;
        (count(self.area.x_extent()), count(self.area.z_extent()))
    }

    pub fn expected_count(&self, sizes: usize) -> usize {
        let (nx, nz) = self.locations();
        nx * nz * sizes * ANCHOR_YAWS.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub anchors: Vec<Anchor>,
    pub frame_id: Option<String>,
    pub counts_by_cluster: BTreeMap<usize, usize>,
}

impl AnchorSet {
    fn from_anchors(anchors: Vec<Anchor>, frame_id: Option<String>) -> Self {
        let mut counts_by_cluster = BTreeMap::new();
        for a in &anchors {
            *counts_by_cluster.entry(a.cluster_index).or_insert(0) += 1;
        }
        Self {
            anchors,
            frame_id,
            counts_by_cluster,
        }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn footprints(&self) -> Vec<OrientedBox2D<f64>> {
        self.anchors.iter().map(Anchor::footprint).collect()
    }

    /// CSV with header `x,z,y,l,h,w,yaw,class,cluster`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,z,y,l,h,w,yaw,class,cluster\n");
        for a in &self.anchors {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                sig6(a.x),
                sig6(a.z),
                sig6(a.ground_y),
                sig6(a.size[0]),
                sig6(a.size[1]),
                sig6(a.size[2]),
                sig6(a.yaw),
                a.class_name,
                a.cluster_index
            ));
        }
        s
    }
}

/// Anchors at every grid cell center for each size and both yaws, ordered
/// z-major, then x, then size index, then yaw.
pub fn generate_anchors(class: &ObjectClass, sizes: &[AnchorSize], cfg: &AnchorConfig) -> Result<AnchorSet> {
    if sizes.is_empty() {
        return Err(Error::Argument("at least one anchor size is required".into()));
    }
    if let Some(s) = sizes.iter().find(|s| s.iter().any(|&v| !(v > 0.0))) {
        return Err(Error::Argument(format!("anchor size {s:?} must be positive")));
    }
    cfg.validate()?;
    let (nx, nz) = cfg.locations();
    let mut anchors = Vec::with_capacity(cfg.expected_count(sizes.len()));
    for j in 0..nz {
        let z = cfg.area.z_range.0 + (j as f64 + 0.5) * cfg.stride;
        for i in 0..nx {
            let x = cfg.area.x_range.0 + (i as f64 + 0.5) * cfg.stride;
            for (k, size) in sizes.iter().enumerate() {
                for yaw in ANCHOR_YAWS {
                    anchors.push(Anchor {
                        x,
                        z,
                        ground_y: cfg.ground_plane_y,
                        size: *size,
                        yaw,
                        class_name: class.clone(),
                        cluster_index: k,
                    });
                }
            }
        }
    }
    Ok(AnchorSet::from_anchors(anchors, None))
}

/// Point buckets on a regular BEV grid with a prefix-sum count table.
struct Occupancy {
    x0: f64,
    z0: f64,
    res: f64,
    cols: usize,
    rows: usize,
    /// `(rows + 1) × (cols + 1)` summed-area table of point counts.
    integral: Vec<u32>,
    /// CSR layout: `starts[cell]..starts[cell + 1]` indexes `coords`.
    starts: Vec<usize>,
    coords: Vec<(f64, f64)>,
}

impl Occupancy {
    fn build(points: &[(f64, f64)], area: &CropArea, res: f64) -> Self {
        let cols = (area.x_extent() / res).ceil().max(1.0) as usize;
        let rows = (area.z_extent() / res).ceil().max(1.0) as usize;
        let (x0, z0) = (area.x_range.0, area.z_range.0);
        let cell_of = |x: f64, z: f64| -> Option<usize> {
            let c = ((x - x0) / res).floor();
            let r = ((z - z0) / res).floor();
            if c < 0.0 || r < 0.0 || c >= cols as f64 || r >= rows as f64 {
                None
            } else {
                Some(r as usize * cols + c as usize)
            }
        };
        let mut counts = vec![0usize; rows * cols];
        let cells: Vec<Option<usize>> = points.iter().map(|&(x, z)| cell_of(x, z)).collect();
        for c in cells.iter().flatten() {
            counts[*c] += 1;
        }
        let mut starts = vec![0usize; rows * cols + 1];
        for i in 0..rows * cols {
            starts[i + 1] = starts[i] + counts[i];
        }
        let mut fill = starts.clone();
        let mut coords = vec![(0.0, 0.0); starts[rows * cols]];
        for (p, c) in points.iter().zip(&cells) {
            if let Some(c) = c {
                coords[fill[*c]] = *p;
                fill[*c] += 1;
            }
        }
        let w = cols + 1;
        let mut integral = vec![0u32; (rows + 1) * w];
        for r in 0..rows {
            for c in 0..cols {
                integral[(r + 1) * w + c + 1] = counts[r * cols + c] as u32 + integral[r * w + c + 1]
                    + integral[(r + 1) * w + c]
                    - integral[r * w + c];
            }
        }
        Self {
            x0,
            z0,
            res,
            cols,
            rows,
            integral,
            starts,
            coords,
        }
    }

    /// Points in cells `[r0, r1) × [c0, c1)`.
    fn block_count(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> u32 {
        if r0 >= r1 || c0 >= c1 {
            return 0;
        }
        let w = self.cols + 1;
        self.integral[r1 * w + c1] + self.integral[r0 * w + c0] - self.integral[r0 * w + c1] - self.integral[r1 * w + c0]
    }

    /// Whether any point lies in the closed rectangle `[xa, xb] × [za, zb]`.
    fn any_in(&self, xa: f64, xb: f64, za: f64, zb: f64) -> bool {
        let clamp_c = |v: f64| v.max(0.0).min(self.cols as f64) as usize;
        let clamp_r = |v: f64| v.max(0.0).min(self.rows as f64) as usize;
        // every cell touching the rectangle
        let (c0, c1) = (clamp_c(((xa - self.x0) / self.res).floor()), clamp_c(((xb - self.x0) / self.res).floor() + 1.0));
        let (r0, r1) = (clamp_r(((za - self.z0) / self.res).floor()), clamp_r(((zb - self.z0) / self.res).floor() + 1.0));
        if self.block_count(r0, r1, c0, c1) == 0 {
            return false;
        }
        // cells strictly inside the rectangle
        let (ic0, ic1) = (clamp_c(((xa - self.x0) / self.res).ceil() + 1.0), clamp_c(((xb - self.x0) / self.res).floor() - 1.0));
        let (ir0, ir1) = (clamp_r(((za - self.z0) / self.res).ceil() + 1.0), clamp_r(((zb - self.z0) / self.res).floor() - 1.0));
        if self.block_count(ir0, ir1, ic0, ic1) > 0 {
            return true;
        }
        for r in r0..r1 {
            for c in c0..c1 {
                let cell = r * self.cols + c;
                if self.coords[self.starts[cell]..self.starts[cell + 1]]
                    .iter()
                    .any(|&(x, z)| x >= xa && x <= xb && z >= za && z <= zb)
                {
                    return true;
                }
            }
        }
        false
    }
}

/// Keeps anchors whose footprint rectangle contains at least one point.
pub fn filter_empty_anchors(set: &AnchorSet, pc: &PointCloud, cfg: &AnchorConfig) -> Result<AnchorSet> {
    pc.require_frame(Frame::RectCamera, "filter_empty_anchors")?;
    let pts: Vec<(f64, f64)> = pc.points.iter().map(|p| (p.x, p.z)).collect();
    let mut area = cfg.area;
    // anchors near the border reach past the area by up to half their size
    let reach = set
        .anchors
        .iter()
        .map(|a| a.size[0].max(a.size[2]))
        .fold(0.0, f64::max);
    area.x_range = (area.x_range.0 - reach, area.x_range.1 + reach);
    area.z_range = (area.z_range.0 - reach, area.z_range.1 + reach);
    let occ = Occupancy::build(&pts, &area, cfg.occupancy_resolution);
    let kept = set
        .anchors
        .iter()
        .filter(|a| {
            let (hx, hz) = a.half_extents();
            occ.any_in(a.x - hx, a.x + hx, a.z - hz, a.z + hz)
        })
        .cloned()
        .collect();
    Ok(AnchorSet::from_anchors(kept, set.frame_id.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::box_corners;
    use crate::kitti_io::Point;

    fn ped() -> ObjectClass {
        ObjectClass::Pedestrian
    }

    fn cloud(pts: &[(f64, f64)]) -> PointCloud {
        PointCloud::new(
            pts.iter().map(|&(x, z)| Point { x, y: 0.0, z, reflectance: 0.0 }).collect(),
            Frame::RectCamera,
        )
        .unwrap()
    }

    #[test]
    fn default_counts() {
        let cfg = AnchorConfig::default();
        let two = generate_anchors(&ped(), &[[0.8, 1.7, 0.6], [1.2, 1.8, 0.7]], &cfg).unwrap();
        assert_eq!(two.len(), 102_400);
        assert_eq!(two.counts_by_cluster[&0], 51_200);
        let one = generate_anchors(&ped(), &[[0.8, 1.7, 0.6]], &cfg).unwrap();
        assert_eq!(one.len(), 51_200);
    }

    #[test]
    fn small_area() {
        let cfg = AnchorConfig {
            area: CropArea { x_range: (0.0, 1.0), z_range: (0.0, 1.0) },
            ..Default::default()
        };
        let set = generate_anchors(&ped(), &[[0.4, 1.0, 0.3]], &cfg).unwrap();
        assert_eq!(set.len(), 8);
        assert_eq!((set.anchors[0].x, set.anchors[0].z), (0.25, 0.25));
        assert_eq!(set.anchors[1].yaw, FRAC_PI_2);
        assert_eq!((set.anchors[2].x, set.anchors[2].z), (0.75, 0.25));
        assert_eq!((set.anchors[4].x, set.anchors[4].z), (0.25, 0.75));
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = AnchorConfig::default();
        assert!(generate_anchors(&ped(), &[], &cfg).is_err());
        assert!(generate_anchors(&ped(), &[[0.0, 1.0, 1.0]], &cfg).is_err());
        let wide = AnchorConfig { stride: 100.0, ..cfg };
        assert!(generate_anchors(&ped(), &[[1.0; 3]], &wide).is_err());
    }

    #[test]
    fn yaw_twin_swaps_footprint_extents() {
        let cfg = AnchorConfig::default();
        let set = generate_anchors(&ped(), &[[1.2, 1.8, 0.5]], &cfg).unwrap();
        let (a, b) = (&set.anchors[0], &set.anchors[1]);
        let (ha, hb) = (a.half_extents(), b.half_extents());
        assert_eq!((ha.0, ha.1), (hb.1, hb.0));
        for (anchor, (hx, hz)) in [(a, ha), (b, hb)] {
            for c in box_corners(&anchor.footprint()) {
                assert!(((c[0] - anchor.x).abs() - hx).abs() < 1e-12);
                assert!(((c[1] - anchor.z).abs() - hz).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn filter_examples() {
        let cfg = AnchorConfig {
            area: CropArea { x_range: (0.0, 2.0), z_range: (0.0, 2.0) },
            stride: 1.0,
            ..Default::default()
        };
        let set = generate_anchors(&ped(), &[[0.5, 1.0, 0.5]], &cfg).unwrap();
        assert!(filter_empty_anchors(&set, &cloud(&[]), &cfg).unwrap().is_empty());
        let kept = filter_empty_anchors(&set, &cloud(&[(1.6, 0.4)]), &cfg).unwrap();
        assert_eq!(kept.len(), 2);
        assert!(kept.anchors.iter().all(|a| a.x == 1.5 && a.z == 0.5));
    }

    #[test]
    fn csv_header_and_rows() {
        let cfg = AnchorConfig {
            area: CropArea { x_range: (0.0, 1.0), z_range: (0.0, 0.5) },
            ..Default::default()
        };
        let set = generate_anchors(&ped(), &[[0.8, 1.7, 0.6]], &cfg).unwrap();
        let csv = set.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x,z,y,l,h,w,yaw,class,cluster");
        assert_eq!(lines[1], "0.25,0.25,1.65,0.8,1.7,0.6,0,Pedestrian,0");
        assert_eq!(lines[2], "0.25,0.25,1.65,0.8,1.7,0.6,1.5708,Pedestrian,0");
        assert_eq!(lines.len(), 5);
    }
}
