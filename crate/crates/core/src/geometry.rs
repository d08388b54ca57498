//! Rotated rectangles in the BEV plane and 3D boxes built on them.
//!
//! The plane coordinates are `(x, z)` of the rectified camera frame treated
//! as a right-handed 2D system; "counter-clockwise" means positive signed
//! area in that system. KITTI `rotation_y` turns about the downward y axis,
//! so a box with `rotation_y = r` has BEV yaw `-r` here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Point2<T> = [T; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox2D<T> {
    pub center: Point2<T>,
    /// Half length along the box's heading, half width across it.
    pub half_dims: [T; 2],
    pub yaw: T,
}

impl<T: Real> OrientedBox2D<T> {
    pub fn new(center: Point2<T>, length: T, width: T, yaw: T) -> Self {
        let half = T::lit(0.5);
        Self {
            center,
            half_dims: [length * half, width * half],
            yaw,
        }
    }

    pub fn area(&self) -> T {
        T::lit(4.0) * self.half_dims[0] * self.half_dims[1]
    }

    /// Radius of the circumscribed circle.
    pub fn bounding_radius(&self) -> T {
        self.half_dims[0].hypot(self.half_dims[1])
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn aabb(&self) -> (Point2<T>, Point2<T>) {
        let (s, c) = self.yaw.sin_cos();
        let ex = (c * self.half_dims[0]).abs() + (s * self.half_dims[1]).abs();
        let ez = (s * self.half_dims[0]).abs() + (c * self.half_dims[1]).abs();
        (
            [self.center[0] - ex, self.center[1] - ez],
            [self.center[0] + ex, self.center[1] + ez],
        )
    }

    pub fn translated(&self, d: Point2<T>) -> Self {
        Self {
            center: [self.center[0] + d[0], self.center[1] + d[1]],
            ..*self
        }
    }

    /// Rotates the box by `angle` about `pivot`.
    pub fn rotated_about(&self, pivot: Point2<T>, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let dx = self.center[0] - pivot[0];
        let dz = self.center[1] - pivot[1];
        Self {
            center: [pivot[0] + c * dx - s * dz, pivot[1] + s * dx + c * dz],
            half_dims: self.half_dims,
            yaw: self.yaw + angle,
        }
    }

    pub fn contains(&self, p: Point2<T>) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.center[0];
        let dz = p[1] - self.center[1];
        let along = c * dx + s * dz;
        let across = -s * dx + c * dz;
        along.abs() <= self.half_dims[0] && across.abs() <= self.half_dims[1]
    }
}

/// Corners of the rectangle in counter-clockwise order.
pub fn box_corners<T: Real>(b: &OrientedBox2D<T>) -> [Point2<T>; 4] {
    let (s, c) = b.yaw.sin_cos();
    let [hl, hw] = b.half_dims;
    let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
    local.map(|[u, v]| [b.center[0] + c * u - s * v, b.center[1] + s * u + c * v])
}

/// Shoelace signed area; positive for counter-clockwise vertex order.
pub fn signed_area<T: Real>(poly: &[Point2<T>]) -> T {
    let n = poly.len();
    if n < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc = acc + (a[0] * b[1] - b[0] * a[1]);
    }
    acc * T::lit(0.5)
}

fn cross<T: Real>(o: Point2<T>, a: Point2<T>, p: Point2<T>) -> T {
    (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0])
}

/// Clips `subject` against each half-plane of the convex counter-clockwise
/// polygon `clip` (Sutherland–Hodgman).
pub fn clip_convex<T: Real>(subject: &[Point2<T>], clip: &[Point2<T>]) -> Vec<Point2<T>> {
    let mut output: Vec<Point2<T>> = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        let input = std::mem::take(&mut output);
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let prev = input[(j + n - 1) % n];
            let d_cur = cross(a, b, cur);
            let d_prev = cross(a, b, prev);
            let cur_in = d_cur >= T::zero();
            let prev_in = d_prev >= T::zero();
            if cur_in != prev_in {
                let t = d_prev / (d_prev - d_cur);
                output.push([
                    prev[0] + t * (cur[0] - prev[0]),
                    prev[1] + t * (cur[1] - prev[1]),
                ]);
            }
            if cur_in {
                output.push(cur);
            }
        }
    }
    output
}

const SLIVER_AREA: f64 = 1e-12;

/// Area of the intersection of two convex counter-clockwise polygons.
pub fn polygon_intersection_area<T: Real>(a: &[Point2<T>], b: &[Point2<T>]) -> T {
    let clipped = clip_convex(a, b);
    let area = signed_area(&clipped).abs();
    if area < T::lit(SLIVER_AREA) {
        T::zero()
    } else {
        area
    }
}

pub fn box_intersection_area<T: Real>(a: &OrientedBox2D<T>, b: &OrientedBox2D<T>) -> T {
    let dx = a.center[0] - b.center[0];
    let dz = a.center[1] - b.center[1];
    let reach = a.bounding_radius() + b.bounding_radius();
    if dx * dx + dz * dz > reach * reach {
        return T::zero();
    }
    polygon_intersection_area(&box_corners(a), &box_corners(b))
}

pub fn iou_bev<T: Real>(a: &OrientedBox2D<T>, b: &OrientedBox2D<T>) -> T {
    let inter = box_intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).min(T::one()).max(T::zero())
}

/// Oriented 3D box: a BEV footprint extruded over `[y_bottom, y_bottom + height]`
/// of vertical height (`-y` in camera coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D<T> {
    pub footprint: OrientedBox2D<T>,
    pub y_bottom: T,
    pub height: T,
}

impl<T: Real> Box3D<T> {
    /// Builds a box from KITTI label conventions: `location` is the bottom
    /// center in camera coordinates and `(l, h, w)` are its dimensions.
    pub fn from_kitti(location: [T; 3], l: T, h: T, w: T, rotation_y: T) -> Self {
        Self {
            footprint: OrientedBox2D::new([location[0], location[2]], l, w, -rotation_y),
            y_bottom: -location[1],
            height: h,
        }
    }

    pub fn volume(&self) -> T {
        self.footprint.area() * self.height
    }

    pub fn vertical_overlap(&self, other: &Self) -> T {
        let lo = self.y_bottom.max(other.y_bottom);
        let hi = (self.y_bottom + self.height).min(other.y_bottom + other.height);
        (hi - lo).max(T::zero())
    }
}

pub fn iou_3d<T: Real>(a: &Box3D<T>, b: &Box3D<T>) -> T {
    let dz = a.vertical_overlap(b);
    if dz <= T::zero() {
        return T::zero();
    }
    let inter = box_intersection_area(&a.footprint, &b.footprint) * dz;
    let union = a.volume() + b.volume() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).min(T::one()).max(T::zero())
}

/// Largest single-anchor intersection with `gt` divided by the area of `gt`.
pub fn overlap_fraction<T: Real>(gt: &OrientedBox2D<T>, anchors: &[OrientedBox2D<T>]) -> Result<T> {
    if anchors.is_empty() {
        return Err(Error::Argument("overlap_fraction needs at least one anchor".into()));
    }
    let gt_area = gt.area();
    if !(gt_area > T::zero()) {
        return Err(Error::Argument("ground-truth footprint has zero area".into()));
    }
    Ok(max_intersection(gt, anchors.iter()) / gt_area)
}

/// Maximum of [`box_intersection_area`] over `anchors`; zero when none overlap.
pub fn max_intersection<'a, T: Real>(
    gt: &OrientedBox2D<T>,
    anchors: impl IntoIterator<Item = &'a OrientedBox2D<T>>,
) -> T {
    let corners = box_corners(gt);
    let (lo, hi) = gt.aabb();
    let mut best = T::zero();
    for a in anchors {
        let (alo, ahi) = a.aabb();
        if alo[0] >= hi[0] || ahi[0] <= lo[0] || alo[1] >= hi[1] || ahi[1] <= lo[1] {
            continue;
        }
        let area = polygon_intersection_area(&corners, &box_corners(a));
        if area > best {
            best = area;
        }
    }
    best
}
