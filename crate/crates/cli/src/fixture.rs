//! Synthetic KITTI-format datasets for desk-scale runs.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cap_core::kitti_io::{
    write_calib_file, write_label_file, write_point_cloud, BBox2D, CalibrationSet, Dimensions, Frame,
    ObjectClass, ObjectLabel, Point, PointCloud,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

const IMAGE_W: f64 = 1242.0;
const IMAGE_H: f64 = 375.0;
const SLOT: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    /// `jitter` is the standard deviation.
    Normal,
    /// `jitter` is the half-width.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeMode {
    /// `(L, H, W)` in meters.
    pub mean: [f64; 3],
    #[serde(default = "default_jitter")]
    pub jitter: [f64; 3],
    #[serde(default = "one")]
    pub weight: f64,
}

fn default_jitter() -> [f64; 3] {
    [0.05; 3]
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: ObjectClass,
    pub per_frame: usize,
    pub modes: Vec<SizeMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub frames: usize,
    pub seed: u64,
    pub noise: Noise,
    pub classes: Vec<ClassSpec>,
    /// Moves object centers onto the centers of a grid with this spacing.
    pub snap_stride: Option<f64>,
    pub snap_origin: [f64; 2],
    /// Restricts `rotation_y` to `{0, π/2}`.
    pub axis_aligned: bool,
    pub points_per_object: usize,
    pub ground_points: usize,
    pub ground_y: f64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        let mode = |l, h, w| SizeMode { mean: [l, h, w], jitter: default_jitter(), weight: 1.0 };
        Self {
            frames: 20,
            seed: 0,
            noise: Noise::Normal,
            classes: vec![
                ClassSpec { name: ObjectClass::Car, per_frame: 4, modes: vec![mode(3.9, 1.55, 1.6), mode(4.6, 1.75, 1.85)] },
                ClassSpec { name: ObjectClass::Pedestrian, per_frame: 3, modes: vec![mode(0.8, 1.75, 0.6)] },
                ClassSpec { name: ObjectClass::Cyclist, per_frame: 2, modes: vec![mode(1.75, 1.72, 0.6)] },
            ],
            snap_stride: None,
            snap_origin: [-40.0, 0.0],
            axis_aligned: false,
            points_per_object: 60,
            ground_points: 400,
            ground_y: 1.65,
        }
    }
}

impl FixtureSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.classes {
            if c.modes.is_empty() && c.per_frame > 0 {
                bail!("class {} needs at least one size mode", c.name);
            }
            for m in &c.modes {
                if m.mean.iter().any(|&v| !(v > 0.0)) || !(m.weight > 0.0) || m.jitter.iter().any(|&j| !(j >= 0.0)) {
                    bail!("class {}: size modes need positive means and weights and non-negative jitter", c.name);
                }
            }
        }
        if let Some(s) = self.snap_stride {
            if !(s > 0.0) {
                bail!("snap_stride must be positive");
            }
        }
        if self.objects_per_frame() > slots().len() {
            bail!("at most {} objects fit in one frame", slots().len());
        }
        Ok(())
    }

    fn objects_per_frame(&self) -> usize {
        self.classes.iter().map(|c| c.per_frame).sum()
    }
}

pub struct FixtureFrame {
    pub id: String,
    pub labels: Vec<ObjectLabel>,
    pub calib: CalibrationSet,
    pub velodyne: PointCloud,
}

/// KITTI-like calibration with an exact axis permutation between the
/// velodyne (x forward, y left, z up) and camera (x right, y down, z forward) frames.
pub fn fixture_calib() -> CalibrationSet {
    CalibrationSet {
        p2: [[721.5377, 0.0, 609.5593, 44.85728], [0.0, 721.5377, 172.854, 0.2163791], [0.0, 0.0, 1.0, 0.002745884]],
        r0_rect: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        tr_velo_to_cam: [[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, -0.08], [1.0, 0.0, 0.0, -0.27]],
    }
}

/// Inverse of [`fixture_calib`]'s velodyne-to-camera mapping.
fn rect_to_velo(p: [f64; 3]) -> [f64; 3] {
    let cam = [p[0], p[1] + 0.08, p[2] + 0.27];
    [cam[2], -cam[0], -cam[1]]
}

/// Object slot centers `(x, z)` that keep boxes apart and inside the image.
fn slots() -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for iz in 0..10 {
        for ix in 0..10 {
            let x = -27.0 + ix as f64 * SLOT;
            let z = 9.0 + iz as f64 * SLOT;
            if x.abs() + 3.0 <= 0.7 * z {
                out.push([x, z]);
            }
        }
    }
    out
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a < -PI {
        a = -PI;
    }
    a
}

fn corners(location: [f64; 3], dims: [f64; 3], ry: f64) -> Vec<[f64; 3]> {
    let [l, h, w] = dims;
    let (s, c) = ry.sin_cos();
    let mut out = Vec::with_capacity(8);
    for (dx, dz) in [(0.5, 0.5), (0.5, -0.5), (-0.5, 0.5), (-0.5, -0.5)] {
        let (u, v) = (dx * l, dz * w);
        let x = location[0] + c * u + s * v;
        let z = location[2] - s * u + c * v;
        for dy in [0.0, -h] {
            out.push([x, location[1] + dy, z]);
        }
    }
    out
}

/// Image-plane box of the projected corners, clipped to the image, plus
/// the fraction of the unclipped box area that falls outside.
fn project_bbox(calib: &CalibrationSet, pts: &[[f64; 3]]) -> (BBox2D, f64) {
    let p = &calib.p2;
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for q in pts {
        let h = [q[0], q[1], q[2], 1.0];
        let row = |i: usize| (0..4).map(|k| p[i][k] * h[k]).sum::<f64>();
        let (u, v, d) = (row(0), row(1), row(2));
        u0 = u0.min(u / d);
        u1 = u1.max(u / d);
        v0 = v0.min(v / d);
        v1 = v1.max(v / d);
    }
    let full = (u1 - u0) * (v1 - v0);
    let b = BBox2D {
        left: u0.clamp(0.0, IMAGE_W - 1.0),
        top: v0.clamp(0.0, IMAGE_H - 1.0),
        right: u1.clamp(0.0, IMAGE_W - 1.0),
        bottom: v1.clamp(0.0, IMAGE_H - 1.0),
    };
    let kept = (b.right - b.left) * (b.bottom - b.top);
    (b, (1.0 - kept / full).clamp(0.0, 1.0))
}

fn round_to(v: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

fn sample_size(rng: &mut ChaCha8Rng, modes: &[SizeMode], noise: Noise) -> Result<[f64; 3]> {
    let total: f64 = modes.iter().map(|m| m.weight).sum();
    let mut pick = rng.random_range(0.0..total);
    let mode = modes
        .iter()
        .find(|m| {
            pick -= m.weight;
            pick < 0.0
        })
        .unwrap_or(&modes[modes.len() - 1]);
    let mut out = [0.0; 3];
    for d in 0..3 {
        let j = mode.jitter[d];
        let delta = match noise {
            _ if j == 0.0 => 0.0,
            Noise::Normal => Normal::new(0.0, j)?.sample(rng),
            Noise::Uniform => rng.random_range(-j..=j),
        };
        out[d] = round_to((mode.mean[d] + delta).max(0.1), 2);
    }
    Ok(out)
}

fn snap(v: f64, origin: f64, stride: f64) -> f64 {
    origin + (((v - origin) / stride).floor() + 0.5) * stride
}

pub fn generate(spec: &FixtureSpec) -> Result<Vec<FixtureFrame>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let calib = fixture_calib();
    let all_slots = slots();
    let mut frames = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let mut slot_order: Vec<usize> = (0..all_slots.len()).collect();
        slot_order.shuffle(&mut rng);
        let mut next_slot = slot_order.into_iter();
        let mut labels = Vec::new();
        let mut points = Vec::new();
        for class in &spec.classes {
            for _ in 0..class.per_frame {
                let [sx, sz] = all_slots[next_slot.next().expect("slot count validated")];
                let dims = sample_size(&mut rng, &class.modes, spec.noise)?;
                let mut x = sx + rng.random_range(-1.0..1.0);
                let mut z = sz + rng.random_range(-1.0..1.0);
                if let Some(s) = spec.snap_stride {
                    x = snap(x, spec.snap_origin[0], s);
                    z = snap(z, spec.snap_origin[1], s);
                }
                let (x, z) = (round_to(x, 2), round_to(z, 2));
                let ry = if spec.axis_aligned {
                    if rng.random_bool(0.5) { 0.0 } else { FRAC_PI_2 }
                } else {
                    round_to(rng.random_range(-PI..PI), 2)
                };
                let location = [x, spec.ground_y, z];
                let (bbox2d, truncation) = project_bbox(&calib, &corners(location, dims, ry));
                labels.push(ObjectLabel {
                    class_name: class.name.clone(),
                    truncation: round_to(truncation, 2),
                    occlusion: 0,
                    alpha: round_to(wrap_angle(ry - x.atan2(z)), 2),
                    bbox2d: BBox2D {
                        left: round_to(bbox2d.left, 2),
                        top: round_to(bbox2d.top, 2),
                        right: round_to(bbox2d.right, 2),
                        bottom: round_to(bbox2d.bottom, 2),
                    },
                    dims: Dimensions { height: dims[1], width: dims[2], length: dims[0] },
                    location,
                    rotation_y: ry,
                    score: None,
                });
                let (s, c) = ry.sin_cos();
                for _ in 0..spec.points_per_object {
                    let u = rng.random_range(-0.5..0.5) * dims[0];
                    let v = rng.random_range(-0.5..0.5) * dims[2];
                    let up = rng.random_range(0.0..1.0) * dims[1];
                    points.push(rect_to_velo([x + c * u + s * v, spec.ground_y - up, z - s * u + c * v]));
                }
            }
        }
        for _ in 0..spec.ground_points {
            points.push(rect_to_velo([rng.random_range(-40.0..40.0), spec.ground_y, rng.random_range(0.0..80.0)]));
        }
        let velodyne = PointCloud::new(
            points
                .into_iter()
                .map(|[x, y, z]| Point { x, y, z, reflectance: 0.5 })
                .collect(),
            Frame::Velodyne,
        )?;
        frames.push(FixtureFrame { id: format!("{f:06}"), labels, calib: calib.clone(), velodyne });
    }
    Ok(frames)
}

/// Writes `label_2/`, `calib/` and `velodyne/` files under `root`.
pub fn write_dataset(frames: &[FixtureFrame], root: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for dir in ["label_2", "calib", "velodyne"] {
        std::fs::create_dir_all(root.join(dir)).with_context(|| format!("creating {}", root.join(dir).display()))?;
    }
    for f in frames {
        let files: [(PathBuf, Vec<u8>); 3] = [
            (root.join("label_2").join(format!("{}.txt", f.id)), write_label_file(&f.labels).into_bytes()),
            (root.join("calib").join(format!("{}.txt", f.id)), write_calib_file(&f.calib).into_bytes()),
            (root.join("velodyne").join(format!("{}.bin", f.id)), write_point_cloud(&f.velodyne)),
        ];
        for (path, bytes) in files {
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
    }
    Ok(written)
}
