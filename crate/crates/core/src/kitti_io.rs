//! KITTI object-benchmark file formats: labels, calibration, velodyne scans
//! and split lists.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectClass {
    Car,
    Pedestrian,
    Cyclist,
    Other(String),
}

impl ObjectClass {
    /// Car, Pedestrian and Cyclist are the classes the benchmark evaluates.
    pub fn is_evaluated(&self) -> bool {
        !matches!(self, ObjectClass::Other(_))
    }

    pub fn as_str(&self) -> &str {
        match self {
            ObjectClass::Car => "Car",
            ObjectClass::Pedestrian => "Pedestrian",
            ObjectClass::Cyclist => "Cyclist",
            ObjectClass::Other(s) => s,
        }
    }
}

impl FromStr for ObjectClass {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "Car" => ObjectClass::Car,
            "Pedestrian" => ObjectClass::Pedestrian,
            "Cyclist" => ObjectClass::Cyclist,
            other => ObjectClass::Other(other.to_string()),
        })
    }
}

impl From<&str> for ObjectClass {
    fn from(s: &str) -> Self {
        s.parse().expect("infallible")
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ObjectClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ObjectClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(ObjectClass::from(s.as_str()))
    }
}

/// 2D image box in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox2D {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl BBox2D {
    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }
}

/// Box dimensions in KITTI file order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub height: f64,
    pub width: f64,
    pub length: f64,
}

/// One line of a KITTI label (or detection) file.
///
/// `location` is the bottom-center of the box in the rectified camera frame
/// (x right, y down, z forward).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectLabel {
    pub class_name: ObjectClass,
    pub truncation: f64,
    pub occlusion: i8,
    pub alpha: f64,
    pub bbox2d: BBox2D,
    pub dims: Dimensions,
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl ObjectLabel {
    fn validate(&self) -> std::result::Result<(), String> {
        let b = &self.bbox2d;
        if !(b.right > b.left && b.bottom > b.top) {
            return Err(format!(
                "degenerate 2D box ({}, {}, {}, {})",
                b.left, b.top, b.right, b.bottom
            ));
        }
        if self.class_name.is_evaluated() {
            let d = &self.dims;
            if !(d.height > 0.0 && d.width > 0.0 && d.length > 0.0) {
                return Err(format!(
                    "non-positive dimensions ({}, {}, {})",
                    d.height, d.width, d.length
                ));
            }
            let pi = std::f64::consts::PI;
            if !(-pi..=pi).contains(&self.rotation_y) {
                return Err(format!("rotation_y {} outside [-pi, pi]", self.rotation_y));
            }
            if !(0.0..=1.0).contains(&self.truncation) {
                return Err(format!("truncation {} outside [0, 1]", self.truncation));
            }
            if !(0..=3).contains(&self.occlusion) {
                return Err(format!("occlusion {} outside 0..=3", self.occlusion));
            }
        }
        Ok(())
    }
}

/// Parses a label file. Blank lines are skipped; `DontCare` rows are kept.
pub fn parse_label_file(text: &str) -> Result<Vec<ObjectLabel>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_label_line(line).map_err(|msg| Error::Parse { line: line_no, msg })?);
    }
    Ok(out)
}

fn parse_label_line(line: &str) -> std::result::Result<ObjectLabel, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 15 && fields.len() != 16 {
        return Err(format!("expected 15 or 16 fields, found {}", fields.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        fields[i]
            .parse::<f64>()
            .map_err(|_| format!("field {} is not numeric: {:?}", i + 1, fields[i]))
    };
    let occlusion_raw = num(2)?;
    if occlusion_raw.fract() != 0.0 {
        return Err(format!("occlusion must be an integer, found {}", fields[2]));
    }
    let label = ObjectLabel {
        class_name: ObjectClass::from(fields[0]),
        truncation: num(1)?,
        occlusion: occlusion_raw as i8,
        alpha: num(3)?,
        bbox2d: BBox2D {
            left: num(4)?,
            top: num(5)?,
            right: num(6)?,
            bottom: num(7)?,
        },
        dims: Dimensions {
            height: num(8)?,
            width: num(9)?,
            length: num(10)?,
        },
        location: [num(11)?, num(12)?, num(13)?],
        rotation_y: num(14)?,
        score: if fields.len() == 16 { Some(num(15)?) } else { None },
    };
    label.validate()?;
    Ok(label)
}

/// Serializes one label with round-trip-exact number formatting.
pub fn format_label_line(l: &ObjectLabel) -> String {
    let mut s = format!(
        "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
        l.class_name,
        l.truncation,
        l.occlusion,
        l.alpha,
        l.bbox2d.left,
        l.bbox2d.top,
        l.bbox2d.right,
        l.bbox2d.bottom,
        l.dims.height,
        l.dims.width,
        l.dims.length,
        l.location[0],
        l.location[1],
        l.location[2],
        l.rotation_y
    );
    if let Some(score) = l.score {
        s.push(' ');
        s.push_str(&score.to_string());
    }
    s
}

pub fn write_label_file(labels: &[ObjectLabel]) -> String {
    let mut s = String::new();
    for l in labels {
        s.push_str(&format_label_line(l));
        s.push('\n');
    }
    s
}

/// Camera/LIDAR calibration for one frame, matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub p2: [[f64; 4]; 3],
    pub r0_rect: [[f64; 3]; 3],
    pub tr_velo_to_cam: [[f64; 4]; 3],
}

const ORTHONORMAL_TOL: f64 = 1e-4;

impl CalibrationSet {
    /// `‖RᵀR − I‖_max` of the rectification rotation.
    pub fn r0_orthonormality_error(&self) -> f64 {
        let r = &self.r0_rect;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Maps a velodyne point into the rectified camera frame.
    pub fn velo_to_rect(&self, p: [f64; 3]) -> [f64; 3] {
        let t = &self.tr_velo_to_cam;
        let mut cam = [0.0; 3];
        for (i, c) in cam.iter_mut().enumerate() {
            *c = t[i][0] * p[0] + t[i][1] * p[1] + t[i][2] * p[2] + t[i][3];
        }
        let r = &self.r0_rect;
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = r[i][0] * cam[0] + r[i][1] * cam[1] + r[i][2] * cam[2];
        }
        out
    }
}

pub fn parse_calib_file(text: &str) -> Result<CalibrationSet> {
    let mut p2 = None;
    let mut r0 = None;
    let mut tr = None;
    for line in text.lines() {
        let Some((key, rest)) = line.split_once(':') else {
            continue;
        };
        let key = key.trim();
        let target = match key {
            "P2" => &mut p2,
            "R0_rect" => &mut r0,
            "Tr_velo_to_cam" => &mut tr,
            _ => continue,
        };
        let values = rest
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Format(format!("{key}: non-numeric value {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        *target = Some(values);
    }
    let take = |slot: Option<Vec<f64>>, key: &str, count: usize| -> Result<Vec<f64>> {
        let v = slot.ok_or_else(|| Error::MissingKey(key.to_string()))?;
        if v.len() != count {
            return Err(Error::Format(format!(
                "{key}: expected {count} values, found {}",
                v.len()
            )));
        }
        Ok(v)
    };
    let p2 = take(p2, "P2", 12)?;
    let r0 = take(r0, "R0_rect", 9)?;
    let tr = take(tr, "Tr_velo_to_cam", 12)?;
    let calib = CalibrationSet {
        p2: rows34(&p2),
        r0_rect: [
            [r0[0], r0[1], r0[2]],
            [r0[3], r0[4], r0[5]],
            [r0[6], r0[7], r0[8]],
        ],
        tr_velo_to_cam: rows34(&tr),
    };
    let err = calib.r0_orthonormality_error();
    if err > ORTHONORMAL_TOL {
        return Err(Error::Format(format!(
            "R0_rect is not orthonormal (max deviation {err:e})"
        )));
    }
    Ok(calib)
}

fn rows34(v: &[f64]) -> [[f64; 4]; 3] {
    [
        [v[0], v[1], v[2], v[3]],
        [v[4], v[5], v[6], v[7]],
        [v[8], v[9], v[10], v[11]],
    ]
}

pub fn write_calib_file(c: &CalibrationSet) -> String {
    let join = |vals: Vec<f64>| {
        vals.iter()
            .map(|v| format!("{v:e}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let flat34 = |m: &[[f64; 4]; 3]| m.iter().flatten().copied().collect::<Vec<_>>();
    let mut s = String::new();
    s.push_str(&format!("P2: {}\n", join(flat34(&c.p2))));
    s.push_str(&format!(
        "R0_rect: {}\n",
        join(c.r0_rect.iter().flatten().copied().collect())
    ));
    s.push_str(&format!("Tr_velo_to_cam: {}\n", join(flat34(&c.tr_velo_to_cam))));
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Velodyne,
    RectCamera,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub reflectance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame_tag: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, frame_tag: Frame) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::Format(format!("point {i} has non-finite coordinates")));
        }
        Ok(Self { points, frame_tag })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub(crate) fn require_frame(&self, frame: Frame, op: &str) -> Result<()> {
        if self.frame_tag != frame {
            return Err(Error::Contract(format!(
                "{op} expects a {frame:?} point cloud, got {:?}",
                self.frame_tag
            )));
        }
        Ok(())
    }
}

/// Decodes a velodyne `.bin` scan: packed little-endian `f32` quadruples.
pub fn read_point_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() % 16 != 0 {
        return Err(Error::Format(format!(
            "velodyne scan length {} is not a multiple of 16",
            bytes.len()
        )));
    }
    let points = bytes
        .chunks_exact(16)
        .map(|c| {
            let f = |k: usize| f32::from_le_bytes([c[k], c[k + 1], c[k + 2], c[k + 3]]) as f64;
            Point {
                x: f(0),
                y: f(4),
                z: f(8),
                reflectance: f(12),
            }
        })
        .collect();
    PointCloud::new(points, Frame::Velodyne)
}

pub fn write_point_cloud(pc: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(pc.len() * 16);
    for p in &pc.points {
        for v in [p.x, p.y, p.z, p.reflectance] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn transform_to_rect_camera(pc: &PointCloud, calib: &CalibrationSet) -> Result<PointCloud> {
    pc.require_frame(Frame::Velodyne, "transform_to_rect_camera")?;
    let points = pc
        .points
        .iter()
        .map(|p| {
            let [x, y, z] = calib.velo_to_rect([p.x, p.y, p.z]);
            Point {
                x,
                y,
                z,
                reflectance: p.reflectance,
            }
        })
        .collect();
    Ok(PointCloud {
        points,
        frame_tag: Frame::RectCamera,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    All,
}

/// A KITTI-layout directory plus the frames selected from it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDataset {
    pub root: PathBuf,
    pub frame_ids: Vec<String>,
    pub split: Split,
}

/// One frame ID per line; blank lines ignored.
pub fn parse_split_file(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

impl FrameDataset {
    pub fn new(root: impl Into<PathBuf>, mut frame_ids: Vec<String>, split: Split) -> Self {
        frame_ids.sort();
        frame_ids.dedup();
        Self {
            root: root.into(),
            frame_ids,
            split,
        }
    }

    /// Every frame with a label file under `<root>/label_2`.
    pub fn scan(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let dir = root.join("label_2");
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) == Some("txt") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        Ok(Self::new(root, ids, Split::All))
    }

    pub fn from_split_file(root: impl Into<PathBuf>, split_path: &Path, split: Split) -> Result<Self> {
        let text = fs::read_to_string(split_path).map_err(|e| Error::io(split_path, e))?;
        Ok(Self::new(root, parse_split_file(&text), split))
    }

    pub fn label_path(&self, frame: &str) -> PathBuf {
        self.root.join("label_2").join(format!("{frame}.txt"))
    }

    pub fn calib_path(&self, frame: &str) -> PathBuf {
        self.root.join("calib").join(format!("{frame}.txt"))
    }

    pub fn velodyne_path(&self, frame: &str) -> PathBuf {
        self.root.join("velodyne").join(format!("{frame}.bin"))
    }

    pub fn load_labels(&self, frame: &str) -> Result<Vec<ObjectLabel>> {
        let path = self.label_path(frame);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e).in_frame(frame))?;
        parse_label_file(&text).map_err(|e| e.in_frame(frame))
    }

    pub fn load_calib(&self, frame: &str) -> Result<CalibrationSet> {
        let path = self.calib_path(frame);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e).in_frame(frame))?;
        parse_calib_file(&text).map_err(|e| e.in_frame(frame))
    }

    /// Reads the frame's scan and maps it into the rectified camera frame.
    pub fn load_rect_points(&self, frame: &str) -> Result<PointCloud> {
        let path = self.velodyne_path(frame);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e).in_frame(frame))?;
        let pc = read_point_cloud(&bytes).map_err(|e| e.in_frame(frame))?;
        let calib = self.load_calib(frame)?;
        transform_to_rect_camera(&pc, &calib)
    }
}
