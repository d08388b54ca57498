//! Birds-eye-view cropping and rasterization.
//!
//! Points live in the rectified camera frame; the BEV plane is spanned by
//! `x` (columns) and `z` (rows), and height is `-y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kitti_io::{Frame, PointCloud};
use crate::scalar::Real;

/// Rectangular region of the BEV plane, half-open in both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropArea {
    pub x_range: (f64, f64),
    pub z_range: (f64, f64),
}

impl CropArea {
    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.x_range.0 && x < self.x_range.1 && z >= self.z_range.0 && z < self.z_range.1
    }

    pub fn x_extent(&self) -> f64 {
        self.x_range.1 - self.x_range.0
    }

    pub fn z_extent(&self) -> f64 {
        self.z_range.1 - self.z_range.0
    }
}

impl Default for CropArea {
    fn default() -> Self {
        Self {
            x_range: (-40.0, 40.0),
            z_range: (0.0, 80.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BevConfig {
    pub x_range: (f64, f64),
    pub z_range: (f64, f64),
    /// Meters per cell.
    pub resolution: f64,
    pub num_slices: usize,
    /// Vertical extent covered by the slices, in meters of height (`-y`).
    pub height_range: (f64, f64),
    pub density_norm: f64,
}

impl Default for BevConfig {
    fn default() -> Self {
        Self {
            x_range: (-40.0, 40.0),
            z_range: (0.0, 80.0),
            resolution: 0.1,
            num_slices: 5,
            height_range: (0.0, 2.5),
            density_norm: 16.0,
        }
    }
}

impl BevConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("x_range", self.x_range),
            ("z_range", self.z_range),
            ("height_range", self.height_range),
        ] {
            if !(hi > lo) {
                return Err(Error::Argument(format!("{name}: max {hi} must exceed min {lo}")));
            }
        }
        if !(self.resolution > 0.0) {
            return Err(Error::Argument(format!("resolution {} must be positive", self.resolution)));
        }
        if self.num_slices == 0 {
            return Err(Error::Argument("num_slices must be at least 1".into()));
        }
        if !(self.density_norm > 1.0) {
            return Err(Error::Argument(format!("density_norm {} must exceed 1", self.density_norm)));
        }
        let (rows, cols) = self.grid_dims();
        if rows == 0 || cols == 0 {
            return Err(Error::Argument("grid has zero cells".into()));
        }
        Ok(())
    }

    /// `(rows, cols)`: rows along z, columns along x.
    pub fn grid_dims(&self) -> (usize, usize) {
        let rows = ((self.z_range.1 - self.z_range.0) / self.resolution).round();
        let cols = ((self.x_range.1 - self.x_range.0) / self.resolution).round();
        (rows.max(0.0) as usize, cols.max(0.0) as usize)
    }

    pub fn crop(&self) -> CropArea {
        CropArea {
            x_range: self.x_range,
            z_range: self.z_range,
        }
    }

    fn slice_thickness(&self) -> f64 {
        (self.height_range.1 - self.height_range.0) / self.num_slices as f64
    }

    /// Cell of a point already known to be inside the crop.
    fn cell_of(&self, x: f64, z: f64) -> Option<(usize, usize)> {
        let (rows, cols) = self.grid_dims();
        if !self.crop().contains(x, z) {
            return None;
        }
        let r = (((z - self.z_range.0) / self.resolution).floor() as usize).min(rows - 1);
        let c = (((x - self.x_range.0) / self.resolution).floor() as usize).min(cols - 1);
        Some((r, c))
    }

    fn slice_of(&self, height: f64) -> Option<usize> {
        let (lo, hi) = self.height_range;
        if !(height >= lo && height < hi) {
            return None;
        }
        let s = ((height - lo) / self.slice_thickness()).floor() as usize;
        Some(s.min(self.num_slices - 1))
    }
}

/// Keeps points with `x ∈ [x_min, x_max)` and `z ∈ [z_min, z_max)`, in order.
pub fn crop_points(pc: &PointCloud, cfg: &BevConfig) -> Result<PointCloud> {
    pc.require_frame(Frame::RectCamera, "crop_points")?;
    let area = cfg.crop();
    Ok(PointCloud {
        points: pc.points.iter().copied().filter(|p| area.contains(p.x, p.z)).collect(),
        frame_tag: Frame::RectCamera,
    })
}

/// `min(1, ln(count + 1) / ln(n0))`.
pub fn density_encode<T: Real>(count: u64, n0: T) -> T {
    let n = T::from_u64(count).expect("count representable");
    ((n + T::one()).ln() / n0.ln()).min(T::one())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevMap {
    pub rows: usize,
    pub cols: usize,
    pub slices: usize,
    /// `(row, col, slice)` max height above the slice bottom; 0 when empty.
    pub height_slices: Vec<f32>,
    /// `(row, col)` encoded density in `[0, 1]`.
    pub density: Vec<f32>,
    /// `(row, col)` raw point counts, including points outside the height range.
    pub counts: Vec<u32>,
    pub config: BevConfig,
}

impl BevMap {
    pub fn height(&self, row: usize, col: usize, slice: usize) -> f32 {
        self.height_slices[(row * self.cols + col) * self.slices + slice]
    }

    pub fn density_at(&self, row: usize, col: usize) -> f32 {
        self.density[row * self.cols + col]
    }

    pub fn count_at(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.cols + col]
    }

    pub fn channels(&self) -> usize {
        self.slices + 1
    }

    /// Binary export: 16-byte header `(H, W, C+1, resolution·1000)` as LE
    /// `i32`, then LE `f32` values in `(row, col, channel)` order with the
    /// density channel last.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.rows * self.cols * self.channels() * 4);
        let header = [
            self.rows as i32,
            self.cols as i32,
            self.channels() as i32,
            (self.config.resolution * 1000.0).round() as i32,
        ];
        for h in header {
            out.extend_from_slice(&h.to_le_bytes());
        }
        for cell in 0..self.rows * self.cols {
            for s in 0..self.slices {
                out.extend_from_slice(&self.height_slices[cell * self.slices + s].to_le_bytes());
            }
            out.extend_from_slice(&self.density[cell].to_le_bytes());
        }
        out
    }

    /// Decodes the tensor written by [`BevMap::to_bytes`]. Counts are not
    /// stored in the export and come back as zero.
    pub fn tensor_from_bytes(bytes: &[u8]) -> Result<(usize, usize, usize, f64, Vec<f32>)> {
        if bytes.len() < 16 {
            return Err(Error::Format("BEV export shorter than its header".into()));
        }
        let word = |k: usize| i32::from_le_bytes([bytes[k], bytes[k + 1], bytes[k + 2], bytes[k + 3]]);
        let (h, w, c) = (word(0), word(4), word(8));
        if h <= 0 || w <= 0 || c <= 0 {
            return Err(Error::Format(format!("invalid BEV header {h}x{w}x{c}")));
        }
        let (h, w, c) = (h as usize, w as usize, c as usize);
        let body = &bytes[16..];
        if body.len() != h * w * c * 4 {
            return Err(Error::Format(format!(
                "BEV body has {} bytes, expected {}",
                body.len(),
                h * w * c * 4
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok((h, w, c, word(12) as f64 / 1000.0, values))
    }
}

/// Per-cell accumulator: raw max height per slice and total count.
#[derive(Clone)]
struct PartialGrid {
    max_height: Vec<f64>,
    counts: Vec<u32>,
}

impl PartialGrid {
    fn new(cells: usize, slices: usize) -> Self {
        Self {
            max_height: vec![f64::NEG_INFINITY; cells * slices],
            counts: vec![0; cells],
        }
    }

    fn accumulate(&mut self, pts: &[crate::kitti_io::Point], cfg: &BevConfig) {
        let (_, cols) = cfg.grid_dims();
        let slices = cfg.num_slices;
        for p in pts {
            let Some((r, c)) = cfg.cell_of(p.x, p.z) else { continue };
            let cell = r * cols + c;
            self.counts[cell] += 1;
            let height = -p.y;
            if let Some(s) = cfg.slice_of(height) {
                let slot = &mut self.max_height[cell * slices + s];
                if height > *slot {
                    *slot = height;
                }
            }
        }
    }

    fn merge(mut self, other: PartialGrid) -> PartialGrid {
        for (a, b) in self.max_height.iter_mut().zip(other.max_height) {
            if b > *a {
                *a = b;
            }
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self
    }

    fn finish(self, cfg: &BevConfig) -> BevMap {
        let (rows, cols) = cfg.grid_dims();
        let slices = cfg.num_slices;
        let thickness = cfg.slice_thickness();
        let height_slices = self
            .max_height
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                if h == f64::NEG_INFINITY {
                    0.0
                } else {
                    let bottom = cfg.height_range.0 + (i % slices) as f64 * thickness;
                    (h - bottom).max(0.0) as f32
                }
            })
            .collect();
        let density = self
            .counts
            .iter()
            .map(|&n| density_encode(n as u64, cfg.density_norm) as f32)
            .collect();
        BevMap {
            rows,
            cols,
            slices,
            height_slices,
            density,
            counts: self.counts,
            config: *cfg,
        }
    }
}

pub fn rasterize_bev(pc: &PointCloud, cfg: &BevConfig) -> Result<BevMap> {
    pc.require_frame(Frame::RectCamera, "rasterize_bev")?;
    cfg.validate()?;
    let (rows, cols) = cfg.grid_dims();
    let mut grid = PartialGrid::new(rows * cols, cfg.num_slices);
    grid.accumulate(&pc.points, cfg);
    Ok(grid.finish(cfg))
}

/// Same result as [`rasterize_bev`], with points split across `workers`
/// partial grids merged by `(max, sum)`.
pub fn rasterize_bev_parallel(pc: &PointCloud, cfg: &BevConfig, workers: usize) -> Result<BevMap> {
    use rayon::prelude::*;

    pc.require_frame(Frame::RectCamera, "rasterize_bev")?;
    cfg.validate()?;
    let (rows, cols) = cfg.grid_dims();
    let workers = workers.max(1);
    let chunk = pc.points.len().div_ceil(workers).max(1);
    let grid = pc
        .points
        .par_chunks(chunk)
        .map(|pts| {
            let mut g = PartialGrid::new(rows * cols, cfg.num_slices);
            g.accumulate(pts, cfg);
            g
        })
        .reduce(|| PartialGrid::new(rows * cols, cfg.num_slices), PartialGrid::merge);
    Ok(grid.finish(cfg))
}

/// Density channel as 8-bit gray, one byte per cell in row-major order.
pub fn bev_gray_pixels(map: &BevMap) -> Vec<u8> {
    map.density
        .iter()
        .map(|&d| (d.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// PNG rendering of the density channel (`W × H`, 8-bit grayscale).
pub fn render_bev(map: &BevMap) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, map.cols as u32, map.rows as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(format!("png header: {e}")))?;
        writer
            .write_image_data(&bev_gray_pixels(map))
            .map_err(|e| Error::Format(format!("png data: {e}")))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kitti_io::Point;

    fn rect(points: Vec<(f64, f64, f64)>) -> PointCloud {
        PointCloud::new(
            points
                .into_iter()
                .map(|(x, y, z)| Point { x, y, z, reflectance: 0.0 })
                .collect(),
            Frame::RectCamera,
        )
        .unwrap()
    }

    #[test]
    fn density_examples() {
        assert_eq!(density_encode(0, 16.0f64), 0.0);
        assert!((density_encode(15, 16.0f64) - 1.0).abs() < 1e-12);
        assert!((density_encode(3, 16.0f64) - 0.5).abs() < 1e-12);
        assert_eq!(density_encode(1000, 16.0f64), 1.0);
        assert!((density_encode(3, 16.0f32) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn default_grid() {
        let cfg = BevConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.grid_dims(), (800, 800));
    }

    #[test]
    fn config_validation() {
        let mut cfg = BevConfig::default();
        cfg.x_range = (1.0, 1.0);
        assert!(cfg.validate().is_err());
        let cfg = BevConfig { num_slices: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = BevConfig { resolution: -0.1, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn crop_examples() {
        let cfg = BevConfig::default();
        let pc = rect(vec![(0.0, 0.0, 40.0), (-41.0, 0.0, 40.0), (40.0, 0.0, 1.0), (-40.0, 0.0, 0.0)]);
        let out = crop_points(&pc, &cfg).unwrap();
        assert_eq!(out.points.len(), 2);
        assert_eq!(out.points[0].z, 40.0);
        assert_eq!(out.points[1].x, -40.0);
    }

    #[test]
    fn crop_requires_rect_frame() {
        let mut pc = rect(vec![]);
        pc.frame_tag = Frame::Velodyne;
        assert!(matches!(crop_points(&pc, &BevConfig::default()), Err(Error::Contract(_))));
    }

    #[test]
    fn empty_cloud_gives_zero_map() {
        let map = rasterize_bev(&rect(vec![]), &BevConfig::default()).unwrap();
        assert!(map.density.iter().all(|&d| d == 0.0));
        assert!(map.height_slices.iter().all(|&h| h == 0.0));
        assert_eq!(map.channels(), 6);
    }

    #[test]
    fn single_point_at_origin_cell() {
        let cfg = BevConfig::default();
        let map = rasterize_bev(&rect(vec![(-40.0, -1.2, 0.0)]), &cfg).unwrap();
        let nonzero: Vec<usize> = (0..map.density.len()).filter(|&i| map.density[i] != 0.0).collect();
        assert_eq!(nonzero, vec![0]);
        assert_eq!(map.density_at(0, 0), density_encode(1, 16.0f64) as f32);
        // height 1.2 lands in slice 2 ([1.0, 1.5)), 0.2 above its bottom
        assert!((map.height(0, 0, 2) - 0.2).abs() < 1e-6);
        assert_eq!(map.height(0, 0, 0), 0.0);
    }

    #[test]
    fn points_outside_height_range_count_for_density_only() {
        let cfg = BevConfig::default();
        let map = rasterize_bev(&rect(vec![(0.05, 1.0, 0.05), (0.05, -3.0, 0.05)]), &cfg).unwrap();
        assert_eq!(map.count_at(0, 400), 2);
        assert!((0..5).all(|s| map.height(0, 400, s) == 0.0));
    }

    #[test]
    fn export_layout() {
        let cfg = BevConfig {
            x_range: (0.0, 0.3),
            z_range: (0.0, 0.2),
            ..Default::default()
        };
        let map = rasterize_bev(&rect(vec![(0.15, -0.7, 0.15)]), &cfg).unwrap();
        let bytes = map.to_bytes();
        let (h, w, c, res, vals) = BevMap::tensor_from_bytes(&bytes).unwrap();
        assert_eq!((h, w, c, res), (2, 3, 6, 0.1));
        let idx = (1 * 3 + 1) * 6;
        assert!((vals[idx + 1] - 0.2).abs() < 1e-6);
        assert_eq!(vals[idx + 5], map.density_at(1, 1));
        assert!(BevMap::tensor_from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn render_zero_and_full() {
        let cfg = BevConfig {
            x_range: (0.0, 0.4),
            z_range: (0.0, 0.2),
            ..Default::default()
        };
        let zero = rasterize_bev(&rect(vec![]), &cfg).unwrap();
        assert_eq!(bev_gray_pixels(&zero), vec![0; 8]);
        let full = rasterize_bev(&rect(vec![(0.05, 0.0, 0.05); 15]), &cfg).unwrap();
        assert_eq!(bev_gray_pixels(&full)[0], 255);
        let png = render_bev(&full).unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    }
}
