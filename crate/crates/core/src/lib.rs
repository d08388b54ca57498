//! Class-specific anchor proposal for 3D object detection on KITTI-format data.
//!
//! The crate covers the full anchoring pipeline that sits in front of a
//! region-proposal network:
//!
//! * [`kitti_io`] parses labels, calibration and raw velodyne scans.
//! * [`bev`] crops a scan and rasterizes it into per-slice max-height maps
//!   plus a log-density channel.
//! * [`clustering`] fits K-means and full-covariance GMMs over per-class
//!   `(L, H, W)` dimension vectors; the cluster means become anchor sizes.
//! * [`anchor_gen`] lays those sizes out on a dense BEV grid.
//! * [`geometry`] provides exact rotated-rectangle clipping, BEV/3D IoU and
//!   the ground-truth overlap fraction.
//! * [`eval`] measures anchor coverage, proposal recall and 3D AP.
//!
//! The numeric core ([`geometry`], [`clustering`], [`linalg`]) is generic over
//! any [`Real`] scalar; the type aliases below pin the common instantiations.

pub mod anchor_gen;
pub mod bev;
pub mod clustering;
pub mod error;
pub mod eval;
pub mod format;
pub mod geometry;
pub mod kitti_io;
pub mod linalg;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type OrientedBox2Df64 = geometry::OrientedBox2D<f64>;
pub type OrientedBox2Df32 = geometry::OrientedBox2D<f32>;
pub type Box3Df64 = geometry::Box3D<f64>;
pub type Box3Df32 = geometry::Box3D<f32>;
pub type DimensionSampleF64 = clustering::DimensionSample<f64>;
pub type DimensionSampleF32 = clustering::DimensionSample<f32>;
pub type KMeansModelF64 = clustering::KMeansModel<f64>;
pub type KMeansModelF32 = clustering::KMeansModel<f32>;
pub type GmmModelF64 = clustering::GmmModel<f64>;
pub type GmmModelF32 = clustering::GmmModel<f32>;
pub type Mat3f64 = linalg::Mat3<f64>;
