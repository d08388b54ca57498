//! Per-class clustering of object dimensions into anchor sizes.
//!
//! Every object of a class contributes one `(L, H, W)` vector. K-means and a
//! full-covariance Gaussian mixture are fitted over those vectors and the
//! cluster means become the class's anchor sizes.

mod gmm;
mod kmeans;

use serde::{Deserialize, Serialize};

pub use gmm::{gmm_fit, gmm_m_step, gmm_responsibilities, GmmModel, MStepUpdate};
pub use kmeans::{kmeans_assign, kmeans_fit, KMeansModel};

use crate::error::{Error, Result};
use crate::format::round6;
use crate::kitti_io::{FrameDataset, ObjectClass, ObjectLabel};
use crate::linalg::Vec3;
use crate::scalar::Real;

/// One object's dimensions, ordered `(L, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionSample<T> {
    pub l: T,
    pub h: T,
    pub w: T,
    pub class_name: ObjectClass,
}

impl<T: Real> DimensionSample<T> {
    pub fn new(l: T, h: T, w: T, class_name: ObjectClass) -> Result<Self> {
        if !(l > T::zero() && h > T::zero() && w > T::zero()) {
            return Err(Error::Argument(format!(
                "dimensions must be positive, got ({l}, {h}, {w})"
            )));
        }
        Ok(Self { l, h, w, class_name })
    }

    /// Reorders the label's `(H, W, L)` file order into `(L, H, W)`.
    pub fn from_label(label: &ObjectLabel) -> Result<Self> {
        Self::new(
            T::lit(label.dims.length),
            T::lit(label.dims.height),
            T::lit(label.dims.width),
            label.class_name.clone(),
        )
    }

    pub fn as_vec(&self) -> Vec3<T> {
        [self.l, self.h, self.w]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Farthest-point seeding starting from the sample with the smallest L.
    FarthestPoint,
    /// `n` distinct samples drawn with the configured seed.
    SeededRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub max_iterations: usize,
    /// Relative change of objective / log-likelihood below which fitting stops.
    pub tolerance: f64,
    pub seed: u64,
    /// Lower bound on covariance eigenvalues.
    pub covariance_floor: f64,
    pub init: InitScheme,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            tolerance: 1e-6,
            seed: 0,
            covariance_floor: 1e-6,
            init: InitScheme::FarthestPoint,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Argument(format!("tolerance {} must be positive", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Argument("max_iterations must be at least 1".into()));
        }
        if !(self.covariance_floor > 0.0) {
            return Err(Error::Argument("covariance_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Every ground-truth object of `class` across the dataset, in frame order.
pub fn collect_dimensions<T: Real>(ds: &FrameDataset, class: &ObjectClass) -> Result<Vec<DimensionSample<T>>> {
    let mut out = Vec::new();
    for frame in &ds.frame_ids {
        for label in ds.load_labels(frame)? {
            if &label.class_name == class {
                out.push(DimensionSample::from_label(&label).map_err(|e| e.in_frame(frame))?);
            }
        }
    }
    Ok(out)
}

/// Fitted model that yields one mean per cluster.
pub trait ClusterModel<T: Real> {
    fn cluster_means(&self) -> &[Vec3<T>];
}

/// Cluster means sorted by descending L, then H, then W.
pub fn anchor_sizes_from_model<T: Real>(model: &impl ClusterModel<T>) -> Vec<Vec3<T>> {
    let means = model.cluster_means();
    sorted_order(means).into_iter().map(|i| means[i]).collect()
}

fn sorted_order<T: Real>(means: &[Vec3<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (means[a], means[b]);
        y[0].partial_cmp(&x[0])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y[1].partial_cmp(&x[1]).unwrap_or(std::cmp::Ordering::Equal))
            .then(y[2].partial_cmp(&x[2]).unwrap_or(std::cmp::Ordering::Equal))
    });
    order
}

pub(crate) fn lexicographic<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Kmeans,
    Gmm,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Kmeans => "kmeans",
            Method::Gmm => "gmm",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "kmeans" => Ok(Method::Kmeans),
            "gmm" => Ok(Method::Gmm),
            other => Err(Error::Argument(format!("unknown clustering method {other:?}"))),
        }
    }
}

/// On-disk JSON form of a fitted model. Sizes follow the
/// [`anchor_sizes_from_model`] order; weights and covariances are permuted
/// to match. Numbers are rounded to six significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub class: ObjectClass,
    pub method: Method,
    pub n: usize,
    pub sizes: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariances: Option<Vec<[[f64; 3]; 3]>>,
    pub objective_or_loglik: f64,
    pub seed: u64,
    pub iterations: usize,
}

fn round_vec3<T: Real>(v: &Vec3<T>) -> [f64; 3] {
    v.map(|x| round6(x.to_f64_lossy()))
}

impl ModelFile {
    pub fn from_kmeans<T: Real>(m: &KMeansModel<T>) -> Self {
        let order = sorted_order(&m.centroids);
        Self {
            class: m.class_name.clone(),
            method: Method::Kmeans,
            n: m.n,
            sizes: order.iter().map(|&i| round_vec3(&m.centroids[i])).collect(),
            weights: None,
            covariances: None,
            objective_or_loglik: round6(m.objective.to_f64_lossy()),
            seed: m.seed,
            iterations: m.iterations_run,
        }
    }

    pub fn from_gmm<T: Real>(m: &GmmModel<T>) -> Self {
        let order = sorted_order(&m.means);
        Self {
            class: m.class_name.clone(),
            method: Method::Gmm,
            n: m.n,
            sizes: order.iter().map(|&i| round_vec3(&m.means[i])).collect(),
            weights: Some(order.iter().map(|&i| round6(m.weights[i].to_f64_lossy())).collect()),
            covariances: Some(
                order
                    .iter()
                    .map(|&i| m.covariances[i].m.map(|row| round_vec3(&row)))
                    .collect(),
            ),
            objective_or_loglik: round6(m.log_likelihood.to_f64_lossy()),
            seed: m.seed,
            iterations: m.iterations_run,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ModelFile = serde_json::from_str(text)?;
        if m.sizes.len() != m.n || m.n == 0 {
            return Err(Error::Format(format!(
                "model declares n = {} but lists {} sizes",
                m.n,
                m.sizes.len()
            )));
        }
        if m.sizes.iter().flatten().any(|&v| !(v > 0.0)) {
            return Err(Error::Format("model sizes must be positive".into()));
        }
        Ok(m)
    }

    /// Conventional file name `<class>_<method>_n<n>.json`.
    pub fn file_name(&self) -> String {
        format!("{}_{}_n{}.json", self.class, self.method.as_str(), self.n)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn samples(points: &[[f64; 3]]) -> Vec<DimensionSample<f64>> {
        points
            .iter()
            .map(|p| DimensionSample::new(p[0], p[1], p[2], ObjectClass::Pedestrian).unwrap())
            .collect()
    }
}
