//! Declarative run configuration, loaded from TOML and patched by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cap_core::anchor_gen::AnchorConfig;
use cap_core::bev::BevConfig;
use cap_core::clustering::{ClusterConfig, Method};
use cap_core::eval::{DifficultyThresholds, Interpolation};
use cap_core::kitti_io::{FrameDataset, ObjectClass, Split};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    pub histogram_bins: usize,
    pub recall_proposals: Vec<usize>,
    /// Restrict coverage, recall and AP ground truth to the anchor area.
    pub restrict_to_area: bool,
    pub thresholds: DifficultyThresholds,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            interpolation: Interpolation::R11,
            histogram_bins: 20,
            recall_proposals: vec![10, 30, 100, 300, 1024],
            restrict_to_area: true,
            thresholds: DifficultyThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset_root: Option<PathBuf>,
    pub split_file: Option<PathBuf>,
    pub split: Split,
    pub classes: Vec<ObjectClass>,
    pub methods: Vec<Method>,
    pub n: Vec<usize>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub bev: BevConfig,
    pub anchors: AnchorConfig,
    pub clustering: ClusterConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_root: None,
            split_file: None,
            split: Split::All,
            classes: vec![ObjectClass::Car, ObjectClass::Pedestrian, ObjectClass::Cyclist],
            methods: vec![Method::Kmeans],
            n: vec![1, 2, 3, 4, 5],
            output_dir: PathBuf::from("out"),
            jobs: 0,
            bev: BevConfig::default(),
            anchors: AnchorConfig::default(),
            clustering: ClusterConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub dataset_root: Option<PathBuf>,
    pub split_file: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub classes: Option<Vec<ObjectClass>>,
    pub methods: Option<Vec<Method>>,
    pub n: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path` (or starts from defaults) and applies `overrides`.
    /// Relative paths in the file resolve against the file's directory.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing config {}", p.display()))?;
                let base = p.parent().unwrap_or(Path::new("."));
                for slot in [&mut cfg.dataset_root, &mut cfg.split_file] {
                    if let Some(v) = slot.as_mut() {
                        if v.is_relative() {
                            *v = base.join(&*v);
                        }
                    }
                }
                if cfg.output_dir.is_relative() {
                    cfg.output_dir = base.join(&cfg.output_dir);
                }
                cfg
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.dataset_root {
            self.dataset_root = Some(v.clone());
        }
        if let Some(v) = &o.split_file {
            self.split_file = Some(v.clone());
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.seed {
            self.clustering.seed = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = v;
        }
        if let Some(v) = &o.classes {
            self.classes = v.clone();
        }
        if let Some(v) = &o.methods {
            self.methods = v.clone();
        }
        if let Some(v) = &o.n {
            self.n = v.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            bail!("at least one class is required");
        }
        if self.methods.is_empty() {
            bail!("at least one clustering method is required");
        }
        if self.n.is_empty() || self.n.contains(&0) {
            bail!("cluster counts must be a non-empty list of values ≥ 1");
        }
        for p in [&self.dataset_root, &self.split_file].into_iter().flatten() {
            if !p.exists() {
                bail!("path does not exist: {}", p.display());
            }
        }
        self.bev.validate()?;
        self.anchors.validate()?;
        self.clustering.validate()?;
        if self.eval.histogram_bins == 0 {
            bail!("eval.histogram_bins must be at least 1");
        }
        if !(self.eval.iou_threshold > 0.0 && self.eval.iou_threshold <= 1.0) {
            bail!("eval.iou_threshold must be in (0, 1]");
        }
        Ok(())
    }

    pub fn dataset(&self) -> Result<FrameDataset> {
        let Some(root) = &self.dataset_root else {
            bail!("no dataset root given (set dataset_root or pass --root)");
        };
        Ok(match &self.split_file {
            Some(split) => FrameDataset::from_split_file(root, split, self.split)?,
            None => FrameDataset::scan(root)?,
        })
    }
}

/// Parses `1,2,5`, `1..5` (inclusive) or a mix like `1..3,8`.
pub fn parse_n_list(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().trim_start_matches('=').parse()?);
            if b < a {
                bail!("empty range {part}");
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse()?);
        }
    }
    if out.is_empty() {
        bail!("empty cluster-count list");
    }
    Ok(out)
}

pub fn parse_classes(s: &str) -> Vec<ObjectClass> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(ObjectClass::from).collect()
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|m| if m == "both" { Ok(vec![Method::Kmeans, Method::Gmm]) } else { Ok(vec![m.parse::<Method>()?]) })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}
