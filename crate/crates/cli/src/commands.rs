//! Subcommand implementations. Each returns a printable summary and the
//! files it wrote, in write order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cap_core::anchor_gen::{filter_empty_anchors, generate_anchors, AnchorConfig, AnchorSet};
use cap_core::bev::{rasterize_bev_parallel, render_bev, CropArea};
use cap_core::clustering::{collect_dimensions, gmm_fit, kmeans_fit, DimensionSample, Method, ModelFile};
use cap_core::eval::{
    ap_table_csv, average_precision, coverage_histogram, coverage_summary_csv, ingest_detections, ingest_proposals,
    recall_at_n, recall_csv, ApOptions, CoverageHistogram, Difficulty, FrameAnchors, GroundTruth, IndexedAnchors,
    RecallOptions, SharedAnchors,
};
use cap_core::format::sig6;
use cap_core::kitti_io::{FrameDataset, ObjectClass, PointCloud};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::fixture::{generate, write_dataset, FixtureSpec};
use crate::output::{write_json, write_text};

/// Anchor counts the default grid produces for one to five sizes.
pub const REFERENCE_BAND: (usize, usize) = (51_200, 256_000);

#[derive(Debug, Default)]
pub struct Outcome {
    pub summary: String,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    fn line(&mut self, s: impl AsRef<str>) {
        self.summary.push_str(s.as_ref());
        self.summary.push('\n');
    }
}

fn model_stem(class: &ObjectClass, method: Method, n: usize) -> String {
    format!("{class}_{}_n{n}", method.as_str())
}

fn combos(cfg: &RunConfig) -> Vec<(ObjectClass, Method, usize)> {
    let mut out = Vec::new();
    for class in &cfg.classes {
        for &method in &cfg.methods {
            for &n in &cfg.n {
                out.push((class.clone(), method, n));
            }
        }
    }
    out
}

fn models_dir(cfg: &RunConfig, given: Option<&Path>) -> PathBuf {
    given.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join("models"))
}

fn load_model(dir: &Path, class: &ObjectClass, method: Method, n: usize) -> Result<ModelFile> {
    let path = dir.join(format!("{}.json", model_stem(class, method, n)));
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading model {}", path.display()))?;
    let model = ModelFile::from_json(&text).with_context(|| format!("parsing model {}", path.display()))?;
    if &model.class != class || model.method != method || model.n != n {
        bail!("{}: file describes {}", path.display(), model.file_name());
    }
    Ok(model)
}

fn fmt_size(s: &[f64; 3]) -> String {
    format!("({}, {}, {})", sig6(s[0]), sig6(s[1]), sig6(s[2]))
}

fn load_ground_truth(ds: &FrameDataset) -> Result<GroundTruth> {
    let loaded: Vec<_> = ds
        .frame_ids
        .par_iter()
        .map(|f| ds.load_labels(f).map(|l| (f.clone(), l)))
        .collect::<cap_core::Result<_>>()?;
    Ok(loaded.into_iter().collect())
}

fn eval_area(cfg: &RunConfig) -> Option<CropArea> {
    cfg.eval.restrict_to_area.then_some(cfg.anchors.area)
}

pub fn cluster(cfg: &RunConfig) -> Result<Outcome> {
    let ds = cfg.dataset()?;
    let mut samples: BTreeMap<ObjectClass, Vec<DimensionSample<f64>>> = BTreeMap::new();
    for class in &cfg.classes {
        samples.insert(class.clone(), collect_dimensions(&ds, class)?);
    }
    let fitted: Vec<ModelFile> = combos(cfg)
        .into_par_iter()
        .map(|(class, method, n)| {
            let s = &samples[&class];
            let model = match method {
                Method::Kmeans => kmeans_fit(s, n, &cfg.clustering).map(|m| ModelFile::from_kmeans(&m)),
                Method::Gmm => gmm_fit(s, n, &cfg.clustering).map(|m| ModelFile::from_gmm(&m)),
            };
            model.with_context(|| format!("fitting {} ({} samples)", model_stem(&class, method, n), s.len()))
        })
        .collect::<Result<_>>()?;

    let dir = cfg.output_dir.join("models");
    let mut out = Outcome::default();
    out.line(format!("{:<12} {:<7} {:>2}  sizes (l, h, w)", "class", "method", "n"));
    for m in &fitted {
        out.written.push(write_text(&dir.join(m.file_name()), &m.to_json())?);
        let sizes: Vec<String> = m.sizes.iter().map(fmt_size).collect();
        out.line(format!("{:<12} {:<7} {:>2}  {}", m.class.to_string(), m.method.as_str(), m.n, sizes.join(" ")));
    }
    Ok(out)
}

#[derive(Serialize)]
struct AnchorMeta<'a> {
    class: &'a ObjectClass,
    method: Method,
    n: usize,
    sizes: &'a [[f64; 3]],
    stride: f64,
    area: CropArea,
    locations: [usize; 2],
    yaws: usize,
    count: usize,
    expected_count: usize,
    reference_band: [usize; 2],
    within_reference_band: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    kept_per_frame: Option<BTreeMap<String, usize>>,
}

fn load_point_clouds(ds: &FrameDataset) -> Result<BTreeMap<String, PointCloud>> {
    let loaded: Vec<_> = ds
        .frame_ids
        .par_iter()
        .map(|f| ds.load_rect_points(f).map(|pc| (f.clone(), pc)))
        .collect::<cap_core::Result<_>>()?;
    Ok(loaded.into_iter().collect())
}

fn filter_per_frame(
    set: &AnchorSet,
    clouds: &BTreeMap<String, PointCloud>,
    cfg: &AnchorConfig,
) -> Result<BTreeMap<String, AnchorSet>> {
    let kept: Vec<_> = clouds
        .par_iter()
        .map(|(f, pc)| {
            filter_empty_anchors(set, pc, cfg)
                .map(|mut s| {
                    s.frame_id = Some(f.clone());
                    (f.clone(), s)
                })
                .with_context(|| format!("filtering anchors for frame {f}"))
        })
        .collect::<Result<_>>()?;
    Ok(kept.into_iter().collect())
}

pub fn anchors(cfg: &RunConfig, models: Option<&Path>) -> Result<Outcome> {
    let mdir = models_dir(cfg, models);
    let dir = cfg.output_dir.join("anchors");
    let clouds = if cfg.anchors.filter_empty { Some(load_point_clouds(&cfg.dataset()?)?) } else { None };
    let (nx, nz) = cfg.anchors.locations();
    let mut out = Outcome::default();
    for (class, method, n) in combos(cfg) {
        let model = load_model(&mdir, &class, method, n)?;
        let set = generate_anchors(&class, &model.sizes, &cfg.anchors)?;
        let stem = model_stem(&class, method, n);
        let kept = match &clouds {
            Some(c) => Some(filter_per_frame(&set, c, &cfg.anchors)?),
            None => None,
        };
        let meta = AnchorMeta {
            class: &class,
            method,
            n,
            sizes: &model.sizes,
            stride: cfg.anchors.stride,
            area: cfg.anchors.area,
            locations: [nx, nz],
            yaws: cap_core::anchor_gen::ANCHOR_YAWS.len(),
            count: set.len(),
            expected_count: cfg.anchors.expected_count(model.sizes.len()),
            reference_band: [REFERENCE_BAND.0, REFERENCE_BAND.1],
            within_reference_band: (REFERENCE_BAND.0..=REFERENCE_BAND.1).contains(&set.len()),
            kept_per_frame: kept.as_ref().map(|k| k.iter().map(|(f, s)| (f.clone(), s.len())).collect()),
        };
        out.written.push(write_text(&dir.join(format!("{stem}.csv")), &set.to_csv())?);
        out.written.push(write_json(&dir.join(format!("{stem}.meta.json")), &meta)?);
        if let Some(k) = &kept {
            for (f, s) in k {
                out.written.push(write_text(&dir.join(&stem).join(format!("{f}.csv")), &s.to_csv())?);
            }
        }
        out.line(format!(
            "{stem}: {} anchors ({}x{} locations x {} sizes x 2 yaws){}",
            set.len(),
            nx,
            nz,
            model.sizes.len(),
            if meta.within_reference_band { "" } else { " outside reference band" }
        ));
    }
    Ok(out)
}

pub fn coverage(cfg: &RunConfig, models: Option<&Path>) -> Result<Outcome> {
    let ds = cfg.dataset()?;
    let gts = load_ground_truth(&ds)?;
    let clouds = if cfg.anchors.filter_empty { Some(load_point_clouds(&ds)?) } else { None };
    let mdir = models_dir(cfg, models);
    let dir = cfg.output_dir.join("coverage");
    let area = cfg.anchors.area;
    let mut rows: Vec<(String, CoverageHistogram)> = Vec::new();
    let mut out = Outcome::default();
    for (class, method, n) in combos(cfg) {
        let model = load_model(&mdir, &class, method, n)?;
        let set = generate_anchors(&class, &model.sizes, &cfg.anchors)?;
        let hist = match &clouds {
            None => coverage_histogram(&gts, &SharedAnchors(IndexedAnchors::new(&set)), &class, n, cfg.eval.histogram_bins, &area)?,
            Some(c) => {
                let per_frame = filter_per_frame(&set, c, &cfg.anchors)?;
                let index = FrameAnchors(per_frame.iter().map(|(f, s)| (f.clone(), IndexedAnchors::new(s))).collect());
                coverage_histogram(&gts, &index, &class, n, cfg.eval.histogram_bins, &area)?
            }
        };
        let stem = model_stem(&class, method, n);
        out.written.push(write_json(&dir.join(format!("{stem}.json")), &hist)?);
        out.line(if hist.empty {
            format!("{stem}: no ground truth in area (histogram empty)")
        } else {
            format!(
                "{stem}: {} objects, mean overlap {}, frac_above(0.85) {}",
                hist.evaluated,
                sig6(hist.mean_overlap.unwrap_or(0.0)),
                sig6(hist.fraction_above(0.85).unwrap_or(0.0))
            )
        });
        rows.push((method.as_str().to_string(), hist));
    }
    out.written.push(write_text(&dir.join("coverage_summary.csv"), &coverage_summary_csv(&rows))?);
    Ok(out)
}

pub fn recall(cfg: &RunConfig, proposals: &Path) -> Result<Outcome> {
    let props = ingest_proposals(proposals).with_context(|| format!("reading proposals {}", proposals.display()))?;
    let gts = load_ground_truth(&cfg.dataset()?)?;
    let mut ns = cfg.eval.recall_proposals.clone();
    ns.sort_unstable();
    ns.dedup();
    let opts = RecallOptions {
        iou_threshold: cfg.eval.iou_threshold,
        difficulty: None,
        area: eval_area(cfg),
        thresholds: cfg.eval.thresholds,
    };
    let mut curves = Vec::new();
    let mut out = Outcome::default();
    for class in &cfg.classes {
        let c = recall_at_n(&props, &gts, class, &ns, &opts)?;
        let pts: Vec<String> = c.points.iter().map(|p| format!("R@{}={}", p.proposals, sig6(p.recall))).collect();
        out.line(format!("{class}: {} objects, {}", c.total_gt, pts.join(" ")));
        curves.push(c);
    }
    let dir = cfg.output_dir.join("recall");
    out.written.push(write_json(&dir.join("recall.json"), &curves)?);
    out.written.push(write_text(&dir.join("recall.csv"), &recall_csv(&curves))?);
    Ok(out)
}

pub fn ap(cfg: &RunConfig, detections: &[PathBuf]) -> Result<Outcome> {
    if detections.is_empty() {
        bail!("at least one detections file is required");
    }
    let gts = load_ground_truth(&cfg.dataset()?)?;
    let opts = ApOptions {
        iou_threshold: cfg.eval.iou_threshold,
        interpolation: cfg.eval.interpolation,
        area: eval_area(cfg),
        thresholds: cfg.eval.thresholds,
    };
    let mut rows = Vec::new();
    let mut out = Outcome::default();
    for path in detections {
        let dets = ingest_detections(path).with_context(|| format!("reading detections {}", path.display()))?;
        let run = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run").to_string();
        let mut results = Vec::new();
        for class in &cfg.classes {
            let mut cells = Vec::new();
            for d in [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard] {
                let r = average_precision(&dets, &gts, class, d, &opts);
                cells.push(format!("{}={}", d.as_str(), r.ap.map(sig6).unwrap_or_else(|| "NA".into())));
                results.push(r);
            }
            out.line(format!("{run} {class}: {}", cells.join(" ")));
        }
        rows.push((run, results));
    }
    let dir = cfg.output_dir.join("ap");
    out.written.push(write_json(&dir.join("ap.json"), &rows)?);
    out.written.push(write_text(&dir.join("ap_table.csv"), &ap_table_csv(&rows))?);
    Ok(out)
}

pub fn bev_render(cfg: &RunConfig, frame: Option<&str>) -> Result<Outcome> {
    let ds = cfg.dataset()?;
    let frames: Vec<String> = match frame {
        Some(f) => vec![f.to_string()],
        None => ds.frame_ids.clone(),
    };
    let workers = rayon::current_num_threads();
    let dir = cfg.output_dir.join("bev");
    let mut out = Outcome::default();
    for f in &frames {
        let pc = ds.load_rect_points(f)?;
        let map = rasterize_bev_parallel(&pc, &cfg.bev, workers).with_context(|| format!("rasterizing frame {f}"))?;
        let png = render_bev(&map)?;
        let png_path = dir.join(format!("{f}.png"));
        let bin_path = dir.join(format!("{f}.bin"));
        crate::output::ensure_dir(&dir)?;
        std::fs::write(&png_path, png).with_context(|| format!("writing {}", png_path.display()))?;
        std::fs::write(&bin_path, map.to_bytes()).with_context(|| format!("writing {}", bin_path.display()))?;
        let (rows, cols) = cfg.bev.grid_dims();
        out.line(format!("{f}: {} points -> {rows}x{cols}x{} map", pc.len(), map.channels()));
        out.written.push(png_path);
        out.written.push(bin_path);
    }
    Ok(out)
}

pub fn fixture(spec: &FixtureSpec, root: &Path) -> Result<Outcome> {
    let frames = generate(spec)?;
    let written = write_dataset(&frames, root)?;
    let objects: usize = frames.iter().map(|f| f.labels.len()).sum();
    let mut out = Outcome { written, ..Outcome::default() };
    out.line(format!("{} frames, {objects} objects written to {}", frames.len(), root.display()));
    Ok(out)
}
