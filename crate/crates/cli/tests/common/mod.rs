#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cap_cli::fixture::{ClassSpec, FixtureSpec, Noise, SizeMode};
use cap_core::kitti_io::ObjectClass;

pub const PED_SMALL: [f64; 3] = [0.5, 1.2, 0.4];
pub const PED_LARGE: [f64; 3] = [1.2, 1.8, 0.9];

pub fn cap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cap")).args(args).output().expect("cap binary runs")
}

/// Runs `cap` and panics with its stderr unless it exits 0.
pub fn cap_ok(args: &[&str]) -> String {
    let out = cap(args);
    assert!(
        out.status.success(),
        "cap {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file below `dir`, keyed by relative path.
pub fn tree_bytes(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn mode(mean: [f64; 3], jitter: f64, weight: f64) -> SizeMode {
    SizeMode { mean, jitter: [jitter; 3], weight }
}

/// Pedestrians drawn from two well separated size modes, centered on the
/// 0.5 m anchor grid with axis-aligned headings.
pub fn bimodal_pedestrians(frames: usize, seed: u64) -> FixtureSpec {
    FixtureSpec {
        frames,
        seed,
        noise: Noise::Uniform,
        classes: vec![ClassSpec {
            name: ObjectClass::Pedestrian,
            per_frame: 6,
            modes: vec![mode(PED_SMALL, 0.04, 1.0), mode(PED_LARGE, 0.04, 1.0)],
        }],
        snap_stride: Some(0.5),
        axis_aligned: true,
        ..FixtureSpec::default()
    }
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn frac_above_085(hist: &serde_json::Value) -> f64 {
    hist["frac_above"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["threshold"].as_f64() == Some(0.85))
        .unwrap()["fraction"]
        .as_f64()
        .unwrap()
}
