//! CSV ingestion of externally produced proposals and detections.
//!
//! * proposals: `frame,rank,x,z,y,l,h,w,yaw,class`
//! * detections: `frame,score,x,z,y,l,h,w,yaw,class`

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BoxRecord;
use crate::error::{Error, Result};
use crate::format::sig6;
use crate::kitti_io::ObjectClass;

const BOX_COLUMNS: [&str; 8] = ["x", "z", "y", "l", "h", "w", "yaw", "class"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub rank: u64,
    pub record: BoxRecord,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProposalSet {
    pub frames: BTreeMap<String, Vec<Proposal>>,
}

impl ProposalSet {
    pub fn push(&mut self, frame: &str, p: Proposal) {
        self.frames.entry(frame.to_string()).or_default().push(p);
    }

    pub fn len(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Proposals of one frame sorted by rank.
    pub fn ranked(&self, frame: &str) -> Vec<&Proposal> {
        let mut v: Vec<&Proposal> = self.frames.get(frame).map(|v| v.iter().collect()).unwrap_or_default();
        v.sort_by_key(|p| p.rank);
        v
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,rank,x,z,y,l,h,w,yaw,class\n");
        for (frame, props) in &self.frames {
            for p in props {
                s.push_str(&format!("{frame},{},{}\n", p.rank, record_fields(&p.record)));
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub score: f64,
    pub record: BoxRecord,
    /// Position in the input; breaks score ties.
    pub order: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    pub frames: BTreeMap<String, Vec<Detection>>,
    next_order: usize,
}

impl DetectionSet {
    /// Appends a detection; input order follows call order.
    pub fn push(&mut self, frame: &str, score: f64, record: BoxRecord) {
        let order = self.next_order;
        self.next_order += 1;
        self.frames
            .entry(frame.to_string())
            .or_default()
            .push(Detection { score, record, order });
    }

    pub fn len(&self) -> usize {
        self.next_order
    }

    pub fn is_empty(&self) -> bool {
        self.next_order == 0
    }

    /// Rows in original input order.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(&str, &Detection)> = self
            .frames
            .iter()
            .flat_map(|(f, ds)| ds.iter().map(move |d| (f.as_str(), d)))
            .collect();
        rows.sort_by_key(|(_, d)| d.order);
        let mut s = String::from("frame,score,x,z,y,l,h,w,yaw,class\n");
        for (frame, d) in rows {
            s.push_str(&format!("{frame},{},{}\n", sig6(d.score), record_fields(&d.record)));
        }
        s
    }
}

fn record_fields(r: &BoxRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        sig6(r.x),
        sig6(r.z),
        sig6(r.y),
        sig6(r.l),
        sig6(r.h),
        sig6(r.w),
        sig6(r.yaw),
        r.class_name
    )
}

struct Columns {
    frame: usize,
    key: usize,
    boxes: [usize; 8],
}

fn columns(headers: &csv::StringRecord, key: &str) -> Result<Columns> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Format(format!("missing {name} column")))
    };
    Ok(Columns {
        frame: find("frame")?,
        key: find(key)?,
        boxes: [
            find(BOX_COLUMNS[0])?,
            find(BOX_COLUMNS[1])?,
            find(BOX_COLUMNS[2])?,
            find(BOX_COLUMNS[3])?,
            find(BOX_COLUMNS[4])?,
            find(BOX_COLUMNS[5])?,
            find(BOX_COLUMNS[6])?,
            find(BOX_COLUMNS[7])?,
        ],
    })
}

/// Parses every data row into `(frame, key column text, box)`.
fn parse_rows(text: &str, key: &str) -> Result<Vec<(usize, String, String, BoxRecord)>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
        .clone();
    let cols = columns(&headers, key)?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Row { row, msg: e.to_string() })?;
        let field = |idx: usize, name: &str| -> Result<&str> {
            match rec.get(idx) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::Row { row, msg: format!("missing {name}") }),
            }
        };
        let num = |idx: usize, name: &str| -> Result<f64> {
            let v = field(idx, name)?;
            let x: f64 = v
                .parse()
                .map_err(|_| Error::Row { row, msg: format!("{name} is not numeric: {v:?}") })?;
            if !x.is_finite() {
                return Err(Error::Row { row, msg: format!("{name} is not finite") });
            }
            Ok(x)
        };
        let b = cols.boxes;
        let record = BoxRecord {
            x: num(b[0], "x")?,
            z: num(b[1], "z")?,
            y: num(b[2], "y")?,
            l: num(b[3], "l")?,
            h: num(b[4], "h")?,
            w: num(b[5], "w")?,
            yaw: num(b[6], "yaw")?,
            class_name: ObjectClass::from(field(b[7], "class")?),
        };
        if !(record.l > 0.0 && record.h > 0.0 && record.w > 0.0) {
            return Err(Error::Row { row, msg: "box dimensions must be positive".into() });
        }
        out.push((row, field(cols.frame, "frame")?.to_string(), field(cols.key, key)?.to_string(), record));
    }
    Ok(out)
}

pub fn parse_proposals_csv(text: &str) -> Result<ProposalSet> {
    let mut set = ProposalSet::default();
    for (row, frame, rank, record) in parse_rows(text, "rank")? {
        let rank: u64 = rank
            .parse()
            .map_err(|_| Error::Row { row, msg: format!("rank is not a non-negative integer: {rank:?}") })?;
        if set.frames.get(&frame).is_some_and(|ps| ps.iter().any(|p| p.rank == rank)) {
            return Err(Error::Row { row, msg: format!("duplicate rank {rank} in frame {frame}") });
        }
        set.push(&frame, Proposal { rank, record });
    }
    Ok(set)
}

pub fn parse_detections_csv(text: &str) -> Result<DetectionSet> {
    let mut set = DetectionSet::default();
    for (row, frame, score, record) in parse_rows(text, "score")? {
        let score: f64 = score
            .parse()
            .map_err(|_| Error::Row { row, msg: format!("score is not numeric: {score:?}") })?;
        if !score.is_finite() {
            return Err(Error::Row { row, msg: "score is not finite".into() });
        }
        set.push(&frame, score, record);
    }
    Ok(set)
}

pub fn ingest_proposals(path: &Path) -> Result<ProposalSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_proposals_csv(&text)
}

pub fn ingest_detections(path: &Path) -> Result<DetectionSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detections_csv(&text)
}
