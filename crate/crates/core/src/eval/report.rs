//! CSV tables for evaluation results.

use super::{ApResult, CoverageHistogram, Difficulty, RecallCurve};
use crate::format::sig6;
use crate::kitti_io::ObjectClass;

/// One row per run label, one column per `class × difficulty` in first-seen
/// order. Undefined APs are written as `NA`.
pub fn ap_table_csv(rows: &[(String, Vec<ApResult>)]) -> String {
    let mut cols: Vec<(ObjectClass, Difficulty)> = Vec::new();
    for (_, results) in rows {
        for r in results {
            let key = (r.class_name.clone(), r.difficulty);
            if !cols.contains(&key) {
                cols.push(key);
            }
        }
    }
    let mut s = String::from("run");
    for (c, d) in &cols {
        s.push_str(&format!(",{}_{}", c, d.as_str()));
    }
    s.push('\n');
    for (name, results) in rows {
        s.push_str(name);
        for (c, d) in &cols {
            let cell = results
                .iter()
                .find(|r| &r.class_name == c && r.difficulty == *d)
                .and_then(|r| r.ap)
                .map(sig6)
                .unwrap_or_else(|| "NA".into());
            s.push(',');
            s.push_str(&cell);
        }
        s.push('\n');
    }
    s
}

/// `class,method,n,evaluated,excluded,mean,frac_0.5,frac_0.65,frac_0.85`
pub fn coverage_summary_csv(rows: &[(String, CoverageHistogram)]) -> String {
    let mut s = String::from("class,method,n,evaluated,excluded,mean");
    if let Some((_, h)) = rows.first() {
        for t in &h.frac_above {
            s.push_str(&format!(",frac_{}", sig6(t.threshold)));
        }
    }
    s.push('\n');
    for (method, h) in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}",
            h.class_name,
            method,
            h.n_clusters,
            h.evaluated,
            h.excluded_outside,
            h.mean_overlap.map(sig6).unwrap_or_else(|| "NA".into())
        ));
        for t in &h.frac_above {
            s.push(',');
            s.push_str(&if h.empty { "NA".to_string() } else { sig6(t.fraction) });
        }
        s.push('\n');
    }
    s
}

/// `class,proposals,recall`
pub fn recall_csv(curves: &[RecallCurve]) -> String {
    let mut s = String::from("class,proposals,recall\n");
    for c in curves {
        for p in &c.points {
            s.push_str(&format!("{},{},{}\n", c.class_name, p.proposals, sig6(p.recall)));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::Interpolation;
    use super::*;

    fn ap(class: ObjectClass, d: Difficulty, v: Option<f64>) -> ApResult {
        ApResult {
            class_name: class,
            difficulty: d,
            iou_threshold: 0.5,
            ap: v,
            interpolation: Interpolation::R11,
            precision_recall_points: vec![],
            num_gt: 0,
            true_positives: 0,
            false_positives: 0,
        }
    }

    #[test]
    fn table_layout() {
        let rows = vec![
            ("n1".to_string(), vec![ap(ObjectClass::Cyclist, Difficulty::Easy, Some(50.0)), ap(ObjectClass::Cyclist, Difficulty::Hard, None)]),
            ("n2".to_string(), vec![ap(ObjectClass::Cyclist, Difficulty::Easy, Some(66.66666666))]),
        ];
        assert_eq!(ap_table_csv(&rows), "run,Cyclist_Easy,Cyclist_Hard\nn1,50,NA\nn2,66.6667,NA\n");
    }
}
