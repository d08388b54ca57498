use cap_core::anchor_gen::{generate_anchors, AnchorConfig};
use cap_core::bev::CropArea;
use cap_core::eval::{
    average_precision, coverage_histogram, recall_at_n, ApOptions, BoxRecord, DetectionSet, Difficulty,
    GroundTruth, IndexedAnchors, Interpolation, Proposal, ProposalSet, RecallOptions, SharedAnchors,
};
use cap_core::kitti_io::{BBox2D, Dimensions, ObjectClass, ObjectLabel};
use proptest::prelude::*;

fn ped_label(x: f64, z: f64, lhw: [f64; 3], ry: f64, height_px: f64, occlusion: i8) -> ObjectLabel {
    ObjectLabel {
        class_name: ObjectClass::Pedestrian,
        truncation: 0.0,
        occlusion,
        alpha: 0.0,
        bbox2d: BBox2D { left: 100.0, top: 100.0, right: 140.0, bottom: 100.0 + height_px },
        dims: Dimensions { height: lhw[1], width: lhw[2], length: lhw[0] },
        location: [x, 1.6, z],
        rotation_y: ry,
        score: None,
    }
}

#[derive(Debug, Clone)]
struct Instance {
    gts: GroundTruth,
    dets: Vec<(String, f64, BoxRecord)>,
}

impl Instance {
    fn detections(&self, score: impl Fn(f64) -> f64) -> DetectionSet {
        let mut set = DetectionSet::default();
        for (f, s, r) in &self.dets {
            set.push(f, score(*s), r.clone());
        }
        set
    }
}

/// Frames with a few pedestrians each; detections are jittered copies of
/// them or free boxes, with random scores.
fn arb_instance() -> impl Strategy<Value = Instance> {
    let gt = (0usize..3, -10.0..10.0f64, 5.0..30.0f64, 20.0..80.0f64, 0i8..3);
    let det = (0usize..3, 0usize..12, -0.3..0.3f64, -0.3..0.3f64, 0.0..1.0f64, any::<bool>(), -10.0..10.0f64, 5.0..30.0f64);
    (proptest::collection::vec(gt, 0..10), proptest::collection::vec(det, 0..20)).prop_map(|(gts, dets)| {
        let mut map = GroundTruth::new();
        let mut all = Vec::new();
        for (f, x, z, px, occ) in gts {
            let l = ped_label(x, z, [0.8, 1.7, 0.6], 0.0, px, occ);
            map.entry(f.to_string()).or_insert_with(Vec::new).push(l.clone());
            all.push((f, l));
        }
        let dets = dets
            .into_iter()
            .map(|(f, pick, dx, dz, score, free, fx, fz)| {
                if !free && !all.is_empty() {
                    let (gf, l) = &all[pick % all.len()];
                    let mut r = BoxRecord::from_label(l);
                    r.x += dx;
                    r.z += dz;
                    (gf.to_string(), score, r)
                } else {
                    (f.to_string(), score, BoxRecord::from_label(&ped_label(fx, fz, [0.8, 1.7, 0.6], 0.0, 40.0, 0)))
                }
            })
            .collect();
        Instance { gts: map, dets }
    })
}

fn all_levels() -> [Difficulty; 3] {
    [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ap_depends_only_on_score_ranking(inst in arb_instance()) {
        let a = inst.detections(|s| s);
        let b = inst.detections(|s| (3.0 * s).exp() - 7.0);
        for interp in [Interpolation::R11, Interpolation::R40] {
            let opts = ApOptions { interpolation: interp, ..ApOptions::default() };
            for d in all_levels() {
                let ra = average_precision(&a, &inst.gts, &ObjectClass::Pedestrian, d, &opts);
                let rb = average_precision(&b, &inst.gts, &ObjectClass::Pedestrian, d, &opts);
                prop_assert_eq!(ra.ap, rb.ap);
            }
        }
    }

    #[test]
    fn appended_lowest_false_positive_never_helps(inst in arb_instance()) {
        let base = inst.detections(|s| s);
        let mut more = base.clone();
        more.push("0", -1.0, BoxRecord::from_label(&ped_label(500.0, 500.0, [0.8, 1.7, 0.6], 0.0, 40.0, 0)));
        for d in all_levels() {
            let before = average_precision(&base, &inst.gts, &ObjectClass::Pedestrian, d, &ApOptions::default());
            let after = average_precision(&more, &inst.gts, &ObjectClass::Pedestrian, d, &ApOptions::default());
            match (before.ap, after.ap) {
                (Some(x), Some(y)) => prop_assert!(y <= x),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn perfect_duplicates_score_full_marks(inst in arb_instance()) {
        let mut dets = DetectionSet::default();
        for (f, labels) in &inst.gts {
            for l in labels {
                dets.push(f, 1.0, BoxRecord::from_label(l));
            }
        }
        for interp in [Interpolation::R11, Interpolation::R40] {
            let opts = ApOptions { interpolation: interp, ..ApOptions::default() };
            for d in all_levels() {
                let r = average_precision(&dets, &inst.gts, &ObjectClass::Pedestrian, d, &opts);
                if r.num_gt > 0 {
                    prop_assert!((r.ap.unwrap() - 100.0).abs() < 1e-9);
                } else {
                    prop_assert_eq!(r.ap, None);
                }
            }
        }
    }

    #[test]
    fn recall_is_monotone_in_proposal_count(inst in arb_instance()) {
        let mut props = ProposalSet::default();
        for (rank, (f, _, r)) in inst.dets.iter().enumerate() {
            props.push(f, Proposal { rank: rank as u64, record: r.clone() });
        }
        let ns: Vec<usize> = (1..=25).collect();
        let c = recall_at_n(&props, &inst.gts, &ObjectClass::Pedestrian, &ns, &RecallOptions::default()).unwrap();
        for w in c.points.windows(2) {
            prop_assert!(w[1].recall >= w[0].recall);
        }
    }

    #[test]
    fn coverage_mass_totals_one(inst in arb_instance(), l in 0.4..2.0f64, w in 0.3..1.0f64) {
        let cfg = AnchorConfig { area: CropArea { x_range: (-12.0, 12.0), z_range: (0.0, 32.0) }, ..AnchorConfig::default() };
        let set = generate_anchors(&ObjectClass::Pedestrian, &[[l, 1.7, w]], &cfg).unwrap();
        let anchors = SharedAnchors(IndexedAnchors::new(&set));
        let h = coverage_histogram(&inst.gts, &anchors, &ObjectClass::Pedestrian, 1, 20, &cfg.area).unwrap();
        if h.evaluated > 0 {
            prop_assert!((h.normalized_counts.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        } else {
            prop_assert!(h.empty);
        }
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let mut gts = GroundTruth::new();
    for f in 0..40 {
        let labels = (0..5).map(|k| ped_label(-8.0 + 3.3 * k as f64 + 0.1 * f as f64, 6.0 + k as f64 * 4.1, [0.9, 1.7, 0.6], 0.3 * k as f64, 50.0, 0)).collect();
        gts.insert(format!("{f:06}"), labels);
    }
    let cfg = AnchorConfig::default();
    let set = generate_anchors(&ObjectClass::Pedestrian, &[[0.8, 1.7, 0.6], [1.2, 1.8, 0.8]], &cfg).unwrap();
    let anchors = SharedAnchors(IndexedAnchors::new(&set));
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| coverage_histogram(&gts, &anchors, &ObjectClass::Pedestrian, 2, 20, &cfg.area).unwrap())
    };
    assert_eq!(run(1), run(4));
}
