use cap_core::kitti_io::{
    parse_calib_file, parse_label_file, read_point_cloud, transform_to_rect_camera, write_calib_file,
    write_label_file, write_point_cloud, BBox2D, CalibrationSet, Dimensions, Frame, ObjectClass, ObjectLabel,
    Point, PointCloud,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rotation(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|a| a / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn random_calib(rng: &mut ChaCha8Rng) -> CalibrationSet {
    let mut axis = || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0)];
    let r_tr = rotation(axis(), 1.3);
    let r0 = rotation(axis(), 0.02);
    let t = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let mut tr = [[0.0; 4]; 3];
    for i in 0..3 {
        tr[i][..3].copy_from_slice(&r_tr[i]);
        tr[i][3] = t[i];
    }
    CalibrationSet { p2: [[721.5, 0.0, 609.6, 44.9], [0.0, 721.5, 172.9, 0.2], [0.0, 0.0, 1.0, 0.003]], r0_rect: r0, tr_velo_to_cam: tr }
}

/// Dense 4×4 homogeneous product `R0 · Tr` applied to `[p; 1]`.
fn matrix_oracle(c: &CalibrationSet, p: [f64; 3]) -> [f64; 3] {
    let mut r0 = [[0.0; 4]; 4];
    let mut tr = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            r0[i][j] = c.r0_rect[i][j];
        }
        tr[i] = c.tr_velo_to_cam[i];
    }
    r0[3][3] = 1.0;
    tr[3][3] = 1.0;
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = (0..4).map(|k| r0[i][k] * tr[k][j]).sum();
        }
    }
    let h = [p[0], p[1], p[2], 1.0];
    let out: Vec<f64> = (0..3).map(|i| (0..4).map(|k| m[i][k] * h[k]).sum()).collect();
    [out[0], out[1], out[2]]
}

#[test]
fn transform_matches_dense_matrix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let calib = random_calib(&mut rng);
    let pts: Vec<Point> = (0..10)
        .map(|_| Point {
            x: rng.random_range(-50.0..50.0),
            y: rng.random_range(-50.0..50.0),
            z: rng.random_range(-3.0..3.0),
            reflectance: rng.random_range(0.0..1.0),
        })
        .collect();
    let pc = PointCloud::new(pts.clone(), Frame::Velodyne).unwrap();
    let out = transform_to_rect_camera(&pc, &calib).unwrap();
    assert_eq!(out.frame_tag, Frame::RectCamera);
    for (p, q) in pts.iter().zip(&out.points) {
        let e = matrix_oracle(&calib, [p.x, p.y, p.z]);
        assert!((q.x - e[0]).abs() < 1e-6 && (q.y - e[1]).abs() < 1e-6 && (q.z - e[2]).abs() < 1e-6);
        assert_eq!(q.reflectance, p.reflectance);
    }
}

#[test]
fn calib_text_and_cloud_bytes_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let calib = random_calib(&mut rng);
    assert_eq!(parse_calib_file(&write_calib_file(&calib)).unwrap(), calib);

    let pts = (0..25)
        .map(|i| Point { x: i as f64 * 0.5, y: -1.25, z: 3.0, reflectance: 0.25 })
        .collect();
    let pc = PointCloud::new(pts, Frame::Velodyne).unwrap();
    assert_eq!(read_point_cloud(&write_point_cloud(&pc)).unwrap(), pc);
}

fn arb_label() -> impl Strategy<Value = ObjectLabel> {
    (
        prop_oneof![Just("Car"), Just("Pedestrian"), Just("Cyclist"), Just("Van")],
        0.0..1.0f64,
        0i8..=3,
        -3.14..3.14f64,
        (0.0..1000.0f64, 0.0..300.0f64, 1.0..200.0f64, 1.0..150.0f64),
        (0.2..4.0f64, 0.2..3.0f64, 0.2..6.0f64),
        (-40.0..40.0f64, -2.0..3.0f64, 0.0..80.0f64),
        -3.14..3.14f64,
        proptest::option::of(-10.0..10.0f64),
    )
        .prop_map(|(class, trunc, occ, alpha, (l, t, dw, dh), (h, w, len), (x, y, z), ry, score)| ObjectLabel {
            class_name: ObjectClass::from(class),
            truncation: trunc,
            occlusion: occ,
            alpha,
            bbox2d: BBox2D { left: l, top: t, right: l + dw, bottom: t + dh },
            dims: Dimensions { height: h, width: w, length: len },
            location: [x, y, z],
            rotation_y: ry,
            score,
        })
}

fn distance(a: &Point, b: &Point) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()
}

proptest! {
    #[test]
    fn label_text_roundtrip(labels in proptest::collection::vec(arb_label(), 0..8)) {
        let text = write_label_file(&labels);
        prop_assert_eq!(parse_label_file(&text).unwrap(), labels);
    }

    #[test]
    fn rect_transform_is_rigid(seed in any::<u64>(), coords in proptest::collection::vec((-60.0..60.0f64, -60.0..60.0f64, -3.0..3.0f64), 2..30)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let calib = random_calib(&mut rng);
        let pts: Vec<Point> = coords.iter().map(|&(x, y, z)| Point { x, y, z, reflectance: 0.0 }).collect();
        let pc = PointCloud::new(pts, Frame::Velodyne).unwrap();
        let out = transform_to_rect_camera(&pc, &calib).unwrap();
        prop_assert_eq!(out.len(), pc.len());
        for i in 0..pc.len() {
            for j in i + 1..pc.len() {
                let before = distance(&pc.points[i], &pc.points[j]);
                let after = distance(&out.points[i], &out.points[j]);
                prop_assert!((before - after).abs() <= 1e-5 * before + 1e-12);
            }
        }
    }
}
