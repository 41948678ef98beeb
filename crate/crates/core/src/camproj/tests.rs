use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn rotation(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn nadir_camera() -> CameraModel<f64> {
    CameraModel::pinhole(800.0, [32.0, 24.0], [5.0, -3.0, 400.0], IDENTITY, (64, 48)).unwrap()
}

#[test]
fn distortion_polynomial() {
    let mut cam = nadir_camera();
    assert_eq!(cam.distort(100.0, -40.0), (0.0, 0.0));
    cam.k1 = 1e-8;
    let (dx, dy) = cam.distort(100.0, 0.0);
    assert!((dx - 0.01).abs() < 1e-15);
    assert_eq!(dy, 0.0);
    cam.k2 = 3e-12;
    cam.p1 = 2e-6;
    cam.p2 = -1e-6;
    cam.p3 = 1e-7;
    assert_eq!(cam.distort(0.0, 0.0), (0.0, 0.0));
}

#[test]
fn optical_axis_hits_principal_point() {
    let cam = nadir_camera();
    let ip = cam.world_to_image([5.0, -3.0, 250.0]).unwrap();
    assert!((ip.x - 32.0).abs() < 1e-9 && (ip.y - 24.0).abs() < 1e-9);
    assert!(ip.in_front);
    assert!((ip.distance - 150.0).abs() < 1e-12);
}

#[test]
fn off_axis_point_with_identity_rotation() {
    let cam = nadir_camera();
    let (a, d) = (7.5, 300.0);
    let ip = cam.world_to_image([5.0 + a, -3.0, 400.0 - d]).unwrap();
    assert!((ip.x - (32.0 + 800.0 * a / d)).abs() < 1e-9);
    assert!((ip.y - 24.0).abs() < 1e-12);
}

#[test]
fn points_in_camera_plane_are_degenerate() {
    let cam = nadir_camera();
    assert!(matches!(cam.world_to_image([50.0, 0.0, 400.0]), Err(Error::DegenerateRay)));
    assert!(!cam.world_to_image([5.0, -3.0, 500.0]).unwrap().in_front);
}

#[test]
fn camera_rejects_bad_rotation() {
    let mut r = IDENTITY;
    r[2][2] = -1.0;
    assert!(CameraModel::pinhole(800.0, [0.0, 0.0], [0.0; 3], r, (8, 8)).is_err());
    r[2][2] = 1.1;
    assert!(CameraModel::pinhole(800.0, [0.0, 0.0], [0.0; 3], r, (8, 8)).is_err());
    assert!(CameraModel::pinhole(-1.0, [0.0, 0.0], [0.0; 3], IDENTITY, (8, 8)).is_err());
}

#[test]
fn camera_json_uses_documented_names() {
    let cam = nadir_camera();
    let json = serde_json::to_value(&cam).unwrap();
    for key in ["f", "x0", "y0", "k1", "k2", "k3", "p1", "p2", "p3", "X0", "Y0", "Z0", "R", "width", "height"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let back: CameraModel<f64> = serde_json::from_value(json).unwrap();
    assert_eq!(back, cam);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_lies_on_the_ray(
        ax in -1.0f64..1.0, ay in -1.0f64..1.0, angle in -0.4f64..0.4,
        px in -30.0f64..30.0, py in -30.0f64..30.0, depth in 50.0f64..500.0,
    ) {
        let r = rotation([ax, ay, 1.0], angle);
        let cam = CameraModel::pinhole(1200.0, [320.0, 240.0], [10.0, 20.0, 600.0], r, (640, 480)).unwrap();
        // build the point in camera coordinates then map to object space
        let u = [px, py, -depth];
        let point = [
            10.0 + r[0][0] * u[0] + r[1][0] * u[1] + r[2][0] * u[2],
            20.0 + r[0][1] * u[0] + r[1][1] * u[1] + r[2][1] * u[2],
            600.0 + r[0][2] * u[0] + r[1][2] * u[1] + r[2][2] * u[2],
        ];
        let ip = cam.world_to_image(point).unwrap();
        prop_assert!((ip.x - (320.0 + 1200.0 * px / depth)).abs() < 1e-9);
        prop_assert!((ip.y - (240.0 + 1200.0 * py / depth)).abs() < 1e-9);
        let back = cam.back_project(ip.x, ip.y, ip.distance);
        let again = cam.world_to_image(back).unwrap();
        prop_assert!((again.x - ip.x).abs() < 1e-9 && (again.y - ip.y).abs() < 1e-9);
    }

    #[test]
    fn distorted_projection_inverts_ray(
        x in 0.0f64..640.0, y in 0.0f64..480.0, dist in 100.0f64..900.0,
    ) {
        let mut cam = CameraModel::pinhole(1500.0, [320.0, 240.0], [0.0, 0.0, 1000.0], rotation([0.2, -0.1, 1.0], 0.3), (640, 480)).unwrap();
        cam.k1 = 2e-8;
        cam.k2 = -1e-14;
        cam.p1 = 3e-7;
        cam.p2 = -2e-7;
        let point = cam.back_project(x, y, dist);
        let ip = cam.world_to_image(point).unwrap();
        prop_assert!((ip.x - x).abs() < 1e-6 && (ip.y - y).abs() < 1e-6);
        prop_assert!((ip.distance - dist).abs() < 1e-9 * dist);
    }
}

fn ray_point(cam: &CameraModel<f64>, x: f64, y: f64, dist: f64) -> [f64; 3] {
    cam.back_project(x, y, dist)
}

#[test]
fn z_buffer_keeps_nearest_point() {
    let cam = nadir_camera();
    let far = ray_point(&cam, 10.2, 7.1, 120.0);
    let near = ray_point(&cam, 9.8, 6.9, 100.0);
    for cloud in [vec![far, near], vec![near, far]] {
        let out = project_cloud(&cam, &PointCloud::new(cloud).unwrap()).unwrap();
        assert!((out.depth.z.at(10, 7) - 100.0).abs() < 1e-9);
        assert_eq!(out.hits.at(10, 7), 2);
        assert_eq!(out.occluded, 1);
        assert_eq!(out.depth.valid.count(), 1);
    }
}

#[test]
fn z_buffer_wins_every_constructed_collision() {
    let cam = nadir_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut points = Vec::new();
    let mut expect = Raster::filled(64, 48, f64::INFINITY);
    for _ in 0..2000 {
        let (x, y) = (rng.random_range(0..64usize), rng.random_range(0..48usize));
        let d = rng.random_range(50.0..390.0);
        let (jx, jy) = (rng.random_range(-0.45..0.45), rng.random_range(-0.45..0.45));
        points.push(ray_point(&cam, x as f64 + jx, y as f64 + jy, d));
        if d < expect.at(x, y) {
            expect.set(x, y, d);
        }
    }
    let out = project_cloud(&cam, &PointCloud::new(points).unwrap()).unwrap();
    for y in 0..48 {
        for x in 0..64 {
            let e = expect.at(x, y);
            assert_eq!(out.depth.valid.at(x, y), e.is_finite());
            if e.is_finite() {
                assert!((out.depth.z.at(x, y) - e).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn z_buffer_is_idempotent() {
    let cam = nadir_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let points: Vec<[f64; 3]> = (0..1500)
        .map(|_| ray_point(&cam, rng.random_range(-2.0..66.0), rng.random_range(-2.0..50.0), rng.random_range(60.0..380.0)))
        .collect();
    let cloud = PointCloud::new(points).unwrap();
    let first = project_cloud(&cam, &cloud).unwrap();
    assert!(first.outside > 0);
    let kept: Vec<[f64; 3]> = first
        .point_index
        .as_slice()
        .iter()
        .flatten()
        .map(|&i| cloud.points[i])
        .collect();
    let second = project_cloud(&cam, &PointCloud::new(kept).unwrap()).unwrap();
    assert_eq!(second.depth, first.depth);
    assert_eq!(second.occluded, 0);
}

#[test]
fn unusable_clouds_are_rejected() {
    let cam = nadir_camera();
    let behind = PointCloud::new(vec![[5.0, -3.0, 500.0], [0.0, 0.0, 450.0]]).unwrap();
    assert!(matches!(project_cloud(&cam, &behind), Err(Error::NoVisiblePoints)));
    let empty = PointCloud::<f64>::new(vec![]).unwrap();
    assert!(matches!(project_cloud(&cam, &empty), Err(Error::EmptyInput(_))));
}

fn sparse_map(w: usize, h: usize, keep: impl Fn(usize, usize) -> bool, f: impl Fn(f64, f64) -> f64) -> DepthMap<f64> {
    let z = Raster::from_fn(w, h, |x, y| if keep(x, y) { f(x as f64, y as f64) } else { 0.0 });
    let valid = Raster::from_fn(w, h, &keep);
    DepthMap::new(z, valid, None, Frame::ImageFrame).unwrap()
}

#[test]
fn dense_input_passes_through() {
    let d = sparse_map(7, 5, |_, _| true, |x, y| (x * 0.37).sin() + y.sqrt());
    let out = fill_holes(&d).unwrap();
    assert_eq!(out.depth.z, d.z);
    assert_eq!(out.extrapolated.count(), 0);
}

#[test]
fn triangle_reproduces_plane() {
    let corners = [(0, 0), (9, 1), (3, 8)];
    let plane = |x: f64, y: f64| 2.0 - 0.5 * x + 1.25 * y;
    let d = sparse_map(10, 9, |x, y| corners.contains(&(x, y)), plane);
    let out = fill_holes(&d).unwrap();
    // (3, 3) lies inside the triangle
    assert!((out.depth.z.at(3, 3) - plane(3.0, 3.0)).abs() < 1e-12);
    assert!(!out.extrapolated.at(3, 3));
    assert!(out.extrapolated.at(9, 8));
    assert_eq!(out.depth.valid.count(), 90);
}

#[test]
fn collinear_samples_are_insufficient() {
    let d = sparse_map(8, 8, |x, y| x == y, |x, _| x);
    assert!(matches!(fill_holes(&d), Err(Error::InsufficientSamples)));
    let d = sparse_map(8, 8, |x, y| x + y == 0, |x, _| x);
    assert!(matches!(fill_holes(&d), Err(Error::InsufficientSamples)));
}

/// Delaunay triangles by the empty-circumcircle rule, checked over all triples.
fn brute_force_delaunay(pts: &[(f64, f64)]) -> Vec<[usize; 3]> {
    let n = pts.len();
    let mut tris = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let det = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                if det.abs() < 1e-12 {
                    continue;
                }
                let d = 2.0 * det;
                let (b2, c2) = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2), (c.0 - a.0).powi(2) + (c.1 - a.1).powi(2));
                let ux = a.0 + ((c.1 - a.1) * b2 - (b.1 - a.1) * c2) / d;
                let uy = a.1 + ((b.0 - a.0) * c2 - (c.0 - a.0) * b2) / d;
                let r2 = (a.0 - ux).powi(2) + (a.1 - uy).powi(2);
                let empty = pts
                    .iter()
                    .enumerate()
                    .all(|(m, p)| m == i || m == j || m == k || (p.0 - ux).powi(2) + (p.1 - uy).powi(2) >= r2 * (1.0 - 1e-12));
                if empty {
                    tris.push([i, j, k]);
                }
            }
        }
    }
    tris
}

#[test]
fn sparse_quadratic_matches_brute_force_triangulation() {
    let (w, h) = (64, 64);
    let f = |x: f64, y: f64| (x * x + y * y) / 64.0 + 0.3 * x - 0.7 * y;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let keep = Raster::from_fn(w, h, |_, _| rng.random::<f64>() < 0.1);
    let d = sparse_map(w, h, |x, y| keep.at(x, y), f);
    let out = fill_holes(&d).unwrap();

    let pts: Vec<(f64, f64)> = (0..w * h)
        .filter(|&i| keep.as_slice()[i])
        .map(|i| ((i % w) as f64, (i / w) as f64))
        .collect();
    let tris = brute_force_delaunay(&pts);
    let (mut ours_err, mut oracle_err) = (0.0f64, 0.0f64);
    for y in 0..h {
        for x in 0..w {
            assert!(out.depth.z.at(x, y).is_finite());
            if keep.at(x, y) {
                assert_eq!(out.depth.z.at(x, y), d.z.at(x, y));
                continue;
            }
            let q = (x as f64, y as f64);
            let mut oracle = None;
            for t in &tris {
                let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
                let det = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                let l1 = ((q.0 - a.0) * (c.1 - a.1) - (q.1 - a.1) * (c.0 - a.0)) / det;
                let l2 = ((b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0)) / det;
                let l0 = 1.0 - l1 - l2;
                if l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12 {
                    oracle = Some(l0 * f(a.0, a.1) + l1 * f(b.0, b.1) + l2 * f(c.0, c.1));
                    break;
                }
            }
            let got = out.depth.z.at(x, y);
            match oracle {
                Some(v) => {
                    assert!(!out.extrapolated.at(x, y));
                    assert!((got - v).abs() < 1e-9, "({x},{y}) {got} vs {v}");
                    ours_err = ours_err.max((got - f(q.0, q.1)).abs());
                    oracle_err = oracle_err.max((v - f(q.0, q.1)).abs());
                }
                None => {
                    assert!(out.extrapolated.at(x, y));
                    let nearest = pts
                        .iter()
                        .map(|p| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2))
                        .fold(f64::INFINITY, f64::min);
                    let candidates: Vec<f64> = pts
                        .iter()
                        .filter(|p| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2) == nearest)
                        .map(|p| f(p.0, p.1))
                        .collect();
                    assert!(candidates.iter().any(|v| (v - got).abs() < 1e-12));
                }
            }
        }
    }
    assert!(ours_err <= oracle_err + 1e-9);
}
