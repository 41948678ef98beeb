//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::{Duration, Instant};

use polarfuse::camproj::{fill_holes, project_cloud, CameraModel, PointCloud};
use polarfuse::evalkit::{self, Roi};
use polarfuse::fresnel::{
    brewster_angle, dop_diffuse, dop_specular, zenith_from_dop_diffuse, zenith_from_dop_specular, Branch,
    Material,
};
use polarfuse::fuse::{combine, fuse, range_to_height, rescale_to_object, FusionConfig, KnownDistance, Normalization};
use polarfuse::heightsolve::{
    assemble, solve_height, AlbedoNormalization, AssembleConfig, LightSource, SolverConfig,
};
use polarfuse::pipeline::{run_pipeline, run_synth, PipelineConfig, SynthConfig};
use polarfuse::polarstack::{decompose, DecomposeConfig, PolarizationMap, PolarizerStack};
use polarfuse::synthoracle::{
    forward_polarize, make_mvs_like, polarizer_intensity, render_truth, MvsLikeSpec, NoiseSpec, SurfaceKind,
    SurfaceSpec, TruthRender,
};
use polarfuse::{DepthMap, Frame, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn six_angles() -> Vec<f64> {
    (0..6).map(|k| (30.0 * k as f64).to_radians()).collect()
}

fn phase_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (s / n.max(1) as f64).sqrt()
}

/// RMS of `a - b` over `valid` after removing the mean difference.
fn rmse_after_mean(a: &Raster<f64>, b: &Raster<f64>, valid: &Raster<bool>) -> f64 {
    let d: Vec<f64> = (0..a.len())
        .filter(|&i| valid.as_slice()[i])
        .map(|i| a.as_slice()[i] - b.as_slice()[i])
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    rms(d.iter().map(|v| v - mean))
}

fn sinusoid_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 1000;
    let truth: Vec<(f64, f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.1..1.0), rng.random_range(0.0..0.9), rng.random_range(0.0..PI)))
        .collect();
    let frames = six_angles()
        .into_iter()
        .map(|a| {
            let img = Raster::from_vec(n, 1, truth.iter().map(|&(i, r, p)| polarizer_intensity(i, r, p, a)).collect())
                .unwrap();
            (a, img)
        })
        .collect();
    let stack = PolarizerStack::new(frames).map_err(|e| e.to_string())?;
    // every sampled pixel counts, however weakly polarized
    let cfg = DecomposeConfig {
        eps_rho: 0.0,
        ..DecomposeConfig::default()
    };
    let map = decompose(&stack, &cfg).map_err(|e| e.to_string())?;
    let (mut ei, mut er, mut ep) = (0.0f64, 0.0f64, 0.0f64);
    for (k, &(i, r, p)) in truth.iter().enumerate() {
        ei = ei.max((map.i_un.at(k, 0) - i).abs());
        er = er.max((map.rho.at(k, 0) - r).abs());
        ep = ep.max(phase_error(map.phi.at(k, 0), p));
    }
    ensure(ei <= 1e-9 && er <= 1e-9 && ep <= 1e-9, || {
        format!("max errors i_un {ei:.2e}, rho {er:.2e}, phi {ep:.2e}")
    })?;
    Ok(format!("max errors i_un {ei:.1e}, rho {er:.1e}, phi {ep:.1e} over {n} pixels"))
}

fn fresnel_round_trip() -> Check {
    let mut worst = 0.0f64;
    for eta in [1.3, 1.4, 1.5, 1.6, 1.8] {
        for deg in 1..=85 {
            let theta = (deg as f64).to_radians();
            let rho = dop_diffuse(theta, eta).map_err(|e| e.to_string())?;
            let back = zenith_from_dop_diffuse(rho, eta).map_err(|e| e.to_string())?.theta;
            worst = worst.max((back - theta).abs());
        }
    }
    ensure(worst < 1e-6, || format!("diffuse inversion error {worst:.2e} rad"))?;
    let mut brewster = 0.0f64;
    let mut specular = 0.0f64;
    for eta in [1.3f64, 1.4, 1.5, 1.6, 1.8] {
        brewster = brewster.max((dop_specular(eta.atan(), eta).map_err(|e| e.to_string())? - 1.0).abs());
        let b = brewster_angle(eta);
        for k in 1..40 {
            for (branch, theta) in [
                (Branch::BelowBrewster, b * k as f64 / 40.0),
                (Branch::AboveBrewster, b + (FRAC_PI_2 - b) * k as f64 / 40.0),
            ] {
                let rho = dop_specular(theta, eta).map_err(|e| e.to_string())?;
                let back = zenith_from_dop_specular(rho, eta, branch).map_err(|e| e.to_string())?;
                let again = dop_specular(back, eta).map_err(|e| e.to_string())?;
                specular = specular.max((again - rho).abs());
            }
        }
    }
    ensure(brewster <= 1e-12, || format!("specular at Brewster off by {brewster:.2e}"))?;
    ensure(specular <= 1e-12, || format!("specular forward check {specular:.2e}"))?;
    Ok(format!(
        "diffuse {worst:.1e} rad, Brewster {brewster:.1e}, specular branches {specular:.1e}"
    ))
}

fn known_albedo() -> AssembleConfig {
    AssembleConfig {
        albedo: AlbedoNormalization::Known { albedo: 1.0 },
        ..AssembleConfig::default()
    }
}

fn surface(kind: SurfaceKind, w: usize, h: usize, pitch: f64) -> SurfaceSpec {
    SurfaceSpec {
        surface: kind,
        width: w,
        height: h,
        pixel_pitch: pitch,
    }
}

fn polarization_of(truth: &TruthRender<f64>, light: &LightSource<f64>) -> Result<PolarizationMap<f64>, String> {
    let stack = forward_polarize(truth, &Material::default(), light, &six_angles(), &NoiseSpec::default())
        .map_err(|e| e.to_string())?;
    decompose(&stack, &DecomposeConfig::default()).map_err(|e| e.to_string())
}

fn solve(map: &PolarizationMap<f64>, light: &LightSource<f64>, solver: &SolverConfig) -> Result<DepthMap<f64>, String> {
    let sys = assemble(map, &Material::default(), light, &known_albedo()).map_err(|e| e.to_string())?;
    let sol = solve_height(&sys, solver).map_err(|e| e.to_string())?;
    ensure(sol.converged, || "solver did not converge".into())?;
    Ok(sol.depth)
}

fn height_solver() -> Check {
    let light = LightSource::from_direction([0.5, 0.3, 1.0]).map_err(|e| e.to_string())?;
    let plane = render_truth::<f64>(&surface(SurfaceKind::Plane { a: 0.3, b: -0.2, c: 5.0 }, 64, 64, 1.0))
        .map_err(|e| e.to_string())?;
    let z = solve(&polarization_of(&plane, &light)?, &light, &SolverConfig::default())?;
    let plane_rmse = rmse_after_mean(&z.z, &plane.depth.z, &z.valid);
    ensure(plane_rmse < 1e-6, || format!("tilted plane rmse {plane_rmse:.2e}"))?;

    let cap = render_truth::<f64>(&surface(
        SurfaceKind::SphereCap {
            radius: 64.0,
            center: [31.5, 31.5],
            cap_height: 20.0,
        },
        64,
        64,
        1.0,
    ))
    .map_err(|e| e.to_string())?;
    let map = polarization_of(&cap, &light)?;
    let z = solve(&map, &light, &SolverConfig::default())?;
    let cap_rmse = rmse_after_mean(&z.z, &cap.depth.z, &z.valid);
    ensure(cap_rmse < 0.01 * 20.0, || format!("sphere cap rmse {cap_rmse:.3} of height 20"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut flipped = map.clone();
    for v in flipped.phi.as_mut_slice() {
        if rng.random_bool(0.5) {
            *v = (*v + PI).rem_euclid(PI);
        }
    }
    let tight = SolverConfig {
        tolerance: 1e-15,
        max_iterations: 20_000,
    };
    let a = solve(&map, &light, &tight)?;
    let b = solve(&flipped, &light, &tight)?;
    let flip = rms(a.z.as_slice().iter().zip(b.z.as_slice()).map(|(x, y)| x - y));
    ensure(flip < 1e-12, || format!("phase flip changed z by {flip:.2e} rms"))?;
    Ok(format!(
        "plane {plane_rmse:.1e}, cap {:.2}% of height, phase flip {flip:.1e}",
        100.0 * cap_rmse / 20.0
    ))
}

fn rotation(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|v| v / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ]
}

fn projection() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut axis_err = 0.0f64;
    let mut distortion = 0.0f64;
    for _ in 0..200 {
        let axis = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let r = rotation(axis, rng.random_range(-0.5..0.5));
        let center = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(100.0..500.0)];
        let pp = [rng.random_range(20.0..40.0), rng.random_range(15.0..30.0)];
        let cam = CameraModel::pinhole(rng.random_range(200.0..2000.0), pp, center, r, (64, 48))
            .map_err(|e| e.to_string())?;
        let d = rng.random_range(10.0..400.0);
        // the optical axis runs along minus the third rotation row
        let point = [0, 1, 2].map(|k| center[k] - d * r[2][k]);
        let ip = cam.world_to_image(point).map_err(|e| e.to_string())?;
        axis_err = axis_err.max((ip.x - pp[0]).abs().max((ip.y - pp[1]).abs()));
        let (dx, dy) = cam.distort(rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0));
        distortion = distortion.max(dx.abs()).max(dy.abs());
    }
    ensure(axis_err < 1e-9, || format!("optical axis off principal point by {axis_err:.2e} px"))?;
    ensure(distortion == 0.0, || format!("zero-coefficient distortion moved a point by {distortion:.2e}"))?;

    let cam = CameraModel::pinhole(800.0, [32.0, 24.0], [5.0, -3.0, 400.0], rotation([0.2, -0.4, 1.0], 0.3), (64, 48))
        .map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    let mut nearest = Raster::filled(64, 48, f64::INFINITY);
    for _ in 0..3000 {
        let (x, y) = (rng.random_range(0..64usize), rng.random_range(0..48usize));
        let d = rng.random_range(50.0..390.0);
        let (jx, jy) = (rng.random_range(-0.45..0.45), rng.random_range(-0.45..0.45));
        points.push(cam.back_project(x as f64 + jx, y as f64 + jy, d));
        if d < nearest.at(x, y) {
            nearest.set(x, y, d);
        }
    }
    let out = project_cloud(&cam, &PointCloud::new(points).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (mut collisions, mut kept) = (0, 0);
    for y in 0..48 {
        for x in 0..64 {
            if out.hits.at(x, y) > 1 {
                collisions += 1;
                if out.depth.valid.at(x, y) && (out.depth.z.at(x, y) - nearest.at(x, y)).abs() < 1e-9 {
                    kept += 1;
                }
            }
        }
    }
    ensure(collisions > 0 && kept == collisions, || format!("z-buffer kept {kept} of {collisions}"))?;

    let relief = render_truth::<f64>(&surface(
        SurfaceKind::Composite {
            parts: vec![
                SurfaceKind::SphereCap {
                    radius: 30.0,
                    center: [40.0, 30.0],
                    cap_height: 8.0,
                },
                SurfaceKind::Plane { a: 0.1, b: -0.05, c: 2.0 },
            ],
        },
        80,
        60,
        0.5,
    ))
    .map_err(|e| e.to_string())?;
    let spec = MvsLikeSpec {
        factor: 3,
        hidden_offset: Some(4.0),
        ..MvsLikeSpec::default()
    };
    let mvs = make_mvs_like(&relief.depth, &spec, &NoiseSpec::default()).map_err(|e| e.to_string())?;
    let proj = project_cloud(&mvs.camera, &mvs.cloud).map_err(|e| e.to_string())?;
    let mut round_trip = 0.0f64;
    for y in 0..60 {
        for x in 0..80 {
            if proj.depth.valid.at(x, y) {
                round_trip = round_trip.max((proj.depth.z.at(x, y) - mvs.range.z.at(x, y)).abs());
            }
        }
    }
    ensure(proj.depth.valid.count() > 0 && round_trip < 1e-6, || {
        format!("cloud round trip error {round_trip:.2e}")
    })?;
    Ok(format!(
        "axis {axis_err:.1e} px, z-buffer {kept}/{collisions}, cloud round trip {round_trip:.1e} over {} px",
        proj.depth.valid.count()
    ))
}

/// Amplitude of the `sin/cos(2 pi t / wavelength)` component of `z`, where
/// `t` is the x (`along_x`) or y coordinate, over whole periods.
fn band_amplitude(z: &Raster<f64>, wavelength: f64, along_x: bool) -> f64 {
    let (w, h) = z.dims();
    let span = |n: usize| ((n as f64 / wavelength).floor() * wavelength) as usize;
    let (nx, ny) = if along_x { (span(w), h) } else { (w, span(h)) };
    let (mut s, mut c) = (0.0, 0.0);
    for y in 0..ny {
        for x in 0..nx {
            let t = if along_x { x } else { y } as f64;
            let a = 2.0 * PI * t / wavelength;
            s += z.at(x, y) * a.sin();
            c += z.at(x, y) * a.cos();
        }
    }
    2.0 * (s * s + c * c).sqrt() / (nx * ny) as f64
}

fn fusion_split() -> Check {
    let (n, g) = (129, 4);
    let dense = |f: &dyn Fn(f64, f64) -> f64, pitch: Option<f64>, frame: Frame| {
        DepthMap::dense(Raster::from_fn(n, n, |x, y| f(x as f64, y as f64)), pitch, frame).unwrap()
    };
    let (a_mvs, a_polar) = (2.0, 0.3);
    let mvs = dense(&|x, _| a_mvs * (2.0 * PI * x / 32.0).sin(), Some(0.5), Frame::ObjectFrame);
    let polar = dense(&|_, y| a_polar * (2.0 * PI * y / 4.0 + 0.7).sin(), None, Frame::PolarizationFrame);
    let cfg = FusionConfig {
        grid_spacing: g,
        sigma: 0.0,
        normalization: Normalization::MvsReference,
        ..FusionConfig::default()
    };
    let out = fuse(&polar, &mvs, &cfg).map_err(|e| e.to_string())?;
    let low = band_amplitude(&out.combined.z, 32.0, true) / a_mvs;
    // polarization heights are in pixels; in object units they scale by the pitch
    let high = band_amplitude(&out.combined.z, 4.0, false) / (a_polar * 0.5);
    ensure((low - 1.0).abs() < 0.1 && (high - 1.0).abs() < 0.1, || {
        format!("band recovery: 32 px {low:.3}, 4 px {high:.3}")
    })?;
    let mut node = 0.0f64;
    for &y in &out.raw_grid.ys {
        for &x in &out.raw_grid.xs {
            node = node.max((out.combined.z.at(x, y) - mvs.z.at(x, y)).abs());
        }
    }
    ensure(node <= 1e-12, || format!("node mismatch {node:.2e}"))?;
    let (passed, _) = combine(&mvs, &Raster::filled(n, n, 0.0), None, &cfg).map_err(|e| e.to_string())?;
    ensure(passed == mvs, || "zero offset altered the surface".into())?;
    Ok(format!("band recovery 32 px {low:.3}, 4 px {high:.3}; node error {node:.1e}; dz = 0 bitwise"))
}

fn end_to_end_run(
    kind: SurfaceKind,
    bias: Option<SurfaceKind>,
    n: usize,
    pitch: f64,
    light: [f64; 3],
) -> Result<(TruthRender<f64>, DepthMap<f64>, f64), String> {
    let spec = surface(kind.clone(), n, n, pitch);
    let truth = render_truth::<f64>(&spec).map_err(|e| e.to_string())?;
    let seen = match bias {
        Some(b) => render_truth::<f64>(&surface(SurfaceKind::Composite { parts: vec![kind, b] }, n, n, pitch))
            .map_err(|e| e.to_string())?,
        None => truth.clone(),
    };
    let light = LightSource::from_direction(light).map_err(|e| e.to_string())?;
    let z_polar = solve(&polarization_of(&seen, &light)?, &light, &SolverConfig::default())?;

    // sparse but exact at its samples, like photogrammetric points
    let coarse = MvsLikeSpec {
        factor: 4,
        ..MvsLikeSpec::default()
    };
    let mvs = make_mvs_like(&truth.depth, &coarse, &NoiseSpec::default()).map_err(|e| e.to_string())?;
    let sparse = project_cloud(&mvs.camera, &mvs.cloud).map_err(|e| e.to_string())?;
    let filled = fill_holes(&sparse.depth).map_err(|e| e.to_string())?;
    let z_mvs = range_to_height(&filled.depth, &mvs.camera).map_err(|e| e.to_string())?;

    let cfg = FusionConfig {
        grid_spacing: 4,
        sigma: 1.0,
        normalization: Normalization::MvsReference,
        ..FusionConfig::default()
    };
    let fused = fuse(&z_polar, &z_mvs, &cfg).map_err(|e| e.to_string())?;
    let (a, b) = ((n / 8, n / 2), (n - 1 - n / 8, n / 2));
    let dz = truth.depth.z.at(a.0, a.1) - truth.depth.z.at(b.0, b.1);
    let length = (((b.0 - a.0) as f64 * pitch).powi(2) + dz * dz).sqrt();
    let (scaled, scale) =
        rescale_to_object(&fused.combined, &KnownDistance { a, b, length }).map_err(|e| e.to_string())?;
    Ok((truth, scaled, scale))
}

fn end_to_end() -> Check {
    let amplitude = 0.5;
    let relief = SurfaceKind::SinusoidRelief {
        base: [0.02, -0.01, 1.0],
        amplitude,
        wavelength: 8.0,
        direction: 0.0,
    };
    let bias = SurfaceKind::Bowl {
        amplitude: 1.0,
        center: [70.0, 50.0],
        radius: 90.0,
    };
    let (truth, z, scale) = end_to_end_run(relief, Some(bias), 128, 0.5, [0.5, 0.3, 1.0])?;
    let rmse = rmse_after_mean(&z.z, &truth.depth.z, &z.valid);
    ensure(rmse < 0.05 * amplitude, || format!("relief rmse {:.2}% of amplitude", 100.0 * rmse / amplitude))?;
    ensure((scale - 1.0).abs() < 0.01, || format!("relief chord scale {scale:.4}"))?;

    let cap = SurfaceKind::SphereCap {
        radius: 32.0,
        center: [31.5, 31.5],
        cap_height: 10.0,
    };
    let (_, _, sphere_scale) = end_to_end_run(cap, None, 64, 1.0, [0.5, 0.3, 1.0])?;
    ensure((sphere_scale - 1.0).abs() < 0.01, || format!("sphere chord scale {sphere_scale:.4}"))?;
    Ok(format!(
        "relief rmse {:.2}% of amplitude, chord scale {scale:.4}, sphere chord scale {sphere_scale:.4}",
        100.0 * rmse / amplitude
    ))
}

fn evaluation_kit() -> Check {
    let sigma = 0.01;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let patch = DepthMap::dense(
        Raster::from_fn(100, 100, |x, y| 0.03 * x as f64 - 0.02 * y as f64 + 4.0 + noise.sample(&mut rng)),
        Some(0.05),
        Frame::ObjectFrame,
    )
    .map_err(|e| e.to_string())?;
    let report = evalkit::plane_fit_rmse(&patch, &Roi::full((100, 100)), 0.05).map_err(|e| e.to_string())?;
    let rel = report.rmse / sigma - 1.0;
    ensure(rel.abs() < 0.05, || format!("noise rmse off by {:.1}%", 100.0 * rel))?;

    // a +-0.1 checkerboard on a 4x4 patch is orthogonal to every plane
    let board = DepthMap::dense(
        Raster::from_fn(4, 4, |x, y| 0.5 * x as f64 + 0.25 * y as f64 + if (x + y) % 2 == 0 { 0.1 } else { -0.1 }),
        None,
        Frame::ObjectFrame,
    )
    .map_err(|e| e.to_string())?;
    let hand = evalkit::plane_fit_rmse(&board, &Roi::full((4, 4)), 0.04).map_err(|e| e.to_string())?;
    ensure((hand.rmse - 0.1).abs() < 1e-12 && (hand.rmse_over_gsd - 2.5).abs() < 1e-12, || {
        format!("hand case rmse {} ratio {}", hand.rmse, hand.rmse_over_gsd)
    })?;

    let row = serde_json::to_value(report.flatness_row("patch")).map_err(|e| e.to_string())?;
    for key in ["RMSE (mm)", "GSD (mm)", "RMSE/GSD"] {
        ensure(row.get(key).is_some(), || format!("report lacks {key}"))?;
    }
    // flatness figures reported for three objects: rmse, gsd, ratio
    let reported: [(f64, f64, f64); 3] = [(0.0486, 0.17, 0.285), (0.0028, 0.019, 0.147), (0.0059, 0.07, 0.084)];
    let worst = reported
        .iter()
        .map(|&(rmse, gsd, ratio)| (rmse / gsd - ratio).abs())
        .fold(0.0, f64::max);
    ensure(worst < 0.002, || format!("reported ratios differ from rmse/gsd by {worst}"))?;
    Ok(format!(
        "noise rmse within {:.1}% of sigma, hand ratio {:.3}, table fields present",
        100.0 * rel.abs(),
        hand.rmse_over_gsd
    ))
}

fn determinism() -> Check {
    let scenario: SynthConfig = toml::from_str(
        r#"
        [surface]
        width = 48
        height = 48
        pixel_pitch = 1.0
        [surface.surface]
        kind = "sphere_cap"
        radius = 40.0
        center = [23.5, 23.5]
        cap_height = 12.0
        [noise]
        intensity_sigma = 0.002
        depth_sigma = 0.01
        seed = 42
        [mvs]
        blur_sigma = 1.0
        factor = 4
        "#,
    )
    .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scene = dir.path().join("scene");
    run_synth(&scenario, &scene).map_err(|e| e.to_string())?;
    let mut hashes = Vec::new();
    for run in ["first", "second"] {
        let mut cfg = PipelineConfig::load(&scene).map_err(|e| e.to_string())?;
        cfg.paths.output = dir.path().join(run);
        let records = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        hashes.push(records.into_iter().flat_map(|r| r.outputs).collect::<Vec<_>>());
    }
    ensure(hashes[0] == hashes[1], || "output hashes differ between runs".into())?;
    Ok(format!("{} output hashes identical across reruns", hashes[0].len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("sinusoid round trip", sinusoid_round_trip, Duration::from_secs(1)),
        ("Fresnel round trip", fresnel_round_trip, Duration::from_secs(1)),
        ("height solver", height_solver, Duration::from_secs(30)),
        ("projection", projection, Duration::from_secs(10)),
        ("fusion frequency split", fusion_split, Duration::from_secs(5)),
        ("end-to-end", end_to_end, Duration::from_secs(60)),
        ("evaluation kit", evaluation_kit, Duration::from_secs(5)),
        ("determinism", determinism, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (k, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let verdict = match result {
            Ok(detail) if took <= *budget => ("PASS", detail),
            Ok(detail) => ("FAIL", format!("{detail}; took {took:.2?}, budget {budget:?}")),
            Err(reason) => ("FAIL", reason),
        };
        if verdict.0 == "FAIL" {
            failed += 1;
        }
        println!("acceptance {} {name}: {} ({took:.2?}) {}", k + 1, verdict.0, verdict.1);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
