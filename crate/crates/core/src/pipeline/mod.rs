//! File-based stage runners.
//!
//! Every stage reads its inputs from disk and writes its outputs into the
//! configured output directory under fixed names, so a full run and the same
//! stages run one at a time produce identical files:
//!
//! | stage     | reads                          | writes                                  |
//! |-----------|--------------------------------|-----------------------------------------|
//! | decompose | stack manifest                 | `i_un rho phi fit_residual` + masks     |
//! | zenith    | polarization map               | `theta`                                 |
//! | height    | polarization map               | `z_polar`                               |
//! | project   | cloud, camera                  | `range_sparse range z_mvs`              |
//! | fuse      | `z_polar`, `z_mvs`             | `dz z_combined`                         |
//! | eval      | `z_combined` (or `eval.input`) | `eval.json` and CSV tables              |
//!
//! Each stage also writes `<stage>.manifest.json` with the hashes of its
//! inputs and outputs; [`run_pipeline`] adds `manifest.json` for the run.

mod files;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use files::{
    digest, read_depth, read_polarization_map, sha256_file, write_depth, write_polarization_map,
    DepthMeta, FileDigest,
};

use crate::camproj::{fill_holes, project_cloud, CameraModel, PointCloud};
use crate::error::{Error, Result};
use crate::evalkit::{self, Roi};
use crate::fresnel::{zenith_map, Material};
use crate::fuse::{fuse, range_to_height, rescale_to_object, FusionConfig, KnownDistance, Normalization, Optimization};
use crate::heightsolve::{assemble, solve_height, AlbedoNormalization, AssembleConfig, LightSource, SolverConfig};
use crate::io::{self, pfm, png};
use crate::polarstack::{decompose, register_stack, DecomposeConfig, ManifestFrame, StackManifest};
use crate::raster::{DepthMap, Frame};
use crate::synthoracle::{
    forward_polarize, make_mvs_like, render_truth, MvsLikeSpec, NoiseSpec, SurfaceKind, SurfaceSpec,
};

/// Input files and the output directory. Relative paths resolve against
/// the directory of the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub stack: Option<PathBuf>,
    pub cloud: Option<PathBuf>,
    pub camera: Option<PathBuf>,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            stack: None,
            cloud: None,
            camera: None,
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeightStage {
    pub assemble: AssembleConfig,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuseStage {
    pub grid_spacing: usize,
    pub sigma: f64,
    pub normalization: Normalization,
    pub optimization: Optimization,
    /// Rescales the combined surface so these two pixels lie `length` apart.
    pub known_distance: Option<KnownDistance<f64>>,
}

impl Default for FuseStage {
    fn default() -> Self {
        let c = FusionConfig::default();
        FuseStage {
            grid_spacing: c.grid_spacing,
            sigma: c.sigma,
            normalization: c.normalization,
            optimization: c.optimization,
            known_distance: None,
        }
    }
}

impl FuseStage {
    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            grid_spacing: self.grid_spacing,
            sigma: self.sigma,
            normalization: self.normalization,
            optimization: self.optimization,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedRoi {
    pub label: String,
    #[serde(flatten)]
    pub roi: Roi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedProfile {
    pub label: String,
    /// Vertices in pixel coordinates.
    pub polyline: Vec<[f64; 2]>,
    /// Sample step in pixels.
    #[serde(default = "unit")]
    pub spacing: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalStage {
    /// Height raster to assess, relative to the output directory.
    pub input: PathBuf,
    /// Optional ground truth or competing surface (`.pfm`).
    pub reference: Option<PathBuf>,
    /// Ground sample distance; defaults to the input's pixel pitch.
    pub gsd: Option<f64>,
    pub rois: Vec<NamedRoi>,
    pub profiles: Vec<NamedProfile>,
    /// Also write whitespace-separated `.dat` columns for gnuplot.
    pub plot_data: bool,
}

impl Default for EvalStage {
    fn default() -> Self {
        EvalStage {
            input: PathBuf::from("z_combined.pfm"),
            reference: None,
            gsd: None,
            rois: Vec::new(),
            profiles: Vec::new(),
            plot_data: false,
        }
    }
}

/// Configuration shared by every stage, one TOML table per stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Refractive index of the object.
    pub eta: f64,
    /// Light direction in camera coordinates, `z` towards the camera.
    pub light: [f64; 3],
    /// Registers the stack onto its first frame with this search radius.
    pub register_radius: Option<usize>,
    pub paths: Paths,
    pub decompose: DecomposeConfig,
    pub height: HeightStage,
    pub fuse: FuseStage,
    pub eval: EvalStage,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            eta: 1.5,
            light: [0.0, 0.0, 1.0],
            register_radius: None,
            paths: Paths::default(),
            decompose: DecomposeConfig::default(),
            height: HeightStage::default(),
            fuse: FuseStage::default(),
            eval: EvalStage::default(),
        }
    }
}

/// Name of the config file looked up when a directory is given.
pub const CONFIG_FILE: &str = "pipeline.toml";

fn config_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(CONFIG_FILE)
    } else {
        path.to_path_buf()
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads a config file (or `dir/pipeline.toml`) and resolves its paths.
    pub fn load(path: &Path) -> Result<Self> {
        let file = config_file(path);
        let mut cfg: PipelineConfig = io::read_toml(&file)?;
        cfg.resolve_paths(file.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    /// Makes every relative input and output path relative to `base`.
    /// The eval input stays relative to the output directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [&mut p.stack, &mut p.cloud, &mut p.camera].into_iter().flatten() {
            resolve(base, path);
        }
        resolve(base, &mut p.output);
        if let Some(r) = &mut self.eval.reference {
            resolve(base, r);
        }
    }

    pub fn material(&self) -> Result<Material<f64>> {
        Material::new(self.eta)
    }

    pub fn light_source(&self) -> Result<LightSource<f64>> {
        LightSource::from_direction(self.light)
    }

    fn output(&self) -> Result<&Path> {
        io::create_dir(&self.paths.output)?;
        Ok(&self.paths.output)
    }
}

fn required<'a>(p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("paths.{name} is not set")))
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
        ))
    }
}

/// What one stage read and wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub params: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub summary: Value,
}

fn to_value<V: Serialize>(v: &V) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn finish(
    stage: &str,
    out: &Path,
    params: Value,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
    summary: Value,
) -> Result<StageRecord> {
    let record = StageRecord {
        stage: stage.to_string(),
        params,
        inputs: inputs.iter().map(|p| digest(p, out)).collect::<Result<_>>()?,
        outputs: outputs.iter().map(|p| digest(p, out)).collect::<Result<_>>()?,
        summary,
    };
    io::write_json(&out.join(format!("{stage}.manifest.json")), &record)?;
    Ok(record)
}

fn polmap_inputs(out: &Path) -> Vec<PathBuf> {
    ["i_un.pfm", "rho.pfm", "phi.pfm", "fit_residual.pfm"]
        .iter()
        .chain(&["polar_valid.png", "polar_measured.png", "specular.png", "rho_clamped.png"])
        .map(|n| out.join(n))
        .collect()
}

pub fn run_decompose(cfg: &PipelineConfig) -> Result<StageRecord> {
    let manifest_path = required(&cfg.paths.stack, "stack")?;
    require_file(manifest_path)?;
    let manifest = StackManifest::read(manifest_path)?;
    let mut stack = manifest.load::<f64>()?;
    if let Some(radius) = cfg.register_radius {
        stack = register_stack(&stack, None, radius)?.stack;
    }
    let map = decompose(&stack, &cfg.decompose)?;
    let out = cfg.output()?;
    let outputs = write_polarization_map(out, &map)?;
    let mut inputs = vec![manifest_path.to_path_buf()];
    inputs.extend(manifest.frames.iter().map(|f| f.path.clone()));
    finish(
        "decompose",
        out,
        json!({ "decompose": to_value(&cfg.decompose), "register_radius": cfg.register_radius }),
        &inputs,
        &outputs,
        json!({
            "frames": manifest.frames.len(),
            "valid": map.valid.count(),
            "measured": map.measured.count(),
            "rho_clamped": map.clamp_count(),
        }),
    )
}

pub fn run_zenith(cfg: &PipelineConfig) -> Result<StageRecord> {
    let out = cfg.output()?;
    let map = read_polarization_map::<f64>(out)?;
    let branch = cfg.height.assemble.branch;
    let zm = zenith_map(&map, &cfg.material()?, branch);
    let theta = DepthMap::new(zm.theta, zm.valid.clone(), None, Frame::PolarizationFrame)?;
    let mut outputs = write_depth(out, "theta", &theta)?;
    let saturated = out.join("theta_saturated.png");
    png::write_mask(&saturated, &zm.saturated)?;
    outputs.push(saturated);
    finish(
        "zenith",
        out,
        json!({ "eta": cfg.eta, "branch": to_value(&branch) }),
        &polmap_inputs(out),
        &outputs,
        json!({ "valid": zm.valid.count(), "saturated": zm.saturated.count() }),
    )
}

pub fn run_height(cfg: &PipelineConfig) -> Result<StageRecord> {
    let out = cfg.output()?;
    let map = read_polarization_map::<f64>(out)?;
    let system = assemble(&map, &cfg.material()?, &cfg.light_source()?, &cfg.height.assemble)?;
    let solution = solve_height(&system, &cfg.height.solver)?;
    let outputs = write_depth(out, "z_polar", &solution.depth)?;
    finish(
        "height",
        out,
        json!({ "eta": cfg.eta, "light": cfg.light, "height": to_value(&cfg.height) }),
        &polmap_inputs(out),
        &outputs,
        json!({
            "rows": system.rows(),
            "iterations": solution.iterations,
            "converged": solution.converged,
            "relative_gradient": solution.relative_gradient,
        }),
    )
}

pub fn run_project(cfg: &PipelineConfig) -> Result<StageRecord> {
    let cloud_path = required(&cfg.paths.cloud, "cloud")?;
    let camera_path = required(&cfg.paths.camera, "camera")?;
    require_file(cloud_path)?;
    require_file(camera_path)?;
    let cloud = PointCloud::<f64>::read(cloud_path)?;
    let camera: CameraModel<f64> = io::read_json(camera_path)?;
    camera.validate()?;
    let projected = project_cloud(&camera, &cloud)?;
    let filled = fill_holes(&projected.depth)?;
    let z_mvs = range_to_height(&filled.depth, &camera)?;
    let out = cfg.output()?;
    let mut outputs = write_depth(out, "range_sparse", &projected.depth)?;
    outputs.extend(write_depth(out, "range", &filled.depth)?);
    outputs.extend(write_depth(out, "z_mvs", &z_mvs)?);
    finish(
        "project",
        out,
        Value::Null,
        &[cloud_path.to_path_buf(), camera_path.to_path_buf()],
        &outputs,
        json!({
            "points": cloud.len(),
            "observed": projected.depth.valid.count(),
            "outside": projected.outside,
            "behind": projected.behind,
            "occluded": projected.occluded,
            "extrapolated": filled.extrapolated.count(),
            "pixel_pitch": z_mvs.pixel_pitch,
        }),
    )
}

pub fn run_fuse(cfg: &PipelineConfig) -> Result<StageRecord> {
    let out = cfg.output()?;
    let inputs = [out.join("z_polar.pfm"), out.join("z_mvs.pfm")];
    for p in &inputs {
        require_file(p)?;
    }
    let z_polar = read_depth::<f64>(&inputs[0])?;
    let z_mvs = read_depth::<f64>(&inputs[1])?;
    let fusion = fuse(&z_polar, &z_mvs, &cfg.fuse.fusion_config())?;
    let (combined, scale) = match &cfg.fuse.known_distance {
        Some(known) => {
            let (d, s) = rescale_to_object(&fusion.combined, known)?;
            (d, Some(s))
        }
        None => (fusion.combined.clone(), None),
    };
    let dz = out.join("dz.pfm");
    pfm::write_raster(&dz, &fusion.dz)?;
    let mut outputs = vec![dz];
    outputs.extend(write_depth(out, "z_combined", &combined)?);
    finish(
        "fuse",
        out,
        to_value(&cfg.fuse),
        &inputs,
        &outputs,
        json!({
            "polar_record": to_value(&fusion.polar_record),
            "mvs_record": to_value(&fusion.mvs_record),
            "refinement": fusion.refinement.as_ref().map(|r| json!({ "offset": r.offset, "scale": r.scale })),
            "scale": scale,
        }),
    )
}

fn safe_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Reference shifted by its mean offset from `depth` over shared pixels,
/// on the same pixel grid, and the RMS difference that remains.
fn aligned_reference(depth: &DepthMap<f64>, reference: &DepthMap<f64>) -> Result<(DepthMap<f64>, f64)> {
    depth.z.ensure_dims(&reference.z)?;
    let common = depth.valid.and(&reference.valid)?;
    let n = common.count();
    if n == 0 {
        return Err(Error::NoValidPixels("input and reference share no valid pixel"));
    }
    let (w, h) = depth.dims();
    let mut offset = 0.0;
    for y in 0..h {
        for x in 0..w {
            if common.at(x, y) {
                offset += depth.z.at(x, y) - reference.z.at(x, y);
            }
        }
    }
    offset /= n as f64;
    let mut shifted = reference.clone();
    shifted.z = reference.z.map(|&v| v + offset);
    shifted.valid = common.clone();
    shifted.pixel_pitch = depth.pixel_pitch;
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            if common.at(x, y) {
                sum += (depth.z.at(x, y) - shifted.z.at(x, y)).powi(2);
            }
        }
    }
    Ok((shifted, (sum / n as f64).sqrt()))
}

pub fn run_eval(cfg: &PipelineConfig) -> Result<StageRecord> {
    let out = cfg.output()?;
    let ev = &cfg.eval;
    let input = if ev.input.is_relative() {
        out.join(&ev.input)
    } else {
        ev.input.clone()
    };
    require_file(&input)?;
    let depth = read_depth::<f64>(&input)?;
    let gsd = ev.gsd.or(depth.pixel_pitch);
    let mut inputs = vec![input.clone()];
    let mut outputs = Vec::new();

    let mut flatness = Vec::new();
    let mut rows = Vec::new();
    if !ev.rois.is_empty() {
        let gsd = gsd.ok_or_else(|| Error::Config("eval.gsd is not set and the input has no pixel pitch".into()))?;
        for named in &ev.rois {
            let report = evalkit::plane_fit_rmse(&depth, &named.roi, gsd)?;
            rows.push(report.flatness_row(&named.label));
            let hist = out.join(format!("histogram_{}.csv", safe_label(&named.label)));
            evalkit::write_histogram_csv(&hist, &report.histogram)?;
            outputs.push(hist);
            if ev.plot_data {
                let dat = out.join(format!("histogram_{}.dat", safe_label(&named.label)));
                std::fs::write(&dat, evalkit::histogram_plot_data(&report.histogram)).map_err(|e| Error::io(&dat, e))?;
                outputs.push(dat);
            }
            flatness.push(json!({ "label": named.label, "roi": to_value(&named.roi), "fit": to_value(&report) }));
        }
        let table = out.join("flatness.csv");
        evalkit::write_flatness_csv(&table, &rows)?;
        outputs.push(table);
    }

    let reference = match &ev.reference {
        Some(path) => {
            require_file(path)?;
            inputs.push(path.clone());
            Some(aligned_reference(&depth, &read_depth::<f64>(path)?)?)
        }
        None => None,
    };

    let mut profiles = Vec::new();
    for named in &ev.profiles {
        let profile = evalkit::extract_profile(&depth, &named.polyline, named.spacing)?;
        let label = safe_label(&named.label);
        let csv = out.join(format!("profile_{label}.csv"));
        evalkit::write_profile_csv(&csv, &profile)?;
        outputs.push(csv);
        if ev.plot_data {
            let dat = out.join(format!("profile_{label}.dat"));
            std::fs::write(&dat, evalkit::profile_plot_data(&profile)).map_err(|e| Error::io(&dat, e))?;
            outputs.push(dat);
        }
        let rmse = match &reference {
            Some((r, _)) => {
                let rp = evalkit::extract_profile(r, &named.polyline, named.spacing)?;
                Some(evalkit::profile_rmse(&profile, &rp)?)
            }
            None => None,
        };
        profiles.push(json!({
            "label": named.label,
            "samples": profile.samples.len(),
            "valid": profile.valid_count(),
            "rmse_vs_reference": rmse,
        }));
    }

    let report = json!({
        "input": input.strip_prefix(out).unwrap_or(&input),
        "gsd": gsd,
        "flatness": flatness,
        "table": to_value(&rows),
        "profiles": profiles,
        "reference_rmse": reference.as_ref().map(|r| r.1),
    });
    let report_path = out.join("eval.json");
    io::write_json(&report_path, &report)?;
    outputs.push(report_path);
    finish("eval", out, to_value(ev), &inputs, &outputs, report)
}

/// Stage names in pipeline order.
pub const STAGES: [&str; 6] = ["decompose", "zenith", "height", "project", "fuse", "eval"];

pub fn run_stage(name: &str, cfg: &PipelineConfig) -> Result<StageRecord> {
    match name {
        "decompose" => run_decompose(cfg),
        "zenith" => run_zenith(cfg),
        "height" => run_height(cfg),
        "project" => run_project(cfg),
        "fuse" => run_fuse(cfg),
        "eval" => run_eval(cfg),
        other => Err(Error::Config(format!("unknown stage {other}"))),
    }
}

/// Runs every stage in order and writes `manifest.json`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Vec<StageRecord>> {
    let records = STAGES
        .iter()
        .map(|s| run_stage(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    io::write_json(
        &cfg.output()?.join("manifest.json"),
        &json!({ "config": to_value(cfg), "stages": to_value(&records) }),
    )?;
    Ok(records)
}

fn six_angles() -> Vec<f64> {
    vec![0.0, 30.0, 60.0, 90.0, 120.0, 150.0]
}

fn default_light() -> [f64; 3] {
    [0.5, 0.3, 1.0]
}

fn default_eta() -> f64 {
    1.5
}

/// Synthetic scenario definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub surface: SurfaceSpec,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_light")]
    pub light: [f64; 3],
    #[serde(default = "six_angles")]
    pub angles_deg: Vec<f64>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub mvs: MvsLikeSpec,
    /// Smooth error added to the surface seen by the polarization camera only.
    #[serde(default)]
    pub polar_bias: Option<SurfaceKind>,
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_toml(path)
    }
}

/// Writes a scenario directory: polarizer frames and their manifest,
/// ground truth rasters, the emulated photogrammetric cloud and camera,
/// and a `pipeline.toml` that runs the reconstruction on them.
pub fn run_synth(cfg: &SynthConfig, dir: &Path) -> Result<StageRecord> {
    cfg.surface.validate()?;
    let material = Material::new(cfg.eta)?;
    let light = LightSource::from_direction(cfg.light)?;
    let truth = render_truth::<f64>(&cfg.surface)?;
    let seen = match &cfg.polar_bias {
        Some(bias) => {
            let mut spec = cfg.surface.clone();
            spec.surface = SurfaceKind::Composite {
                parts: vec![cfg.surface.surface.clone(), bias.clone()],
            };
            render_truth::<f64>(&spec)?
        }
        None => truth.clone(),
    };
    let angles: Vec<f64> = cfg.angles_deg.iter().map(|a| a.to_radians()).collect();
    let stack = forward_polarize(&seen, &material, &light, &angles, &cfg.noise)?;
    let mvs = make_mvs_like(&truth.depth, &cfg.mvs, &cfg.noise)?;

    io::create_dir(dir)?;
    let mut outputs = Vec::new();
    let mut frames = Vec::new();
    for (k, frame) in stack.frames().iter().enumerate() {
        let name = format!("frame_{k:02}.pfm");
        let path = dir.join(&name);
        pfm::write_raster(&path, &frame.image)?;
        outputs.push(path);
        frames.push(ManifestFrame {
            path: PathBuf::from(name),
            angle_deg: cfg.angles_deg[k],
        });
    }
    let manifest = dir.join("stack.toml");
    StackManifest { frames }.write(&manifest)?;
    outputs.push(manifest);
    outputs.extend(write_depth(dir, "truth", &truth.depth)?);
    for (name, r) in [("truth_zenith", &truth.zenith), ("truth_azimuth", &truth.azimuth)] {
        let p = dir.join(format!("{name}.pfm"));
        pfm::write_raster(&p, r)?;
        outputs.push(p);
    }
    let cloud = dir.join("cloud.csv");
    mvs.cloud.write_csv(&cloud)?;
    let camera = dir.join("camera.json");
    io::write_json(&camera, &mvs.camera)?;
    outputs.extend([cloud, camera]);

    let (w, h) = (cfg.surface.width, cfg.surface.height);
    let (a, b) = ((w / 4, h / 2), (w - 1 - w / 4, h / 2));
    let pitch = cfg.surface.pixel_pitch;
    let dz = truth.depth.z.at(a.0, a.1) - truth.depth.z.at(b.0, b.1);
    let chord = (((b.0 - a.0) as f64 * pitch).powi(2) + dz * dz).sqrt();
    let pipeline = PipelineConfig {
        eta: cfg.eta,
        light: cfg.light,
        paths: Paths {
            stack: Some("stack.toml".into()),
            cloud: Some("cloud.csv".into()),
            camera: Some("camera.json".into()),
            output: "out".into(),
        },
        height: HeightStage {
            assemble: AssembleConfig {
                albedo: AlbedoNormalization::Known { albedo: 1.0 },
                ..AssembleConfig::default()
            },
            solver: SolverConfig::default(),
        },
        fuse: FuseStage {
            normalization: Normalization::MvsReference,
            known_distance: Some(KnownDistance { a, b, length: chord }),
            ..FuseStage::default()
        },
        eval: EvalStage {
            reference: Some("truth.pfm".into()),
            gsd: Some(pitch),
            profiles: vec![NamedProfile {
                label: "centre_row".into(),
                polyline: vec![[0.0, (h / 2) as f64], [(w - 1) as f64, (h / 2) as f64]],
                spacing: 0.5,
            }],
            ..EvalStage::default()
        },
        ..PipelineConfig::default()
    };
    let pipeline_path = dir.join(CONFIG_FILE);
    io::write_toml(&pipeline_path, &pipeline)?;
    let scenario = dir.join("scenario.toml");
    io::write_toml(&scenario, cfg)?;
    outputs.extend([pipeline_path, scenario]);
    finish(
        "synth",
        dir,
        to_value(cfg),
        &[],
        &outputs,
        json!({ "frames": stack.frames().len(), "cloud_points": mvs.cloud.len() }),
    )
}
