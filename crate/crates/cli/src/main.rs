//! `polarfuse` command line driver.
//!
//! Settings come from a TOML config (`--config FILE` or a directory holding
//! `pipeline.toml`); flags given on the command line override the file, and
//! anything set in neither falls back to the built-in defaults.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polarfuse::pipeline::{self, PipelineConfig, StageRecord, SynthConfig};
use polarfuse::Error;

#[derive(Parser)]
#[command(name = "polarfuse", version, about = "Height from polarization fused with photogrammetric depth")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the polarizer sinusoid at every pixel.
    Decompose(StageArgs),
    /// Zenith angles from the degree of polarization.
    Zenith(StageArgs),
    /// Integrate polarization constraints into heights.
    Height(StageArgs),
    /// Project the photogrammetric cloud into the polarization camera.
    Project(StageArgs),
    /// Combine polarization and photogrammetric heights.
    Fuse(StageArgs),
    /// Plane-fit and profile metrics.
    Eval(StageArgs),
    /// Run every stage in order.
    Pipeline(StageArgs),
    /// Write a synthetic scenario directory.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Config file, or a directory containing pipeline.toml.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Stack manifest (TOML with [[frame]] path / angle_deg entries).
    #[arg(long)]
    stack: Option<PathBuf>,
    /// Point cloud (CSV or ASCII PLY).
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Camera model (JSON).
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Refractive index.
    #[arg(long)]
    eta: Option<f64>,
    /// Light direction as `sx,sy,sz`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    light: Option<Vec<f64>>,
    /// Fusion lattice spacing in pixels.
    #[arg(long)]
    grid_spacing: Option<usize>,
    /// Fusion smoothing in lattice nodes.
    #[arg(long)]
    sigma: Option<f64>,
    /// Height raster assessed by `eval`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Reference raster for `eval`.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Ground sample distance for `eval`.
    #[arg(long)]
    gsd: Option<f64>,
    /// Also write gnuplot-ready `.dat` columns.
    #[arg(long)]
    plot_data: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Scenario directory to write.
    #[arg(short, long)]
    output: PathBuf,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn cwd_relative(p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        std::env::current_dir().map(|d| d.join(&p)).unwrap_or(p)
    }
}

impl StageArgs {
    fn config(self) -> polarfuse::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => {
                let mut cfg = PipelineConfig::default();
                cfg.resolve_paths(&std::env::current_dir().unwrap_or_default());
                cfg
            }
        };
        if let Some(p) = self.output {
            cfg.paths.output = cwd_relative(p);
        }
        if let Some(p) = self.stack {
            cfg.paths.stack = Some(cwd_relative(p));
        }
        if let Some(p) = self.cloud {
            cfg.paths.cloud = Some(cwd_relative(p));
        }
        if let Some(p) = self.camera {
            cfg.paths.camera = Some(cwd_relative(p));
        }
        if let Some(eta) = self.eta {
            cfg.eta = eta;
        }
        if let Some(l) = self.light {
            cfg.light = [l[0], l[1], l[2]];
        }
        if let Some(g) = self.grid_spacing {
            cfg.fuse.grid_spacing = g;
        }
        if let Some(s) = self.sigma {
            cfg.fuse.sigma = s;
        }
        if let Some(p) = self.input {
            cfg.eval.input = cwd_relative(p);
        }
        if let Some(p) = self.reference {
            cfg.eval.reference = Some(cwd_relative(p));
        }
        if let Some(g) = self.gsd {
            cfg.eval.gsd = Some(g);
        }
        cfg.eval.plot_data |= self.plot_data;
        Ok(cfg)
    }
}

fn report(records: &[StageRecord], out: &Path) {
    for r in records {
        println!("{}: {} outputs in {}", r.stage, r.outputs.len(), out.display());
    }
}

fn run(command: Command) -> polarfuse::Result<()> {
    let (stage, args) = match command {
        Command::Synth(args) => {
            let mut cfg = SynthConfig::load(&args.config)?;
            if let Some(seed) = args.seed {
                cfg.noise.seed = seed;
            }
            let record = pipeline::run_synth(&cfg, &args.output)?;
            report(&[record], &args.output);
            return Ok(());
        }
        Command::Pipeline(args) => {
            let cfg = args.config()?;
            let records = pipeline::run_pipeline(&cfg)?;
            report(&records, &cfg.paths.output);
            return Ok(());
        }
        Command::Decompose(a) => ("decompose", a),
        Command::Zenith(a) => ("zenith", a),
        Command::Height(a) => ("height", a),
        Command::Project(a) => ("project", a),
        Command::Fuse(a) => ("fuse", a),
        Command::Eval(a) => ("eval", a),
    };
    let cfg = args.config()?;
    let record = pipeline::run_stage(stage, &cfg)?;
    report(&[record], &cfg.paths.output);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_input_error() {
        ExitCode::from(2)
    } else {
        ExitCode::FAILURE
    }
}
