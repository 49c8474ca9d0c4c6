use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use depthscale::bench::BenchTask;
use depthscale::error::{Error, PathContext};
use depthscale::manifest::{
    run, Draw, EvaluateTask, Outcome, RescaleTask, RunManifest, SampleTask, SampleSource, SynthTask, Task,
};
use depthscale::synth::{DistortionFamily, LayoutFamily};
use depthscale::{Connectivity, DepthRange, Method, MinSamples, Normalization, PipelineConfig, RandomSceneParams, SceneSpec};

/// Region-aware metric scaling of relative depth maps.
#[derive(Parser, Debug)]
#[command(name = "depthscale", version, about)]
struct Cli {
    /// Replay a saved run manifest instead of a subcommand.
    #[arg(long, global = true, value_name = "PATH")]
    manifest: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit relative depth to sparse samples and write metric depth.
    Rescale(RescaleArgs),
    /// Compare a prediction against ground truth.
    Evaluate(EvaluateArgs),
    /// Write a synthetic scene (gt, rel, mask, scene.json).
    Synth(SynthArgs),
    /// Draw uniform or beam samples from a ground-truth grid.
    Sample(SampleArgs),
    /// Sweep methods, budgets and seeds over a scene directory.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[arg(long, default_value_t = 2)]
    min_samples_linear: usize,
    #[arg(long, default_value_t = 4)]
    min_samples_planar: usize,
    #[arg(long, value_parser = parse_connectivity, default_value = "4")]
    connectivity: Connectivity,
    /// Output depth range as `min,max` meters.
    #[arg(long, value_parser = parse_range, default_value = "0.001,10")]
    clamp: DepthRange,
    #[arg(long, value_enum, default_value_t = NormalizationArg::MedianMad)]
    normalization: NormalizationArg,
    /// Treat each mask label as one region even when it is not connected.
    #[arg(long)]
    merge_same_label: bool,
    /// Limit neighbor expansion to this many rings.
    #[arg(long)]
    max_hops: Option<usize>,
}

impl PipelineArgs {
    fn config(&self, method: Method) -> PipelineConfig {
        let mut cfg = PipelineConfig::new(method);
        cfg.min_samples = MinSamples { linear: self.min_samples_linear, planar: self.min_samples_planar, ..MinSamples::default() };
        cfg.regions.connectivity = self.connectivity;
        cfg.regions.merge_same_label = self.merge_same_label;
        cfg.clamp = self.clamp;
        cfg.normalization = self.normalization.into();
        cfg.max_hops = self.max_hops;
        cfg
    }
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Input already holds relative depth (skip disparity inversion).
    #[arg(long)]
    already_depth: bool,
    /// PGM units per meter; overrides `<file>.scale` sidecars (default 1000).
    #[arg(long)]
    pgm_scale: Option<f64>,
}

#[derive(Args, Debug)]
struct DrawArgs {
    /// Uniformly sampled point count.
    #[arg(long, conflicts_with = "beams", required_unless_present = "beams")]
    n_samples: Option<usize>,
    /// Number of simulated scanlines.
    #[arg(long)]
    beams: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian noise added to each sample, meters.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
}

impl DrawArgs {
    fn draw(&self) -> Draw {
        match (self.n_samples, self.beams) {
            (_, Some(beams)) => Draw::Beams { beams },
            (Some(n), None) => Draw::Uniform { n },
            (None, None) => unreachable!("clap requires one of --n-samples or --beams"),
        }
    }
}

#[derive(Args, Debug)]
struct RescaleArgs {
    /// Relative depth or disparity map (.pfm, .pgm, .dpg).
    #[arg(long)]
    relative: PathBuf,
    /// Segmentation mask as 16-bit PGM; omitted means one region.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Sparse samples CSV (`row,col,depth_m`).
    #[arg(long, conflicts_with = "gt", required_unless_present = "gt")]
    samples: Option<PathBuf>,
    /// Ground truth to draw samples from instead of a CSV.
    #[arg(long, requires = "n_or_beams")]
    gt: Option<PathBuf>,
    #[arg(long, group = "n_or_beams")]
    n_samples: Option<usize>,
    #[arg(long, group = "n_or_beams", conflicts_with = "n_samples")]
    beams: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, value_parser = parse_method, default_value = "ssf")]
    method: Method,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Metric depth output; format follows the extension.
    #[arg(long, short)]
    output: PathBuf,
    /// Per-region report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    save_manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Ground-truth range counted in the metrics, `min,max`.
    #[arg(long, value_parser = parse_range, default_value = "0.001,10")]
    range: DepthRange,
    #[arg(long)]
    pgm_scale: Option<f64>,
    /// Metrics JSON; printed to stdout either way.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    save_manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene spec JSON; without it a random scene is drawn from `--seed`.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 480)]
    height: usize,
    #[arg(long, default_value_t = 640)]
    width: usize,
    /// Region count range `min,max`.
    #[arg(long, value_parser = parse_pair::<usize>, default_value = "6,20")]
    regions: (usize, usize),
    #[arg(long, value_enum, default_value_t = LayoutArg::Mixed)]
    layout: LayoutArg,
    #[arg(long, value_enum, default_value_t = FamilyArg::Affine)]
    family: FamilyArg,
    /// Per-region sample noise recorded in the scene.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, short)]
    out_dir: PathBuf,
    #[arg(long, value_name = "PATH")]
    save_manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    gt: PathBuf,
    #[command(flatten)]
    draw: DrawArgs,
    #[arg(long)]
    pgm_scale: Option<f64>,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, value_name = "PATH")]
    save_manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Directory with one subdirectory per scene.
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long, value_parser = parse_method, value_delimiter = ',', default_value = "slf,ssf")]
    method: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000")]
    n_samples: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    beams: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seed: Vec<u64>,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, value_parser = parse_range, default_value = "0.001,10")]
    range: DepthRange,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[command(flatten)]
    input: InputArgs,
    /// Aggregate CSV.
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, value_name = "PATH")]
    save_manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormalizationArg {
    MedianMad,
    MeanStd,
    None,
}

impl From<NormalizationArg> for Normalization {
    fn from(n: NormalizationArg) -> Self {
        match n {
            NormalizationArg::MedianMad => Normalization::MedianMad,
            NormalizationArg::MeanStd => Normalization::MeanStd,
            NormalizationArg::None => Normalization::None,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LayoutArg {
    Grid,
    Voronoi,
    Mixed,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Affine,
    Planar,
    Nonlinear,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    match s {
        "4" => Ok(Connectivity::Four),
        "8" => Ok(Connectivity::Eight),
        _ => Err(format!("connectivity must be 4 or 8, got {s:?}")),
    }
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<(T, T), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<T>().map_err(|_| format!("bad number {v:?}"));
    Ok((p(a)?, p(b)?))
}

fn parse_range(s: &str) -> Result<DepthRange, String> {
    let (min, max) = parse_pair::<f64>(s)?;
    DepthRange::new(min, max).map_err(|e| e.to_string())
}

fn write_manifest(path: &Option<PathBuf>, m: &RunManifest) -> depthscale::Result<()> {
    match path {
        Some(p) => m.save(p),
        None => Ok(()),
    }
}

/// Resolves a subcommand into a manifest plus where to save it.
fn build(command: Command) -> depthscale::Result<(RunManifest, Option<PathBuf>)> {
    let (task, save) = match command {
        Command::Rescale(a) => {
            let samples = match (a.samples, a.gt) {
                (Some(path), _) => SampleSource::File { path },
                (None, Some(gt)) => {
                    let draw = match (a.n_samples, a.beams) {
                        (_, Some(beams)) => Draw::Beams { beams },
                        (Some(n), None) => Draw::Uniform { n },
                        (None, None) => unreachable!("clap requires a sample budget with --gt"),
                    };
                    SampleSource::Draw { gt, draw, seed: a.seed, noise_sigma: a.noise_sigma }
                }
                (None, None) => unreachable!("clap requires --samples or --gt"),
            };
            let task = RescaleTask {
                relative: a.relative,
                mask: a.mask,
                samples,
                already_depth: a.input.already_depth,
                pgm_scale: a.input.pgm_scale,
                config: a.pipeline.config(a.method),
                output: a.output,
                report: a.report,
            };
            (Task::Rescale(task), a.save_manifest)
        }
        Command::Evaluate(a) => {
            let task = EvaluateTask {
                prediction: a.pred,
                ground_truth: a.gt,
                range: a.range,
                pgm_scale: a.pgm_scale,
                output: a.output,
            };
            (Task::Evaluate(task), a.save_manifest)
        }
        Command::Synth(a) => {
            let scene = match &a.spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(Error::from).at_path(path)?;
                    serde_json::from_str::<SceneSpec>(&text).map_err(Error::from).at_path(path)?
                }
                None => {
                    let params = RandomSceneParams {
                        height: a.height,
                        width: a.width,
                        regions: a.regions,
                        layout: match a.layout {
                            LayoutArg::Grid => LayoutFamily::Grid,
                            LayoutArg::Voronoi => LayoutFamily::Voronoi,
                            LayoutArg::Mixed => LayoutFamily::Mixed,
                        },
                        family: match a.family {
                            FamilyArg::Affine => DistortionFamily::Affine,
                            FamilyArg::Planar => DistortionFamily::Planar,
                            FamilyArg::Nonlinear => DistortionFamily::Nonlinear,
                        },
                        noise_sigma: a.noise_sigma,
                        ..RandomSceneParams::default()
                    };
                    SceneSpec::random(&params, a.seed)?
                }
            };
            (Task::Synth(SynthTask { scene, out_dir: a.out_dir }), a.save_manifest)
        }
        Command::Sample(a) => {
            let task = SampleTask {
                ground_truth: a.gt,
                draw: a.draw.draw(),
                seed: a.draw.seed,
                noise_sigma: a.draw.noise_sigma,
                pgm_scale: a.pgm_scale,
                output: a.output,
            };
            (Task::Sample(task), a.save_manifest)
        }
        Command::Bench(a) => {
            let task = BenchTask {
                scenes: a.scenes,
                config: a.pipeline.config(a.method.first().copied().unwrap_or(Method::Slf)),
                methods: a.method,
                budgets: a.n_samples,
                beams: a.beams,
                seeds: a.seed,
                noise_sigma: a.noise_sigma,
                already_depth: a.input.already_depth,
                pgm_scale: a.input.pgm_scale,
                range: a.range,
                output: a.output,
            };
            (Task::Bench(task), a.save_manifest)
        }
    };
    Ok((RunManifest::new(task), save))
}

fn report(outcome: &Outcome) {
    match outcome {
        Outcome::Rescaled { regions, fallbacks } => {
            println!("rescaled {regions} regions ({fallbacks} used the global fallback)");
        }
        Outcome::Evaluated(m) => {
            println!("{}", serde_json::to_string_pretty(m).expect("metrics serialize"));
        }
        Outcome::Synthesized { regions } => println!("wrote scene with {regions} regions"),
        Outcome::Sampled { count } => println!("wrote {count} samples"),
        Outcome::Benched { rows } => println!("wrote {rows} rows"),
    }
}

fn execute(cli: Cli) -> depthscale::Result<()> {
    let manifest = match (cli.manifest, cli.command) {
        (Some(path), None) => RunManifest::load(&path)?,
        (None, Some(command)) => {
            let (m, save) = build(command)?;
            write_manifest(&save, &m)?;
            m
        }
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig("--manifest replays a run; drop the subcommand".into()))
        }
        (None, None) => return Err(Error::InvalidConfig("expected a subcommand or --manifest".into())),
    };
    report(&run(&manifest)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
