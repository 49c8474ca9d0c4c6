//! Run manifests: JSON documents that fully determine one command.
//!
//! Every input path, option and seed a command reads is stored in the
//! manifest, so [`run`] on a saved manifest rewrites the same output bytes.
//! Relative paths resolve against the working directory of the replaying
//! process.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{run_bench, BenchTask};
use crate::error::{Error, PathContext, Result};
use crate::grids::{DepthGrid, DepthRange, LabelGrid, SparseSamples};
use crate::io::{self, DepthLoadOptions};
use crate::metrics::{evaluate, MetricReport};
use crate::normalize::{invert_depth, NormalizationStats, DEFAULT_EPSILON};
use crate::pipeline::{rescale, PipelineConfig, RegionReport};
use crate::synth::{generate_scene, perturb, sample_beams, sample_uniform, SceneSpec};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    #[serde(flatten)]
    pub task: Task,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Task {
    Rescale(RescaleTask),
    Evaluate(EvaluateTask),
    Synth(SynthTask),
    Sample(SampleTask),
    Bench(BenchTask),
}

/// Sampling pattern over a ground-truth grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "kebab-case")]
pub enum Draw {
    Uniform { n: usize },
    Beams { beams: usize },
}

impl Draw {
    /// Draws noiseless samples, then perturbs them with `noise_sigma`.
    pub fn sample(self, gt: &DepthGrid, seed: u64, noise_sigma: f64) -> Result<SparseSamples> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad noise sigma {noise_sigma}")));
        }
        let clean = match self {
            Draw::Uniform { n } => sample_uniform(gt, n, seed)?,
            Draw::Beams { beams } => sample_beams(gt, beams)?,
        };
        perturb(&clean, |_, _| noise_sigma, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum SampleSource {
    File { path: PathBuf },
    Draw {
        gt: PathBuf,
        #[serde(flatten)]
        draw: Draw,
        seed: u64,
        noise_sigma: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaleTask {
    pub relative: PathBuf,
    /// Without a mask the whole image is one region.
    pub mask: Option<PathBuf>,
    pub samples: SampleSource,
    /// Input already holds relative depth; otherwise it is inverted first.
    pub already_depth: bool,
    pub pgm_scale: Option<f64>,
    pub config: PipelineConfig,
    pub output: PathBuf,
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluateTask {
    pub prediction: PathBuf,
    pub ground_truth: PathBuf,
    pub range: DepthRange,
    pub pgm_scale: Option<f64>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTask {
    pub scene: SceneSpec,
    /// Receives `gt.dpg`, `rel.dpg`, `mask.pgm` and `scene.json`.
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleTask {
    pub ground_truth: PathBuf,
    #[serde(flatten)]
    pub draw: Draw,
    pub seed: u64,
    pub noise_sigma: f64,
    pub pgm_scale: Option<f64>,
    pub output: PathBuf,
}

/// JSON written next to a rescaled depth map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaleReport {
    pub normalization: NormalizationStats,
    pub sample_count: usize,
    pub regions: Vec<RegionSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    #[serde(flatten)]
    pub report: RegionReport,
    /// Tilt per pixel column and per pixel row.
    pub slope_per_col: f64,
    pub slope_per_row: f64,
}

/// What a run produced, for the caller to print.
#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Rescaled { regions: usize, fallbacks: usize },
    Evaluated(MetricReport),
    Synthesized { regions: usize },
    Sampled { count: usize },
    Benched { rows: usize },
}

impl RunManifest {
    pub fn new(task: Task) -> Self {
        Self { format_version: FORMAT_VERSION, task }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::from).at_path(path)?;
        let m: RunManifest = serde_json::from_str(&text).map_err(Error::from).at_path(path)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "manifest format version {} (supported: {FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::save_json(path, self).at_path(path)
    }
}

pub(crate) fn load_depth_at(path: &Path, pgm_scale: Option<f64>) -> Result<DepthGrid> {
    io::load_depth(path, DepthLoadOptions { pgm_scale }).at_path(path)
}

pub(crate) fn load_mask_at(path: &Path) -> Result<LabelGrid> {
    io::load_mask(path).at_path(path)
}

/// Converts model output to relative depth.
pub fn prepare_relative(input: DepthGrid, already_depth: bool) -> Result<DepthGrid> {
    if already_depth {
        Ok(input)
    } else {
        invert_depth(&input, DEFAULT_EPSILON)
    }
}

pub fn run(manifest: &RunManifest) -> Result<Outcome> {
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::InvalidConfig(format!("unsupported manifest version {}", manifest.format_version)));
    }
    match &manifest.task {
        Task::Rescale(t) => run_rescale(t),
        Task::Evaluate(t) => run_evaluate(t),
        Task::Synth(t) => run_synth(t),
        Task::Sample(t) => run_sample(t),
        Task::Bench(t) => run_bench(t).map(|rows| Outcome::Benched { rows }),
    }
}

fn run_rescale(t: &RescaleTask) -> Result<Outcome> {
    let rel = prepare_relative(load_depth_at(&t.relative, t.pgm_scale)?, t.already_depth).at_path(&t.relative)?;
    let mask = match &t.mask {
        Some(p) => load_mask_at(p)?,
        None => LabelGrid::uniform(rel.height(), rel.width(), 0)?,
    };
    let samples = match &t.samples {
        SampleSource::File { path } => io::load_samples(path).at_path(path)?,
        SampleSource::Draw { gt, draw, seed, noise_sigma } => {
            draw.sample(&load_depth_at(gt, t.pgm_scale)?, *seed, *noise_sigma).at_path(gt)?
        }
    };
    let out = rescale(&rel, &mask, &samples, &t.config)?;
    io::save_depth(&t.output, &out.depth).at_path(&t.output)?;
    let fallbacks = out.reports.iter().filter(|r| r.is_global_fallback()).count();
    let regions = out.reports.len();
    if let Some(path) = &t.report {
        let (h, w) = rel.dims();
        let report = RescaleReport {
            normalization: out.stats,
            sample_count: samples.len(),
            regions: out
                .reports
                .into_iter()
                .map(|report| {
                    let (slope_per_col, slope_per_row) = report.params.pixel_slopes(h, w);
                    RegionSummary { report, slope_per_col, slope_per_row }
                })
                .collect(),
        };
        io::save_json(path, &report).at_path(path)?;
    }
    Ok(Outcome::Rescaled { regions, fallbacks })
}

fn run_evaluate(t: &EvaluateTask) -> Result<Outcome> {
    let pred = load_depth_at(&t.prediction, t.pgm_scale)?;
    let gt = load_depth_at(&t.ground_truth, t.pgm_scale)?;
    let m = evaluate(&pred, &gt, t.range)?;
    if let Some(path) = &t.output {
        io::save_json(path, &m).at_path(path)?;
    }
    Ok(Outcome::Evaluated(m))
}

fn run_synth(t: &SynthTask) -> Result<Outcome> {
    let scene = generate_scene(&t.scene)?;
    fs::create_dir_all(&t.out_dir).map_err(Error::from).at_path(&t.out_dir)?;
    let at = |name: &str| t.out_dir.join(name);
    io::save_depth(&at("gt.dpg"), &scene.gt).at_path(&at("gt.dpg"))?;
    io::save_depth(&at("rel.dpg"), &scene.rel).at_path(&at("rel.dpg"))?;
    io::save_mask(&at("mask.pgm"), &scene.mask).at_path(&at("mask.pgm"))?;
    io::save_json(&at("scene.json"), &t.scene).at_path(&at("scene.json"))?;
    Ok(Outcome::Synthesized { regions: t.scene.regions.len() })
}

fn run_sample(t: &SampleTask) -> Result<Outcome> {
    let gt = load_depth_at(&t.ground_truth, t.pgm_scale)?;
    let samples = t.draw.sample(&gt, t.seed, t.noise_sigma)?;
    io::save_samples(&t.output, &samples).at_path(&t.output)?;
    Ok(Outcome::Sampled { count: samples.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Method;
    use crate::synth::RandomSceneParams;

    fn synth_task(dir: &Path) -> RunManifest {
        let params = RandomSceneParams { height: 24, width: 32, regions: (3, 5), ..Default::default() };
        RunManifest::new(Task::Synth(SynthTask { scene: SceneSpec::random(&params, 3).unwrap(), out_dir: dir.join("s") }))
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = RunManifest::new(Task::Rescale(RescaleTask {
            relative: "rel.pfm".into(),
            mask: Some("mask.pgm".into()),
            samples: SampleSource::Draw { gt: "gt.pfm".into(), draw: Draw::Beams { beams: 4 }, seed: 9, noise_sigma: 0.0 },
            already_depth: false,
            pgm_scale: None,
            config: PipelineConfig::new(Method::Ssf),
            output: "out.pfm".into(),
            report: None,
        }));
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        assert_eq!(RunManifest::load(&path).unwrap(), m);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"command\": \"rescale\""));
    }

    #[test]
    fn version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut m = synth_task(dir.path());
        m.format_version = 99;
        m.save(&path).unwrap();
        assert!(matches!(RunManifest::load(&path), Err(Error::InvalidConfig(_))));
        assert!(run(&m).is_err());
    }

    #[test]
    fn synth_then_rescale_recovers_scene() {
        let dir = tempfile::tempdir().unwrap();
        run(&synth_task(dir.path())).unwrap();
        let s = dir.path().join("s");
        let task = RescaleTask {
            relative: s.join("rel.dpg"),
            mask: Some(s.join("mask.pgm")),
            samples: SampleSource::Draw { gt: s.join("gt.dpg"), draw: Draw::Uniform { n: 300 }, seed: 1, noise_sigma: 0.0 },
            already_depth: true,
            pgm_scale: None,
            config: PipelineConfig::new(Method::Slf),
            output: dir.path().join("pred.dpg"),
            report: Some(dir.path().join("report.json")),
        };
        let out = run(&RunManifest::new(Task::Rescale(task))).unwrap();
        assert!(matches!(out, Outcome::Rescaled { fallbacks: 0, .. }));
        let eval = EvaluateTask {
            prediction: dir.path().join("pred.dpg"),
            ground_truth: s.join("gt.dpg"),
            range: DepthRange::NYU,
            pgm_scale: None,
            output: None,
        };
        let Outcome::Evaluated(m) = run(&RunManifest::new(Task::Evaluate(eval))).unwrap() else { panic!() };
        assert!(m.abs_rel < 1e-9, "{}", m.abs_rel);
        let report: RescaleReport =
            serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(report.sample_count, 300);
    }

    #[test]
    fn missing_file_names_path() {
        let m = RunManifest::new(Task::Sample(SampleTask {
            ground_truth: "/nonexistent/gt.dpg".into(),
            draw: Draw::Uniform { n: 3 },
            seed: 0,
            noise_sigma: 0.0,
            pgm_scale: None,
            output: "/nonexistent/out.csv".into(),
        }));
        let err = run(&m).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/gt.dpg"), "{err}");
        assert!(!err.is_numerical());
    }
}
