//! Benchmark sweeps over a directory of scenes.
//!
//! Each subdirectory of the scene directory is one scene holding `gt`, `rel`
//! (`.dpg`, `.pfm` or `.pgm`) and `mask.pgm`, as written by the synth command.
//! The subdirectory name becomes the image id.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, PathContext, Result};
use crate::grids::{DepthGrid, DepthRange, LabelGrid};
use crate::manifest::{load_depth_at, load_mask_at, prepare_relative, Draw};
use crate::metrics::{evaluate, write_rows, MetricRow};
use crate::pipeline::{rescale, Method, PipelineConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTask {
    pub scenes: PathBuf,
    pub methods: Vec<Method>,
    /// Uniform sample counts.
    pub budgets: Vec<usize>,
    /// Beam counts, swept alongside `budgets`.
    #[serde(default)]
    pub beams: Vec<usize>,
    pub seeds: Vec<u64>,
    pub noise_sigma: f64,
    pub already_depth: bool,
    pub pgm_scale: Option<f64>,
    /// Shared settings; `method` and `fallback_chain` are replaced per method.
    pub config: PipelineConfig,
    pub range: DepthRange,
    pub output: PathBuf,
}

pub struct LoadedScene {
    pub id: String,
    pub gt: DepthGrid,
    pub rel: DepthGrid,
    pub mask: LabelGrid,
}

fn find_grid(dir: &Path, stem: &str) -> Result<PathBuf> {
    ["dpg", "pfm", "pgm"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| Error::InvalidConfig(format!("no {stem}.dpg, {stem}.pfm or {stem}.pgm")))
        .at_path(dir)
}

/// Scene subdirectories in name order.
pub fn scene_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(Error::from).at_path(root)? {
        let path = entry.map_err(Error::from).at_path(root)?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InvalidConfig("no scene subdirectories".into())).at_path(root);
    }
    Ok(dirs)
}

pub fn load_scene(dir: &Path, already_depth: bool, pgm_scale: Option<f64>) -> Result<LoadedScene> {
    let gt = load_depth_at(&find_grid(dir, "gt")?, pgm_scale)?;
    let rel_path = find_grid(dir, "rel")?;
    let rel = prepare_relative(load_depth_at(&rel_path, pgm_scale)?, already_depth).at_path(&rel_path)?;
    let mask = load_mask_at(&dir.join("mask.pgm"))?;
    let id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(LoadedScene { id, gt, rel, mask })
}

impl BenchTask {
    fn draws(&self) -> impl Iterator<Item = Draw> + '_ {
        let uniform = self.budgets.iter().map(|&n| Draw::Uniform { n });
        uniform.chain(self.beams.iter().map(|&beams| Draw::Beams { beams }))
    }

    fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.seeds.is_empty() || (self.budgets.is_empty() && self.beams.is_empty()) {
            return Err(Error::InvalidConfig("bench needs at least one method, seed and budget".into()));
        }
        Ok(())
    }
}

/// All rows for one scene, in sweep order.
pub fn bench_scene(scene: &LoadedScene, task: &BenchTask) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for draw in task.draws() {
        for &seed in &task.seeds {
            let samples = draw.sample(&scene.gt, seed, task.noise_sigma)?;
            for &method in &task.methods {
                let cfg = PipelineConfig {
                    method,
                    fallback_chain: method.default_fallbacks(),
                    ..task.config.clone()
                };
                let out = rescale(&scene.rel, &scene.mask, &samples, &cfg)?;
                let m = evaluate(&out.depth, &scene.gt, task.range)?;
                rows.push(MetricRow::new(&scene.id, method.name(), !method.is_global(), samples.len(), seed, &m));
            }
        }
    }
    Ok(rows)
}

/// Runs the sweep and writes the CSV; returns the row count.
pub fn run_bench(task: &BenchTask) -> Result<usize> {
    task.validate()?;
    let dirs = scene_dirs(&task.scenes)?;
    let one = |dir: &PathBuf| -> Result<Vec<MetricRow>> {
        let scene = load_scene(dir, task.already_depth, task.pgm_scale)?;
        bench_scene(&scene, task).at_path(dir)
    };
    #[cfg(feature = "parallel")]
    let per_scene: Vec<Result<Vec<MetricRow>>> = {
        use rayon::prelude::*;
        dirs.par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_scene: Vec<Result<Vec<MetricRow>>> = dirs.iter().map(one).collect();

    let mut rows = Vec::new();
    for r in per_scene {
        rows.extend(r?);
    }
    let file = fs::File::create(&task.output).map_err(Error::from).at_path(&task.output)?;
    write_rows(std::io::BufWriter::new(file), &rows).at_path(&task.output)?;
    Ok(rows.len())
}
