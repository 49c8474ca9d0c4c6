//! Synthetic piecewise-planar scenes with known per-region distortions, and
//! sparse samplers (uniform random and scanline "beams").
//!
//! Ground truth per region is `m*x + n*y + l` plus an optional scene-wide
//! relief term, in normalized coordinates. The relative map is produced by
//! inverting each region's distortion, so a correct fitter can recover the
//! ground truth exactly when the distortion lies in its model family.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::normalized_coord;
use crate::grids::{DepthGrid, LabelGrid, Sample, SparseSamples};
use crate::rng::rng_for;

/// Depth below which noisy samples are floored to stay strictly positive.
const MIN_SAMPLE_DEPTH: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub m: f64,
    pub n: f64,
    pub l: f64,
}

impl Plane {
    pub fn at(&self, x: f64, y: f64) -> f64 {
        self.m * x + self.n * y + self.l
    }
}

/// Forward map from relative to metric depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistortionKind {
    /// `gt = a * rel + b`
    Affine { a: f64, b: f64 },
    /// `gt = a * rel + bx * x + by * y + c`
    Planar { a: f64, bx: f64, by: f64, c: f64 },
    /// `rel = gt^gamma`
    Nonlinear { gamma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distortion {
    #[serde(flatten)]
    pub kind: DistortionKind,
    /// Gaussian noise on sparse samples, meters.
    #[serde(default)]
    pub noise_sigma: f64,
}

impl Distortion {
    pub fn affine(a: f64, b: f64) -> Self {
        Self { kind: DistortionKind::Affine { a, b }, noise_sigma: 0.0 }
    }

    pub fn planar(a: f64, bx: f64, by: f64, c: f64) -> Self {
        Self { kind: DistortionKind::Planar { a, bx, by, c }, noise_sigma: 0.0 }
    }

    pub fn nonlinear(gamma: f64) -> Self {
        Self { kind: DistortionKind::Nonlinear { gamma }, noise_sigma: 0.0 }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn inverse(&self, gt: f64, x: f64, y: f64) -> f64 {
        match self.kind {
            DistortionKind::Affine { a, b } => (gt - b) / a,
            DistortionKind::Planar { a, bx, by, c } => (gt - bx * x - by * y - c) / a,
            DistortionKind::Nonlinear { gamma } => gt.powf(gamma),
        }
    }

    pub fn forward(&self, rel: f64, x: f64, y: f64) -> f64 {
        match self.kind {
            DistortionKind::Affine { a, b } => a * rel + b,
            DistortionKind::Planar { a, bx, by, c } => a * rel + bx * x + by * y + c,
            DistortionKind::Nonlinear { gamma } => rel.powf(1.0 / gamma),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            DistortionKind::Affine { a, b } => a > 0.0 && a.is_finite() && b.is_finite(),
            DistortionKind::Planar { a, bx, by, c } => a > 0.0 && [a, bx, by, c].iter().all(|v| v.is_finite()),
            DistortionKind::Nonlinear { gamma } => gamma > 0.0 && gamma.is_finite(),
        };
        if !ok || !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidSpec(format!("bad distortion {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Layout {
    /// Equal rectangular tiles, numbered row by row.
    Grid { rows: usize, cols: usize },
    /// Nearest-site cells around seeded random sites; ties go to the lower index.
    Voronoi { sites: usize },
}

impl Layout {
    pub fn region_count(&self) -> usize {
        match *self {
            Layout::Grid { rows, cols } => rows * cols,
            Layout::Voronoi { sites } => sites,
        }
    }
}

/// Scene-wide non-planar term `amplitude * sin(pi*f*x) * cos(pi*f*y)` added to ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Relief {
    pub amplitude: f64,
    pub frequency: f64,
}

impl Relief {
    pub fn at(&self, x: f64, y: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let w = std::f64::consts::PI * self.frequency;
        self.amplitude * (w * x).sin() * (w * y).cos()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub plane: Plane,
    pub distortion: Distortion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub layout: Layout,
    pub regions: Vec<RegionSpec>,
    #[serde(default)]
    pub relief: Relief,
    pub seed: u64,
    /// Ground truth must stay inside `[min, max]` meters.
    pub depth_range: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub gt: DepthGrid,
    pub rel: DepthGrid,
    pub mask: LabelGrid,
    /// Per-label sample noise sigma.
    pub noise_sigma: Vec<f64>,
}

impl Scene {
    pub fn noise_sigma_at(&self, row: usize, col: usize) -> f64 {
        self.noise_sigma[self.mask.get(row, col) as usize]
    }

    /// Uniform samples from ground truth with each region's noise applied.
    pub fn sample_uniform(&self, n: usize, seed: u64) -> Result<SparseSamples> {
        let clean = sample_uniform(&self.gt, n, seed)?;
        perturb(&clean, |r, c| self.noise_sigma_at(r, c), seed)
    }

    pub fn sample_beams(&self, beams: usize, seed: u64) -> Result<SparseSamples> {
        let clean = sample_beams(&self.gt, beams)?;
        perturb(&clean, |r, c| self.noise_sigma_at(r, c), seed)
    }
}

fn layout_labels(spec: &SceneSpec) -> Vec<u32> {
    let (h, w) = (spec.height, spec.width);
    match spec.layout {
        Layout::Grid { rows, cols } => (0..h * w)
            .map(|p| {
                let (r, c) = (p / w, p % w);
                ((r * rows / h) * cols + c * cols / w) as u32
            })
            .collect(),
        Layout::Voronoi { sites } => {
            let mut rng = rng_for(spec.seed, "layout");
            let pts: Vec<(f64, f64)> =
                (0..sites).map(|_| (rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64))).collect();
            (0..h * w)
                .map(|p| {
                    let (r, c) = ((p / w) as f64 + 0.5, (p % w) as f64 + 0.5);
                    let mut best = (f64::INFINITY, 0usize);
                    for (i, &(sr, sc)) in pts.iter().enumerate() {
                        let d = (r - sr).powi(2) + (c - sc).powi(2);
                        if d < best.0 {
                            best = (d, i);
                        }
                    }
                    best.1 as u32
                })
                .collect()
        }
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    let (h, w) = (spec.height, spec.width);
    let (lo, hi) = spec.depth_range;
    if h == 0 || w == 0 {
        return Err(Error::InvalidSpec("empty scene".into()));
    }
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::InvalidSpec(format!("bad depth range {lo},{hi}")));
    }
    if spec.layout.region_count() == 0 || spec.layout.region_count() != spec.regions.len() {
        return Err(Error::InvalidSpec(format!(
            "layout has {} regions but {} region specs were given",
            spec.layout.region_count(),
            spec.regions.len()
        )));
    }
    if let Layout::Grid { rows, cols } = spec.layout {
        if rows > h || cols > w {
            return Err(Error::InvalidSpec("grid layout finer than the image".into()));
        }
    }
    for r in &spec.regions {
        r.distortion.validate()?;
    }

    let labels = layout_labels(spec);
    let mut gt = Vec::with_capacity(h * w);
    let mut rel = Vec::with_capacity(h * w);
    for (p, &label) in labels.iter().enumerate() {
        let (row, col) = (p / w, p % w);
        let (x, y) = (normalized_coord(col, w), normalized_coord(row, h));
        let region = &spec.regions[label as usize];
        let depth = region.plane.at(x, y) + spec.relief.at(x, y);
        if !(depth >= lo && depth <= hi) {
            return Err(Error::InvalidSpec(format!("ground truth {depth} at ({row}, {col}) leaves [{lo}, {hi}]")));
        }
        gt.push(depth);
        rel.push(region.distortion.inverse(depth, x, y));
    }

    Ok(Scene {
        gt: DepthGrid::from_dense(h, w, gt)?,
        rel: DepthGrid::from_dense(h, w, rel)?,
        mask: LabelGrid::new(h, w, labels)?,
        noise_sigma: spec.regions.iter().map(|r| r.distortion.noise_sigma).collect(),
    })
}

/// `n` distinct valid pixels drawn uniformly without replacement, row-major order.
pub fn sample_uniform(gt: &DepthGrid, n: usize, seed: u64) -> Result<SparseSamples> {
    let valid: Vec<usize> = (0..gt.len()).filter(|&p| gt.valid_mask()[p]).collect();
    if n > valid.len() {
        return Err(Error::TooManyRequested { requested: n, available: valid.len() });
    }
    let mut rng = rng_for(seed, "sampling");
    let mut picked: Vec<usize> = index::sample(&mut rng, valid.len(), n).into_iter().map(|i| valid[i]).collect();
    picked.sort_unstable();
    let w = gt.width();
    SparseSamples::new(picked.into_iter().map(|p| Sample { row: p / w, col: p % w, depth: gt.values()[p] }).collect())
}

/// Rows hit by `beams` evenly spaced scanlines: `floor((k + 0.5) * H / beams)`.
pub fn beam_rows(height: usize, beams: usize) -> Vec<usize> {
    (0..beams).map(|k| ((2 * k + 1) * height) / (2 * beams)).collect()
}

/// All valid pixels on `beams` evenly spaced rows.
pub fn sample_beams(gt: &DepthGrid, beams: usize) -> Result<SparseSamples> {
    if beams == 0 || beams > gt.height() {
        return Err(Error::InvalidConfig(format!("beam count {beams} outside 1..={}", gt.height())));
    }
    let mut points = Vec::new();
    for row in beam_rows(gt.height(), beams) {
        for col in 0..gt.width() {
            if let Some(depth) = gt.get(row, col) {
                points.push(Sample { row, col, depth });
            }
        }
    }
    SparseSamples::new(points)
}

/// Adds zero-mean Gaussian noise with per-pixel sigma.
pub fn perturb(samples: &SparseSamples, sigma_at: impl Fn(usize, usize) -> f64, seed: u64) -> Result<SparseSamples> {
    let mut rng = rng_for(seed, "noise");
    let points = samples
        .points()
        .iter()
        .map(|s| {
            let sigma = sigma_at(s.row, s.col);
            let noise = if sigma > 0.0 { Normal::new(0.0, sigma).expect("sigma > 0").sample(&mut rng) } else { 0.0 };
            Sample { depth: (s.depth + noise).max(MIN_SAMPLE_DEPTH), ..*s }
        })
        .collect();
    SparseSamples::new(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistortionFamily {
    Affine,
    Planar,
    Nonlinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutFamily {
    Grid,
    Voronoi,
    /// Grid or Voronoi, chosen per seed.
    Mixed,
}

/// Ranges for drawing random scene specs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSceneParams {
    pub height: usize,
    pub width: usize,
    pub regions: (usize, usize),
    pub layout: LayoutFamily,
    pub family: DistortionFamily,
    pub scale: (f64, f64),
    pub shift: (f64, f64),
    /// Range of |bx|, |by| for planar distortions.
    pub tilt: (f64, f64),
    pub gamma: f64,
    pub relief: Relief,
    pub noise_sigma: f64,
    pub depth_range: (f64, f64),
}

impl Default for RandomSceneParams {
    fn default() -> Self {
        Self {
            height: 480,
            width: 640,
            regions: (6, 20),
            layout: LayoutFamily::Mixed,
            family: DistortionFamily::Affine,
            scale: (0.5, 3.0),
            shift: (-15.0, 7.0),
            tilt: (0.5, 2.0),
            gamma: 1.2,
            relief: Relief { amplitude: 0.3, frequency: 3.0 },
            noise_sigma: 0.0,
            depth_range: (0.5, 9.5),
        }
    }
}

impl SceneSpec {
    /// Draws a scene spec; the same `(params, seed)` always yields the same spec.
    pub fn random(params: &RandomSceneParams, seed: u64) -> Result<SceneSpec> {
        let (lo, hi) = params.depth_range;
        let (rmin, rmax) = params.regions;
        if rmin == 0 || rmin > rmax {
            return Err(Error::InvalidSpec("bad region count range".into()));
        }
        let margin = params.relief.amplitude.abs();
        if hi - lo <= 4.0 * margin {
            return Err(Error::InvalidSpec("depth range too narrow for relief".into()));
        }
        let mut rng = rng_for(seed, "scene");
        let count = rng.gen_range(rmin..=rmax);
        let use_grid = match params.layout {
            LayoutFamily::Grid => true,
            LayoutFamily::Voronoi => false,
            LayoutFamily::Mixed => rng.gen_bool(0.5),
        };
        let layout = if use_grid {
            let rows = (1..=count).filter(|r| count % r == 0 && r * r <= count).max().unwrap_or(1);
            let cols = count / rows;
            let (rows, cols) = if params.height > params.width { (cols, rows) } else { (rows, cols) };
            Layout::Grid { rows, cols }
        } else {
            Layout::Voronoi { sites: count }
        };

        let draw = |rng: &mut rand_chacha::ChaCha8Rng, (a, b): (f64, f64)| if a < b { rng.gen_range(a..b) } else { a };
        let regions = (0..layout.region_count())
            .map(|_| {
                let inner_lo = lo + margin;
                let inner_hi = hi - margin;
                let l = rng.gen_range(inner_lo + 0.25 * (inner_hi - inner_lo)..inner_hi - 0.25 * (inner_hi - inner_lo));
                let room = (l - inner_lo).min(inner_hi - l) * 0.95;
                let m = rng.gen_range(-room / 2.0..room / 2.0);
                let n = rng.gen_range(-room / 2.0..room / 2.0);
                let sign = |rng: &mut rand_chacha::ChaCha8Rng| if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let distortion = match params.family {
                    DistortionFamily::Affine => Distortion::affine(draw(&mut rng, params.scale), draw(&mut rng, params.shift)),
                    DistortionFamily::Planar => {
                        let a = draw(&mut rng, params.scale);
                        let bx = sign(&mut rng) * draw(&mut rng, params.tilt);
                        let by = sign(&mut rng) * draw(&mut rng, params.tilt);
                        Distortion::planar(a, bx, by, draw(&mut rng, params.shift))
                    }
                    DistortionFamily::Nonlinear => Distortion::nonlinear(params.gamma),
                };
                RegionSpec { plane: Plane { m, n, l }, distortion: distortion.with_noise(params.noise_sigma) }
            })
            .collect();

        Ok(SceneSpec {
            height: params.height,
            width: params.width,
            layout,
            regions,
            relief: params.relief,
            seed,
            depth_range: params.depth_range,
        })
    }
}
