//! Region-aware rescaling of relative depth with sparse metric samples.
//!
//! The relative map is normalized once, split into regions, and every region
//! receives its own fit from the samples it contains. Regions without enough
//! usable samples grow through their neighbors ring by ring until a fit
//! succeeds; the fit is still applied only to the origin region's pixels.
//! When growth is exhausted the configured fallback chain is walked.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{fit, pair_observations, predict_pixel, FitConfig, FitKind, FitParams, Provenance};
use crate::grids::{DepthGrid, DepthRange, LabelGrid, SparseSamples};
use crate::normalize::{normalize, Normalization, NormalizationStats};
use crate::regions::{build_region_graph, expand_until, RegionGraph, RegionOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Region-aware affine fit.
    Slf,
    /// Region-aware planar surface fit.
    Ssf,
    /// Region-aware median ratio.
    #[serde(rename = "median")]
    RegionMedian,
    GlobalLinear,
    GlobalMedian,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Slf, Method::Ssf, Method::RegionMedian, Method::GlobalLinear, Method::GlobalMedian];

    pub fn kind(self) -> FitKind {
        match self {
            Method::Slf | Method::GlobalLinear => FitKind::Affine,
            Method::Ssf => FitKind::Planar,
            Method::RegionMedian | Method::GlobalMedian => FitKind::MedianRatio,
        }
    }

    pub fn is_global(self) -> bool {
        matches!(self, Method::GlobalLinear | Method::GlobalMedian)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Slf => "slf",
            Method::Ssf => "ssf",
            Method::RegionMedian => "median",
            Method::GlobalLinear => "global-linear",
            Method::GlobalMedian => "global-median",
        }
    }

    /// Default degeneracy fallbacks tried after this method.
    pub fn default_fallbacks(self) -> Vec<Method> {
        match self {
            Method::Ssf => vec![Method::Slf, Method::RegionMedian, Method::GlobalLinear],
            Method::Slf => vec![Method::RegionMedian, Method::GlobalLinear],
            Method::RegionMedian => vec![Method::GlobalMedian],
            Method::GlobalLinear | Method::GlobalMedian => vec![],
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-family minimum sample counts a region must reach before fitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinSamples {
    pub linear: usize,
    pub planar: usize,
    pub median: usize,
}

impl Default for MinSamples {
    fn default() -> Self {
        Self { linear: 2, planar: 4, median: 1 }
    }
}

impl MinSamples {
    pub fn for_kind(&self, kind: FitKind) -> usize {
        let configured = match kind {
            FitKind::Affine => self.linear,
            FitKind::Planar => self.planar,
            FitKind::MedianRatio => self.median,
        };
        configured.max(kind.min_support())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub method: Method,
    pub min_samples: MinSamples,
    /// `None` expands until the connected component is exhausted.
    pub max_hops: Option<usize>,
    pub clamp: DepthRange,
    pub regions: RegionOptions,
    pub normalization: Normalization,
    pub fallback_chain: Vec<Method>,
    pub fit: FitConfig,
}

impl PipelineConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            min_samples: MinSamples::default(),
            max_hops: None,
            clamp: DepthRange::default(),
            regions: RegionOptions::default(),
            normalization: Normalization::default(),
            fallback_chain: method.default_fallbacks(),
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let last = self.fallback_chain.last().copied().unwrap_or(self.method);
        let terminal = matches!(last, Method::GlobalLinear | Method::GlobalMedian | Method::RegionMedian)
            && self.min_samples.for_kind(last.kind()) <= if last == Method::GlobalLinear { 2 } else { 1 };
        if !terminal {
            return Err(Error::InvalidConfig(format!(
                "fallback chain must end in global-linear or a single-sample method, ends in {last}"
            )));
        }
        if self.fit.cond_max.is_nan() || self.fit.cond_max <= 0.0 {
            return Err(Error::InvalidConfig("cond_max must be positive".into()));
        }
        Ok(())
    }

    fn chain(&self) -> impl Iterator<Item = Method> + '_ {
        std::iter::once(self.method).chain(self.fallback_chain.iter().copied())
    }
}

/// Per-region audit record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: usize,
    pub label: u32,
    pub method: Method,
    pub params: FitParams,
    pub hop: usize,
    pub samples_used: usize,
    pub own_samples: usize,
    /// RMSE of the chosen fit on the region's own samples; `None` without any.
    pub residual_rmse: Option<f64>,
}

impl RegionReport {
    pub fn is_global_fallback(&self) -> bool {
        self.params.provenance == Provenance::GlobalFallback
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rescaled {
    pub depth: DepthGrid,
    pub reports: Vec<RegionReport>,
    pub stats: NormalizationStats,
    /// How many times each pixel was written; 1 everywhere on success.
    pub write_counts: Vec<u8>,
}

fn check_inputs(rel: &DepthGrid, mask: Option<&LabelGrid>, samples: &SparseSamples) -> Result<()> {
    if let Some(mask) = mask {
        if mask.dims() != rel.dims() {
            return Err(Error::DimensionMismatch { expected: rel.dims(), got: mask.dims() });
        }
    }
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    samples.check_bounds(rel.height(), rel.width())
}

/// The raw relative map and its normalized form. Median ratios are taken on
/// the raw map since they are not shift-invariant; affine and planar fits use
/// the normalized one.
struct Inputs<'a> {
    raw: &'a DepthGrid,
    norm: DepthGrid,
}

impl<'a> Inputs<'a> {
    fn new(raw: &'a DepthGrid, normalization: Normalization) -> Result<(Self, NormalizationStats)> {
        let (norm, stats) = normalize(raw, normalization)?;
        Ok((Self { raw, norm }, stats))
    }

    fn for_kind(&self, kind: FitKind) -> &DepthGrid {
        match kind {
            FitKind::MedianRatio => self.raw,
            FitKind::Affine | FitKind::Planar => &self.norm,
        }
    }
}

fn fit_global(inputs: &Inputs, samples: &SparseSamples, kind: FitKind, cfg: &PipelineConfig) -> Result<FitParams> {
    let obs = pair_observations(inputs.for_kind(kind), samples, None);
    let need = cfg.min_samples.for_kind(kind);
    if obs.len() < need {
        return Err(Error::InsufficientSamples { need, got: obs.len() });
    }
    fit(kind, &obs, &cfg.fit)
}

/// Fits one region, walking expansion and then the fallback chain.
fn fit_region(
    graph: &RegionGraph,
    origin: usize,
    inputs: &Inputs,
    samples: &SparseSamples,
    cfg: &PipelineConfig,
    global: &(dyn Fn(FitKind) -> Result<FitParams> + Sync),
) -> Result<(Method, FitParams, usize)> {
    let mut last_err = Error::NoSamples;
    for method in cfg.chain() {
        let kind = method.kind();
        if method.is_global() {
            match global(kind) {
                Ok(p) => {
                    let provenance = if method == cfg.method { Provenance::Global } else { Provenance::GlobalFallback };
                    return Ok((method, p.with_provenance(provenance), 0));
                }
                Err(e) => {
                    last_err = e;
                    continue;
                }
            }
        }
        let rel = inputs.for_kind(kind);
        let need = cfg.min_samples.for_kind(kind);
        let mut accepted = None;
        let expansion = expand_until(graph, origin, cfg.max_hops, |idx| {
            let obs = pair_observations(rel, samples, Some(idx));
            if obs.len() < need {
                last_err = Error::InsufficientSamples { need, got: obs.len() };
                return false;
            }
            match fit(kind, &obs, &cfg.fit) {
                Ok(p) => {
                    accepted = Some(p);
                    true
                }
                Err(e) => {
                    last_err = e;
                    false
                }
            }
        });
        if let (true, Some(p)) = (expansion.satisfied, accepted) {
            let provenance =
                if expansion.hop == 0 { Provenance::OwnRegion } else { Provenance::Expanded { hop: expansion.hop } };
            return Ok((method, p.with_provenance(provenance), expansion.hop));
        }
    }
    Err(Error::FallbackExhausted { region: origin, last: Box::new(last_err) })
}

/// Converts relative depth into metric depth with per-region fits.
///
/// `rel` must already be relative depth (invert model disparity first).
pub fn rescale(rel: &DepthGrid, mask: &LabelGrid, samples: &SparseSamples, cfg: &PipelineConfig) -> Result<Rescaled> {
    cfg.validate()?;
    check_inputs(rel, Some(mask), samples)?;
    let (inputs, stats) = Inputs::new(rel, cfg.normalization)?;
    let graph = build_region_graph(mask, samples, cfg.regions)?;

    let cached: Vec<(FitKind, Option<FitParams>)> = cfg
        .chain()
        .filter(|m| m.is_global())
        .map(|m| (m.kind(), fit_global(&inputs, samples, m.kind(), cfg).ok()))
        .collect();
    let global = |kind: FitKind| -> Result<FitParams> {
        match cached.iter().find(|(k, _)| *k == kind) {
            Some((_, Some(p))) => Ok(*p),
            // failed or uncached: recompute to surface the error
            _ => fit_global(&inputs, samples, kind, cfg),
        }
    };

    let fit_one = |id: usize| fit_region(&graph, id, &inputs, samples, cfg, &global);
    #[cfg(feature = "parallel")]
    let fits: Vec<_> = {
        use rayon::prelude::*;
        (0..graph.len()).into_par_iter().map(fit_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fits: Vec<_> = (0..graph.len()).map(fit_one).collect();

    let (h, w) = rel.dims();
    let mut values = vec![0.0; h * w];
    let mut valid = vec![false; h * w];
    let mut write_counts = vec![0u8; h * w];
    let mut reports = Vec::with_capacity(graph.len());
    for (region, fitted) in graph.regions().iter().zip(fits) {
        let (method, params, hop) = fitted?;
        let source = inputs.for_kind(params.kind);
        for &p in &region.pixels {
            if let Some(v) = predict_pixel(source, &params, p / w, p % w, cfg.clamp) {
                values[p] = v;
                valid[p] = true;
            }
            write_counts[p] = write_counts[p].saturating_add(1);
        }
        let own = pair_observations(source, samples, Some(&region.sample_indices));
        reports.push(RegionReport {
            region: region.id,
            label: region.label,
            method,
            params,
            hop,
            samples_used: params.support,
            own_samples: own.len(),
            residual_rmse: (!own.is_empty()).then(|| own.residual_rmse(&params)),
        });
    }
    debug_assert!(write_counts.iter().all(|&c| c == 1));

    Ok(Rescaled { depth: DepthGrid::new(h, w, values, valid)?, reports, stats, write_counts })
}

/// Whole-image fit of one model applied to every valid pixel.
pub fn rescale_global(rel: &DepthGrid, samples: &SparseSamples, kind: FitKind, cfg: &PipelineConfig) -> Result<DepthGrid> {
    check_inputs(rel, None, samples)?;
    let (inputs, _) = Inputs::new(rel, cfg.normalization)?;
    let params = fit_global(&inputs, samples, kind, cfg)?;
    let source = inputs.for_kind(kind);
    let (h, w) = rel.dims();
    let mut values = vec![0.0; h * w];
    let mut valid = vec![false; h * w];
    for p in 0..h * w {
        if let Some(v) = predict_pixel(source, &params, p / w, p % w, cfg.clamp) {
            values[p] = v;
            valid[p] = true;
        }
    }
    DepthGrid::new(h, w, values, valid)
}
