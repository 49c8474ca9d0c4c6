//! Region-aware conversion of relative depth maps to metric depth.
//!
//! A relative depth map (correct up to an unknown transform) is split into
//! regions by a segmentation mask. Each region is mapped to metric depth by
//! its own least-squares fit against sparse metric samples, either an affine
//! map of relative depth ([`Method::Slf`]) or an affine map plus an image-plane
//! tilt ([`Method::Ssf`]). Regions without enough samples borrow from their
//! neighbors. Global and median-ratio baselines, the usual error metrics,
//! synthetic scene generation and file formats are included.
//!
//! ```
//! use depthscale::{generate_scene, rescale, evaluate, DepthRange, Method, PipelineConfig, RandomSceneParams, SceneSpec};
//!
//! let params = RandomSceneParams { height: 48, width: 64, regions: (4, 6), ..Default::default() };
//! let scene = generate_scene(&SceneSpec::random(&params, 7).unwrap()).unwrap();
//! let samples = scene.sample_uniform(400, 7).unwrap();
//! let out = rescale(&scene.rel, &scene.mask, &samples, &PipelineConfig::new(Method::Slf)).unwrap();
//! let m = evaluate(&out.depth, &scene.gt, DepthRange::NYU).unwrap();
//! assert!(m.abs_rel < 0.05);
//! ```

pub mod bench;
pub mod error;
pub mod fitting;
pub mod grids;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod normalize;
pub mod pipeline;
pub mod regions;
pub mod rng;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use fitting::{
    apply_fit, fit_affine, fit_median_ratio, fit_planar, pair_observations, FitConfig, FitKind, FitParams,
    PairedObservations, Provenance,
};
pub use grids::{canonicalize_labels, grid_to_samples, samples_to_grid, DepthGrid, DepthRange, LabelGrid, Sample, SparseSamples};
pub use metrics::{evaluate, MetricReport, MetricRow};
pub use normalize::{affine_invariant_normalize, invert_depth, normalize, Normalization, NormalizationStats};
pub use pipeline::{rescale, rescale_global, Method, MinSamples, PipelineConfig, RegionReport, Rescaled};
pub use regions::{build_region_graph, expand_until, Connectivity, Expansion, Region, RegionGraph, RegionOptions};
pub use synth::{
    generate_scene, sample_beams, sample_uniform, Distortion, DistortionFamily, DistortionKind, Layout, LayoutFamily,
    Plane, RandomSceneParams, RegionSpec, Relief, Scene, SceneSpec,
};
