//! Least-squares estimators from relative depth to metric depth.
//!
//! Three model families are supported:
//!
//! * affine: `z1 = alpha * z2 + beta`
//! * planar surface: `z1 = alpha * z2 + beta * x + gamma * y + delta`
//! * median ratio: `z1 = alpha * z2` with `alpha = median(z1) / median(z2)`
//!
//! `x` and `y` are pixel coordinates mapped onto `[-1, 1]`. Linear models are
//! solved on a centred, column-equilibrated design through an SVD; the reported
//! condition number is that of the equilibrated normal matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{DepthGrid, DepthRange, SparseSamples};
use crate::stats::lower_median;

/// Normal-matrix condition numbers above this are treated as rank deficient.
pub const DEFAULT_COND_MAX: f64 = 1e8;
/// Relative spread below which a design column counts as constant.
const CONSTANT_SPREAD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    Affine,
    Planar,
    MedianRatio,
}

impl FitKind {
    /// Algebraic minimum number of observations.
    pub fn min_support(self) -> usize {
        match self {
            FitKind::Affine => 2,
            FitKind::Planar => 4,
            FitKind::MedianRatio => 1,
        }
    }
}

/// Where the samples behind a fit came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "source")]
pub enum Provenance {
    OwnRegion,
    Expanded { hop: usize },
    /// Whole-image fit requested as the primary method.
    Global,
    GlobalFallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub kind: FitKind,
    /// Scale on relative depth.
    pub alpha: f64,
    /// Shift (affine) or x-slope (planar), meters.
    pub beta: f64,
    /// y-slope (planar only), meters.
    pub gamma: f64,
    /// Shift (planar only), meters.
    pub delta: f64,
    pub support: usize,
    pub condition: f64,
    pub provenance: Provenance,
}

impl FitParams {
    #[inline]
    pub fn predict(&self, z2: f64, x: f64, y: f64) -> f64 {
        match self.kind {
            FitKind::Affine => self.alpha * z2 + self.beta,
            FitKind::Planar => self.alpha * z2 + self.beta * x + self.gamma * y + self.delta,
            FitKind::MedianRatio => self.alpha * z2,
        }
    }

    /// Planar slopes converted from normalized-coordinate units to meters per pixel.
    pub fn pixel_slopes(&self, height: usize, width: usize) -> (f64, f64) {
        let per = |n: usize| if n > 1 { 2.0 / (n - 1) as f64 } else { 0.0 };
        (self.beta * per(width), self.gamma * per(height))
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub cond_max: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { cond_max: DEFAULT_COND_MAX }
    }
}

/// Maps a pixel index onto `[-1, 1]`; single-pixel axes map to 0.
#[inline]
pub fn normalized_coord(index: usize, extent: usize) -> f64 {
    if extent > 1 {
        2.0 * index as f64 / (extent - 1) as f64 - 1.0
    } else {
        0.0
    }
}

/// Metric/relative depth pairs at sample locations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairedObservations {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PairedObservations {
    pub fn len(&self) -> usize {
        self.z1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z1.is_empty()
    }

    pub fn push(&mut self, row: usize, col: usize, z1: f64, z2: f64, x: f64, y: f64) {
        self.rows.push(row);
        self.cols.push(col);
        self.z1.push(z1);
        self.z2.push(z2);
        self.x.push(x);
        self.y.push(y);
    }

    /// RMSE of `params` against `z1`.
    pub fn residual_rmse(&self, params: &FitParams) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let ss: f64 = (0..self.len())
            .map(|i| {
                let r = params.predict(self.z2[i], self.x[i], self.y[i]) - self.z1[i];
                r * r
            })
            .sum();
        (ss / self.len() as f64).sqrt()
    }
}

/// Pairs each selected sample with the relative depth under it. `selection`
/// holds sample indices; `None` selects every sample. Samples on invalid
/// relative pixels are dropped.
pub fn pair_observations(rel: &DepthGrid, samples: &SparseSamples, selection: Option<&[usize]>) -> PairedObservations {
    let (h, w) = rel.dims();
    let mut obs = PairedObservations::default();
    let mut take = |i: usize| {
        let s = samples.points()[i];
        if let Some(z2) = rel.get(s.row, s.col) {
            obs.push(s.row, s.col, s.depth, z2, normalized_coord(s.col, w), normalized_coord(s.row, h));
        }
    };
    match selection {
        Some(idx) => idx.iter().for_each(|&i| take(i)),
        None => (0..samples.len()).for_each(&mut take),
    }
    obs
}

/// Least squares `target ~ sum_j coef_j * col_j + intercept`.
/// Returns `(coefficients, intercept, condition)`.
fn solve_centered(columns: &[&[f64]], target: &[f64], cond_max: f64) -> Result<(Vec<f64>, f64, f64)> {
    let n = target.len();
    let k = columns.len();
    let degenerate = |condition| Err(Error::DegenerateDesign { condition });

    let mut means = Vec::with_capacity(k);
    let mut norms = Vec::with_capacity(k);
    for col in columns {
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let mag = lo.abs().max(hi.abs());
        if mag == 0.0 || hi - lo <= CONSTANT_SPREAD * mag {
            return degenerate(f64::INFINITY);
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let norm = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return degenerate(f64::INFINITY);
        }
        means.push(mean);
        norms.push(norm);
    }

    let design = DMatrix::from_fn(n, k, |i, j| (columns[j][i] - means[j]) / norms[j]);
    let target_mean = target.iter().sum::<f64>() / n as f64;
    let rhs = DVector::from_iterator(n, target.iter().map(|t| t - target_mean));

    let svd = design.svd(true, true);
    let (smax, smin) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if condition.is_nan() || condition > cond_max {
        return degenerate(condition);
    }
    let scaled = svd.solve(&rhs, 0.0).map_err(|_| Error::DegenerateDesign { condition })?;
    let coefs: Vec<f64> = (0..k).map(|j| scaled[j] / norms[j]).collect();
    let intercept = target_mean - coefs.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    Ok((coefs, intercept, condition))
}

pub fn fit_affine(obs: &PairedObservations) -> Result<FitParams> {
    fit_affine_with(obs, &FitConfig::default())
}

pub fn fit_affine_with(obs: &PairedObservations, cfg: &FitConfig) -> Result<FitParams> {
    ensure_support(obs, FitKind::Affine.min_support())?;
    let (c, delta, condition) = solve_centered(&[&obs.z2], &obs.z1, cfg.cond_max)?;
    Ok(FitParams {
        kind: FitKind::Affine,
        alpha: c[0],
        beta: delta,
        gamma: 0.0,
        delta: 0.0,
        support: obs.len(),
        condition,
        provenance: Provenance::OwnRegion,
    })
}

pub fn fit_planar(obs: &PairedObservations) -> Result<FitParams> {
    fit_planar_with(obs, &FitConfig::default())
}

pub fn fit_planar_with(obs: &PairedObservations, cfg: &FitConfig) -> Result<FitParams> {
    ensure_support(obs, FitKind::Planar.min_support())?;
    let (c, delta, condition) = solve_centered(&[&obs.z2, &obs.x, &obs.y], &obs.z1, cfg.cond_max)?;
    Ok(FitParams {
        kind: FitKind::Planar,
        alpha: c[0],
        beta: c[1],
        gamma: c[2],
        delta,
        support: obs.len(),
        condition,
        provenance: Provenance::OwnRegion,
    })
}

/// Planar model with both slopes pinned to zero.
pub fn fit_planar_zero_slopes(obs: &PairedObservations, cfg: &FitConfig) -> Result<FitParams> {
    ensure_support(obs, FitKind::Affine.min_support())?;
    let (c, delta, condition) = solve_centered(&[&obs.z2], &obs.z1, cfg.cond_max)?;
    Ok(FitParams {
        kind: FitKind::Planar,
        alpha: c[0],
        beta: 0.0,
        gamma: 0.0,
        delta,
        support: obs.len(),
        condition,
        provenance: Provenance::OwnRegion,
    })
}

pub fn fit_median_ratio(obs: &PairedObservations) -> Result<FitParams> {
    ensure_support(obs, FitKind::MedianRatio.min_support())?;
    let m1 = lower_median(&mut obs.z1.clone()).expect("non-empty");
    let m2 = lower_median(&mut obs.z2.clone()).expect("non-empty");
    let alpha = m1 / m2;
    if m2 == 0.0 || !alpha.is_finite() {
        return Err(Error::ZeroMedian);
    }
    Ok(FitParams {
        kind: FitKind::MedianRatio,
        alpha,
        beta: 0.0,
        gamma: 0.0,
        delta: 0.0,
        support: obs.len(),
        condition: 1.0,
        provenance: Provenance::OwnRegion,
    })
}

/// Dispatches on model family.
pub fn fit(kind: FitKind, obs: &PairedObservations, cfg: &FitConfig) -> Result<FitParams> {
    match kind {
        FitKind::Affine => fit_affine_with(obs, cfg),
        FitKind::Planar => fit_planar_with(obs, cfg),
        FitKind::MedianRatio => fit_median_ratio(obs),
    }
}

fn ensure_support(obs: &PairedObservations, need: usize) -> Result<()> {
    if obs.len() < need {
        return Err(Error::InsufficientSamples { need, got: obs.len() });
    }
    Ok(())
}

/// Evaluates `params` at one pixel of `rel` and clamps into `clamp`.
#[inline]
pub fn predict_pixel(rel: &DepthGrid, params: &FitParams, row: usize, col: usize, clamp: DepthRange) -> Option<f64> {
    let (h, w) = rel.dims();
    rel.get(row, col)
        .map(|z2| clamp.clamp(params.predict(z2, normalized_coord(col, w), normalized_coord(row, h))))
}

/// Applies `params` to the listed flat pixel indices. Pixels outside the subset
/// or invalid in `rel` are invalid in the result.
pub fn apply_fit(rel: &DepthGrid, params: &FitParams, pixels: &[usize], clamp: DepthRange) -> Result<DepthGrid> {
    let (h, w) = rel.dims();
    let mut values = vec![0.0; h * w];
    let mut valid = vec![false; h * w];
    for &p in pixels {
        if let Some(v) = predict_pixel(rel, params, p / w, p % w, clamp) {
            values[p] = v;
            valid[p] = true;
        }
    }
    DepthGrid::new(h, w, values, valid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::Sample;
    use proptest::prelude::*;

    fn obs(z2: &[f64], z1: &[f64]) -> PairedObservations {
        let mut o = PairedObservations::default();
        for (i, (&a, &b)) in z2.iter().zip(z1).enumerate() {
            o.push(0, i, b, a, 0.0, 0.0);
        }
        o
    }

    fn obs_xy(pts: &[(f64, f64, f64, f64)]) -> PairedObservations {
        let mut o = PairedObservations::default();
        for &(x, y, z2, z1) in pts {
            o.push(0, 0, z1, z2, x, y);
        }
        o
    }

    #[test]
    fn affine_collinear() {
        let p = fit_affine(&obs(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0])).unwrap();
        assert!((p.alpha - 2.0).abs() < 1e-12);
        assert!((p.beta - 1.0).abs() < 1e-12);
        assert_eq!(p.support, 3);
    }

    #[test]
    fn affine_identity() {
        let p = fit_affine(&obs(&[0.3, 1.7, -2.0, 4.0], &[0.3, 1.7, -2.0, 4.0])).unwrap();
        assert!((p.alpha - 1.0).abs() < 1e-12);
        assert!(p.beta.abs() < 1e-12);
    }

    #[test]
    fn affine_constant_z2_degenerate() {
        assert!(matches!(fit_affine(&obs(&[2.0; 3], &[1.0, 2.0, 3.0])), Err(Error::DegenerateDesign { .. })));
    }

    #[test]
    fn affine_too_few() {
        assert!(matches!(fit_affine(&obs(&[1.0], &[1.0])), Err(Error::InsufficientSamples { need: 2, got: 1 })));
    }

    #[test]
    fn planar_exact_solve() {
        let o = obs_xy(&[(0.0, 0.0, 0.0, 3.0), (1.0, 0.0, 0.0, 3.0), (0.0, 1.0, 0.0, 3.0), (1.0, 1.0, 1.0, 5.0)]);
        let p = fit_planar(&o).unwrap();
        for (got, want) in [(p.alpha, 2.0), (p.beta, 0.0), (p.gamma, 0.0), (p.delta, 3.0)] {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let mut rel = DepthGrid::from_dense(3, 3, vec![0.0; 9]).unwrap();
        rel = rel.map_valid(|_| 1.0).unwrap();
        // bottom-right pixel of a 3x3 grid sits at x = y = 1
        assert!((predict_pixel(&rel, &p, 2, 2, DepthRange::NYU).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn planar_identity() {
        let o = obs_xy(&[(-1.0, 0.5, 0.2, 0.2), (0.3, -0.4, 1.9, 1.9), (0.8, 0.9, -0.7, -0.7), (-0.2, -1.0, 3.1, 3.1), (0.5, 0.1, 0.0, 0.0)]);
        let p = fit_planar(&o).unwrap();
        assert!((p.alpha - 1.0).abs() < 1e-12);
        assert!(p.beta.abs() < 1e-12 && p.gamma.abs() < 1e-12 && p.delta.abs() < 1e-12);
    }

    #[test]
    fn planar_z2_in_span_is_degenerate() {
        let pts: Vec<_> = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (-0.5, 0.3)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| (x, y, x + y, 1.0 + i as f64))
            .collect();
        assert!(matches!(fit_planar(&obs_xy(&pts)), Err(Error::DegenerateDesign { .. })));
    }

    #[test]
    fn planar_single_row_is_degenerate() {
        let pts: Vec<_> = (0..6).map(|i| (i as f64 / 5.0, 0.2, (i * i) as f64, 1.0 + i as f64)).collect();
        assert!(fit_planar(&obs_xy(&pts)).is_err());
    }

    #[test]
    fn planar_too_few() {
        let o = obs_xy(&[(0.0, 0.0, 0.0, 1.0), (1.0, 0.0, 1.0, 2.0), (0.0, 1.0, 2.0, 3.0)]);
        assert!(matches!(fit_planar(&o), Err(Error::InsufficientSamples { need: 4, got: 3 })));
    }

    #[test]
    fn median_ratio_cases() {
        assert_eq!(fit_median_ratio(&obs(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0])).unwrap().alpha, 2.0);
        assert_eq!(fit_median_ratio(&obs(&[1.5, 2.5], &[1.5, 2.5])).unwrap().alpha, 1.0);
        assert!(matches!(fit_median_ratio(&obs(&[-1.0, 0.0, 1.0], &[1.0, 2.0, 3.0])), Err(Error::ZeroMedian)));
        assert!(fit_median_ratio(&obs(&[], &[])).is_err());
    }

    #[test]
    fn apply_affine_and_clamp() {
        let rel = DepthGrid::from_dense(1, 2, vec![3.0, -1.0]).unwrap();
        let p = fit_affine(&obs(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0])).unwrap();
        let out = apply_fit(&rel, &p, &[0, 1], DepthRange::new(0.001, 10.0).unwrap()).unwrap();
        assert!((out.values()[0] - 7.0).abs() < 1e-12);
        assert_eq!(out.values()[1], 0.001);
        let partial = apply_fit(&rel, &p, &[1], DepthRange::NYU).unwrap();
        assert_eq!(partial.valid_mask(), &[false, true]);
    }

    #[test]
    fn pair_observations_drops_invalid_and_normalizes_coords() {
        let rel = DepthGrid::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![true, true, true, true, false, true]).unwrap();
        let s = SparseSamples::new(vec![
            Sample { row: 0, col: 0, depth: 1.0 },
            Sample { row: 0, col: 1, depth: 1.0 },
            Sample { row: 0, col: 2, depth: 1.0 },
            Sample { row: 1, col: 1, depth: 1.0 },
        ])
        .unwrap();
        let o = pair_observations(&rel, &s, None);
        assert_eq!(o.len(), 3);
        assert_eq!(o.x, vec![-1.0, 0.0, 1.0]);
        assert_eq!(o.y, vec![-1.0, -1.0, -1.0]);
        assert_eq!(pair_observations(&rel, &s, Some(&[2, 3])).len(), 1);
    }

    #[test]
    fn pixel_slopes_rescale() {
        let p = FitParams {
            kind: FitKind::Planar,
            alpha: 1.0,
            beta: 2.0,
            gamma: 4.0,
            delta: 0.0,
            support: 4,
            condition: 1.0,
            provenance: Provenance::OwnRegion,
        };
        assert_eq!(p.pixel_slopes(5, 3), (2.0, 2.0));
    }

    fn arb_planar_obs() -> impl Strategy<Value = (PairedObservations, [f64; 4])> {
        (
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -3.0f64..3.0), 6..30),
            (0.5f64..3.0, -2.0f64..2.0, -2.0f64..2.0, -10.0f64..10.0),
        )
            .prop_map(|(pts, (a, b, c, d))| {
                let o = obs_xy(&pts.iter().map(|&(x, y, z2)| (x, y, z2, a * z2 + b * x + c * y + d)).collect::<Vec<_>>());
                (o, [a, b, c, d])
            })
    }

    proptest! {
        #[test]
        fn planar_exact_interpolation((o, truth) in arb_planar_obs()) {
            if let Ok(p) = fit_planar(&o) {
                prop_assume!(p.condition < 1e6);
                for (got, want) in [p.alpha, p.beta, p.gamma, p.delta].iter().zip(truth) {
                    prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
                }
            }
        }

        #[test]
        fn residual_orthogonal_to_design(pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -3.0f64..3.0, 0.1f64..10.0), 5..40)) {
            let o = obs_xy(&pts);
            let norm = o.z1.iter().map(|v| v * v).sum::<f64>().sqrt();
            if let Ok(p) = fit_planar(&o) {
                prop_assume!(p.condition < 1e6);
                let mut g = [0.0; 4];
                for i in 0..o.len() {
                    let r = p.predict(o.z2[i], o.x[i], o.y[i]) - o.z1[i];
                    g[0] += o.z2[i] * r;
                    g[1] += o.x[i] * r;
                    g[2] += o.y[i] * r;
                    g[3] += r;
                }
                for gi in g {
                    prop_assert!(gi.abs() < 1e-8 * norm, "{g:?}");
                }
            }
            if let Ok(p) = fit_affine(&o) {
                let (mut g0, mut g1) = (0.0, 0.0);
                for i in 0..o.len() {
                    let r = p.predict(o.z2[i], 0.0, 0.0) - o.z1[i];
                    g0 += o.z2[i] * r;
                    g1 += r;
                }
                prop_assert!(g0.abs() < 1e-8 * norm && g1.abs() < 1e-8 * norm);
            }
        }

        #[test]
        fn scale_equivariance(pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -3.0f64..3.0, 0.1f64..10.0), 5..20), c in 0.1f64..20.0) {
            let o = obs_xy(&pts);
            let mut scaled = o.clone();
            scaled.z1.iter_mut().for_each(|v| *v *= c);
            if let (Ok(p), Ok(q)) = (fit_planar(&o), fit_planar(&scaled)) {
                for (a, b) in [(p.alpha, q.alpha), (p.beta, q.beta), (p.gamma, q.gamma), (p.delta, q.delta)] {
                    prop_assert!((a * c - b).abs() <= 1e-9 * (a * c).abs().max(1.0));
                }
            }
        }

        #[test]
        fn zero_slope_planar_matches_affine(pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -3.0f64..3.0, 0.1f64..10.0), 2..20)) {
            let o = obs_xy(&pts);
            match (fit_affine(&o), fit_planar_zero_slopes(&o, &FitConfig::default())) {
                (Ok(a), Ok(p)) => {
                    prop_assert_eq!(a.alpha, p.alpha);
                    prop_assert_eq!(a.beta, p.delta);
                    prop_assert_eq!((p.beta, p.gamma), (0.0, 0.0));
                }
                (Err(_), Err(_)) => {}
                (a, p) => prop_assert!(false, "{a:?} vs {p:?}"),
            }
        }
    }
}
