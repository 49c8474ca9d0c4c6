//! Inverse-depth conversion and affine-invariant normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::DepthGrid;
use crate::stats::lower_median;

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// How relative depth is recentred and rescaled before fitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Median translation, mean-absolute-deviation scale.
    #[default]
    MedianMad,
    /// Mean translation, population standard deviation scale.
    MeanStd,
    /// Pass-through (`t = 0`, `s = 1`).
    None,
}

/// Translation and scale removed by normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub t: f64,
    pub s: f64,
}

/// `D = 1 / max(d, epsilon)` at valid pixels.
pub fn invert_depth(inverse: &DepthGrid, epsilon: f64) -> Result<DepthGrid> {
    inverse.map_valid(|d| 1.0 / d.max(epsilon))
}

/// `D' = (D - median) / mean|D - median|` over valid pixels.
pub fn affine_invariant_normalize(depth: &DepthGrid) -> Result<(DepthGrid, NormalizationStats)> {
    normalize(depth, Normalization::MedianMad)
}

pub fn normalize(depth: &DepthGrid, method: Normalization) -> Result<(DepthGrid, NormalizationStats)> {
    let stats = normalization_stats(depth, method)?;
    let out = depth.map_valid(|v| (v - stats.t) / stats.s)?;
    Ok((out, stats))
}

pub fn normalization_stats(depth: &DepthGrid, method: Normalization) -> Result<NormalizationStats> {
    if method == Normalization::None {
        return Ok(NormalizationStats { t: 0.0, s: 1.0 });
    }
    let mut vals: Vec<f64> = depth.valid_values().collect();
    if vals.len() < 2 {
        return Err(Error::DegenerateGrid("fewer than 2 valid pixels"));
    }
    let n = vals.len() as f64;
    let (t, s) = match method {
        Normalization::MedianMad => {
            let t = lower_median(&mut vals).expect("non-empty");
            let s = vals.iter().map(|v| (v - t).abs()).sum::<f64>() / n;
            (t, s)
        }
        Normalization::MeanStd => {
            let t = vals.iter().sum::<f64>() / n;
            let s = (vals.iter().map(|v| (v - t) * (v - t)).sum::<f64>() / n).sqrt();
            (t, s)
        }
        Normalization::None => unreachable!(),
    };
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::DegenerateGrid("zero spread"));
    }
    Ok(NormalizationStats { t, s })
}
