//! Dense depth/label grids and sparse depth samples.
//!
//! All grids are row-major with the origin at the top-left pixel. Missing
//! depth is carried by an explicit validity mask; values at invalid pixels
//! are stored as `0.0` and never read.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_dims(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 || height.checked_mul(width) != Some(len) {
        return Err(Error::BadDimensions { height, width, len });
    }
    Ok(())
}

/// Dense H×W depth grid with per-pixel validity.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthGrid {
    height: usize,
    width: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthGrid {
    pub fn new(height: usize, width: usize, mut values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        check_dims(height, width, values.len())?;
        check_dims(height, width, valid.len())?;
        for (i, (v, &ok)) in values.iter_mut().zip(&valid).enumerate() {
            if ok {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i / width, col: i % width });
                }
            } else {
                *v = 0.0;
            }
        }
        Ok(Self { height, width, values, valid })
    }

    /// Every pixel valid; all values must be finite.
    pub fn from_dense(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::new(height, width, values, valid)
    }

    /// Measured-depth convention: zeros, negatives and non-finite values are invalid.
    pub fn from_measured(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        Self::new(height, width, values, valid)
    }

    pub fn invalid(height: usize, width: usize) -> Result<Self> {
        let n = height.saturating_mul(width);
        Self::new(height, width, vec![0.0; n], vec![false; n])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Value at a pixel, `None` when out of bounds or invalid.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row >= self.height || col >= self.width {
            return None;
        }
        let i = self.index(row, col);
        self.valid[i].then_some(self.values[i])
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_some()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Values at valid pixels in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.valid).filter(|(_, &ok)| ok).map(|(&v, _)| v)
    }

    /// Checks the metric/ground-truth invariant: valid pixels strictly positive.
    pub fn ensure_positive(&self) -> Result<()> {
        for (i, (&v, &ok)) in self.values.iter().zip(&self.valid).enumerate() {
            if ok && v <= 0.0 {
                return Err(Error::NonPositive { row: i / self.width, col: i % self.width, value: v });
            }
        }
        Ok(())
    }

    /// Applies `f` to every valid value, keeping the validity mask.
    pub fn map_valid(&self, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        let values = self
            .values
            .iter()
            .zip(&self.valid)
            .map(|(&v, &ok)| if ok { f(v) } else { 0.0 })
            .collect();
        Self::new(self.height, self.width, values, self.valid.clone())
    }
}

/// Dense H×W grid of region labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelGrid {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelGrid {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        check_dims(height, width, labels.len())?;
        Ok(Self { height, width, labels })
    }

    pub fn uniform(height: usize, width: usize, label: u32) -> Result<Self> {
        Self::new(height, width, vec![label; height.saturating_mul(width)])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// Number of distinct labels.
    pub fn label_count(&self) -> usize {
        self.labels.iter().collect::<HashSet<_>>().len()
    }
}

/// Remaps labels to `0..R` in order of first appearance in a row-major scan.
pub fn canonicalize_labels(mask: &LabelGrid) -> LabelGrid {
    let mut remap: HashMap<u32, u32> = HashMap::new();
    let labels = mask
        .labels
        .iter()
        .map(|l| {
            let next = remap.len() as u32;
            *remap.entry(*l).or_insert(next)
        })
        .collect();
    LabelGrid { height: mask.height, width: mask.width, labels }
}

/// One sparse depth measurement in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub row: usize,
    pub col: usize,
    pub depth: f64,
}

/// Sparse depth measurements with distinct coordinates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseSamples {
    points: Vec<Sample>,
}

impl SparseSamples {
    pub fn new(points: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if !(p.depth.is_finite() && p.depth > 0.0) {
                return Err(Error::NonPositive { row: p.row, col: p.col, value: p.depth });
            }
            if !seen.insert((p.row, p.col)) {
                return Err(Error::DuplicateSample { row: p.row, col: p.col });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Sample] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        match self.points.iter().find(|p| p.row >= height || p.col >= width) {
            Some(p) => Err(Error::OutOfBounds { row: p.row, col: p.col, height, width }),
            None => Ok(()),
        }
    }
}

pub fn samples_to_grid(samples: &SparseSamples, height: usize, width: usize) -> Result<DepthGrid> {
    samples.check_bounds(height, width)?;
    let mut grid = DepthGrid::invalid(height, width)?;
    for p in samples.points() {
        let i = grid.index(p.row, p.col);
        grid.values[i] = p.depth;
        grid.valid[i] = true;
    }
    Ok(grid)
}

/// Valid pixels of a measured grid as samples, row-major.
pub fn grid_to_samples(grid: &DepthGrid) -> Result<SparseSamples> {
    let mut points = Vec::with_capacity(grid.valid_count());
    for row in 0..grid.height {
        for col in 0..grid.width {
            if let Some(depth) = grid.get(row, col) {
                points.push(Sample { row, col, depth });
            }
        }
    }
    SparseSamples::new(points)
}

/// Closed depth interval in meters used for clamping and evaluation gating.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl DepthRange {
    /// NYU Depth v2 evaluation range.
    pub const NYU: DepthRange = DepthRange { min: 0.001, max: 10.0 };
    /// VOID evaluation range.
    pub const VOID: DepthRange = DepthRange { min: 0.2, max: 5.0 };

    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::InvalidConfig(format!("bad depth range {min},{max}")));
        }
        Ok(Self { min, max })
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

impl Default for DepthRange {
    fn default() -> Self {
        Self::NYU
    }
}
