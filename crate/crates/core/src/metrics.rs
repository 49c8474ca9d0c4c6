//! Standard monocular depth error metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{DepthGrid, DepthRange};
use crate::stats::CompensatedSum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub rmse: f64,
    /// Natural-log RMSE.
    pub rmse_log: f64,
    pub log10: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub valid_pixel_count: usize,
}

/// Compares `pred` against `gt` over pixels valid in both with `gt` inside
/// `range`. Predictions below `range.min` are raised to it for the log and
/// ratio terms.
pub fn evaluate(pred: &DepthGrid, gt: &DepthGrid, range: DepthRange) -> Result<MetricReport> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimensionMismatch { expected: gt.dims(), got: pred.dims() });
    }
    let thresholds = [1.25, 1.25f64.powi(2), 1.25f64.powi(3)];
    let mut abs_rel = CompensatedSum::default();
    let mut sq = CompensatedSum::default();
    let mut sq_log = CompensatedSum::default();
    let mut log10 = CompensatedSum::default();
    let mut hits = [0usize; 3];
    let mut n = 0usize;

    let pairs = pred.values().iter().zip(pred.valid_mask()).zip(gt.values().iter().zip(gt.valid_mask()));
    for ((&p, &pv), (&g, &gv)) in pairs {
        if !(pv && gv && range.contains(g)) {
            continue;
        }
        n += 1;
        let d = p - g;
        abs_rel.add(d.abs() / g);
        sq.add(d * d);
        let pc = p.max(range.min);
        let dl = pc.ln() - g.ln();
        sq_log.add(dl * dl);
        log10.add((pc.log10() - g.log10()).abs());
        let ratio = (pc / g).max(g / pc);
        for (hit, t) in hits.iter_mut().zip(thresholds) {
            *hit += usize::from(ratio < t);
        }
    }
    if n == 0 {
        return Err(Error::NoOverlap);
    }
    let nf = n as f64;
    Ok(MetricReport {
        abs_rel: abs_rel.value() / nf,
        rmse: (sq.value() / nf).sqrt(),
        rmse_log: (sq_log.value() / nf).sqrt(),
        log10: log10.value() / nf,
        delta1: hits[0] as f64 / nf,
        delta2: hits[1] as f64 / nf,
        delta3: hits[2] as f64 / nf,
        valid_pixel_count: n,
    })
}

/// One row of the benchmark CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub image_id: String,
    pub method: String,
    pub region_aware: bool,
    pub n_samples: usize,
    pub seed: u64,
    pub abs_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub log10: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub n_valid: usize,
}

impl MetricRow {
    pub fn new(image_id: impl Into<String>, method: impl Into<String>, region_aware: bool, n_samples: usize, seed: u64, m: &MetricReport) -> Self {
        Self {
            image_id: image_id.into(),
            method: method.into(),
            region_aware,
            n_samples,
            seed,
            abs_rel: m.abs_rel,
            rmse: m.rmse,
            rmse_log: m.rmse_log,
            log10: m.log10,
            d1: m.delta1,
            d2: m.delta2,
            d3: m.delta3,
            n_valid: m.valid_pixel_count,
        }
    }
}

pub fn write_rows<W: std::io::Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
