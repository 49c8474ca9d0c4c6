//! Browser demo: generate a synthetic scene, rescale it from sparse samples
//! with any method, and render the layers as RGBA images.

use depthscale::synth::{DistortionFamily, LayoutFamily};
use depthscale::{evaluate, generate_scene, rescale, DepthGrid, DepthRange, Method, PipelineConfig, RandomSceneParams, Scene, SceneSpec};
use serde_json::json;
use wasm_bindgen::prelude::*;

pub const HEIGHT: usize = 120;
pub const WIDTH: usize = 160;

/// Demo state without any JS types, so it can be tested natively.
pub struct Session {
    scene: Scene,
    pred: Option<DepthGrid>,
    samples: Vec<(usize, usize)>,
}

fn family_from(name: &str) -> Result<DistortionFamily, String> {
    match name {
        "affine" => Ok(DistortionFamily::Affine),
        "planar" => Ok(DistortionFamily::Planar),
        "nonlinear" => Ok(DistortionFamily::Nonlinear),
        _ => Err(format!("unknown distortion family {name:?}")),
    }
}

impl Session {
    pub fn generate(seed: u64, family: &str, noise_sigma: f64) -> Result<Self, String> {
        let params = RandomSceneParams {
            height: HEIGHT,
            width: WIDTH,
            regions: (4, 12),
            layout: LayoutFamily::Mixed,
            family: family_from(family)?,
            noise_sigma,
            ..RandomSceneParams::default()
        };
        let spec = SceneSpec::random(&params, seed).map_err(|e| e.to_string())?;
        let scene = generate_scene(&spec).map_err(|e| e.to_string())?;
        Ok(Self { scene, pred: None, samples: Vec::new() })
    }

    pub fn region_count(&self) -> usize {
        self.scene.mask.label_count()
    }

    /// Runs one method and returns a JSON summary with metrics.
    pub fn rescale(&mut self, method: &str, n_samples: usize, seed: u64) -> Result<String, String> {
        let method: Method = method.parse().map_err(|e: depthscale::Error| e.to_string())?;
        let samples = self.scene.sample_uniform(n_samples, seed).map_err(|e| e.to_string())?;
        let out = rescale(&self.scene.rel, &self.scene.mask, &samples, &PipelineConfig::new(method))
            .map_err(|e| e.to_string())?;
        let m = evaluate(&out.depth, &self.scene.gt, DepthRange::NYU).map_err(|e| e.to_string())?;
        let expanded = out.reports.iter().filter(|r| r.hop > 0).count();
        let fallbacks = out.reports.iter().filter(|r| r.is_global_fallback()).count();
        self.samples = samples.points().iter().map(|s| (s.row, s.col)).collect();
        self.pred = Some(out.depth);
        Ok(json!({
            "method": method.name(),
            "samples": samples.len(),
            "regions": out.reports.len(),
            "expanded": expanded,
            "fallbacks": fallbacks,
            "metrics": m,
        })
        .to_string())
    }

    /// RGBA pixels for `gt`, `rel`, `pred`, `error` or `mask`.
    pub fn render(&self, layer: &str) -> Result<Vec<u8>, String> {
        let (lo, hi) = self.scene.gt.valid_values().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let mut rgba = match layer {
            "gt" => colorize(&self.scene.gt, lo, hi),
            "rel" => {
                let (rlo, rhi) =
                    self.scene.rel.valid_values().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
                colorize(&self.scene.rel, rlo, rhi)
            }
            "pred" => colorize(self.pred.as_ref().ok_or("run a method first")?, lo, hi),
            "error" => {
                let pred = self.pred.as_ref().ok_or("run a method first")?;
                let rel_err: Vec<f64> = pred
                    .values()
                    .iter()
                    .zip(self.scene.gt.values())
                    .map(|(p, g)| (p - g).abs() / g)
                    .collect();
                let grid = DepthGrid::new(HEIGHT, WIDTH, rel_err, pred.valid_mask().to_vec()).map_err(|e| e.to_string())?;
                colorize(&grid, 0.0, 0.1)
            }
            "mask" => self.scene.mask.labels().iter().flat_map(|&l| label_color(l)).collect(),
            _ => return Err(format!("unknown layer {layer:?}")),
        };
        if layer != "mask" {
            for &(r, c) in &self.samples {
                let i = (r * WIDTH + c) * 4;
                rgba[i..i + 4].copy_from_slice(&[255, 255, 255, 255]);
            }
        }
        Ok(rgba)
    }
}

const STOPS: [[f64; 3]; 5] =
    [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];

fn ramp(t: f64) -> [u8; 4] {
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - i as f64;
    let c = |k: usize| (STOPS[i][k] + (STOPS[i + 1][k] - STOPS[i][k]) * f).round() as u8;
    [c(0), c(1), c(2), 255]
}

fn colorize(grid: &DepthGrid, lo: f64, hi: f64) -> Vec<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    grid.values()
        .iter()
        .zip(grid.valid_mask())
        .flat_map(|(&v, &ok)| if ok { ramp((v - lo) / span) } else { [0, 0, 0, 255] })
        .collect()
}

fn label_color(label: u32) -> [u8; 4] {
    let h = label.wrapping_mul(2_654_435_761);
    [(h >> 24) as u8 | 64, (h >> 16) as u8 | 64, (h >> 8) as u8 | 64, 255]
}

#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    /// `family` is `affine`, `planar` or `nonlinear`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, family: &str, noise_sigma: f64) -> Result<Demo, JsError> {
        Session::generate(u64::from(seed), family, noise_sigma).map(|inner| Demo { inner }).map_err(|e| JsError::new(&e))
    }

    pub fn width(&self) -> usize {
        WIDTH
    }

    pub fn height(&self) -> usize {
        HEIGHT
    }

    #[wasm_bindgen(js_name = regionCount)]
    pub fn region_count(&self) -> usize {
        self.inner.region_count()
    }

    pub fn rescale(&mut self, method: &str, n_samples: usize, seed: u32) -> Result<String, JsError> {
        self.inner.rescale(method, n_samples, u64::from(seed)).map_err(|e| JsError::new(&e))
    }

    pub fn render(&self, layer: &str) -> Result<Vec<u8>, JsError> {
        self.inner.render(layer).map_err(|e| JsError::new(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_scene_recovered_by_slf() {
        let mut s = Session::generate(4, "affine", 0.0).unwrap();
        let summary: serde_json::Value = serde_json::from_str(&s.rescale("slf", 400, 1).unwrap()).unwrap();
        assert!(summary["metrics"]["abs_rel"].as_f64().unwrap() < 1e-6, "{summary}");
        assert_eq!(summary["samples"], 400);
    }

    #[test]
    fn layers_have_full_size() {
        let mut s = Session::generate(1, "planar", 0.01).unwrap();
        assert!(s.render("pred").is_err());
        s.rescale("ssf", 300, 2).unwrap();
        for layer in ["gt", "rel", "pred", "error", "mask"] {
            assert_eq!(s.render(layer).unwrap().len(), HEIGHT * WIDTH * 4, "{layer}");
        }
        assert!(s.render("depth").is_err());
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(Session::generate(0, "cubic", 0.0).is_err());
        let mut s = Session::generate(0, "affine", 0.0).unwrap();
        assert!(s.rescale("best", 10, 0).is_err());
        assert!(s.rescale("slf", HEIGHT * WIDTH + 1, 0).is_err());
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp(0.0), [68, 1, 84, 255]);
        assert_eq!(ramp(1.0), [253, 231, 37, 255]);
        assert_eq!(ramp(-3.0), ramp(0.0));
    }
}
