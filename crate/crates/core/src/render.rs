//! Ray-marched volume rendering over pixel tiles.
//!
//! Each ray takes `samples` points on `[t_near, t_far]`, composites
//! `w_i = T_i * alpha_i` with `alpha_i = 1 - exp(-sigma_i * delta_i)` and
//! `T_i = prod_{j<i} (1 - alpha_j)`, and adds the residual transmittance
//! times the background colour. Pixels are independent, so the tiled
//! parallel renderer is bit-identical to a serial one.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::camera::{Camera, Ray};
use crate::field::Field;
use crate::mlp::FEATURE_DIM;
use crate::raster::Raster;
use crate::{Error, Result, SamplePoint};

/// Channels in the feature image: RGB followed by the decoder features.
pub const FEATURE_CHANNELS: usize = 3 + FEATURE_DIM;

pub const TILE_SIZE: usize = 16;

const DEPTH_EPS: f64 = 1e-8;

/// Deforms sample positions before the field is evaluated.
pub trait PointWarp: Send + Sync + fmt::Debug {
    fn warp(&self, p: &SamplePoint) -> SamplePoint;
}

#[derive(Clone, Debug)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    pub samples: usize,
    pub t_near: f64,
    pub t_far: f64,
    pub background: [f64; 3],
    /// `Some(seed)` jitters each sample inside its bin; `None` uses bin
    /// midpoints.
    pub jitter: Option<u64>,
    pub warp: Option<Arc<dyn PointWarp>>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 128,
            height: 128,
            samples: 64,
            t_near: 0.1,
            t_far: 2.6,
            background: [1.0; 3],
            jitter: None,
            warp: None,
        }
    }
}

impl RenderConfig {
    pub fn with_size(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_range(mut self, t_near: f64, t_far: f64) -> Self {
        self.t_near = t_near;
        self.t_far = t_far;
        self
    }

    pub fn with_background(mut self, background: [f64; 3]) -> Self {
        self.background = background;
        self
    }

    pub fn with_warp(mut self, warp: Arc<dyn PointWarp>) -> Self {
        self.warp = Some(warp);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Parameter("image size must be positive".into()));
        }
        if self.samples < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 samples per ray, got {}",
                self.samples
            )));
        }
        if !(self.t_near.is_finite() && self.t_far.is_finite() && self.t_near < self.t_far) {
            return Err(Error::Parameter(format!(
                "need finite t_near < t_far, got [{}, {}]",
                self.t_near, self.t_far
            )));
        }
        if self.background.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("background colour must be finite".into()));
        }
        Ok(())
    }

    /// Sample distances and their interval lengths for one ray.
    pub fn sample_positions(&self, pixel_index: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.samples;
        let width = (self.t_far - self.t_near) / n as f64;
        match self.jitter {
            None => {
                let t = (0..n)
                    .map(|i| self.t_near + (i as f64 + 0.5) * width)
                    .collect();
                (t, vec![width; n])
            }
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(pixel_index as u64);
                let t: Vec<f64> = (0..n)
                    .map(|i| self.t_near + (i as f64 + rng.gen::<f64>()) * width)
                    .collect();
                let delta = (0..n)
                    .map(|i| t.get(i + 1).copied().unwrap_or(self.t_far) - t[i])
                    .collect();
                (t, delta)
            }
        }
    }
}

/// Composited result for one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RayResult {
    pub rgb: [f64; 3],
    pub feature: [f64; FEATURE_DIM],
    /// Expected termination distance; meaningless when `alpha` is ~0.
    pub depth: f64,
    pub alpha: f64,
}

/// Compositing weights `T_i * alpha_i` for per-sample densities and interval
/// lengths, plus the residual transmittance.
pub fn compositing_weights(sigmas: &[f64], deltas: &[f64]) -> (Vec<f64>, f64) {
    let mut transmittance = 1.0;
    let weights = sigmas
        .iter()
        .zip(deltas)
        .map(|(&s, &d)| {
            let alpha = -(-s * d).exp_m1();
            let w = transmittance * alpha;
            transmittance *= 1.0 - alpha;
            w
        })
        .collect();
    (weights, transmittance)
}

/// Integrates one ray. `pixel` is used for error messages and jitter streams.
pub fn composite_ray<F: Field + ?Sized>(
    field: &F,
    ray: &Ray,
    cfg: &RenderConfig,
    pixel: (usize, usize),
) -> Result<RayResult> {
    let (ts, deltas) = cfg.sample_positions(pixel.1 * cfg.width + pixel.0);
    let mut transmittance = 1.0;
    let mut rgb = [0.0; 3];
    let mut feature = [0.0; FEATURE_DIM];
    let mut depth = 0.0;
    let mut acc = 0.0;
    for (&t, &delta) in ts.iter().zip(&deltas) {
        let p = ray.at(t);
        let p = match &cfg.warp {
            Some(w) => w.warp(&p),
            None => p,
        };
        let s = field.evaluate(&p);
        if !s.is_finite() || s.sigma < 0.0 {
            return Err(Error::Numerical(format!(
                "field returned invalid sample (sigma {}) at pixel ({}, {}), t = {t}",
                s.sigma, pixel.0, pixel.1
            )));
        }
        let alpha = -(-s.sigma * delta).exp_m1();
        let w = transmittance * alpha;
        for k in 0..3 {
            rgb[k] += w * s.color[k];
        }
        for (f, &v) in feature.iter_mut().zip(&s.feature) {
            *f += w * v;
        }
        depth += w * t;
        acc += w;
        transmittance *= 1.0 - alpha;
    }
    for k in 0..3 {
        rgb[k] += transmittance * cfg.background[k];
    }
    Ok(RayResult {
        rgb,
        feature,
        depth: depth / acc.max(DEPTH_EPS),
        alpha: acc.clamp(0.0, 1.0),
    })
}

/// Rendered rasters. Channel 0..3 of `features` equal `rgb` exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    pub rgb: Raster,
    pub features: Raster,
    pub depth: Raster,
    pub alpha: Raster,
}

impl RenderedImage {
    /// Depth with pixels of `alpha < 0.5` replaced by NaN.
    pub fn valid_depth(&self) -> Raster {
        let mut d = self.depth.clone();
        for (v, &a) in d.data_mut().iter_mut().zip(self.alpha.data()) {
            if a < 0.5 {
                *v = f32::NAN;
            }
        }
        d
    }
}

fn tiles(width: usize, height: usize) -> Vec<(usize, usize)> {
    (0..height)
        .step_by(TILE_SIZE)
        .flat_map(|y| (0..width).step_by(TILE_SIZE).map(move |x| (x, y)))
        .collect()
}

/// Renders `field` from `cam`. Uses the current rayon pool; see
/// [`crate::with_threads`].
pub fn render<F: Field + ?Sized>(
    field: &F,
    cam: &Camera,
    cfg: &RenderConfig,
) -> Result<RenderedImage> {
    cfg.validate()?;
    let (w, h) = (cfg.width, cfg.height);
    let tile_results = tiles(w, h)
        .into_par_iter()
        .map(|(x0, y0)| {
            let mut out = Vec::with_capacity(TILE_SIZE * TILE_SIZE);
            for y in y0..(y0 + TILE_SIZE).min(h) {
                for x in x0..(x0 + TILE_SIZE).min(w) {
                    out.push((
                        (x, y),
                        composite_ray(field, &cam.ray(x, y, w), cfg, (x, y))?,
                    ));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut img = RenderedImage {
        rgb: Raster::new(w, h, 3),
        features: Raster::new(w, h, FEATURE_CHANNELS),
        depth: Raster::new(w, h, 1),
        alpha: Raster::new(w, h, 1),
    };
    for ((x, y), r) in tile_results.into_iter().flatten() {
        let rgb = r.rgb.map(|v| v as f32);
        img.rgb.pixel_mut(x, y).copy_from_slice(&rgb);
        let feat = img.features.pixel_mut(x, y);
        feat[..3].copy_from_slice(&rgb);
        for (dst, &src) in feat[3..].iter_mut().zip(&r.feature) {
            *dst = src as f32;
        }
        img.depth.set(x, y, 0, r.depth as f32);
        img.alpha.set(x, y, 0, r.alpha as f32);
    }
    Ok(img)
}

/// Depth channel of [`render`]; pixels with `alpha < 0.5` are NaN.
pub fn render_depth<F: Field + ?Sized>(
    field: &F,
    cam: &Camera,
    cfg: &RenderConfig,
) -> Result<Raster> {
    Ok(render(field, cam, cfg)?.valid_depth())
}
