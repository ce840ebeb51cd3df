//! Visibility triplanes and occlusion masks.
//!
//! Ground-truth visibility is computed geometrically: render a depth map,
//! lift the valid pixels to a point cloud, and mark every triplane texel that
//! some point projects onto.

use std::path::Path;

use rayon::prelude::*;

use crate::camera::Camera;
use crate::field::Field;
use crate::raster::{self, Raster};
use crate::render::{self, RenderConfig};
use crate::triplane::{world_to_texel, Plane};
use crate::{Error, Result, SamplePoint};

pub const DEFAULT_VIS_RESOLUTION: usize = 256;
pub const DEFAULT_DILATION: usize = 1;

/// Three single-channel `R x R` rasters, one per triplane plane, stored
/// row-major with the same axis convention as [`crate::triplane::Triplane`].
#[derive(Clone, Debug, PartialEq)]
pub struct MaskTriplane {
    resolution: usize,
    data: Vec<f32>,
}

impl MaskTriplane {
    pub fn filled(resolution: usize, value: f32) -> Self {
        MaskTriplane {
            resolution,
            data: vec![value; 3 * resolution * resolution],
        }
    }

    pub fn zeros(resolution: usize) -> Self {
        Self::filled(resolution, 0.0)
    }

    pub fn from_fn(resolution: usize, mut f: impl FnMut(Plane, usize, usize) -> f32) -> Self {
        let mut m = Self::zeros(resolution);
        for plane in Plane::ALL {
            for v in 0..resolution {
                for u in 0..resolution {
                    m.set(plane, v, u, f(plane, v, u));
                }
            }
        }
        m
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, plane: Plane, v: usize, u: usize) -> f32 {
        self.data[(plane as usize * self.resolution + v) * self.resolution + u]
    }

    #[inline]
    pub fn set(&mut self, plane: Plane, v: usize, u: usize, value: f32) {
        self.data[(plane as usize * self.resolution + v) * self.resolution + u] = value;
    }

    pub fn plane(&self, plane: Plane) -> &[f32] {
        let n = self.resolution * self.resolution;
        &self.data[plane as usize * n..(plane as usize + 1) * n]
    }

    pub fn ensure_same_shape(&self, other: &MaskTriplane) -> Result<()> {
        if self.resolution != other.resolution {
            return Err(Error::Structural(format!(
                "mask resolutions differ: {} vs {}",
                self.resolution, other.resolution
            )));
        }
        Ok(())
    }

    /// Nearest-texel resampling to another resolution (align-corners).
    pub fn resampled(&self, resolution: usize) -> MaskTriplane {
        if resolution == self.resolution {
            return self.clone();
        }
        let scale = (self.resolution - 1) as f64 / (resolution - 1) as f64;
        let src = |i: usize| ((i as f64 * scale).round() as usize).min(self.resolution - 1);
        MaskTriplane::from_fn(resolution, |p, v, u| self.get(p, src(v), src(u)))
    }

    /// Stores the masks as one `IMGF` raster with a channel per plane.
    pub fn to_raster(&self) -> Raster {
        let r = self.resolution;
        Raster::from_fn(r, r, 3, |u, v, px| {
            for plane in Plane::ALL {
                px[plane as usize] = self.get(plane, v, u);
            }
        })
    }

    pub fn from_raster(raster: &Raster) -> Result<Self> {
        if raster.channels() != 3 || raster.width() != raster.height() || raster.width() < 2 {
            return Err(Error::Structural(format!(
                "mask triplane raster must be square with 3 channels, got {}x{}x{}",
                raster.width(),
                raster.height(),
                raster.channels()
            )));
        }
        Ok(MaskTriplane::from_fn(raster.width(), |p, v, u| {
            raster.get(u, v, p as usize)
        }))
    }
}

/// Strictly binary per-plane visibility.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityTriplane(MaskTriplane);

impl VisibilityTriplane {
    pub fn new(masks: MaskTriplane) -> Result<Self> {
        if masks.data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Parameter("visibility values must be 0 or 1".into()));
        }
        Ok(VisibilityTriplane(masks))
    }

    pub fn zeros(resolution: usize) -> Self {
        VisibilityTriplane(MaskTriplane::zeros(resolution))
    }

    pub fn ones(resolution: usize) -> Self {
        VisibilityTriplane(MaskTriplane::filled(resolution, 1.0))
    }

    pub fn masks(&self) -> &MaskTriplane {
        &self.0
    }

    pub fn into_masks(self) -> MaskTriplane {
        self.0
    }

    pub fn resolution(&self) -> usize {
        self.0.resolution
    }

    pub fn get(&self, plane: Plane, v: usize, u: usize) -> bool {
        self.0.get(plane, v, u) == 1.0
    }

    pub fn count(&self, plane: Plane) -> usize {
        self.0.plane(plane).iter().filter(|&&v| v == 1.0).count()
    }

    /// Texel-wise OR.
    pub fn union(&self, other: &VisibilityTriplane) -> Result<VisibilityTriplane> {
        self.0.ensure_same_shape(&other.0)?;
        let data = self
            .0
            .data
            .iter()
            .zip(&other.0.data)
            .map(|(a, b)| a.max(*b))
            .collect();
        Ok(VisibilityTriplane(MaskTriplane {
            resolution: self.0.resolution,
            data,
        }))
    }
}

/// Per-texel weights in `[0, 1]` marking regions the input view misses.
#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionMask(MaskTriplane);

impl OcclusionMask {
    pub fn new(masks: MaskTriplane) -> Result<Self> {
        if masks.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Parameter(
                "occlusion values must lie in [0, 1]".into(),
            ));
        }
        Ok(OcclusionMask(masks))
    }

    pub fn zeros(resolution: usize) -> Self {
        OcclusionMask(MaskTriplane::zeros(resolution))
    }

    pub fn masks(&self) -> &MaskTriplane {
        &self.0
    }

    pub fn resolution(&self) -> usize {
        self.0.resolution
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VisibilityConfig {
    pub resolution: usize,
    /// Square dilation radius in texels applied after rasterisation.
    pub dilation: usize,
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        VisibilityConfig {
            resolution: DEFAULT_VIS_RESOLUTION,
            dilation: DEFAULT_DILATION,
        }
    }
}

/// Lifts every valid depth pixel to `origin + depth * direction`. Invalid
/// pixels (NaN or negative) are skipped.
pub fn depth_to_points(depth: &Raster, cam: &Camera) -> Result<Vec<SamplePoint>> {
    if depth.channels() != 1 {
        return Err(Error::Structural(format!(
            "depth raster must have one channel, got {}",
            depth.channels()
        )));
    }
    let w = depth.width();
    let mut points = Vec::new();
    for v in 0..depth.height() {
        for u in 0..w {
            let d = depth.get(u, v, 0);
            if d.is_finite() && d >= 0.0 {
                points.push(cam.ray(u, v, w).at(d as f64));
            }
        }
    }
    Ok(points)
}

fn texel_index(c: f64, resolution: usize) -> usize {
    world_to_texel(c, resolution).round() as usize
}

fn dilate(mask: &[bool], resolution: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let r = resolution;
    // separable square dilation: rows then columns
    let mut rows = vec![false; r * r];
    for v in 0..r {
        for u in 0..r {
            let lo = u.saturating_sub(radius);
            let hi = (u + radius).min(r - 1);
            rows[v * r + u] = mask[v * r + lo..=v * r + hi].iter().any(|&b| b);
        }
    }
    let mut out = vec![false; r * r];
    for v in 0..r {
        let lo = v.saturating_sub(radius);
        let hi = (v + radius).min(r - 1);
        for u in 0..r {
            out[v * r + u] = (lo..=hi).any(|vv| rows[vv * r + u]);
        }
    }
    out
}

/// Orthographic nearest-texel splatting of `points` onto the three planes,
/// followed by a square dilation of `dilation` texels. Points outside the
/// cube clamp to the border.
pub fn rasterize_visibility(
    points: &[SamplePoint],
    resolution: usize,
    dilation: usize,
) -> Result<VisibilityTriplane> {
    if resolution < 2 {
        return Err(Error::Parameter(
            "visibility resolution must be at least 2".into(),
        ));
    }
    let n = resolution * resolution;
    let splat = |mut acc: Vec<bool>, p: &SamplePoint| {
        for plane in Plane::ALL {
            let (a, b) = plane.project(p);
            let (u, v) = (texel_index(a, resolution), texel_index(b, resolution));
            acc[plane as usize * n + v * resolution + u] = true;
        }
        acc
    };
    // OR is commutative and idempotent, so chunking cannot change the result.
    let hits = points
        .par_chunks(4096)
        .map(|chunk| chunk.iter().fold(vec![false; 3 * n], splat))
        .reduce(
            || vec![false; 3 * n],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x |= y);
                a
            },
        );
    let mut data = Vec::with_capacity(3 * n);
    for plane in hits.chunks_exact(n) {
        data.extend(
            dilate(plane, resolution, dilation)
                .into_iter()
                .map(|b| if b { 1.0 } else { 0.0 }),
        );
    }
    Ok(VisibilityTriplane(MaskTriplane { resolution, data }))
}

/// Depth render, back-projection and rasterisation in one call.
pub fn visibility_for<F: Field + ?Sized>(
    field: &F,
    cam: &Camera,
    render_cfg: &RenderConfig,
    vis_cfg: &VisibilityConfig,
) -> Result<VisibilityTriplane> {
    let depth = render::render_depth(field, cam, render_cfg)?;
    let points = depth_to_points(&depth, cam)?;
    rasterize_visibility(&points, vis_cfg.resolution, vis_cfg.dilation)
}

/// `clamp(frontal - input, 0, 1)` per texel.
pub fn occlusion_mask(
    vis_frontal: &VisibilityTriplane,
    vis_input: &VisibilityTriplane,
) -> Result<OcclusionMask> {
    vis_frontal.0.ensure_same_shape(&vis_input.0)?;
    let data = vis_frontal
        .0
        .data
        .iter()
        .zip(&vis_input.0.data)
        .map(|(f, i)| (f - i).clamp(0.0, 1.0))
        .collect();
    Ok(OcclusionMask(MaskTriplane {
        resolution: vis_frontal.resolution(),
        data,
    }))
}

pub fn write_masks(masks: &MaskTriplane, path: &Path) -> Result<()> {
    raster::write_raster(&masks.to_raster(), path)
}

pub fn read_masks(path: &Path) -> Result<MaskTriplane> {
    MaskTriplane::from_raster(&raster::read_raster(path)?)
}

pub fn read_visibility(path: &Path) -> Result<VisibilityTriplane> {
    VisibilityTriplane::new(read_masks(path)?)
}
