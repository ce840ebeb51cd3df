//! Triplane undistortion warping, visibility-gated fusion and the training
//! losses.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::{self, ByteReader, ByteWriter};
use crate::triplane::{Plane, Triplane};
use crate::visibility::{MaskTriplane, OcclusionMask, VisibilityTriplane};
use crate::{Error, Result};

pub const FLOW_MAGIC: &[u8; 4] = b"FLOW";

/// Per-plane displacement field in texel units. Stored plane-major, then
/// component (`du`, `dv`), then row-major `R x R`, which is also the file
/// layout.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    resolution: usize,
    data: Vec<f32>,
}

impl FlowField {
    pub fn zeros(resolution: usize) -> Self {
        FlowField {
            resolution,
            data: vec![0.0; 3 * 2 * resolution * resolution],
        }
    }

    pub fn constant(resolution: usize, du: f32, dv: f32) -> Result<Self> {
        Self::from_fn(resolution, |_, _, _| (du, dv))
    }

    /// Builds a flow from `f(plane, row, column) -> (du, dv)`.
    pub fn from_fn(
        resolution: usize,
        mut f: impl FnMut(Plane, usize, usize) -> (f32, f32),
    ) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::Parameter(
                "flow resolution must be at least 2".into(),
            ));
        }
        let mut flow = Self::zeros(resolution);
        let n = resolution * resolution;
        for plane in Plane::ALL {
            for v in 0..resolution {
                for u in 0..resolution {
                    let (du, dv) = f(plane, v, u);
                    if !(du.is_finite() && dv.is_finite()) {
                        return Err(Error::Numerical(format!(
                            "non-finite flow on plane {} at ({u}, {v})",
                            plane.name()
                        )));
                    }
                    let base = plane as usize * 2 * n + v * resolution + u;
                    flow.data[base] = du;
                    flow.data[base + n] = dv;
                }
            }
        }
        Ok(flow)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// `(du, dv)` at texel `(u, v)` of `plane`.
    #[inline]
    pub fn get(&self, plane: Plane, v: usize, u: usize) -> (f32, f32) {
        let n = self.resolution * self.resolution;
        let base = plane as usize * 2 * n + v * self.resolution + u;
        (self.data[base], self.data[base + n])
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(FLOW_MAGIC, self.data.len() * 4);
        w.u32(self.resolution as u32);
        w.f32s(self.data.iter().copied());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, FLOW_MAGIC)?;
        let resolution = io::dim(r.offset(), r.u32()?, "resolution")?;
        if resolution < 2 {
            return Err(Error::format(8, "resolution must be at least 2"));
        }
        let n = resolution
            .checked_mul(resolution)
            .and_then(|v| v.checked_mul(6))
            .ok_or_else(|| Error::format(r.offset(), "flow size overflows"))?;
        let start = r.offset();
        let data = r.f32s(n)?;
        r.finish()?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(start + 4 * i as u64, "non-finite flow value"));
        }
        Ok(FlowField { resolution, data })
    }
}

pub fn write_flow(flow: &FlowField, path: &Path) -> Result<()> {
    io::write_atomic(path, &flow.to_bytes())
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    FlowField::from_bytes(&io::read_bytes(path)?)
}

/// Backward warp: `out[v, u] = bilinear(in, (u + du, v + dv))`, clamped at
/// the border. Each plane uses only its own flow.
pub fn warp_triplane(tp: &Triplane, flow: &FlowField) -> Result<Triplane> {
    let r = tp.resolution();
    if flow.resolution() != r {
        return Err(Error::Structural(format!(
            "flow resolution {} does not match triplane resolution {r}",
            flow.resolution()
        )));
    }
    let c = tp.channels();
    let mut out = tp.clone();
    out.raw_mut()
        .par_chunks_mut(r * c)
        .enumerate()
        .for_each(|(row, dst)| {
            let plane = Plane::ALL[row / r];
            let v = row % r;
            let mut acc = vec![0.0f64; c];
            for (u, texel) in dst.chunks_exact_mut(c).enumerate() {
                let (du, dv) = flow.get(plane, v, u);
                acc.fill(0.0);
                tp.accumulate_bilinear(
                    plane,
                    u as f64 + du as f64,
                    v as f64 + dv as f64,
                    1.0,
                    &mut acc,
                );
                for (d, &a) in texel.iter_mut().zip(&acc) {
                    *d = a as f32;
                }
            }
        });
    Ok(out)
}

/// Mean over a `(2 radius + 1)^2` window, truncated at the plane border.
pub fn box_blur(masks: &MaskTriplane, radius: usize) -> MaskTriplane {
    if radius == 0 {
        return masks.clone();
    }
    let r = masks.resolution();
    MaskTriplane::from_fn(r, |plane, v, u| {
        let (v0, v1) = (v.saturating_sub(radius), (v + radius).min(r - 1));
        let (u0, u1) = (u.saturating_sub(radius), (u + radius).min(r - 1));
        let mut sum = 0.0f64;
        for vv in v0..=v1 {
            for uu in u0..=u1 {
                sum += masks.get(plane, vv, uu) as f64;
            }
        }
        (sum / ((v1 - v0 + 1) * (u1 - u0 + 1)) as f64) as f32
    })
}

/// Combines an undistorted triplane with the personal prior.
pub trait FusionRule: Send + Sync {
    fn fuse(
        &self,
        undist: &Triplane,
        prior: &Triplane,
        vis_undist: &VisibilityTriplane,
        vis_prior: &VisibilityTriplane,
    ) -> Result<Triplane>;
}

/// Keeps what the input saw and fills the rest from the prior wherever the
/// prior saw it:
///
/// `w = blur(vis_undist)`,
/// `fused = w * undist + (1 - w) * (vis_prior * prior + (1 - vis_prior) * undist)`.
///
/// Planes are fused independently of each other.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VisibilityBlend {
    pub radius: usize,
}

impl FusionRule for VisibilityBlend {
    fn fuse(
        &self,
        undist: &Triplane,
        prior: &Triplane,
        vis_undist: &VisibilityTriplane,
        vis_prior: &VisibilityTriplane,
    ) -> Result<Triplane> {
        undist.ensure_same_shape(prior)?;
        let r = undist.resolution();
        let weight = box_blur(&vis_undist.masks().resampled(r), self.radius);
        let vis_prior = vis_prior.masks().resampled(r);
        let mut out = undist.clone();
        for plane in Plane::ALL {
            for v in 0..r {
                for u in 0..r {
                    let w = weight.get(plane, v, u) as f64;
                    let vp = vis_prior.get(plane, v, u) as f64;
                    let p = prior.texel(plane, v, u);
                    for (o, &p) in out.texel_mut(plane, v, u).iter_mut().zip(p) {
                        let t = *o as f64;
                        let fill = vp * p as f64 + (1.0 - vp) * t;
                        *o = (w * t + (1.0 - w) * fill) as f32;
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn fuse_triplanes(
    t_undist: &Triplane,
    t_prior: &Triplane,
    vis_undist: &VisibilityTriplane,
    vis_prior: &VisibilityTriplane,
    radius: usize,
) -> Result<Triplane> {
    VisibilityBlend { radius }.fuse(t_undist, t_prior, vis_undist, vis_prior)
}

fn mean_abs(a: &[f32], b: &[f32]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    sum / a.len() as f64
}

/// Mean absolute difference over all `3 * C * R^2` values.
pub fn loss_undist(t_undist: &Triplane, t_gt: &Triplane) -> Result<f64> {
    t_undist.ensure_same_shape(t_gt)?;
    Ok(mean_abs(t_undist.raw(), t_gt.raw()))
}

/// Sum of the raw-view and prior-view mean absolute visibility errors.
pub fn loss_vis(
    vis_raw: &MaskTriplane,
    vis_raw_gt: &MaskTriplane,
    vis_prior: &MaskTriplane,
    vis_prior_gt: &MaskTriplane,
) -> Result<f64> {
    vis_raw.ensure_same_shape(vis_raw_gt)?;
    vis_prior.ensure_same_shape(vis_prior_gt)?;
    Ok(mean_abs(vis_raw.data(), vis_raw_gt.data())
        + mean_abs(vis_prior.data(), vis_prior_gt.data()))
}

/// `mean(|fused - gt| * (1 + vis_gt + occ))`, masks broadcast over channels.
pub fn loss_fusion(
    t_fused: &Triplane,
    t_gt: &Triplane,
    vis_gt: &MaskTriplane,
    occ: &OcclusionMask,
) -> Result<f64> {
    t_fused.ensure_same_shape(t_gt)?;
    let r = t_fused.resolution();
    for (name, res) in [
        ("visibility", vis_gt.resolution()),
        ("occlusion", occ.resolution()),
    ] {
        if res != r {
            return Err(Error::Structural(format!(
                "{name} mask resolution {res} does not match triplane resolution {r}"
            )));
        }
    }
    let mut sum = 0.0f64;
    for plane in Plane::ALL {
        for v in 0..r {
            for u in 0..r {
                let weight =
                    1.0 + vis_gt.get(plane, v, u) as f64 + occ.masks().get(plane, v, u) as f64;
                let a = t_fused.texel(plane, v, u);
                let b = t_gt.texel(plane, v, u);
                let diff: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(&x, &y)| (x as f64 - y as f64).abs())
                    .sum();
                sum += diff * weight;
            }
        }
    }
    Ok(sum / (3 * t_fused.channels() * r * r) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub w_undist: f64,
    pub w_vis: f64,
    pub w_fusion: f64,
    pub w_render: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_undist: 1.0,
            w_vis: 1.0,
            w_fusion: 1.0,
            w_render: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_undist, self.w_vis, self.w_fusion, self.w_render];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Parameter(format!(
                "loss weights must be finite and non-negative, got {all:?}"
            )));
        }
        Ok(())
    }
}

/// Individual loss values. `render` comes from an image metric between the
/// rendered and ground-truth novel views.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub undist: f64,
    pub vis: f64,
    pub fusion: f64,
    pub render: f64,
}

pub fn loss_total(components: &LossComponents, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    let c = components;
    if [c.undist, c.vis, c.fusion, c.render]
        .iter()
        .any(|v| !v.is_finite())
    {
        return Err(Error::Numerical(format!(
            "non-finite loss component in {c:?}"
        )));
    }
    Ok(w.w_undist * c.undist + w.w_vis * c.vis + w.w_fusion * c.fusion + w.w_render * c.render)
}
