//! Triplane storage, sampling, procedural generation and the `TRPL` format.
//!
//! A triplane holds three axis-aligned feature planes (`xy`, `xz`, `yz`) that
//! together cover the cube `[-0.5, 0.5]^3`. A world point is projected onto
//! each plane, bilinearly interpolated there, and the three feature vectors
//! are averaged.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::io::{self, ByteReader, ByteWriter};
use crate::{Error, Result, SamplePoint};

pub const TRIPLANE_MAGIC: &[u8; 4] = b"TRPL";
pub const DEFAULT_CHANNELS: usize = 32;
pub const DEFAULT_RESOLUTION: usize = 256;

/// Header bytes in front of the `TRPL` payload: magic, version, C, R.
pub const TRIPLANE_HEADER_LEN: usize = 16;

/// One of the three feature planes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Plane {
    Xy = 0,
    Xz = 1,
    Yz = 2,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Xz, Plane::Yz];

    /// World axes `(column axis, row axis)` that index this plane.
    pub fn axes(self) -> (usize, usize) {
        match self {
            Plane::Xy => (0, 1),
            Plane::Xz => (0, 2),
            Plane::Yz => (1, 2),
        }
    }

    /// Projects a world point to `(column coordinate, row coordinate)`.
    #[inline]
    pub fn project(self, p: &SamplePoint) -> (f64, f64) {
        let (a, b) = self.axes();
        (p[a], p[b])
    }

    pub fn name(self) -> &'static str {
        match self {
            Plane::Xy => "xy",
            Plane::Xz => "xz",
            Plane::Yz => "yz",
        }
    }
}

/// Maps a world coordinate in `[-0.5, 0.5]` to a continuous texel coordinate
/// on a grid of `resolution` texels (align-corners: both ends of the range
/// land exactly on the outer texel centres). Out-of-range input clamps.
#[inline]
pub fn world_to_texel(c: f64, resolution: usize) -> f64 {
    let max = (resolution - 1) as f64;
    ((c + 0.5) * max).clamp(0.0, max)
}

/// Inverse of [`world_to_texel`] for in-range texel coordinates.
#[inline]
pub fn texel_to_world(u: f64, resolution: usize) -> f64 {
    u / (resolution - 1) as f64 - 0.5
}

/// Bilinear lookup position: base index and fractional weight along one axis.
#[inline]
pub(crate) fn bilinear_axis(u: f64, resolution: usize) -> (usize, f64) {
    let max = (resolution - 1) as f64;
    let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, max) };
    let i0 = (u.floor() as usize).min(resolution - 2);
    (i0, u - i0 as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triplane {
    channels: usize,
    resolution: usize,
    // plane, row, column, channel
    data: Vec<f32>,
}

impl Triplane {
    pub fn zeros(channels: usize, resolution: usize) -> Result<Self> {
        Self::constant(channels, resolution, 0.0)
    }

    pub fn constant(channels: usize, resolution: usize, value: f32) -> Result<Self> {
        check_dims(channels, resolution)?;
        if !value.is_finite() {
            return Err(Error::Numerical("triplane value must be finite".into()));
        }
        Ok(Triplane {
            channels,
            resolution,
            data: vec![value; 3 * channels * resolution * resolution],
        })
    }

    /// Builds a triplane from three planes given channel-major
    /// (`C x R x R`, row-major), the same layout as the file payload.
    pub fn from_planes(channels: usize, resolution: usize, planes: [&[f32]; 3]) -> Result<Self> {
        check_dims(channels, resolution)?;
        let plane_len = channels * resolution * resolution;
        for (p, plane) in planes.iter().enumerate() {
            if plane.len() != plane_len {
                return Err(Error::Structural(format!(
                    "plane {} has {} values, expected {channels}x{resolution}x{resolution} = {plane_len}",
                    Plane::ALL[p].name(),
                    plane.len()
                )));
            }
        }
        let mut tp = Self::zeros(channels, resolution)?;
        for (p, plane) in planes.iter().enumerate() {
            for c in 0..channels {
                for v in 0..resolution {
                    for u in 0..resolution {
                        let x = plane[(c * resolution + v) * resolution + u];
                        if !x.is_finite() {
                            return Err(Error::Numerical(format!(
                                "non-finite value in plane {} at c={c} v={v} u={u}",
                                Plane::ALL[p].name()
                            )));
                        }
                        let i = tp.index(p, v, u) + c;
                        tp.data[i] = x;
                    }
                }
            }
        }
        Ok(tp)
    }

    /// Builds a triplane by evaluating `f(plane, channel, row, column)`.
    pub fn from_fn(
        channels: usize,
        resolution: usize,
        mut f: impl FnMut(Plane, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut tp = Self::zeros(channels, resolution)?;
        for plane in Plane::ALL {
            for v in 0..resolution {
                for u in 0..resolution {
                    let base = tp.index(plane as usize, v, u);
                    for c in 0..channels {
                        let x = f(plane, c, v, u);
                        if !x.is_finite() {
                            return Err(Error::Numerical(format!(
                                "non-finite value in plane {} at c={c} v={v} u={u}",
                                plane.name()
                            )));
                        }
                        tp.data[base + c] = x;
                    }
                }
            }
        }
        Ok(tp)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    #[inline]
    fn index(&self, plane: usize, v: usize, u: usize) -> usize {
        ((plane * self.resolution + v) * self.resolution + u) * self.channels
    }

    #[inline]
    pub fn get(&self, plane: Plane, c: usize, v: usize, u: usize) -> f32 {
        self.data[self.index(plane as usize, v, u) + c]
    }

    #[inline]
    pub fn set(&mut self, plane: Plane, c: usize, v: usize, u: usize, value: f32) {
        let i = self.index(plane as usize, v, u);
        self.data[i + c] = value;
    }

    /// All channels of one texel.
    #[inline]
    pub fn texel(&self, plane: Plane, v: usize, u: usize) -> &[f32] {
        let i = self.index(plane as usize, v, u);
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn texel_mut(&mut self, plane: Plane, v: usize, u: usize) -> &mut [f32] {
        let i = self.index(plane as usize, v, u);
        &mut self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Triplane) -> bool {
        self.channels == other.channels && self.resolution == other.resolution
    }

    pub fn ensure_same_shape(&self, other: &Triplane) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Structural(format!(
                "triplane shapes differ: 3x{}x{r}x{r} vs 3x{}x{q}x{q}",
                self.channels,
                other.channels,
                r = self.resolution,
                q = other.resolution
            )));
        }
        Ok(())
    }

    /// Values in plane-major, channel-major, row-major order (the file order).
    pub fn values_channel_major(&self) -> impl Iterator<Item = f32> + '_ {
        let r = self.resolution;
        Plane::ALL.into_iter().flat_map(move |plane| {
            (0..self.channels).flat_map(move |c| {
                (0..r).flat_map(move |v| (0..r).map(move |u| self.get(plane, c, v, u)))
            })
        })
    }

    /// Raw storage (plane, row, column, channel).
    pub(crate) fn raw(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn raw_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Bilinearly interpolates one plane at continuous texel coordinates and
    /// adds `weight *` the result to `out`.
    #[inline]
    pub(crate) fn accumulate_bilinear(
        &self,
        plane: Plane,
        u: f64,
        v: f64,
        weight: f64,
        out: &mut [f64],
    ) {
        let (u0, fu) = bilinear_axis(u, self.resolution);
        let (v0, fv) = bilinear_axis(v, self.resolution);
        let w00 = weight * (1.0 - fu) * (1.0 - fv);
        let w01 = weight * fu * (1.0 - fv);
        let w10 = weight * (1.0 - fu) * fv;
        let w11 = weight * fu * fv;
        let t00 = self.texel(plane, v0, u0);
        let t01 = self.texel(plane, v0, u0 + 1);
        let t10 = self.texel(plane, v0 + 1, u0);
        let t11 = self.texel(plane, v0 + 1, u0 + 1);
        for ((((o, &a), &b), &c), &d) in out.iter_mut().zip(t00).zip(t01).zip(t10).zip(t11) {
            *o += w00 * a as f64 + w01 * b as f64 + w10 * c as f64 + w11 * d as f64;
        }
    }

    /// Mean of the three bilinear plane lookups, written into `out`
    /// (length `channels`).
    pub fn sample_into(&self, p: &SamplePoint, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.channels);
        out.fill(0.0);
        for plane in Plane::ALL {
            let (a, b) = plane.project(p);
            let u = world_to_texel(a, self.resolution);
            let v = world_to_texel(b, self.resolution);
            self.accumulate_bilinear(plane, u, v, 1.0, out);
        }
        for o in out.iter_mut() {
            *o /= 3.0;
        }
    }

    /// Mean bilinear feature at `p`. Points outside the unit cube read the
    /// border texels.
    pub fn sample(&self, p: &SamplePoint) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        self.sample_into(p, &mut out);
        out
    }

    /// Smooth pseudo-random triplane: every plane channel is a sum of four
    /// seeded sinusoids with amplitudes summing to one, so values stay in
    /// `[-1, 1]`.
    pub fn procedural(seed: u64, channels: usize, resolution: usize) -> Result<Self> {
        if channels < 4 || resolution < 8 {
            return Err(Error::Parameter(format!(
                "procedural triplane needs C >= 4 and R >= 8, got C={channels} R={resolution}"
            )));
        }
        const WAVES: usize = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // (amplitude, freq_u, freq_v, phase) per plane, channel, wave
        let mut waves = Vec::with_capacity(3 * channels * WAVES);
        for _ in 0..3 * channels {
            let raw: [f64; WAVES] = std::array::from_fn(|_| rng.gen_range(0.1..1.0));
            let total: f64 = raw.iter().sum();
            for a in raw {
                let fu = rng.gen_range(-4.0..4.0);
                let fv = rng.gen_range(-4.0..4.0);
                let phase = rng.gen_range(0.0..TAU);
                waves.push((a / total, fu, fv, phase));
            }
        }
        let max = (resolution - 1) as f64;
        Self::from_fn(channels, resolution, |plane, c, v, u| {
            let s = u as f64 / max - 0.5;
            let t = v as f64 / max - 0.5;
            let base = ((plane as usize) * channels + c) * WAVES;
            let sum: f64 = waves[base..base + WAVES]
                .iter()
                .map(|&(a, fu, fv, ph)| a * (TAU * (fu * s + fv * t) + ph).sin())
                .sum();
            sum.clamp(-1.0, 1.0) as f32
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(TRIPLANE_MAGIC, self.data.len() * 4);
        w.u32(self.channels as u32);
        w.u32(self.resolution as u32);
        w.f32s(self.values_channel_major());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, TRIPLANE_MAGIC)?;
        let channels = io::dim(r.offset(), r.u32()?, "channel count")?;
        let resolution = io::dim(r.offset(), r.u32()?, "resolution")?;
        if resolution < 2 {
            return Err(Error::format(12, "resolution must be at least 2"));
        }
        let plane_len = channels
            .checked_mul(resolution)
            .and_then(|v| v.checked_mul(resolution))
            .ok_or_else(|| Error::format(r.offset(), "triplane size overflows"))?;
        let payload_start = r.offset();
        let values = r.f32s(3 * plane_len)?;
        r.finish()?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(
                payload_start + 4 * i as u64,
                "non-finite triplane value",
            ));
        }
        let (a, rest) = values.split_at(plane_len);
        let (b, c) = rest.split_at(plane_len);
        Self::from_planes(channels, resolution, [a, b, c])
    }
}

fn check_dims(channels: usize, resolution: usize) -> Result<()> {
    if channels == 0 || resolution < 2 {
        return Err(Error::Structural(format!(
            "triplane needs C >= 1 and R >= 2, got C={channels} R={resolution}"
        )));
    }
    Ok(())
}

/// Payload size in bytes of a `TRPL` file for the given shape.
pub fn triplane_payload_len(channels: usize, resolution: usize) -> usize {
    3 * channels * resolution * resolution * 4
}

pub fn write_triplane(tp: &Triplane, path: &Path) -> Result<()> {
    io::write_atomic(path, &tp.to_bytes())
}

pub fn read_triplane(path: &Path) -> Result<Triplane> {
    Triplane::from_bytes(&io::read_bytes(path)?)
}

/// Free-function form of [`Triplane::sample`].
pub fn sample_triplane(tp: &Triplane, p: &SamplePoint) -> Vec<f64> {
    tp.sample(p)
}
