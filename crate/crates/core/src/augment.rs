//! Shoulder-pose ray warping and colour-space augmentation.

use std::sync::Arc;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::field::Field;
use crate::raster::Raster;
use crate::render::{self, PointWarp, RenderConfig, RenderedImage};
use crate::{Error, Result, SamplePoint};

/// Height of the chin line; points at or above it are never warped.
pub const Y_CHIN: f64 = 0.2;
/// Height at which the warp reaches the full base angles.
pub const Y_BASE: f64 = -0.5;

/// Which matrix to use for the yaw part of the shoulder warp.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YawMatrix {
    /// `[[c, 0, -s], [0, 1, 0], [-s, 0, c]]`, the form the augmentation was
    /// originally published with. Not orthonormal for `s != 0`.
    #[default]
    AsPublished,
    /// Proper rotation about `+y`: `[[c, 0, s], [0, 1, 0], [-s, 0, c]]`.
    Rotation,
}

/// Bends sample points below the chin line: roll about `z`, then yaw about
/// `y`, both pivoting at the origin, with angles growing linearly from zero
/// at [`Y_CHIN`] to the base angles at [`Y_BASE`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShoulderWarp {
    /// Roll at the shoulder base, radians.
    pub theta_base: f64,
    /// Yaw at the shoulder base, radians.
    pub phi_base: f64,
    #[serde(default)]
    pub yaw_matrix: YawMatrix,
}

impl ShoulderWarp {
    pub fn new(theta_base: f64, phi_base: f64) -> Self {
        ShoulderWarp {
            theta_base,
            phi_base,
            yaw_matrix: YawMatrix::default(),
        }
    }

    pub fn with_yaw_matrix(mut self, yaw_matrix: YawMatrix) -> Self {
        self.yaw_matrix = yaw_matrix;
        self
    }

    /// `(roll, yaw)` angles applied to a point at height `y`.
    pub fn angles_at(&self, y: f64) -> (f64, f64) {
        if y >= Y_CHIN {
            return (0.0, 0.0);
        }
        let ratio = (y - Y_CHIN).abs() / (Y_BASE - Y_CHIN).abs();
        (ratio * self.theta_base, ratio * self.phi_base)
    }

    pub fn roll_matrix(theta: f64) -> Matrix3<f64> {
        let (s, c) = theta.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    pub fn yaw_matrix(&self, phi: f64) -> Matrix3<f64> {
        let (s, c) = phi.sin_cos();
        match self.yaw_matrix {
            YawMatrix::AsPublished => Matrix3::new(c, 0.0, -s, 0.0, 1.0, 0.0, -s, 0.0, c),
            YawMatrix::Rotation => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.theta_base == 0.0 && self.phi_base == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_base.is_finite() && self.phi_base.is_finite()) {
            return Err(Error::Parameter("shoulder angles must be finite".into()));
        }
        Ok(())
    }
}

impl PointWarp for ShoulderWarp {
    fn warp(&self, p: &SamplePoint) -> SamplePoint {
        if p.y >= Y_CHIN || self.is_identity() {
            return *p;
        }
        let (theta, phi) = self.angles_at(p.y);
        let m = self.yaw_matrix(phi) * Self::roll_matrix(theta);
        SamplePoint::from(m * p.coords)
    }
}

pub fn warp_point(w: &ShoulderWarp, p: &SamplePoint) -> SamplePoint {
    w.warp(p)
}

/// Renders with every quadrature sample passed through the shoulder warp.
/// The field itself is untouched.
pub fn render_with_shoulder<F: Field + ?Sized>(
    field: &F,
    cam: &Camera,
    cfg: &RenderConfig,
    warp: &ShoulderWarp,
) -> Result<RenderedImage> {
    warp.validate()?;
    let cfg = cfg.clone().with_warp(Arc::new(*warp));
    render::render(field, cam, &cfg)
}

/// Photometric augmentation: brightness, contrast, then hue and saturation
/// in HSV space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorAugment {
    /// Added to every channel.
    pub brightness: f64,
    /// Gain about mid-grey.
    pub contrast: f64,
    /// Multiplies HSV saturation.
    pub saturation: f64,
    /// Hue rotation in degrees.
    pub hue_degrees: f64,
}

impl Default for ColorAugment {
    fn default() -> Self {
        Self::IDENTITY
    }
}

pub const BRIGHTNESS_RANGE: (f64, f64) = (-0.2, 0.2);
pub const CONTRAST_RANGE: (f64, f64) = (0.8, 1.25);
pub const SATURATION_RANGE: (f64, f64) = (0.7, 1.3);
pub const HUE_RANGE_DEGREES: (f64, f64) = (-18.0, 18.0);

impl ColorAugment {
    pub const IDENTITY: ColorAugment = ColorAugment {
        brightness: 0.0,
        contrast: 1.0,
        saturation: 1.0,
        hue_degrees: 0.0,
    };

    /// Uniform draw from the supported parameter ranges.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |(lo, hi): (f64, f64)| rng.gen_range(lo..=hi);
        ColorAugment {
            brightness: draw(BRIGHTNESS_RANGE),
            contrast: draw(CONTRAST_RANGE),
            saturation: draw(SATURATION_RANGE),
            hue_degrees: draw(HUE_RANGE_DEGREES),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("brightness", self.brightness, BRIGHTNESS_RANGE),
            ("contrast", self.contrast, CONTRAST_RANGE),
            ("saturation", self.saturation, SATURATION_RANGE),
            ("hue_degrees", self.hue_degrees, HUE_RANGE_DEGREES),
        ];
        for (name, v, (lo, hi)) in checks {
            if !(lo..=hi).contains(&v) {
                return Err(Error::Parameter(format!(
                    "{name} = {v} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Applies the augmentation to one RGB triple.
    pub fn apply_pixel(&self, rgb: [f64; 3]) -> [f64; 3] {
        let mut px = rgb;
        if self.brightness != 0.0 {
            px.iter_mut().for_each(|v| *v += self.brightness);
        }
        if self.contrast != 1.0 {
            px.iter_mut()
                .for_each(|v| *v = (*v - 0.5) * self.contrast + 0.5);
        }
        if self.hue_degrees != 0.0 || self.saturation != 1.0 {
            let clamped = px.map(|v| v.clamp(0.0, 1.0));
            let (h, s, v) = rgb_to_hsv(clamped);
            let h = (h + self.hue_degrees).rem_euclid(360.0);
            let s = (s * self.saturation).clamp(0.0, 1.0);
            px = hsv_to_rgb(h, s, v);
        }
        px
    }

    /// Returns the augmented copy of an RGB raster, clamped to `[0, 1]`.
    pub fn apply(&self, img: &Raster) -> Result<Raster> {
        if img.channels() != 3 {
            return Err(Error::Structural(format!(
                "colour augmentation needs 3 channels, got {}",
                img.channels()
            )));
        }
        if *self == Self::IDENTITY {
            return Ok(img.clone());
        }
        let mut out = img.clone();
        for px in out.data_mut().chunks_exact_mut(3) {
            let rgb = [px[0] as f64, px[1] as f64, px[2] as f64];
            let aug = self.apply_pixel(rgb);
            for k in 0..3 {
                px[k] = aug[k].clamp(0.0, 1.0) as f32;
            }
        }
        Ok(out)
    }
}

pub fn color_augment(img: &Raster, a: &ColorAugment) -> Result<Raster> {
    a.apply(img)
}

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let hue = if chroma == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / chroma + 2.0)
    } else {
        60.0 * ((r - g) / chroma + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { chroma / max };
    (hue, sat, max)
}

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}
