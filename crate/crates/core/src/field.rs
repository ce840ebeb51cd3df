//! Density/colour fields that the renderer integrates.

use std::cell::RefCell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mlp::{self, MlpWeights, FEATURE_DIM};
use crate::triplane::Triplane;
use crate::{Error, Result, SamplePoint};

/// What a field reports at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample {
    pub sigma: f64,
    pub color: [f64; 3],
    pub feature: [f64; FEATURE_DIM],
}

impl FieldSample {
    pub const EMPTY: FieldSample = FieldSample {
        sigma: 0.0,
        color: [0.0; 3],
        feature: [0.0; FEATURE_DIM],
    };

    pub fn is_finite(&self) -> bool {
        self.sigma.is_finite()
            && self.color.iter().all(|v| v.is_finite())
            && self.feature.iter().all(|v| v.is_finite())
    }
}

/// A volumetric scene. Implementations must return `sigma >= 0` everywhere
/// and be safe to evaluate from many threads at once.
pub trait Field: Send + Sync {
    fn evaluate(&self, p: &SamplePoint) -> FieldSample;
}

impl<F: Field + ?Sized> Field for &F {
    fn evaluate(&self, p: &SamplePoint) -> FieldSample {
        (**self).evaluate(p)
    }
}

impl<F: Field + ?Sized> Field for Box<F> {
    fn evaluate(&self, p: &SamplePoint) -> FieldSample {
        (**self).evaluate(p)
    }
}

impl<F: Field + ?Sized> Field for Arc<F> {
    fn evaluate(&self, p: &SamplePoint) -> FieldSample {
        (**self).evaluate(p)
    }
}

/// Empty space.
#[derive(Clone, Copy, Debug, Default)]
pub struct Vacuum;

impl Field for Vacuum {
    fn evaluate(&self, _: &SamplePoint) -> FieldSample {
        FieldSample::EMPTY
    }
}

/// Triplane decoded by the MLP: sample, average, decode.
#[derive(Clone, Debug)]
pub struct TriplaneField {
    triplane: Arc<Triplane>,
    mlp: Arc<MlpWeights>,
}

thread_local! {
    static SCRATCH: RefCell<(Vec<f64>, mlp::Scratch)> = RefCell::new((Vec::new(), mlp::Scratch::default()));
}

impl TriplaneField {
    pub fn new(
        triplane: impl Into<Arc<Triplane>>,
        mlp: impl Into<Arc<MlpWeights>>,
    ) -> Result<Self> {
        let triplane = triplane.into();
        let mlp = mlp.into();
        if mlp.input_dim() != triplane.channels() {
            return Err(Error::Structural(format!(
                "decoder expects {} channels but the triplane has {}",
                mlp.input_dim(),
                triplane.channels()
            )));
        }
        Ok(TriplaneField { triplane, mlp })
    }

    pub fn triplane(&self) -> &Triplane {
        &self.triplane
    }

    pub fn mlp(&self) -> &MlpWeights {
        &self.mlp
    }
}

impl Field for TriplaneField {
    fn evaluate(&self, p: &SamplePoint) -> FieldSample {
        SCRATCH.with(|s| {
            let (feat, scratch) = &mut *s.borrow_mut();
            feat.resize(self.triplane.channels(), 0.0);
            self.triplane.sample_into(p, feat);
            let d = self.mlp.decode_with(feat, scratch);
            FieldSample {
                sigma: d.sigma,
                color: d.color,
                feature: d.feature,
            }
        })
    }
}

/// Axis-aligned anisotropic Gaussian density bump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 3],
    pub scale: [f64; 3],
    pub peak: f64,
    pub color: [f64; 3],
}

impl Blob {
    pub fn density(&self, p: &SamplePoint) -> f64 {
        let q: f64 = (0..3)
            .map(|k| {
                let d = (p[k] - self.center[k]) / self.scale[k];
                d * d
            })
            .sum();
        self.peak * (-0.5 * q).exp()
    }

    fn validate(&self) -> Result<()> {
        let finite = self
            .center
            .iter()
            .chain(&self.scale)
            .chain(&self.color)
            .chain(std::iter::once(&self.peak))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Parameter("blob parameters must be finite".into()));
        }
        if self.scale.iter().any(|&s| s <= 0.0) || self.peak < 0.0 {
            return Err(Error::Parameter(
                "blob scales must be positive and peak density non-negative".into(),
            ));
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Parameter("blob colour must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Sum of Gaussian blobs; colour is the density-weighted mean of the blob
/// colours. Extra features are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobField {
    blobs: Vec<Blob>,
}

impl BlobField {
    pub fn new(blobs: Vec<Blob>) -> Result<Self> {
        for b in &blobs {
            b.validate()?;
        }
        Ok(BlobField { blobs })
    }

    pub fn blobs(&self) -> &[Blob] {
        &self.blobs
    }
}

impl Field for BlobField {
    fn evaluate(&self, p: &SamplePoint) -> FieldSample {
        let mut sigma = 0.0;
        let mut color = [0.0; 3];
        for b in &self.blobs {
            let d = b.density(p);
            sigma += d;
            for k in 0..3 {
                color[k] += d * b.color[k];
            }
        }
        if sigma > 0.0 {
            color.iter_mut().for_each(|c| *c /= sigma);
        }
        FieldSample {
            sigma,
            color,
            feature: [0.0; FEATURE_DIM],
        }
    }
}

/// Uniform density inside an axis-aligned box, vacuum outside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSlab {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub sigma: f64,
    pub color: [f64; 3],
}

impl ConstantSlab {
    pub fn new(min: [f64; 3], max: [f64; 3], sigma: f64, color: [f64; 3]) -> Result<Self> {
        if (0..3).any(|k| !(min[k] < max[k])) || !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Parameter(
                "slab needs min < max on every axis and a finite sigma >= 0".into(),
            ));
        }
        Ok(ConstantSlab {
            min,
            max,
            sigma,
            color,
        })
    }

    pub fn contains(&self, p: &SamplePoint) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

impl Field for ConstantSlab {
    fn evaluate(&self, p: &SamplePoint) -> FieldSample {
        if self.contains(p) {
            FieldSample {
                sigma: self.sigma,
                color: self.color,
                feature: [0.0; FEATURE_DIM],
            }
        } else {
            FieldSample::EMPTY
        }
    }
}
