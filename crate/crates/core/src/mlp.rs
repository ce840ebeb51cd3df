//! The small decoder network turning a mean triplane feature into density,
//! colour and an extra feature vector.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::io::{self, ByteReader, ByteWriter};
use crate::{Error, Result};

pub const MLP_MAGIC: &[u8; 4] = b"MLPW";

/// Extra feature channels after density and colour. Colour plus features
/// make up the 32-channel feature image.
pub const FEATURE_DIM: usize = 29;

/// Output width of the final layer: density, RGB, features.
pub const OUTPUT_DIM: usize = 4 + FEATURE_DIM;

pub const DEFAULT_HIDDEN: usize = 16;
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    /// `outputs x inputs`, row-major.
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl Layer {
    pub fn new(inputs: usize, outputs: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Structural(
                "layer dimensions must be positive".into(),
            ));
        }
        if weight.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::Structural(format!(
                "layer {inputs}->{outputs} needs {} weights and {outputs} biases, got {} and {}",
                inputs * outputs,
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite layer parameter".into()));
        }
        Ok(Layer {
            inputs,
            outputs,
            weight,
            bias,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    fn forward(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weight
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, &b)| {
                    row.iter()
                        .zip(input)
                        .fold(b as f64, |acc, (&w, &x)| acc + w as f64 * x)
                }),
        );
    }
}

/// Decoder output for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decoded {
    pub sigma: f64,
    pub color: [f64; 3],
    pub feature: [f64; FEATURE_DIM],
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpWeights {
    layers: Vec<Layer>,
}

/// Reusable activation buffers for [`MlpWeights::decode_with`].
#[derive(Default)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

pub fn softplus(x: f64) -> f64 {
    // log(1 + e^x) without overflow
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn leaky_relu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

impl MlpWeights {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::Structural("MLP needs at least one layer".into()));
        };
        if last.outputs != OUTPUT_DIM {
            return Err(Error::Structural(format!(
                "final layer must output {OUTPUT_DIM} values, got {}",
                last.outputs
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Structural(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(MlpWeights { layers })
    }

    /// All-zero network of the default architecture.
    pub fn zeros(input: usize) -> Result<Self> {
        Self::from_init(input, |_, _| 0.0)
    }

    /// Default architecture (`input -> 16 -> 16 -> 33`) with uniform
    /// `+-1/sqrt(fan_in)` weights drawn from `seed`.
    pub fn seeded(seed: u64, input: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_init(input, |fan_in, _| {
            let bound = 1.0 / (fan_in as f32).sqrt();
            rng.gen_range(-bound..bound)
        })
    }

    fn from_init(input: usize, mut init: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let dims = [input, DEFAULT_HIDDEN, DEFAULT_HIDDEN, OUTPUT_DIM];
        let layers = dims
            .windows(2)
            .map(|d| {
                let weight = (0..d[0] * d[1]).map(|k| init(d[0], k)).collect();
                let bias = (0..d[1]).map(|k| init(d[0], k)).collect();
                Layer::new(d[0], d[1], weight, bias)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn decode(&self, f_mean: &[f64]) -> Result<Decoded> {
        if f_mean.len() != self.input_dim() {
            return Err(Error::Structural(format!(
                "decoder expects {} inputs, got {}",
                self.input_dim(),
                f_mean.len()
            )));
        }
        Ok(self.decode_with(f_mean, &mut Scratch::default()))
    }

    /// Allocation-free decode; `f_mean` must have [`Self::input_dim`] entries.
    pub fn decode_with(&self, f_mean: &[f64], scratch: &mut Scratch) -> Decoded {
        debug_assert_eq!(f_mean.len(), self.input_dim());
        let Scratch { a, b } = scratch;
        a.clear();
        a.extend_from_slice(f_mean);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(a, b);
            if i != last {
                b.iter_mut().for_each(|v| *v = leaky_relu(*v));
            }
            std::mem::swap(a, b);
        }
        let out = &a[..];
        Decoded {
            sigma: softplus(out[0]),
            color: [sigmoid(out[1]), sigmoid(out[2]), sigmoid(out[3])],
            feature: std::array::from_fn(|k| out[4 + k]),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n: usize = self
            .layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len() + 2)
            .sum();
        let mut w = ByteWriter::new(MLP_MAGIC, 4 * (n + 1));
        w.u32(self.layers.len() as u32);
        for l in &self.layers {
            w.u32(l.inputs as u32);
            w.u32(l.outputs as u32);
            w.f32s(l.weight.iter().copied());
            w.f32s(l.bias.iter().copied());
        }
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, MLP_MAGIC)?;
        let count = io::dim(r.offset(), r.u32()?, "layer count")?;
        let mut layers = Vec::new();
        for _ in 0..count {
            let at = r.offset();
            let inputs = io::dim(r.offset(), r.u32()?, "layer inputs")?;
            let outputs = io::dim(r.offset(), r.u32()?, "layer outputs")?;
            let n = inputs
                .checked_mul(outputs)
                .ok_or_else(|| Error::format(at, "layer size overflows"))?;
            let weight = r.f32s(n)?;
            let bias = r.f32s(outputs)?;
            layers.push(
                Layer::new(inputs, outputs, weight, bias)
                    .map_err(|e| Error::format(at, e.to_string()))?,
            );
        }
        r.finish()?;
        Self::new(layers).map_err(|e| Error::format(0, e.to_string()))
    }
}

pub fn write_mlp(w: &MlpWeights, path: &Path) -> Result<()> {
    io::write_atomic(path, &w.to_bytes())
}

pub fn read_mlp(path: &Path) -> Result<MlpWeights> {
    MlpWeights::from_bytes(&io::read_bytes(path)?)
}

pub fn decode_mlp(w: &MlpWeights, f_mean: &[f64]) -> Result<Decoded> {
    w.decode(f_mean)
}
