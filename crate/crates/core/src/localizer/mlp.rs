//! Fully connected network with manual backpropagation.

use crate::scene::{Room, Scene};
use crate::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Hidden widths used by [`MlpModel::for_scene`].
pub const HIDDEN: [usize; 3] = [128, 128, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// `y = g(W x + b)` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// SINR readings are clipped to `[lo, hi]` dB and mapped onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub lo: f64,
    pub hi: f64,
}

impl Default for InputNorm {
    fn default() -> Self {
        Self { lo: -40.0, hi: 50.0 }
    }
}

impl InputNorm {
    pub fn apply(&self, v: f64) -> f64 {
        2.0 * (v.clamp(self.lo, self.hi) - self.lo) / (self.hi - self.lo) - 1.0
    }
}

/// Per-coordinate affine map `z = (p - offset) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputNorm {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl OutputNorm {
    /// Maps room bounds onto `[0, 1]` for each of the `k + 1` positions.
    pub fn from_room(room: &Room, k: usize) -> Self {
        let lo = room.min.to_array();
        let span = (room.max - room.min).to_array();
        Self { offset: lo.repeat(k + 1), scale: span.repeat(k + 1) }
    }

    pub fn identity(n: usize) -> Self {
        Self { offset: vec![0.0; n], scale: vec![1.0; n] }
    }

    pub fn len(&self) -> usize {
        self.offset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offset.is_empty()
    }

    pub fn normalize(&self, j: usize, v: f64) -> f64 {
        (v - self.offset[j]) / self.scale[j]
    }

    pub fn denormalize(&self, j: usize, z: f64) -> f64 {
        self.offset[j] + self.scale[j] * z
    }
}

/// Per-layer parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub input_norm: InputNorm,
    pub output_norm: OutputNorm,
    pub frozen: Vec<bool>,
    pub seed: u64,
}

impl MlpModel {
    /// Rectifier hidden layers and a linear output, He-initialised weights
    /// and zero biases.
    pub fn new(widths: &[usize], output_norm: OutputNorm, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidConfig(format!("bad layer widths {widths:?}")));
        }
        if output_norm.len() != widths[widths.len() - 1] {
            return Err(Error::DimensionMismatch(format!(
                "output normalisation has {} coordinates, network outputs {}",
                output_norm.len(),
                widths[widths.len() - 1]
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let last = l + 1 == n;
                let std = if last { (1.0 / fan_in as f64).sqrt() } else { (2.0 / fan_in as f64).sqrt() };
                let dist = Normal::new(0.0, std).expect("positive std");
                Layer {
                    weights: Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(&mut rng)),
                    bias: Array1::zeros(fan_out),
                    activation: if last { Activation::Linear } else { Activation::Relu },
                }
            })
            .collect();
        Ok(Self { layers, input_norm: InputNorm::default(), output_norm, frozen: vec![false; n], seed })
    }

    /// The default architecture for `s` beams and the scene's interferer count.
    pub fn for_scene(s: usize, scene: &Scene, seed: u64) -> Result<Self> {
        let out = 3 * (scene.k() + 1);
        let mut widths = vec![s];
        widths.extend(HIDDEN);
        widths.push(out);
        Self::new(&widths, OutputNorm::from_room(&scene.room, scene.k()), seed)
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Clipped and rescaled network input for a batch of SINR rows.
    pub fn normalize_inputs(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.mapv(|v| self.input_norm.apply(v))
    }

    pub fn normalize_targets(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let mut out = y.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.output_norm.normalize(j, *v);
            }
        }
        out
    }

    pub fn denormalize_outputs(&self, z: ArrayView2<f64>) -> Array2<f64> {
        let mut out = z.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.output_norm.denormalize(j, *v);
            }
        }
        out
    }

    /// Network output on already normalised inputs.
    pub fn forward_normalized(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            a = z;
        }
        a
    }

    /// Positions in metres for a batch of SINR rows (dB).
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch(format!("model expects {} inputs, got {}", self.n_inputs(), x.ncols())));
        }
        Ok(self.denormalize_outputs(self.forward_normalized(self.normalize_inputs(x).view()).view()))
    }

    /// Position vector `[p_0, …, p_K]` for one SINR sweep.
    pub fn forward(&self, gamma: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, gamma.len()), gamma).expect("row view");
        Ok(self.predict(x)?.row(0).to_vec())
    }

    /// Loss `mean_i ‖z_i - y_i‖²` on normalised data together with its
    /// gradient with respect to every parameter.
    pub fn gradients(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> (f64, Gradients) {
        let n = x.nrows() as f64;
        let mut acts = vec![x.to_owned()];
        let mut pres = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = acts.last().expect("input").dot(&layer.weights.t());
            z += &layer.bias;
            let a = z.mapv(|v| layer.activation.apply(v));
            pres.push(z);
            acts.push(a);
        }
        let err = &acts[self.layers.len()] - &y;
        let loss = err.iter().map(|e| e * e).sum::<f64>() / n;
        let mut delta = err * (2.0 / n);
        let mut gw = vec![Array2::zeros((0, 0)); self.layers.len()];
        let mut gb = vec![Array1::zeros(0); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if layer.activation != Activation::Linear {
                delta.zip_mut_with(&pres[l], |d, &p| *d *= layer.activation.derivative(p));
            }
            gw[l] = delta.t().dot(&acts[l]);
            gb[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                delta = delta.dot(&layer.weights);
            }
        }
        (loss, Gradients { weights: gw, bias: gb })
    }

    /// Normalised-scale loss without gradients.
    pub fn normalized_loss(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
        let z = self.forward_normalized(x);
        (&z - &y).iter().map(|e| e * e).sum::<f64>() / x.nrows() as f64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: MlpModel = serde_json::from_slice(&std::fs::read(path)?)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.frozen.len() != self.layers.len() {
            return Err(Error::InvalidConfig("layer list and frozen mask disagree".into()));
        }
        for (l, w) in self.layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::DimensionMismatch(format!("layer {l} outputs {} but layer {} takes {}", w[0].outputs(), l + 1, w[1].inputs())));
            }
        }
        for l in &self.layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::DimensionMismatch("bias length".into()));
            }
        }
        if self.layers[self.layers.len() - 1].activation != Activation::Linear {
            return Err(Error::InvalidConfig("output layer must be linear".into()));
        }
        if self.output_norm.len() != self.n_outputs() {
            return Err(Error::DimensionMismatch("output normalisation length".into()));
        }
        Ok(())
    }
}
