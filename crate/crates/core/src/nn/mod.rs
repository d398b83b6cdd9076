//! Feedforward classifier: every layer is dropout, then dense, then PReLU
//! (hidden layers) or a sigmoid (output). Trained on summed binary
//! cross-entropy with Adam.

mod adam;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub use adam::{AdamConfig, AdamState};
pub use train::{train, TrainConfig, TrainReport};

pub const DEFAULT_LAYER_SIZES: [usize; 4] = [1024, 1024, 1024, 1];
pub const DEFAULT_KEEP_PROB: f64 = 0.8;
pub const INITIAL_PRELU_SLOPE: f64 = 0.25;
/// Outputs are clamped into `[EPS, 1 - EPS]` before taking logs.
pub const OUTPUT_CLAMP: f64 = 1e-7;

const PREDICT_CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// PReLU slopes, one per output node. `None` marks the sigmoid output layer.
    pub slopes: Option<Array1<f64>>,
}

impl DenseLayer {
    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len() + self.slopes.as_ref().map_or(0, |s| s.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<DenseLayer>,
    /// Probability that a node is kept by dropout during training.
    pub keep_prob: f64,
    pub seed: u64,
}

/// Per-layer dropout masks, already scaled by `1 / keep_prob`.
pub type Masks = Vec<Option<Array2<f64>>>;

#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each dense layer after dropout (`d` in the layer equations).
    pub dropped: Vec<Array2<f64>>,
    /// Pre-activations `z` of each layer.
    pub pre_activations: Vec<Array2<f64>>,
    pub masks: Masks,
    /// Unclamped sigmoid outputs.
    pub output: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub slopes: Option<Array1<f64>>,
}

impl LayerGrads {
    fn zeros_like(layer: &DenseLayer) -> Self {
        LayerGrads {
            weights: Array2::zeros(layer.weights.raw_dim()),
            bias: Array1::zeros(layer.bias.len()),
            slopes: layer.slopes.as_ref().map(|s| Array1::zeros(s.len())),
        }
    }

    fn slices(&self) -> impl Iterator<Item = &[f64]> {
        [
            self.weights.as_slice(),
            self.bias.as_slice(),
            self.slopes.as_ref().and_then(|s| s.as_slice()),
        ]
        .into_iter()
        .flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model.layers.iter().map(LayerGrads::zeros_like).collect(),
        }
    }

    /// All gradient entries, flattened in the same order as [`MlpModel::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.slices().flat_map(|s| s.iter().copied()))
            .collect()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn prelu(z: f64, slope: f64) -> f64 {
    if z < 0.0 {
        slope * z
    } else {
        z
    }
}

/// Summed binary cross-entropy (natural log) over a batch.
pub fn loss(y_star: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y_star.len() != y_hat.len() {
        return Err(Error::shape(
            format!("{} labels", y_star.len()),
            format!("{} labels", y_hat.len()),
        ));
    }
    Ok(y_star
        .iter()
        .zip(y_hat)
        .map(|(&p, &t)| {
            let p = p.clamp(OUTPUT_CLAMP, 1.0 - OUTPUT_CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum())
}

pub(crate) fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl MlpModel {
    /// Glorot-normal weights `N(0, 2 / (fan_in + fan_out))`, zero biases and
    /// PReLU slopes at 0.25.
    pub fn init_glorot(layer_sizes: &[usize], keep_prob: f64, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Domain(format!(
                "layer sizes must be at least two positive values, got {layer_sizes:?}"
            )));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::Domain("the output layer must have exactly one node".into()));
        }
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(Error::Domain(format!("keep probability {keep_prob} outside (0, 1]")));
        }
        let mut rng = rng_for(seed, 0);
        let last = layer_sizes.len() - 2;
        let layers = layer_sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(&mut rng));
                DenseLayer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    slopes: (i != last).then(|| Array1::from_elem(fan_out, INITIAL_PRELU_SLOPE)),
                }
            })
            .collect();
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            keep_prob,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Checks that layer shapes agree with `layer_sizes` and every parameter is finite.
    pub fn validate(&self) -> Result<()> {
        if self.layers.len() + 1 != self.layer_sizes.len() {
            return Err(Error::shape(self.layer_sizes.len() - 1, self.layers.len()));
        }
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let want = (self.layer_sizes[i + 1], self.layer_sizes[i]);
            if layer.weights.dim() != want {
                return Err(Error::shape(format!("{want:?}"), format!("{:?}", layer.weights.dim())));
            }
            if layer.bias.len() != want.0 {
                return Err(Error::shape(want.0, layer.bias.len()));
            }
            match (&layer.slopes, i == last) {
                (Some(s), false) if s.len() == want.0 => {}
                (None, true) => {}
                _ => return Err(Error::shape("PReLU slopes on hidden layers only", format!("layer {i}"))),
            }
        }
        self.check_finite()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            let ok = layer.weights.iter().all(|v| v.is_finite())
                && layer.bias.iter().all(|v| v.is_finite())
                && layer.slopes.iter().flatten().all(|v| v.is_finite());
            if !ok {
                return Err(Error::NonFinite(format!("layer {}", i + 1)));
            }
        }
        Ok(())
    }

    /// Samples Bernoulli(keep_prob) masks for a batch of `n` rows, scaled by `1 / keep_prob`.
    pub fn sample_masks(&self, n: usize, rng: &mut impl Rng) -> Masks {
        if self.keep_prob >= 1.0 {
            return vec![None; self.layers.len()];
        }
        let h = self.keep_prob;
        let scale = 1.0 / h;
        self.layers
            .iter()
            .map(|l| {
                Some(Array2::from_shape_simple_fn((n, l.inputs()), || {
                    if rng.random::<f64>() < h {
                        scale
                    } else {
                        0.0
                    }
                }))
            })
            .collect()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("{} feature columns", self.input_dim()),
                format!("{} columns", x.ncols()),
            ));
        }
        Ok(())
    }

    /// Forward pass over `x` (`n x input_dim`). In training mode fresh dropout
    /// masks are drawn from `rng`; otherwise no dropout or scaling is applied.
    pub fn forward(&self, x: ArrayView2<f64>, training: bool, rng: &mut impl Rng) -> Result<(Array1<f64>, ForwardCache)> {
        let masks = if training {
            self.sample_masks(x.nrows(), rng)
        } else {
            vec![None; self.layers.len()]
        };
        self.forward_with_masks(x, masks)
    }

    pub fn forward_with_masks(&self, x: ArrayView2<f64>, masks: Masks) -> Result<(Array1<f64>, ForwardCache)> {
        self.check_input(&x)?;
        if masks.len() != self.layers.len() {
            return Err(Error::shape(self.layers.len(), masks.len()));
        }
        let mut dropped = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut y = x.to_owned();
        for (layer, mask) in self.layers.iter().zip(&masks) {
            let d = match mask {
                Some(m) => {
                    if m.dim() != y.dim() {
                        return Err(Error::shape(format!("{:?}", y.dim()), format!("{:?}", m.dim())));
                    }
                    &y * m
                }
                None => y,
            };
            let mut z = d.dot(&layer.weights.t());
            z += &layer.bias;
            y = match &layer.slopes {
                Some(a) => {
                    let mut out = z.clone();
                    for mut row in out.rows_mut() {
                        for (v, &s) in row.iter_mut().zip(a) {
                            *v = prelu(*v, s);
                        }
                    }
                    out
                }
                None => z.mapv(sigmoid),
            };
            dropped.push(d);
            pre.push(z);
        }
        let output = y.column(0).to_owned();
        Ok((
            output.clone(),
            ForwardCache {
                dropped,
                pre_activations: pre,
                masks,
                output,
            },
        ))
    }

    /// Gradients of the summed cross-entropy through the cached forward pass.
    ///
    /// The output gradient is `y* - y_hat`, the derivative of the unclamped
    /// loss; the clamp only guards the reported loss value.
    pub fn backward(&self, cache: &ForwardCache, y_hat: &[f64]) -> Result<Gradients> {
        let n = cache.output.len();
        if y_hat.len() != n {
            return Err(Error::shape(n, y_hat.len()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        // dL/dy of the current layer's output, set once the layer above has run
        let mut upstream: Option<Array2<f64>> = None;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (dz, slopes) = match (&layer.slopes, upstream.take()) {
                (None, _) => (
                    Array2::from_shape_fn((n, 1), |(i, _)| cache.output[i] - y_hat[i]),
                    None,
                ),
                (Some(a), Some(mut dy)) => {
                    let z = &cache.pre_activations[l];
                    let mut da = Array1::zeros(a.len());
                    for (mut dy_row, z_row) in dy.rows_mut().into_iter().zip(z.rows()) {
                        for (j, (g, &zv)) in dy_row.iter_mut().zip(z_row).enumerate() {
                            if zv < 0.0 {
                                da[j] += *g * zv;
                                *g *= a[j];
                            }
                        }
                    }
                    (dy, Some(da))
                }
                (Some(_), None) => {
                    return Err(Error::shape("sigmoid output layer", "PReLU output layer"))
                }
            };
            grads.push(LayerGrads {
                weights: dz.t().dot(&cache.dropped[l]),
                bias: dz.sum_axis(Axis(0)),
                slopes,
            });
            if l > 0 {
                let mut dy = dz.dot(&layer.weights);
                if let Some(m) = &cache.masks[l] {
                    dy *= m;
                }
                upstream = Some(dy);
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Scores in (0, 1); inference mode, processed in fixed-size row chunks.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_input(&x)?;
        let mut out = Vec::with_capacity(x.nrows());
        for chunk in x.axis_chunks_iter(Axis(0), PREDICT_CHUNK) {
            let (y, _) = self.forward_with_masks(chunk, vec![None; self.layers.len()])?;
            out.extend(y.iter().copied());
        }
        Ok(out)
    }

    /// All parameters flattened layer by layer: weights, bias, slopes.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weights.iter().copied());
            out.extend(l.bias.iter().copied());
            if let Some(s) = &l.slopes {
                out.extend(s.iter().copied());
            }
        }
        out
    }

    /// Inverse of [`flat_params`](Self::flat_params).
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::shape(self.param_count(), params.len()));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = it.next().unwrap());
            l.bias.iter_mut().for_each(|v| *v = it.next().unwrap());
            if let Some(s) = &mut l.slopes {
                s.iter_mut().for_each(|v| *v = it.next().unwrap());
            }
        }
        Ok(())
    }
}
