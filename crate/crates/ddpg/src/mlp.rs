//! Multilayer perceptron with batch-normalized hidden layers.
//!
//! Every hidden layer is `linear -> batch norm -> relu`; the output layer is
//! linear followed by an optional sigmoid. All trainable parameters live in
//! one flat vector so optimizers, target blending and checkpoints can treat a
//! network as a single slice. Batch-norm running statistics are kept in a
//! second flat vector that is not trained.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

/// Which statistics the batch-norm layers normalize with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Statistics of the current batch (training).
    Batch,
    /// Running statistics accumulated during training (inference).
    Running,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub activation: OutputActivation,
    pub norm_eps: f64,
    pub norm_momentum: f64,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize, activation: OutputActivation) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            output,
            activation,
            norm_eps: 1e-5,
            norm_momentum: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weight: usize,
    bias: usize,
    /// Offsets of (gamma, beta) in the parameters and (mean, var) in the
    /// running statistics. `None` for the output layer.
    norm: Option<NormOffsets>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct NormOffsets {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
    params: Vec<f64>,
    running: Vec<f64>,
}

/// Intermediate values of a forward pass needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: NormMode,
    inputs: Vec<Array2<f64>>,
    hidden: Vec<HiddenCache>,
    output: Array2<f64>,
}

#[derive(Debug, Clone)]
struct HiddenCache {
    normalized: Array2<f64>,
    activated_mask: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl Mlp {
    /// Builds a network with uniform fan-in initialization on hidden layers
    /// and `U(-final_scale, final_scale)` on the output layer.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, final_scale: f64, rng: &mut R) -> Self {
        let mut mlp = Self::zeros(spec);
        let count = mlp.layers.len();
        for (i, layer) in mlp.layers.clone().iter().enumerate() {
            let bound = if i + 1 == count {
                final_scale
            } else {
                1.0 / (layer.fan_in as f64).sqrt()
            };
            let n = layer.fan_in * layer.fan_out;
            for p in &mut mlp.params[layer.weight..layer.weight + n] {
                *p = rng.random_range(-bound..=bound);
            }
            for p in &mut mlp.params[layer.bias..layer.bias + layer.fan_out] {
                *p = rng.random_range(-bound..=bound);
            }
        }
        mlp
    }

    /// All weights and biases zero, batch-norm scale one and shift zero.
    pub fn zeros(spec: MlpSpec) -> Self {
        let mut layers = Vec::new();
        let mut params_len = 0;
        let mut running_len = 0;
        let mut fan_in = spec.input;
        let widths: Vec<(usize, bool)> = spec
            .hidden
            .iter()
            .map(|&h| (h, true))
            .chain(std::iter::once((spec.output, false)))
            .collect();
        for (fan_out, normed) in widths {
            let weight = params_len;
            params_len += fan_in * fan_out;
            let bias = params_len;
            params_len += fan_out;
            let norm = normed.then(|| {
                let offsets = NormOffsets {
                    gamma: params_len,
                    beta: params_len + fan_out,
                    mean: running_len,
                    var: running_len + fan_out,
                };
                params_len += 2 * fan_out;
                running_len += 2 * fan_out;
                offsets
            });
            layers.push(Layer {
                fan_in,
                fan_out,
                weight,
                bias,
                norm,
            });
            fan_in = fan_out;
        }
        let mut params = vec![0.0; params_len];
        let mut running = vec![0.0; running_len];
        for layer in &layers {
            if let Some(n) = layer.norm {
                params[n.gamma..n.gamma + layer.fan_out].fill(1.0);
                running[n.var..n.var + layer.fan_out].fill(1.0);
            }
        }
        Self {
            spec,
            layers,
            params,
            running,
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn running_stats(&self) -> &[f64] {
        &self.running
    }

    pub fn running_stats_mut(&mut self) -> &mut [f64] {
        &mut self.running
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().chain(&self.running).all(|v| v.is_finite())
    }

    fn weight(&self, layer: &Layer) -> ArrayView2<'_, f64> {
        let n = layer.fan_in * layer.fan_out;
        ArrayView2::from_shape(
            (layer.fan_in, layer.fan_out),
            &self.params[layer.weight..layer.weight + n],
        )
        .expect("layout matches shape")
    }

    fn slice(&self, offset: usize, len: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[offset..offset + len])
    }

    fn running_slice(&self, offset: usize, len: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.running[offset..offset + len])
    }

    /// Forward pass over a batch (one row per sample).
    pub fn forward(&self, input: ArrayView2<'_, f64>, mode: NormMode) -> ForwardCache {
        assert_eq!(input.ncols(), self.spec.input, "input width");
        let n = input.nrows() as f64;
        let eps = self.spec.norm_eps;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut hidden = Vec::with_capacity(self.layers.len() - 1);
        let mut x = input.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&self.weight(layer));
            z += &self.slice(layer.bias, layer.fan_out);
            inputs.push(x);
            match layer.norm {
                Some(off) => {
                    let (mean, var) = match mode {
                        NormMode::Batch => {
                            let mean = z.sum_axis(Axis(0)) / n;
                            let centered = &z - &mean;
                            let var = (&centered * &centered).sum_axis(Axis(0)) / n;
                            (mean, var)
                        }
                        NormMode::Running => (
                            self.running_slice(off.mean, layer.fan_out).to_owned(),
                            self.running_slice(off.var, layer.fan_out).to_owned(),
                        ),
                    };
                    let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
                    let normalized = (&z - &mean) * &inv_std;
                    let mut y = &normalized * &self.slice(off.gamma, layer.fan_out);
                    y += &self.slice(off.beta, layer.fan_out);
                    let activated_mask = y.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    x = y.mapv(|v| v.max(0.0));
                    hidden.push(HiddenCache {
                        normalized,
                        activated_mask,
                        inv_std,
                        batch_mean: mean,
                        batch_var: var,
                    });
                }
                None => {
                    x = match self.spec.activation {
                        OutputActivation::Identity => z,
                        OutputActivation::Sigmoid => z.mapv(sigmoid),
                    };
                }
            }
        }
        ForwardCache {
            mode,
            inputs,
            hidden,
            output: x,
        }
    }

    /// Inference on a single sample using running statistics.
    pub fn predict(&self, input: &[f64]) -> Vec<f64> {
        let view = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        self.forward(view, NormMode::Running).output.into_raw_vec_and_offset().0
    }

    /// Folds the batch statistics of a training-mode forward pass into the
    /// running statistics.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        assert_eq!(cache.mode, NormMode::Batch, "running stats come from batch statistics");
        let n = cache.inputs[0].nrows() as f64;
        let momentum = self.spec.norm_momentum;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for (layer, hc) in self.layers.iter().zip(&cache.hidden) {
            let off = layer.norm.expect("hidden layer");
            for j in 0..layer.fan_out {
                let m = &mut self.running[off.mean + j];
                *m = (1.0 - momentum) * *m + momentum * hc.batch_mean[j];
                let v = &mut self.running[off.var + j];
                *v = (1.0 - momentum) * *v + momentum * hc.batch_var[j] * unbias;
            }
        }
    }

    /// Backpropagates `d_output` (gradient with respect to the activated
    /// output) and returns (parameter gradient, input gradient).
    pub fn backward(&self, cache: &ForwardCache, d_output: ArrayView2<'_, f64>) -> (Vec<f64>, Array2<f64>) {
        let mut grads = vec![0.0; self.params.len()];
        let n = cache.output.nrows() as f64;
        let mut delta = match self.spec.activation {
            OutputActivation::Identity => d_output.to_owned(),
            OutputActivation::Sigmoid => {
                let slope = cache.output.mapv(|s| s * (1.0 - s));
                &d_output * &slope
            }
        };
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(off) = layer.norm {
                let hc = &cache.hidden[i];
                let dy = &delta * &hc.activated_mask;
                let d_gamma = (&dy * &hc.normalized).sum_axis(Axis(0));
                let d_beta = dy.sum_axis(Axis(0));
                write(&mut grads, off.gamma, d_gamma.view());
                write(&mut grads, off.beta, d_beta.view());
                let d_norm = &dy * &self.slice(off.gamma, layer.fan_out);
                delta = match cache.mode {
                    NormMode::Batch => {
                        let sum = d_norm.sum_axis(Axis(0));
                        let sum_dot = (&d_norm * &hc.normalized).sum_axis(Axis(0));
                        let mut dz = &d_norm * n;
                        dz -= &sum;
                        dz -= &(&hc.normalized * &sum_dot);
                        dz * &(&hc.inv_std / n)
                    }
                    NormMode::Running => d_norm * &hc.inv_std,
                };
            }
            let x = &cache.inputs[i];
            let d_weight = x.t().dot(&delta);
            let d_bias = delta.sum_axis(Axis(0));
            write(&mut grads, layer.weight, d_weight.view().into_shape_with_order(layer.fan_in * layer.fan_out).expect("contiguous"));
            write(&mut grads, layer.bias, d_bias.view());
            delta = delta.dot(&self.weight(layer).t());
        }
        (grads, delta)
    }

    /// `self <- rho * self + (1 - rho) * online`, including running statistics.
    pub fn blend_from(&mut self, online: &Mlp, rho: f64) {
        assert_eq!(self.params.len(), online.params.len(), "mismatched networks");
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t = rho * *t + (1.0 - rho) * o;
        }
        for (t, o) in self.running.iter_mut().zip(&online.running) {
            *t = rho * *t + (1.0 - rho) * o;
        }
    }
}

fn write(dst: &mut [f64], offset: usize, src: ArrayView1<'_, f64>) {
    for (d, s) in dst[offset..offset + src.len()].iter_mut().zip(src.iter()) {
        *d = *s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_sigmoid_of_zero() {
        let mlp = Mlp::zeros(MlpSpec::new(3, &[4, 4], 2, OutputActivation::Sigmoid));
        assert_eq!(mlp.predict(&[0.3, -1.0, 2.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn parameter_count_follows_layout() {
        let mlp = Mlp::zeros(MlpSpec::new(5, &[64, 64], 3, OutputActivation::Sigmoid));
        let expected = (5 * 64 + 64 + 128) + (64 * 64 + 64 + 128) + (64 * 3 + 3);
        assert_eq!(mlp.num_params(), expected);
        assert_eq!(mlp.running_stats().len(), 256);
    }

    #[test]
    fn batch_norm_normalizes_in_training_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::new(MlpSpec::new(2, &[3], 1, OutputActivation::Identity), 0.1, &mut rng);
        let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0], [-2.0, 1.0]];
        let cache = mlp.forward(x.view(), NormMode::Batch);
        let normalized = &cache.hidden[0].normalized;
        for col in normalized.columns() {
            assert!(col.mean().unwrap().abs() < 1e-12);
            let var = col.mapv(|v| v * v).mean().unwrap();
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn running_mode_is_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut mlp = Mlp::new(MlpSpec::new(3, &[8, 8], 2, OutputActivation::Sigmoid), 3e-3, &mut rng);
        let x = array![[1.0, 0.0, 0.2], [0.0, 1.0, 0.7], [0.3, 0.3, 0.3]];
        let cache = mlp.forward(x.view(), NormMode::Batch);
        mlp.update_running_stats(&cache);
        let a = mlp.predict(&[0.1, 0.2, 0.3]);
        let b = mlp.predict(&[0.1, 0.2, 0.3]);
        assert_eq!(a, b);
    }

    #[test]
    fn blend_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = MlpSpec::new(2, &[3], 1, OutputActivation::Identity);
        let online = Mlp::new(spec.clone(), 0.1, &mut rng);
        let mut target = Mlp::new(spec, 0.1, &mut rng);
        let before = target.clone();
        target.blend_from(&online, 1.0);
        assert_eq!(target, before);
        target.blend_from(&online, 0.0);
        assert_eq!(target.params(), online.params());
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
