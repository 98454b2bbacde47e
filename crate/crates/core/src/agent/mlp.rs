use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
    /// `(tanh(z) + 1) / 2`, onto `(0, 1)`.
    UnitTanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::UnitTanh => 0.5 * (z.tanh() + 1.0),
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            // y = (t + 1)/2 so t = 2y - 1 and dy/dz = (1 - t²)/2.
            Activation::UnitTanh => {
                let t = 2.0 * y - 1.0;
                0.5 * (1.0 - t * t)
            }
        }
    }
}

/// Fully connected network, `y = act(x W + b)` per layer, row-major batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activations: Vec<Activation>,
}

/// Same layout as the parameters of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Per-layer pre-activations and outputs kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("network has at least one layer")
    }
}

impl Mlp {
    /// Hidden layers get `Relu`, the last layer `output`. Hidden weights are
    /// uniform in ±1/√fan_in, the final layer in ±`final_scale`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        output: Activation,
        final_scale: f64,
        rng: &mut R,
    ) -> Mlp {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let n_layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        let mut activations = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let last = l + 1 == n_layers;
            let bound = if last {
                final_scale
            } else {
                1.0 / (fan_in as f64).sqrt()
            };
            let mut draw = || {
                if bound > 0.0 {
                    rng.random_range(-bound..bound)
                } else {
                    0.0
                }
            };
            weights.push(Array2::from_shape_simple_fn((fan_in, fan_out), &mut draw));
            biases.push(Array1::from_shape_simple_fn(fan_out, &mut draw));
            activations.push(if last { output } else { Activation::Relu });
        }
        Mlp {
            weights,
            biases,
            activations,
        }
    }

    pub fn input_len(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_len(&self) -> usize {
        self.weights.last().map_or(0, |w| w.ncols())
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_len()];
        s.extend(self.weights.iter().map(|w| w.ncols()));
        s
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.activations == other.activations
            && self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.dim() == b.dim())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for l in 0..self.weights.len() {
            let act = self.activations[l];
            h = h.dot(&self.weights[l]) + &self.biases[l];
            h.mapv_inplace(|z| act.apply(z));
        }
        h
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> ForwardCache {
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.weights.len());
        for l in 0..self.weights.len() {
            let input = if l == 0 { x } else { &post[l - 1] };
            let z = input.dot(&self.weights[l]) + &self.biases[l];
            let act = self.activations[l];
            post.push(z.mapv(|v| act.apply(v)));
            pre.push(z);
        }
        ForwardCache {
            inputs: x.clone(),
            pre,
            post,
        }
    }

    /// Backpropagates `d_out` (dL/d output, one row per sample). Returns the
    /// parameter gradients and dL/d input.
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>) -> (MlpGrads, Array2<f64>) {
        let n = self.weights.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut delta = d_out.clone();
        for l in (0..n).rev() {
            let act = self.activations[l];
            ndarray::Zip::from(&mut delta)
                .and(&cache.pre[l])
                .and(&cache.post[l])
                .for_each(|d, &z, &y| *d *= act.derivative(z, y));
            let input = if l == 0 {
                &cache.inputs
            } else {
                &cache.post[l - 1]
            };
            gw.push(input.t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&self.weights[l].t());
        }
        gw.reverse();
        gb.reverse();
        (
            MlpGrads {
                weights: gw,
                biases: gb,
            },
            delta,
        )
    }

    /// `self ← τ·online + (1 − τ)·self`.
    pub fn blend_from(&mut self, online: &Mlp, tau: f64) {
        assert!(
            self.same_shape(online),
            "soft update between mismatched networks"
        );
        for (t, o) in self.weights.iter_mut().zip(&online.weights) {
            t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
        for (t, o) in self.biases.iter_mut().zip(&online.biases) {
            t.zip_mut_with(o, |t, &o| *t = tau * o + (1.0 - tau) * *t);
        }
    }

    /// Visits every parameter in a fixed order (weights then bias, per layer).
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(self.biases.iter())
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }
}

impl MlpGrads {
    /// Same parameter order as [`Mlp::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(self.biases.iter())
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}
