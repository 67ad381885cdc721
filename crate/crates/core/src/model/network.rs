//! Fully connected scoring network with hand-written backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One affine layer; `weights` is row-major `outputs × inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform He initialization, `U(±sqrt(6 / fan_in))`, zero bias.
    pub fn he_uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs)
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, &b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

/// ReLU hidden layers followed by a linear scalar output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Cached activations of one forward pass, needed for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    /// Input to each layer (`layers.len()` entries).
    inputs: Vec<Vec<f64>>,
    /// Per hidden unit: `relu'(z) × dropout multiplier`.
    gates: Vec<Vec<f64>>,
    pub output: f64,
}

/// Gradient buffers shaped like an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = inputs;
        for &h in hidden {
            layers.push(Dense::he_uniform(fan_in, h, rng));
            fan_in = h;
        }
        layers.push(Dense::he_uniform(fan_in, 1, rng));
        Mlp { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Checks that consecutive layer shapes chain and end in one output.
    pub fn shapes_chain(&self) -> bool {
        !self.layers.is_empty()
            && self.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && self.layers.last().map(|l| l.outputs) == Some(1)
            && self
                .layers
                .iter()
                .all(|l| l.weights.len() == l.inputs * l.outputs && l.bias.len() == l.outputs)
    }

    /// Inference pass, dropout disabled.
    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Training pass with inverted dropout at rate `dropout` after every
    /// hidden activation.
    pub fn forward_train<R: Rng + ?Sized>(&self, x: &[f64], dropout: f64, rng: &mut R) -> Trace {
        let last = self.layers.len() - 1;
        let keep = 1.0 - dropout;
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.layers.len()),
            gates: Vec::with_capacity(last),
            output: 0.0,
        };
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.apply(&cur, &mut z);
            trace.inputs.push(std::mem::take(&mut cur));
            if i == last {
                trace.output = z[0];
                break;
            }
            let mut gate = Vec::with_capacity(z.len());
            for v in &mut z {
                let active = if *v > 0.0 { 1.0 } else { 0.0 };
                let mask = if dropout > 0.0 {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                } else {
                    1.0
                };
                let g = active * mask;
                *v *= g;
                gate.push(g);
            }
            trace.gates.push(gate);
            cur = z;
        }
        trace
    }

    /// Accumulates `d_output × ∂output/∂θ` into `grads`.
    pub fn backward(&self, trace: &Trace, d_output: f64, grads: &mut Gradients) {
        let mut delta = vec![d_output];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[i];
            let g = &mut grads.layers[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, &a) in row.iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if i == 0 {
                break;
            }
            let gate = &trace.gates[i - 1];
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, &gt) in prev.iter_mut().zip(gate) {
                *p *= gt;
            }
            delta = prev;
        }
    }

    /// Mean pairwise hinge loss over `(preferred, other)` feature pairs and
    /// its exact gradient, dropout disabled.
    pub fn pairwise_loss_and_gradient(
        &self,
        pairs: &[(Vec<f64>, Vec<f64>)],
        margin: f64,
    ) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let scale = 1.0 / pairs.len().max(1) as f64;
        let mut total = 0.0;
        for (plus, minus) in pairs {
            let tp = self.forward_train(plus, 0.0, &mut rng);
            let tm = self.forward_train(minus, 0.0, &mut rng);
            let loss = super::pair_loss(tp.output, tm.output, margin);
            total += loss;
            if loss > 0.0 {
                self.backward(&tp, -scale, &mut grads);
                self.backward(&tm, scale, &mut grads);
            }
        }
        (total * scale, grads)
    }

    /// Mean pairwise hinge loss, dropout disabled.
    pub fn pairwise_loss(&self, pairs: &[(Vec<f64>, Vec<f64>)], margin: f64) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        pairs
            .iter()
            .map(|(p, m)| super::pair_loss(self.forward(p), self.forward(m), margin))
            .sum::<f64>()
            / pairs.len() as f64
    }
}

/// Adadelta with a global learning-rate multiplier:
/// `E[g²] ← ρE[g²] + (1−ρ)g²`,
/// `Δ = √(E[Δ²]+ε) / √(E[g²]+ε) · g`,
/// `θ ← θ − lr·Δ`, `E[Δ²] ← ρE[Δ²] + (1−ρ)Δ²`.
#[derive(Clone, Debug)]
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
    square_avg: Gradients,
    delta_avg: Gradients,
}

impl Adadelta {
    pub fn new(net: &Mlp, rho: f64, eps: f64) -> Self {
        Adadelta {
            rho,
            eps,
            square_avg: Gradients::zeros_like(net),
            delta_avg: Gradients::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients, lr: f64) {
        let (rho, eps) = (self.rho, self.eps);
        let update = |p: &mut f64, g: f64, sq: &mut f64, acc: &mut f64| {
            *sq = rho * *sq + (1.0 - rho) * g * g;
            let delta = ((*acc + eps).sqrt() / (*sq + eps).sqrt()) * g;
            *p -= lr * delta;
            *acc = rho * *acc + (1.0 - rho) * delta * delta;
        };
        for (li, layer) in net.layers.iter_mut().enumerate() {
            let g = &grads.layers[li];
            let sq = &mut self.square_avg.layers[li];
            let acc = &mut self.delta_avg.layers[li];
            for k in 0..layer.weights.len() {
                update(&mut layer.weights[k], g.weights[k], &mut sq.weights[k], &mut acc.weights[k]);
            }
            for k in 0..layer.bias.len() {
                update(&mut layer.bias[k], g.bias[k], &mut sq.bias[k], &mut acc.bias[k]);
            }
        }
    }
}
