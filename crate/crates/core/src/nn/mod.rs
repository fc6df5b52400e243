//! Feed-forward binary classifier over flattened feature matrices.
//!
//! Hidden layers use ReLU; the single output unit is a logistic sigmoid
//! giving `P(label = normal)`. Weights of every layer are stored row-major
//! with one row per *input* unit, so a zero input skips a whole row in both
//! the forward pass and the weight-gradient accumulation.

mod checkpoint;
mod grid;
mod train;

pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, CHECKPOINT_FORMAT};
pub use grid::{grid_search, CellResult, GridCell, GridReport, GridSpec};
pub use train::{accuracy, examples, train, Example, TrainConfig, TrainedModel, TrainingMetadata};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// Lower clamp for probabilities inside the loss.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Frame capacity of the input matrix.
    pub frames: usize,
    /// Features per frame.
    pub features: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    pub fn new(frames: usize, features: usize, hidden: Vec<usize>) -> Result<Self> {
        let a = Self {
            frames,
            features,
            hidden,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim() == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "hidden widths must be >= 1, got {:?}",
                self.hidden
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.frames * self.features
    }

    /// Layer widths from input to output, e.g. `[6304, 64, 32, 1]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim());
        w.extend_from_slice(&self.hidden);
        w.push(1);
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.widths().windows(2).map(|p| (p[0] + 1) * p[1]).sum()
    }
}

/// Fully connected layer; `weights[i * outputs + o]` connects input `i` to output `o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            biases: vec![0.0; outputs],
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.outputs..(i + 1) * self.outputs]
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.biases.clone();
        for (i, &a) in x.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (zo, w) in z.iter_mut().zip(self.row(i)) {
                *zo += a * w;
            }
        }
        z
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Post-ReLU outputs of each hidden layer.
    pub hidden: Vec<Vec<f64>>,
    pub logit: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy in nats, with `p` clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn bce_loss(probability: f64, y: Label) -> f64 {
    let p = probability.clamp(PROB_EPS, 1.0 - PROB_EPS);
    match y {
        Label::Normal => -p.ln(),
        Label::Compensatory => -(1.0 - p).ln(),
    }
}

/// dL/dlogit = sigmoid(z) - y, evaluated without cancellation.
fn logit_gradient(logit: f64, y: Label) -> f64 {
    match y {
        Label::Normal => -sigmoid(-logit),
        Label::Compensatory => sigmoid(logit),
    }
}

impl Network {
    pub fn zeros(arch: &Architecture) -> Self {
        let widths = arch.widths();
        Self {
            layers: widths.windows(2).map(|p| Layer::zeros(p[0], p[1])).collect(),
        }
    }

    pub fn glorot<R: Rng>(arch: &Architecture, rng: &mut R) -> Self {
        let widths = arch.widths();
        Self {
            layers: widths.windows(2).map(|p| Layer::glorot(p[0], p[1], rng)).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    /// Checks that layer shapes chain into a single output and all values are finite.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Data("network has no layers".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::Data(format!(
                    "layer {k}: parameter arrays do not match {}x{}",
                    l.inputs, l.outputs
                )));
            }
            if l.weights.iter().chain(&l.biases).any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("layer {k}: non-finite parameter")));
            }
            if let Some(next) = self.layers.get(k + 1) {
                if next.inputs != l.outputs {
                    return Err(Error::Data(format!("layer {k} -> {}: width mismatch", k + 1)));
                }
            }
        }
        if self.layers.last().unwrap().outputs != 1 {
            return Err(Error::Data("final layer must have a single output".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if x.len() != self.input_dim() {
            return Err(Error::Contract(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut hidden = Vec::with_capacity(last);
        for layer in &self.layers[..last] {
            let input = hidden.last().map_or(x, |h: &Vec<f64>| h.as_slice());
            let mut z = layer.affine(input);
            z.iter_mut().for_each(|v| *v = v.max(0.0));
            hidden.push(z);
        }
        let input = hidden.last().map_or(x, |h| h.as_slice());
        let logit = self.layers[last].affine(input)[0];
        Ok(Forward {
            hidden,
            logit,
            probability: sigmoid(logit),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.probability)
    }

    pub fn loss(&self, x: &[f64], y: Label) -> Result<f64> {
        Ok(bce_loss(self.forward(x)?.probability, y))
    }

    /// Reverse pass. Adds parameter gradients into `grads` when given and
    /// returns dL/dx when `want_input` is set.
    fn backward(
        &self,
        x: &[f64],
        fwd: &Forward,
        y: Label,
        mut grads: Option<&mut [Layer]>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let mut delta = vec![logit_gradient(fwd.logit, y)];
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input: &[f64] = if l == 0 { x } else { &fwd.hidden[l - 1] };
            if let Some(g) = grads.as_deref_mut() {
                let g = &mut g[l];
                for (i, &a) in input.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let row = &mut g.weights[i * layer.outputs..(i + 1) * layer.outputs];
                    for (gw, d) in row.iter_mut().zip(&delta) {
                        *gw += a * d;
                    }
                }
                for (gb, d) in g.biases.iter_mut().zip(&delta) {
                    *gb += d;
                }
            }
            if l == 0 && !want_input {
                return None;
            }
            let prev: Vec<f64> = (0..layer.inputs)
                .map(|i| {
                    // ReLU: inactive units pass no gradient.
                    if l > 0 && input[i] <= 0.0 {
                        return 0.0;
                    }
                    layer.row(i).iter().zip(&delta).map(|(w, d)| w * d).sum()
                })
                .collect();
            delta = prev;
        }
        Some(delta)
    }

    /// Exact dL/dx of the clamped-free BCE loss at label `y`.
    pub fn input_gradient(&self, x: &[f64], y: Label) -> Result<Vec<f64>> {
        let fwd = self.forward(x)?;
        Ok(self.backward(x, &fwd, y, None, true).expect("input gradient requested"))
    }

    /// dL/dθ for every layer, shaped like the layers themselves.
    pub fn parameter_gradient(&self, x: &[f64], y: Label) -> Result<Vec<Layer>> {
        let fwd = self.forward(x)?;
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        self.backward(x, &fwd, y, Some(&mut grads), false);
        Ok(grads)
    }

    /// Runs forward and accumulates parameter gradients; returns the loss.
    pub(crate) fn accumulate(&self, x: &[f64], y: Label, grads: &mut [Layer]) -> Result<f64> {
        let fwd = self.forward(x)?;
        self.backward(x, &fwd, y, Some(grads), false);
        Ok(bce_loss(fwd.probability, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn linear(w: Vec<f64>) -> Network {
        Network {
            layers: vec![Layer {
                inputs: w.len(),
                outputs: 1,
                weights: w,
                biases: vec![0.0],
            }],
        }
    }

    #[test]
    fn zero_network_outputs_half() {
        let arch = Architecture::new(3, 2, vec![4, 3]).unwrap();
        let net = Network::zeros(&arch);
        for x in [[0.0; 6], [1.0, -2.0, 3.0, 4.0, 5.0, 6.0]] {
            assert_eq!(net.predict(&x).unwrap(), 0.5);
            assert!(net.input_gradient(&x, Label::Normal).unwrap().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn orthogonal_input_gives_half() {
        let net = linear(vec![1.0, -1.0]);
        assert_eq!(net.predict(&[2.0, 2.0]).unwrap(), 0.5);
    }

    #[test]
    fn positive_weight_is_monotone() {
        let net = linear(vec![0.7]);
        let mut last = 0.0;
        for k in -5..5 {
            let p = net.predict(&[k as f64]).unwrap();
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn linear_input_gradient_by_hand() {
        // (sigmoid(0) - 1) * w
        let g = linear(vec![1.0, -1.0])
            .input_gradient(&[0.0, 0.0], Label::Normal)
            .unwrap();
        assert_eq!(g, vec![-0.5, 0.5]);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let net = linear(vec![1.0, 2.0]);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, Label::Normal) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(0.9, Label::Compensatory) - std::f64::consts::LN_10).abs() < 1e-12);
        assert!(bce_loss(1.0, Label::Normal) < 1e-11);
        assert!(bce_loss(0.0, Label::Normal).is_finite());
        for p in [0.01, 0.3, 0.77] {
            assert!((bce_loss(p, Label::Normal) - bce_loss(1.0 - p, Label::Compensatory)).abs() < 1e-12);
        }
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        // Input 0 only feeds hidden unit 0, whose bias keeps it inactive.
        let net = Network {
            layers: vec![
                Layer {
                    inputs: 2,
                    outputs: 2,
                    weights: vec![1.0, 0.0, 0.0, 1.0],
                    biases: vec![-100.0, 0.5],
                },
                Layer {
                    inputs: 2,
                    outputs: 1,
                    weights: vec![1.0, 1.0],
                    biases: vec![0.0],
                },
            ],
        };
        let g = net.input_gradient(&[3.0, 1.0], Label::Compensatory).unwrap();
        assert_eq!(g[0], 0.0);
        assert!(g[1] > 0.0);
    }

    #[test]
    fn glorot_respects_limit() {
        let arch = Architecture::new(10, 2, vec![5]).unwrap();
        let net = Network::glorot(&arch, &mut seed::rng(1));
        let limit = (6.0f64 / 25.0).sqrt();
        assert!(net.layers[0].weights.iter().all(|w| w.abs() <= limit));
        assert!(net.layers[0].biases.iter().all(|&b| b == 0.0));
        net.validate().unwrap();
        assert_eq!(arch.parameter_count(), 21 * 5 + 6);
    }
}
