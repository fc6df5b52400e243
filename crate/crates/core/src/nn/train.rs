use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Architecture, Layer, Network};
use crate::data::{FeatureTrial, Label};
use crate::error::{Error, Result};
use crate::seed::{self, Stage};

/// Mini-batch SGD-with-momentum settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop once the epoch loss has not improved for this many epochs.
    pub early_stop: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 200,
            batch_size: 16,
            seed: 42,
            early_stop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, train_len: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > train_len {
            return Err(Error::Config(format!(
                "batch_size {} must lie in 1..={train_len}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub config: TrainConfig,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
    /// Mean training loss per completed epoch.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub architecture: Architecture,
    pub network: Network,
    pub metadata: TrainingMetadata,
}

impl TrainedModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.network.predict(x)
    }

    pub fn input_gradient(&self, x: &[f64], y: Label) -> Result<Vec<f64>> {
        self.network.input_gradient(x, y)
    }
}

/// One labeled network input.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub input: &'a [f64],
    pub label: Label,
}

/// Trial-level training examples; frame labels are never consulted.
pub fn examples(trials: &[FeatureTrial]) -> Vec<Example<'_>> {
    trials
        .iter()
        .map(|t| Example {
            input: t.input(),
            label: t.trial_label,
        })
        .collect()
}

/// Fraction of examples whose thresholded prediction (`p >= 0.5` means normal) matches.
pub fn accuracy(network: &Network, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Contract("accuracy of an empty set".into()));
    }
    let mut hits = 0usize;
    for ex in data {
        let predicted = if network.predict(ex.input)? >= 0.5 {
            Label::Normal
        } else {
            Label::Compensatory
        };
        hits += usize::from(predicted == ex.label);
    }
    Ok(hits as f64 / data.len() as f64)
}

pub fn train(data: &[Example], architecture: &Architecture, config: &TrainConfig) -> Result<TrainedModel> {
    architecture.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    config.validate(data.len())?;
    if let Some(bad) = data.iter().position(|e| e.input.len() != architecture.input_dim()) {
        return Err(Error::Contract(format!(
            "example {bad} has {} inputs, architecture expects {}",
            data[bad].input.len(),
            architecture.input_dim()
        )));
    }

    let mut network = Network::glorot(architecture, &mut seed::rng(seed::derive(config.seed, Stage::Init)));
    let mut shuffle_rng = seed::rng(seed::derive(config.seed, Stage::Shuffle));
    let zeroed =
        |net: &Network| -> Vec<Layer> { net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect() };
    let mut grads = zeroed(&network);
    let mut velocity = zeroed(&network);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            for g in grads.iter_mut() {
                g.weights.iter_mut().for_each(|v| *v = 0.0);
                g.biases.iter_mut().for_each(|v| *v = 0.0);
            }
            let mut batch_loss = 0.0;
            for &i in chunk {
                batch_loss += network.accumulate(data[i].input, data[i].label, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numeric {
                    epoch,
                    batch,
                    message: format!("loss is {batch_loss}"),
                });
            }
            epoch_loss += batch_loss;
            let scale = 1.0 / chunk.len() as f64;
            for ((layer, g), v) in network.layers.iter_mut().zip(&grads).zip(velocity.iter_mut()) {
                let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
                let gs = g.weights.iter().chain(&g.biases);
                let vs = v.weights.iter_mut().chain(v.biases.iter_mut());
                for ((p, gv), vv) in params.zip(gs).zip(vs) {
                    *vv = config.momentum * *vv - config.learning_rate * gv * scale;
                    *p += *vv;
                }
            }
            if network
                .layers
                .iter()
                .any(|l| l.weights.iter().chain(&l.biases).any(|p| !p.is_finite()))
            {
                return Err(Error::Numeric {
                    epoch,
                    batch,
                    message: "parameters became non-finite".into(),
                });
            }
        }
        let mean = epoch_loss / data.len() as f64;
        loss_trace.push(mean);
        if let Some(patience) = config.early_stop {
            if mean < best {
                best = mean;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }

    let train_accuracy = accuracy(&network, data)?;
    Ok(TrainedModel {
        architecture: architecture.clone(),
        network,
        metadata: TrainingMetadata {
            seed: config.seed,
            config: config.clone(),
            train_accuracy,
            test_accuracy: None,
            loss_trace,
        },
    })
}
