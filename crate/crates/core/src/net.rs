//! Feedforward networks: linear layers with optional ReLU and group pooling,
//! topped by a softmax regression head. These are the discriminative
//! counterparts the rendering models export to.

use crate::deep_infer::softmax;
use crate::error::{ModelError, Violation};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Fully,
    Local,
    Convolutional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Max,
    Mean,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weights: Matrix<T>,
    pub biases: Vec<T>,
    pub connectivity: Connectivity,
    pub stride: usize,
    pub activation: Activation,
    pub pooling: Pooling,
    /// Row-index groups pooled into one output unit each; ignored (and empty)
    /// when pooling is None.
    pub pool_groups: Vec<Vec<usize>>,
}

impl<T: Scalar> Layer<T> {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        match self.pooling {
            Pooling::None => self.weights.rows(),
            _ => self.pool_groups.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead<T> {
    pub weights: Matrix<T>,
    pub biases: Vec<T>,
}

/// Interpretable grouping carried over from a relaxed generative model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetMeta {
    pub class_count: usize,
    pub nuisance_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardNet<T> {
    pub layers: Vec<Layer<T>>,
    pub head: SoftmaxHead<T>,
    pub meta: Option<NetMeta>,
}

/// Everything the forward pass computes, kept for backprop and probing.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub preacts: Vec<Vec<T>>,
    pub activated: Vec<Vec<T>>,
    /// Post-pooling representation of each layer.
    pub outputs: Vec<Vec<T>>,
    /// Winning row per pooled unit (max pooling; lowest index on ties).
    pub pool_winners: Vec<Vec<usize>>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> FeedforwardNet<T> {
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut dim = match self.layers.first() {
            Some(l) => l.in_dim(),
            None => self.head.weights.cols(),
        };
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.in_dim() != dim {
                out.push(Violation::new(
                    format!("layers[{i}].weights"),
                    "input dimension does not compose with previous layer",
                ));
            }
            if layer.stride < 1 {
                out.push(Violation::new(format!("layers[{i}].stride"), "must be >= 1"));
            }
            if layer.biases.len() != layer.weights.rows() {
                out.push(Violation::new(
                    format!("layers[{i}].biases"),
                    "one bias per row",
                ));
            }
            match layer.pooling {
                Pooling::None => {}
                _ => {
                    if layer.pool_groups.is_empty() {
                        out.push(Violation::new(
                            format!("layers[{i}].pool_groups"),
                            "pooling layers need groups",
                        ));
                    }
                    for group in &layer.pool_groups {
                        if group.is_empty() || group.iter().any(|r| *r >= layer.weights.rows()) {
                            out.push(Violation::new(
                                format!("layers[{i}].pool_groups"),
                                "groups must be non-empty row indices",
                            ));
                        }
                    }
                }
            }
            dim = layer.out_dim();
        }
        if self.head.weights.cols() != dim {
            out.push(Violation::new(
                "softmax_head.weights",
                "input dimension does not compose with last layer",
            ));
        }
        if self.head.biases.len() != self.head.weights.rows() {
            out.push(Violation::new("softmax_head.biases", "one bias per row"));
        }
        out
    }

    pub fn in_dim(&self) -> usize {
        self.layers
            .first()
            .map_or(self.head.weights.cols(), |l| l.in_dim())
    }

    pub fn label_count(&self) -> usize {
        self.head.weights.rows()
    }

    pub fn forward(&self, input: &[T]) -> Result<Forward<T>, ModelError> {
        if input.len() != self.in_dim() {
            return Err(ModelError::ShapeMismatch {
                context: "net input",
                expected: self.in_dim(),
                got: input.len(),
            });
        }
        let mut current = input.to_vec();
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut activated = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut pool_winners = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut pre = layer.weights.matvec(&current);
            for (p, b) in pre.iter_mut().zip(layer.biases.iter()) {
                *p = *p + *b;
            }
            let act: Vec<T> = match layer.activation {
                Activation::Relu => pre.iter().map(|v| crate::classify::relu(*v)).collect(),
                Activation::None => pre.clone(),
            };
            let (out, winners) = match layer.pooling {
                Pooling::None => (act.clone(), Vec::new()),
                Pooling::Max => {
                    let mut out = Vec::with_capacity(layer.pool_groups.len());
                    let mut winners = Vec::with_capacity(layer.pool_groups.len());
                    for group in &layer.pool_groups {
                        let mut best = T::neg_infinity();
                        let mut best_row = group[0];
                        for &r in group {
                            if act[r] > best {
                                best = act[r];
                                best_row = r;
                            }
                        }
                        out.push(best);
                        winners.push(best_row);
                    }
                    (out, winners)
                }
                Pooling::Mean => {
                    let mut out = Vec::with_capacity(layer.pool_groups.len());
                    for group in &layer.pool_groups {
                        let mut acc = T::zero();
                        for &r in group {
                            acc = acc + act[r];
                        }
                        out.push(acc / T::from_f64(group.len() as f64));
                    }
                    (out, Vec::new())
                }
            };
            preacts.push(pre);
            activated.push(act);
            outputs.push(out.clone());
            pool_winners.push(winners);
            current = out;
        }
        let mut logits = self.head.weights.matvec(&current);
        for (l, b) in logits.iter_mut().zip(self.head.biases.iter()) {
            *l = *l + *b;
        }
        let probs = softmax(&logits);
        Ok(Forward {
            preacts,
            activated,
            outputs,
            pool_winners,
            logits,
            probs,
        })
    }

    /// Scores feeding the head (the penultimate representation).
    pub fn class_scores(&self, input: &[T]) -> Result<Vec<T>, ModelError> {
        let fwd = self.forward(input)?;
        Ok(match fwd.outputs.last() {
            Some(out) => out.clone(),
            None => input.to_vec(),
        })
    }

    pub fn classify(&self, input: &[T]) -> Result<usize, ModelError> {
        let fwd = self.forward(input)?;
        let mut best = T::neg_infinity();
        let mut label = 0;
        for (i, p) in fwd.logits.iter().enumerate() {
            if *p > best {
                best = *p;
                label = i;
            }
        }
        Ok(label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_net() -> FeedforwardNet<f64> {
        FeedforwardNet {
            layers: vec![Layer {
                weights: Matrix::from_rows(4, 2, vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]),
                biases: vec![0.0; 4],
                connectivity: Connectivity::Fully,
                stride: 1,
                activation: Activation::None,
                pooling: Pooling::Max,
                pool_groups: vec![vec![0, 1], vec![2, 3]],
            }],
            head: SoftmaxHead {
                weights: Matrix::identity(2),
                biases: vec![0.0, 0.0],
            },
            meta: None,
        }
    }

    #[test]
    fn forward_pools_groups() {
        let net = tiny_net();
        let fwd = net.forward(&[0.3, 0.8]).unwrap();
        assert_eq!(fwd.outputs[0], vec![0.8, -0.3]);
        assert_eq!(fwd.pool_winners[0], vec![1, 2]);
        assert_eq!(net.classify(&[0.3, 0.8]).unwrap(), 0);
    }

    #[test]
    fn relu_clamps_preactivations() {
        let mut net = tiny_net();
        net.layers[0].activation = Activation::Relu;
        let fwd = net.forward(&[0.3, 0.8]).unwrap();
        assert_eq!(fwd.activated[0], vec![0.3, 0.8, 0.0, 0.0]);
    }

    #[test]
    fn validate_catches_composition_error() {
        let mut net = tiny_net();
        net.head.weights = Matrix::identity(3);
        net.head.biases = vec![0.0; 3];
        assert!(!net.validate().is_empty());
    }

    #[test]
    fn mean_pooling_averages() {
        let mut net = tiny_net();
        net.layers[0].pooling = Pooling::Mean;
        let fwd = net.forward(&[0.4, 0.8]).unwrap();
        assert!((fwd.outputs[0][0] - 0.6).abs() < 1e-15);
    }
}
