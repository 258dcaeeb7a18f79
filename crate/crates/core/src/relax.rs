//! Discriminative relaxation: export a generative model as a feedforward
//! network initialized at the natural parameters, then train it freely by
//! mini-batch gradient descent on the conditional negative log-likelihood.

use crate::deep::DeepRm;
use crate::deep_infer::DeepInference;
use crate::error::ModelError;
use crate::linalg::Matrix;
use crate::net::{
    Activation, Connectivity, FeedforwardNet, Layer, NetMeta, Pooling, SoftmaxHead,
};
use crate::rng::SeedStream;
use crate::scalar::{norm_sq, Scalar};
use crate::shallow::ShallowRm;

/// Head init mapping model classes to training labels; `None` is identity.
fn head_from_map<T: Scalar>(class_count: usize, map: Option<&[usize]>) -> SoftmaxHead<T> {
    let label_count = match map {
        Some(m) => m.iter().max().map_or(class_count, |mx| mx + 1),
        None => class_count,
    };
    let mut weights = Matrix::zeros(label_count, class_count);
    for c in 0..class_count {
        let label = map.map_or(c, |m| m[c]);
        weights.set(label, c, T::one());
    }
    SoftmaxHead {
        weights,
        biases: vec![T::zero(); label_count],
    }
}

/// Relax a shallow model: one fully connected layer with a filter row per
/// (c, g) cell, max-pooled per class, identity-initialized softmax head.
/// The pooled scores equal max-sum classification scores exactly.
pub fn relax_shallow<T: Scalar>(
    model: &ShallowRm<T>,
    head_map: Option<&[usize]>,
) -> FeedforwardNet<T> {
    let nat = model.to_natural();
    let c_count = model.class_count();
    let g_count = model.nuisance_count();
    let dim = model.dim();
    let mut weights = Vec::with_capacity(c_count * g_count * dim);
    let mut biases = Vec::with_capacity(c_count * g_count);
    for c in 0..c_count {
        for g in 0..g_count {
            weights.extend_from_slice(nat.weight(c, g));
            biases.push(nat.bias(c, g));
        }
    }
    let pool_groups = (0..c_count)
        .map(|c| (c * g_count..(c + 1) * g_count).collect())
        .collect();
    FeedforwardNet {
        layers: vec![Layer {
            weights: Matrix::from_rows(c_count * g_count, dim, weights),
            biases,
            connectivity: Connectivity::Fully,
            stride: 1,
            activation: Activation::None,
            pooling: Pooling::Max,
            pool_groups,
        }],
        head: head_from_map(c_count, head_map),
        meta: Some(NetMeta {
            class_count: c_count,
            nuisance_count: g_count,
        }),
    }
}

/// Switching-form relaxation: ReLU over u = ⟨w|I⟩ − ‖μ‖²/(2σ²) + ln(p/(1−p)),
/// max-pooled per class, class log-priors added by the final linear layer.
/// Only defined for a uniform nuisance prior (the ReLU shortcut's condition).
pub fn relax_shallow_switching<T: Scalar>(
    model: &ShallowRm<T>,
    switch_prior: T,
    head_map: Option<&[usize]>,
) -> Result<FeedforwardNet<T>, ModelError> {
    if !(switch_prior > T::zero()) || !(switch_prior < T::one()) {
        return Err(ModelError::BadArgument(
            "switch prior must lie strictly inside (0, 1)".into(),
        ));
    }
    let g_count = model.nuisance_count();
    let uniform = T::one() / T::from_f64(g_count as f64);
    if model
        .nuisance_prior()
        .iter()
        .any(|p| (*p - uniform).abs().as_f64() > 1e-12)
    {
        return Err(ModelError::BadArgument(
            "switching relaxation requires a uniform nuisance prior".into(),
        ));
    }
    let c_count = model.class_count();
    let dim = model.dim();
    let log_odds = (switch_prior / (T::one() - switch_prior)).ln();
    let two_var = T::two() * model.noise_var();
    let mut weights = Vec::with_capacity(c_count * g_count * dim);
    let mut biases = Vec::with_capacity(c_count * g_count);
    for c in 0..c_count {
        for g in 0..g_count {
            let mu = model.template(c, g);
            for v in mu {
                weights.push(*v / model.noise_var());
            }
            biases.push(-norm_sq(mu) / two_var + log_odds);
        }
    }
    let pool_groups = (0..c_count)
        .map(|c| (c * g_count..(c + 1) * g_count).collect())
        .collect();
    let mut class_layer_bias = Vec::with_capacity(c_count);
    for c in 0..c_count {
        class_layer_bias.push(model.class_prior()[c].ln() + uniform.ln());
    }
    Ok(FeedforwardNet {
        layers: vec![
            Layer {
                weights: Matrix::from_rows(c_count * g_count, dim, weights),
                biases,
                connectivity: Connectivity::Fully,
                stride: 1,
                activation: Activation::Relu,
                pooling: Pooling::Max,
                pool_groups,
            },
            Layer {
                weights: Matrix::identity(c_count),
                biases: class_layer_bias,
                connectivity: Connectivity::Fully,
                stride: 1,
                activation: Activation::None,
                pooling: Pooling::None,
                pool_groups: Vec::new(),
            },
        ],
        head: head_from_map(c_count, head_map),
        meta: Some(NetMeta {
            class_count: c_count,
            nuisance_count: g_count,
        }),
    })
}

/// Relax a deep model: one layer per rendering level (finest first) holding
/// the rows of every candidate W(g) = Λ(g)†, max-pooled per output unit, then
/// a class layer of top templates with log-prior biases. Initial forward
/// passes reproduce fine-to-coarse inference float for float.
pub fn relax_deep<T: Scalar>(model: &DeepRm<T>, head_map: Option<&[usize]>) -> FeedforwardNet<T> {
    let engine = DeepInference::new(model);
    let mut layers = Vec::with_capacity(model.level_count() + 1);
    for i in (0..model.level_count()).rev() {
        let op = &engine.operators()[i];
        let g_count = op.weights.len();
        let out_units = op.weights[0].rows();
        let in_dim = op.weights[0].cols();
        let mut weights = Vec::with_capacity(g_count * out_units * in_dim);
        let mut biases = Vec::with_capacity(g_count * out_units);
        for g in 0..g_count {
            for u in 0..out_units {
                weights.extend_from_slice(op.weights[g].row(u));
                biases.push(op.biases[g][u]);
            }
        }
        // pool unit u over rows (g, u) for all g, candidate order preserved
        let pool_groups = (0..out_units)
            .map(|u| (0..g_count).map(|g| g * out_units + u).collect())
            .collect();
        layers.push(Layer {
            weights: Matrix::from_rows(g_count * out_units, in_dim, weights),
            biases,
            connectivity: Connectivity::Fully,
            stride: 1,
            activation: Activation::None,
            pooling: Pooling::Max,
            pool_groups,
        });
    }
    let c_count = model.class_count();
    let mut class_weights = Vec::with_capacity(c_count * model.top_dim());
    let mut class_biases = Vec::with_capacity(c_count);
    for c in 0..c_count {
        class_weights.extend_from_slice(model.top_template(c));
        class_biases.push(model.top_prior()[c].ln());
    }
    layers.push(Layer {
        weights: Matrix::from_rows(c_count, model.top_dim(), class_weights),
        biases: class_biases,
        connectivity: Connectivity::Fully,
        stride: 1,
        activation: Activation::None,
        pooling: Pooling::None,
        pool_groups: Vec::new(),
    });
    FeedforwardNet {
        layers,
        head: head_from_map(c_count, head_map),
        meta: Some(NetMeta {
            class_count: c_count,
            nuisance_count: 0,
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > T::zero()) {
            return Err(ModelError::BadArgument("learning_rate must be > 0".into()));
        }
        if self.batch_size < 1 {
            return Err(ModelError::BadArgument("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Parameter gradients, laid out exactly like the network parameters.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub layer_weights: Vec<Matrix<T>>,
    pub layer_biases: Vec<Vec<T>>,
    pub head_weights: Matrix<T>,
    pub head_biases: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    fn zeros(net: &FeedforwardNet<T>) -> Self {
        Self {
            layer_weights: net
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
            layer_biases: net
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.biases.len()])
                .collect(),
            head_weights: Matrix::zeros(net.head.weights.rows(), net.head.weights.cols()),
            head_biases: vec![T::zero(); net.head.biases.len()],
        }
    }

    fn scale(&mut self, s: T) {
        for w in &mut self.layer_weights {
            *w = w.scale(s);
        }
        for b in &mut self.layer_biases {
            for v in b.iter_mut() {
                *v = *v * s;
            }
        }
        self.head_weights = self.head_weights.scale(s);
        for v in self.head_biases.iter_mut() {
            *v = *v * s;
        }
    }
}

/// Conditional NLL of one sample and parameter gradients, accumulated into
/// `grads`. Pool gradients route to the argmax row (lowest index on ties);
/// ReLU has zero subgradient at the kink.
pub fn accumulate_gradients<T: Scalar>(
    net: &FeedforwardNet<T>,
    input: &[T],
    label: usize,
    grads: &mut Gradients<T>,
) -> Result<T, ModelError> {
    let fwd = net.forward(input)?;
    let loss = -fwd.probs[label].ln();

    // dL/dlogit = p − onehot
    let mut dlogits = fwd.probs.clone();
    dlogits[label] = dlogits[label] - T::one();

    let last_output: &[T] = match fwd.outputs.last() {
        Some(out) => out,
        None => input,
    };
    for (r, d) in dlogits.iter().enumerate() {
        for c in 0..net.head.weights.cols() {
            grads
                .head_weights
                .set(r, c, grads.head_weights.get(r, c) + *d * last_output[c]);
        }
        grads.head_biases[r] = grads.head_biases[r] + *d;
    }
    let mut dcurrent: Vec<T> = (0..net.head.weights.cols())
        .map(|c| {
            let mut acc = T::zero();
            for (r, d) in dlogits.iter().enumerate() {
                acc = acc + net.head.weights.get(r, c) * *d;
            }
            acc
        })
        .collect();

    for (i, layer) in net.layers.iter().enumerate().rev() {
        // pooling backward
        let mut dact = vec![T::zero(); layer.weights.rows()];
        match layer.pooling {
            Pooling::None => dact.copy_from_slice(&dcurrent),
            Pooling::Max => {
                for (u, group) in layer.pool_groups.iter().enumerate() {
                    let _ = group;
                    let winner = fwd.pool_winners[i][u];
                    dact[winner] = dact[winner] + dcurrent[u];
                }
            }
            Pooling::Mean => {
                for (u, group) in layer.pool_groups.iter().enumerate() {
                    let share = dcurrent[u] / T::from_f64(group.len() as f64);
                    for &r in group {
                        dact[r] = dact[r] + share;
                    }
                }
            }
        }
        // activation backward
        let dpre: Vec<T> = match layer.activation {
            Activation::Relu => dact
                .iter()
                .zip(fwd.preacts[i].iter())
                .map(|(d, p)| if *p > T::zero() { *d } else { T::zero() })
                .collect(),
            Activation::None => dact,
        };
        // linear backward
        let layer_input: &[T] = if i == 0 { input } else { &fwd.outputs[i - 1] };
        let gw = &mut grads.layer_weights[i];
        for (r, d) in dpre.iter().enumerate() {
            if *d == T::zero() {
                continue;
            }
            for c in 0..layer.weights.cols() {
                let old = gw.get(r, c);
                gw.set(r, c, old + *d * layer_input[c]);
            }
            grads.layer_biases[i][r] = grads.layer_biases[i][r] + *d;
        }
        dcurrent = (0..layer.weights.cols())
            .map(|c| {
                let mut acc = T::zero();
                for (r, d) in dpre.iter().enumerate() {
                    if *d != T::zero() {
                        acc = acc + layer.weights.get(r, c) * *d;
                    }
                }
                acc
            })
            .collect();
    }
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct SgdRun<T> {
    pub net: FeedforwardNet<T>,
    /// Mean conditional NLL per epoch (running loss over that epoch's batches).
    pub loss_trace: Vec<T>,
}

/// Plain mini-batch SGD on the conditional NLL. Batches come from a seeded
/// per-epoch shuffle; gradient accumulation is sample-major, so a given seed
/// and config reproduce the final parameters bitwise.
pub fn sgd_train<T: Scalar>(
    net: &FeedforwardNet<T>,
    samples: &[Vec<T>],
    labels: &[usize],
    cfg: &TrainConfig<T>,
) -> Result<SgdRun<T>, ModelError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if samples.len() != labels.len() {
        return Err(ModelError::BadArgument(
            "label count must match sample count".into(),
        ));
    }
    let label_count = net.label_count();
    if labels.iter().any(|l| *l >= label_count) {
        return Err(ModelError::BadArgument(
            "label outside the head's range".into(),
        ));
    }

    let mut net = net.clone();
    let mut rng = SeedStream::new(cfg.seed);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let n = samples.len();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let mut epoch_loss = T::zero();
        let mut seen = 0_usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros(&net);
            let mut batch_loss = T::zero();
            for &idx in batch {
                batch_loss =
                    batch_loss + accumulate_gradients(&net, &samples[idx], labels[idx], &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch });
            }
            epoch_loss = epoch_loss + batch_loss;
            seen += batch.len();
            let inv = T::one() / T::from_f64(batch.len() as f64);
            grads.scale(inv);
            apply_update(&mut net, &grads, cfg.learning_rate);
        }
        let _ = seen;
        loss_trace.push(epoch_loss / T::from_f64(n as f64));
    }
    Ok(SgdRun { net, loss_trace })
}

fn apply_update<T: Scalar>(net: &mut FeedforwardNet<T>, grads: &Gradients<T>, lr: T) {
    for (layer, (dw, db)) in net
        .layers
        .iter_mut()
        .zip(grads.layer_weights.iter().zip(grads.layer_biases.iter()))
    {
        for r in 0..layer.weights.rows() {
            for c in 0..layer.weights.cols() {
                layer
                    .weights
                    .set(r, c, layer.weights.get(r, c) - lr * dw.get(r, c));
            }
        }
        for (b, d) in layer.biases.iter_mut().zip(db.iter()) {
            *b = *b - lr * *d;
        }
    }
    for r in 0..net.head.weights.rows() {
        for c in 0..net.head.weights.cols() {
            net.head
                .weights
                .set(r, c, net.head.weights.get(r, c) - lr * grads.head_weights.get(r, c));
        }
    }
    for (b, d) in net.head.biases.iter_mut().zip(grads.head_biases.iter()) {
        *b = *b - lr * *d;
    }
}

/// Mean conditional NLL over a dataset with the current parameters.
pub fn mean_nll<T: Scalar>(
    net: &FeedforwardNet<T>,
    samples: &[Vec<T>],
    labels: &[usize],
) -> Result<T, ModelError> {
    let mut acc = T::zero();
    for (s, l) in samples.iter().zip(labels.iter()) {
        let fwd = net.forward(s)?;
        acc = acc - fwd.probs[*l].ln();
    }
    Ok(acc / T::from_f64(samples.len() as f64))
}
