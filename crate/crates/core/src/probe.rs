//! Linear probing of layer representations: a fixed-recipe softmax probe per
//! (layer, variable) measures how much linearly separable information each
//! layer carries. The probe is a measurement instrument, so its training
//! schedule is pinned: zero init, full-batch gradient descent, 500 steps at
//! rate 0.1.

use crate::deep_infer::softmax;
use crate::error::ModelError;
use crate::rng::SeedStream;
use crate::scalar::Scalar;

pub const PROBE_STEPS: usize = 500;
pub const PROBE_RATE: f64 = 0.1;
pub const TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub layer_names: Vec<String>,
    pub variable_names: Vec<String>,
    /// accuracy[layer][variable], held-out.
    pub accuracy: Vec<Vec<f64>>,
}

/// Train a softmax probe on (x, y) and return held-out accuracy.
fn fit_and_score(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    test_x: &[Vec<f64>],
    test_y: &[usize],
    class_count: usize,
) -> f64 {
    let dim = train_x[0].len();
    let n = train_x.len() as f64;
    let mut weights = vec![0.0_f64; class_count * dim];
    let mut biases = vec![0.0_f64; class_count];
    for _ in 0..PROBE_STEPS {
        let mut grad_w = vec![0.0_f64; class_count * dim];
        let mut grad_b = vec![0.0_f64; class_count];
        for (x, y) in train_x.iter().zip(train_y.iter()) {
            let logits: Vec<f64> = (0..class_count)
                .map(|k| {
                    let mut acc = biases[k];
                    for (i, xi) in x.iter().enumerate() {
                        acc += weights[k * dim + i] * xi;
                    }
                    acc
                })
                .collect();
            let probs = softmax(&logits);
            for k in 0..class_count {
                let d = probs[k] - if k == *y { 1.0 } else { 0.0 };
                for (i, xi) in x.iter().enumerate() {
                    grad_w[k * dim + i] += d * xi;
                }
                grad_b[k] += d;
            }
        }
        for (w, g) in weights.iter_mut().zip(grad_w.iter()) {
            *w -= PROBE_RATE * g / n;
        }
        for (b, g) in biases.iter_mut().zip(grad_b.iter()) {
            *b -= PROBE_RATE * g / n;
        }
    }
    let mut correct = 0_usize;
    for (x, y) in test_x.iter().zip(test_y.iter()) {
        let mut best = f64::NEG_INFINITY;
        let mut pred = 0;
        for k in 0..class_count {
            let mut acc = biases[k];
            for (i, xi) in x.iter().enumerate() {
                acc += weights[k * dim + i] * xi;
            }
            if acc > best {
                best = acc;
                pred = k;
            }
        }
        if pred == *y {
            correct += 1;
        }
    }
    correct as f64 / test_x.len() as f64
}

/// Probe every layer representation against every target variable.
///
/// `layers` holds (name, per-sample feature vectors); `targets` holds
/// (name, per-sample integer values). The split is a seeded shuffle with the
/// first 70% training; the train split must contain at least two distinct
/// values of each target.
pub fn probe_layers<T: Scalar>(
    layers: &[(String, Vec<Vec<T>>)],
    targets: &[(String, Vec<usize>)],
    seed: u64,
) -> Result<ProbeReport, ModelError> {
    let n = targets
        .first()
        .map(|(_, t)| t.len())
        .ok_or_else(|| ModelError::BadArgument("need at least one target".into()))?;
    if n < 4 {
        return Err(ModelError::BadArgument("need at least 4 samples".into()));
    }
    for (name, reps) in layers {
        if reps.len() != n {
            return Err(ModelError::BadArgument(format!(
                "layer {name} has {} representations for {n} samples",
                reps.len()
            )));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SeedStream::new(seed);
    rng.shuffle(&mut order);
    let train_n = ((n as f64) * TRAIN_FRACTION).floor() as usize;
    let (train_idx, test_idx) = order.split_at(train_n.clamp(1, n - 1));

    let mut accuracy = Vec::with_capacity(layers.len());
    for (_, reps) in layers {
        let mut row = Vec::with_capacity(targets.len());
        for (tname, values) in targets {
            let class_count = values.iter().max().map_or(0, |m| m + 1);
            let train_y: Vec<usize> = train_idx.iter().map(|&i| values[i]).collect();
            let distinct: std::collections::BTreeSet<usize> = train_y.iter().cloned().collect();
            if distinct.len() < 2 {
                return Err(ModelError::BadArgument(format!(
                    "degenerate split: target {tname} has < 2 classes in the train split"
                )));
            }
            let train_x: Vec<Vec<f64>> = train_idx
                .iter()
                .map(|&i| reps[i].iter().map(|v| v.as_f64()).collect())
                .collect();
            let test_x: Vec<Vec<f64>> = test_idx
                .iter()
                .map(|&i| reps[i].iter().map(|v| v.as_f64()).collect())
                .collect();
            let test_y: Vec<usize> = test_idx.iter().map(|&i| values[i]).collect();
            row.push(fit_and_score(
                &train_x,
                &train_y,
                &test_x,
                &test_y,
                class_count,
            ));
        }
        accuracy.push(row);
    }
    Ok(ProbeReport {
        layer_names: layers.iter().map(|(n, _)| n.clone()).collect(),
        variable_names: targets.iter().map(|(n, _)| n.clone()).collect(),
        accuracy,
    })
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_representations_probe_perfectly() {
        let n = 40;
        let targets: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let reps: Vec<Vec<f64>> = targets
            .iter()
            .map(|&t| {
                let mut v = vec![0.0; 3];
                v[t] = 1.0;
                v
            })
            .collect();
        let report = probe_layers(
            &[("onehot".to_string(), reps)],
            &[("target".to_string(), targets)],
            0,
        )
        .unwrap();
        assert_eq!(report.accuracy[0][0], 1.0);
    }

    #[test]
    fn shuffled_labels_probe_at_chance() {
        let mut rng = SeedStream::new(9);
        let n = 300;
        let reps: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.normal(), rng.normal(), rng.normal()])
            .collect();
        let targets: Vec<usize> = (0..n).map(|_| rng.index(2)).collect();
        let report = probe_layers(
            &[("noise".to_string(), reps)],
            &[("shuffled".to_string(), targets)],
            1,
        )
        .unwrap();
        let acc = report.accuracy[0][0];
        // 3σ binomial band around chance on the held-out 30%
        let m = (n as f64 * (1.0 - TRAIN_FRACTION)).round();
        let sigma = (0.25 / m).sqrt();
        assert!((acc - 0.5).abs() < 3.0 * sigma + 0.05, "accuracy {acc}");
    }

    #[test]
    fn degenerate_split_is_rejected() {
        let reps = vec![vec![0.0]; 6];
        let targets = vec![0, 0, 0, 0, 0, 0];
        assert!(probe_layers(
            &[("x".to_string(), reps)],
            &[("t".to_string(), targets)],
            0
        )
        .is_err());
    }

    #[test]
    fn spearman_detects_monotone_trends() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[0.9, 0.5, 0.1]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 1.0, 1.0], &[0.3, 0.2, 0.1]), 0.0);
    }
}
