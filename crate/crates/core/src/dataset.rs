//! Synthetic dataset generation from any of the model families.
//!
//! Pixels are stored as float32 (the on-disk dtype); models and engines work
//! in their own scalar type and convert at the boundary. All randomness in a
//! generated dataset flows from the single seed, with a fixed draw order:
//! per sample the path first, then noise pixels row-major, then (for
//! evolutionary models) the label.

use crate::deep::DeepRm;
use crate::em::TrainingSet;
use crate::error::{ModelError, Violation};
use crate::evo::EvoDrm;
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::shallow::ShallowRm;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub images: Vec<f32>,
    pub labels: Option<Vec<i64>>,
    /// True rendering paths, (class, g^L … g^1) per sample, when generated.
    pub paths: Option<Vec<i64>>,
    pub path_len: usize,
    pub seed: u64,
    pub generator: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        if self.dim() == 0 {
            0
        } else {
            self.images.len() / self.dim()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.dim() == 0 || self.images.is_empty() {
            out.push(Violation::new("images", "must hold at least one sample"));
            return out;
        }
        if self.images.len() % self.dim() != 0 {
            out.push(Violation::new("images", "length must be N * C * H * W"));
        }
        if self.images.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new("images", "entries must be finite"));
        }
        let n = self.len();
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                out.push(Violation::new("labels", "one label per sample"));
            }
            if labels.iter().any(|l| *l < 0) {
                out.push(Violation::new("labels", "labels must be nonnegative"));
            }
        }
        if let Some(paths) = &self.paths {
            if self.path_len == 0 || paths.len() != n * self.path_len {
                out.push(Violation::new("paths", "shape must be (N, path_len)"));
            }
        }
        out
    }

    pub fn image<T: Scalar>(&self, n: usize) -> Vec<T> {
        let d = self.dim();
        self.images[n * d..(n + 1) * d]
            .iter()
            .map(|v| T::from_f64(*v as f64))
            .collect()
    }

    pub fn labels_usize(&self) -> Option<Vec<usize>> {
        self.labels
            .as_ref()
            .map(|ls| ls.iter().map(|l| *l as usize).collect())
    }

    /// Per-sample path entry: position 0 is the class, then top-down nuisances.
    pub fn path_entry(&self, n: usize, slot: usize) -> Option<i64> {
        self.paths
            .as_ref()
            .map(|p| p[n * self.path_len + slot])
    }

    pub fn to_training_set<T: Scalar>(&self, use_labels: bool) -> Result<TrainingSet<T>, ModelError> {
        let samples = (0..self.len()).map(|n| self.image::<T>(n)).collect();
        let labels = if use_labels {
            self.labels_usize()
        } else {
            None
        };
        TrainingSet::new(samples, labels)
    }
}

fn shape_or_flat(dim: usize, shape: Option<(usize, usize, usize)>) -> Result<(usize, usize, usize), ModelError> {
    match shape {
        Some((c, h, w)) => {
            if c * h * w != dim {
                return Err(ModelError::ShapeMismatch {
                    context: "dataset image shape",
                    expected: dim,
                    got: c * h * w,
                });
            }
            Ok((c, h, w))
        }
        None => Ok((1, 1, dim)),
    }
}

pub fn generate_shallow<T: Scalar>(
    model: &ShallowRm<T>,
    n: usize,
    seed: u64,
    with_noise: bool,
    shape: Option<(usize, usize, usize)>,
) -> Result<Dataset, ModelError> {
    if n == 0 {
        return Err(ModelError::EmptyDataset);
    }
    let (c, h, w) = shape_or_flat(model.dim(), shape)?;
    let mut rng = SeedStream::new(seed);
    let class_probs: Vec<f64> = model.class_prior().iter().map(|p| p.as_f64()).collect();
    let g_probs: Vec<f64> = model.nuisance_prior().iter().map(|p| p.as_f64()).collect();
    let sigma = model.noise_var().as_f64().sqrt();
    let mut images = Vec::with_capacity(n * model.dim());
    let mut labels = Vec::with_capacity(n);
    let mut paths = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let class = rng.categorical(&class_probs);
        let g = rng.categorical(&g_probs);
        for v in model.template(class, g) {
            let noise = if with_noise { sigma * rng.normal() } else { 0.0 };
            images.push((v.as_f64() + noise) as f32);
        }
        labels.push(class as i64);
        paths.push(class as i64);
        paths.push(g as i64);
    }
    Ok(Dataset {
        channels: c,
        height: h,
        width: w,
        images,
        labels: Some(labels),
        paths: Some(paths),
        path_len: 2,
        seed,
        generator: format!(
            "shallow(classes={}, nuisances={}, dim={}, noise={})",
            model.class_count(),
            model.nuisance_count(),
            model.dim(),
            with_noise
        ),
    })
}

pub fn generate_deep<T: Scalar>(
    model: &DeepRm<T>,
    n: usize,
    seed: u64,
    with_noise: bool,
    shape: Option<(usize, usize, usize)>,
) -> Result<Dataset, ModelError> {
    if n == 0 {
        return Err(ModelError::EmptyDataset);
    }
    let dim = model.pixel_dim();
    let (c, h, w) = shape_or_flat(dim, shape)?;
    let mut rng = SeedStream::new(seed);
    let path_len = 1 + model.level_count();
    let mut images = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let mut paths = Vec::with_capacity(n * path_len);
    for _ in 0..n {
        let sample = model.sample(None, with_noise, &mut rng);
        for v in &sample.image {
            images.push(v.as_f64() as f32);
        }
        labels.push(sample.path.class_id as i64);
        paths.push(sample.path.class_id as i64);
        for g in &sample.path.nuisance_ids {
            paths.push(*g as i64);
        }
    }
    Ok(Dataset {
        channels: c,
        height: h,
        width: w,
        images,
        labels: Some(labels),
        paths: Some(paths),
        path_len,
        seed,
        generator: format!(
            "deep(classes={}, levels={}, dim={}, noise={})",
            model.class_count(),
            model.level_count(),
            dim,
            with_noise
        ),
    })
}

pub fn generate_evo<T: Scalar>(
    model: &EvoDrm<T>,
    n: usize,
    seed: u64,
    with_noise: bool,
    shape: Option<(usize, usize, usize)>,
) -> Result<Dataset, ModelError> {
    if n == 0 {
        return Err(ModelError::EmptyDataset);
    }
    let (c, h, w) = shape_or_flat(model.dim(), shape)?;
    let mut rng = SeedStream::new(seed);
    let path_len = 1 + model.levels().len();
    let mut images = Vec::with_capacity(n * model.dim());
    let mut labels = Vec::with_capacity(n);
    let mut paths = Vec::with_capacity(n * path_len);
    for _ in 0..n {
        let (image, path) = model.sample(with_noise, &mut rng);
        for v in &image {
            images.push(v.as_f64() as f32);
        }
        labels.push(model.sample_label(&path, &mut rng) as i64);
        paths.push(path.class_id as i64);
        for g in &path.nuisance_ids {
            paths.push(*g as i64);
        }
    }
    Ok(Dataset {
        channels: c,
        height: h,
        width: w,
        images,
        labels: Some(labels),
        paths: Some(paths),
        path_len,
        seed,
        generator: format!(
            "evo(classes={}, levels={}, dim={}, noise={})",
            model.class_count(),
            model.levels().len(),
            model.dim(),
            with_noise
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shallow::uniform_prior;

    fn toy() -> ShallowRm<f64> {
        ShallowRm::new(
            uniform_prior(2),
            uniform_prior(2),
            vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0],
            2,
            0.25,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_samples_equal_templates() {
        let model = toy();
        let data = generate_shallow(&model, 50, 7, false, None).unwrap();
        for n in 0..data.len() {
            let c = data.path_entry(n, 0).unwrap() as usize;
            let g = data.path_entry(n, 1).unwrap() as usize;
            let image = data.image::<f64>(n);
            let template = model.template(c, g);
            for (a, b) in image.iter().zip(template.iter()) {
                assert_eq!(*a, (*b as f64 as f32) as f64);
            }
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let model = toy();
        let a = generate_shallow(&model, 100, 42, true, None).unwrap();
        let b = generate_shallow(&model, 100, 42, true, None).unwrap();
        assert_eq!(a, b);
        let c = generate_shallow(&model, 100, 43, true, None).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn path_frequencies_match_priors() {
        let model = ShallowRm::new(
            vec![0.25, 0.75],
            vec![0.5, 0.5],
            vec![0.0; 8],
            2,
            1.0,
        )
        .unwrap();
        let n = 10_000;
        let data = generate_shallow(&model, n, 3, true, None).unwrap();
        let mut count_c0 = 0;
        for i in 0..n {
            if data.path_entry(i, 0).unwrap() == 0 {
                count_c0 += 1;
            }
        }
        // 3σ multinomial bound around p = 0.25
        let p = 0.25;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let freq = count_c0 as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * sigma, "freq {freq}");
    }
}
