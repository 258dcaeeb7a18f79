//! Fine-to-coarse max-sum inference for the deep model. Each level applies
//! the Ψ-regularized pseudoinverse of every candidate transform and pools the
//! candidates per output unit; the result is the conv/ReLU-family network the
//! model induces.

use crate::deep::DeepRm;
use crate::error::ModelError;
use crate::image::Image;
use crate::linalg::{regularized_pinv, Matrix};
use crate::path::RenderingPath;
use crate::scalar::{dot, norm_sq, Scalar};

/// Per-level inference weights: W(g) = Λ(g)† and bias b(g) = −W(g)·α(g),
/// precomputed once so repeated classification shares the same float ops.
#[derive(Debug, Clone)]
pub struct LevelOperator<T> {
    pub weights: Vec<Matrix<T>>,
    pub biases: Vec<Vec<T>>,
}

/// Reusable fine-to-coarse inference engine for one model.
#[derive(Debug, Clone)]
pub struct DeepInference<'m, T> {
    model: &'m DeepRm<T>,
    operators: Vec<LevelOperator<T>>,
}

/// How candidates are pooled per output unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PoolKind {
    Max,
    Mean,
}

#[derive(Debug, Clone)]
pub struct F2cOutcome<T> {
    pub class_id: usize,
    /// ⟨μ(c)|I^L⟩ + ln π(c) per class.
    pub class_scores: Vec<T>,
    /// Per level (finest first), the winning nuisance per output unit.
    pub unit_winners: Vec<Vec<usize>>,
    /// Consensus path: per level the modal unit winner (ties lowest index).
    pub path: RenderingPath,
    /// Feature maps I^1 … I^L, finest first.
    pub feature_maps: Vec<Vec<T>>,
    /// Log joint of the consensus path under the collapsed Gaussian.
    pub path_log_joint: T,
    /// True when every unit at every level agreed on the same nuisance.
    pub consensus: bool,
}

impl<'m, T: Scalar> DeepInference<'m, T> {
    pub fn new(model: &'m DeepRm<T>) -> Self {
        let operators = model
            .levels()
            .iter()
            .map(|level| {
                let weights: Vec<Matrix<T>> = level
                    .transforms
                    .iter()
                    .map(|lambda| regularized_pinv(lambda, &level.noise_diag))
                    .collect();
                let biases = weights
                    .iter()
                    .zip(level.biases.iter())
                    .map(|(w, alpha)| w.matvec(alpha).iter().map(|v| -*v).collect())
                    .collect();
                LevelOperator { weights, biases }
            })
            .collect();
        Self { model, operators }
    }

    pub fn operators(&self) -> &[LevelOperator<T>] {
        &self.operators
    }

    fn check_image(&self, image: &Image<T>) -> Result<(), ModelError> {
        if image.dim() != self.model.pixel_dim() {
            return Err(ModelError::ShapeMismatch {
                context: "deep inference image",
                expected: self.model.pixel_dim(),
                got: image.dim(),
            });
        }
        Ok(())
    }

    /// One pooled level: candidate preactivations W(g)·x + b(g), pooled per
    /// output unit. Levels run finest (last stored level) to coarsest.
    fn pooled_level(
        &self,
        level_from_top: usize,
        input: &[T],
        kind: PoolKind,
    ) -> (Vec<T>, Vec<usize>) {
        let op = &self.operators[level_from_top];
        let candidates: Vec<Vec<T>> = op
            .weights
            .iter()
            .zip(op.biases.iter())
            .map(|(w, b)| {
                let mut v = w.matvec(input);
                for (vi, bi) in v.iter_mut().zip(b.iter()) {
                    *vi = *vi + *bi;
                }
                v
            })
            .collect();
        let units = candidates[0].len();
        let mut pooled = Vec::with_capacity(units);
        let mut winners = Vec::with_capacity(units);
        for u in 0..units {
            match kind {
                PoolKind::Max => {
                    let mut best = T::neg_infinity();
                    let mut best_g = 0;
                    for (g, cand) in candidates.iter().enumerate() {
                        if cand[u] > best {
                            best = cand[u];
                            best_g = g;
                        }
                    }
                    pooled.push(best);
                    winners.push(best_g);
                }
                PoolKind::Mean => {
                    let mut acc = T::zero();
                    for cand in &candidates {
                        acc = acc + cand[u];
                    }
                    pooled.push(acc / T::from_f64(candidates.len() as f64));
                    winners.push(0);
                }
            }
        }
        (pooled, winners)
    }

    /// Max-sum fine-to-coarse classification.
    pub fn infer_f2c(&self, image: &Image<T>) -> Result<F2cOutcome<T>, ModelError> {
        self.check_image(image)?;
        let level_count = self.model.level_count();
        let mut current = image.as_slice().to_vec();
        let mut feature_maps = Vec::with_capacity(level_count);
        let mut unit_winners = Vec::with_capacity(level_count);
        let mut consensus = true;
        // stored levels run top->bottom; inference visits them bottom->top
        for level_from_top in (0..level_count).rev() {
            let (pooled, winners) = self.pooled_level(level_from_top, &current, PoolKind::Max);
            consensus &= winners.iter().all(|w| *w == winners[0]);
            feature_maps.push(pooled.clone());
            unit_winners.push(winners);
            current = pooled;
        }

        let mut class_scores = Vec::with_capacity(self.model.class_count());
        for c in 0..self.model.class_count() {
            let s = dot(self.model.top_template(c), &current)
                + self.model.top_prior()[c].ln();
            class_scores.push(s);
        }
        let mut class_id = 0;
        let mut best = T::neg_infinity();
        for (c, s) in class_scores.iter().enumerate() {
            if *s > best {
                best = *s;
                class_id = c;
            }
        }

        // consensus path: modal winner per level, finest-first storage but the
        // path is reported top-level first
        let mut nuisance_ids: Vec<usize> = unit_winners
            .iter()
            .map(|winners| modal_winner(winners))
            .collect();
        nuisance_ids.reverse();
        let path = RenderingPath::new(class_id, nuisance_ids);
        let path_log_joint = self.path_log_joint(image.as_slice(), &path);

        Ok(F2cOutcome {
            class_id,
            class_scores,
            unit_winners,
            path,
            feature_maps,
            path_log_joint,
            consensus,
        })
    }

    /// Sum-product analog: mean pooling over candidates; evidence only.
    pub fn infer_f2c_meanpool(&self, image: &Image<T>) -> Result<Vec<T>, ModelError> {
        self.check_image(image)?;
        let level_count = self.model.level_count();
        let mut current = image.as_slice().to_vec();
        for level_from_top in (0..level_count).rev() {
            let (pooled, _) = self.pooled_level(level_from_top, &current, PoolKind::Mean);
            current = pooled;
        }
        Ok((0..self.model.class_count())
            .map(|c| {
                dot(self.model.top_template(c), &current) + self.model.top_prior()[c].ln()
            })
            .collect())
    }

    /// ln π(τ) + ln N(I; μ_τ, σ²1) via the natural-parameter expansion; the
    /// oracle computes the same number from the squared residual instead.
    pub fn path_log_joint(&self, pixels: &[T], path: &RenderingPath) -> T {
        let template = self.model.template_for_path(path);
        let var = self.model.pixel_noise();
        let d = T::from_f64(pixels.len() as f64);
        let two_pi = T::from_f64(std::f64::consts::TAU);
        self.model.log_path_prior(path) + dot(&template, pixels) / var
            - norm_sq(&template) / (T::two() * var)
            - norm_sq(pixels) / (T::two() * var)
            - d * T::half() * (two_pi * var).ln()
    }
}

fn modal_winner(winners: &[usize]) -> usize {
    let max = winners.iter().max().copied().unwrap_or(0);
    let mut counts = vec![0_usize; max + 1];
    for w in winners {
        counts[*w] += 1;
    }
    let mut best = 0;
    let mut best_count = 0;
    for (g, count) in counts.iter().enumerate() {
        if *count > best_count {
            best_count = *count;
            best = g;
        }
    }
    best
}

/// Batch-normalized activations: Γ·(x − mean)/std + β per coordinate, with
/// the batch std floored at 1e-8. Population statistics (1/N).
pub fn batchnorm_estep<T: Scalar>(
    batch: &[Vec<T>],
    gamma: &[T],
    beta: &[T],
) -> Result<Vec<Vec<T>>, ModelError> {
    if batch.len() < 2 {
        return Err(ModelError::BadArgument(
            "batch normalization needs batch size >= 2".into(),
        ));
    }
    let dim = batch[0].len();
    if batch.iter().any(|b| b.len() != dim) || gamma.len() != dim || beta.len() != dim {
        return Err(ModelError::ShapeMismatch {
            context: "batchnorm activations",
            expected: dim,
            got: gamma.len(),
        });
    }
    let n = T::from_f64(batch.len() as f64);
    let mut mean = vec![T::zero(); dim];
    for row in batch {
        for (m, x) in mean.iter_mut().zip(row.iter()) {
            *m = *m + *x;
        }
    }
    for m in mean.iter_mut() {
        *m = *m / n;
    }
    let mut std = vec![T::zero(); dim];
    for row in batch {
        for (s, (x, m)) in std.iter_mut().zip(row.iter().zip(mean.iter())) {
            let r = *x - *m;
            *s = *s + r * r;
        }
    }
    let floor = T::from_f64(1e-8);
    for s in std.iter_mut() {
        *s = (*s / n).sqrt().max(floor);
    }
    Ok(batch
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(i, x)| gamma[i] * (*x - mean[i]) / std[i] + beta[i])
                .collect()
        })
        .collect())
}

/// SoftMax regression head: φ(W·a + b).
pub fn softmax_head<T: Scalar>(
    activations: &[T],
    weights: &Matrix<T>,
    biases: &[T],
) -> Result<Vec<T>, ModelError> {
    if weights.cols() != activations.len() || weights.rows() != biases.len() {
        return Err(ModelError::ShapeMismatch {
            context: "softmax head",
            expected: weights.cols(),
            got: activations.len(),
        });
    }
    let mut logits = weights.matvec(activations);
    for (l, b) in logits.iter_mut().zip(biases.iter()) {
        *l = *l + *b;
    }
    Ok(softmax(&logits))
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let mut max = T::neg_infinity();
    for l in logits {
        if *l > max {
            max = *l;
        }
    }
    let exps: Vec<T> = logits.iter().map(|l| (*l - max).exp()).collect();
    let mut sum = T::zero();
    for e in &exps {
        sum = sum + *e;
    }
    exps.into_iter().map(|e| e / sum).collect()
}

/// A flat bank of per-(class, nuisance) templates with an image shape, the
/// common denominator of activity maximization across model kinds.
#[derive(Debug, Clone)]
pub struct TemplateBank<T> {
    pub class_count: usize,
    pub nuisance_count: usize,
    pub templates: Vec<T>, // (C, G, D)
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl<T: Scalar> TemplateBank<T> {
    pub fn from_shallow(
        model: &crate::shallow::ShallowRm<T>,
        shape: (usize, usize, usize),
    ) -> Result<Self, ModelError> {
        let (channels, height, width) = shape;
        if channels * height * width != model.dim() {
            return Err(ModelError::ShapeMismatch {
                context: "template bank shape",
                expected: model.dim(),
                got: channels * height * width,
            });
        }
        Ok(Self {
            class_count: model.class_count(),
            nuisance_count: model.nuisance_count(),
            templates: model.templates().to_vec(),
            channels,
            height,
            width,
        })
    }

    pub fn from_deep(
        model: &DeepRm<T>,
        shape: (usize, usize, usize),
        cap: u128,
    ) -> Result<Self, ModelError> {
        let shallow = model.collapse(cap)?;
        Self::from_shallow(&shallow, shape)
    }

    pub fn dim(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn template(&self, c: usize, g: usize) -> &[T] {
        let d = self.dim();
        let start = (c * self.nuisance_count + g) * d;
        &self.templates[start..start + d]
    }

    /// max_g ⟨μ(c, g) | I⟩, the class score activity maximization targets.
    pub fn class_score(&self, c: usize, pixels: &[T]) -> T {
        let mut best = T::neg_infinity();
        for g in 0..self.nuisance_count {
            let s = dot(self.template(c, g), pixels);
            if s > best {
                best = s;
            }
        }
        best
    }
}

/// Rectangular patch layout over the image plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchLayout {
    pub height: usize,
    pub width: usize,
    pub stride: usize,
}

impl PatchLayout {
    pub fn patches(&self, height: usize, width: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if self.height > height || self.width > width || self.stride == 0 {
            return out;
        }
        let mut y = 0;
        while y + self.height <= height {
            let mut x = 0;
            while x + self.width <= width {
                out.push((y, x));
                x += self.stride;
            }
            y += self.stride;
        }
        out
    }
}

/// Activity maximization: per patch, pick the nuisance whose template has the
/// largest restricted norm, place the unit-normalized restricted template in
/// the patch, and sum the patches.
pub fn activity_maximize<T: Scalar>(
    bank: &TemplateBank<T>,
    class_id: usize,
    layout: &PatchLayout,
) -> Result<Image<T>, ModelError> {
    if class_id >= bank.class_count {
        return Err(ModelError::BadArgument(format!(
            "unknown class {class_id} (bank has {})",
            bank.class_count
        )));
    }
    let patches = layout.patches(bank.height, bank.width);
    if patches.is_empty() {
        return Err(ModelError::BadArgument(
            "patch layout does not fit inside the image".into(),
        ));
    }
    let dim = bank.dim();
    let mut out = vec![T::zero(); dim];
    for &(py, px) in &patches {
        // indices of this patch across all channels
        let mut idx = Vec::with_capacity(bank.channels * layout.height * layout.width);
        for c in 0..bank.channels {
            for y in 0..layout.height {
                for x in 0..layout.width {
                    idx.push((c * bank.height + py + y) * bank.width + px + x);
                }
            }
        }
        let mut best_g = 0;
        let mut best_norm = T::neg_infinity();
        for g in 0..bank.nuisance_count {
            let t = bank.template(class_id, g);
            let mut sq = T::zero();
            for &i in &idx {
                sq = sq + t[i] * t[i];
            }
            let norm = sq.sqrt();
            if norm > best_norm {
                best_norm = norm;
                best_g = g;
            }
        }
        if best_norm > T::zero() {
            let t = bank.template(class_id, best_g);
            for &i in &idx {
                out[i] = out[i] + t[i] / best_norm;
            }
        }
    }
    Image::new(bank.channels, bank.height, bank.width, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep::{identity_level, DeepLevel, DeepRm};
    use crate::shallow::uniform_prior;

    fn selector_model() -> DeepRm<f64> {
        // two candidate transforms embedding a scalar into pixel 0 / pixel 1
        let level = DeepLevel {
            transforms: vec![
                Matrix::from_rows(2, 1, vec![1.0, 0.0]),
                Matrix::from_rows(2, 1, vec![0.0, 1.0]),
            ],
            biases: vec![vec![0.0, 0.0]; 2],
            noise_diag: vec![1e-9, 1e-9],
            prior: vec![0.5, 0.5],
        };
        DeepRm::new(vec![1.0_f64], vec![1.0], 1, vec![level], 1.0).unwrap()
    }

    #[test]
    fn selector_pools_the_larger_pixel() {
        let model = selector_model();
        let engine = DeepInference::new(&model);
        let image = Image::vector(vec![3.0, 5.0]).unwrap();
        let out = engine.infer_f2c(&image).unwrap();
        assert_eq!(out.path.nuisance_ids, vec![1]);
        assert!((out.feature_maps[0][0] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn meanpool_averages_candidates() {
        let model = selector_model();
        let engine = DeepInference::new(&model);
        let image = Image::vector(vec![3.0, 5.0]).unwrap();
        let _ = engine.infer_f2c_meanpool(&image).unwrap();
        // evidence = ⟨μ|I¹⟩ with μ = 1 and I¹ = mean(3, 5) = 4 (up to ψ)
        let scores = engine.infer_f2c_meanpool(&image).unwrap();
        assert!((scores[0] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn identity_model_passes_image_through() {
        let model = DeepRm::new(
            uniform_prior(2),
            vec![1.0_f64, 0.0, 0.0, 1.0],
            2,
            vec![identity_level(2, 1, 1e-9)],
            1.0,
        )
        .unwrap();
        let engine = DeepInference::new(&model);
        let image = Image::vector(vec![0.2, 0.9]).unwrap();
        let out = engine.infer_f2c(&image).unwrap();
        for (i, v) in out.feature_maps[0].iter().enumerate() {
            assert!((v - image.as_slice()[i]).abs() < 1e-6);
        }
        // nearest template by inner product
        assert_eq!(out.class_id, 1);
        let mean_scores = engine.infer_f2c_meanpool(&image).unwrap();
        for (a, b) in mean_scores.iter().zip(out.class_scores.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn meanpool_of_equal_candidates_is_either() {
        let level = DeepLevel {
            transforms: vec![Matrix::identity(2); 2],
            biases: vec![vec![0.0, 0.0]; 2],
            noise_diag: vec![1e-9, 1e-9],
            prior: vec![0.5, 0.5],
        };
        let model =
            DeepRm::new(vec![1.0_f64], vec![1.0, 1.0], 2, vec![level], 1.0).unwrap();
        let engine = DeepInference::new(&model);
        let image = Image::vector(vec![0.4, -0.3]).unwrap();
        let mean = engine.infer_f2c_meanpool(&image).unwrap();
        let max = engine.infer_f2c(&image).unwrap();
        assert!((mean[0] - max.class_scores[0]).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_examples() {
        let batch = vec![vec![1.0_f64], vec![3.0]];
        let out = batchnorm_estep(&batch, &[1.0], &[0.0]).unwrap();
        assert!((out[0][0] + 1.0).abs() < 1e-12);
        assert!((out[1][0] - 1.0).abs() < 1e-12);

        // Γ = σ_B, β = mean recovers the input
        let out = batchnorm_estep(&batch, &[1.0], &[2.0]).unwrap();
        assert!((out[0][0] - 1.0).abs() < 1e-12);
        assert!((out[1][0] - 3.0).abs() < 1e-12);

        // constant batch: floored std, zeros, no NaN
        let constant = vec![vec![2.0_f64], vec![2.0]];
        let out = batchnorm_estep(&constant, &[1.0], &[0.0]).unwrap();
        assert_eq!(out[0][0], 0.0);
        assert!(out[1][0].is_finite());

        assert!(batchnorm_estep(&vec![vec![1.0_f64]], &[1.0], &[0.0]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let w = Matrix::identity(2);
        let probs = softmax_head(&[0.0_f64, 0.0], &w, &[0.0, 0.0]).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-12);

        let probs = softmax_head(&[2.0_f64.ln(), 0.0], &w, &[0.0, 0.0]).unwrap();
        assert!((probs[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((probs[1] - 1.0 / 3.0).abs() < 1e-12);

        let shifted = softmax(&[5.0 + 2.0_f64.ln(), 5.0]);
        assert!((shifted[0] - 2.0 / 3.0).abs() < 1e-12);
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_patch_actmax_is_best_template_direction() {
        let model = crate::shallow::ShallowRm::new(
            uniform_prior(1),
            uniform_prior(2),
            vec![3.0_f64, 0.0, 0.0, 1.0],
            2,
            1.0,
        )
        .unwrap();
        let bank = TemplateBank::from_shallow(&model, (1, 1, 2)).unwrap();
        let layout = PatchLayout {
            height: 1,
            width: 2,
            stride: 1,
        };
        let img = activity_maximize(&bank, 0, &layout).unwrap();
        // template (3, 0) has the larger norm; unit-normalized
        assert!((img.as_slice()[0] - 1.0).abs() < 1e-12);
        assert_eq!(img.as_slice()[1], 0.0);
    }

    #[test]
    fn disjoint_patches_pick_their_own_nuisance() {
        // patch 1 favors g0, patch 2 favors g1
        let model = crate::shallow::ShallowRm::new(
            uniform_prior(1),
            uniform_prior(2),
            vec![2.0_f64, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0],
            4,
            1.0,
        )
        .unwrap();
        let bank = TemplateBank::from_shallow(&model, (1, 1, 4)).unwrap();
        let layout = PatchLayout {
            height: 1,
            width: 2,
            stride: 2,
        };
        let img = activity_maximize(&bank, 0, &layout).unwrap();
        assert!((img.as_slice()[0] - 1.0).abs() < 1e-12);
        assert!((img.as_slice()[3] - 1.0).abs() < 1e-12);
        assert_eq!(img.as_slice()[1], 0.0);
        assert_eq!(img.as_slice()[2], 0.0);

        // the combined image scores at least as high as any single-g template
        let pixels = img.as_slice();
        let combined = bank.class_score(0, pixels);
        for g in 0..2 {
            let t = bank.template(0, g).to_vec();
            let norm = crate::scalar::norm_sq(&t).sqrt();
            let unit: Vec<f64> = t.iter().map(|v| v / norm).collect();
            assert!(combined >= bank.class_score(0, &unit) - 1e-12);
        }
    }

    #[test]
    fn unknown_class_rejected() {
        let model = crate::shallow::ShallowRm::new(
            uniform_prior(1),
            uniform_prior(1),
            vec![1.0_f64],
            1,
            1.0,
        )
        .unwrap();
        let bank = TemplateBank::from_shallow(&model, (1, 1, 1)).unwrap();
        let layout = PatchLayout {
            height: 1,
            width: 1,
            stride: 1,
        };
        assert!(activity_maximize(&bank, 5, &layout).is_err());
    }
}
