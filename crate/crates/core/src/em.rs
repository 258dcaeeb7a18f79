//! Hard expectation-maximization for the shallow rendering model, plus the
//! masked (dropout) variant that trains on Bernoulli-masked ensembles.

use crate::error::ModelError;
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::shallow::ShallowRm;

pub const VARIANCE_FLOOR: f64 = 1e-8;
pub const EMPTY_CELL_PRIOR: f64 = 1e-12;

/// Training samples as flat pixel vectors with optional class labels.
/// Labels, when present, clamp the class during the E-step.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    samples: Vec<Vec<T>>,
    labels: Option<Vec<usize>>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(samples: Vec<Vec<T>>, labels: Option<Vec<usize>>) -> Result<Self, ModelError> {
        if samples.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let dim = samples[0].len();
        if dim == 0 || samples.iter().any(|s| s.len() != dim) {
            return Err(ModelError::BadArgument(
                "all samples must share a nonzero dimension".into(),
            ));
        }
        if let Some(labels) = &labels {
            if labels.len() != samples.len() {
                return Err(ModelError::BadArgument(
                    "label count must match sample count".into(),
                ));
            }
        }
        Ok(Self { samples, labels })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn sample(&self, n: usize) -> &[T] {
        &self.samples[n]
    }

    pub fn samples(&self) -> &[Vec<T>] {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }
}

/// Hard-assignment responsibilities: one (c*, g*) per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Responsibilities {
    pub assignments: Vec<(usize, usize)>,
}

impl Responsibilities {
    /// γ_ncg as a 0/1 indicator.
    pub fn indicator(&self, n: usize, c: usize, g: usize) -> u8 {
        u8::from(self.assignments[n] == (c, g))
    }
}

#[derive(Debug, Clone)]
pub struct EmRun<T> {
    pub model: ShallowRm<T>,
    /// Complete-data log-likelihood after each M-step.
    pub loglik: Vec<T>,
    pub responsibilities: Responsibilities,
    /// Model snapshot after every iteration (for trajectory comparisons).
    pub per_iter_models: Vec<ShallowRm<T>>,
}

fn hard_assign<T: Scalar>(
    model: &ShallowRm<T>,
    data: &TrainingSet<T>,
) -> Vec<(usize, usize)> {
    let nat = model.to_natural();
    let mut out = Vec::with_capacity(data.len());
    for n in 0..data.len() {
        let pixels = data.sample(n);
        let classes: Vec<usize> = match data.labels() {
            Some(labels) => vec![labels[n]],
            None => (0..model.class_count()).collect(),
        };
        let mut best = T::neg_infinity();
        let mut best_cg = (classes[0], 0);
        for &c in &classes {
            for g in 0..model.nuisance_count() {
                let s = nat.score(c, g, pixels);
                if s > best {
                    best = s;
                    best_cg = (c, g);
                }
            }
        }
        out.push(best_cg);
    }
    out
}

/// Σ_n ln π_c π_g + ln N(I_n; μ_cg, σ²1) at the given hard assignments.
pub fn complete_data_loglik<T: Scalar>(
    model: &ShallowRm<T>,
    data: &TrainingSet<T>,
    assignments: &[(usize, usize)],
) -> T {
    let two_pi = T::from_f64(std::f64::consts::TAU);
    let d = T::from_f64(data.dim() as f64);
    let var = model.noise_var();
    let norm = -d * T::half() * (two_pi * var).ln();
    let mut acc = T::zero();
    for (n, &(c, g)) in assignments.iter().enumerate() {
        let mu = model.template(c, g);
        let mut ss = T::zero();
        for (x, m) in data.sample(n).iter().zip(mu.iter()) {
            let r = *x - *m;
            ss = ss + r * r;
        }
        acc = acc + model.log_prior(c, g) - ss / (T::two() * var) + norm;
    }
    acc
}

fn renormalize_with_floor<T: Scalar>(counts: &[T], total: T) -> Vec<T> {
    let eps = T::from_f64(EMPTY_CELL_PRIOR);
    let raw: Vec<T> = counts
        .iter()
        .map(|c| {
            if *c > T::zero() {
                *c / total
            } else {
                eps
            }
        })
        .collect();
    let mut sum = T::zero();
    for p in &raw {
        sum = sum + *p;
    }
    raw.into_iter().map(|p| p / sum).collect()
}

struct MStepOutput<T> {
    model: ShallowRm<T>,
}

/// M-step: cell counts, cell means, pooled per-pixel variance. Empty cells
/// keep the previous template and receive the ε prior before renormalizing.
/// Accumulation is sample-major then pixel row-major, so results are
/// bit-reproducible.
fn m_step<T: Scalar>(
    previous: &ShallowRm<T>,
    data: &TrainingSet<T>,
    assignments: &[(usize, usize)],
) -> MStepOutput<T> {
    let c_count = previous.class_count();
    let g_count = previous.nuisance_count();
    let dim = previous.dim();
    let cells = c_count * g_count;

    let mut counts = vec![0_usize; cells];
    let mut sums = vec![T::zero(); cells * dim];
    for (n, &(c, g)) in assignments.iter().enumerate() {
        let cell = c * g_count + g;
        counts[cell] += 1;
        let base = cell * dim;
        for (i, x) in data.sample(n).iter().enumerate() {
            sums[base + i] = sums[base + i] + *x;
        }
    }

    let mut templates = Vec::with_capacity(cells * dim);
    for c in 0..c_count {
        for g in 0..g_count {
            let cell = c * g_count + g;
            if counts[cell] == 0 {
                templates.extend_from_slice(previous.template(c, g));
            } else {
                let count = T::from_f64(counts[cell] as f64);
                let base = cell * dim;
                templates.extend((0..dim).map(|i| sums[base + i] / count));
            }
        }
    }

    let mut resid = T::zero();
    for (n, &(c, g)) in assignments.iter().enumerate() {
        let base = (c * g_count + g) * dim;
        for (i, x) in data.sample(n).iter().enumerate() {
            let r = *x - templates[base + i];
            resid = resid + r * r;
        }
    }
    let denom = T::from_f64((data.len() * dim) as f64);
    let variance = (resid / denom).max(T::from_f64(VARIANCE_FLOOR));

    let mut class_counts = vec![T::zero(); c_count];
    let mut nuisance_counts = vec![T::zero(); g_count];
    for &(c, g) in assignments {
        class_counts[c] = class_counts[c] + T::one();
        nuisance_counts[g] = nuisance_counts[g] + T::one();
    }
    let total = T::from_f64(data.len() as f64);
    let class_prior = renormalize_with_floor(&class_counts, total);
    let nuisance_prior = renormalize_with_floor(&nuisance_counts, total);

    let model = ShallowRm::new(class_prior, nuisance_prior, templates, dim, variance)
        .expect("M-step parameters satisfy the invariants");
    MStepOutput { model }
}

/// Hard EM: alternate nearest-configuration assignment and the closed-form
/// parameter updates. The returned trace is evaluated after each M-step at
/// that iteration's assignments and is non-decreasing.
pub fn em_train<T: Scalar>(
    data: &TrainingSet<T>,
    init: &ShallowRm<T>,
    iters: usize,
) -> Result<EmRun<T>, ModelError> {
    if iters == 0 {
        return Err(ModelError::BadArgument("iters must be >= 1".into()));
    }
    if data.dim() != init.dim() {
        return Err(ModelError::ShapeMismatch {
            context: "em samples",
            expected: init.dim(),
            got: data.dim(),
        });
    }
    if let Some(labels) = data.labels() {
        if labels.iter().any(|l| *l >= init.class_count()) {
            return Err(ModelError::BadArgument(
                "label outside the model's class range".into(),
            ));
        }
    }

    let mut model = init.clone();
    let mut loglik = Vec::with_capacity(iters);
    let mut per_iter_models = Vec::with_capacity(iters);
    let mut assignments = Vec::new();
    for _ in 0..iters {
        assignments = hard_assign(&model, data);
        let m = m_step(&model, data, &assignments);
        model = m.model;
        loglik.push(complete_data_loglik(&model, data, &assignments));
        per_iter_models.push(model.clone());
    }
    Ok(EmRun {
        model,
        loglik,
        responsibilities: Responsibilities { assignments },
        per_iter_models,
    })
}

/// Random initialization: templates seeded by sampling distinct data points
/// (per class when labels exist), uniform priors, pooled data variance.
pub fn init_from_data<T: Scalar>(
    data: &TrainingSet<T>,
    class_count: usize,
    nuisance_count: usize,
    rng: &mut SeedStream,
) -> Result<ShallowRm<T>, ModelError> {
    let dim = data.dim();
    let cells = class_count * nuisance_count;
    let mut templates = Vec::with_capacity(cells * dim);
    match data.labels() {
        Some(labels) if class_count > 1 => {
            for c in 0..class_count {
                let members: Vec<usize> = (0..data.len()).filter(|n| labels[*n] == c).collect();
                if members.len() >= nuisance_count {
                    let picks = rng.distinct_indices(nuisance_count, members.len());
                    for p in picks {
                        templates.extend_from_slice(data.sample(members[p]));
                    }
                } else {
                    // too few labeled samples: fall back to global draws
                    let picks = rng.distinct_indices(nuisance_count.min(data.len()), data.len());
                    for i in 0..nuisance_count {
                        templates.extend_from_slice(data.sample(picks[i % picks.len()]));
                    }
                }
            }
        }
        _ => {
            let picks = rng.distinct_indices(cells.min(data.len()), data.len());
            for i in 0..cells {
                templates.extend_from_slice(data.sample(picks[i % picks.len()]));
            }
        }
    }

    let n = data.len();
    let mut mean = vec![T::zero(); dim];
    for s in data.samples() {
        for (m, x) in mean.iter_mut().zip(s.iter()) {
            *m = *m + *x;
        }
    }
    let inv_n = T::one() / T::from_f64(n as f64);
    for m in mean.iter_mut() {
        *m = *m * inv_n;
    }
    let mut var = T::zero();
    for s in data.samples() {
        for (m, x) in mean.iter().zip(s.iter()) {
            let r = *x - *m;
            var = var + r * r;
        }
    }
    let variance = (var / T::from_f64((n * dim) as f64)).max(T::from_f64(VARIANCE_FLOOR));

    ShallowRm::new(
        crate::shallow::uniform_prior(class_count),
        crate::shallow::uniform_prior(nuisance_count),
        templates,
        dim,
        variance,
    )
}

/// Masking granularity for dropout training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// Each pixel of each sample kept or dropped independently (default).
    PerPixel,
    /// Whole samples kept or dropped.
    PerSample,
}

/// Keep-masks for one ensemble member: `keep[n]` has one flag per pixel in
/// per-pixel mode and exactly one flag in per-sample mode.
pub type Mask = Vec<Vec<bool>>;

/// Masked sufficient statistics accumulated over one iteration's ensemble.
#[derive(Debug, Clone)]
pub struct MaskedStats<T> {
    /// Kept-pixel counts per (c, g, pixel), flattened (C, G, D).
    pub pixel_counts: Vec<u64>,
    /// Kept-pixel value sums per (c, g, pixel), flattened (C, G, D).
    pub pixel_sums: Vec<T>,
    /// Assigned-sample count per (c, g) over all masks, flattened (C, G).
    pub cell_counts: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct DropoutIterLog<T> {
    pub masks: Vec<Mask>,
    /// Hard assignments per ensemble member, one (c, g) per sample.
    pub assignments: Vec<Vec<(usize, usize)>>,
    pub stats: MaskedStats<T>,
}

#[derive(Debug, Clone)]
pub struct DropoutEmRun<T> {
    pub model: ShallowRm<T>,
    pub loglik: Vec<T>,
    pub per_iter_models: Vec<ShallowRm<T>>,
    pub iter_logs: Vec<DropoutIterLog<T>>,
}

/// Dropout EM: each iteration draws `masks_per_epoch` Bernoulli keep-masks,
/// hard-assigns each sample using only its kept entries (the masked template
/// norm enters the bias), and M-steps on the ensemble-averaged masked
/// statistics. With `drop_prob` 0 and one mask this reproduces [`em_train`]
/// bit for bit.
pub fn dropout_em_train<T: Scalar>(
    data: &TrainingSet<T>,
    init: &ShallowRm<T>,
    iters: usize,
    drop_prob: f64,
    masks_per_epoch: usize,
    mode: MaskMode,
    rng: &mut SeedStream,
) -> Result<DropoutEmRun<T>, ModelError> {
    if !(0.0..1.0).contains(&drop_prob) {
        return Err(ModelError::BadArgument(
            "drop probability must lie in [0, 1); 1 would drop all data".into(),
        ));
    }
    if iters == 0 || masks_per_epoch == 0 {
        return Err(ModelError::BadArgument(
            "iters and masks per epoch must be >= 1".into(),
        ));
    }
    if data.dim() != init.dim() {
        return Err(ModelError::ShapeMismatch {
            context: "em samples",
            expected: init.dim(),
            got: data.dim(),
        });
    }

    let c_count = init.class_count();
    let g_count = init.nuisance_count();
    let dim = init.dim();
    let cells = c_count * g_count;
    let keep_prob = 1.0 - drop_prob;

    let mut model = init.clone();
    let mut loglik = Vec::with_capacity(iters);
    let mut per_iter_models = Vec::with_capacity(iters);
    let mut iter_logs = Vec::with_capacity(iters);

    for _ in 0..iters {
        let mut masks: Vec<Mask> = Vec::with_capacity(masks_per_epoch);
        for _ in 0..masks_per_epoch {
            let mask: Mask = (0..data.len())
                .map(|_| match mode {
                    MaskMode::PerPixel => (0..dim)
                        .map(|_| drop_prob == 0.0 || rng.bernoulli(keep_prob))
                        .collect(),
                    MaskMode::PerSample => {
                        vec![drop_prob == 0.0 || rng.bernoulli(keep_prob)]
                    }
                })
                .collect();
            masks.push(mask);
        }

        let var = model.noise_var();
        let two_var = T::two() * var;
        let mut assignments_per_mask = Vec::with_capacity(masks_per_epoch);
        let mut pixel_counts = vec![0_u64; cells * dim];
        let mut pixel_sums = vec![T::zero(); cells * dim];
        let mut cell_counts = vec![0_u64; cells];

        for mask in &masks {
            let mut assignments = Vec::with_capacity(data.len());
            for n in 0..data.len() {
                let pixels = data.sample(n);
                let keep = &mask[n];
                let classes: Vec<usize> = match data.labels() {
                    Some(labels) => vec![labels[n]],
                    None => (0..c_count).collect(),
                };
                let mut best = T::neg_infinity();
                let mut best_cg = (classes[0], 0);
                for &c in &classes {
                    for g in 0..g_count {
                        let mu = model.template(c, g);
                        let mut score = model.log_prior(c, g);
                        match mode {
                            MaskMode::PerPixel => {
                                for (i, x) in pixels.iter().enumerate() {
                                    if keep[i] {
                                        score = score + mu[i] * *x / var
                                            - mu[i] * mu[i] / two_var;
                                    }
                                }
                            }
                            MaskMode::PerSample => {
                                if keep[0] {
                                    for (i, x) in pixels.iter().enumerate() {
                                        score = score + mu[i] * *x / var
                                            - mu[i] * mu[i] / two_var;
                                    }
                                }
                            }
                        }
                        if score > best {
                            best = score;
                            best_cg = (c, g);
                        }
                    }
                }
                assignments.push(best_cg);

                let cell = best_cg.0 * g_count + best_cg.1;
                let kept_sample = match mode {
                    MaskMode::PerPixel => true,
                    MaskMode::PerSample => keep[0],
                };
                if kept_sample {
                    cell_counts[cell] += 1;
                    let base = cell * dim;
                    for (i, x) in pixels.iter().enumerate() {
                        let kept_pixel = match mode {
                            MaskMode::PerPixel => keep[i],
                            MaskMode::PerSample => true,
                        };
                        if kept_pixel {
                            pixel_counts[base + i] += 1;
                            pixel_sums[base + i] = pixel_sums[base + i] + *x;
                        }
                    }
                }
            }
            assignments_per_mask.push(assignments);
        }

        // M-step on the masked ensemble average
        let mut templates = Vec::with_capacity(cells * dim);
        for c in 0..c_count {
            for g in 0..g_count {
                let base = (c * g_count + g) * dim;
                for i in 0..dim {
                    if pixel_counts[base + i] > 0 {
                        templates.push(
                            pixel_sums[base + i]
                                / T::from_f64(pixel_counts[base + i] as f64),
                        );
                    } else {
                        templates.push(model.template(c, g)[i]);
                    }
                }
            }
        }

        let mut resid = T::zero();
        let mut kept_total = 0_u64;
        for (mask, assignments) in masks.iter().zip(assignments_per_mask.iter()) {
            for n in 0..data.len() {
                let (c, g) = assignments[n];
                let kept_sample = match mode {
                    MaskMode::PerPixel => true,
                    MaskMode::PerSample => mask[n][0],
                };
                if !kept_sample {
                    continue;
                }
                let base = (c * g_count + g) * dim;
                for (i, x) in data.sample(n).iter().enumerate() {
                    let kept_pixel = match mode {
                        MaskMode::PerPixel => mask[n][i],
                        MaskMode::PerSample => true,
                    };
                    if kept_pixel {
                        let r = *x - templates[base + i];
                        resid = resid + r * r;
                        kept_total += 1;
                    }
                }
            }
        }
        let variance = if kept_total > 0 {
            (resid / T::from_f64(kept_total as f64)).max(T::from_f64(VARIANCE_FLOOR))
        } else {
            model.noise_var()
        };

        let mut class_counts = vec![T::zero(); c_count];
        let mut nuisance_counts = vec![T::zero(); g_count];
        for c in 0..c_count {
            for g in 0..g_count {
                let count = T::from_f64(cell_counts[c * g_count + g] as f64);
                class_counts[c] = class_counts[c] + count;
                nuisance_counts[g] = nuisance_counts[g] + count;
            }
        }
        let total = T::from_f64((data.len() * masks_per_epoch) as f64);
        let class_prior = renormalize_with_floor(&class_counts, total);
        let nuisance_prior = renormalize_with_floor(&nuisance_counts, total);

        model = ShallowRm::new(class_prior, nuisance_prior, templates, dim, variance)
            .expect("masked M-step parameters satisfy the invariants");

        loglik.push(complete_data_loglik(
            &model,
            data,
            &assignments_per_mask[masks_per_epoch - 1],
        ));
        per_iter_models.push(model.clone());
        iter_logs.push(DropoutIterLog {
            masks,
            assignments: assignments_per_mask,
            stats: MaskedStats {
                pixel_counts,
                pixel_sums,
                cell_counts,
            },
        });
    }

    Ok(DropoutEmRun {
        model,
        loglik,
        per_iter_models,
        iter_logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cluster_data() -> TrainingSet<f64> {
        TrainingSet::new(vec![vec![0.1, 0.0], vec![1.9, 2.1]], None).unwrap()
    }

    fn two_cluster_init() -> ShallowRm<f64> {
        ShallowRm::new(
            vec![1.0],
            vec![0.5, 0.5],
            vec![0.0, 0.0, 2.0, 2.0],
            2,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn nearest_template_assignment_and_mean_update() {
        let run = em_train(&two_cluster_data(), &two_cluster_init(), 1).unwrap();
        assert_eq!(
            run.responsibilities.assignments,
            vec![(0, 0), (0, 1)]
        );
        assert_eq!(run.model.template(0, 0), &[0.1, 0.0]);
        assert_eq!(run.model.template(0, 1), &[1.9, 2.1]);
    }

    #[test]
    fn noiseless_fixed_point_keeps_parameters() {
        // data exactly at the templates: means and assignments are unchanged
        let init = two_cluster_init();
        let data =
            TrainingSet::new(vec![vec![0.0, 0.0], vec![2.0, 2.0]], None).unwrap();
        let run = em_train(&data, &init, 3).unwrap();
        assert_eq!(run.model.template(0, 0), &[0.0, 0.0]);
        assert_eq!(run.model.template(0, 1), &[2.0, 2.0]);
        assert_eq!(run.model.noise_var(), VARIANCE_FLOOR);
    }

    #[test]
    fn loglik_trace_is_monotone() {
        let mut rng = SeedStream::new(21);
        let mut samples = Vec::new();
        for _ in 0..60 {
            let c = rng.index(3);
            let center = [0.0, 3.0, -3.0][c];
            samples.push(vec![center + 0.3 * rng.normal(), center + 0.3 * rng.normal()]);
        }
        let data = TrainingSet::new(samples, None).unwrap();
        let init = init_from_data(&data, 1, 3, &mut rng).unwrap();
        let run = em_train(&data, &init, 10).unwrap();
        for w in run.loglik.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "trace decreased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn empty_cluster_keeps_template_and_gets_epsilon_prior() {
        let data = TrainingSet::new(vec![vec![0.0, 0.0], vec![0.1, 0.1]], None).unwrap();
        let init = ShallowRm::new(
            vec![1.0],
            vec![0.5, 0.5],
            vec![0.0, 0.0, 50.0, 50.0],
            2,
            1.0,
        )
        .unwrap();
        let run = em_train(&data, &init, 1).unwrap();
        assert_eq!(run.model.template(0, 1), &[50.0, 50.0]);
        assert!(run.model.nuisance_prior()[1] < 1e-11);
        let sum: f64 = run.model.nuisance_prior().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn labels_clamp_class_assignment() {
        let data = TrainingSet::new(
            vec![vec![2.0], vec![0.0]],
            Some(vec![0, 1]),
        )
        .unwrap();
        let init = ShallowRm::new(
            vec![0.5, 0.5],
            vec![1.0],
            vec![0.0, 2.0],
            1,
            1.0,
        )
        .unwrap();
        // nearest template would swap both samples; labels forbid it
        let run = em_train(&data, &init, 1).unwrap();
        assert_eq!(run.responsibilities.assignments, vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn dropout_zero_matches_plain_em_bitwise() {
        let mut rng = SeedStream::new(5);
        let mut samples = Vec::new();
        for _ in 0..20 {
            let c = rng.index(2);
            let center = [0.0, 4.0][c];
            samples.push(vec![center + rng.normal(), center + rng.normal()]);
        }
        let data = TrainingSet::new(samples, None).unwrap();
        let init = init_from_data(&data, 1, 2, &mut rng).unwrap();
        let plain = em_train(&data, &init, 4).unwrap();
        let mut rng2 = SeedStream::new(77);
        let dropped = dropout_em_train(
            &data,
            &init,
            4,
            0.0,
            1,
            MaskMode::PerPixel,
            &mut rng2,
        )
        .unwrap();
        for (a, b) in plain.per_iter_models.iter().zip(dropped.per_iter_models.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn dropout_rejects_total_drop() {
        let data = two_cluster_data();
        let init = two_cluster_init();
        let mut rng = SeedStream::new(0);
        assert!(dropout_em_train(
            &data,
            &init,
            1,
            1.0,
            1,
            MaskMode::PerPixel,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn masked_statistics_match_hand_filtered_sums() {
        let mut rng = SeedStream::new(13);
        let mut samples = Vec::new();
        for _ in 0..12 {
            let c = rng.index(2);
            let center = [0.0, 5.0][c];
            samples.push(vec![center + 0.1 * rng.normal(), center + 0.1 * rng.normal()]);
        }
        let data = TrainingSet::new(samples.clone(), None).unwrap();
        let init = init_from_data(&data, 1, 2, &mut rng).unwrap();
        let run = dropout_em_train(
            &data,
            &init,
            1,
            0.5,
            3,
            MaskMode::PerPixel,
            &mut rng,
        )
        .unwrap();
        let log = &run.iter_logs[0];
        let g_count = 2;
        let dim = 2;
        let mut want_counts = vec![0_u64; g_count * dim];
        let mut want_sums = vec![0.0_f64; g_count * dim];
        for (mask, assign) in log.masks.iter().zip(log.assignments.iter()) {
            for n in 0..samples.len() {
                let (_, g) = assign[n];
                for i in 0..dim {
                    if mask[n][i] {
                        want_counts[g * dim + i] += 1;
                        want_sums[g * dim + i] += samples[n][i];
                    }
                }
            }
        }
        assert_eq!(log.stats.pixel_counts, want_counts);
        for (got, want) in log.stats.pixel_sums.iter().zip(want_sums.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
    }
}
