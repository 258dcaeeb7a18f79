//! EM for the deep model: hard path assignment by fine-to-coarse inference,
//! factor-analyzer moments per level, and responsibility-weighted regression
//! updates of each level's affine transforms.

use crate::deep::{DeepLevel, DeepRm};
use crate::deep_infer::DeepInference;
use crate::em::TrainingSet;
use crate::error::ModelError;
use crate::linalg::{pinv_sym, sym_eigen, Matrix};
use crate::path::RenderingPath;
use crate::scalar::Scalar;

pub const PSI_FLOOR: f64 = 1e-8;
pub const MOMENT_RIDGE: f64 = 1e-8;

/// Per-sample, per-level E-step quantities: the level input x = I^{ℓ-1} and
/// the latent moments E[μ], E[μμᵀ] given the assigned nuisance.
#[derive(Debug, Clone)]
pub struct LevelMoment<T> {
    pub input: Vec<T>,
    pub latent_mean: Vec<T>,
    pub latent_second: Matrix<T>,
}

/// Augmented regression Λ̃ = (Σ x·[m|1]ᵀ)(Σ [[S, m],[mᵀ, 1]])⁻¹, with the
/// ridge 1e-8·trace/dim added to the moment matrix before inversion.
pub fn solve_affine_regression<T: Scalar>(
    moments: &[&LevelMoment<T>],
) -> Result<(Matrix<T>, Vec<T>), ModelError> {
    let first = moments
        .first()
        .ok_or_else(|| ModelError::BadArgument("regression needs >= 1 sample".into()))?;
    let out_dim = first.input.len();
    let in_dim = first.latent_mean.len();
    let aug = in_dim + 1;

    let mut cross = Matrix::zeros(out_dim, aug);
    let mut moment = Matrix::zeros(aug, aug);
    for m in moments {
        for r in 0..out_dim {
            for c in 0..in_dim {
                cross.set(r, c, cross.get(r, c) + m.input[r] * m.latent_mean[c]);
            }
            cross.set(r, in_dim, cross.get(r, in_dim) + m.input[r]);
        }
        for r in 0..in_dim {
            for c in 0..in_dim {
                moment.set(r, c, moment.get(r, c) + m.latent_second.get(r, c));
            }
            moment.set(r, in_dim, moment.get(r, in_dim) + m.latent_mean[r]);
            moment.set(in_dim, r, moment.get(in_dim, r) + m.latent_mean[r]);
        }
        moment.set(in_dim, in_dim, moment.get(in_dim, in_dim) + T::one());
    }

    let ridge = T::from_f64(MOMENT_RIDGE) * moment.trace() / T::from_f64(aug as f64);
    for i in 0..aug {
        moment.set(i, i, moment.get(i, i) + ridge);
    }
    let inv = pinv_sym(&moment, T::from_f64(1e-10));
    let solution = cross.matmul(&inv);
    if solution.data().iter().any(|v| !v.is_finite()) {
        return Err(ModelError::SingularMoment {
            level: 0,
            nuisance: 0,
        });
    }
    let mut lambda = Matrix::zeros(out_dim, in_dim);
    let mut alpha = Vec::with_capacity(out_dim);
    for r in 0..out_dim {
        for c in 0..in_dim {
            lambda.set(r, c, solution.get(r, c));
        }
        alpha.push(solution.get(r, in_dim));
    }
    Ok((lambda, alpha))
}

#[derive(Debug, Clone)]
pub struct DeepEmRun<T> {
    pub model: DeepRm<T>,
    /// Complete-data log-likelihood of the assigned paths after each M-step.
    pub trace: Vec<T>,
    pub assignments: Vec<RenderingPath>,
}

/// Marginal covariance of the pixels for one path: σ²I plus the noise
/// propagated through the affine chain.
fn path_covariance<T: Scalar>(model: &DeepRm<T>, path: &RenderingPath) -> Matrix<T> {
    // top template is deterministic: covariance starts at zero
    let mut cov = Matrix::zeros(model.top_dim(), model.top_dim());
    for (level, g) in model.levels().iter().zip(path.nuisance_ids.iter()) {
        let lambda = &level.transforms[*g];
        let mut next = lambda.matmul(&cov).matmul(&lambda.transpose());
        for (i, psi) in level.noise_diag.iter().enumerate() {
            next.set(i, i, next.get(i, i) + *psi);
        }
        cov = next;
    }
    for i in 0..cov.rows() {
        cov.set(i, i, cov.get(i, i) + model.pixel_noise());
    }
    cov
}

fn log_gaussian_full<T: Scalar>(x: &[T], mean: &[T], cov: &Matrix<T>) -> T {
    let n = x.len();
    let (vals, vecs) = sym_eigen(cov);
    let mut resid = Vec::with_capacity(n);
    for (a, b) in x.iter().zip(mean.iter()) {
        resid.push(*a - *b);
    }
    // project the residual onto the eigenbasis
    let mut quad = T::zero();
    let mut logdet = T::zero();
    let two_pi = T::from_f64(std::f64::consts::TAU);
    for k in 0..n {
        let mut proj = T::zero();
        for i in 0..n {
            proj = proj + vecs.get(i, k) * resid[i];
        }
        quad = quad + proj * proj / vals[k];
        logdet = logdet + (two_pi * vals[k]).ln();
    }
    -T::half() * (quad + logdet)
}

/// Σ_n ln π(τ*_n) + ln N(I_n; μ_{τ*_n}, Σ_{τ*_n}).
pub fn deep_complete_loglik<T: Scalar>(
    model: &DeepRm<T>,
    data: &TrainingSet<T>,
    assignments: &[RenderingPath],
) -> T {
    let mut acc = T::zero();
    let mut cache: std::collections::BTreeMap<(usize, Vec<usize>), (Vec<T>, Matrix<T>)> =
        std::collections::BTreeMap::new();
    for (n, path) in assignments.iter().enumerate() {
        let key = (path.class_id, path.nuisance_ids.clone());
        let (mean, cov) = cache.entry(key).or_insert_with(|| {
            (
                model.template_for_path(path),
                path_covariance(model, path),
            )
        });
        acc = acc + model.log_path_prior(path) + log_gaussian_full(data.sample(n), mean, cov);
    }
    acc
}

/// One EM iteration's E-step products for every sample.
struct EStep<T> {
    paths: Vec<RenderingPath>,
    /// moments[level_index][sample] with stored (top-first) level indexing.
    moments: Vec<Vec<LevelMoment<T>>>,
    /// Posterior latent covariance I − WΛ per (level, nuisance).
    latent_cov: Vec<Vec<Matrix<T>>>,
}

fn e_step<T: Scalar>(model: &DeepRm<T>, data: &TrainingSet<T>) -> Result<EStep<T>, ModelError> {
    let engine = DeepInference::new(model);
    let level_count = model.level_count();
    let mut paths = Vec::with_capacity(data.len());
    let mut moments: Vec<Vec<LevelMoment<T>>> = (0..level_count).map(|_| Vec::new()).collect();

    // cache I − WΛ per (level, nuisance): it does not depend on the sample
    let mut latent_cov: Vec<Vec<Matrix<T>>> = Vec::with_capacity(level_count);
    for (i, level) in model.levels().iter().enumerate() {
        let mut per_g = Vec::with_capacity(level.nuisance_count());
        for g in 0..level.nuisance_count() {
            let w = &engine.operators()[i].weights[g];
            let wl = w.matmul(&level.transforms[g]);
            let mut cov = Matrix::identity(level.in_dim());
            for r in 0..level.in_dim() {
                for c in 0..level.in_dim() {
                    cov.set(r, c, cov.get(r, c) - wl.get(r, c));
                }
            }
            per_g.push(cov);
        }
        latent_cov.push(per_g);
    }

    for n in 0..data.len() {
        let image = crate::image::Image::vector(data.sample(n).to_vec())?;
        let mut outcome = engine.infer_f2c(&image)?;
        if let Some(labels) = data.labels() {
            outcome.path.class_id = labels[n];
        }
        let path = outcome.path.clone();

        let mut x = data.sample(n).to_vec();
        for i in (0..level_count).rev() {
            let g = path.nuisance_ids[i];
            let op = &engine.operators()[i];
            let mut m = op.weights[g].matvec(&x);
            for (v, b) in m.iter_mut().zip(op.biases[g].iter()) {
                *v = *v + *b;
            }
            let dim = m.len();
            let mut second = latent_cov[i][g].clone();
            for r in 0..dim {
                for c in 0..dim {
                    second.set(r, c, second.get(r, c) + m[r] * m[c]);
                }
            }
            moments[i].push(LevelMoment {
                input: x.clone(),
                latent_mean: m.clone(),
                latent_second: second,
            });
            x = m;
        }
        paths.push(path);
    }
    Ok(EStep {
        paths,
        moments,
        latent_cov,
    })
}

/// Hard EM for the deep model. Top templates and the pixel noise are treated
/// as fixed anchors; levels update their transforms, biases, noise diagonals,
/// and priors.
pub fn em_train_deep<T: Scalar>(
    data: &TrainingSet<T>,
    init: &DeepRm<T>,
    iters: usize,
) -> Result<DeepEmRun<T>, ModelError> {
    if iters == 0 {
        return Err(ModelError::BadArgument("iters must be >= 1".into()));
    }
    if data.dim() != init.pixel_dim() {
        return Err(ModelError::ShapeMismatch {
            context: "deep em samples",
            expected: init.pixel_dim(),
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
    let mut trace = Vec::with_capacity(iters);
    let mut assignments = Vec::new();

    for _ in 0..iters {
        let estep = e_step(&model, data)?;
        assignments = estep.paths.clone();

        let mut new_levels: Vec<DeepLevel<T>> = Vec::with_capacity(model.level_count());
        for (i, level) in model.levels().iter().enumerate() {
            let mut transforms = Vec::with_capacity(level.nuisance_count());
            let mut biases = Vec::with_capacity(level.nuisance_count());
            for g in 0..level.nuisance_count() {
                let members: Vec<&LevelMoment<T>> = estep.moments[i]
                    .iter()
                    .enumerate()
                    .filter(|(n, _)| estep.paths[*n].nuisance_ids[i] == g)
                    .map(|(_, m)| m)
                    .collect();
                if members.is_empty() {
                    transforms.push(level.transforms[g].clone());
                    biases.push(level.biases[g].clone());
                } else {
                    let (lambda, alpha) =
                        solve_affine_regression(&members).map_err(|e| match e {
                            ModelError::SingularMoment { .. } => {
                                ModelError::SingularMoment { level: i, nuisance: g }
                            }
                            other => other,
                        })?;
                    transforms.push(lambda);
                    biases.push(alpha);
                }
            }

            // Ψ update: mean squared fit residual per output coordinate. In
            // the well-separated hard-assignment regime this coincides with
            // the expected complete-data residual and stays calibrated when
            // templates anchor the latents.
            let out_dim = level.out_dim();
            let mut psi = vec![T::zero(); out_dim];
            for (n, moment) in estep.moments[i].iter().enumerate() {
                let g = estep.paths[n].nuisance_ids[i];
                let mut fitted = transforms[g].matvec(&moment.latent_mean);
                for (f, a) in fitted.iter_mut().zip(biases[g].iter()) {
                    *f = *f + *a;
                }
                for d in 0..out_dim {
                    let r = moment.input[d] - fitted[d];
                    psi[d] = psi[d] + r * r;
                }
            }
            let n_inv = T::one() / T::from_f64(data.len() as f64);
            let floor = T::from_f64(PSI_FLOOR);
            for p in psi.iter_mut() {
                *p = (*p * n_inv).max(floor);
            }

            let mut counts = vec![T::zero(); level.nuisance_count()];
            for path in &estep.paths {
                counts[path.nuisance_ids[i]] = counts[path.nuisance_ids[i]] + T::one();
            }
            let prior = renormalize(&counts, T::from_f64(data.len() as f64));

            new_levels.push(DeepLevel {
                transforms,
                biases,
                noise_diag: psi,
                prior,
            });
        }

        let mut class_counts = vec![T::zero(); model.class_count()];
        for path in &estep.paths {
            class_counts[path.class_id] = class_counts[path.class_id] + T::one();
        }
        let top_prior = renormalize(&class_counts, T::from_f64(data.len() as f64));

        // top templates re-anchor to the class means of the top-level latent
        // estimates; an empty class keeps its previous template
        let top_dim = model.top_dim();
        let mut top_sums = vec![T::zero(); model.class_count() * top_dim];
        for (n, path) in estep.paths.iter().enumerate() {
            let m = &estep.moments[0][n].latent_mean;
            let base = path.class_id * top_dim;
            for (i, v) in m.iter().enumerate() {
                top_sums[base + i] = top_sums[base + i] + *v;
            }
        }
        let mut top_templates = Vec::with_capacity(model.class_count() * top_dim);
        for c in 0..model.class_count() {
            let count = class_counts[c];
            if count > T::zero() {
                for i in 0..top_dim {
                    top_templates.push(top_sums[c * top_dim + i] / count);
                }
            } else {
                top_templates.extend_from_slice(model.top_template(c));
            }
        }
        model = DeepRm::new(
            top_prior,
            top_templates,
            model.top_dim(),
            new_levels,
            model.pixel_noise(),
        )?;
        trace.push(deep_complete_loglik(&model, data, &assignments));
    }

    Ok(DeepEmRun {
        model,
        trace,
        assignments,
    })
}

fn renormalize<T: Scalar>(counts: &[T], total: T) -> Vec<T> {
    let eps = T::from_f64(crate::em::EMPTY_CELL_PRIOR);
    let raw: Vec<T> = counts
        .iter()
        .map(|c| if *c > T::zero() { *c / total } else { eps })
        .collect();
    let mut sum = T::zero();
    for p in &raw {
        sum = sum + *p;
    }
    raw.into_iter().map(|p| p / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep::identity_level;
    use crate::rng::SeedStream;

    #[test]
    fn scalar_regression_example() {
        // samples (μ=1 → I=3), (μ=2 → I=5): Λ = 2, α = 1
        let m1 = LevelMoment {
            input: vec![3.0_f64],
            latent_mean: vec![1.0],
            latent_second: Matrix::from_rows(1, 1, vec![1.0]),
        };
        let m2 = LevelMoment {
            input: vec![5.0],
            latent_mean: vec![2.0],
            latent_second: Matrix::from_rows(1, 1, vec![4.0]),
        };
        let (lambda, alpha) = solve_affine_regression(&[&m1, &m2]).unwrap();
        assert!((lambda.get(0, 0) - 2.0).abs() < 1e-6, "{}", lambda.get(0, 0));
        assert!((alpha[0] - 1.0).abs() < 1e-6, "{}", alpha[0]);
    }

    #[test]
    fn noiseless_data_is_near_fixed_point() {
        // Λ = (2, 1)ᵀ scaling of a scalar latent, α = (0.5, -0.5)
        let level = DeepLevel {
            transforms: vec![Matrix::from_rows(2, 1, vec![2.0, 1.0])],
            biases: vec![vec![0.5, -0.5]],
            noise_diag: vec![1e-8, 1e-8],
            prior: vec![1.0],
        };
        let model = DeepRm::new(vec![1.0_f64], vec![1.0], 1, vec![level], 1e-6).unwrap();
        // exact renders of the single path
        let template = model.template_for_path(&RenderingPath::new(0, vec![0]));
        let data = crate::em::TrainingSet::new(vec![template.clone(); 8], None).unwrap();
        let run = em_train_deep(&data, &model, 1).unwrap();
        let learned = run.model.template_for_path(&RenderingPath::new(0, vec![0]));
        for (a, b) in learned.iter().zip(template.iter()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        for psi in &run.model.levels()[0].noise_diag {
            assert!(*psi <= 1e-4);
        }
    }

    #[test]
    fn trace_is_monotone_on_separated_clusters() {
        // disjoint selector transforms with separated nonnegative classes:
        // assignments are exact and stable, so the per-level updates must not
        // decrease the joint of the assigned paths
        let mut rng = SeedStream::new(8);
        let level = DeepLevel {
            transforms: vec![
                Matrix::from_rows(2, 1, vec![1.0, 0.0]),
                Matrix::from_rows(2, 1, vec![0.0, 1.0]),
            ],
            biases: vec![vec![0.0, 0.0], vec![0.1, -0.1]],
            noise_diag: vec![1e-3, 1e-3],
            prior: vec![0.5, 0.5],
        };
        let truth = DeepRm::new(
            crate::shallow::uniform_prior(3),
            vec![1.0, 2.5, 4.0],
            1,
            vec![level],
            1e-6,
        )
        .unwrap();
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..120 {
            let s = truth.sample(None, true, &mut rng);
            labels.push(s.path.class_id);
            samples.push(s.image);
        }
        let data = crate::em::TrainingSet::new(samples, Some(labels)).unwrap();
        let run = em_train_deep(&data, &truth, 12).unwrap();
        for w in run.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "trace decreased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rejects_zero_iters_and_bad_dims() {
        let model = DeepRm::new(
            vec![1.0],
            vec![1.0, 0.0],
            2,
            vec![identity_level(2, 1, 1e-6)],
            1.0,
        )
        .unwrap();
        let data = crate::em::TrainingSet::new(vec![vec![0.0, 0.0]], None).unwrap();
        assert!(em_train_deep(&data, &model, 0).is_err());
        let bad = crate::em::TrainingSet::new(vec![vec![0.0; 3]], None).unwrap();
        assert!(em_train_deep(&bad, &model, 1).is_err());
    }
}
