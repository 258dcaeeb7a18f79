// probe: certified-instance generator for deep inference exactness
use drm_core::deep::{DeepLevel, DeepRm, DEFAULT_PATH_CAP};
use drm_core::deep_infer::DeepInference;
use drm_core::image::Image;
use drm_core::linalg::Matrix;
use drm_core::oracle;
use drm_core::rng::SeedStream;
use drm_core::shallow::uniform_prior;

/// Nonnegative orthonormal-column transform: columns get disjoint row
/// supports, positive entries, unit norm.
fn disjoint_embedding(out_dim: usize, in_dim: usize, rng: &mut SeedStream) -> Matrix<f64> {
    let mut rows: Vec<usize> = (0..out_dim).collect();
    rng.shuffle(&mut rows);
    let mut m = Matrix::zeros(out_dim, in_dim);
    // each column gets at least one row; leftover rows stay zero
    let per = out_dim / in_dim;
    for col in 0..in_dim {
        let support = &rows[col * per..(col + 1) * per];
        let vals: Vec<f64> = support.iter().map(|_| 0.2 + rng.uniform()).collect();
        let norm: f64 = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (r, v) in support.iter().zip(vals.iter()) {
            m.set(*r, col, v / norm);
        }
    }
    m
}

fn random_certified_model(rng: &mut SeedStream) -> DeepRm<f64> {
    let level_count = 1 + rng.index(3); // 1..=3
    let top_dim = 1 + rng.index(2); // 1..=2
    let mut dims = vec![top_dim];
    for _ in 0..level_count {
        let k = 2 + rng.index(2); // expansion factor 2..=3
        dims.push(dims.last().unwrap() * k);
    }
    let mut levels = Vec::new();
    for i in 0..level_count {
        let in_dim = dims[i];
        let out_dim = dims[i + 1];
        let g_count = 2 + rng.index(3); // 2..=4
        let transforms: Vec<Matrix<f64>> = (0..g_count)
            .map(|_| disjoint_embedding(out_dim, in_dim, rng))
            .collect();
        levels.push(DeepLevel {
            transforms,
            biases: vec![vec![0.0; out_dim]; g_count],
            noise_diag: vec![1e-9; out_dim],
            prior: uniform_prior(g_count),
        });
    }
    let class_count = 2 + rng.index(3);
    let mut top_templates = Vec::new();
    for _ in 0..class_count {
        let t: Vec<f64> = (0..top_dim).map(|_| 0.5 + rng.uniform()).collect();
        let norm: f64 = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        top_templates.extend(t.iter().map(|v| v / norm));
    }
    DeepRm::new(
        uniform_prior(class_count),
        top_templates,
        top_dim,
        levels,
        1.0,
    )
    .unwrap()
}

/// Certificate: per level one candidate dominates all others elementwise and
/// the pooled map is elementwise nonnegative.
fn certified(engine: &DeepInference<f64>, model: &DeepRm<f64>, pixels: &[f64]) -> bool {
    let mut current = pixels.to_vec();
    for i in (0..model.level_count()).rev() {
        let op = &engine.operators()[i];
        let candidates: Vec<Vec<f64>> = op
            .weights
            .iter()
            .zip(op.biases.iter())
            .map(|(w, b)| {
                let mut v = w.matvec(&current);
                for (vi, bi) in v.iter_mut().zip(b.iter()) {
                    *vi += *bi;
                }
                v
            })
            .collect();
        let units = candidates[0].len();
        let dominant = (0..candidates.len()).find(|&g| {
            (0..units).all(|u| candidates.iter().all(|c| candidates[g][u] >= c[u]))
        });
        match dominant {
            Some(g) => {
                if candidates[g].iter().any(|v| *v < 0.0) {
                    return false;
                }
                current = candidates[g].clone();
            }
            None => return false,
        }
    }
    true
}

fn main() {
    let mut rng = SeedStream::new(2024);
    let mut attempts = 0u64;
    let mut certified_n = 0u64;
    let mut agree = 0u64;
    let mut score_err_max = 0.0_f64;
    while certified_n < 200 && attempts < 20000 {
        attempts += 1;
        let model = random_certified_model(&mut rng);
        let sample = model.sample(None, false, &mut rng);
        let noisy: Vec<f64> = sample
            .image
            .iter()
            .map(|v| v + 0.05 * rng.normal())
            .collect();
        let engine = DeepInference::new(&model);
        if !certified(&engine, &model, &noisy) {
            continue;
        }
        certified_n += 1;
        let image = Image::vector(noisy).unwrap();
        let out = engine.infer_f2c(&image).unwrap();
        let shallow = model.collapse(DEFAULT_PATH_CAP).unwrap();
        let (c, g, log_joint) = oracle::exact_map(&shallow, &image).unwrap();
        let indexer = model.paths();
        let (oc, og) = (c, g);
        let (fc, fg) = indexer.flat_index(&out.path);
        if (oc, og) == (fc, fg) {
            agree += 1;
            let rel = ((out.path_log_joint - log_joint) / log_joint.abs().max(1.0)).abs();
            score_err_max = score_err_max.max(rel);
        }
    }
    println!(
        "attempts {attempts} certified {certified_n} agree {agree} max_score_rel_err {score_err_max:.2e}"
    );
}
