//! Evolutionary rendering model: an ancestor template mutated additively
//! along a category tree, with label histograms at the leaves.

use crate::deep::{DeepLevel, DeepRm};
use crate::error::{ModelError, Violation};
use crate::linalg::Matrix;
use crate::path::{PathIndexer, RenderingPath};
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::shallow::PRIOR_TOL;

/// One mutation level: a set of additive mutation vectors (all of the shared
/// template dimension) and the prior over them.
#[derive(Debug, Clone, PartialEq)]
pub struct EvoLevel<T> {
    pub mutations: Vec<Vec<T>>,
    pub prior: Vec<T>,
}

/// Evolutionary deep rendering model. The transform at every level is
/// identity-plus-bias, so templates keep one dimension throughout and a leaf
/// template is the root template plus the accumulated mutations.
#[derive(Debug, Clone, PartialEq)]
pub struct EvoDrm<T> {
    root_templates: Vec<T>, // (|C^L|, D)
    dim: usize,
    root_prior: Vec<T>,
    levels: Vec<EvoLevel<T>>,
    /// Label posterior per leaf (leaf = full path, class-major flat order).
    leaf_histograms: Vec<Vec<T>>,
    label_count: usize,
    pixel_noise: T,
}

impl<T: Scalar> EvoDrm<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        root_templates: Vec<T>,
        dim: usize,
        root_prior: Vec<T>,
        levels: Vec<EvoLevel<T>>,
        leaf_histograms: Vec<Vec<T>>,
        label_count: usize,
        pixel_noise: T,
    ) -> Result<Self, ModelError> {
        let model = Self {
            root_templates,
            dim,
            root_prior,
            levels,
            leaf_histograms,
            label_count,
            pixel_noise,
        };
        let violations = model.validate();
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.dim == 0 {
            out.push(Violation::new("root_templates", "dimension must be >= 1"));
        }
        if self.root_templates.len() != self.root_prior.len() * self.dim {
            out.push(Violation::new("root_templates", "shape must be (|C^L|, D)"));
        }
        if self.root_templates.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new("root_templates", "entries must be finite"));
        }
        check_prior("root_prior", &self.root_prior, &mut out);
        for (i, level) in self.levels.iter().enumerate() {
            if level.mutations.is_empty() {
                out.push(Violation::new(
                    format!("levels[{i}].mutations"),
                    "every internal node needs >= 1 child",
                ));
                continue;
            }
            if level.mutations.iter().any(|m| m.len() != self.dim) {
                out.push(Violation::new(
                    format!("levels[{i}].mutations"),
                    "mutations must keep the template dimension",
                ));
            }
            if level.prior.len() != level.mutations.len() {
                out.push(Violation::new(
                    format!("levels[{i}].prior"),
                    "one probability per mutation",
                ));
            } else {
                check_prior(&format!("levels[{i}].prior"), &level.prior, &mut out);
            }
        }
        let leaf_count = self.paths().total();
        if self.leaf_histograms.len() as u128 != leaf_count {
            out.push(Violation::new(
                "leaf_histograms",
                "one histogram per leaf (full path)",
            ));
        }
        for (i, h) in self.leaf_histograms.iter().enumerate() {
            if h.len() != self.label_count {
                out.push(Violation::new(
                    format!("leaf_histograms[{i}]"),
                    "length must equal label count",
                ));
            } else {
                check_prior(&format!("leaf_histograms[{i}]"), h, &mut out);
            }
        }
        if !(self.pixel_noise > T::zero()) || !self.pixel_noise.is_finite() {
            out.push(Violation::new("pixel_noise", "must be positive and finite"));
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.root_prior.len()
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn levels(&self) -> &[EvoLevel<T>] {
        &self.levels
    }

    pub fn root_prior(&self) -> &[T] {
        &self.root_prior
    }

    pub fn pixel_noise(&self) -> T {
        self.pixel_noise
    }

    pub fn root_template(&self, c: usize) -> &[T] {
        &self.root_templates[c * self.dim..(c + 1) * self.dim]
    }

    pub fn leaf_histogram(&self, leaf: usize) -> &[T] {
        &self.leaf_histograms[leaf]
    }

    pub fn paths(&self) -> PathIndexer {
        PathIndexer::new(
            self.class_count(),
            self.levels.iter().map(|l| l.mutations.len()).collect(),
        )
    }

    /// Root template plus accumulated mutations along the path.
    pub fn template_for_path(&self, path: &RenderingPath) -> Vec<T> {
        let mut t = self.root_template(path.class_id).to_vec();
        for (level, g) in self.levels.iter().zip(path.nuisance_ids.iter()) {
            for (v, m) in t.iter_mut().zip(level.mutations[*g].iter()) {
                *v = *v + *m;
            }
        }
        t
    }

    pub fn leaf_index(&self, path: &RenderingPath) -> usize {
        let indexer = self.paths();
        let (c, g) = indexer.flat_index(path);
        c * indexer.nuisance_total() as usize + g
    }

    /// Sample an image: draw the path, accumulate mutations, add pixel noise.
    pub fn sample(&self, with_noise: bool, rng: &mut SeedStream) -> (Vec<T>, RenderingPath) {
        let probs: Vec<f64> = self.root_prior.iter().map(|p| p.as_f64()).collect();
        let class_id = rng.categorical(&probs);
        let nuisance_ids: Vec<usize> = self
            .levels
            .iter()
            .map(|level| {
                let probs: Vec<f64> = level.prior.iter().map(|p| p.as_f64()).collect();
                rng.categorical(&probs)
            })
            .collect();
        let path = RenderingPath::new(class_id, nuisance_ids);
        let mut image = self.template_for_path(&path);
        if with_noise {
            let sigma = self.pixel_noise.sqrt();
            for v in image.iter_mut() {
                *v = *v + T::from_f64(rng.normal()) * sigma;
            }
        }
        (image, path)
    }

    /// Draw a training label from the leaf histogram of the given path.
    pub fn sample_label(&self, path: &RenderingPath, rng: &mut SeedStream) -> usize {
        let hist = self.leaf_histogram(self.leaf_index(path));
        let probs: Vec<f64> = hist.iter().map(|p| p.as_f64()).collect();
        rng.categorical(&probs)
    }

    /// Equivalent deep model with Λ = identity and α = mutation per level,
    /// so collapse and sampling agree with the additive form.
    pub fn to_deep(&self) -> DeepRm<T> {
        let levels = self
            .levels
            .iter()
            .map(|level| DeepLevel {
                transforms: vec![Matrix::identity(self.dim); level.mutations.len()],
                biases: level.mutations.clone(),
                noise_diag: vec![T::from_f64(1e-12); self.dim],
                prior: level.prior.clone(),
            })
            .collect();
        DeepRm::new(
            self.root_prior.clone(),
            self.root_templates.clone(),
            self.dim,
            levels,
            self.pixel_noise,
        )
        .expect("a valid evolutionary model converts to a valid deep model")
    }
}

fn check_prior<T: Scalar>(name: &str, prior: &[T], out: &mut Vec<Violation>) {
    if prior.is_empty() {
        out.push(Violation::new(name, "must be non-empty"));
        return;
    }
    if prior.iter().any(|p| !p.is_finite() || *p < T::zero()) {
        out.push(Violation::new(name, "entries must be finite and nonnegative"));
    }
    let mut sum = T::zero();
    for p in prior {
        sum = sum + *p;
    }
    if (sum - T::one()).abs().as_f64() > PRIOR_TOL {
        out.push(Violation::new(name, "not normalized"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep::DEFAULT_PATH_CAP;

    pub(crate) fn two_level_toy() -> EvoDrm<f64> {
        EvoDrm::new(
            vec![0.0, 0.0],
            2,
            vec![1.0],
            vec![
                EvoLevel {
                    mutations: vec![vec![1.0, 0.0]],
                    prior: vec![1.0],
                },
                EvoLevel {
                    mutations: vec![vec![0.0, 1.0]],
                    prior: vec![1.0],
                },
            ],
            vec![vec![1.0]],
            1,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn additive_accumulation() {
        let model = two_level_toy();
        let path = RenderingPath::new(0, vec![0, 0]);
        assert_eq!(model.template_for_path(&path), vec![1.0, 1.0]);
    }

    #[test]
    fn zero_mutations_yield_root() {
        let model = EvoDrm::new(
            vec![2.0, 3.0],
            2,
            vec![1.0],
            vec![EvoLevel {
                mutations: vec![vec![0.0, 0.0]],
                prior: vec![1.0],
            }],
            vec![vec![1.0]],
            1,
            1.0,
        )
        .unwrap();
        let mut rng = SeedStream::new(0);
        let (image, _) = model.sample(false, &mut rng);
        assert_eq!(image, vec![2.0, 3.0]);
    }

    #[test]
    fn matches_deep_collapse() {
        let model = two_level_toy();
        let deep = model.to_deep();
        let shallow = deep.collapse(DEFAULT_PATH_CAP).unwrap();
        assert_eq!(shallow.template(0, 0), &[1.0, 1.0]);
        let path = RenderingPath::new(0, vec![0, 0]);
        assert_eq!(
            model.template_for_path(&path),
            deep.template_for_path(&path)
        );
    }

    #[test]
    fn histogram_count_enforced() {
        let bad = EvoDrm {
            root_templates: vec![0.0, 0.0],
            dim: 2,
            root_prior: vec![1.0],
            levels: vec![EvoLevel {
                mutations: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
                prior: vec![0.5, 0.5],
            }],
            leaf_histograms: vec![vec![1.0]],
            label_count: 1,
            pixel_noise: 1.0,
        };
        assert!(!bad.validate().is_empty());
    }
}
