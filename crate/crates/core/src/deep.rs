//! The deep rendering model: a chain of per-level affine nuisance transforms
//! applied to an abstract top-level template.

use crate::error::{ModelError, Violation};
use crate::image::Image;
use crate::linalg::Matrix;
use crate::path::{PathIndexer, RenderingPath};
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::shallow::{ShallowRm, PRIOR_TOL};

pub const DEFAULT_PATH_CAP: u128 = 1_000_000;

/// One rendering level: per-nuisance affine transforms (out_dim × in_dim),
/// biases, a diagonal noise covariance on the output, and the nuisance prior.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepLevel<T> {
    pub transforms: Vec<Matrix<T>>,
    pub biases: Vec<Vec<T>>,
    pub noise_diag: Vec<T>,
    pub prior: Vec<T>,
}

impl<T: Scalar> DeepLevel<T> {
    pub fn nuisance_count(&self) -> usize {
        self.transforms.len()
    }

    pub fn in_dim(&self) -> usize {
        self.transforms[0].cols()
    }

    pub fn out_dim(&self) -> usize {
        self.transforms[0].rows()
    }
}

/// Deep rendering model, levels ordered top (coarsest, index 0 = level L)
/// to bottom (finest, last = level 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DeepRm<T> {
    top_prior: Vec<T>,
    top_templates: Vec<T>, // (|C|, D^L)
    top_dim: usize,
    levels: Vec<DeepLevel<T>>,
    pixel_noise: T,
}

impl<T: Scalar> DeepRm<T> {
    pub fn new(
        top_prior: Vec<T>,
        top_templates: Vec<T>,
        top_dim: usize,
        levels: Vec<DeepLevel<T>>,
        pixel_noise: T,
    ) -> Result<Self, ModelError> {
        let model = Self {
            top_prior,
            top_templates,
            top_dim,
            levels,
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
        check_prior("top_prior", &self.top_prior, &mut out);
        if self.top_dim == 0 {
            out.push(Violation::new("top_templates", "dimension must be >= 1"));
        }
        if self.top_templates.len() != self.top_prior.len() * self.top_dim {
            out.push(Violation::new("top_templates", "shape must be (|C^L|, D^L)"));
        }
        if self.top_templates.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new("top_templates", "entries must be finite"));
        }
        if self.levels.is_empty() {
            out.push(Violation::new("levels", "at least one level required"));
        }
        if !(self.pixel_noise > T::zero()) || !self.pixel_noise.is_finite() {
            out.push(Violation::new("pixel_noise", "must be positive and finite"));
        }
        let mut expected_in = self.top_dim;
        for (i, level) in self.levels.iter().enumerate() {
            let label = format!("levels[{i}]");
            if level.transforms.is_empty() {
                out.push(Violation::new(label.clone(), "needs >= 1 nuisance value"));
                continue;
            }
            let (rows, cols) = (level.out_dim(), level.in_dim());
            if cols != expected_in {
                out.push(Violation::new(
                    format!("{label}.transforms"),
                    "level dimension mismatch",
                ));
            }
            for (g, m) in level.transforms.iter().enumerate() {
                if m.rows() != rows || m.cols() != cols {
                    out.push(Violation::new(
                        format!("{label}.transforms[{g}]"),
                        "inconsistent shape within level",
                    ));
                }
                if m.data().iter().any(|v| !v.is_finite()) {
                    out.push(Violation::new(
                        format!("{label}.transforms[{g}]"),
                        "entries must be finite",
                    ));
                }
            }
            if level.biases.len() != level.transforms.len()
                || level.biases.iter().any(|b| b.len() != rows)
            {
                out.push(Violation::new(
                    format!("{label}.biases"),
                    "one bias of output dimension per nuisance value",
                ));
            }
            if level.noise_diag.len() != rows {
                out.push(Violation::new(
                    format!("{label}.noise_diag"),
                    "must match output dimension",
                ));
            }
            if level
                .noise_diag
                .iter()
                .any(|v| !(*v > T::zero()) || !v.is_finite())
            {
                out.push(Violation::new(
                    format!("{label}.noise_diag"),
                    "entries must be positive",
                ));
            }
            if level.prior.len() != level.transforms.len() {
                out.push(Violation::new(
                    format!("{label}.prior"),
                    "one probability per nuisance value",
                ));
            } else {
                check_prior(&format!("{label}.prior"), &level.prior, &mut out);
            }
            expected_in = rows;
        }
        out
    }

    pub fn class_count(&self) -> usize {
        self.top_prior.len()
    }

    pub fn top_dim(&self) -> usize {
        self.top_dim
    }

    pub fn levels(&self) -> &[DeepLevel<T>] {
        &self.levels
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn pixel_noise(&self) -> T {
        self.pixel_noise
    }

    pub fn top_prior(&self) -> &[T] {
        &self.top_prior
    }

    pub fn top_template(&self, c: usize) -> &[T] {
        &self.top_templates[c * self.top_dim..(c + 1) * self.top_dim]
    }

    /// Output (pixel) dimension after the full rendering chain.
    pub fn pixel_dim(&self) -> usize {
        self.levels.last().map_or(self.top_dim, |l| l.out_dim())
    }

    pub fn paths(&self) -> PathIndexer {
        PathIndexer::new(
            self.class_count(),
            self.levels.iter().map(|l| l.nuisance_count()).collect(),
        )
    }

    pub fn log_path_prior(&self, path: &RenderingPath) -> T {
        let mut acc = self.top_prior[path.class_id].ln();
        for (level, g) in self.levels.iter().zip(path.nuisance_ids.iter()) {
            acc = acc + level.prior[*g].ln();
        }
        acc
    }

    /// Noise-free rendering of one path; returns the intermediate template at
    /// every level, coarsest first, ending with the pixel-level template.
    pub fn render(&self, path: &RenderingPath) -> Vec<Vec<T>> {
        let mut stages = Vec::with_capacity(self.levels.len() + 1);
        let mut current = self.top_template(path.class_id).to_vec();
        stages.push(current.clone());
        for (level, g) in self.levels.iter().zip(path.nuisance_ids.iter()) {
            let mut next = level.transforms[*g].matvec(&current);
            for (v, b) in next.iter_mut().zip(level.biases[*g].iter()) {
                *v = *v + *b;
            }
            stages.push(next.clone());
            current = next;
        }
        stages
    }

    /// Pixel-level template of one path (the last stage of [`Self::render`]).
    pub fn template_for_path(&self, path: &RenderingPath) -> Vec<T> {
        self.render(path).pop().expect("render yields stages")
    }

    /// Draw a path from the priors.
    pub fn sample_path(&self, rng: &mut SeedStream) -> RenderingPath {
        let probs: Vec<f64> = self.top_prior.iter().map(|p| p.as_f64()).collect();
        let class_id = rng.categorical(&probs);
        let nuisance_ids = self
            .levels
            .iter()
            .map(|level| {
                let probs: Vec<f64> = level.prior.iter().map(|p| p.as_f64()).collect();
                rng.categorical(&probs)
            })
            .collect();
        RenderingPath::new(class_id, nuisance_ids)
    }

    /// Sample an image. Draws the path when none is given, then renders level
    /// by level adding N(0, Ψℓ) at each stage and N(0, σ²) at the pixels.
    /// With `with_noise` off the output is exactly the rendered template.
    pub fn sample(
        &self,
        path: Option<&RenderingPath>,
        with_noise: bool,
        rng: &mut SeedStream,
    ) -> DeepSample<T> {
        let path = match path {
            Some(p) => p.clone(),
            None => self.sample_path(rng),
        };
        let mut stages = Vec::with_capacity(self.levels.len() + 1);
        let mut current = self.top_template(path.class_id).to_vec();
        stages.push(current.clone());
        for (level, g) in self.levels.iter().zip(path.nuisance_ids.iter()) {
            let mut next = level.transforms[*g].matvec(&current);
            for (v, b) in next.iter_mut().zip(level.biases[*g].iter()) {
                *v = *v + *b;
            }
            if with_noise {
                for (v, psi) in next.iter_mut().zip(level.noise_diag.iter()) {
                    *v = *v + T::from_f64(rng.normal()) * psi.sqrt();
                }
            }
            stages.push(next.clone());
            current = next;
        }
        let sigma = self.pixel_noise.sqrt();
        let mut image = current;
        if with_noise {
            for v in image.iter_mut() {
                *v = *v + T::from_f64(rng.normal()) * sigma;
            }
        }
        DeepSample {
            image,
            path,
            intermediates: stages,
        }
    }

    /// Flatten the rendering chain into a shallow model whose (c, g) index
    /// enumerates rendering paths; the path prior is the product of level
    /// priors and the noise is the pixel noise.
    pub fn collapse(&self, cap: u128) -> Result<ShallowRm<T>, ModelError> {
        let indexer = self.paths();
        let total = indexer.total();
        if total > cap {
            return Err(ModelError::EnumerationTooLarge { count: total, cap });
        }
        let g_total = indexer.nuisance_total() as usize;
        let pixel_dim = self.pixel_dim();
        let mut templates = Vec::with_capacity(self.class_count() * g_total * pixel_dim);
        let mut nuisance_prior = vec![T::zero(); g_total];
        for c in 0..self.class_count() {
            for g in 0..g_total {
                let path = indexer.path(c, g);
                templates.extend(self.template_for_path(&path));
                if c == 0 {
                    let mut p = T::one();
                    for (level, id) in self.levels.iter().zip(path.nuisance_ids.iter()) {
                        p = p * level.prior[*id];
                    }
                    nuisance_prior[g] = p;
                }
            }
        }
        ShallowRm::new(
            self.top_prior.clone(),
            nuisance_prior,
            templates,
            pixel_dim,
            self.pixel_noise,
        )
    }
}

pub struct DeepSample<T> {
    pub image: Vec<T>,
    pub path: RenderingPath,
    /// μ^L … μ^0, coarsest first (including noise when sampled with noise).
    pub intermediates: Vec<Vec<T>>,
}

impl<T: Scalar> DeepSample<T> {
    pub fn into_image(self, channels: usize, height: usize, width: usize) -> Image<T> {
        Image::new(channels, height, width, self.image).expect("sampled image is finite")
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

/// Identity-transform level with the given nuisance count: every transform is
/// the identity, biases zero. Useful as a structural building block.
pub fn identity_level<T: Scalar>(dim: usize, nuisances: usize, noise: T) -> DeepLevel<T> {
    DeepLevel {
        transforms: vec![Matrix::identity(dim); nuisances],
        biases: vec![vec![T::zero(); dim]; nuisances],
        noise_diag: vec![noise; dim],
        prior: crate::shallow::uniform_prior(nuisances),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// L=2 hand model: top template (1), Λ² = [[1],[0]], α² = 0,
    /// Λ¹ = I₂, α¹ = (0, 1); composed template is (1, 1).
    pub(crate) fn hand_model() -> DeepRm<f64> {
        let level2 = DeepLevel {
            transforms: vec![Matrix::from_rows(2, 1, vec![1.0, 0.0])],
            biases: vec![vec![0.0, 0.0]],
            noise_diag: vec![1e-9, 1e-9],
            prior: vec![1.0],
        };
        let level1 = DeepLevel {
            transforms: vec![Matrix::identity(2)],
            biases: vec![vec![0.0, 1.0]],
            noise_diag: vec![1e-9, 1e-9],
            prior: vec![1.0],
        };
        DeepRm::new(vec![1.0], vec![1.0], 1, vec![level2, level1], 1.0).unwrap()
    }

    #[test]
    fn identity_chain_collapse_keeps_top_templates() {
        let model = DeepRm::new(
            vec![0.5, 0.5],
            vec![1.0, 2.0, 3.0, 4.0],
            2,
            vec![identity_level(2, 1, 1e-9)],
            1.0,
        )
        .unwrap();
        let shallow = model.collapse(DEFAULT_PATH_CAP).unwrap();
        assert_eq!(shallow.template(0, 0), &[1.0, 2.0]);
        assert_eq!(shallow.template(1, 0), &[3.0, 4.0]);
    }

    #[test]
    fn hand_composition_yields_expected_template() {
        let shallow = hand_model().collapse(DEFAULT_PATH_CAP).unwrap();
        assert_eq!(shallow.template(0, 0), &[1.0, 1.0]);
    }

    #[test]
    fn collapse_priors_sum_to_one() {
        let mut levels = Vec::new();
        levels.push(DeepLevel {
            transforms: vec![Matrix::identity(3); 4],
            biases: vec![vec![0.0; 3]; 4],
            noise_diag: vec![1e-6; 3],
            prior: vec![0.1, 0.2, 0.3, 0.4],
        });
        levels.push(DeepLevel {
            transforms: vec![Matrix::identity(3); 3],
            biases: vec![vec![0.0; 3]; 3],
            noise_diag: vec![1e-6; 3],
            prior: vec![0.5, 0.25, 0.25],
        });
        let model = DeepRm::new(
            vec![0.25, 0.75],
            vec![0.0; 6],
            3,
            levels,
            0.5,
        )
        .unwrap();
        let shallow = model.collapse(DEFAULT_PATH_CAP).unwrap();
        let sum: f64 = shallow.nuisance_prior().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn collapse_respects_cap() {
        let model = DeepRm::new(
            vec![0.5, 0.5],
            vec![0.0; 4],
            2,
            vec![identity_level(2, 3, 1e-6)],
            1.0,
        )
        .unwrap();
        assert!(matches!(
            model.collapse(5),
            Err(ModelError::EnumerationTooLarge { count: 6, cap: 5 })
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let level2 = DeepLevel {
            transforms: vec![Matrix::from_rows(3, 2, vec![0.0; 6])],
            biases: vec![vec![0.0; 3]],
            noise_diag: vec![1e-6; 3],
            prior: vec![1.0],
        };
        // expects input dim 4, previous level emits 3
        let level1 = DeepLevel {
            transforms: vec![Matrix::from_rows(4, 4, vec![0.0; 16])],
            biases: vec![vec![0.0; 4]],
            noise_diag: vec![1e-6; 4],
            prior: vec![1.0],
        };
        let model = DeepRm {
            top_prior: vec![1.0],
            top_templates: vec![0.0, 0.0],
            top_dim: 2,
            levels: vec![level2, level1],
            pixel_noise: 1.0,
        };
        let violations = model.validate();
        assert!(violations
            .iter()
            .any(|v| v.rule.contains("level dimension mismatch")));
    }

    #[test]
    fn noiseless_sampling_matches_collapse() {
        let model = hand_model();
        let mut rng = SeedStream::new(1);
        let sample = model.sample(None, false, &mut rng);
        assert_eq!(sample.image, vec![1.0, 1.0]);
        assert_eq!(sample.intermediates.first().unwrap(), &vec![1.0]);
    }
}
