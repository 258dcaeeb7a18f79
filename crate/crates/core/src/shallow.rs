//! The shallow rendering model and its natural parametrization.

use crate::error::{ModelError, Violation};
use crate::scalar::{norm_sq, Scalar};

pub const PRIOR_TOL: f64 = 1e-12;

/// Shallow rendering model: class and nuisance priors, one template per
/// (class, nuisance) cell, and a shared isotropic pixel noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowRm<T> {
    class_prior: Vec<T>,
    nuisance_prior: Vec<T>,
    templates: Vec<T>, // (C, G, D) row-major
    dim: usize,
    noise_var: T,
}

impl<T: Scalar> ShallowRm<T> {
    pub fn new(
        class_prior: Vec<T>,
        nuisance_prior: Vec<T>,
        templates: Vec<T>,
        dim: usize,
        noise_var: T,
    ) -> Result<Self, ModelError> {
        let model = Self {
            class_prior,
            nuisance_prior,
            templates,
            dim,
            noise_var,
        };
        let violations = model.validate();
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    /// Invariant check; empty result means the model is well-formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        check_prior("class_prior", &self.class_prior, &mut out);
        check_prior("nuisance_prior", &self.nuisance_prior, &mut out);
        if !(self.noise_var > T::zero()) || !self.noise_var.is_finite() {
            out.push(Violation::new("noise_var", "must be positive and finite"));
        }
        if self.dim == 0 {
            out.push(Violation::new("templates", "dimension must be >= 1"));
        }
        let expected = self.class_prior.len() * self.nuisance_prior.len() * self.dim;
        if self.templates.len() != expected {
            out.push(Violation::new("templates", "shape must be (|C|, |G|, D)"));
        }
        if self.templates.iter().any(|v| !v.is_finite()) {
            out.push(Violation::new("templates", "entries must be finite"));
        }
        out
    }

    pub fn class_count(&self) -> usize {
        self.class_prior.len()
    }

    pub fn nuisance_count(&self) -> usize {
        self.nuisance_prior.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_var(&self) -> T {
        self.noise_var
    }

    pub fn class_prior(&self) -> &[T] {
        &self.class_prior
    }

    pub fn nuisance_prior(&self) -> &[T] {
        &self.nuisance_prior
    }

    pub fn template(&self, c: usize, g: usize) -> &[T] {
        let start = (c * self.nuisance_count() + g) * self.dim;
        &self.templates[start..start + self.dim]
    }

    pub fn templates(&self) -> &[T] {
        &self.templates
    }

    pub fn log_prior(&self, c: usize, g: usize) -> T {
        self.class_prior[c].ln() + self.nuisance_prior[g].ln()
    }

    /// Natural parameters w = μ/σ², b = −‖μ‖²/(2σ²) + ln π_c π_g.
    ///
    /// The score ⟨w|I⟩ + b then equals the log joint of (c, g, I) up to a
    /// term that depends only on the input, so argmax classification over the
    /// natural parameters reproduces MAP classification.
    pub fn to_natural(&self) -> NaturalParams<T> {
        let c_count = self.class_count();
        let g_count = self.nuisance_count();
        let mut weights = Vec::with_capacity(self.templates.len());
        let mut biases = Vec::with_capacity(c_count * g_count);
        for c in 0..c_count {
            for g in 0..g_count {
                let mu = self.template(c, g);
                for v in mu {
                    weights.push(*v / self.noise_var);
                }
                let quad = norm_sq(mu) / (T::two() * self.noise_var);
                biases.push(-quad + self.log_prior(c, g));
            }
        }
        NaturalParams {
            class_count: c_count,
            nuisance_count: g_count,
            dim: self.dim,
            weights,
            biases,
        }
    }

    /// Input-only part of the Gaussian log density: −‖I‖²/(2σ²) − (D/2)ln(2πσ²).
    /// Adding it to ⟨w|I⟩ + b recovers the full log joint.
    pub fn input_log_constant(&self, image: &[T]) -> T {
        let two_pi = T::from_f64(std::f64::consts::TAU);
        let d = T::from_f64(self.dim as f64);
        -norm_sq(image) / (T::two() * self.noise_var)
            - d * T::half() * (two_pi * self.noise_var).ln()
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

/// Natural (canonical) parameters of a shallow model.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams<T> {
    class_count: usize,
    nuisance_count: usize,
    dim: usize,
    weights: Vec<T>, // (C, G, D)
    biases: Vec<T>,  // (C, G)
}

impl<T: Scalar> NaturalParams<T> {
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn nuisance_count(&self) -> usize {
        self.nuisance_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weight(&self, c: usize, g: usize) -> &[T] {
        let start = (c * self.nuisance_count + g) * self.dim;
        &self.weights[start..start + self.dim]
    }

    pub fn bias(&self, c: usize, g: usize) -> T {
        self.biases[c * self.nuisance_count + g]
    }

    /// ⟨w_cg | I⟩ + b_cg.
    pub fn score(&self, c: usize, g: usize, image: &[T]) -> T {
        crate::scalar::dot(self.weight(c, g), image) + self.bias(c, g)
    }
}

/// Uniform probability vector of the given length.
pub fn uniform_prior<T: Scalar>(n: usize) -> Vec<T> {
    let p = T::one() / T::from_f64(n as f64);
    vec![p; n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ShallowRm<f64> {
        ShallowRm::new(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0],
            2,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_template_unit_prior_gives_zero_naturals() {
        let m = ShallowRm::new(vec![1.0], vec![1.0], vec![0.0, 0.0], 2, 1.0).unwrap();
        let nat = m.to_natural();
        assert_eq!(nat.weight(0, 0), &[0.0, 0.0]);
        assert_eq!(nat.bias(0, 0), 0.0);
    }

    #[test]
    fn natural_params_follow_hand_substitution() {
        // σ²=1, μ=(1,0), π_c π_g = 1/4
        let nat = toy().to_natural();
        assert_eq!(nat.weight(0, 0), &[1.0, 0.0]);
        let expected = -0.5 + 0.25_f64.ln();
        assert!((nat.bias(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn natural_params_scale_with_noise_var() {
        // σ²=2, μ=(1,0), π_c π_g = 1
        let m = ShallowRm::new(vec![1.0_f64], vec![1.0], vec![1.0, 0.0], 2, 2.0).unwrap();
        let nat = m.to_natural();
        assert_eq!(nat.weight(0, 0), &[0.5, 0.0]);
        assert!((nat.bias(0, 0) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn unnormalized_prior_is_reported() {
        let m = ShallowRm {
            class_prior: vec![0.6, 0.6],
            nuisance_prior: vec![1.0],
            templates: vec![0.0, 0.0],
            dim: 1,
            noise_var: 1.0,
        };
        let violations = m.validate();
        assert!(violations
            .iter()
            .any(|v| v.field == "class_prior" && v.rule.contains("not normalized")));
    }

    #[test]
    fn valid_model_has_no_violations() {
        assert!(toy().validate().is_empty());
    }
}
