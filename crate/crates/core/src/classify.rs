//! Shallow-model classification: sum-product and max-sum over the natural
//! parameters, the switching/ReLU form, and the translational fast path.

use crate::error::ModelError;
use crate::image::Image;
use crate::scalar::{dot, log_sum_exp, norm_sq, Scalar};
use crate::shallow::{uniform_prior, NaturalParams, ShallowRm};

/// Outcome of sum-product classification.
#[derive(Debug, Clone)]
pub struct SpOutcome<T> {
    pub class_id: usize,
    /// Per-class log evidence ln Σ_g p(I, c, g).
    pub evidence: Vec<T>,
}

/// Outcome of max-sum classification.
#[derive(Debug, Clone)]
pub struct MsOutcome<T> {
    pub class_id: usize,
    pub nuisance_id: usize,
    /// ⟨w|I⟩ + b of the winning configuration.
    pub score: T,
    /// Per class: best nuisance and its score.
    pub per_class: Vec<(usize, T)>,
}

fn check_shape<T: Scalar>(model: &ShallowRm<T>, image: &Image<T>) -> Result<(), ModelError> {
    if image.dim() != model.dim() {
        return Err(ModelError::ShapeMismatch {
            context: "classification image",
            expected: model.dim(),
            got: image.dim(),
        });
    }
    Ok(())
}

/// Sum-product classifier: per-class evidence by overflow-safe log-sum-exp of
/// the natural-parameter scores, plus the input-only Gaussian constant so the
/// result is the exact log joint evidence ln p(I, c) marginalized over g.
pub fn sp_classify<T: Scalar>(
    model: &ShallowRm<T>,
    image: &Image<T>,
) -> Result<SpOutcome<T>, ModelError> {
    check_shape(model, image)?;
    let nat = model.to_natural();
    let pixels = image.as_slice();
    let constant = model.input_log_constant(pixels);
    let mut evidence = Vec::with_capacity(model.class_count());
    for c in 0..model.class_count() {
        let scores: Vec<T> = (0..model.nuisance_count())
            .map(|g| nat.score(c, g, pixels))
            .collect();
        evidence.push(log_sum_exp(&scores) + constant);
    }
    let class_id = argmax(&evidence);
    Ok(SpOutcome { class_id, evidence })
}

/// Max-sum classifier: argmax over (c, g) of ⟨w|I⟩ + b, ties lowest (c, g).
pub fn ms_classify<T: Scalar>(
    model: &ShallowRm<T>,
    image: &Image<T>,
) -> Result<MsOutcome<T>, ModelError> {
    check_shape(model, image)?;
    let nat = model.to_natural();
    ms_classify_natural(&nat, image.as_slice())
}

/// Max-sum over precomputed natural parameters (shared by the relaxation
/// consistency checks).
pub fn ms_classify_natural<T: Scalar>(
    nat: &NaturalParams<T>,
    pixels: &[T],
) -> Result<MsOutcome<T>, ModelError> {
    if pixels.len() != nat.dim() {
        return Err(ModelError::ShapeMismatch {
            context: "classification image",
            expected: nat.dim(),
            got: pixels.len(),
        });
    }
    let mut per_class = Vec::with_capacity(nat.class_count());
    for c in 0..nat.class_count() {
        let mut best_g = 0;
        let mut best = T::neg_infinity();
        for g in 0..nat.nuisance_count() {
            let s = nat.score(c, g, pixels);
            if s > best {
                best = s;
                best_g = g;
            }
        }
        per_class.push((best_g, best));
    }
    let mut class_id = 0;
    let mut best = T::neg_infinity();
    for (c, (_, s)) in per_class.iter().enumerate() {
        if *s > best {
            best = *s;
            class_id = c;
        }
    }
    Ok(MsOutcome {
        class_id,
        nuisance_id: per_class[class_id].0,
        score: best,
        per_class,
    })
}

/// ON/OFF state of a patch renderer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchState {
    Off,
    On,
}

/// Explicit max over the switching variable: branch values are 0 for OFF and
/// `u` for ON; ties go to OFF (the lower index).
pub fn switching_branch_max<T: Scalar>(u: T) -> (SwitchState, T) {
    let off = T::zero();
    let on = u;
    if on > off {
        (SwitchState::On, on)
    } else {
        (SwitchState::Off, off)
    }
}

/// Closed-form counterpart of [`switching_branch_max`].
pub fn relu<T: Scalar>(u: T) -> T {
    if u > T::zero() {
        u
    } else {
        T::zero()
    }
}

#[derive(Debug, Clone)]
pub struct ReluOutcome<T> {
    pub class_id: usize,
    pub nuisance_id: usize,
    pub switch: SwitchState,
    /// Winning score from the explicit two-branch max (plus the log prior).
    pub score: T,
    /// Same quantity via the ReLU closed form; must equal `score` exactly.
    pub relu_score: T,
}

/// Max-sum classification with switching variables.
///
/// Per configuration the switched part of the log joint is
/// u = ⟨w|I⟩ − ‖μ‖²/(2σ²) + ln(π_on/π_off); the explicit branch max over
/// a ∈ {OFF, ON} of {0, u} and its ReLU closed form are both computed and
/// must agree bit for bit. The class/nuisance prior stays outside the branch,
/// so for non-uniform priors the decision is still the exact joint max.
pub fn ms_classify_relu<T: Scalar>(
    model: &ShallowRm<T>,
    switch_prior: T,
    image: &Image<T>,
) -> Result<ReluOutcome<T>, ModelError> {
    if !(switch_prior > T::zero()) || !(switch_prior < T::one()) {
        return Err(ModelError::BadArgument(
            "switch prior must lie strictly inside (0, 1)".into(),
        ));
    }
    check_shape(model, image)?;
    let pixels = image.as_slice();
    let log_odds = (switch_prior / (T::one() - switch_prior)).ln();
    let two_var = T::two() * model.noise_var();

    let mut best: Option<ReluOutcome<T>> = None;
    let mut best_total = T::neg_infinity();
    for c in 0..model.class_count() {
        for g in 0..model.nuisance_count() {
            let mu = model.template(c, g);
            let u = dot(mu, pixels) / model.noise_var() - norm_sq(mu) / two_var + log_odds;
            let (switch, branch_val) = switching_branch_max(u);
            let relu_val = relu(u);
            let log_prior = model.log_prior(c, g);
            let total = branch_val + log_prior;
            if total > best_total {
                best_total = total;
                best = Some(ReluOutcome {
                    class_id: c,
                    nuisance_id: g,
                    switch,
                    score: total,
                    relu_score: relu_val + log_prior,
                });
            }
        }
    }
    Ok(best.expect("model has at least one configuration"))
}

/// Valid (unpadded) cross-correlation window spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranslationalSpec {
    pub template_height: usize,
    pub template_width: usize,
    pub stride: usize,
}

impl TranslationalSpec {
    /// Offsets at which the template fits, row-major, stride-spaced.
    pub fn offsets(&self, height: usize, width: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if self.template_height > height || self.template_width > width {
            return out;
        }
        let mut y = 0;
        while y + self.template_height <= height {
            let mut x = 0;
            while x + self.template_width <= width {
                out.push((y, x));
                x += self.stride;
            }
            y += self.stride;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TranslationalOutcome<T> {
    pub class_id: usize,
    pub offset: (usize, usize),
    pub score: T,
    /// Per class: best offset and raw correlation score.
    pub per_class: Vec<((usize, usize), T)>,
    pub offsets: Vec<(usize, usize)>,
}

/// Max-sum classification under translational nuisances: per class, the score
/// is the max over valid offsets of the cross-correlation of the template
/// with the image. Summation is offset-major, then channel/pixel row-major,
/// matching the expanded shifted-template model bit for bit.
pub fn ms_classify_translational<T: Scalar>(
    templates: &[Image<T>],
    spec: &TranslationalSpec,
    image: &Image<T>,
) -> Result<TranslationalOutcome<T>, ModelError> {
    if templates.is_empty() {
        return Err(ModelError::BadArgument("need at least one class template".into()));
    }
    if spec.stride == 0 {
        return Err(ModelError::BadArgument("stride must be >= 1".into()));
    }
    for t in templates {
        if t.channels() != image.channels()
            || t.height() != spec.template_height
            || t.width() != spec.template_width
        {
            return Err(ModelError::ShapeMismatch {
                context: "translational template",
                expected: image.channels() * spec.template_height * spec.template_width,
                got: t.dim(),
            });
        }
    }
    let offsets = spec.offsets(image.height(), image.width());
    if offsets.is_empty() {
        return Err(ModelError::BadArgument(
            "template does not fit inside the image at any offset".into(),
        ));
    }

    let mut per_class = Vec::with_capacity(templates.len());
    for template in templates {
        let mut best_offset = offsets[0];
        let mut best = T::neg_infinity();
        for &(oy, ox) in &offsets {
            let mut acc = T::zero();
            for c in 0..image.channels() {
                for ty in 0..spec.template_height {
                    for tx in 0..spec.template_width {
                        acc = acc + template.get(c, ty, tx) * image.get(c, oy + ty, ox + tx);
                    }
                }
            }
            if acc > best {
                best = acc;
                best_offset = (oy, ox);
            }
        }
        per_class.push((best_offset, best));
    }
    let mut class_id = 0;
    let mut best = T::neg_infinity();
    for (c, (_, s)) in per_class.iter().enumerate() {
        if *s > best {
            best = *s;
            class_id = c;
        }
    }
    Ok(TranslationalOutcome {
        class_id,
        offset: per_class[class_id].0,
        score: best,
        per_class,
        offsets,
    })
}

/// The shallow model whose templates are zero-padded shifted copies of the
/// class templates, one nuisance value per offset (offset-major order),
/// uniform priors, unit noise. The translational fast path must agree with
/// max-sum classification on this model exactly.
pub fn expand_translational<T: Scalar>(
    templates: &[Image<T>],
    spec: &TranslationalSpec,
    image_shape: (usize, usize, usize),
) -> Result<ShallowRm<T>, ModelError> {
    let (channels, height, width) = image_shape;
    let offsets = spec.offsets(height, width);
    if offsets.is_empty() {
        return Err(ModelError::BadArgument(
            "template does not fit inside the image at any offset".into(),
        ));
    }
    let dim = channels * height * width;
    let mut expanded = Vec::with_capacity(templates.len() * offsets.len() * dim);
    for template in templates {
        for &(oy, ox) in &offsets {
            let mut padded = vec![T::zero(); dim];
            for c in 0..channels {
                for ty in 0..spec.template_height {
                    for tx in 0..spec.template_width {
                        let idx = (c * height + oy + ty) * width + ox + tx;
                        padded[idx] = template.get(c, ty, tx);
                    }
                }
            }
            expanded.extend(padded);
        }
    }
    ShallowRm::new(
        uniform_prior(templates.len()),
        uniform_prior(offsets.len()),
        expanded,
        dim,
        T::one(),
    )
}

fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    let mut best_val = T::neg_infinity();
    for (i, v) in values.iter().enumerate() {
        if *v > best_val {
            best_val = *v;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

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
    fn sp_toy_prefers_c1_with_hand_enumerated_evidence() {
        let image = Image::vector(vec![0.9, -0.1]).unwrap();
        let out = sp_classify(&toy(), &image).unwrap();
        assert_eq!(out.class_id, 0);
        // evidences before shared constants: ln 3.3644 vs ln 1.5118
        let shared = out.evidence[0] - 3.364440529_f64.ln();
        assert!((out.evidence[1] - shared - 1.511740577_f64.ln()).abs() < 1e-8);
        // dual route: direct-density enumeration
        let exact = oracle::exact_marginal(&toy(), &image).unwrap();
        for (got, want) in out.evidence.iter().zip(exact.iter()) {
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn sp_with_single_nuisance_ranks_like_ms() {
        let model = ShallowRm::new(
            vec![0.4, 0.6],
            vec![1.0],
            vec![1.0, 0.0, 0.0, 1.0],
            2,
            0.7,
        )
        .unwrap();
        let image = Image::vector(vec![0.3, 0.1]).unwrap();
        let sp = sp_classify(&model, &image).unwrap();
        let ms = ms_classify(&model, &image).unwrap();
        assert_eq!(sp.class_id, ms.class_id);
    }

    #[test]
    fn sp_eventually_picks_own_template() {
        let model = ShallowRm::new(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![5.0, 0.0, 0.0, 5.0, -5.0, 0.0, 0.0, -5.0],
            2,
            0.05,
        )
        .unwrap();
        let image = Image::vector(vec![5.0, 0.0]).unwrap();
        assert_eq!(sp_classify(&model, &image).unwrap().class_id, 0);
    }

    #[test]
    fn ms_toy_brute_force_agrees() {
        let image = Image::vector(vec![0.9, -0.1]).unwrap();
        let out = ms_classify(&toy(), &image).unwrap();
        assert_eq!((out.class_id, out.nuisance_id), (0, 0));
        let b = -0.5 + 0.25_f64.ln();
        assert!((out.score - (0.9 + b)).abs() < 1e-12);
    }

    #[test]
    fn ms_self_match_dominates() {
        let model = ShallowRm::new(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![3.0, 0.0, 0.0, 3.0, -3.0, 0.0, 0.0, -3.0],
            2,
            0.01,
        )
        .unwrap();
        let image = Image::vector(vec![0.0, -3.0]).unwrap();
        let out = ms_classify(&model, &image).unwrap();
        assert_eq!((out.class_id, out.nuisance_id), (1, 1));
    }

    #[test]
    fn ms_identical_templates_tie_break_by_prior_then_index() {
        let model = ShallowRm::new(
            vec![0.3, 0.7],
            vec![0.5, 0.5],
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            2,
            1.0,
        )
        .unwrap();
        let image = Image::vector(vec![0.2, 0.2]).unwrap();
        let out = ms_classify(&model, &image).unwrap();
        // higher prior wins; within the class, lowest nuisance index
        assert_eq!((out.class_id, out.nuisance_id), (1, 0));

        let uniform = ShallowRm::new(
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            2,
            1.0,
        )
        .unwrap();
        let out = ms_classify(&uniform, &image).unwrap();
        assert_eq!((out.class_id, out.nuisance_id), (0, 0));
    }

    #[test]
    fn relu_positive_passthrough_and_negative_clamp() {
        let (state, val) = switching_branch_max(2.0_f64);
        assert_eq!(state, SwitchState::On);
        assert_eq!(val, 2.0);
        assert_eq!(relu(2.0_f64), 2.0);

        let (state, val) = switching_branch_max(-3.0_f64);
        assert_eq!(state, SwitchState::Off);
        assert_eq!(val, 0.0);
        assert_eq!(relu(-3.0_f64), 0.0);
    }

    #[test]
    fn relu_branch_agreement_on_random_models() {
        let mut rng = crate::rng::SeedStream::new(99);
        for _ in 0..100 {
            let templates: Vec<f64> = (0..3 * 2 * 4).map(|_| rng.normal()).collect();
            let model = ShallowRm::new(
                uniform_prior(3),
                uniform_prior(2),
                templates,
                4,
                0.5 + rng.uniform(),
            )
            .unwrap();
            let image =
                Image::vector((0..4).map(|_| rng.normal()).collect::<Vec<f64>>()).unwrap();
            let out = ms_classify_relu(&model, 0.3, &image).unwrap();
            assert_eq!(out.score, out.relu_score);
        }
    }

    #[test]
    fn relu_rejects_degenerate_switch_prior() {
        let image = Image::vector(vec![0.0, 0.0]).unwrap();
        assert!(ms_classify_relu(&toy(), 1.0, &image).is_err());
        assert!(ms_classify_relu(&toy(), 0.0, &image).is_err());
    }

    #[test]
    fn translational_1d_example() {
        let w = Image::new(1, 1, 2, vec![1.0, -1.0]).unwrap();
        let image = Image::new(1, 1, 4, vec![0.0, 1.0, 0.0, 2.0]).unwrap();
        let spec = TranslationalSpec {
            template_height: 1,
            template_width: 2,
            stride: 1,
        };
        let out = ms_classify_translational(&[w.clone()], &spec, &image).unwrap();
        assert_eq!(out.offset, (0, 1));
        assert_eq!(out.score, 1.0);

        let strided = TranslationalSpec { stride: 2, ..spec };
        let out = ms_classify_translational(&[w], &strided, &image).unwrap();
        assert_eq!(out.offsets, vec![(0, 0), (0, 2)]);
        assert_eq!(out.offset, (0, 0));
        assert_eq!(out.score, -1.0);
    }

    #[test]
    fn delta_filter_finds_image_maximum() {
        let w = Image::new(1, 1, 1, vec![1.0]).unwrap();
        let image = Image::new(1, 1, 5, vec![0.3, -0.2, 2.5, 0.9, 2.5]).unwrap();
        let spec = TranslationalSpec {
            template_height: 1,
            template_width: 1,
            stride: 1,
        };
        let out = ms_classify_translational(&[w], &spec, &image).unwrap();
        assert_eq!(out.score, 2.5);
        assert_eq!(out.offset, (0, 2)); // first maximum wins ties
    }

    #[test]
    fn expanded_model_matches_fast_path_bitwise() {
        let mut rng = crate::rng::SeedStream::new(5);
        let template_data: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let w = Image::new(1, 2, 3, template_data).unwrap();
        let image_data: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
        let image = Image::new(1, 4, 5, image_data).unwrap();
        let spec = TranslationalSpec {
            template_height: 2,
            template_width: 3,
            stride: 1,
        };
        let fast = ms_classify_translational(&[w.clone()], &spec, &image).unwrap();
        let expanded = expand_translational(&[w], &spec, image.shape()).unwrap();
        let nat = expanded.to_natural();
        let ms = ms_classify(&expanded, &image).unwrap();
        // every offset's correlation reappears bit-exactly behind the bias
        for (g, &(oy, ox)) in fast.offsets.iter().enumerate() {
            let mut corr = 0.0;
            for ty in 0..2 {
                for tx in 0..3 {
                    corr += expanded.template(0, g)
                        [(oy + ty) * image.width() + ox + tx]
                        * image.get(0, oy + ty, ox + tx);
                }
            }
            assert_eq!(nat.score(0, g, image.as_slice()), corr + nat.bias(0, g));
        }
        assert_eq!(fast.offsets[ms.nuisance_id], fast.offset);
        assert_eq!(ms.score, fast.score + nat.bias(0, ms.nuisance_id));
    }
}
