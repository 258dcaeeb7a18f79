//! Brute-force ground truth by exhaustive enumeration.
//!
//! Everything here is computed in double precision with compensated
//! summation, independently of the fast engine paths it certifies: log
//! densities are evaluated from the squared residual directly, never through
//! the natural parametrization.

use crate::error::ModelError;
use crate::image::Image;
use crate::scalar::Scalar;
use crate::shallow::ShallowRm;

pub const MAX_CONFIGURATIONS: u128 = 1_000_000;
pub const MAX_DIM: usize = 10_000;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Exhaustive per-configuration scores for one (model, image) instance.
#[derive(Debug, Clone)]
pub struct EnumerationReport {
    pub class_count: usize,
    pub nuisance_count: usize,
    /// ln p(I, c, g), laid out (c, g) row-major.
    pub log_joints: Vec<f64>,
    pub map_class: usize,
    pub map_nuisance: usize,
    pub map_log_joint: f64,
    /// ln Σ_g p(I, c, g) per class.
    pub class_log_marginals: Vec<f64>,
    /// ln p(I) = log-sum-exp over all configurations.
    pub partition: f64,
}

fn check_caps<T: Scalar>(model: &ShallowRm<T>) -> Result<(), ModelError> {
    let configs = model.class_count() as u128 * model.nuisance_count() as u128;
    if configs > MAX_CONFIGURATIONS {
        return Err(ModelError::EnumerationTooLarge {
            count: configs,
            cap: MAX_CONFIGURATIONS,
        });
    }
    if model.dim() > MAX_DIM {
        return Err(ModelError::BadArgument(format!(
            "image dimension {} exceeds oracle cap {MAX_DIM}",
            model.dim()
        )));
    }
    Ok(())
}

/// ln N(I; μ, σ²1) via the squared residual, compensated.
fn log_gaussian(image: &[f64], template: &[f64], noise_var: f64) -> f64 {
    let mut ss = CompensatedSum::default();
    for (x, m) in image.iter().zip(template.iter()) {
        let r = x - m;
        ss.add(r * r);
    }
    let d = image.len() as f64;
    -0.5 * ss.value() / noise_var - 0.5 * d * (std::f64::consts::TAU * noise_var).ln()
}

pub fn enumeration_report<T: Scalar>(
    model: &ShallowRm<T>,
    image: &Image<T>,
) -> Result<EnumerationReport, ModelError> {
    check_caps(model)?;
    if image.dim() != model.dim() {
        return Err(ModelError::ShapeMismatch {
            context: "oracle image",
            expected: model.dim(),
            got: image.dim(),
        });
    }
    let pixels: Vec<f64> = image.as_slice().iter().map(|v| v.as_f64()).collect();
    let noise_var = model.noise_var().as_f64();
    let c_count = model.class_count();
    let g_count = model.nuisance_count();

    let mut log_joints = Vec::with_capacity(c_count * g_count);
    let mut best = f64::NEG_INFINITY;
    let (mut best_c, mut best_g) = (0, 0);
    for c in 0..c_count {
        for g in 0..g_count {
            let template: Vec<f64> = model.template(c, g).iter().map(|v| v.as_f64()).collect();
            let log_prior =
                model.class_prior()[c].as_f64().ln() + model.nuisance_prior()[g].as_f64().ln();
            let lj = log_prior + log_gaussian(&pixels, &template, noise_var);
            if lj > best {
                best = lj;
                best_c = c;
                best_g = g;
            }
            log_joints.push(lj);
        }
    }

    let class_log_marginals: Vec<f64> = (0..c_count)
        .map(|c| log_sum_exp_f64(&log_joints[c * g_count..(c + 1) * g_count]))
        .collect();
    let partition = log_sum_exp_f64(&log_joints);

    Ok(EnumerationReport {
        class_count: c_count,
        nuisance_count: g_count,
        log_joints,
        map_class: best_c,
        map_nuisance: best_g,
        map_log_joint: best,
        class_log_marginals,
        partition,
    })
}

/// Exact MAP configuration: argmax of ln p(c, g) + ln N(I; μ_cg, σ²1),
/// ties broken by lowest (c, g).
pub fn exact_map<T: Scalar>(
    model: &ShallowRm<T>,
    image: &Image<T>,
) -> Result<(usize, usize, f64), ModelError> {
    let report = enumeration_report(model, image)?;
    Ok((report.map_class, report.map_nuisance, report.map_log_joint))
}

/// Per-class log evidence ln Σ_g p(I, c, g) by stable log-sum-exp.
pub fn exact_marginal<T: Scalar>(
    model: &ShallowRm<T>,
    image: &Image<T>,
) -> Result<Vec<f64>, ModelError> {
    Ok(enumeration_report(model, image)?.class_log_marginals)
}

/// Shannon entropy of a label multiset, in bits; 0·log 0 taken as 0.
pub fn exact_entropy(labels: &[usize]) -> Result<f64, ModelError> {
    if labels.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let max = *labels.iter().max().unwrap();
    let mut counts = vec![0_usize; max + 1];
    for l in labels {
        counts[*l] += 1;
    }
    let n = labels.len() as f64;
    let mut acc = CompensatedSum::default();
    for count in counts {
        if count > 0 {
            let p = count as f64 / n;
            acc.add(-p * p.log2());
        }
    }
    Ok(acc.value())
}

fn log_sum_exp_f64(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add((v - max).exp());
    }
    max + acc.value().ln()
}
