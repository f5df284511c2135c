//! Central-finite-difference verification of the analytic gradients, run
//! through the full pipeline: both branches, correlation, and loss.

use rand::Rng;

use crate::error::Result;
use crate::tensor::Tensor3;

use super::{logistic_loss, siamese_backward, siamese_train_pass, LabelMap, NetGrads, Network};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub epsilon: f64,
    /// Total number of sampled parameter coordinates, spread across all
    /// parameter tensors.
    pub samples: usize,
    /// Fixed multiplier applied to the raw score map before the loss.
    pub score_scale: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            samples: 200,
            score_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub samples: usize,
}

/// Loss of one Siamese pair in train mode (running statistics untouched).
fn pair_loss(
    net: &mut Network<f64>,
    exemplar: &Tensor3<f64>,
    search: &Tensor3<f64>,
    label: &LabelMap,
    score_scale: f64,
) -> Result<f64> {
    let pass = siamese_train_pass(net, exemplar, search, false)?;
    let mut scaled = pass.score.clone();
    scaled.scale(score_scale);
    let (loss, _) = logistic_loss(&scaled, label)?;
    Ok(loss)
}

/// Analytic loss and parameter gradients for one pair.
pub fn analytic_grads(
    net: &Network<f64>,
    exemplar: &Tensor3<f64>,
    search: &Tensor3<f64>,
    label: &LabelMap,
    score_scale: f64,
) -> Result<(f64, NetGrads<f64>)> {
    let mut probe = net.clone();
    let pass = siamese_train_pass(&mut probe, exemplar, search, false)?;
    let mut scaled = pass.score.clone();
    scaled.scale(score_scale);
    let (loss, mut d_score) = logistic_loss(&scaled, label)?;
    d_score.scale(score_scale);
    let grads = siamese_backward(&probe, &pass, &d_score)?;
    Ok((loss, grads))
}

/// Compare supplied gradients against central finite differences on a
/// random subsample of parameter coordinates. The relative-error
/// denominator is floored at 1e-3 so dead units with true zero gradients do
/// not register finite-difference noise as failures.
pub fn fd_check(
    net: &Network<f64>,
    exemplar: &Tensor3<f64>,
    search: &Tensor3<f64>,
    label: &LabelMap,
    config: GradCheckConfig,
    grads: &NetGrads<f64>,
    rng: &mut impl Rng,
) -> Result<GradCheckReport> {
    let grad_slices = grads.slices();
    let tensor_count = grad_slices.len();
    let per_tensor = (config.samples / tensor_count).max(2);

    let mut probe = net.clone();
    let mut max_rel = 0.0f64;
    let mut worst = String::new();
    let mut taken = 0usize;

    for ti in 0..tensor_count {
        let len = grad_slices[ti].1.len();
        if len == 0 {
            continue;
        }
        for _ in 0..per_tensor.min(len) {
            let idx = rng.gen_range(0..len);
            let orig = probe.param_slices()[ti].1[idx];

            probe.param_slices_mut()[ti].1[idx] = orig + config.epsilon;
            let hi = pair_loss(&mut probe, exemplar, search, label, config.score_scale)?;
            probe.param_slices_mut()[ti].1[idx] = orig - config.epsilon;
            let lo = pair_loss(&mut probe, exemplar, search, label, config.score_scale)?;
            probe.param_slices_mut()[ti].1[idx] = orig;

            let fd = (hi - lo) / (2.0 * config.epsilon);
            let analytic = grad_slices[ti].1[idx];
            let rel = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-3);
            if rel > max_rel {
                max_rel = rel;
                worst = format!("{}[{}]", grad_slices[ti].0, idx);
            }
            taken += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        worst_param: worst,
        samples: taken,
    })
}

/// End-to-end gradient check: analytic gradients against central finite
/// differences over a random parameter subsample.
pub fn grad_check(
    net: &Network<f64>,
    exemplar: &Tensor3<f64>,
    search: &Tensor3<f64>,
    label: &LabelMap,
    config: GradCheckConfig,
    rng: &mut impl Rng,
) -> Result<GradCheckReport> {
    let (_, grads) = analytic_grads(net, exemplar, search, label, config.score_scale)?;
    fd_check(net, exemplar, search, label, config, &grads, rng)
}
