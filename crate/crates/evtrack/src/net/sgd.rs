//! SGD with momentum and L2 weight decay.

use crate::tensor::Real;

use super::{NetGrads, Network};

#[derive(Debug, Clone, Copy)]
pub struct SgdHyper {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdHyper {
    fn default() -> Self {
        SgdHyper {
            lr: 1e-2,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

/// Velocity buffers, one per trainable tensor, in parameter order.
#[derive(Debug, Clone)]
pub struct SgdState<T> {
    velocities: Vec<Vec<T>>,
}

impl<T: Real> SgdState<T> {
    pub fn new(net: &Network<T>) -> Self {
        SgdState {
            velocities: net
                .param_slices()
                .into_iter()
                .map(|(_, s)| vec![T::zero(); s.len()])
                .collect(),
        }
    }
}

/// One update on a single tensor:
/// `v <- momentum * v + g + weight_decay * theta; theta <- theta - lr * v`.
pub fn sgd_update<T: Real>(theta: &mut [T], grad: &[T], velocity: &mut [T], hyper: SgdHyper) {
    let lr = T::from_f64(hyper.lr);
    let momentum = T::from_f64(hyper.momentum);
    let wd = T::from_f64(hyper.weight_decay);
    for ((t, &g), v) in theta.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + g + wd * *t;
        *t = *t - lr * *v;
    }
}

/// Apply one SGD step to every trainable parameter of the network.
pub fn sgd_step<T: Real>(
    net: &mut Network<T>,
    grads: &NetGrads<T>,
    state: &mut SgdState<T>,
    hyper: SgdHyper,
) {
    let grad_slices = grads.slices();
    let params = net.param_slices_mut();
    assert_eq!(params.len(), grad_slices.len());
    assert_eq!(params.len(), state.velocities.len());
    for ((param, grad), velocity) in params
        .into_iter()
        .zip(grad_slices)
        .zip(state.velocities.iter_mut())
    {
        sgd_update(param.1, grad.1, velocity, hyper);
    }
}
