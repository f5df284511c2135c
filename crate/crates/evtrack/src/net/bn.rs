//! Per-channel batch normalization. With batch size 1, train-mode
//! statistics are taken over the spatial positions of each channel; eval
//! mode applies the running statistics as a fixed affine map. All statistic
//! accumulation happens in f64 regardless of the parameter precision.

use crate::tensor::{Real, Tensor3};

#[derive(Debug, Clone)]
pub struct BatchNormLayer<T> {
    pub name: &'static str,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: f64,
    pub momentum: f64,
}

/// Values the backward pass needs from a train-mode forward.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub x_hat: Tensor3<T>,
    pub inv_std: Vec<f64>,
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

impl<T: Real> BatchNormLayer<T> {
    pub fn new(name: &'static str, channels: usize) -> Self {
        BatchNormLayer {
            name,
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Eval-mode forward: per-channel affine map from the running stats.
    pub fn forward_eval(&self, x: &Tensor3<T>) -> Tensor3<T> {
        let (c, h, w) = x.dims();
        debug_assert_eq!(c, self.channels());
        let mut out = Tensor3::zeros(c, h, w);
        for ch in 0..c {
            let inv_std = 1.0 / (self.running_var[ch].as_f64() + self.epsilon).sqrt();
            let scale = T::from_f64(self.gamma[ch].as_f64() * inv_std);
            let shift = T::from_f64(
                self.beta[ch].as_f64() - self.running_mean[ch].as_f64() * self.gamma[ch].as_f64() * inv_std,
            );
            let src = x.plane(ch);
            for (o, &v) in out.plane_mut(ch).iter_mut().zip(src) {
                *o = v * scale + shift;
            }
        }
        out
    }

    /// Eval forward with the ReLU fused into the same pass.
    pub fn forward_eval_relu(&self, x: &Tensor3<T>) -> Tensor3<T> {
        let (c, h, w) = x.dims();
        let mut out = Tensor3::zeros(c, h, w);
        for ch in 0..c {
            let inv_std = 1.0 / (self.running_var[ch].as_f64() + self.epsilon).sqrt();
            let scale = T::from_f64(self.gamma[ch].as_f64() * inv_std);
            let shift = T::from_f64(
                self.beta[ch].as_f64() - self.running_mean[ch].as_f64() * self.gamma[ch].as_f64() * inv_std,
            );
            let src = x.plane(ch);
            for (o, &v) in out.plane_mut(ch).iter_mut().zip(src) {
                *o = (v * scale + shift).max(T::zero());
            }
        }
        out
    }

    /// Train-mode forward over spatial statistics. Updates the running
    /// estimates unless `update_running` is false (gradient checking probes
    /// must leave the layer untouched).
    pub fn forward_train(&mut self, x: &Tensor3<T>, update_running: bool) -> (Tensor3<T>, BnCache<T>) {
        let (c, h, w) = x.dims();
        debug_assert_eq!(c, self.channels());
        let n = (h * w) as f64;
        let mut out = Tensor3::zeros(c, h, w);
        let mut x_hat = Tensor3::zeros(c, h, w);
        let mut inv_stds = vec![0.0f64; c];

        for ch in 0..c {
            let src = x.plane(ch);
            let mut sum = 0.0f64;
            let mut sum_sq = 0.0f64;
            for &v in src {
                let v = v.as_f64();
                sum += v;
                sum_sq += v * v;
            }
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0);
            let inv_std = 1.0 / (var + self.epsilon).sqrt();
            inv_stds[ch] = inv_std;

            let gamma = self.gamma[ch].as_f64();
            let beta = self.beta[ch].as_f64();
            let xh_plane = x_hat.plane_mut(ch);
            let o_plane = out.plane_mut(ch);
            for ((xh, o), &v) in xh_plane.iter_mut().zip(o_plane.iter_mut()).zip(src) {
                let xhv = (v.as_f64() - mean) * inv_std;
                *xh = T::from_f64(xhv);
                *o = T::from_f64(gamma * xhv + beta);
            }

            if update_running {
                let m = self.momentum;
                let rm = self.running_mean[ch].as_f64();
                let rv = self.running_var[ch].as_f64();
                self.running_mean[ch] = T::from_f64((1.0 - m) * rm + m * mean);
                self.running_var[ch] = T::from_f64((1.0 - m) * rv + m * var);
            }
        }
        (
            out,
            BnCache {
                x_hat,
                inv_std: inv_stds,
            },
        )
    }

    /// Backward through a train-mode forward. Returns `(d_input, d_gamma,
    /// d_beta)`.
    pub fn backward(&self, cache: &BnCache<T>, d_out: &Tensor3<T>) -> (Tensor3<T>, Vec<T>, Vec<T>) {
        let (c, h, w) = d_out.dims();
        let n = (h * w) as f64;
        let mut dx = Tensor3::zeros(c, h, w);
        let mut d_gamma = vec![T::zero(); c];
        let mut d_beta = vec![T::zero(); c];

        for ch in 0..c {
            let dy = d_out.plane(ch);
            let xh = cache.x_hat.plane(ch);
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xh = 0.0f64;
            for (&g, &x) in dy.iter().zip(xh) {
                let g = g.as_f64();
                sum_dy += g;
                sum_dy_xh += g * x.as_f64();
            }
            d_gamma[ch] = T::from_f64(sum_dy_xh);
            d_beta[ch] = T::from_f64(sum_dy);

            let scale = self.gamma[ch].as_f64() * cache.inv_std[ch];
            let mean_dy = sum_dy / n;
            let mean_dy_xh = sum_dy_xh / n;
            let dst = dx.plane_mut(ch);
            for ((d, &g), &x) in dst.iter_mut().zip(dy).zip(xh) {
                *d = T::from_f64(scale * (g.as_f64() - mean_dy - x.as_f64() * mean_dy_xh));
            }
        }
        (dx, d_gamma, d_beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill(v: &mut [f64], seed: u64) {
        let mut s = seed;
        for x in v.iter_mut() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            *x = ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
        }
    }

    #[test]
    fn train_output_is_normalized() {
        let mut bn = BatchNormLayer::<f64>::new("bn_test", 2);
        let mut x = Tensor3::zeros(2, 8, 8);
        fill(x.data_mut(), 5);
        let (y, _) = bn.forward_train(&x, true);
        for ch in 0..2 {
            let p = y.plane(ch);
            let mean: f64 = p.iter().sum::<f64>() / p.len() as f64;
            let var: f64 = p.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / p.len() as f64;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3); // epsilon skews this slightly
        }
    }

    #[test]
    fn eval_is_affine_per_channel() {
        let mut bn = BatchNormLayer::<f64>::new("bn_test", 1);
        bn.running_mean[0] = 0.3;
        bn.running_var[0] = 2.0;
        bn.gamma[0] = 1.7;
        bn.beta[0] = -0.4;
        let x = Tensor3::from_vec(1, 1, 3, vec![0.0, 1.0, 2.0]).unwrap();
        let y = bn.forward_eval(&x);
        let inv = 1.0 / (2.0f64 + BN_EPSILON).sqrt();
        for i in 0..3 {
            let expect = 1.7 * (x.data()[i] - 0.3) * inv - 0.4;
            assert!((y.data()[i] - expect).abs() < 1e-12);
        }
        // Affine relation: y(ax) - y(0) scales linearly.
        let x2 = Tensor3::from_vec(1, 1, 3, vec![0.0, 2.0, 4.0]).unwrap();
        let y2 = bn.forward_eval(&x2);
        let d1 = y.data()[1] - y.data()[0];
        let d2 = y2.data()[1] - y2.data()[0];
        assert!((d2 - 2.0 * d1).abs() < 1e-12);
    }

    #[test]
    fn unit_init_with_frozen_stats_is_identity() {
        let bn = BatchNormLayer::<f64>::new("bn_test", 1);
        // gamma=1, beta=0, running mean 0, var 1: output equals input up to
        // the epsilon factor.
        let x = Tensor3::from_vec(1, 1, 2, vec![1.0, -2.0]).unwrap();
        let y = bn.forward_eval(&x);
        let f = 1.0 / (1.0f64 + BN_EPSILON).sqrt();
        assert!((y.data()[0] - f).abs() < 1e-12);
        assert!((y.data()[1] + 2.0 * f).abs() < 1e-12);
    }

    #[test]
    fn running_stats_update_with_momentum() {
        let mut bn = BatchNormLayer::<f64>::new("bn_test", 1);
        let x = Tensor3::from_vec(1, 1, 4, vec![1.0, 1.0, 3.0, 3.0]).unwrap();
        bn.forward_train(&x, true);
        // mean 2, var 1: running = 0.9*prev + 0.1*batch.
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1)).abs() < 1e-12);
        let frozen = bn.running_mean[0];
        bn.forward_train(&x, false);
        assert_eq!(bn.running_mean[0], frozen);
    }
}
