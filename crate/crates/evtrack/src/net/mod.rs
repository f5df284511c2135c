//! The shared Siamese feature extractor: a five-layer fully-convolutional
//! stack (no padding, no fully-connected layers) with batch normalization
//! after every convolution, plus its backward pass and training machinery.

mod bn;
mod conv;
mod correlate;
mod gradcheck;
mod loss;
mod pool;
mod sgd;
mod weights;

pub use bn::{BatchNormLayer, BnCache, BN_EPSILON, BN_MOMENTUM};
pub use conv::ConvLayer;
pub use correlate::{cross_correlate, cross_correlate_backward, cross_correlate_seq};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use loss::{logistic_loss, make_label_map, LabelMap};
pub use pool::{maxpool, maxpool_backward, maxpool_values, PoolCache};
pub use sgd::{sgd_step, sgd_update, SgdHyper, SgdState};
pub use weights::{load_weights, save_weights};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor3};

pub const LAYERS: usize = 5;
pub const CONV_KERNELS: [usize; LAYERS] = [11, 5, 3, 3, 3];
pub const CONV_STRIDES: [usize; LAYERS] = [2, 1, 1, 1, 1];
/// Channel widths of the full-size extractor.
pub const CANONICAL_WIDTHS: [usize; LAYERS] = [96, 256, 384, 384, 256];
pub const POOL_KERNEL: usize = 3;
pub const POOL_STRIDE: usize = 2;
/// Layers followed by a max-pool (after BN + ReLU).
const POOL_AFTER: [bool; LAYERS] = [true, true, false, false, false];
/// Layers followed by a ReLU; the last BN output is the feature map.
const RELU_AFTER: [bool; LAYERS] = [true, true, true, true, false];

const CONV_NAMES: [&str; LAYERS] = ["conv1", "conv2", "conv3", "conv4", "conv5"];
const BN_NAMES: [&str; LAYERS] = ["bn1", "bn2", "bn3", "bn4", "bn5"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    /// First-layer input channels; twice the temporal bin count of the
    /// embedding.
    pub input_channels: usize,
    pub widths: [usize; LAYERS],
}

impl NetworkConfig {
    pub fn canonical(input_channels: usize) -> Self {
        NetworkConfig {
            input_channels,
            widths: CANONICAL_WIDTHS,
        }
    }

    /// Narrow variant for tests and gradient checks.
    pub fn reduced(input_channels: usize, widths: [usize; LAYERS]) -> Self {
        NetworkConfig {
            input_channels,
            widths,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    convs: Vec<ConvLayer<T>>,
    bns: Vec<BatchNormLayer<T>>,
}

/// Everything the backward pass needs from one train-mode forward.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    conv_inputs: Vec<Tensor3<T>>,
    bn_caches: Vec<BnCache<T>>,
    /// Pre-ReLU activations of layers 1..=4, the ReLU masks.
    bn_outputs: Vec<Tensor3<T>>,
    pools: Vec<PoolCache>,
}

/// Gradients for every trainable parameter, mirroring the network layout.
#[derive(Debug, Clone)]
pub struct NetGrads<T> {
    pub conv_w: Vec<Vec<T>>,
    pub conv_b: Vec<Vec<T>>,
    pub bn_gamma: Vec<Vec<T>>,
    pub bn_beta: Vec<Vec<T>>,
}

impl<T: Real> NetGrads<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        NetGrads {
            conv_w: net.convs.iter().map(|c| vec![T::zero(); c.weight.len()]).collect(),
            conv_b: net.convs.iter().map(|c| vec![T::zero(); c.bias.len()]).collect(),
            bn_gamma: net.bns.iter().map(|b| vec![T::zero(); b.gamma.len()]).collect(),
            bn_beta: net.bns.iter().map(|b| vec![T::zero(); b.beta.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &NetGrads<T>) {
        fn add_all<T: Real>(a: &mut [Vec<T>], b: &[Vec<T>]) {
            for (x, y) in a.iter_mut().zip(b) {
                for (u, &v) in x.iter_mut().zip(y) {
                    *u += v;
                }
            }
        }
        add_all(&mut self.conv_w, &other.conv_w);
        add_all(&mut self.conv_b, &other.conv_b);
        add_all(&mut self.bn_gamma, &other.bn_gamma);
        add_all(&mut self.bn_beta, &other.bn_beta);
    }

    /// Tensors in canonical parameter order, aligned with
    /// [`Network::param_slices`].
    pub fn slices(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::with_capacity(4 * LAYERS);
        for i in 0..LAYERS {
            out.push((format!("{}.weight", CONV_NAMES[i]), self.conv_w[i].as_slice()));
            out.push((format!("{}.bias", CONV_NAMES[i]), self.conv_b[i].as_slice()));
            out.push((format!("{}.gamma", BN_NAMES[i]), self.bn_gamma[i].as_slice()));
            out.push((format!("{}.beta", BN_NAMES[i]), self.bn_beta[i].as_slice()));
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|(_, s)| s.iter())
            .fold(0.0, |m, v| m.max(v.as_f64().abs()))
    }
}

impl<T: Real> Network<T> {
    /// Fresh network with centered-uniform fan-in weight init, zero biases,
    /// unit BN scale.
    pub fn new(config: &NetworkConfig, rng: &mut impl Rng) -> Self {
        let mut convs = Vec::with_capacity(LAYERS);
        let mut bns = Vec::with_capacity(LAYERS);
        let mut in_c = config.input_channels;
        for i in 0..LAYERS {
            let out_c = config.widths[i];
            let mut conv = ConvLayer::zeros(CONV_NAMES[i], in_c, out_c, CONV_KERNELS[i], CONV_STRIDES[i]);
            let fan_in = (in_c * CONV_KERNELS[i] * CONV_KERNELS[i]) as f64;
            let bound = (1.0 / fan_in).sqrt();
            for w in conv.weight.iter_mut() {
                *w = T::from_f64(rng.gen_range(-bound..bound));
            }
            convs.push(conv);
            bns.push(BatchNormLayer::new(BN_NAMES[i], out_c));
            in_c = out_c;
        }
        Network { convs, bns }
    }

    pub fn from_layers(convs: Vec<ConvLayer<T>>, bns: Vec<BatchNormLayer<T>>) -> Result<Self> {
        if convs.len() != LAYERS || bns.len() != LAYERS {
            return Err(Error::InvalidArgument(format!(
                "network needs {LAYERS} conv and bn layers"
            )));
        }
        for i in 0..LAYERS {
            if convs[i].out_channels != bns[i].channels() {
                return Err(Error::ShapeMismatch {
                    context: "Network::from_layers",
                    expected: format!("bn{} over {} channels", i + 1, convs[i].out_channels),
                    actual: format!("{} channels", bns[i].channels()),
                });
            }
            if i > 0 && convs[i].in_channels != convs[i - 1].out_channels {
                return Err(Error::ShapeMismatch {
                    context: "Network::from_layers",
                    expected: format!("conv{} input {}", i + 1, convs[i - 1].out_channels),
                    actual: format!("{}", convs[i].in_channels),
                });
            }
        }
        Ok(Network { convs, bns })
    }

    pub fn convs(&self) -> &[ConvLayer<T>] {
        &self.convs
    }

    pub fn bns(&self) -> &[BatchNormLayer<T>] {
        &self.bns
    }

    pub fn input_channels(&self) -> usize {
        self.convs[0].in_channels
    }

    pub fn feature_channels(&self) -> usize {
        self.convs[LAYERS - 1].out_channels
    }

    pub fn widths(&self) -> [usize; LAYERS] {
        let mut w = [0usize; LAYERS];
        for (i, c) in self.convs.iter().enumerate() {
            w[i] = c.out_channels;
        }
        w
    }

    /// Input-to-feature displacement ratio: product of all conv and pool
    /// strides.
    pub fn total_stride(&self) -> usize {
        let mut s = 1;
        for (i, c) in self.convs.iter().enumerate() {
            s *= c.stride;
            if POOL_AFTER[i] {
                s *= POOL_STRIDE;
            }
        }
        s
    }

    /// Spatial feature dimensions for an input size, validating that the
    /// input covers the receptive field.
    pub fn feature_dims(&self, in_h: usize, in_w: usize) -> Result<(usize, usize, usize)> {
        let (mut h, mut w) = (in_h, in_w);
        for (i, conv) in self.convs.iter().enumerate() {
            let (oh, ow) = conv.out_dims(h, w)?;
            h = oh;
            w = ow;
            if POOL_AFTER[i] {
                if h < POOL_KERNEL || w < POOL_KERNEL {
                    return Err(Error::InputTooSmall {
                        context: "maxpool",
                        actual: h.min(w),
                        min: POOL_KERNEL,
                    });
                }
                h = (h - POOL_KERNEL) / POOL_STRIDE + 1;
                w = (w - POOL_KERNEL) / POOL_STRIDE + 1;
            }
        }
        Ok((self.feature_channels(), h, w))
    }

    /// Eval-mode forward pass using running BN statistics.
    pub fn forward(&self, input: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.feature_dims(input.height(), input.width())?;
        let mut x = self.convs[0].forward(input)?;
        for i in 0..LAYERS {
            if i > 0 {
                x = self.convs[i].forward(&x)?;
            }
            x = if RELU_AFTER[i] {
                self.bns[i].forward_eval_relu(&x)
            } else {
                self.bns[i].forward_eval(&x)
            };
            if POOL_AFTER[i] {
                x = pool::maxpool_values(&x, POOL_KERNEL, POOL_STRIDE)?;
            }
        }
        Ok(x)
    }

    /// Train-mode forward pass with spatial BN statistics, recording what
    /// the backward pass needs. Running statistics update only when
    /// `update_running` is set.
    pub fn forward_train(
        &mut self,
        input: &Tensor3<T>,
        update_running: bool,
    ) -> Result<(Tensor3<T>, ForwardCache<T>)> {
        self.feature_dims(input.height(), input.width())?;
        let mut cache = ForwardCache {
            conv_inputs: Vec::with_capacity(LAYERS),
            bn_caches: Vec::with_capacity(LAYERS),
            bn_outputs: Vec::with_capacity(LAYERS - 1),
            pools: Vec::with_capacity(2),
        };
        let mut x = input.clone();
        for i in 0..LAYERS {
            cache.conv_inputs.push(x.clone());
            x = self.convs[i].forward(&x)?;
            let (y, bn_cache) = self.bns[i].forward_train(&x, update_running);
            cache.bn_caches.push(bn_cache);
            x = y;
            if RELU_AFTER[i] {
                cache.bn_outputs.push(x.clone());
                relu_inplace(&mut x);
            }
            if POOL_AFTER[i] {
                let (pooled, pool_cache) = maxpool(&x, POOL_KERNEL, POOL_STRIDE)?;
                cache.pools.push(pool_cache);
                x = pooled;
            }
        }
        Ok((x, cache))
    }

    /// Backward pass through a recorded train-mode forward. The gradient
    /// with respect to the network input is not materialized; the first
    /// layer consumes data, not parameters.
    pub fn backward(&self, cache: &ForwardCache<T>, d_output: &Tensor3<T>) -> Result<NetGrads<T>> {
        if cache.conv_inputs.len() != LAYERS {
            return Err(Error::InvalidArgument(
                "forward cache does not match the network".into(),
            ));
        }
        let mut grads = NetGrads::zeros_like(self);
        let mut d = d_output.clone();
        let mut pool_idx = cache.pools.len();
        for i in (0..LAYERS).rev() {
            if POOL_AFTER[i] {
                pool_idx -= 1;
                d = maxpool_backward(&cache.pools[pool_idx], &d);
            }
            if RELU_AFTER[i] {
                let mask = &cache.bn_outputs[i];
                for (g, &m) in d.data_mut().iter_mut().zip(mask.data()) {
                    if m <= T::zero() {
                        *g = T::zero();
                    }
                }
            }
            let (dx_bn, d_gamma, d_beta) = self.bns[i].backward(&cache.bn_caches[i], &d);
            grads.bn_gamma[i] = d_gamma;
            grads.bn_beta[i] = d_beta;
            let conv_in = &cache.conv_inputs[i];
            let (dw, db) = self.convs[i].backward_weights(conv_in, &dx_bn);
            grads.conv_w[i] = dw;
            grads.conv_b[i] = db;
            if i > 0 {
                d = self.convs[i].backward_input(&dx_bn, conv_in.height(), conv_in.width());
            }
        }
        Ok(grads)
    }

    /// Trainable parameters in canonical order.
    pub fn param_slices(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::with_capacity(4 * LAYERS);
        for i in 0..LAYERS {
            out.push((format!("{}.weight", CONV_NAMES[i]), self.convs[i].weight.as_slice()));
            out.push((format!("{}.bias", CONV_NAMES[i]), self.convs[i].bias.as_slice()));
            out.push((format!("{}.gamma", BN_NAMES[i]), self.bns[i].gamma.as_slice()));
            out.push((format!("{}.beta", BN_NAMES[i]), self.bns[i].beta.as_slice()));
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out = Vec::with_capacity(4 * LAYERS);
        for (conv, bn) in self.convs.iter_mut().zip(self.bns.iter_mut()) {
            out.push((format!("{}.weight", conv.name), conv.weight.as_mut_slice()));
            out.push((format!("{}.bias", conv.name), conv.bias.as_mut_slice()));
            out.push((format!("{}.gamma", bn.name), bn.gamma.as_mut_slice()));
            out.push((format!("{}.beta", bn.name), bn.beta.as_mut_slice()));
        }
        out
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        let convs = self
            .convs
            .iter()
            .map(|c| ConvLayer {
                name: c.name,
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kh: c.kh,
                kw: c.kw,
                stride: c.stride,
                weight: c.weight.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                bias: c.bias.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            })
            .collect();
        let bns = self
            .bns
            .iter()
            .map(|b| BatchNormLayer {
                name: b.name,
                gamma: b.gamma.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                beta: b.beta.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                running_mean: b.running_mean.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                running_var: b.running_var.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                epsilon: b.epsilon,
                momentum: b.momentum,
            })
            .collect();
        Network { convs, bns }
    }
}

fn relu_inplace<T: Real>(x: &mut Tensor3<T>) {
    for v in x.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// One train-mode forward of both Siamese branches plus their correlation.
#[derive(Debug)]
pub struct SiamesePass<T> {
    pub score: Tensor3<T>,
    pub exemplar_features: Tensor3<T>,
    pub search_features: Tensor3<T>,
    exemplar_cache: ForwardCache<T>,
    search_cache: ForwardCache<T>,
}

pub fn siamese_train_pass<T: Real>(
    net: &mut Network<T>,
    exemplar: &Tensor3<T>,
    search: &Tensor3<T>,
    update_running: bool,
) -> Result<SiamesePass<T>> {
    let (ex_feat, ex_cache) = net.forward_train(exemplar, update_running)?;
    let (se_feat, se_cache) = net.forward_train(search, update_running)?;
    let score = cross_correlate(&ex_feat, &se_feat)?;
    Ok(SiamesePass {
        score,
        exemplar_features: ex_feat,
        search_features: se_feat,
        exemplar_cache: ex_cache,
        search_cache: se_cache,
    })
}

/// Backward from a score-map gradient through both shared-weight branches;
/// the per-branch parameter gradients accumulate.
pub fn siamese_backward<T: Real>(
    net: &Network<T>,
    pass: &SiamesePass<T>,
    d_score: &Tensor3<T>,
) -> Result<NetGrads<T>> {
    let (d_ex_feat, d_se_feat) =
        cross_correlate_backward(&pass.exemplar_features, &pass.search_features, d_score);
    let mut grads = net.backward(&pass.exemplar_cache, &d_ex_feat)?;
    let se_grads = net.backward(&pass.search_cache, &d_se_feat)?;
    grads.add(&se_grads);
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_net(seed: u64) -> Network<f64> {
        let cfg = NetworkConfig::reduced(2, [4, 5, 6, 6, 5]);
        Network::new(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn rand_tensor(c: usize, h: usize, w: usize, seed: u64) -> Tensor3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Tensor3::zeros(c, h, w);
        for v in t.data_mut() {
            *v = rand::Rng::gen_range(&mut rng, -1.0..1.0);
        }
        t
    }

    #[test]
    fn canonical_feature_shapes() {
        let cfg = NetworkConfig::canonical(18);
        let net: Network<f32> = Network::new(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(net.feature_dims(127, 127).unwrap(), (256, 6, 6));
        assert_eq!(net.feature_dims(255, 255).unwrap(), (256, 22, 22));
        assert_eq!(net.total_stride(), 8);
    }

    #[test]
    fn undersized_input_rejected() {
        let net = tiny_net(3);
        assert!(matches!(
            net.feature_dims(50, 90),
            Err(Error::InputTooSmall { .. })
        ));
        let x = rand_tensor(2, 50, 90, 4);
        assert!(net.forward(&x).is_err());
    }

    #[test]
    fn forward_exercises_real_convolutions_at_127() {
        let cfg = NetworkConfig::canonical(18);
        let net: Network<f32> = Network::new(&cfg, &mut ChaCha8Rng::seed_from_u64(7));
        let x = rand_tensor(18, 127, 127, 9).cast::<f32>();
        let f = net.forward(&x).unwrap();
        assert_eq!(f.dims(), (256, 6, 6));
        assert!(f.all_finite());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_param_gradients() {
        let mut net = tiny_net(11);
        let x = rand_tensor(2, 95, 95, 12);
        let (feat, cache) = net.forward_train(&x, true).unwrap();
        let d = Tensor3::zeros(feat.channels(), feat.height(), feat.width());
        let grads = net.backward(&cache, &d).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn shared_weight_gradients_sum_over_branches() {
        let mut net = tiny_net(21);
        let x = rand_tensor(2, 95, 95, 22);
        let pass = siamese_train_pass(&mut net, &x, &x, false).unwrap();
        let mut d_score = Tensor3::zeros(1, pass.score.height(), pass.score.width());
        for v in d_score.data_mut() {
            *v = 0.37;
        }
        let grads = siamese_backward(&net, &pass, &d_score).unwrap();

        // Identical branches: each branch backward is the same, so the sum
        // is twice a single branch.
        let (d_ex, _) =
            cross_correlate_backward(&pass.exemplar_features, &pass.search_features, &d_score);
        let single = net.backward(&pass.exemplar_cache, &d_ex).unwrap();
        for ((_, g2), (_, g1)) in grads.slices().iter().zip(single.slices()) {
            for (a, b) in g2.iter().zip(g1.iter()) {
                assert!((a - 2.0 * b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn param_order_is_stable() {
        let net = tiny_net(5);
        let names: Vec<String> = net.param_slices().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "conv1.weight");
        assert_eq!(names[1], "conv1.bias");
        assert_eq!(names[2], "bn1.gamma");
        assert_eq!(names[3], "bn1.beta");
        assert_eq!(names[19], "bn5.beta");
        let grads = NetGrads::zeros_like(&net);
        let gnames: Vec<String> = grads.slices().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, gnames);
    }

    #[test]
    fn identity_conv_with_disabled_bn_is_identity() {
        let mut conv = ConvLayer::<f64>::zeros("conv_id", 1, 1, 1, 1);
        conv.weight[0] = 1.0;
        let mut bn = BatchNormLayer::<f64>::new("bn_id", 1);
        bn.epsilon = 0.0;
        let x = rand_tensor(1, 4, 4, 33);
        let y = bn.forward_eval(&conv.forward(&x).unwrap());
        assert_eq!(y.data(), x.data());
    }
}
