//! Siamese similarity training over simulated sequences.
//!
//! Pairs are (exemplar crop at an earlier window, search crop at a later
//! window), both centered on the ground-truth box so the correlation peak
//! belongs at the map center. When a sequence carries a target-edge
//! initialization segment, pairs anchored at the first window use it as the
//! exemplar source. The pair set is sampled once per run and reused every
//! epoch (loss trajectories are then comparable across epochs); only the
//! visit order reshuffles.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::dataset::LoadedSequence;
use crate::error::{Error, Result};
use crate::events::{BoundingBox, EventWindow};
use crate::net::{
    logistic_loss, make_label_map, sgd_step, siamese_backward, siamese_train_pass, LabelMap,
    Network, NetworkConfig, SgdHyper, SgdState,
};
use crate::tensor::Tensor3;
use crate::tracker::{edge_detector, embed_target_crop, EXEMPLAR_SIZE, SEARCH_SIZE};

/// Fixed multiplier applied to the raw correlation before the logistic
/// loss. Raw scores sum thousands of feature products, so this keeps the
/// loss in its smooth regime; at inference the min-max normalization makes
/// the scale irrelevant.
pub const TRAIN_SCORE_SCALE: f64 = 1e-2;

/// Exemplar-label radius on the score map.
pub const LABEL_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy)]
enum ExemplarSource {
    /// The sequence's target-edge initialization segment at the first box.
    Init,
    /// A plain event window.
    Window(usize),
}

#[derive(Debug, Clone, Copy)]
struct PairSpec {
    seq: usize,
    exemplar: ExemplarSource,
    search: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub pair_count: usize,
}

/// Per-epoch geometric decay from `lr_start` to `lr_end`.
pub fn learning_rate(epoch: usize, epochs: usize, lr_start: f64, lr_end: f64) -> f64 {
    if lr_start <= 0.0 {
        return 0.0;
    }
    if epochs <= 1 || lr_end <= 0.0 || lr_end == lr_start {
        return lr_start;
    }
    let t = epoch as f64 / (epochs - 1) as f64;
    lr_start * (lr_end / lr_start).powf(t)
}

struct SeqData {
    windows: Vec<EventWindow>,
    window_boxes: Vec<BoundingBox>,
    init: Option<EventWindow>,
    init_box: BoundingBox,
}

pub struct Trainer {
    net: Network<f32>,
    config: RunConfig,
    sequences: Vec<SeqData>,
    pairs: Vec<PairSpec>,
    label: LabelMap,
    rng: ChaCha8Rng,
}

impl Trainer {
    /// Prepare training over the given sequences: window the streams,
    /// sample the pair set, and initialize the network.
    pub fn new(sequences: &[LoadedSequence], config: &RunConfig) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::InvalidArgument(
                "training dataset contains no sequences".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let net_config = NetworkConfig::canonical(config.embedding.channels());
        let net: Network<f32> = Network::new(&net_config, &mut rng);

        let label = {
            let (_, eh, ew) = net.feature_dims(EXEMPLAR_SIZE, EXEMPLAR_SIZE)?;
            let (_, sh, sw) = net.feature_dims(SEARCH_SIZE, SEARCH_SIZE)?;
            make_label_map(sh - eh + 1, sw - ew + 1, LABEL_RADIUS)?
        };

        let mut data = Vec::with_capacity(sequences.len());
        for seq in sequences {
            let windows = seq.windows(config.window_us)?;
            let window_boxes = windows.iter().map(|w| seq.gt_at(w.t_end())).collect();
            data.push(SeqData {
                windows,
                window_boxes,
                init: seq.init_window()?,
                init_box: seq.groundtruth[0],
            });
        }

        let pairs = sample_pairs(&data, config, &mut rng)?;
        Ok(Trainer {
            net,
            config: config.clone(),
            sequences: data,
            pairs,
            label,
            rng,
        })
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    fn pair_tensors(&self, pair: &PairSpec) -> Result<(Tensor3<f32>, Tensor3<f32>)> {
        let seq = &self.sequences[pair.seq];
        let (ex_window, ex_box) = match pair.exemplar {
            ExemplarSource::Init => (
                seq.init.as_ref().expect("sampled init pair without init"),
                seq.init_box,
            ),
            ExemplarSource::Window(i) => (&seq.windows[i], seq.window_boxes[i]),
        };
        let exemplar =
            embed_target_crop(ex_window, &ex_box, &self.config.embedding, EXEMPLAR_SIZE)?;
        let search_box = seq.window_boxes[pair.search]
            .scaled(SEARCH_SIZE as f64 / EXEMPLAR_SIZE as f64);
        let search = embed_target_crop(
            &seq.windows[pair.search],
            &search_box,
            &self.config.embedding,
            SEARCH_SIZE,
        )?;
        Ok((exemplar, search))
    }

    /// Run the configured number of epochs. `on_epoch` receives the log
    /// entry and the network after each epoch (for checkpointing).
    pub fn run(
        &mut self,
        mut on_epoch: impl FnMut(&EpochLog, &Network<f32>) -> Result<()>,
    ) -> Result<TrainReport> {
        let train = self.config.train;
        let hyper_base = SgdHyper {
            lr: 0.0,
            momentum: train.momentum,
            weight_decay: train.weight_decay,
        };
        let mut sgd = SgdState::new(&self.net);
        let mut epochs = Vec::with_capacity(train.epochs);
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();

        for epoch in 0..train.epochs {
            let lr = learning_rate(epoch, train.epochs, train.lr_start, train.lr_end);
            order.shuffle(&mut self.rng);
            let mut loss_sum = 0.0;
            for &pi in &order {
                let pair = self.pairs[pi];
                let (exemplar, search) = self.pair_tensors(&pair)?;
                let pass = siamese_train_pass(&mut self.net, &exemplar, &search, true)?;
                let mut scaled = pass.score.clone();
                scaled.scale(TRAIN_SCORE_SCALE as f32);
                let (loss, mut d_score) = logistic_loss(&scaled, &self.label)?;
                d_score.scale(TRAIN_SCORE_SCALE as f32);
                let grads = siamese_backward(&self.net, &pass, &d_score)?;
                sgd_step(&mut self.net, &grads, &mut sgd, SgdHyper { lr, ..hyper_base });
                loss_sum += loss;
            }
            let log = EpochLog {
                epoch,
                lr,
                mean_loss: loss_sum / self.pairs.len() as f64,
            };
            on_epoch(&log, &self.net)?;
            epochs.push(log);
        }
        Ok(TrainReport {
            epochs,
            pair_count: self.pairs.len(),
        })
    }

    /// Fraction of the pair set whose eval-mode correlation argmax lies
    /// within `radius` of the score-map center.
    pub fn centered_fraction(&self, radius: f64) -> Result<f64> {
        let mut hits = 0usize;
        for pair in &self.pairs {
            let (exemplar, search) = self.pair_tensors(pair)?;
            let ex_feat = self.net.forward(&exemplar)?;
            let se_feat = self.net.forward(&search)?;
            let score = crate::net::cross_correlate(&ex_feat, &se_feat)?;
            let (_, y, x) = score.argmax();
            let cy = (score.height() - 1) as f64 / 2.0;
            let cx = (score.width() - 1) as f64 / 2.0;
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            if d <= radius {
                hits += 1;
            }
        }
        Ok(hits as f64 / self.pairs.len().max(1) as f64)
    }
}

/// Sample up to `pairs_per_sequence` valid pairs per sequence. Both crops
/// must pass the edge gate so degenerate near-empty tensors stay out of the
/// training set.
fn sample_pairs(
    sequences: &[SeqData],
    config: &RunConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PairSpec>> {
    let mut pairs = Vec::new();
    let max_gap = config.train.max_gap_windows.max(1);
    for (si, seq) in sequences.iter().enumerate() {
        if seq.windows.len() < 2 {
            continue;
        }
        let want = config.train.pairs_per_sequence;
        let mut got = 0usize;
        for _attempt in 0..want * 25 {
            if got >= want {
                break;
            }
            let i = rng.gen_range(0..seq.windows.len() - 1);
            let gap = rng.gen_range(1..=max_gap.min(seq.windows.len() - 1 - i));
            let j = i + gap;

            let exemplar = if i == 0 && seq.init.is_some() {
                ExemplarSource::Init
            } else {
                ExemplarSource::Window(i)
            };
            let ex_ok = match exemplar {
                ExemplarSource::Init => {
                    let w = seq.init.as_ref().unwrap();
                    !edge_detector(w, &seq.init_box, config.edge_ratio).is_skip()
                }
                ExemplarSource::Window(i) => {
                    !edge_detector(&seq.windows[i], &seq.window_boxes[i], config.edge_ratio)
                        .is_skip()
                }
            };
            let se_ok =
                !edge_detector(&seq.windows[j], &seq.window_boxes[j], config.edge_ratio).is_skip();
            if ex_ok && se_ok {
                pairs.push(PairSpec {
                    seq: si,
                    exemplar,
                    search: j,
                });
                got += 1;
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "no usable training pairs (all windows failed the edge gate)".into(),
        ));
    }
    Ok(pairs)
}

/// Seed-driven sequence-level split: the first `fraction` of a shuffled
/// copy trains, the rest is held out.
pub fn split_sequences<T>(mut items: Vec<T>, fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5171));
    let take = ((items.len() as f64) * fraction).ceil() as usize;
    let take = take.clamp(usize::from(!items.is_empty()), items.len());
    let chosen: std::collections::BTreeSet<usize> = order.into_iter().take(take).collect();
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, item) in items.drain(..).enumerate() {
        if chosen.contains(&i) {
            train.push(item);
        } else {
            held.push(item);
        }
    }
    (train, held)
}
