//! Online tracking: exemplar management, the event-count edge gate,
//! correlation-peak localization with cosine-window distractor suppression,
//! and box updates.

use crate::embedding::{embed, resize_bilinear, EmbeddingConfig};
use crate::error::{Error, Result};
use crate::events::{select_target_region, target_region, BoundingBox, EventWindow};
use crate::net::{cross_correlate, Network};
use crate::tensor::Tensor3;

/// Exemplar branch input size.
pub const EXEMPLAR_SIZE: usize = 127;
/// Search branch input size.
pub const SEARCH_SIZE: usize = 255;

/// The search crop spans the target-centered region scaled by 255/127, so
/// exemplar and search tensors share a pixel scale after resizing.
pub fn search_region_scale() -> f64 {
    SEARCH_SIZE as f64 / EXEMPLAR_SIZE as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeAction {
    Skip,
    Continue,
}

/// Outcome of the edge gate: the in-region event count against the
/// area-proportional threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeDecision {
    pub action: EdgeAction,
    pub observed: usize,
    pub threshold: f64,
}

impl EdgeDecision {
    pub fn is_skip(&self) -> bool {
        self.action == EdgeAction::Skip
    }
}

/// Count the events inside the target-centered region and compare against
/// `ratio` times the region area; at or below the threshold the tracker
/// pauses.
pub fn edge_detector(window: &EventWindow, bbox: &BoundingBox, ratio: f64) -> EdgeDecision {
    let region = target_region(bbox);
    let observed = window
        .events()
        .iter()
        .filter(|e| region.contains(e.x as f64, e.y as f64))
        .count();
    let threshold = ratio * region.width * region.height;
    let action = if (observed as f64) <= threshold {
        EdgeAction::Skip
    } else {
        EdgeAction::Continue
    };
    EdgeDecision {
        action,
        observed,
        threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExemplarPolicy {
    /// Keep the exemplar formed at initialization.
    Fixed,
    /// Re-embed the search window at the updated box after every step.
    Sliding,
}

#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub embedding: EmbeddingConfig,
    /// Cosine-window blending weight.
    pub window_influence: f64,
    /// Response upsampling factor before the argmax.
    pub upsample: usize,
    /// Edge-detector threshold as a fraction of the region area.
    pub edge_ratio: f64,
    /// Event aggregation interval.
    pub window_us: u64,
    pub exemplar_policy: ExemplarPolicy,
    /// Optional scale pyramid; each candidate scales the search region and,
    /// when selected, the box.
    pub scales: Option<[f64; 3]>,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            embedding: EmbeddingConfig::default(),
            window_influence: 0.176,
            upsample: 16,
            edge_ratio: 0.05,
            window_us: 40_000,
            exemplar_policy: ExemplarPolicy::Fixed,
            scales: None,
        }
    }
}

impl TrackerConfig {
    /// Scale candidates in evaluation order, unit scale first so exact ties
    /// keep the current size.
    fn scale_candidates(&self) -> Vec<f64> {
        match self.scales {
            None => vec![1.0],
            Some(s) => {
                let mut order: Vec<f64> = Vec::with_capacity(3);
                for &v in s.iter() {
                    if v == 1.0 {
                        order.push(v);
                    }
                }
                if order.is_empty() {
                    order.push(1.0);
                }
                for &v in s.iter() {
                    if v != 1.0 {
                        order.push(v);
                    }
                }
                order
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    bbox: BoundingBox,
    exemplar: Tensor3<f32>,
    paused: bool,
    steps: u64,
    network_evals: u64,
    window_us: u64,
}

impl TrackerState {
    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn exemplar(&self) -> &Tensor3<f32> {
        &self.exemplar
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Number of feature-extractor forward passes performed so far; a
    /// skipped step performs none.
    pub fn network_evals(&self) -> u64 {
        self.network_evals
    }

    pub fn window_us(&self) -> u64 {
        self.window_us
    }
}

/// Embed the target-centered crop of `bbox` and resize it to a square
/// network input.
pub fn embed_target_crop(
    window: &EventWindow,
    bbox: &BoundingBox,
    embedding: &EmbeddingConfig,
    out_size: usize,
) -> Result<Tensor3<f32>> {
    let (local, _) = select_target_region(window, bbox)?;
    let tensor = embed(&local, embedding)?;
    resize_bilinear(&tensor, out_size, out_size)
}

/// Form the tracker state from an initialization window (micro-translation
/// rendering on synthetic data, or an operator-provided warm-up segment).
pub fn init_target(
    window: &EventWindow,
    bbox: BoundingBox,
    net: &Network<f32>,
    config: &TrackerConfig,
) -> Result<TrackerState> {
    if window.is_empty() {
        return Err(Error::EmptyInitialization);
    }
    let (local, _) = select_target_region(window, &bbox)?;
    if local.is_empty() {
        return Err(Error::EmptyInitialization);
    }
    check_channels(net, config)?;
    let tensor = embed(&local, &config.embedding)?;
    let resized = resize_bilinear(&tensor, EXEMPLAR_SIZE, EXEMPLAR_SIZE)?;
    let exemplar = net.forward(&resized)?;
    Ok(TrackerState {
        bbox,
        exemplar,
        paused: false,
        steps: 0,
        network_evals: 1,
        window_us: config.window_us,
    })
}

fn check_channels(net: &Network<f32>, config: &TrackerConfig) -> Result<()> {
    if net.input_channels() != config.embedding.channels() {
        return Err(Error::ShapeMismatch {
            context: "tracker",
            expected: format!("{} embedding channels", net.input_channels()),
            actual: format!("{}", config.embedding.channels()),
        });
    }
    Ok(())
}

/// Hann-profile window normalized to peak 1, as a 1-channel tensor.
pub fn make_cosine_window(height: usize, width: usize) -> Tensor3<f32> {
    let profile = |n: usize| -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        (0..n)
            .map(|i| {
                let phase = 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64;
                0.5 * (1.0 - phase.cos())
            })
            .collect()
    };
    let rows = profile(height);
    let cols = profile(width);
    let mut out = Tensor3::zeros(1, height, width);
    let mut peak = 0.0f64;
    for y in 0..height {
        for x in 0..width {
            let v = rows[y] * cols[x];
            peak = peak.max(v);
            out.set(0, y, x, v as f32);
        }
    }
    if peak > 0.0 {
        let inv = (1.0 / peak) as f32;
        out.scale(inv);
    }
    out
}

/// Bilinear response upsampling to `(n - 1) * factor + 1` per axis, so an
/// upsampled pixel at index `u` corresponds exactly to score-map position
/// `u / factor` and the map center stays a lattice point.
pub fn upsample_response(score: &Tensor3<f32>, factor: usize) -> Result<Tensor3<f32>> {
    if factor < 1 {
        return Err(Error::InvalidArgument("upsample factor must be >= 1".into()));
    }
    let (_, h, w) = score.dims();
    resize_bilinear(score, (h - 1) * factor + 1, (w - 1) * factor + 1)
}

/// Min-max normalization to `[0, 1]`; a constant map normalizes to zero.
pub fn normalize_min_max(response: &Tensor3<f32>) -> Tensor3<f32> {
    let min = response.min_value();
    let max = response.max_value();
    let mut out = response.clone();
    if max > min {
        let inv = 1.0 / (max - min);
        for v in out.data_mut() {
            *v = (*v - min) * inv;
        }
    } else {
        for v in out.data_mut() {
            *v = 0.0;
        }
    }
    out
}

/// `(1 - influence) * response + influence * window`.
pub fn blend_response(
    response: &Tensor3<f32>,
    window: &Tensor3<f32>,
    influence: f64,
) -> Tensor3<f32> {
    let g = influence as f32;
    let mut out = response.clone();
    for (o, &w) in out.data_mut().iter_mut().zip(window.data()) {
        *o = (1.0 - g) * *o + g * w;
    }
    out
}

/// Result of evaluating one search scale.
struct ScaleEval {
    peak_value: f32,
    displacement: (f64, f64),
    scale: f64,
}

/// One tracking step over the next event window. A skipped step performs no
/// embedding, feature extraction, or correlation, and holds the previous
/// box.
pub fn step(
    state: &mut TrackerState,
    window: &EventWindow,
    net: &Network<f32>,
    config: &TrackerConfig,
) -> Result<BoundingBox> {
    check_channels(net, config)?;
    state.steps += 1;
    let decision = edge_detector(window, &state.bbox, config.edge_ratio);
    if decision.is_skip() {
        state.paused = true;
        return Ok(state.bbox);
    }
    state.paused = false;

    let stride = net.total_stride() as f64;
    let mut best: Option<ScaleEval> = None;
    for scale in config.scale_candidates() {
        let search_box = state.bbox.scaled(scale * search_region_scale());
        let (local, _) = select_target_region(window, &search_box)?;
        let grid_w = local.geometry().width() as f64;
        let grid_h = local.geometry().height() as f64;
        let tensor = embed(&local, &config.embedding)?;
        let resized = resize_bilinear(&tensor, SEARCH_SIZE, SEARCH_SIZE)?;
        let features = net.forward(&resized)?;
        state.network_evals += 1;
        let score = cross_correlate(&state.exemplar, &features)?;

        let up = upsample_response(&score, config.upsample)?;
        let normalized = normalize_min_max(&up);
        let cosine = make_cosine_window(up.height(), up.width());
        let blended = blend_response(&normalized, &cosine, config.window_influence);

        let (_, uy, ux) = blended.argmax();
        let peak_value = blended.get(0, uy, ux);
        let center_x = (up.width() - 1) as f64 / 2.0;
        let center_y = (up.height() - 1) as f64 / 2.0;
        // Upsampled displacement -> score-map units -> search-input pixels
        // (x total stride) -> sensor pixels (x crop-to-input ratio).
        let ratio_x = (grid_w - 1.0) / (SEARCH_SIZE - 1) as f64;
        let ratio_y = (grid_h - 1.0) / (SEARCH_SIZE - 1) as f64;
        let dx = (ux as f64 - center_x) / config.upsample as f64 * stride * ratio_x;
        let dy = (uy as f64 - center_y) / config.upsample as f64 * stride * ratio_y;

        let better = match &best {
            None => true,
            Some(b) => peak_value > b.peak_value,
        };
        if better {
            best = Some(ScaleEval {
                peak_value,
                displacement: (dx, dy),
                scale,
            });
        }
    }
    let chosen = best.expect("at least one scale candidate");

    let new_box = BoundingBox::new(
        state.bbox.cx + chosen.displacement.0,
        state.bbox.cy + chosen.displacement.1,
        state.bbox.w * chosen.scale,
        state.bbox.h * chosen.scale,
    )?;
    state.bbox = new_box;

    if config.exemplar_policy == ExemplarPolicy::Sliding {
        let (local, _) = select_target_region(window, &state.bbox)?;
        if !local.is_empty() {
            let tensor = embed(&local, &config.embedding)?;
            let resized = resize_bilinear(&tensor, EXEMPLAR_SIZE, EXEMPLAR_SIZE)?;
            state.exemplar = net.forward(&resized)?;
            state.network_evals += 1;
        }
    }
    Ok(state.bbox)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingMethod;
    use crate::events::{Event, Polarity, SensorGeometry};
    use crate::net::NetworkConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom() -> SensorGeometry {
        SensorGeometry::new(200, 150).unwrap()
    }

    fn test_config() -> TrackerConfig {
        TrackerConfig {
            embedding: EmbeddingConfig::new(EmbeddingMethod::Est, 2).unwrap(),
            ..TrackerConfig::default()
        }
    }

    fn test_net(seed: u64) -> Network<f32> {
        let cfg = NetworkConfig::reduced(4, [8, 12, 16, 16, 12]);
        Network::new(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Events roughly outlining a square target centered at (cx, cy).
    fn square_events(cx: f64, cy: f64, side: f64, t0: u64, t1: u64, count: usize) -> Vec<Event> {
        let mut events = Vec::new();
        let half = side / 2.0;
        for i in 0..count {
            let frac = i as f64 / count as f64;
            let t = t0 + ((t1 - t0 - 1) as f64 * frac) as u64;
            // Walk the perimeter.
            let pos = frac * 4.0;
            let (dx, dy) = if pos < 1.0 {
                (-half + side * pos, -half)
            } else if pos < 2.0 {
                (half, -half + side * (pos - 1.0))
            } else if pos < 3.0 {
                (half - side * (pos - 2.0), half)
            } else {
                (-half, half - side * (pos - 3.0))
            };
            let x = (cx + dx).round() as i64;
            let y = (cy + dy).round() as i64;
            if x >= 0 && y >= 0 {
                let p = if i % 2 == 0 {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                };
                events.push(Event::new(t, x as u16, y as u16, p));
            }
        }
        events.sort_by_key(|e| e.t);
        events
    }

    fn square_window(cx: f64, cy: f64, t0: u64, t1: u64, count: usize) -> EventWindow {
        EventWindow::new(square_events(cx, cy, 20.0, t0, t1, count), t0, t1, geom()).unwrap()
    }

    #[test]
    fn edge_detector_zero_events_skips() {
        let w = EventWindow::empty(0, 1000, geom()).unwrap();
        let b = BoundingBox::new(50.0, 50.0, 20.0, 10.0).unwrap();
        let d = edge_detector(&w, &b, 0.05);
        assert!(d.is_skip());
        assert_eq!(d.observed, 0);
    }

    #[test]
    fn edge_detector_threshold_boundary() {
        // w=20, h=10: region 35x25, T = 0.05 * 875 = 43.75.
        let b = BoundingBox::new(100.0, 75.0, 20.0, 10.0).unwrap();
        let make_window = |n: usize| {
            let mut events: Vec<Event> = (0..n)
                .map(|i| {
                    let x = 100 - 8 + (i % 16) as i64;
                    let y = 75 - 5 + ((i / 16) % 10) as i64;
                    Event::new(i as u64, x as u16, y as u16, Polarity::Positive)
                })
                .collect();
            events.sort_by_key(|e| e.t);
            EventWindow::new(events, 0, 10_000, geom()).unwrap()
        };
        let d44 = edge_detector(&make_window(44), &b, 0.05);
        assert!((d44.threshold - 43.75).abs() < 1e-9);
        assert_eq!(d44.observed, 44);
        assert_eq!(d44.action, EdgeAction::Continue);
        let d43 = edge_detector(&make_window(43), &b, 0.05);
        assert_eq!(d43.action, EdgeAction::Skip);
    }

    #[test]
    fn cosine_window_shape() {
        let w = make_cosine_window(257, 257);
        assert_eq!(w.get(0, 128, 128), 1.0);
        assert_eq!(w.get(0, 0, 0), 0.0);
        assert_eq!(w.get(0, 0, 128), 0.0);
        for y in 0..257 {
            for x in 0..257 {
                assert_eq!(w.get(0, y, x), w.get(0, 256 - y, x));
                assert_eq!(w.get(0, y, x), w.get(0, y, 256 - x));
            }
        }
    }

    #[test]
    fn init_rejects_empty_window() {
        let net = test_net(1);
        let cfg = test_config();
        let w = EventWindow::empty(0, 1000, geom()).unwrap();
        let b = BoundingBox::new(50.0, 50.0, 20.0, 20.0).unwrap();
        assert!(matches!(
            init_target(&w, b, &net, &cfg),
            Err(Error::EmptyInitialization)
        ));
    }

    #[test]
    fn init_exemplar_has_feature_shape() {
        let net = test_net(2);
        let cfg = test_config();
        let w = square_window(100.0, 75.0, 0, 40_000, 400);
        let b = BoundingBox::new(100.0, 75.0, 20.0, 20.0).unwrap();
        let state = init_target(&w, b, &net, &cfg).unwrap();
        assert_eq!(state.exemplar().dims(), (12, 6, 6));
        assert_eq!(state.network_evals(), 1);
        assert!(!state.paused());
    }

    #[test]
    fn init_is_deterministic() {
        let net = test_net(3);
        let cfg = test_config();
        let w = square_window(100.0, 75.0, 0, 40_000, 400);
        let b = BoundingBox::new(100.0, 75.0, 20.0, 20.0).unwrap();
        let a = init_target(&w, b, &net, &cfg).unwrap();
        let b2 = init_target(&w, b, &net, &cfg).unwrap();
        assert_eq!(a.exemplar().data(), b2.exemplar().data());
    }

    #[test]
    fn skip_step_changes_nothing_but_flags() {
        let net = test_net(4);
        let cfg = test_config();
        let w = square_window(100.0, 75.0, 0, 40_000, 400);
        let b = BoundingBox::new(100.0, 75.0, 20.0, 20.0).unwrap();
        let mut state = init_target(&w, b, &net, &cfg).unwrap();
        let evals_before = state.network_evals();
        let bbox_before = state.bbox();

        let quiet = EventWindow::empty(40_000, 80_000, geom()).unwrap();
        for i in 0..5 {
            let out = step(&mut state, &quiet, &net, &cfg).unwrap();
            assert_eq!(out, bbox_before);
            assert!(state.paused());
            assert_eq!(state.steps(), i + 1);
        }
        assert_eq!(state.network_evals(), evals_before);
    }

    #[test]
    fn full_influence_freezes_the_box() {
        let net = test_net(5);
        let mut cfg = test_config();
        cfg.window_influence = 1.0;
        let w = square_window(100.0, 75.0, 0, 40_000, 600);
        let b = BoundingBox::new(100.0, 75.0, 20.0, 20.0).unwrap();
        let mut state = init_target(&w, b, &net, &cfg).unwrap();
        let w2 = square_window(104.0, 75.0, 40_000, 80_000, 600);
        let out = step(&mut state, &w2, &net, &cfg).unwrap();
        // Cosine peak is the exact lattice center: zero displacement.
        assert_eq!(out, b);
        assert!(!state.paused());
        assert!(state.network_evals() > 1);
    }

    #[test]
    fn steps_are_deterministic() {
        let net = test_net(6);
        let cfg = test_config();
        let b = BoundingBox::new(100.0, 75.0, 20.0, 20.0).unwrap();
        let w = square_window(100.0, 75.0, 0, 40_000, 600);
        let w2 = square_window(102.0, 75.0, 40_000, 80_000, 600);
        let run = || {
            let mut state = init_target(&w, b, &net, &cfg).unwrap();
            let out = step(&mut state, &w2, &net, &cfg).unwrap();
            (out, state)
        };
        let (o1, s1) = run();
        let (o2, s2) = run();
        assert_eq!(o1, o2);
        assert_eq!(s1.bbox(), s2.bbox());
        assert_eq!(s1.exemplar().data(), s2.exemplar().data());
    }

    #[test]
    fn displacement_bounded_by_search_extent() {
        let net = test_net(7);
        let mut cfg = test_config();
        cfg.window_influence = 0.0;
        let b = BoundingBox::new(100.0, 75.0, 20.0, 20.0).unwrap();
        let w = square_window(100.0, 75.0, 0, 40_000, 600);
        let mut state = init_target(&w, b, &net, &cfg).unwrap();
        // A far-off distractor pattern: the argmax stays inside the map, so
        // the displacement cannot exceed half the search extent.
        let w2 = square_window(140.0, 100.0, 40_000, 80_000, 600);
        let out = step(&mut state, &w2, &net, &cfg).unwrap();
        let search = b.scaled(search_region_scale());
        let (rw, rh) = crate::events::region_size(&search);
        assert!((out.cx - b.cx).abs() <= rw / 2.0 + 1.0);
        assert!((out.cy - b.cy).abs() <= rh / 2.0 + 1.0);
    }

    #[test]
    fn scale_pyramid_runs_and_keeps_box_valid() {
        let net = test_net(8);
        let mut cfg = test_config();
        cfg.scales = Some([0.96, 1.0, 1.04]);
        let b = BoundingBox::new(100.0, 75.0, 20.0, 20.0).unwrap();
        let w = square_window(100.0, 75.0, 0, 40_000, 600);
        let mut state = init_target(&w, b, &net, &cfg).unwrap();
        let evals = state.network_evals();
        let w2 = square_window(101.0, 75.0, 40_000, 80_000, 600);
        let out = step(&mut state, &w2, &net, &cfg).unwrap();
        assert_eq!(state.network_evals(), evals + 3);
        assert!(out.w > 0.0 && out.h > 0.0);
        let ratio = out.w / b.w;
        assert!(
            (ratio - 0.96).abs() < 1e-9 || (ratio - 1.0).abs() < 1e-9 || (ratio - 1.04).abs() < 1e-9
        );
    }
}
