//! Property tests for the cross-module invariants: conservation laws,
//! windowing algebra, resize bounds, simulator counting, metric behavior,
//! and parallel/sequential agreement.

use proptest::prelude::*;

use evtrack::embedding::{
    embed, embed_seq, resize_bilinear, resize_bilinear_seq, EmbeddingConfig, EmbeddingMethod,
};
use evtrack::evaluation::{iou, mean_iou, success_rate, success_score, TrackRun};
use evtrack::events::{
    select_target_region, slice_window, BoundingBox, Event, EventWindow, Polarity, SensorGeometry,
};
use evtrack::simulator::{simulate_events, simulate_events_seq, Frame, FrameSequence, SimConfig};
use evtrack::Tensor3;

const W: usize = 32;
const H: usize = 24;

fn geom() -> SensorGeometry {
    SensorGeometry::new(W, H).unwrap()
}

prop_compose! {
    fn arb_events(max_len: usize)(raw in prop::collection::vec(
        (0u64..10_000, 0u16..W as u16, 0u16..H as u16, prop::bool::ANY),
        0..max_len,
    )) -> Vec<Event> {
        let mut events: Vec<Event> = raw
            .into_iter()
            .map(|(t, x, y, p)| {
                Event::new(t, x, y, if p { Polarity::Positive } else { Polarity::Negative })
            })
            .collect();
        events.sort_by_key(|e| e.t);
        events
    }
}

fn window(events: Vec<Event>) -> EventWindow {
    EventWindow::new(events, 0, 10_000, geom()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Consecutive half-open slices partition a stream.
    #[test]
    fn slice_windows_partition(events in arb_events(300), a in 1u64..5000, len in 1u64..4000) {
        let b = a + len;
        let left = slice_window(&events, 0, a, geom()).unwrap();
        let mid = slice_window(&events, a, b, geom()).unwrap();
        let right = slice_window(&events, b, 10_001, geom()).unwrap();
        let rejoined: Vec<Event> = left
            .events()
            .iter()
            .chain(mid.events())
            .chain(right.events())
            .copied()
            .collect();
        prop_assert_eq!(rejoined, events);
    }

    /// Re-selecting a region crop with a full-crop box keeps every event.
    #[test]
    fn region_selection_idempotent_in_count(
        events in arb_events(200),
        cx in 4.0f64..28.0,
        cy in 4.0f64..20.0,
        w in 2.0f64..12.0,
        h in 2.0f64..12.0,
    ) {
        let b = BoundingBox::new(cx, cy, w, h).unwrap();
        let (crop, region) = select_target_region(&window(events), &b).unwrap();
        let (gw, gh) = region.grid_size();
        // A box whose region covers the whole crop grid.
        let cover = BoundingBox::new(
            gw as f64 / 2.0,
            gh as f64 / 2.0,
            gw as f64,
            gh as f64,
        ).unwrap();
        let (recrop, _) = select_target_region(&crop, &cover).unwrap();
        prop_assert_eq!(recrop.len(), crop.len());
    }

    /// EST mass equals the sum of normalized timestamps; voxel mass equals
    /// the event count; count variants count.
    #[test]
    fn embedding_mass_conservation(events in arb_events(400), bins in 1usize..12) {
        let w = window(events);
        let est = embed(&w, &EmbeddingConfig::new(EmbeddingMethod::Est, bins).unwrap()).unwrap();
        let expect: f64 = w.events().iter().map(|e| e.t as f64 / 10_000.0).sum();
        let total = est.sum_f64();
        prop_assert!((total - expect).abs() <= 1e-5 * expect.max(1.0));

        let voxel = embed(
            &w,
            &EmbeddingConfig::new(EmbeddingMethod::TwoChannelVoxel, bins).unwrap(),
        ).unwrap();
        prop_assert!((voxel.sum_f64() - w.len() as f64).abs() < 1e-6);

        let one = embed(
            &w,
            &EmbeddingConfig::new(EmbeddingMethod::OneChannelImage, 1).unwrap(),
        ).unwrap();
        prop_assert!((one.sum_f64() - w.len() as f64).abs() < 1e-9);
    }

    /// Zeroing negative events zeroes exactly the negative channel group.
    #[test]
    fn polarity_separation(events in arb_events(300), bins in 1usize..10) {
        let cfg = EmbeddingConfig::new(EmbeddingMethod::Est, bins).unwrap();
        let w = window(events.clone());
        let full = embed(&w, &cfg).unwrap();
        let pos_only: Vec<Event> = events
            .iter()
            .filter(|e| e.polarity == Polarity::Positive)
            .copied()
            .collect();
        let wp = window(pos_only);
        let pos = embed(&wp, &cfg).unwrap();
        let plane = H * W;
        // Positive group unchanged, negative group zeroed.
        prop_assert_eq!(&full.data()[..bins * plane], &pos.data()[..bins * plane]);
        prop_assert!(pos.data()[bins * plane..].iter().all(|&v| v == 0.0));
    }

    /// Appending events never decreases any EST cell.
    #[test]
    fn est_monotone_under_append(events in arb_events(200), extra in arb_events(50)) {
        let cfg = EmbeddingConfig::default();
        let base = embed(&window(events.clone()), &cfg).unwrap();
        let mut all = events;
        all.extend(extra);
        all.sort_by_key(|e| e.t);
        let bigger = embed(&window(all), &cfg).unwrap();
        for (a, b) in base.data().iter().zip(bigger.data()) {
            prop_assert!(b >= a);
        }
    }

    /// Parallel and sequential embeddings agree bitwise.
    #[test]
    fn embed_parallel_equals_sequential(events in arb_events(5000)) {
        let cfg = EmbeddingConfig::default();
        let w = window(events);
        let a = embed(&w, &cfg).unwrap();
        let b = embed_seq(&w, &cfg).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }

    /// Resize stays within the per-plane value range and preserves
    /// constants exactly.
    #[test]
    fn resize_bounds(
        values in prop::collection::vec(-10.0f32..10.0, 6 * 5),
        oh in 1usize..16,
        ow in 1usize..16,
    ) {
        let t = Tensor3::from_vec(1, 6, 5, values).unwrap();
        let r = resize_bilinear(&t, oh, ow).unwrap();
        let (min, max) = (t.min_value(), t.max_value());
        for &v in r.data() {
            prop_assert!(v >= min && v <= max);
        }
        let c = Tensor3::from_vec(1, 6, 5, vec![0.37f32; 30]).unwrap();
        let rc = resize_bilinear(&c, oh, ow).unwrap();
        prop_assert!(rc.data().iter().all(|&v| v == 0.37));

        let rs = resize_bilinear_seq(&t, oh, ow).unwrap();
        prop_assert_eq!(r.data(), rs.data());
    }

    /// Per-pixel event count is the floor of accumulated log change over
    /// the threshold, under monotone ramps.
    #[test]
    fn simulator_count_formula(steps in 1usize..6, dl_scale in 0.1f64..6.0) {
        let cfg = SimConfig::default();
        let dl_total = cfg.threshold_pos * dl_scale;
        let i0 = 0.05f32;
        let l0 = ((i0 as f64) + cfg.log_eps).ln();
        let mut frames = vec![Frame::filled(1, 1, i0)];
        let mut timestamps = vec![0u64];
        for k in 1..=steps {
            let l = l0 + dl_total * k as f64 / steps as f64;
            let i = (l.exp() - cfg.log_eps) as f32;
            frames.push(Frame::filled(1, 1, i));
            timestamps.push(k as u64 * 10_000);
        }
        let seq = FrameSequence::new(frames.clone(), timestamps).unwrap();
        let events = simulate_events(&seq, &cfg).unwrap();
        // Recompute the achieved log rise from the stored f32 frames.
        let l_last = ((frames.last().unwrap().get(0, 0) as f64) + cfg.log_eps).ln();
        let expect = ((l_last - l0) / cfg.threshold_pos).floor() as usize;
        prop_assert_eq!(events.len(), expect);
        prop_assert!(events.iter().all(|e| e.polarity == Polarity::Positive));
    }

    /// Simulated streams are globally sorted, in bounds, and identical
    /// between the parallel and sequential paths.
    #[test]
    fn simulator_sorted_and_parallel_consistent(
        pixels in prop::collection::vec(0.0f32..1.0, 4 * 3 * 5),
    ) {
        let frames: Vec<Frame> = pixels
            .chunks(12)
            .map(|c| Frame::new(4, 3, c.to_vec()).unwrap())
            .collect();
        let ts: Vec<u64> = (0..frames.len() as u64).map(|i| i * 7_000).collect();
        let seq = FrameSequence::new(frames, ts).unwrap();
        let a = simulate_events(&seq, &SimConfig::default()).unwrap();
        let b = simulate_events_seq(&seq, &SimConfig::default()).unwrap();
        prop_assert_eq!(&a, &b);
        for pair in a.windows(2) {
            prop_assert!(pair[0].t <= pair[1].t);
        }
        for e in &a {
            prop_assert!(e.x < 4 && e.y < 3);
        }
    }

    /// IoU is symmetric, bounded, and 1 only for identical boxes.
    #[test]
    fn iou_properties(
        ax in -5.0f64..5.0, ay in -5.0f64..5.0, aw in 0.5f64..10.0, ah in 0.5f64..10.0,
        bx in -5.0f64..5.0, by in -5.0f64..5.0, bw in 0.5f64..10.0, bh in 0.5f64..10.0,
    ) {
        let a = BoundingBox::new(ax, ay, aw, ah).unwrap();
        let b = BoundingBox::new(bx, by, bw, bh).unwrap();
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - iou(&b, &a)).abs() < 1e-12);
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        if v == 1.0 {
            prop_assert!((ax - bx).abs() < 1e-9 && (aw - bw).abs() < 1e-9);
        }
    }

    /// Success score tracks mean IoU within the grid resolution.
    #[test]
    fn success_score_approximates_mean_iou(
        offsets in prop::collection::vec((-12.0f64..12.0, -12.0f64..12.0), 1..30),
    ) {
        let gt: Vec<BoundingBox> = offsets
            .iter()
            .map(|_| BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap())
            .collect();
        let pred: Vec<BoundingBox> = offsets
            .iter()
            .map(|&(dx, dy)| BoundingBox::new(dx, dy, 10.0, 10.0).unwrap())
            .collect();
        let run = TrackRun::new(pred, gt).unwrap();
        prop_assert!((success_score(&run) - mean_iou(&run)).abs() <= 1e-2);
        let sr = success_rate(&run);
        prop_assert!((0.0..=1.0).contains(&sr));
    }
}
