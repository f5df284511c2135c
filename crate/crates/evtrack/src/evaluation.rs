//! Tracking metrics: IoU, success and precision curves with their AUC
//! scores, and the strict-overlap success rate.

use crate::error::{Error, Result};
use crate::events::BoundingBox;

/// Index-aligned predicted and ground-truth boxes for one sequence.
#[derive(Debug, Clone)]
pub struct TrackRun {
    predictions: Vec<BoundingBox>,
    ground_truth: Vec<BoundingBox>,
}

impl TrackRun {
    pub fn new(predictions: Vec<BoundingBox>, ground_truth: Vec<BoundingBox>) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::InvalidArgument("track run is empty".into()));
        }
        if predictions.len() != ground_truth.len() {
            return Err(Error::ShapeMismatch {
                context: "TrackRun::new",
                expected: format!("{} ground-truth boxes", predictions.len()),
                actual: format!("{}", ground_truth.len()),
            });
        }
        Ok(TrackRun {
            predictions,
            ground_truth,
        })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn predictions(&self) -> &[BoundingBox] {
        &self.predictions
    }

    pub fn ground_truth(&self) -> &[BoundingBox] {
        &self.ground_truth
    }

    fn ious(&self) -> Vec<f64> {
        self.predictions
            .iter()
            .zip(&self.ground_truth)
            .map(|(p, g)| iou(p, g))
            .collect()
    }

    /// Center distances normalized by the ground-truth box diagonal, so the
    /// `[0, 1]` threshold sweep is meaningful across target sizes.
    fn normalized_distances(&self) -> Vec<f64> {
        self.predictions
            .iter()
            .zip(&self.ground_truth)
            .map(|(p, g)| {
                let dx = p.cx - g.cx;
                let dy = p.cy - g.cy;
                (dx * dx + dy * dy).sqrt() / g.diagonal()
            })
            .collect()
    }
}

/// Intersection-over-union of two axis-aligned boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x_max().min(b.x_max()) - a.x_min().max(b.x_min())).max(0.0);
    let iy = (a.y_max().min(b.y_max()) - a.y_min().max(b.y_min())).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Number of points on the threshold grid over `[0, 1]`.
pub const CURVE_POINTS: usize = 101;

/// A metric curve sampled on the uniform threshold grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub thresholds: Vec<f64>,
    pub values: Vec<f64>,
}

impl Curve {
    fn from_fn(f: impl Fn(f64) -> f64) -> Curve {
        let thresholds: Vec<f64> = (0..CURVE_POINTS)
            .map(|i| i as f64 / (CURVE_POINTS - 1) as f64)
            .collect();
        let values = thresholds.iter().map(|&t| f(t)).collect();
        Curve { thresholds, values }
    }

    /// Trapezoidal area under the curve over `[0, 1]`.
    pub fn auc(&self) -> f64 {
        let mut area = 0.0;
        for i in 1..self.thresholds.len() {
            let dt = self.thresholds[i] - self.thresholds[i - 1];
            area += dt * (self.values[i] + self.values[i - 1]) / 2.0;
        }
        area
    }
}

/// Fraction of frames with IoU at least the threshold, per threshold.
pub fn success_curve(run: &TrackRun) -> Curve {
    let ious = run.ious();
    let n = ious.len() as f64;
    Curve::from_fn(|t| ious.iter().filter(|&&v| v >= t).count() as f64 / n)
}

/// Area under the success curve.
pub fn success_score(run: &TrackRun) -> f64 {
    success_curve(run).auc()
}

/// Fraction of frames whose normalized center distance is within the
/// threshold, per threshold.
pub fn precision_curve(run: &TrackRun) -> Curve {
    let dists = run.normalized_distances();
    let n = dists.len() as f64;
    Curve::from_fn(|t| dists.iter().filter(|&&d| d <= t).count() as f64 / n)
}

/// Area under the precision curve.
pub fn precision_score(run: &TrackRun) -> f64 {
    precision_curve(run).auc()
}

/// Fraction of frames with IoU strictly greater than 0.5.
pub fn success_rate(run: &TrackRun) -> f64 {
    let ious = run.ious();
    ious.iter().filter(|&&v| v > 0.5).count() as f64 / ious.len() as f64
}

/// All metrics of one run.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub success_score: f64,
    pub precision_score: f64,
    pub success_rate: f64,
    pub success_curve: Curve,
    pub precision_curve: Curve,
}

pub fn evaluate(run: &TrackRun) -> MetricReport {
    let success_curve = success_curve(run);
    let precision_curve = precision_curve(run);
    MetricReport {
        success_score: success_curve.auc(),
        precision_score: precision_curve.auc(),
        success_rate: success_rate(run),
        success_curve,
        precision_curve,
    }
}

/// Mean IoU over the run; the success score approximates this within the
/// threshold-grid resolution.
pub fn mean_iou(run: &TrackRun) -> f64 {
    let ious = run.ious();
    ious.iter().sum::<f64>() / ious.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn iou_identical_is_one() {
        let a = bb(5.0, 5.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = bb(0.0, 0.0, 4.0, 4.0);
        let b = bb(100.0, 100.0, 4.0, 4.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_half_overlap_rectangles() {
        let a = bb(5.0, 5.0, 10.0, 10.0);
        let b = bb(10.0, 5.0, 10.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_is_symmetric_and_bounded() {
        let a = bb(3.0, 4.0, 7.0, 5.0);
        let b = bb(5.5, 3.0, 4.0, 9.0);
        let v = iou(&a, &b);
        assert_eq!(v, iou(&b, &a));
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn perfect_run_scores_one() {
        let boxes = vec![bb(1.0, 2.0, 3.0, 4.0); 10];
        let run = TrackRun::new(boxes.clone(), boxes).unwrap();
        assert_eq!(success_score(&run), 1.0);
        assert_eq!(precision_score(&run), 1.0);
        assert_eq!(success_rate(&run), 1.0);
    }

    #[test]
    fn hopeless_run_scores_zero() {
        let pred = vec![bb(1000.0, 1000.0, 2.0, 2.0); 5];
        let gt = vec![bb(1.0, 1.0, 2.0, 2.0); 5];
        let run = TrackRun::new(pred, gt).unwrap();
        // The theta = 0 grid point counts every frame (IoU >= 0), so the
        // success AUC is zero only up to the grid resolution.
        assert!(success_score(&run) <= 1.0 / (CURVE_POINTS - 1) as f64);
        assert_eq!(precision_score(&run), 0.0);
        assert_eq!(success_rate(&run), 0.0);
    }

    #[test]
    fn constant_iou_run_scores_near_that_iou() {
        // Shift a 10x10 box to get IoU = 1/3 on every frame.
        let pred = vec![bb(10.0, 5.0, 10.0, 10.0); 8];
        let gt = vec![bb(5.0, 5.0, 10.0, 10.0); 8];
        let run = TrackRun::new(pred, gt).unwrap();
        let score = success_score(&run);
        assert!((score - 1.0 / 3.0).abs() <= 1e-2, "{score}");
        assert!((success_score(&run) - mean_iou(&run)).abs() <= 1e-2);
    }

    #[test]
    fn constant_distance_half_scores_half() {
        // GT diagonal 10, center offset 5: normalized distance 0.5 exactly.
        let gt = vec![bb(0.0, 0.0, 8.0, 6.0); 4];
        let pred = vec![bb(5.0, 0.0, 8.0, 6.0); 4];
        let run = TrackRun::new(pred, gt).unwrap();
        let score = precision_score(&run);
        assert!((score - 0.5).abs() <= 1e-2, "{score}");
    }

    #[test]
    fn success_rate_is_strict_at_half() {
        // IoU exactly 0.5: x-offset d so that (10-d)*10 / (100+10d) = 1/2
        // gives d = 10/3.
        let d = 10.0 / 3.0;
        let pred = vec![bb(5.0 + d, 5.0, 10.0, 10.0); 4];
        let gt = vec![bb(5.0, 5.0, 10.0, 10.0); 4];
        let run = TrackRun::new(pred.clone(), gt.clone()).unwrap();
        let v = iou(&pred[0], &gt[0]);
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(success_rate(&run), 0.0);
    }

    #[test]
    fn success_rate_counts_fraction() {
        let gt = vec![bb(5.0, 5.0, 10.0, 10.0); 4];
        let pred = vec![
            bb(6.0, 5.0, 10.0, 10.0),  // IoU 9/11 > 0.5
            bb(12.0, 5.0, 10.0, 10.0), // IoU 3/17 < 0.5
            bb(5.5, 5.0, 10.0, 10.0),  // > 0.5
            bb(20.0, 5.0, 10.0, 10.0), // 0
        ];
        let run = TrackRun::new(pred, gt).unwrap();
        assert_eq!(success_rate(&run), 0.5);
    }

    #[test]
    fn metrics_invariant_under_uniform_scaling() {
        let pred = vec![bb(10.0, 5.0, 10.0, 8.0), bb(7.0, 6.0, 10.0, 8.0)];
        let gt = vec![bb(5.0, 5.0, 10.0, 8.0), bb(5.0, 5.0, 10.0, 8.0)];
        let scale = |v: &[BoundingBox], s: f64| -> Vec<BoundingBox> {
            v.iter()
                .map(|b| bb(b.cx * s, b.cy * s, b.w * s, b.h * s))
                .collect()
        };
        let base = evaluate(&TrackRun::new(pred.clone(), gt.clone()).unwrap());
        let scaled = evaluate(&TrackRun::new(scale(&pred, 3.5), scale(&gt, 3.5)).unwrap());
        assert!((base.success_score - scaled.success_score).abs() < 1e-12);
        assert!((base.precision_score - scaled.precision_score).abs() < 1e-12);
        assert_eq!(base.success_rate, scaled.success_rate);
    }

    #[test]
    fn improving_a_frame_never_hurts() {
        let gt = vec![bb(5.0, 5.0, 10.0, 10.0); 3];
        let worse = vec![
            bb(9.0, 5.0, 10.0, 10.0),
            bb(11.0, 5.0, 10.0, 10.0),
            bb(6.0, 5.0, 10.0, 10.0),
        ];
        let mut better = worse.clone();
        better[1] = bb(7.0, 5.0, 10.0, 10.0);
        let run_worse = TrackRun::new(worse, gt.clone()).unwrap();
        let run_better = TrackRun::new(better, gt).unwrap();
        assert!(success_score(&run_better) >= success_score(&run_worse));
        assert!(success_rate(&run_better) >= success_rate(&run_worse));
    }

    #[test]
    fn length_mismatch_rejected() {
        let a = vec![bb(1.0, 1.0, 2.0, 2.0); 3];
        let b = vec![bb(1.0, 1.0, 2.0, 2.0); 4];
        assert!(TrackRun::new(a, b).is_err());
    }
}
