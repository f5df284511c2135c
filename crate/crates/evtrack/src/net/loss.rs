//! Score-map labels and the class-balanced logistic loss.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor3};

/// Binary label map over score-map positions: +1 within Euclidean distance
/// `radius` of the center, -1 elsewhere.
#[derive(Debug, Clone)]
pub struct LabelMap {
    height: usize,
    width: usize,
    radius: f64,
    values: Vec<i8>,
}

impl LabelMap {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> (usize, usize) {
        ((self.height - 1) / 2, (self.width - 1) / 2)
    }

    pub fn value(&self, y: usize, x: usize) -> i8 {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn positive_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0).count()
    }
}

/// Build the label map for an odd-sized score map. The lattice center is
/// only well defined for odd dimensions; even sizes are rejected.
pub fn make_label_map(height: usize, width: usize, radius: f64) -> Result<LabelMap> {
    if height == 0 || width == 0 || height % 2 == 0 || width % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "label map needs odd positive dimensions, got {height}x{width}"
        )));
    }
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "label radius must be non-negative, got {radius}"
        )));
    }
    let (cy, cx) = ((height - 1) / 2, (width - 1) / 2);
    let r_sq = radius * radius;
    let mut values = vec![-1i8; height * width];
    for y in 0..height {
        for x in 0..width {
            let dy = y as f64 - cy as f64;
            let dx = x as f64 - cx as f64;
            if dy * dy + dx * dx <= r_sq {
                values[y * width + x] = 1;
            }
        }
    }
    Ok(LabelMap {
        height,
        width,
        radius,
        values,
    })
}

/// Mean logistic loss `log(1 + exp(-P * L))` over all positions, with
/// class-balancing weights so positives and negatives contribute half the
/// total each, and its analytic gradient with respect to the score map.
///
/// The per-position weights average to 1, so a uniformly zero score map has
/// loss `ln 2` regardless of the labels.
pub fn logistic_loss<T: Real>(score: &Tensor3<T>, labels: &LabelMap) -> Result<(f64, Tensor3<T>)> {
    let (c, h, w) = score.dims();
    if c != 1 || h != labels.height() || w != labels.width() {
        return Err(Error::ShapeMismatch {
            context: "logistic_loss",
            expected: format!("score map 1x{}x{}", labels.height(), labels.width()),
            actual: format!("{c}x{h}x{w}"),
        });
    }
    let total = (h * w) as f64;
    let n_pos = labels.positive_count() as f64;
    let n_neg = total - n_pos;
    // Weights averaging to 1 across positions; uniform when one class is
    // absent.
    let (w_pos, w_neg) = if n_pos > 0.0 && n_neg > 0.0 {
        (total / (2.0 * n_pos), total / (2.0 * n_neg))
    } else {
        (1.0, 1.0)
    };

    let mut loss = 0.0f64;
    let mut grad = Tensor3::zeros(1, h, w);
    let g_data = grad.data_mut();
    for (i, (&p, &l)) in score.data().iter().zip(labels.values()).enumerate() {
        let weight = if l > 0 { w_pos } else { w_neg };
        let z = -(p.as_f64()) * l as f64;
        // log(1 + e^z) without overflow.
        let ell = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        loss += weight * ell;
        // d/dP log(1 + e^{-PL}) = -L * sigmoid(-PL)
        let sig = if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        };
        g_data[i] = T::from_f64(weight / total * (-(l as f64)) * sig);
    }
    Ok((loss / total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_map_17x17_r3_matches_lattice_enumeration() {
        let lm = make_label_map(17, 17, 3.0).unwrap();
        // Oracle: enumerate lattice points with x^2 + y^2 <= 9. The closed
        // disc of radius 3 contains 29 of them (the four (+-2, +-2) points
        // sit at distance sqrt(8) < 3).
        let mut oracle = 0;
        for dy in -8i32..=8 {
            for dx in -8i32..=8 {
                if dy * dy + dx * dx <= 9 {
                    oracle += 1;
                }
            }
        }
        assert_eq!(oracle, 29);
        assert_eq!(lm.positive_count(), oracle);
    }

    #[test]
    fn label_map_r0_has_single_positive_at_center() {
        let lm = make_label_map(9, 11, 0.0).unwrap();
        assert_eq!(lm.positive_count(), 1);
        let (cy, cx) = lm.center();
        assert_eq!(lm.value(cy, cx), 1);
    }

    #[test]
    fn label_map_has_dihedral_symmetry() {
        let lm = make_label_map(17, 17, 3.0).unwrap();
        for y in 0..17 {
            for x in 0..17 {
                let v = lm.value(y, x);
                assert_eq!(v, lm.value(16 - y, x));
                assert_eq!(v, lm.value(y, 16 - x));
                assert_eq!(v, lm.value(x, y));
            }
        }
    }

    #[test]
    fn label_map_rejects_even_dims() {
        assert!(make_label_map(16, 17, 3.0).is_err());
        assert!(make_label_map(17, 4, 3.0).is_err());
    }

    #[test]
    fn zero_scores_give_ln2() {
        let lm = make_label_map(17, 17, 3.0).unwrap();
        let p = Tensor3::<f64>::zeros(1, 17, 17);
        let (loss, _) = logistic_loss(&p, &lm).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_scores_give_zero_loss() {
        let lm = make_label_map(5, 5, 1.0).unwrap();
        let mut p = Tensor3::<f64>::zeros(1, 5, 5);
        for (v, &l) in p.data_mut().iter_mut().zip(lm.values()) {
            *v = 100.0 * l as f64;
        }
        let (loss, _) = logistic_loss(&p, &lm).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let lm = make_label_map(5, 5, 1.5).unwrap();
        let mut p = Tensor3::<f64>::zeros(1, 5, 5);
        let mut s = 0xfeedu64;
        for v in p.data_mut() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            *v = ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0;
        }
        let (_, grad) = logistic_loss(&p, &lm).unwrap();
        let eps = 1e-6;
        let mut max_rel = 0.0f64;
        for i in 0..p.len() {
            let mut hi = p.clone();
            hi.data_mut()[i] += eps;
            let mut lo = p.clone();
            lo.data_mut()[i] -= eps;
            let (lh, _) = logistic_loss(&hi, &lm).unwrap();
            let (ll, _) = logistic_loss(&lo, &lm).unwrap();
            let fd = (lh - ll) / (2.0 * eps);
            let a = grad.data()[i];
            let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-12);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-6, "max relative error {max_rel}");
    }

    #[test]
    fn loss_is_convex_in_scores() {
        let lm = make_label_map(5, 5, 1.0).unwrap();
        let mut s = 0x1234u64;
        let mut rand_map = || {
            let mut p = Tensor3::<f64>::zeros(1, 5, 5);
            for v in p.data_mut() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                *v = ((s >> 11) as f64 / (1u64 << 53) as f64) * 6.0 - 3.0;
            }
            p
        };
        for _ in 0..20 {
            let a = rand_map();
            let b = rand_map();
            let mut mid = a.clone();
            for (m, &bv) in mid.data_mut().iter_mut().zip(b.data()) {
                *m = (*m + bv) / 2.0;
            }
            let (la, _) = logistic_loss(&a, &lm).unwrap();
            let (lb, _) = logistic_loss(&b, &lm).unwrap();
            let (lm_, _) = logistic_loss(&mid, &lm).unwrap();
            assert!(lm_ <= (la + lb) / 2.0 + 1e-12);
        }
    }
}
