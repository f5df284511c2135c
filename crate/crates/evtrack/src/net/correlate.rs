//! Valid cross-correlation between the exemplar and search feature maps.
//! The accumulation order (channel, then kernel row, then kernel column) is
//! fixed so double-precision results match a naive triple-loop exactly.

use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::{Real, Tensor3};

/// `P[u, v] = sum_c sum_{i,j} exemplar[c, i, j] * search[c, u+i, v+j]`,
/// returned as a 1-channel score map of size
/// `(sh - eh + 1, sw - ew + 1)`.
pub fn cross_correlate<T: Real>(exemplar: &Tensor3<T>, search: &Tensor3<T>) -> Result<Tensor3<T>> {
    cross_correlate_with(exemplar, search, true)
}

/// Always-sequential variant of [`cross_correlate`].
pub fn cross_correlate_seq<T: Real>(
    exemplar: &Tensor3<T>,
    search: &Tensor3<T>,
) -> Result<Tensor3<T>> {
    cross_correlate_with(exemplar, search, false)
}

fn cross_correlate_with<T: Real>(
    exemplar: &Tensor3<T>,
    search: &Tensor3<T>,
    par: bool,
) -> Result<Tensor3<T>> {
    let (ec, eh, ew) = exemplar.dims();
    let (sc, sh, sw) = search.dims();
    if ec != sc {
        return Err(Error::ShapeMismatch {
            context: "cross_correlate",
            expected: format!("{ec} channels"),
            actual: format!("{sc} channels"),
        });
    }
    if eh > sh || ew > sw {
        return Err(Error::ShapeMismatch {
            context: "cross_correlate",
            expected: format!("search at least {eh}x{ew}"),
            actual: format!("{sh}x{sw}"),
        });
    }
    let oh = sh - eh + 1;
    let ow = sw - ew + 1;
    let mut out = Tensor3::zeros(1, oh, ow);
    // Contributions reach each output element in (c, i, j) order, exactly
    // the naive triple-loop accumulation sequence, while the inner axpy
    // over v keeps the loop vectorizable.
    parallel::for_each_chunk_mut_opt(par, out.data_mut(), ow, |u, row| {
        for c in 0..ec {
            for i in 0..eh {
                let e_row = exemplar.row(c, i);
                let s_row = search.row(c, u + i);
                for (j, &e) in e_row.iter().enumerate() {
                    for (o, &s) in row.iter_mut().zip(&s_row[j..j + ow]) {
                        *o += e * s;
                    }
                }
            }
        }
    });
    Ok(out)
}

/// Gradients of the score map with respect to both feature maps.
pub fn cross_correlate_backward<T: Real>(
    exemplar: &Tensor3<T>,
    search: &Tensor3<T>,
    d_score: &Tensor3<T>,
) -> (Tensor3<T>, Tensor3<T>) {
    let (ec, eh, ew) = exemplar.dims();
    let (_, sh, sw) = search.dims();
    let (_, oh, ow) = d_score.dims();
    let mut d_ex = Tensor3::zeros(ec, eh, ew);
    let mut d_se = Tensor3::zeros(ec, sh, sw);
    for u in 0..oh {
        for v in 0..ow {
            let g = d_score.get(0, u, v);
            if g == T::zero() {
                continue;
            }
            for c in 0..ec {
                for i in 0..eh {
                    let e_row = exemplar.row(c, i);
                    let s_row = &search.row(c, u + i)[v..v + ew];
                    let de_row = &mut d_ex.row_mut(c, i)[..ew];
                    for (de, &s) in de_row.iter_mut().zip(s_row) {
                        *de += g * s;
                    }
                    let ds_row = &mut d_se.row_mut(c, u + i)[v..v + ew];
                    for (ds, &e) in ds_row.iter_mut().zip(e_row) {
                        *ds += g * e;
                    }
                }
            }
        }
    }
    (d_ex, d_se)
}
