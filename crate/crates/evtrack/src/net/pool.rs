//! Valid max pooling with recorded argmax positions for the backward pass.
//! Window scan order is row-major and comparisons are strict, so ties go to
//! the first occurrence deterministically.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor3};

#[derive(Debug, Clone)]
pub struct PoolCache {
    /// Flat input index of the selected element, one per output element.
    pub argmax: Vec<u32>,
    pub in_dims: (usize, usize, usize),
    pub kernel: usize,
    pub stride: usize,
}

pub fn maxpool<T: Real>(
    input: &Tensor3<T>,
    kernel: usize,
    stride: usize,
) -> Result<(Tensor3<T>, PoolCache)> {
    let (c, h, w) = input.dims();
    if h < kernel || w < kernel {
        return Err(Error::InputTooSmall {
            context: "maxpool",
            actual: h.min(w),
            min: kernel,
        });
    }
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = Tensor3::zeros(c, oh, ow);
    let mut argmax = vec![0u32; c * oh * ow];
    let data = input.data();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = (ch * h + oy * stride) * w + ox * stride;
                let mut best = data[best_idx];
                for ky in 0..kernel {
                    let row = (ch * h + oy * stride + ky) * w + ox * stride;
                    for kx in 0..kernel {
                        let v = data[row + kx];
                        if v > best {
                            best = v;
                            best_idx = row + kx;
                        }
                    }
                }
                out.set(ch, oy, ox, best);
                argmax[(ch * oh + oy) * ow + ox] = best_idx as u32;
            }
        }
    }
    Ok((
        out,
        PoolCache {
            argmax,
            in_dims: (c, h, w),
            kernel,
            stride,
        },
    ))
}

/// Max pooling without argmax bookkeeping, for inference.
pub fn maxpool_values<T: Real>(
    input: &Tensor3<T>,
    kernel: usize,
    stride: usize,
) -> Result<Tensor3<T>> {
    let (c, h, w) = input.dims();
    if h < kernel || w < kernel {
        return Err(Error::InputTooSmall {
            context: "maxpool",
            actual: h.min(w),
            min: kernel,
        });
    }
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let mut out = Tensor3::zeros(c, oh, ow);
    for ch in 0..c {
        for oy in 0..oh {
            let dst = out.row_mut(ch, oy);
            for ky in 0..kernel {
                let src = input.row(ch, oy * stride + ky);
                for (ox, d) in dst.iter_mut().enumerate() {
                    let base = ox * stride;
                    for kx in 0..kernel {
                        let v = src[base + kx];
                        if (ky == 0 && kx == 0) || v > *d {
                            *d = v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn maxpool_backward<T: Real>(cache: &PoolCache, d_out: &Tensor3<T>) -> Tensor3<T> {
    let (c, h, w) = cache.in_dims;
    let mut dx = Tensor3::zeros(c, h, w);
    let data = dx.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(d_out.data()) {
        data[idx as usize] += g;
    }
    dx
}
