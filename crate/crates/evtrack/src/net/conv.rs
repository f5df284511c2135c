//! Valid (unpadded) 2D convolution, forward and backward, built on im2col
//! and GEMM. Work is split into fixed blocks of output rows; the block
//! partition depends only on the shapes, so parallel and sequential runs
//! produce bitwise-identical results.

use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::{Real, Tensor3};

/// Column count targeted per GEMM block; keeps the packed panels in cache.
const TARGET_BLOCK_COLS: usize = 2048;

#[derive(Debug, Clone)]
pub struct ConvLayer<T> {
    pub name: &'static str,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    /// `(out_channels, in_channels, kh, kw)` row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(
        name: &'static str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        ConvLayer {
            name,
            in_channels,
            out_channels,
            kh: kernel,
            kw: kernel,
            stride,
            weight: vec![T::zero(); out_channels * in_channels * kernel * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    /// Flattened kernel size, the inner GEMM dimension.
    pub fn k(&self) -> usize {
        self.in_channels * self.kh * self.kw
    }

    pub fn out_dims(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        if in_h < self.kh || in_w < self.kw {
            return Err(Error::InputTooSmall {
                context: self.name,
                actual: in_h.min(in_w),
                min: self.kh.max(self.kw),
            });
        }
        Ok((
            (in_h - self.kh) / self.stride + 1,
            (in_w - self.kw) / self.stride + 1,
        ))
    }

    pub fn forward(&self, input: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.forward_with(input, true)
    }

    /// Always-sequential variant of [`ConvLayer::forward`].
    pub fn forward_seq(&self, input: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.forward_with(input, false)
    }

    fn forward_with(&self, input: &Tensor3<T>, par: bool) -> Result<Tensor3<T>> {
        let (c_in, in_h, in_w) = input.dims();
        if c_in != self.in_channels {
            return Err(Error::ShapeMismatch {
                context: self.name,
                expected: format!("{} input channels", self.in_channels),
                actual: format!("{c_in} input channels"),
            });
        }
        let (oh, ow) = self.out_dims(in_h, in_w)?;
        let k = self.k();
        let src = ColSource::new(input, self.stride, self.kh, self.kw);
        let rows_per_block = (TARGET_BLOCK_COLS / ow).clamp(1, oh);
        let plane = oh * ow;
        let mut out = Tensor3::zeros(self.out_channels, oh, ow);

        if par && parallel::multi_threaded() {
            let blocks = parallel::map_ranges(oh, rows_per_block, |oy0, oy1| {
                let bp = (oy1 - oy0) * ow;
                let mut col = vec![T::zero(); k * bp];
                src.fill(oy0, oy1, ow, &mut col);
                let mut block = vec![T::zero(); self.out_channels * bp];
                T::gemm(
                    self.out_channels,
                    k,
                    bp,
                    T::one(),
                    &self.weight,
                    k as isize,
                    1,
                    &col,
                    bp as isize,
                    1,
                    T::zero(),
                    &mut block,
                    bp as isize,
                    1,
                );
                (oy0, block)
            });
            for (oy0, block) in blocks {
                let bp = block.len() / self.out_channels;
                for oc in 0..self.out_channels {
                    let dst_start = oc * plane + oy0 * ow;
                    out.data_mut()[dst_start..dst_start + bp]
                        .copy_from_slice(&block[oc * bp..(oc + 1) * bp]);
                }
            }
        } else {
            // One reused panel; GEMM writes straight into the plane-strided
            // output rows, which yields the same values as the buffered path.
            let mut col = vec![T::zero(); k * rows_per_block * ow];
            let mut oy0 = 0usize;
            while oy0 < oh {
                let oy1 = (oy0 + rows_per_block).min(oh);
                let bp = (oy1 - oy0) * ow;
                let colb = &mut col[..k * bp];
                src.fill(oy0, oy1, ow, colb);
                T::gemm(
                    self.out_channels,
                    k,
                    bp,
                    T::one(),
                    &self.weight,
                    k as isize,
                    1,
                    colb,
                    bp as isize,
                    1,
                    T::zero(),
                    &mut out.data_mut()[oy0 * ow..],
                    plane as isize,
                    1,
                );
                oy0 = oy1;
            }
        }

        for oc in 0..self.out_channels {
            let b = self.bias[oc];
            if b != T::zero() {
                for v in out.plane_mut(oc) {
                    *v += b;
                }
            }
        }
        Ok(out)
    }

    /// Weight and bias gradients for a recorded forward pass.
    pub fn backward_weights(&self, input: &Tensor3<T>, d_out: &Tensor3<T>) -> (Vec<T>, Vec<T>) {
        let (_, oh, ow) = d_out.dims();
        let k = self.k();
        let plane = oh * ow;
        let src = ColSource::new(input, self.stride, self.kh, self.kw);
        let rows_per_block = (TARGET_BLOCK_COLS / ow).clamp(1, oh);

        let partials = parallel::map_ranges(oh, rows_per_block, |oy0, oy1| {
            let bp = (oy1 - oy0) * ow;
            let mut col = vec![T::zero(); k * bp];
            src.fill(oy0, oy1, ow, &mut col);
            let mut dw = vec![T::zero(); self.out_channels * k];
            // dW = dOut_block (OC x bp) * col^T (bp x K); dOut rows are
            // plane-strided views into the full tensor.
            T::gemm(
                self.out_channels,
                bp,
                k,
                T::one(),
                &d_out.data()[oy0 * ow..],
                plane as isize,
                1,
                &col,
                1,
                bp as isize,
                T::zero(),
                &mut dw,
                k as isize,
                1,
            );
            dw
        });

        let mut dw = vec![T::zero(); self.out_channels * k];
        for partial in partials {
            for (a, b) in dw.iter_mut().zip(&partial) {
                *a += *b;
            }
        }

        let mut db = vec![T::zero(); self.out_channels];
        for oc in 0..self.out_channels {
            let mut acc = T::zero();
            for &v in d_out.plane(oc) {
                acc += v;
            }
            db[oc] = acc;
        }
        (dw, db)
    }

    /// Gradient with respect to the layer input: `dX_col = W^T * dOut` per
    /// block, scattered back with col2im. Blocks overlap in the input rows
    /// they touch, so the scatter runs in block order.
    pub fn backward_input(&self, d_out: &Tensor3<T>, in_h: usize, in_w: usize) -> Tensor3<T> {
        let (_, oh, ow) = d_out.dims();
        let s = self.stride;
        let k = self.k();
        let plane = oh * ow;
        let mut dx = Tensor3::zeros(self.in_channels, in_h, in_w);
        let rows_per_block = (TARGET_BLOCK_COLS / ow).clamp(1, oh);
        let mut col = vec![T::zero(); k * rows_per_block * ow];

        let mut oy0 = 0usize;
        while oy0 < oh {
            let oy1 = (oy0 + rows_per_block).min(oh);
            let bp = (oy1 - oy0) * ow;
            let colb = &mut col[..k * bp];
            T::gemm(
                k,
                self.out_channels,
                bp,
                T::one(),
                &self.weight,
                1,
                k as isize,
                &d_out.data()[oy0 * ow..],
                plane as isize,
                1,
                T::zero(),
                colb,
                bp as isize,
                1,
            );
            let mut r = 0usize;
            for ic in 0..self.in_channels {
                for ky in 0..self.kh {
                    for kx in 0..self.kw {
                        let col_row = &colb[r * bp..(r + 1) * bp];
                        for (bi, oy) in (oy0..oy1).enumerate() {
                            let iy = oy * s + ky;
                            let dst = dx.row_mut(ic, iy);
                            let src = &col_row[bi * ow..(bi + 1) * ow];
                            if s == 1 {
                                for (d, &v) in dst[kx..kx + ow].iter_mut().zip(src) {
                                    *d += v;
                                }
                            } else {
                                for (ox, &v) in src.iter().enumerate() {
                                    dst[ox * s + kx] += v;
                                }
                            }
                        }
                        r += 1;
                    }
                }
            }
            oy0 = oy1;
        }
        dx
    }
}

/// Source of im2col panels. Stride-1 layers copy rows straight from the
/// input; strided layers first split every channel into `stride^2` phase
/// planes so panel rows stay contiguous copies.
struct ColSource<'a, T> {
    input: &'a Tensor3<T>,
    stride: usize,
    kh: usize,
    kw: usize,
    phases: Option<PhaseBuf<T>>,
}

struct PhaseBuf<T> {
    data: Vec<T>,
    /// Offset of plane `(ic, p, q)` at `((ic * s) + p) * s + q`.
    offsets: Vec<usize>,
    /// Plane width per column phase `q`.
    widths: Vec<usize>,
}

impl<'a, T: Real> ColSource<'a, T> {
    fn new(input: &'a Tensor3<T>, stride: usize, kh: usize, kw: usize) -> Self {
        let phases = (stride > 1).then(|| build_phases(input, stride));
        ColSource {
            input,
            stride,
            kh,
            kw,
            phases,
        }
    }

    /// Fill the panel for output rows `[oy0, oy1)`: row `r = (ic, ky, kx)`
    /// holds the input values each output position multiplies with weight
    /// element `r`.
    fn fill(&self, oy0: usize, oy1: usize, ow: usize, col: &mut [T]) {
        let bp = (oy1 - oy0) * ow;
        let (kh, kw, s) = (self.kh, self.kw, self.stride);
        let mut r = 0usize;
        for ic in 0..self.input.channels() {
            for ky in 0..kh {
                for kx in 0..kw {
                    let dst_row = &mut col[r * bp..(r + 1) * bp];
                    if s == 1 {
                        for (bi, oy) in (oy0..oy1).enumerate() {
                            let src = &self.input.row(ic, oy + ky)[kx..kx + ow];
                            dst_row[bi * ow..(bi + 1) * ow].copy_from_slice(src);
                        }
                    } else {
                        let phases = self.phases.as_ref().unwrap();
                        let (p, q) = (ky % s, kx % s);
                        let off = phases.offsets[(ic * s + p) * s + q];
                        let pw = phases.widths[q];
                        let (a0, b0) = (ky / s, kx / s);
                        for (bi, oy) in (oy0..oy1).enumerate() {
                            let start = off + (oy + a0) * pw + b0;
                            dst_row[bi * ow..(bi + 1) * ow]
                                .copy_from_slice(&phases.data[start..start + ow]);
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

fn build_phases<T: Real>(input: &Tensor3<T>, s: usize) -> PhaseBuf<T> {
    let (c, h, w) = input.dims();
    let heights: Vec<usize> = (0..s).map(|p| (h + s - 1 - p) / s).collect();
    let widths: Vec<usize> = (0..s).map(|q| (w + s - 1 - q) / s).collect();
    let mut offsets = Vec::with_capacity(c * s * s);
    let mut total = 0usize;
    for _ic in 0..c {
        for p in 0..s {
            for q in 0..s {
                offsets.push(total);
                total += heights[p] * widths[q];
            }
        }
    }
    let mut data = vec![T::zero(); total];
    for ic in 0..c {
        for y in 0..h {
            let p = y % s;
            let py = y / s;
            let src = input.row(ic, y);
            for q in 0..s {
                let pw = widths[q];
                let off = offsets[(ic * s + p) * s + q] + py * pw;
                let dst = &mut data[off..off + pw];
                for (i, d) in dst.iter_mut().enumerate() {
                    *d = src[q + i * s];
                }
            }
        }
    }
    PhaseBuf {
        data,
        offsets,
        widths,
    }
}
