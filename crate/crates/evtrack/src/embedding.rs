//! Event-to-grid embeddings: the event spike tensor with a trilinear kernel
//! plus the simpler count-based variants, and the bilinear resize used to
//! bring crops to the network input sizes.
//!
//! All embeddings accumulate additively in input event order, per pixel, so
//! the parallel and sequential paths are bitwise identical.

use crate::error::{Error, Result};
use crate::events::EventWindow;
use crate::parallel;
use crate::tensor::{EventTensor, Real, Tensor3};

/// Grid representation to embed events into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingMethod {
    /// Per-polarity temporal bins holding trilinear-split normalized
    /// timestamps; `2 * bins` channels, positive group first.
    Est,
    /// Single plane of per-pixel event counts, polarity ignored.
    OneChannelImage,
    /// Per-pixel counts split by polarity, 2 planes.
    TwoChannelImage,
    /// Per-polarity temporal bins holding trilinear-split event counts.
    TwoChannelVoxel,
}

impl EmbeddingMethod {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingMethod::Est => "est",
            EmbeddingMethod::OneChannelImage => "one_channel_image",
            EmbeddingMethod::TwoChannelImage => "two_channel_image",
            EmbeddingMethod::TwoChannelVoxel => "two_channel_voxel",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "est" => Ok(EmbeddingMethod::Est),
            "one_channel_image" => Ok(EmbeddingMethod::OneChannelImage),
            "two_channel_image" => Ok(EmbeddingMethod::TwoChannelImage),
            "two_channel_voxel" => Ok(EmbeddingMethod::TwoChannelVoxel),
            other => Err(Error::InvalidArgument(format!(
                "unknown embedding method `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingConfig {
    pub method: EmbeddingMethod,
    pub bins: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            method: EmbeddingMethod::Est,
            bins: 9,
        }
    }
}

impl EmbeddingConfig {
    pub fn new(method: EmbeddingMethod, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("bins must be >= 1".into()));
        }
        Ok(EmbeddingConfig { method, bins })
    }

    /// Number of channel planes the method produces.
    pub fn channels(&self) -> usize {
        match self.method {
            EmbeddingMethod::Est | EmbeddingMethod::TwoChannelVoxel => 2 * self.bins,
            EmbeddingMethod::OneChannelImage => 1,
            EmbeddingMethod::TwoChannelImage => 2,
        }
    }
}

/// Per-event grid contributions. At most two (channel, value) pairs; the
/// second is the upper temporal bin of the trilinear split.
#[inline]
fn contributions(
    method: EmbeddingMethod,
    bins: usize,
    t_norm: f64,
    group: usize,
) -> ([(usize, f32); 2], usize) {
    match method {
        EmbeddingMethod::OneChannelImage => ([(0, 1.0), (0, 0.0)], 1),
        EmbeddingMethod::TwoChannelImage => ([(group, 1.0), (0, 0.0)], 1),
        EmbeddingMethod::Est | EmbeddingMethod::TwoChannelVoxel => {
            let value = if method == EmbeddingMethod::Est {
                t_norm as f32
            } else {
                1.0
            };
            // Continuous bin coordinate over [0, bins-1]; integer pixel
            // coordinates collapse the spatial kernel factors to 1, leaving
            // a linear split across the two enclosing bins.
            let b = t_norm * (bins as f64 - 1.0);
            let lo = b.floor() as usize;
            let frac = (b - lo as f64) as f32;
            let base = group * bins;
            if frac > 0.0 && lo + 1 < bins {
                (
                    [
                        (base + lo, value * (1.0 - frac)),
                        (base + lo + 1, value * frac),
                    ],
                    2,
                )
            } else {
                ([(base + lo, value), (0, 0.0)], 1)
            }
        }
    }
}

fn check_window(window: &EventWindow, config: &EmbeddingConfig) -> Result<()> {
    if config.bins == 0 {
        return Err(Error::InvalidArgument("bins must be >= 1".into()));
    }
    if window.duration_us() == 0 {
        return Err(Error::ZeroDurationWindow);
    }
    Ok(())
}

/// Embed a window with the configured method.
pub fn embed(window: &EventWindow, config: &EmbeddingConfig) -> Result<EventTensor> {
    check_window(window, config)?;
    let c = config.channels();
    let h = window.geometry().height();
    let w = window.geometry().width();
    if window.len() < 4096 || h < 2 {
        return Ok(accumulate_seq(window, config, c, h, w));
    }
    Ok(accumulate_rows(window, config, c, h, w))
}

/// Always-sequential variant of [`embed`]; the parallel path is bitwise
/// identical to this one.
pub fn embed_seq(window: &EventWindow, config: &EmbeddingConfig) -> Result<EventTensor> {
    check_window(window, config)?;
    let c = config.channels();
    let h = window.geometry().height();
    let w = window.geometry().width();
    Ok(accumulate_seq(window, config, c, h, w))
}

fn accumulate_seq(
    window: &EventWindow,
    config: &EmbeddingConfig,
    c: usize,
    h: usize,
    w: usize,
) -> EventTensor {
    let mut out = Tensor3::zeros(c, h, w);
    let inv_dur = 1.0 / window.duration_us() as f64;
    let t0 = window.t_start();
    for e in window.events() {
        let t_norm = (e.t - t0) as f64 * inv_dur;
        let (pairs, n) = contributions(config.method, config.bins, t_norm, e.polarity.group());
        for &(ch, v) in &pairs[..n] {
            out.add(ch, e.y as usize, e.x as usize, v);
        }
    }
    out
}

/// Row-partitioned accumulation: events are bucketed by row (stable), rows
/// are processed independently, and per-cell addition order stays the input
/// event order, so the result matches the sequential path exactly.
fn accumulate_rows(
    window: &EventWindow,
    config: &EmbeddingConfig,
    c: usize,
    h: usize,
    w: usize,
) -> EventTensor {
    let events = window.events();
    let mut counts = vec![0usize; h + 1];
    for e in events {
        counts[e.y as usize + 1] += 1;
    }
    for y in 0..h {
        counts[y + 1] += counts[y];
    }
    let mut order = vec![0u32; events.len()];
    let mut cursor = counts.clone();
    for (i, e) in events.iter().enumerate() {
        let y = e.y as usize;
        order[cursor[y]] = i as u32;
        cursor[y] += 1;
    }

    let inv_dur = 1.0 / window.duration_us() as f64;
    let t0 = window.t_start();
    let method = config.method;
    let bins = config.bins;

    // Accumulate in (y, c, x) layout so each row is a disjoint chunk, then
    // reorder to channel planes.
    let mut rows = vec![0.0f32; h * c * w];
    parallel::for_each_chunk_mut(&mut rows, c * w, |y, chunk| {
        for &ei in &order[counts[y]..counts[y + 1]] {
            let e = &events[ei as usize];
            let t_norm = (e.t - t0) as f64 * inv_dur;
            let (pairs, n) = contributions(method, bins, t_norm, e.polarity.group());
            for &(ch, v) in &pairs[..n] {
                chunk[ch * w + e.x as usize] += v;
            }
        }
    });

    let mut out = Tensor3::zeros(c, h, w);
    parallel::for_each_chunk_mut(out.data_mut(), h * w, |ch, plane| {
        for y in 0..h {
            let src = &rows[(y * c + ch) * w..(y * c + ch + 1) * w];
            plane[y * w..(y + 1) * w].copy_from_slice(src);
        }
    });
    out
}

fn embed_with(
    window: &EventWindow,
    config: &EmbeddingConfig,
    method: EmbeddingMethod,
) -> Result<EventTensor> {
    if config.method != method {
        return Err(Error::InvalidArgument(format!(
            "embedding config method is `{}`, expected `{}`",
            config.method.name(),
            method.name()
        )));
    }
    embed(window, config)
}

/// Event spike tensor: trilinear-split normalized timestamps, `(2B, H, W)`.
pub fn embed_est(window: &EventWindow, config: &EmbeddingConfig) -> Result<EventTensor> {
    embed_with(window, config, EmbeddingMethod::Est)
}

/// Single plane of per-pixel event counts.
pub fn embed_one_channel(window: &EventWindow, config: &EmbeddingConfig) -> Result<EventTensor> {
    embed_with(window, config, EmbeddingMethod::OneChannelImage)
}

/// Per-polarity count planes.
pub fn embed_two_channel_image(
    window: &EventWindow,
    config: &EmbeddingConfig,
) -> Result<EventTensor> {
    embed_with(window, config, EmbeddingMethod::TwoChannelImage)
}

/// Per-polarity, per-bin counts with the trilinear temporal split.
pub fn embed_two_channel_voxel(
    window: &EventWindow,
    config: &EmbeddingConfig,
) -> Result<EventTensor> {
    embed_with(window, config, EmbeddingMethod::TwoChannelVoxel)
}

/// Channel-wise bilinear resampling on a corner-aligned grid. Interpolation
/// uses the lerp form `a + w*(b-a)`, which preserves constant planes
/// exactly and stays inside the input value range.
pub fn resize_bilinear<T: Real>(input: &Tensor3<T>, out_h: usize, out_w: usize) -> Result<Tensor3<T>> {
    resize_bilinear_with(input, out_h, out_w, true)
}

/// Always-sequential variant of [`resize_bilinear`]; same values.
pub fn resize_bilinear_seq<T: Real>(
    input: &Tensor3<T>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor3<T>> {
    resize_bilinear_with(input, out_h, out_w, false)
}

fn resize_bilinear_with<T: Real>(
    input: &Tensor3<T>,
    out_h: usize,
    out_w: usize,
    par: bool,
) -> Result<Tensor3<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    let (c, in_h, in_w) = input.dims();
    if in_h == 0 || in_w == 0 {
        return Err(Error::InvalidArgument("resize input is empty".into()));
    }
    if in_h == out_h && in_w == out_w {
        return Ok(input.clone());
    }

    let xs = sample_positions::<T>(in_w, out_w);
    let ys = sample_positions::<T>(in_h, out_h);

    let mut out = Tensor3::zeros(c, out_h, out_w);
    let in_plane = in_h * in_w;
    let input_data = input.data();
    parallel::for_each_chunk_mut_opt(par, out.data_mut(), out_h * out_w, |ch, plane| {
        let src = &input_data[ch * in_plane..(ch + 1) * in_plane];
        for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
            let row0 = &src[y0 * in_w..y0 * in_w + in_w];
            let row1 = &src[y1 * in_w..y1 * in_w + in_w];
            let dst = &mut plane[oy * out_w..(oy + 1) * out_w];
            for (d, &(x0, x1, wx)) in dst.iter_mut().zip(xs.iter()) {
                let a = row0[x0];
                let b = row0[x1];
                let cv = row1[x0];
                let dv = row1[x1];
                let top = a + wx * (b - a);
                let bot = cv + wx * (dv - cv);
                *d = top + wy * (bot - top);
            }
        }
    });
    Ok(out)
}

/// Corner-aligned source positions: output index i samples the input at
/// `i * (in-1) / (out-1)`.
fn sample_positions<T: Real>(in_len: usize, out_len: usize) -> Vec<(usize, usize, T)> {
    (0..out_len)
        .map(|i| {
            let pos = if out_len == 1 {
                0.0
            } else {
                i as f64 * (in_len - 1) as f64 / (out_len - 1) as f64
            };
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, T::from_f64(pos - lo as f64))
        })
        .collect()
}
