//! Multi-scale global convolution.
//!
//! A short base kernel of `width` taps per channel is upsampled into a
//! kernel as long as the sequence: segment `i` is the base kernel damped by
//! `2^{-i}` and linearly resized to `width·2^i` taps, for
//! `i = 0..⌈log₂ L⌉`. The segments are concatenated and the first `L` taps
//! kept, so nearby positions see the finest, strongest scale and distant
//! positions coarse, damped ones.
//!
//! Unidirectional: `y[t] = Σ_{s≤t} k[s]·u[t−s] + b`.
//!
//! Bidirectional: the base kernel has `2·width` rows. Rows `0..width` build
//! the forward kernel `k_f`, rows `width..2·width` the backward kernel `k_b`,
//! both to length `L`, and
//!
//! ```text
//! y[t] = Σ_{s=0}^{t} k_f[s]·u[t−s] + Σ_{s=0}^{L−1−t} k_b[s]·u[t+s] + b
//! ```
//!
//! i.e. one linear convolution with the two-sided kernel
//! `[k_b[L−1], …, k_b[1], k_f[0] + k_b[0], k_f[1], …, k_f[L−1]]` of length
//! `2L − 1`, centred at lag 0. The FFT buffer is long enough that nothing
//! wraps.

use crate::spectral::fft_linear_conv1d;
use crate::{Error, Result, Rng, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct GConvParams<T> {
    pub width: usize,
    pub depth: usize,
    /// `[width, depth]`, or `[2·width, depth]` when bidirectional.
    pub base_kernel: Tensor<T>,
    pub bidirectional: bool,
    /// `[depth]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> GConvParams<T> {
    pub fn new(base_kernel: Tensor<T>, bidirectional: bool, bias: Tensor<T>) -> Result<Self> {
        let [rows, depth] = *base_kernel.shape() else {
            return Err(Error::mismatch(format!(
                "base kernel must be [width, depth], got {:?}",
                base_kernel.shape()
            )));
        };
        let width = if bidirectional {
            if rows % 2 != 0 {
                return Err(Error::mismatch(format!(
                    "bidirectional base kernel needs an even row count, got {rows}"
                )));
            }
            rows / 2
        } else {
            rows
        };
        if bias.shape() != [depth] {
            return Err(Error::mismatch(format!("bias must be [{depth}], got {:?}", bias.shape())));
        }
        Ok(Self {
            width,
            depth,
            base_kernel,
            bidirectional,
            bias,
        })
    }

    /// Standard-normal base kernel and zero bias.
    pub fn random(width: usize, depth: usize, bidirectional: bool, rng: &mut Rng) -> Result<Self> {
        let rows = if bidirectional { 2 * width } else { width };
        Self::new(rng.randn([rows, depth])?, bidirectional, Tensor::zeros([depth])?)
    }

    fn base_half(&self, backward: bool) -> Tensor<T> {
        let rows = self.width * self.depth;
        let start = if backward { rows } else { 0 };
        Tensor::new([self.width, self.depth], self.base_kernel.data()[start..start + rows].to_vec())
            .expect("validated shape")
    }
}

/// `⌈log₂ L⌉`, with `scale_count(1) = 0`.
pub fn scale_count(len: usize) -> usize {
    assert!(len >= 1, "sequence length must be positive");
    if len == 1 {
        0
    } else {
        (usize::BITS - (len - 1).leading_zeros()) as usize
    }
}

/// Per-channel linear interpolation along the first axis with half-pixel
/// centres: output `i` samples source coordinate `(i + ½)·n/new_len − ½`,
/// clamped to `[0, n − 1]`.
pub fn bilinear_resize_1d<T: Scalar>(segment: &Tensor<T>, new_len: usize) -> Result<Tensor<T>> {
    let [n, depth] = *segment.shape() else {
        return Err(Error::mismatch(format!("segment must be [n, depth], got {:?}", segment.shape())));
    };
    if new_len == 0 {
        return Err(Error::InvalidArgument("resize target length must be positive".into()));
    }
    let src = segment.data();
    let mut out = Vec::with_capacity(new_len * depth);
    let ratio = n as f64 / new_len as f64;
    for i in 0..new_len {
        let pos = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = pos.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        let frac = T::of(pos - i0 as f64);
        for c in 0..depth {
            let (a, b) = (src[i0 * depth + c], src[i1 * depth + c]);
            // convex combination; the clamp only absorbs rounding
            let v = (a + frac * (b - a)).max(a.min(b)).min(a.max(b));
            out.push(v);
        }
    }
    Tensor::new([new_len, depth], out)
}

/// Segments `i = 0..count` of the multi-scale expansion of `base`.
pub fn scale_segments<T: Scalar>(base: &Tensor<T>, count: usize) -> Result<Vec<Tensor<T>>> {
    let width = base.shape()[0];
    (0..count)
        .map(|i| {
            let damp = T::of(0.5f64.powi(i as i32));
            bilinear_resize_1d(&base.map(|v| v * damp), width << i)
        })
        .collect()
}

fn build_one<T: Scalar>(base: &Tensor<T>, len: usize) -> Result<Vec<T>> {
    let width = base.shape()[0];
    let depth = base.shape()[1];
    let scales = scale_count(len).max(1);
    let total = width * ((1usize << scales) - 1);
    if total < len {
        return Err(Error::Config(format!(
            "multi-scale kernel of width {width} covers only {total} of {len} positions; use a larger width"
        )));
    }
    let mut out = Vec::with_capacity(len * depth);
    for segment in scale_segments(base, scales)? {
        let need = len * depth - out.len();
        if need == 0 {
            break;
        }
        let seg = segment.data();
        out.extend_from_slice(&seg[..need.min(seg.len())]);
    }
    Ok(out)
}

/// Materializes the kernel: `[L, depth]`, or `[2L, depth]` (forward rows
/// then backward rows) when bidirectional.
pub fn build_kernel<T: Scalar>(params: &GConvParams<T>, len: usize) -> Result<Tensor<T>> {
    if len < params.width.max(1) {
        return Err(Error::InvalidArgument(format!(
            "sequence length {len} is shorter than the base width {}",
            params.width
        )));
    }
    let mut data = build_one(&params.base_half(false), len)?;
    if params.bidirectional {
        data.extend(build_one(&params.base_half(true), len)?);
        Tensor::new([2 * len, params.depth], data)
    } else {
        Tensor::new([len, params.depth], data)
    }
}

/// Applies the built kernel to `signal [L, depth]` and adds the bias.
pub fn gconv_forward<T: Scalar>(signal: &Tensor<T>, params: &GConvParams<T>) -> Result<Tensor<T>> {
    let [len, depth] = *signal.shape() else {
        return Err(Error::mismatch(format!("signal must be [L, depth], got {:?}", signal.shape())));
    };
    if depth != params.depth {
        return Err(Error::mismatch(format!(
            "signal has {depth} channels, parameters {}",
            params.depth
        )));
    }
    let kernel = build_kernel(params, len)?;
    let k = kernel.data();
    let mut out = vec![T::zero(); len * depth];
    for c in 0..depth {
        let u: Vec<T> = (0..len).map(|t| signal.data()[t * depth + c]).collect();
        let forward = (0..len).map(|s| k[s * depth + c]);
        let y = if params.bidirectional {
            let backward: Vec<T> = (0..len).map(|s| k[(len + s) * depth + c]).collect();
            let mut h: Vec<T> = backward[1..].iter().rev().copied().collect();
            h.extend(forward);
            h[len - 1] = h[len - 1] + backward[0];
            let full = fft_linear_conv1d(&h, &u);
            full[len - 1..2 * len - 1].to_vec()
        } else {
            let kf: Vec<T> = forward.collect();
            fft_linear_conv1d(&kf, &u)[..len].to_vec()
        };
        let b = params.bias.data()[c];
        for (t, v) in y.into_iter().enumerate() {
            out[t * depth + c] = v + b;
        }
    }
    Tensor::new([len, depth], out)
}
