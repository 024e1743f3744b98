//! Depthwise 2D cross-correlation through the frequency domain.
//!
//! CNN layers compute cross-correlation, `(f ⋆ g)(y) = Σ_i f(y + i)·g(i)`,
//! not convolution. Multiplying spectra gives *circular* convolution, so the
//! fast path here
//!
//! 1. end-pads image and kernel with zeros to a common size of at least
//!    `(H + Kh − 1, W + Kw − 1)` so nothing wraps,
//! 2. takes `rfft2` of both,
//! 3. negates the imaginary part of the kernel spectrum (conjugation turns
//!    the product into a correlation),
//! 4. multiplies, inverts with `irfft2`,
//! 5. rotates and crops the periodic result per [`ConvMode`], and adds the
//!    per-channel bias.
//!
//! [`direct_xcorr2d`] evaluates the same quantity literally and is the
//! reference for the fast path.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;

use crate::bench::{self, BenchRow};
use crate::spectral::{irfft2, next_fast_len, rfft2};
use crate::{ComplexTensor, Error, Result, Rng, Scalar, Tensor};

/// Output region of a correlation.
///
/// Along an axis with image extent `n` and kernel extent `m`:
/// `Full` → `n + m − 1`, `Same` → `n` (kernel centred at `⌊(m−1)/2⌋`),
/// `Valid` → `n − m + 1`, `Circular` → `n` with periodic wrap-around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvMode {
    Full,
    Same,
    Valid,
    Circular,
}

impl ConvMode {
    pub const ALL: [ConvMode; 4] = [ConvMode::Full, ConvMode::Same, ConvMode::Valid, ConvMode::Circular];

    /// Output extent, or `None` for a valid-mode kernel larger than the image.
    pub fn output_extent(self, n: usize, m: usize) -> Option<usize> {
        match self {
            ConvMode::Full => Some(n + m - 1),
            ConvMode::Same | ConvMode::Circular => Some(n),
            ConvMode::Valid => (m <= n).then(|| n - m + 1),
        }
    }

    /// Index of output 0 inside the full correlation, per axis.
    fn origin(self, m: usize) -> usize {
        match self {
            ConvMode::Full => m - 1,
            ConvMode::Same => (m - 1) / 2,
            ConvMode::Valid | ConvMode::Circular => 0,
        }
    }
}

impl fmt::Display for ConvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvMode::Full => "full",
            ConvMode::Same => "same",
            ConvMode::Valid => "valid",
            ConvMode::Circular => "circular",
        })
    }
}

impl FromStr for ConvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConvMode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown convolution mode {s:?}")))
    }
}

/// Image `[C, H, W]`, one kernel slice per channel `[C, Kh, Kw]`, optional
/// bias `[C]`.
#[derive(Debug, Clone, Copy)]
pub struct ConvOperands<'a, T> {
    pub image: &'a Tensor<T>,
    pub kernel: &'a Tensor<T>,
    pub bias: Option<&'a Tensor<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dims {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    out_h: usize,
    out_w: usize,
}

impl<'a, T: Scalar> ConvOperands<'a, T> {
    pub fn new(image: &'a Tensor<T>, kernel: &'a Tensor<T>) -> Self {
        Self {
            image,
            kernel,
            bias: None,
        }
    }

    pub fn with_bias(mut self, bias: &'a Tensor<T>) -> Self {
        self.bias = Some(bias);
        self
    }

    fn dims(&self, mode: ConvMode) -> Result<Dims> {
        let [c, h, w] = *self.image.shape() else {
            return Err(Error::mismatch(format!("image must be [C, H, W], got {:?}", self.image.shape())));
        };
        let [kc, kh, kw] = *self.kernel.shape() else {
            return Err(Error::mismatch(format!("kernel must be [C, Kh, Kw], got {:?}", self.kernel.shape())));
        };
        if kc != c {
            return Err(Error::mismatch(format!("image has {c} channels but kernel has {kc}")));
        }
        if let Some(b) = self.bias {
            if b.shape() != [c] {
                return Err(Error::mismatch(format!("bias must be [{c}], got {:?}", b.shape())));
            }
        }
        let (Some(out_h), Some(out_w)) = (mode.output_extent(h, kh), mode.output_extent(w, kw)) else {
            return Err(Error::mismatch(format!(
                "kernel {kh}x{kw} is larger than image {h}x{w} in valid mode"
            )));
        };
        Ok(Dims {
            c,
            h,
            w,
            kh,
            kw,
            out_h,
            out_w,
        })
    }

    fn add_bias(&self, out: &mut [T], plane: usize) {
        if let Some(b) = self.bias {
            for (chunk, &bc) in out.chunks_exact_mut(plane).zip(b.data()) {
                chunk.iter_mut().for_each(|v| *v = *v + bc);
            }
        }
    }
}

/// Literal spatial cross-correlation, O(H·W·Kh·Kw) per channel, zero
/// outside the image (or periodic for [`ConvMode::Circular`]).
pub fn direct_xcorr2d<T: Scalar>(ops: &ConvOperands<'_, T>, mode: ConvMode) -> Result<Tensor<T>> {
    let d = ops.dims(mode)?;
    let img = ops.image.data();
    let ker = ops.kernel.data();
    let plane = d.out_h * d.out_w;
    let mut out = vec![T::zero(); d.c * plane];

    for ch in 0..d.c {
        let img = &img[ch * d.h * d.w..(ch + 1) * d.h * d.w];
        let ker = &ker[ch * d.kh * d.kw..(ch + 1) * d.kh * d.kw];
        let out = &mut out[ch * plane..(ch + 1) * plane];
        if mode == ConvMode::Circular {
            for y in 0..d.out_h {
                for x in 0..d.out_w {
                    let mut acc = T::zero();
                    for i in 0..d.kh {
                        let row = &img[((y + i) % d.h) * d.w..][..d.w];
                        for j in 0..d.kw {
                            acc = acc + row[(x + j) % d.w] * ker[i * d.kw + j];
                        }
                    }
                    out[y * d.out_w + x] = acc;
                }
            }
            continue;
        }
        // out[y][x] = Σ img[y + i − oy][x + j − ox]·k[i][j]; each (i, j)
        // contributes a shifted, clipped row segment.
        let (oy, ox) = (mode.origin(d.kh) as isize, mode.origin(d.kw) as isize);
        for y in 0..d.out_h {
            let out_row = &mut out[y * d.out_w..(y + 1) * d.out_w];
            for i in 0..d.kh {
                let sy = y as isize + i as isize - oy;
                if sy < 0 || sy >= d.h as isize {
                    continue;
                }
                let img_row = &img[sy as usize * d.w..(sy as usize + 1) * d.w];
                for j in 0..d.kw {
                    let kv = ker[i * d.kw + j];
                    let shift = j as isize - ox;
                    // x + shift must lie in [0, w)
                    let x0 = (-shift).max(0) as usize;
                    let x1 = ((d.w as isize - shift).min(d.out_w as isize)).max(0) as usize;
                    if x0 >= x1 {
                        continue;
                    }
                    let src = &img_row[(x0 as isize + shift) as usize..(x1 as isize + shift) as usize];
                    for (o, &s) in out_row[x0..x1].iter_mut().zip(src) {
                        *o = *o + s * kv;
                    }
                }
            }
        }
    }
    ops.add_bias(&mut out, plane);
    Tensor::new([d.c, d.out_h, d.out_w], out)
}

/// Copies `[C, h, w]` into the top-left corner of a zero `[C, p, q]` tensor,
/// folding indices modulo `(p, q)` when the source is larger.
fn pad_end<T: Scalar>(src: &Tensor<T>, p: usize, q: usize) -> Tensor<T> {
    let [c, h, w] = *src.shape() else { unreachable!("validated rank 3") };
    let mut out = vec![T::zero(); c * p * q];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let dst = ch * p * q + (y % p) * q + x % q;
                out[dst] = out[dst] + src.data()[(ch * h + y) * w + x];
            }
        }
    }
    Tensor::new([c, p, q], out).expect("positive extents")
}

/// FFT cross-correlation; equals [`direct_xcorr2d`] up to rounding.
pub fn fft_xcorr2d<T: Scalar>(ops: &ConvOperands<'_, T>, mode: ConvMode) -> Result<Tensor<T>> {
    fft_xcorr2d_with_hook(ops, mode, |_| {})
}

/// [`fft_xcorr2d`] with access to the product spectrum `[C, P, ⌊Q/2⌋+1]`
/// just before the inverse transform. Used to inject faults when checking
/// that the verification suites detect them.
pub fn fft_xcorr2d_with_hook<T: Scalar>(
    ops: &ConvOperands<'_, T>,
    mode: ConvMode,
    hook: impl FnOnce(&mut ComplexTensor<T>),
) -> Result<Tensor<T>> {
    let d = ops.dims(mode)?;
    let (p, q) = match mode {
        ConvMode::Circular => (d.h, d.w),
        _ => (next_fast_len(d.h + d.kh - 1), next_fast_len(d.w + d.kw - 1)),
    };
    let image_ft = rfft2(&pad_end(ops.image, p, q))?;
    let mut kernel_ft = rfft2(&pad_end(ops.kernel, p, q))?;
    for z in kernel_ft.data_mut() {
        z.im = -z.im;
    }
    let mut output_ft = multiply(&image_ft, &kernel_ft);
    hook(&mut output_ft);
    let corr = irfft2(&output_ft, (p, q))?;

    // corr[u][v] holds the correlation at spatial offset (u, v) mod (p, q).
    let (oy, ox) = (mode.origin(d.kh), mode.origin(d.kw));
    let plane = d.out_h * d.out_w;
    let mut out = vec![T::zero(); d.c * plane];
    let corr = corr.data();
    for ch in 0..d.c {
        for y in 0..d.out_h {
            let sy = (y + p - oy % p) % p;
            let src = &corr[(ch * p + sy) * q..][..q];
            let dst = &mut out[ch * plane + y * d.out_w..][..d.out_w];
            for (x, o) in dst.iter_mut().enumerate() {
                *o = src[(x + q - ox % q) % q];
            }
        }
    }
    ops.add_bias(&mut out, plane);
    Tensor::new([d.c, d.out_h, d.out_w], out)
}

fn multiply<T: Scalar>(a: &ComplexTensor<T>, b: &ComplexTensor<T>) -> ComplexTensor<T> {
    let data: Vec<Complex<T>> = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    ComplexTensor::new(a.shape().to_vec(), data).expect("same shape")
}

/// Unpadded spectrum product: true circular convolution of `image [C, H, W]`
/// with `kernel [C, Kh, Kw]` zero-padded to `H×W` (folded when larger).
/// Exhibits wrap-around by construction.
pub fn fft_circular_conv2d<T: Scalar>(image: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    let d = ConvOperands::new(image, kernel).dims(ConvMode::Circular)?;
    let image_ft = rfft2(image)?;
    let kernel_ft = rfft2(&pad_end(kernel, d.h, d.w))?;
    irfft2(&multiply(&image_ft, &kernel_ft), (d.h, d.w))
}

/// True linear convolution (kernel flipped), `[C, H+Kh−1, W+Kw−1]`.
pub fn fft_conv2d_full<T: Scalar>(image: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    let d = ConvOperands::new(image, kernel).dims(ConvMode::Full)?;
    let (p, q) = (next_fast_len(d.out_h), next_fast_len(d.out_w));
    let image_ft = rfft2(&pad_end(image, p, q))?;
    let kernel_ft = rfft2(&pad_end(kernel, p, q))?;
    let conv = irfft2(&multiply(&image_ft, &kernel_ft), (p, q))?;
    Tensor::from_fn([d.c, d.out_h, d.out_w], |i| conv.at(&[i[0], i[1], i[2]]))
}

/// Channels used by [`bench_conv`].
pub const BENCH_CHANNELS: usize = 1;

/// Times direct and FFT correlation (mode `same`) for every `(n, m)` pair.
///
/// Both methods are checked against each other on an 8×8 image with a 3×3
/// kernel before any timing.
pub fn bench_conv<T: Scalar>(image_sizes: &[usize], kernel_sizes: &[usize], repeats: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if image_sizes.iter().chain(kernel_sizes).any(|&s| s == 0) {
        return Err(Error::Config("benchmark sizes must be positive".into()));
    }
    correctness_gate::<T>(seed)?;
    let mut rng = Rng::new(seed);
    let mut rows = Vec::new();
    for &n in image_sizes {
        let image: Tensor<T> = rng.randn([BENCH_CHANNELS, n, n])?;
        for &m in kernel_sizes {
            let kernel: Tensor<T> = rng.randn([BENCH_CHANNELS, m, m])?;
            let ops = ConvOperands::new(&image, &kernel);
            let params = vec![("n".to_string(), n), ("m".to_string(), m)];
            for (method, run) in [
                ("direct", direct_xcorr2d::<T> as fn(&ConvOperands<'_, T>, ConvMode) -> Result<Tensor<T>>),
                ("fft", fft_xcorr2d::<T>),
            ] {
                let (ms, out) = bench::median_ms(repeats, || run(&ops, ConvMode::Same));
                rows.push(BenchRow {
                    suite: "conv".into(),
                    params: params.clone(),
                    method: method.into(),
                    median_ms: ms,
                    repeats,
                    checksum: out?.data()[0].as_f64(),
                });
            }
        }
    }
    bench::sort_rows(&mut rows);
    Ok(rows)
}

fn correctness_gate<T: Scalar>(seed: u64) -> Result<()> {
    let mut rng = Rng::new(seed ^ 0x5eed);
    let image: Tensor<T> = rng.randn([BENCH_CHANNELS, 8, 8])?;
    let kernel: Tensor<T> = rng.randn([BENCH_CHANNELS, 3, 3])?;
    let ops = ConvOperands::new(&image, &kernel);
    let err = direct_xcorr2d(&ops, ConvMode::Same)?.max_abs_diff(&fft_xcorr2d(&ops, ConvMode::Same)?)?;
    let tol = match T::DTYPE {
        crate::Dtype::F32 => 1e-3,
        crate::Dtype::F64 => 1e-10,
    };
    if err > tol {
        return Err(Error::Config(format!(
            "direct and FFT correlation disagree by {err:e} before timing"
        )));
    }
    Ok(())
}
