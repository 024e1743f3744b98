//! Brute-force references.
//!
//! Every function here evaluates its defining sum term by term with no
//! transform, no padding tricks and no shared helpers from the fast paths.
//! The verification suites and tests compare the FFT implementations
//! against these.

use crate::{Error, Result, Scalar, Tensor};

/// Circular 2D convolution `out[y][x] = Σ img[(y−i) mod H][(x−j) mod W]·k[i][j]`
/// per channel, for `image [C, H, W]` and `kernel [C, Kh, Kw]`.
pub fn direct_circular_conv2d<T: Scalar>(image: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = dims3(image)?;
    let (kc, kh, kw) = dims3(kernel)?;
    if kc != c {
        return Err(Error::mismatch(format!("image has {c} channels, kernel {kc}")));
    }
    Tensor::from_fn([c, h, w], |idx| {
        let (ch, y, x) = (idx[0], idx[1], idx[2]);
        let mut acc = T::zero();
        for i in 0..kh {
            for j in 0..kw {
                let sy = (y + h * kh - i) % h;
                let sx = (x + w * kw - j) % w;
                acc = acc + image.at(&[ch, sy, sx]) * kernel.at(&[ch, i, j]);
            }
        }
        acc
    })
}

/// Linear convolution of two sequences, length `a.len() + b.len() − 1`.
pub fn direct_linear_conv1d<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let n = a.len() + b.len() - 1;
    (0..n)
        .map(|t| {
            let mut acc = T::zero();
            for (i, &ai) in a.iter().enumerate() {
                if t >= i && t - i < b.len() {
                    acc = acc + ai * b[t - i];
                }
            }
            acc
        })
        .collect()
}

/// Circular convolution of two equal-length sequences.
pub fn direct_circular_conv1d<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let n = a.len();
    assert_eq!(n, b.len());
    (0..n)
        .map(|t| {
            let mut acc = T::zero();
            for i in 0..n {
                acc = acc + a[i] * b[(t + n - i) % n];
            }
            acc
        })
        .collect()
}

/// `y[t] = Σ_{s ≤ t} k[s]·u[t − s]`, truncated to `u.len()`.
pub fn direct_causal_conv<T: Scalar>(kernel: &[T], u: &[T]) -> Vec<T> {
    (0..u.len())
        .map(|t| {
            let mut acc = T::zero();
            for s in 0..=t.min(kernel.len().saturating_sub(1)) {
                acc = acc + kernel[s] * u[t - s];
            }
            acc
        })
        .collect()
}

/// Matrix exponential by a plain truncated Taylor series `Σ_{k<terms} M^k/k!`.
/// Only accurate when `‖M‖` is modest.
pub fn taylor_expm(m: &[f64], n: usize, terms: usize) -> Vec<f64> {
    assert_eq!(m.len(), n * n);
    let mut sum = vec![0.0; n * n];
    let mut term = vec![0.0; n * n];
    for i in 0..n {
        term[i * n + i] = 1.0;
    }
    for k in 0..terms {
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
        let mut next = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += term[i * n + l] * m[l * n + j];
                }
                next[i * n + j] = acc / (k + 1) as f64;
            }
        }
        term = next;
    }
    sum
}

/// Multi-scale convolution by direct summation, given the built kernel
/// (`[L, depth]`, or `[2L, depth]` forward-then-backward when
/// `bidirectional`) and `bias [depth]`.
pub fn direct_gconv<T: Scalar>(signal: &Tensor<T>, kernel: &Tensor<T>, bidirectional: bool, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let [len, depth] = *signal.shape() else {
        return Err(Error::mismatch(format!("signal must be [L, depth], got {:?}", signal.shape())));
    };
    let rows = if bidirectional { 2 * len } else { len };
    if kernel.shape() != [rows, depth] || bias.shape() != [depth] {
        return Err(Error::mismatch("kernel or bias does not match the signal".to_string()));
    }
    Tensor::from_fn([len, depth], |i| {
        let (t, c) = (i[0], i[1]);
        let mut acc = bias.data()[c];
        for s in 0..=t {
            acc = acc + kernel.at(&[s, c]) * signal.at(&[t - s, c]);
        }
        if bidirectional {
            for s in 0..len - t {
                acc = acc + kernel.at(&[len + s, c]) * signal.at(&[t + s, c]);
            }
        }
        acc
    })
}

fn dims3<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::mismatch(format!("expected [C, H, W], got {:?}", t.shape()))),
    }
}
