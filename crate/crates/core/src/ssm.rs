//! HiPPO-LegS state-space kernels.
//!
//! For `x'(t) = A x(t) + B u(t)`, `y(t) = C x(t)` the output is the
//! convolution of `u` with `K(t) = C e^{tA} B`. The kernel is sampled at
//! integer times (unit step) and materialized densely, then applied with a
//! zero-padded FFT convolution.
//!
//! The LegS matrix is `A_nk = √(2n+1)·√(2k+1)` below the diagonal, `n + 1`
//! on it, zero above, with `B_n = √(2n+1)` (0-based `n, k`). As written this
//! `A` has positive eigenvalues `1..N`, so `e^{tA}` grows without bound;
//! [`SignConvention::Negated`] uses `−A`, the stable form.

use crate::spectral::fft_linear_conv1d;
use crate::{Error, Result, Rng, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignConvention {
    /// `A` exactly as the formula gives it.
    AsWritten,
    /// `−A`; decaying kernels.
    #[default]
    Negated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams<T> {
    /// `[N, N]`
    pub a: Tensor<T>,
    /// `[N]`
    pub b: Tensor<T>,
    /// `[N]`; must be set before a kernel can be built.
    pub c: Option<Tensor<T>>,
    pub sign: SignConvention,
}

impl<T: Scalar> SsmParams<T> {
    pub fn state_dim(&self) -> usize {
        self.b.len()
    }

    pub fn with_c(mut self, c: Tensor<T>) -> Result<Self> {
        if c.shape() != [self.state_dim()] {
            return Err(Error::mismatch(format!(
                "C must be [{}], got {:?}",
                self.state_dim(),
                c.shape()
            )));
        }
        self.c = Some(c);
        Ok(self)
    }

    /// `C` drawn standard normal and scaled by `1/√N`.
    pub fn with_random_c(self, rng: &mut Rng) -> Result<Self> {
        let n = self.state_dim();
        let c = rng.randn_scaled([n], 1.0 / (n as f64).sqrt())?;
        self.with_c(c)
    }
}

/// Builds the LegS `A` and `B`; `C` is left unset.
pub fn hippo_legs<T: Scalar>(n: usize, sign: SignConvention) -> Result<SsmParams<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("state dimension must be at least 1".into()));
    }
    let flip = match sign {
        SignConvention::AsWritten => 1.0,
        SignConvention::Negated => -1.0,
    };
    let a = Tensor::from_fn([n, n], |i| {
        let (r, c) = (i[0] as f64, i[1] as f64);
        let v = if i[0] > i[1] {
            (2.0 * r + 1.0).sqrt() * (2.0 * c + 1.0).sqrt()
        } else if i[0] == i[1] {
            r + 1.0
        } else {
            0.0
        };
        T::of(flip * v)
    })?;
    let b = Tensor::from_fn([n], |i| T::of((2.0 * i[0] as f64 + 1.0).sqrt()))?;
    Ok(SsmParams { a, b, c: None, sign })
}

fn square_dim<T: Scalar>(m: &Tensor<T>) -> Result<usize> {
    match *m.shape() {
        [r, c] if r == c => Ok(r),
        _ => Err(Error::mismatch(format!("expected a square matrix, got {:?}", m.shape()))),
    }
}

fn matmul_square<T: Scalar>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] = out[i * n + j] + aik * b[k * n + j];
            }
        }
    }
    out
}

/// `e^M` by scaling and squaring: scale so `‖M‖₁ / 2^s ≤ 1/2`, sum the
/// Taylor series until terms stop contributing, square `s` times.
pub fn matrix_exp<T: Scalar>(m: &Tensor<T>) -> Result<Tensor<T>> {
    let n = square_dim(m)?;
    let norm = (0..n)
        .map(|j| (0..n).map(|i| m.data()[i * n + j].as_f64().abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = T::of(0.5f64.powi(squarings));
    let scaled: Vec<T> = m.data().iter().map(|&v| v * scale).collect();

    let mut result = vec![T::zero(); n * n];
    let mut term = vec![T::zero(); n * n];
    for i in 0..n {
        result[i * n + i] = T::one();
        term[i * n + i] = T::one();
    }
    for k in 1..=30 {
        term = matmul_square(&term, &scaled, n);
        let inv_k = T::one() / T::of(k as f64);
        term.iter_mut().for_each(|v| *v = *v * inv_k);
        let mut changed = false;
        for (r, &t) in result.iter_mut().zip(&term) {
            let next = *r + t;
            changed |= next != *r;
            *r = next;
        }
        if !changed {
            break;
        }
    }
    for _ in 0..squarings {
        result = matmul_square(&result, &result, n);
    }
    Tensor::new([n, n], result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsmKernel<T> {
    /// `[L]`
    pub values: Tensor<T>,
}

impl<T: Scalar> SsmKernel<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn matvec<T: Scalar>(m: &[T], x: &[T]) -> Vec<T> {
    m.chunks_exact(x.len())
        .map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum())
        .collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `K[t] = C·(e^A)^t·B` for `t = 0..L`, stepping the state with one
/// precomputed `e^A`.
pub fn ssm_kernel<T: Scalar>(params: &SsmParams<T>, len: usize) -> Result<SsmKernel<T>> {
    let c = params
        .c
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("C must be set before building a kernel".into()))?;
    if len == 0 {
        return Err(Error::InvalidArgument("kernel length must be at least 1".into()));
    }
    let step = matrix_exp(&params.a)?;
    let mut state = params.b.data().to_vec();
    let mut values = Vec::with_capacity(len);
    for t in 0..len {
        values.push(dot(c.data(), &state));
        if t + 1 < len {
            state = matvec(step.data(), &state);
        }
    }
    Ok(SsmKernel {
        values: Tensor::new([len], values)?,
    })
}

/// `‖e^{tA} B‖₂`, evaluated with a fresh exponential of `t·A`.
pub fn state_norm<T: Scalar>(params: &SsmParams<T>, t: f64) -> Result<f64> {
    let ta = params.a.map(|v| v * T::of(t));
    let x = matvec(matrix_exp(&ta)?.data(), params.b.data());
    Ok(x.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt())
}

/// Causal convolution `y[t] = Σ_{s≤t} K[s]·u[t−s]` via FFT on a buffer of at
/// least `2L − 1` samples, truncated to `L`.
pub fn causal_fft_conv<T: Scalar>(kernel: &SsmKernel<T>, u: &Tensor<T>) -> Result<Tensor<T>> {
    if u.rank() != 1 || u.len() != kernel.len() {
        return Err(Error::mismatch(format!(
            "input {:?} does not match kernel length {}",
            u.shape(),
            kernel.len()
        )));
    }
    let mut y = fft_linear_conv1d(kernel.values.data(), u.data());
    y.truncate(u.len());
    Tensor::new([u.len()], y)
}
