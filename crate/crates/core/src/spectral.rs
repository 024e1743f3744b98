//! Discrete Fourier transforms.
//!
//! Convention everywhere: the forward transform is unnormalized with a
//! negative exponent, `X_k = Σ_n x_n e^{-2πi nk/N}`; the inverse uses the
//! conjugate kernel and carries the `1/N`. Lengths are arbitrary.
//!
//! [`dft_naive`] is the direct O(N²) evaluation of that sum and serves as
//! the reference for everything else here, which runs on `rustfft` /
//! `realfft` plans.

use num_complex::Complex;
use realfft::RealFftPlanner;
use rustfft::FftPlanner;

use crate::tensor::resolve_axis;
use crate::{ComplexTensor, Error, Result, Scalar, Tensor};

/// Direct summation of the DFT for a rank-1 input.
///
/// Twiddle angles are reduced with `nk mod N` and evaluated in `f64`.
pub fn dft_naive<T: Scalar>(x: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    if x.rank() != 1 {
        return Err(Error::mismatch(format!(
            "dft_naive expects a rank-1 input, got shape {:?}",
            x.shape()
        )));
    }
    let n = x.len();
    let input: Vec<Complex<f64>> = x
        .data()
        .iter()
        .map(|z| Complex::new(z.re.as_f64(), z.im.as_f64()))
        .collect();
    let out = (0..n)
        .map(|k| {
            let mut acc = Complex::new(0.0, 0.0);
            for (j, v) in input.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
                acc += v * Complex::from_polar(1.0, phase);
            }
            Complex::new(T::of(acc.re), T::of(acc.im))
        })
        .collect();
    ComplexTensor::new([n], out)
}

/// Transforms every lane of `data` (laid out with `shape`) along `axis`.
pub(crate) fn fft_lanes<T: Scalar>(
    planner: &mut FftPlanner<T>,
    shape: &[usize],
    data: &mut [Complex<T>],
    axis: usize,
    inverse: bool,
) {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    if n > 1 {
        if inner == 1 {
            fft.process(data);
        } else {
            let block = n * inner;
            let mut lanes = vec![Complex::new(T::zero(), T::zero()); block];
            for chunk in data.chunks_exact_mut(block) {
                // [n, inner] -> [inner, n]
                for i in 0..n {
                    for j in 0..inner {
                        lanes[j * n + i] = chunk[i * inner + j];
                    }
                }
                fft.process(&mut lanes);
                for i in 0..n {
                    for j in 0..inner {
                        chunk[i * inner + j] = lanes[j * n + i];
                    }
                }
            }
        }
    }
    if inverse {
        let scale = T::one() / T::of(n as f64);
        data.iter_mut().for_each(|z| *z = *z * scale);
    }
}

/// FFT along one axis (negative indices count from the end). The inverse
/// includes the `1/N` factor.
pub fn fft_axis<T: Scalar>(x: &ComplexTensor<T>, axis: isize, inverse: bool) -> Result<ComplexTensor<T>> {
    let axis = resolve_axis(axis, x.rank())?;
    let mut out = x.clone();
    let shape = out.shape().to_vec();
    fft_lanes(&mut FftPlanner::new(), &shape, out.data_mut(), axis, inverse);
    Ok(out)
}

fn last_two(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(Error::mismatch(format!(
            "2D transform needs rank >= 2, got shape {shape:?}"
        )));
    }
    let r = shape.len();
    let batch = shape[..r - 2].iter().product();
    Ok((batch, shape[r - 2], shape[r - 1]))
}

/// Real-input 2D FFT over the last two axes, keeping the `⌊W/2⌋ + 1`
/// non-negative frequencies of the last axis.
pub fn rfft2<T: Scalar>(x: &Tensor<T>) -> Result<ComplexTensor<T>> {
    let (batch, h, w) = last_two(x.shape())?;
    let half = w / 2 + 1;
    let mut real_planner = RealFftPlanner::<T>::new();
    let r2c = real_planner.plan_fft_forward(w);
    let mut scratch = r2c.make_scratch_vec();
    let mut row = r2c.make_input_vec();
    let mut out = vec![Complex::new(T::zero(), T::zero()); batch * h * half];
    for (src, dst) in x.data().chunks_exact(w).zip(out.chunks_exact_mut(half)) {
        row.copy_from_slice(src);
        r2c.process_with_scratch(&mut row, dst, &mut scratch)
            .expect("buffer sizes come from the plan");
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = half;
    let axis = shape.len() - 2;
    fft_lanes(&mut FftPlanner::new(), &shape, &mut out, axis, false);
    ComplexTensor::new(shape, out)
}

/// Inverse of [`rfft2`]. `out_extents` are the spatial extents `(H, W)` of
/// the real signal; the stored last extent must equal `⌊W/2⌋ + 1`.
///
/// The imaginary parts of the DC and (for even `W`) Nyquist columns are
/// ignored, as for any real inverse transform.
pub fn irfft2<T: Scalar>(spectrum: &ComplexTensor<T>, out_extents: (usize, usize)) -> Result<Tensor<T>> {
    let (batch, h, half) = last_two(spectrum.shape())?;
    let (out_h, out_w) = out_extents;
    if out_h != h || out_w == 0 || out_w / 2 + 1 != half {
        return Err(Error::mismatch(format!(
            "half-spectrum extents ({h}, {half}) are inconsistent with output extents ({out_h}, {out_w})"
        )));
    }
    let mut data = spectrum.data().to_vec();
    let shape = spectrum.shape().to_vec();
    fft_lanes(&mut FftPlanner::new(), &shape, &mut data, shape.len() - 2, true);

    let mut real_planner = RealFftPlanner::<T>::new();
    let c2r = real_planner.plan_fft_inverse(out_w);
    let mut scratch = c2r.make_scratch_vec();
    let mut out = vec![T::zero(); batch * h * out_w];
    let scale = T::one() / T::of(out_w as f64);
    for (src, dst) in data.chunks_exact_mut(half).zip(out.chunks_exact_mut(out_w)) {
        src[0].im = T::zero();
        if out_w % 2 == 0 {
            src[half - 1].im = T::zero();
        }
        c2r.process_with_scratch(src, dst, &mut scratch)
            .expect("buffer sizes come from the plan");
        dst.iter_mut().for_each(|v| *v = *v * scale);
    }
    let mut out_shape = shape;
    *out_shape.last_mut().unwrap() = out_w;
    Tensor::new(out_shape, out)
}

/// Smallest `m ≥ n` whose prime factors are all in {2, 3, 5, 7}.
///
/// Padding beyond the minimum linear-convolution length does not change the
/// cropped result and keeps transform cost monotone in `n`.
pub fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Linear (zero-padded) convolution of two real sequences via the real FFT.
/// Output length is `a.len() + b.len() - 1`.
pub fn fft_linear_conv1d<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    assert!(!a.is_empty() && !b.is_empty(), "convolution operands must be non-empty");
    let out_len = a.len() + b.len() - 1;
    let n = next_fast_len(out_len);
    let mut planner = RealFftPlanner::<T>::new();
    let r2c = planner.plan_fft_forward(n);
    let c2r = planner.plan_fft_inverse(n);

    let spectrum_of = |src: &[T]| {
        let mut buf = r2c.make_input_vec();
        buf[..src.len()].copy_from_slice(src);
        let mut spec = r2c.make_output_vec();
        r2c.process(&mut buf, &mut spec).expect("plan-sized buffers");
        spec
    };
    let fa = spectrum_of(a);
    let fb = spectrum_of(b);
    let mut prod: Vec<Complex<T>> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    prod[0].im = T::zero();
    if n % 2 == 0 {
        let last = prod.len() - 1;
        prod[last].im = T::zero();
    }
    let mut out = c2r.make_output_vec();
    c2r.process(&mut prod, &mut out).expect("plan-sized buffers");
    let scale = T::one() / T::of(n as f64);
    out.truncate(out_len);
    out.iter_mut().for_each(|v| *v = *v * scale);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn random_complex(rng: &mut Rng, shape: &[usize]) -> ComplexTensor<f64> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| c(rng.normal(), rng.normal())).collect();
        ComplexTensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn naive_constant_and_impulse() {
        let ones = ComplexTensor::new([4], vec![c(1.0, 0.0); 4]).unwrap();
        let out = dft_naive(&ones).unwrap();
        let expect = ComplexTensor::new([4], vec![c(4.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!(out.max_abs_diff(&expect).unwrap() < 1e-14);

        let mut impulse = vec![c(0.0, 0.0); 4];
        impulse[0] = c(1.0, 0.0);
        let out = dft_naive(&ComplexTensor::new([4], impulse).unwrap()).unwrap();
        assert!(out.max_abs_diff(&ones).unwrap() < 1e-15);
    }

    #[test]
    fn naive_matches_term_by_term_sum() {
        let x = random_complex(&mut Rng::new(11), &[8]);
        let out = dft_naive(&x).unwrap();
        for k in 0..8 {
            let mut acc = c(0.0, 0.0);
            for n in 0..8 {
                let ang = -2.0 * std::f64::consts::PI * (n * k) as f64 / 8.0;
                acc += x.data()[n] * c(ang.cos(), ang.sin());
            }
            assert!((out.data()[k] - acc).norm() < 1e-13);
        }
    }

    #[test]
    fn naive_rejects_rank_two() {
        assert!(dft_naive(&ComplexTensor::<f64>::zeros([2, 2]).unwrap()).is_err());
    }

    #[test]
    fn fft_matches_naive_all_lengths_up_to_64() {
        let mut rng = Rng::new(12);
        for n in 1..=64 {
            let x = random_complex(&mut rng, &[n]);
            let fast = fft_axis(&x, 0, false).unwrap();
            let slow = dft_naive(&x).unwrap();
            let err = fast.max_abs_diff(&slow).unwrap();
            assert!(err <= 1e-10, "n={n}: {err}");
        }
    }

    #[test]
    fn inverse_restores_length_seven() {
        let x = random_complex(&mut Rng::new(13), &[7]);
        let back = fft_axis(&fft_axis(&x, -1, false).unwrap(), -1, true).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() <= 1e-12);
    }

    #[test]
    fn constant_2d_transforms_to_impulse_along_one_axis() {
        let x = ComplexTensor::new([3, 4], vec![c(2.0, 0.0); 12]).unwrap();
        let out = fft_axis(&x, -1, false).unwrap();
        for i in 0..3 {
            for k in 0..4 {
                let expect = if k == 0 { c(8.0, 0.0) } else { c(0.0, 0.0) };
                assert!((out.at(&[i, k]) - expect).norm() < 1e-14);
            }
        }
        // axis 0 of the same tensor
        let out = fft_axis(&x, 0, false).unwrap();
        for k in 0..3 {
            for j in 0..4 {
                let expect = if k == 0 { c(6.0, 0.0) } else { c(0.0, 0.0) };
                assert!((out.at(&[k, j]) - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn middle_axis_matches_naive_per_lane() {
        let x = random_complex(&mut Rng::new(14), &[2, 5, 3]);
        let out = fft_axis(&x, 1, false).unwrap();
        for a in 0..2 {
            for b in 0..3 {
                let lane = ComplexTensor::new([5], (0..5).map(|i| x.at(&[a, i, b])).collect()).unwrap();
                let expect = dft_naive(&lane).unwrap();
                for k in 0..5 {
                    assert!((out.at(&[a, k, b]) - expect.data()[k]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rfft2_half_spectrum_and_inverse() {
        let x: Tensor<f64> = Rng::new(15).randn([4, 6]).unwrap();
        let spec = rfft2(&x).unwrap();
        assert_eq!(spec.shape(), &[4, 4]);
        let full = fft_axis(&fft_axis(&x.to_complex(), -1, false).unwrap(), -2, false).unwrap();
        for i in 0..4 {
            for k in 0..4 {
                assert!((spec.at(&[i, k]) - full.at(&[i, k])).norm() <= 1e-12);
            }
        }
        let back = irfft2(&spec, (4, 6)).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() <= 1e-12);
    }

    #[test]
    fn irfft2_odd_width_and_batch() {
        let x: Tensor<f64> = Rng::new(16).randn([2, 3, 5, 7]).unwrap();
        let spec = rfft2(&x).unwrap();
        assert_eq!(spec.shape(), &[2, 3, 5, 4]);
        assert!(irfft2(&spec, (5, 7)).unwrap().max_abs_diff(&x).unwrap() <= 1e-12);
    }

    #[test]
    fn irfft2_rejects_inconsistent_extents() {
        let spec = rfft2(&Tensor::<f64>::zeros([4, 6]).unwrap()).unwrap();
        assert!(irfft2(&spec, (4, 8)).is_err());
        assert!(irfft2(&spec, (5, 6)).is_err());
        // width 7 also stores 4 columns
        assert!(irfft2(&spec, (4, 7)).is_ok());
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(next_fast_len(1), 1);
        assert_eq!(next_fast_len(11), 12);
        assert_eq!(next_fast_len(258), 270);
        assert_eq!(next_fast_len(286), 288);
        assert_eq!(next_fast_len(64), 64);
    }

    #[test]
    fn linear_conv1d_small() {
        let out = fft_linear_conv1d(&[1.0f64, 2.0, 3.0], &[1.0, 1.0]);
        let expect = [1.0, 3.0, 5.0, 3.0];
        for (a, b) in out.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn parseval_case(seed: u64, n: usize) -> (f64, f64) {
        let x = random_complex(&mut Rng::new(seed), &[n]);
        let big_x = fft_axis(&x, 0, false).unwrap();
        let time: f64 = x.data().iter().map(|z| z.norm_sqr()).sum();
        let freq: f64 = big_x.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        (time, freq)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn linearity(seed in any::<u64>(), n in 1usize..48, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = Rng::new(seed);
            let x = random_complex(&mut rng, &[n]);
            let y = random_complex(&mut rng, &[n]);
            let combo = ComplexTensor::new([n], x.data().iter().zip(y.data()).map(|(p, q)| p * a + q * b).collect()).unwrap();
            let lhs = fft_axis(&combo, 0, false).unwrap();
            let fx = fft_axis(&x, 0, false).unwrap();
            let fy = fft_axis(&y, 0, false).unwrap();
            let rhs = ComplexTensor::new([n], fx.data().iter().zip(fy.data()).map(|(p, q)| p * a + q * b).collect()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-10);
        }

        #[test]
        fn parseval(seed in any::<u64>(), n in 1usize..64) {
            let (time, freq) = parseval_case(seed, n);
            prop_assert!((time - freq).abs() <= 1e-10 * time.max(1e-300));
        }

        #[test]
        fn double_transform_reverses(seed in any::<u64>(), n in 1usize..48) {
            let x = random_complex(&mut Rng::new(seed), &[n]);
            let twice = fft_axis(&fft_axis(&x, 0, false).unwrap(), 0, false).unwrap();
            for i in 0..n {
                let expect = x.data()[(n - i) % n] * n as f64;
                prop_assert!((twice.data()[i] - expect).norm() <= 1e-10);
            }
        }
    }
}
