//! Oracle-equivalence and invariant suites behind `spectral-ops verify`.
//!
//! Each suite runs a fixed, seeded set of checks and reports the largest
//! error seen against its tolerance. Exact checks use tolerance zero.

use std::fmt;

use num_complex::Complex;

use crate::fftconv::{direct_xcorr2d, fft_circular_conv2d, fft_conv2d_full, fft_xcorr2d, ConvMode, ConvOperands};
use crate::fit::{attention_weights, count_params, cross_entropy, fourier_mixing, AttentionWeights, FitConfig, Mixer};
use crate::ftns::{decode, encode, DynTensor};
use crate::gconv::{bilinear_resize_1d, build_kernel, gconv_forward, scale_segments, GConvParams};
use crate::oracle::{
    direct_causal_conv, direct_circular_conv1d, direct_circular_conv2d, direct_gconv, direct_linear_conv1d, taylor_expm,
};
use crate::spectral::{dft_naive, fft_axis, irfft2, rfft2};
use crate::ssm::{causal_fft_conv, hippo_legs, matrix_exp, ssm_kernel, SignConvention, SsmKernel};
use crate::{ComplexTensor, Error, Result, Rng, Tensor};

pub const SUITES: [&str; 6] = ["tensor", "spectral", "fftconv", "fit", "ssm", "gconv"];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, max_error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_error,
            tolerance,
        }
    }

    /// Boolean property: error 0 when it holds, 1 when it does not.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 0.0 } else { 1.0 }, 0.0)
    }

    pub fn passed(&self) -> bool {
        self.max_error.is_finite() && self.max_error <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn max_error(&self) -> f64 {
        self.checks.iter().map(|c| c.max_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        writeln!(f, "[{status}] {} (max error {:.3e})", self.suite, self.max_error())?;
        for c in &self.checks {
            let status = if c.passed() { "ok" } else { "FAIL" };
            writeln!(f, "    {status:<4} {:<48} err {:.3e}  tol {:.1e}", c.name, c.max_error, c.tolerance)?;
        }
        Ok(())
    }
}

/// Runs one named suite, or every suite when `filter` is `None`.
pub fn run(filter: Option<&str>) -> Result<Vec<SuiteReport>> {
    match filter {
        None => SUITES.iter().map(|s| run_suite(s)).collect(),
        Some(name) => Ok(vec![run_suite(name)?]),
    }
}

pub fn run_suite(name: &str) -> Result<SuiteReport> {
    let checks = match name {
        "tensor" => tensor_suite()?,
        "spectral" => spectral_suite()?,
        "fftconv" => fftconv_suite_with(&|ops, mode| fft_xcorr2d(ops, mode))?,
        "fit" => fit_suite()?,
        "ssm" => ssm_suite()?,
        "gconv" => gconv_suite()?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown suite {other:?}; expected one of {}",
                SUITES.join(", ")
            )))
        }
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        checks,
    })
}

fn tensor_suite() -> Result<Vec<Check>> {
    let mut rng = Rng::new(100);
    let mut mismatches = 0usize;
    for rank in 1..=4 {
        let shape: Vec<usize> = (0..rank).map(|i| 2 + i).collect();
        let a: Tensor<f64> = rng.randn(shape.clone())?;
        let b: Tensor<f32> = rng.randn(shape)?;
        match decode(&encode(&a))? {
            DynTensor::F64(t) if t.shape() == a.shape() => {
                mismatches += t.data().iter().zip(a.data()).filter(|(x, y)| x.to_bits() != y.to_bits()).count()
            }
            _ => mismatches += 1,
        }
        match decode(&encode(&b))? {
            DynTensor::F32(t) if t.shape() == b.shape() => {
                mismatches += t.data().iter().zip(b.data()).filter(|(x, y)| x.to_bits() != y.to_bits()).count()
            }
            _ => mismatches += 1,
        }
    }
    let s1: Tensor<f64> = Rng::new(7).randn([64])?;
    let s2: Tensor<f64> = Rng::new(7).randn([64])?;
    Ok(vec![
        Check::new("ftns round trip bit-exact (ranks 1-4, f32/f64)", mismatches as f64, 0.0),
        Check::holds("randn reproducible for equal seeds", s1 == s2),
    ])
}

fn random_complex(rng: &mut Rng, n: usize) -> Result<ComplexTensor<f64>> {
    ComplexTensor::new([n], (0..n).map(|_| Complex::new(rng.normal(), rng.normal())).collect())
}

fn spectral_suite() -> Result<Vec<Check>> {
    let mut rng = Rng::new(200);
    let mut naive_err: f64 = 0.0;
    let mut parseval_err: f64 = 0.0;
    let mut reversal_err: f64 = 0.0;
    for n in 1..=64 {
        let x = random_complex(&mut rng, n)?;
        let fx = fft_axis(&x, 0, false)?;
        naive_err = naive_err.max(fx.max_abs_diff(&dft_naive(&x)?)?);
        let time: f64 = x.data().iter().map(|z| z.norm_sqr()).sum();
        let freq: f64 = fx.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        parseval_err = parseval_err.max((time - freq).abs() / time);
        let ffx = fft_axis(&fx, 0, false)?;
        for i in 0..n {
            reversal_err = reversal_err.max((ffx.data()[i] - x.data()[(n - i) % n] * n as f64).norm());
        }
    }
    let x: Tensor<f64> = rng.randn([3, 9, 10])?;
    let rt = irfft2(&rfft2(&x)?, (9, 10))?.max_abs_diff(&x)?;
    Ok(vec![
        Check::new("fft_axis == dft_naive, lengths 1..=64", naive_err, 1e-10),
        Check::new("parseval (relative)", parseval_err, 1e-10),
        Check::new("double transform reverses", reversal_err, 1e-10),
        Check::new("irfft2(rfft2(x)) == x", rt, 1e-12),
    ])
}

/// The fftconv suite against an arbitrary correlation implementation.
/// `verify` passes [`fft_xcorr2d`]; tests pass deliberately broken ones.
pub fn fftconv_suite_with(xcorr: &dyn Fn(&ConvOperands<'_, f64>, ConvMode) -> Result<Tensor<f64>>) -> Result<Vec<Check>> {
    let mut rng = Rng::new(300);
    let mut grid_err: f64 = 0.0;
    for c in [1, 3] {
        for n in 4..=32 {
            let image: Tensor<f64> = rng.randn([c, n, n])?;
            for m in [1, 3, 5, 7, 9] {
                let kernel: Tensor<f64> = rng.randn([c, m, m])?;
                let ops = ConvOperands::new(&image, &kernel);
                for mode in ConvMode::ALL {
                    if mode == ConvMode::Valid && m > n {
                        continue;
                    }
                    grid_err = grid_err.max(xcorr(&ops, mode)?.max_abs_diff(&direct_xcorr2d(&ops, mode)?)?);
                }
            }
        }
    }

    let mut f32_err: f64 = 0.0;
    for n in [4, 11, 16, 32] {
        let image: Tensor<f32> = rng.randn([3, n, n])?;
        let kernel: Tensor<f32> = rng.randn([3, 3, 3])?;
        let ops = ConvOperands::new(&image, &kernel);
        for mode in ConvMode::ALL {
            f32_err = f32_err.max(fft_xcorr2d(&ops, mode)?.max_abs_diff(&direct_xcorr2d(&ops, mode)?)?);
        }
    }

    let mut theorem_err: f64 = 0.0;
    for _ in 0..100 {
        let f: Tensor<f64> = rng.randn([32])?;
        let g: Tensor<f64> = rng.randn([32])?;
        let (lhs, rhs) = convolution_theorem_sides(f.data(), g.data())?;
        theorem_err = theorem_err.max(lhs.max_abs_diff(&rhs)?);
    }

    let image: Tensor<f64> = rng.randn([2, 10, 12])?;
    let kernel: Tensor<f64> = rng.randn([2, 5, 3])?;
    let flipped = Tensor::from_fn([2, 5, 3], |i| kernel.at(&[i[0], 4 - i[1], 2 - i[2]]))?;
    let duality = xcorr(&ConvOperands::new(&image, &kernel), ConvMode::Full)?.max_abs_diff(&fft_conv2d_full(&image, &flipped)?)?;

    let bias = Tensor::new([2], vec![0.5, -1.25])?;
    let plain = xcorr(&ConvOperands::new(&image, &kernel), ConvMode::Same)?;
    let biased = xcorr(&ConvOperands::new(&image, &kernel).with_bias(&bias), ConvMode::Same)?;
    let plane = plain.len() / 2;
    let bias_err = plain
        .data()
        .iter()
        .zip(biased.data())
        .enumerate()
        .map(|(i, (p, b))| (b - p - bias.data()[i / plane]).abs())
        .fold(0.0, f64::max);

    let wrap = wraparound_band(&mut rng, 16, 5)?;

    Ok(vec![
        Check::new("fft == direct, C{1,3} n4..32 m{1..9} all modes (f64)", grid_err, 1e-10),
        Check::new("fft == direct (f32)", f32_err, 1e-3),
        Check::new("convolution theorem, 100 length-32 pairs", theorem_err, 1e-10),
        Check::new("correlation == convolution with flipped kernel", duality, 1e-10),
        Check::new("bias adds bias[c] per channel", bias_err, 1e-12),
        Check::new("circular == linear outside wrap band (exact)", wrap.outside_exact, 0.0),
        Check::holds("circular != linear inside wrap band", wrap.inside_differs),
        Check::new("fft circular == direct circular", wrap.fft_vs_direct, 1e-10),
        Check::new("in-band difference == wrapped linear tail", wrap.tail_err, 1e-10),
    ])
}

/// `(F(f * g), F(f)·F(g))` with both signals zero-padded to the linear
/// convolution length.
pub fn convolution_theorem_sides(f: &[f64], g: &[f64]) -> Result<(ComplexTensor<f64>, ComplexTensor<f64>)> {
    let len = f.len() + g.len() - 1;
    let pad = |x: &[f64]| {
        let mut v = vec![Complex::new(0.0, 0.0); len];
        for (d, &s) in v.iter_mut().zip(x) {
            d.re = s;
        }
        ComplexTensor::new([len], v)
    };
    let conv = direct_linear_conv1d(f, g);
    let lhs = fft_axis(&pad(&conv)?, 0, false)?;
    let ff = fft_axis(&pad(f)?, 0, false)?;
    let fg = fft_axis(&pad(g)?, 0, false)?;
    let rhs = ComplexTensor::new([len], ff.data().iter().zip(fg.data()).map(|(a, b)| a * b).collect())?;
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy)]
pub struct WrapReport {
    /// Largest |circular − linear| outside the band, from direct sums.
    pub outside_exact: f64,
    /// Some in-band position differs.
    pub inside_differs: bool,
    pub fft_vs_direct: f64,
    /// In-band `circular − linear` against the linear tail that wrapped.
    pub tail_err: f64,
}

/// Unpadded circular vs linear convolution of a length-`n` signal (and an
/// `n×n` image) with an `m`-tap kernel. The first `m − 1` outputs along each
/// axis form the wrap band.
pub fn wraparound_band(rng: &mut Rng, n: usize, m: usize) -> Result<WrapReport> {
    let band = m - 1;
    let mut outside: f64 = 0.0;
    let mut inside_differs = false;
    let mut tail_err: f64 = 0.0;

    // 1D
    let x: Tensor<f64> = rng.randn([n])?;
    let k: Tensor<f64> = rng.randn([m])?;
    let circ: Vec<f64> = (0..n)
        .map(|t| (0..m).fold(0.0, |acc, i| acc + k.data()[i] * x.data()[(t + n - i) % n]))
        .collect();
    let lin: Vec<f64> = (0..n)
        .map(|t| (0..m).filter(|&i| i <= t).fold(0.0, |acc, i| acc + k.data()[i] * x.data()[t - i]))
        .collect();
    let full = direct_linear_conv1d(k.data(), x.data());
    for t in 0..n {
        let d = circ[t] - lin[t];
        if t < band {
            inside_differs |= d != 0.0;
            tail_err = tail_err.max((d - full[t + n]).abs());
        } else {
            outside = outside.max(d.abs());
        }
    }
    let mut k_pad = vec![0.0; n];
    k_pad[..m].copy_from_slice(k.data());
    let reference = direct_circular_conv1d(&k_pad, x.data());
    let fft_1d = fft_circular_conv2d(&x.clone().reshape([1, 1, n])?, &k.clone().reshape([1, 1, m])?)?;
    let mut fft_vs_direct = fft_1d
        .data()
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    // 2D
    let image: Tensor<f64> = rng.randn([1, n, n])?;
    let kernel: Tensor<f64> = rng.randn([1, m, m])?;
    let circ2 = direct_circular_conv2d(&image, &kernel)?;
    let lin2 = Tensor::from_fn([1, n, n], |idx| {
        let (y, x) = (idx[1], idx[2]);
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i <= y && j <= x {
                    acc += image.at(&[0, y - i, x - j]) * kernel.at(&[0, i, j]);
                }
            }
        }
        acc
    })?;
    for y in 0..n {
        for x in 0..n {
            let d = circ2.at(&[0, y, x]) - lin2.at(&[0, y, x]);
            if y < band || x < band {
                inside_differs |= d != 0.0;
            } else {
                outside = outside.max(d.abs());
            }
        }
    }
    fft_vs_direct = fft_vs_direct.max(fft_circular_conv2d(&image, &kernel)?.max_abs_diff(&circ2)?);

    Ok(WrapReport {
        outside_exact: outside,
        inside_differs,
        fft_vs_direct,
        tail_err,
    })
}

fn naive_fourier_mix(x: &Tensor<f64>) -> Result<Tensor<f64>> {
    let [s, d] = *x.shape() else { unreachable!() };
    let mut z: Vec<Complex<f64>> = x.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
    for r in 0..s {
        let lane = ComplexTensor::new([d], z[r * d..(r + 1) * d].to_vec())?;
        z[r * d..(r + 1) * d].copy_from_slice(dft_naive(&lane)?.data());
    }
    for c in 0..d {
        let lane = ComplexTensor::new([s], (0..s).map(|r| z[r * d + c]).collect())?;
        for (r, v) in dft_naive(&lane)?.data().iter().enumerate() {
            z[r * d + c] = *v;
        }
    }
    Tensor::new([s, d], z.iter().map(|v| v.re).collect())
}

fn fit_suite() -> Result<Vec<Check>> {
    let mut rng = Rng::new(400);
    let x: Tensor<f64> = rng.randn([16, 8])?;
    let mix = fourier_mixing(&x)?;
    let mix_err = mix.max_abs_diff(&naive_fourier_mix(&x)?)?;
    let seq_first = fft_axis(&fft_axis(&x.to_complex(), -2, false)?, -1, false)?.re();
    let commute = mix.max_abs_diff(&seq_first)?;

    let vit = count_params(&FitConfig::vit_base(Mixer::Attention))? as f64;
    let fourier = count_params(&FitConfig::vit_base(Mixer::Fourier))? as f64;
    let d = 768.0;
    let diff_err = ((vit - fourier) - 12.0 * (4.0 * d * d + 4.0 * d)).abs();

    let ce = (cross_entropy(&Tensor::<f64>::zeros([10])?, 0)? - 10f64.ln()).abs();

    let w = AttentionWeights::<f64>::init(&mut rng, 8)?;
    let probs = attention_weights(&rng.randn([12, 8])?, &w, 2)?;
    let mut row_err: f64 = 0.0;
    let mut negative = false;
    for p in &probs {
        for row in p.data().chunks(12) {
            negative |= row.iter().any(|&v| v < 0.0);
            row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    Ok(vec![
        Check::new("fourier_mixing == Re(naive DFT both axes) [16,8]", mix_err, 1e-10),
        Check::new("fourier_mixing axis order commutes", commute, 1e-10),
        Check::new("ViT-Base params within 2% of 86M (relative)", (vit - 86e6).abs() / 86e6, 0.02),
        Check::new("attention - fourier params == depth(4d^2+4d)", diff_err, 0.0),
        Check::new("cross entropy of uniform logits == ln 10", ce, 1e-12),
        Check::new("attention rows sum to 1", row_err, 1e-12),
        Check::holds("attention weights non-negative", !negative),
    ])
}

fn ssm_suite() -> Result<Vec<Check>> {
    let mut rng = Rng::new(500);
    let p2 = hippo_legs::<f64>(2, SignConvention::AsWritten)?;
    let s3 = 3f64.sqrt();
    let exact = p2.a.data() == [1.0, 0.0, s3, 2.0] && p2.b.data() == [1.0, s3];

    let m: Tensor<f64> = rng.randn([4, 4])?;
    let fro = m.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    let m = m.map(|v| v / fro);
    let taylor = taylor_expm(m.data(), 4, 60);
    let expm_err = matrix_exp(&m)?
        .data()
        .iter()
        .zip(&taylor)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let p = hippo_legs::<f64>(4, SignConvention::Negated)?.with_random_c(&mut rng)?;
    let kernel = ssm_kernel(&p, 32)?;
    let c = p.c.as_ref().expect("set above");
    let mut kernel_err: f64 = 0.0;
    for t in 0..32 {
        let e = matrix_exp(&p.a.map(|v| v * t as f64))?;
        let x: Vec<f64> = e.data().chunks(4).map(|r| r.iter().zip(p.b.data()).map(|(a, b)| a * b).sum()).collect();
        let expect: f64 = c.data().iter().zip(&x).map(|(a, b)| a * b).sum();
        kernel_err = kernel_err.max((kernel.values.data()[t] - expect).abs());
    }

    let k = SsmKernel { values: rng.randn([33])? };
    let u: Tensor<f64> = rng.randn([33])?;
    let y = causal_fft_conv(&k, &u)?;
    let conv_err = y
        .data()
        .iter()
        .zip(direct_causal_conv(k.values.data(), u.data()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    Ok(vec![
        Check::holds("hippo_legs(N=2) exact", exact),
        Check::new("matrix_exp == 60-term Taylor", expm_err, 1e-10),
        Check::new("ssm_kernel == per-t exponential (N=4, L=32)", kernel_err, 1e-8),
        Check::new("causal_fft_conv == direct (L=33)", conv_err, 1e-10),
    ])
}

fn gconv_suite() -> Result<Vec<Check>> {
    let mut rng = Rng::new(600);
    let resize = bilinear_resize_1d(&Tensor::new([2, 1], vec![0.0, 1.0])?, 4)?;
    let resize_ok = resize.data() == [0.0, 0.25, 0.75, 1.0];

    let mut decay_violation: f64 = 0.0;
    let mut forward_err: f64 = 0.0;
    for len in [8, 16, 33, 64] {
        for width in [2, 4] {
            for depth in [1, 3] {
                for bidirectional in [false, true] {
                    let params = GConvParams::<f64>::random(width, depth, bidirectional, &mut rng)?;
                    let u: Tensor<f64> = rng.randn([len, depth])?;
                    let kernel = build_kernel(&params, len)?;
                    let slow = direct_gconv(&u, &kernel, bidirectional, &params.bias)?;
                    forward_err = forward_err.max(gconv_forward(&u, &params)?.max_abs_diff(&slow)?);
                }
                let base: Tensor<f64> = rng.randn([width, depth])?;
                let base_max = base.max_abs();
                for (i, seg) in scale_segments(&base, crate::gconv::scale_count(len))?.iter().enumerate() {
                    let bound = 0.5f64.powi(i as i32) * base_max;
                    decay_violation = decay_violation.max(seg.max_abs() - bound);
                }
            }
        }
    }
    Ok(vec![
        Check::holds("bilinear [0,1] -> [0,0.25,0.75,1] exactly", resize_ok),
        Check::new("segment i bounded by 2^-i max|base| (excess)", decay_violation.max(0.0), 0.0),
        Check::new("gconv_forward == direct, L{8,16,33,64}", forward_err, 1e-10),
    ])
}
