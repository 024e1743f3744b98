//! Seeded standard-normal sampling.
//!
//! The stream is fully specified so that ports in other languages can
//! reproduce fixtures:
//!
//! 1. State: xoshiro256++ seeded from the `u64` seed through SplitMix64
//!    (four successive SplitMix64 outputs fill the 256-bit state).
//! 2. Uniforms: `u1 = ((x >> 11) + 1) * 2^-53` in `(0, 1]` and
//!    `u2 = (y >> 11) * 2^-53` in `[0, 1)` from two consecutive outputs.
//! 3. Box–Muller: `r = sqrt(-2 ln u1)`, emit `r cos(2π u2)` then
//!    `r sin(2π u2)`. Transcendentals come from the portable `libm` routines.
//! 4. `f32` samples are the `f64` samples rounded to nearest.

use rand_core::{Rng as _, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::tensor::check_shape;
use crate::{Result, Scalar, Tensor};

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Single-owner normal sampler. Equal seeds give equal streams.
#[derive(Debug, Clone)]
pub struct Rng {
    state: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            state: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_NEG_53
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_NEG_53;
        let u2 = self.uniform();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(theta));
        r * libm::cos(theta)
    }

    /// Tensor of i.i.d. standard-normal draws in row-major order.
    pub fn randn<T: Scalar>(&mut self, shape: impl Into<Vec<usize>>) -> Result<Tensor<T>> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        let data = (0..len).map(|_| T::of(self.normal())).collect();
        Tensor::new(shape, data)
    }

    /// `randn` scaled by `scale`; used for `1/sqrt(fan_in)` initialization.
    pub fn randn_scaled<T: Scalar>(&mut self, shape: impl Into<Vec<usize>>, scale: f64) -> Result<Tensor<T>> {
        let shape = shape.into();
        let len = check_shape(&shape)?;
        let data = (0..len).map(|_| T::of(self.normal() * scale)).collect();
        Tensor::new(shape, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn same_seed_same_values() {
        let a: Tensor<f64> = Rng::new(1).randn([2, 2]).unwrap();
        let b: Tensor<f64> = Rng::new(1).randn([2, 2]).unwrap();
        assert_eq!(a, b);
        let c: Tensor<f64> = Rng::new(2).randn([2, 2]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn f32_stream_is_rounded_f64_stream() {
        let a: Tensor<f64> = Rng::new(9).randn([16]).unwrap();
        let b: Tensor<f32> = Rng::new(9).randn([16]).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x as f32, *y);
        }
    }

    #[test]
    fn moments_are_standard_normal() {
        for seed in [1, 2] {
            let t: Tensor<f64> = Rng::new(seed).randn([1024]).unwrap();
            let n = t.len() as f64;
            let mean = t.data().iter().sum::<f64>() / n;
            let var = t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 0.1, "seed {seed}: mean {mean}");
            assert!((var - 1.0).abs() < 0.15, "seed {seed}: var {var}");
        }
    }

    #[test]
    fn zero_extent_is_rejected() {
        let err = Rng::new(1).randn::<f64>([0]).unwrap_err();
        assert!(matches!(err, Error::InvalidShape { .. }));
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut rng = Rng::new(3);
        for _ in 0..1000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
