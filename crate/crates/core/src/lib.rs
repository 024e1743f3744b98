//! Spectral operators for vision and sequence models.
//!
//! Four FFT-based mechanisms, each a pure forward pass paired with an
//! independent brute-force reference:
//!
//! - [`fftconv`]: depthwise 2D cross-correlation through the frequency domain
//!   (conjugated kernel spectrum, linear-convolution padding, crop modes, bias).
//! - [`fit`]: the Fourier Image Transformer, where self-attention is replaced
//!   by the real part of a 2D DFT over (sequence, hidden) axes. A softmax
//!   attention mixer is kept as the baseline.
//! - [`ssm`]: HiPPO-LegS state-space kernels `K(t) = C e^{tA} B` and their
//!   causal FFT convolution with a sequence.
//! - [`gconv`]: multi-scale global convolution kernels built from bilinearly
//!   upsampled, exponentially damped copies of a short base kernel.
//!
//! [`spectral`] holds the transforms they share, [`tensor`], [`rng`] and
//! [`ftns`] the value type, seeded sampling and the on-disk tensor format.
//! [`verify`] and [`bench`] back the `spectral-ops` command-line tool.

pub mod bench;
pub mod error;
pub mod fftconv;
pub mod fit;
pub mod ftns;
pub mod gconv;
pub mod oracle;
pub mod rng;
pub mod spectral;
pub mod ssm;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{ComplexTensor, Dtype, Scalar, Tensor};
