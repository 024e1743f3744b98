//! Fourier Image Transformer, forward pass only.
//!
//! The image is cut into non-overlapping patches, each patch is flattened
//! (channel-major) and linearly projected, a CLS token is prepended,
//! positional embeddings are added and the sequence is layer-normalized.
//! Each block then mixes tokens and applies a feed-forward layer:
//!
//! ```text
//! mixed = mix(x)                    // Re(F_seq(F_h(x))) or self-attention
//! x     = norm1(mixed + x)
//! x     = dense(gelu(ff(x)))        // dropout is the identity at inference
//! x     = norm2(x + mixed)
//! ```
//!
//! The second residual adds the mixer output, not the `norm1` output. This
//! is the reference block's wiring and is kept as is.
//!
//! The classifier takes the final CLS row through a linear layer followed by
//! GELU. [`Mixer::Attention`] swaps the Fourier layer for multi-head softmax
//! self-attention to give the quadratic baseline.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rustfft::FftPlanner;

use crate::bench::{self, BenchRow};
use crate::ftns::{read_tensor, write_tensor};
use crate::spectral::fft_lanes;
use crate::{Error, Result, Rng, Scalar, Tensor};

/// LayerNorm epsilon used throughout the model.
pub const LAYER_NORM_EPS: f64 = 1e-12;

pub const MANIFEST_FILE: &str = "config.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mixer {
    Fourier,
    Attention,
}

impl fmt::Display for Mixer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mixer::Fourier => "fourier",
            Mixer::Attention => "attention",
        })
    }
}

impl FromStr for Mixer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(Mixer::Fourier),
            "attention" => Ok(Mixer::Attention),
            _ => Err(Error::Config(format!("unknown mixer {s:?} (expected fourier or attention)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// `(H, W)`
    pub img_size: (usize, usize),
    /// `(Ph, Pw)`
    pub patch_size: (usize, usize),
    pub in_chans: usize,
    pub embed_dim: usize,
    pub dim_feedforward: usize,
    pub depth: usize,
    pub num_classes: usize,
    /// Only used by the attention mixer.
    pub num_heads: usize,
    /// Inert: inference only.
    pub dropout_rate: f64,
    pub mixer: Mixer,
}

impl FitConfig {
    /// Small CIFAR-sized model used by the demo: 32×32×3 input, 4×4 patches.
    pub fn cifar_small(mixer: Mixer) -> Self {
        Self {
            img_size: (32, 32),
            patch_size: (4, 4),
            in_chans: 3,
            embed_dim: 64,
            dim_feedforward: 128,
            depth: 2,
            num_classes: 10,
            num_heads: 4,
            dropout_rate: 0.1,
            mixer,
        }
    }

    /// ViT-Base/16 on 224×224 ImageNet inputs.
    pub fn vit_base(mixer: Mixer) -> Self {
        Self {
            img_size: (224, 224),
            patch_size: (16, 16),
            in_chans: 3,
            embed_dim: 768,
            dim_feedforward: 3072,
            depth: 12,
            num_classes: 1000,
            num_heads: 12,
            dropout_rate: 0.1,
            mixer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.img_size;
        let (ph, pw) = self.patch_size;
        let positive = [
            ("img height", h),
            ("img width", w),
            ("patch height", ph),
            ("patch width", pw),
            ("in_chans", self.in_chans),
            ("embed_dim", self.embed_dim),
            ("dim_feedforward", self.dim_feedforward),
            ("num_classes", self.num_classes),
            ("num_heads", self.num_heads),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if h % ph != 0 || w % pw != 0 {
            return Err(Error::Config(format!(
                "patch {ph}x{pw} does not tile image {h}x{w}"
            )));
        }
        if self.mixer == Mixer::Attention && self.embed_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.img_size.0 / self.patch_size.0, self.img_size.1 / self.patch_size.1)
    }

    pub fn num_patches(&self) -> usize {
        let (gh, gw) = self.grid();
        gh * gw
    }

    pub fn patch_len(&self) -> usize {
        self.in_chans * self.patch_size.0 * self.patch_size.1
    }

    /// `key=value` manifest lines.
    pub fn to_manifest(&self) -> String {
        format!(
            "img_h={}\nimg_w={}\npatch_h={}\npatch_w={}\nin_chans={}\nembed_dim={}\n\
             dim_feedforward={}\ndepth={}\nnum_classes={}\nnum_heads={}\ndropout_rate={}\nmixer={}\n",
            self.img_size.0,
            self.img_size.1,
            self.patch_size.0,
            self.patch_size.1,
            self.in_chans,
            self.embed_dim,
            self.dim_feedforward,
            self.depth,
            self.num_classes,
            self.num_heads,
            self.dropout_rate,
            self.mixer,
        )
    }

    /// Parses a manifest. Blank lines and `#` comments are ignored; every key
    /// is required and unknown keys are rejected.
    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("manifest line {}: expected key=value", lineno + 1)))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("manifest line {}: duplicate key {k}", lineno + 1)));
            }
        }
        let mut take = |key: &str| {
            kv.remove(key)
                .ok_or_else(|| Error::Config(format!("manifest is missing {key}")))
        };
        fn num(key: &str, v: String) -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Config(format!("manifest {key}={v:?} is not a non-negative integer")))
        }
        let cfg = Self {
            img_size: (num("img_h", take("img_h")?)?, num("img_w", take("img_w")?)?),
            patch_size: (num("patch_h", take("patch_h")?)?, num("patch_w", take("patch_w")?)?),
            in_chans: num("in_chans", take("in_chans")?)?,
            embed_dim: num("embed_dim", take("embed_dim")?)?,
            dim_feedforward: num("dim_feedforward", take("dim_feedforward")?)?,
            depth: num("depth", take("depth")?)?,
            num_classes: num("num_classes", take("num_classes")?)?,
            num_heads: num("num_heads", take("num_heads")?)?,
            dropout_rate: {
                let v = take("dropout_rate")?;
                v.parse()
                    .map_err(|_| Error::Config(format!("manifest dropout_rate={v:?} is not a number")))?
            },
            mixer: take("mixer")?.parse()?,
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::Config(format!("manifest has unknown key {k}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Fully connected layer, `y = W x + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Result<Self> {
        Ok(Self {
            weight: Tensor::zeros([out_dim, in_dim])?,
            bias: Tensor::zeros([out_dim])?,
        })
    }

    /// Standard normal scaled by `1/sqrt(in_dim)`, zero bias.
    pub fn init(rng: &mut Rng, in_dim: usize, out_dim: usize) -> Result<Self> {
        Ok(Self {
            weight: rng.randn_scaled([out_dim, in_dim], 1.0 / (in_dim as f64).sqrt())?,
            bias: Tensor::zeros([out_dim])?,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Applies the layer to each row of `x: [S, in]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let [s, n] = *x.shape() else {
            return Err(Error::mismatch(format!("linear input must be [S, in], got {:?}", x.shape())));
        };
        if n != self.in_dim() {
            return Err(Error::mismatch(format!(
                "linear expects {} inputs, got {n}",
                self.in_dim()
            )));
        }
        let out = self.out_dim();
        let wt = transpose(self.weight.data(), out, n);
        let mut y = matmul(x.data(), &wt, s, n, out);
        for row in y.chunks_exact_mut(out) {
            for (v, &b) in row.iter_mut().zip(self.bias.data()) {
                *v = *v + b;
            }
        }
        Tensor::new([s, out], y)
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Scalar> LayerNormParams<T> {
    pub fn identity(d: usize) -> Result<Self> {
        Ok(Self {
            gamma: Tensor::full([d], T::one())?,
            beta: Tensor::zeros([d])?,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        layer_norm(x, &self.gamma, &self.beta, T::of(LAYER_NORM_EPS))
    }
}

/// Query, key, value and output projections, each `[d, d]` with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights<T> {
    pub query: Linear<T>,
    pub key: Linear<T>,
    pub value: Linear<T>,
    pub output: Linear<T>,
}

impl<T: Scalar> AttentionWeights<T> {
    pub fn init(rng: &mut Rng, d: usize) -> Result<Self> {
        Ok(Self {
            query: Linear::init(rng, d, d)?,
            key: Linear::init(rng, d, d)?,
            value: Linear::init(rng, d, d)?,
            output: Linear::init(rng, d, d)?,
        })
    }

    fn layers(&self) -> [(&'static str, &Linear<T>); 4] {
        [("q", &self.query), ("k", &self.key), ("v", &self.value), ("o", &self.output)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights<T> {
    pub norm1: LayerNormParams<T>,
    /// `d → dim_feedforward`
    pub ff: Linear<T>,
    /// `dim_feedforward → d`
    pub dense: Linear<T>,
    pub norm2: LayerNormParams<T>,
    /// Present exactly when the mixer is attention.
    pub attention: Option<AttentionWeights<T>>,
}

impl<T: Scalar> BlockWeights<T> {
    pub fn init(rng: &mut Rng, config: &FitConfig) -> Result<Self> {
        let d = config.embed_dim;
        let attention = match config.mixer {
            Mixer::Fourier => None,
            Mixer::Attention => Some(AttentionWeights::init(rng, d)?),
        };
        Ok(Self {
            norm1: LayerNormParams::identity(d)?,
            ff: Linear::init(rng, d, config.dim_feedforward)?,
            dense: Linear::init(rng, config.dim_feedforward, d)?,
            norm2: LayerNormParams::identity(d)?,
            attention,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitModel<T> {
    /// `[d, C·Ph·Pw]` projection of flattened patches.
    pub patch_proj: Linear<T>,
    /// LayerNorm applied at the end of the embedding stage.
    pub embed_norm: LayerNormParams<T>,
    /// `[1, d]`
    pub cls_token: Tensor<T>,
    /// `[num_patches + 1, d]`
    pub pos_embed: Tensor<T>,
    pub blocks: Vec<BlockWeights<T>>,
    /// `d → num_classes`
    pub head: Linear<T>,
}

impl<T: Scalar> FitModel<T> {
    /// Seeded initialization: linear weights standard normal times
    /// `1/sqrt(fan_in)` with zero bias, CLS token standard normal, positional
    /// embeddings zero, LayerNorms identity.
    pub fn init(config: &FitConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let patch_proj = Linear::init(rng, config.patch_len(), d)?;
        let cls_token = rng.randn([1, d])?;
        let blocks = (0..config.depth)
            .map(|_| BlockWeights::init(rng, config))
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::init(rng, d, config.num_classes)?;
        Ok(Self {
            patch_proj,
            embed_norm: LayerNormParams::identity(d)?,
            cls_token,
            pos_embed: Tensor::zeros([config.num_patches() + 1, d])?,
            blocks,
            head,
        })
    }

    /// Learnable scalars actually held by this model.
    pub fn param_count(&self) -> usize {
        let mut n = self.patch_proj.param_count()
            + 2 * self.embed_norm.gamma.len()
            + self.cls_token.len()
            + self.pos_embed.len()
            + self.head.param_count();
        for b in &self.blocks {
            n += 2 * b.norm1.gamma.len() + 2 * b.norm2.gamma.len() + b.ff.param_count() + b.dense.param_count();
            if let Some(a) = &b.attention {
                n += a.layers().iter().map(|(_, l)| l.param_count()).sum::<usize>();
            }
        }
        n
    }

    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = vec![
            ("patch_proj_weight".into(), &self.patch_proj.weight),
            ("patch_proj_bias".into(), &self.patch_proj.bias),
            ("embed_norm_gamma".into(), &self.embed_norm.gamma),
            ("embed_norm_beta".into(), &self.embed_norm.beta),
            ("cls_token".into(), &self.cls_token),
            ("pos_embed".into(), &self.pos_embed),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}_gamma1"), &b.norm1.gamma));
            out.push((format!("block{i}_beta1"), &b.norm1.beta));
            out.push((format!("block{i}_ff_weight"), &b.ff.weight));
            out.push((format!("block{i}_ff_bias"), &b.ff.bias));
            out.push((format!("block{i}_dense_weight"), &b.dense.weight));
            out.push((format!("block{i}_dense_bias"), &b.dense.bias));
            out.push((format!("block{i}_gamma2"), &b.norm2.gamma));
            out.push((format!("block{i}_beta2"), &b.norm2.beta));
            if let Some(a) = &b.attention {
                for (tag, l) in a.layers() {
                    out.push((format!("block{i}_attn_{tag}_weight"), &l.weight));
                    out.push((format!("block{i}_attn_{tag}_bias"), &l.bias));
                }
            }
        }
        out.push(("head_weight".into(), &self.head.weight));
        out.push(("head_bias".into(), &self.head.bias));
        out
    }

    /// Writes `config.txt` plus one `<name>.ftns` per tensor into `dir`.
    pub fn save(&self, config: &FitConfig, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = dir.join(MANIFEST_FILE);
        std::fs::write(&manifest, config.to_manifest()).map_err(|e| Error::io(&manifest, e))?;
        for (name, t) in self.named_tensors() {
            write_tensor(t, dir.join(format!("{name}.ftns")))?;
        }
        Ok(())
    }

    /// Loads a model directory written by [`FitModel::save`]. Tensors of
    /// either dtype are accepted and converted to `T`; every shape is
    /// checked against the manifest.
    pub fn load(dir: impl AsRef<Path>) -> Result<(FitConfig, Self)> {
        let dir = dir.as_ref();
        let manifest = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let config = FitConfig::from_manifest(&text)?;
        let d = config.embed_dim;
        let dff = config.dim_feedforward;
        let get = |name: &str, shape: &[usize]| -> Result<Tensor<T>> {
            let t = read_tensor(dir.join(format!("{name}.ftns")))?;
            if t.shape() != shape {
                return Err(Error::Config(format!(
                    "{name}: manifest implies shape {shape:?}, file has {:?}",
                    t.shape()
                )));
            }
            Ok(t.into_dtype())
        };
        let linear = |prefix: &str, in_dim: usize, out_dim: usize| -> Result<Linear<T>> {
            Ok(Linear {
                weight: get(&format!("{prefix}_weight"), &[out_dim, in_dim])?,
                bias: get(&format!("{prefix}_bias"), &[out_dim])?,
            })
        };
        let norm = |g: &str, b: &str| -> Result<LayerNormParams<T>> {
            Ok(LayerNormParams {
                gamma: get(g, &[d])?,
                beta: get(b, &[d])?,
            })
        };
        let mut blocks = Vec::with_capacity(config.depth);
        for i in 0..config.depth {
            let attention = match config.mixer {
                Mixer::Fourier => None,
                Mixer::Attention => Some(AttentionWeights {
                    query: linear(&format!("block{i}_attn_q"), d, d)?,
                    key: linear(&format!("block{i}_attn_k"), d, d)?,
                    value: linear(&format!("block{i}_attn_v"), d, d)?,
                    output: linear(&format!("block{i}_attn_o"), d, d)?,
                }),
            };
            blocks.push(BlockWeights {
                norm1: norm(&format!("block{i}_gamma1"), &format!("block{i}_beta1"))?,
                ff: linear(&format!("block{i}_ff"), d, dff)?,
                dense: linear(&format!("block{i}_dense"), dff, d)?,
                norm2: norm(&format!("block{i}_gamma2"), &format!("block{i}_beta2"))?,
                attention,
            });
        }
        let model = Self {
            patch_proj: linear("patch_proj", config.patch_len(), d)?,
            embed_norm: norm("embed_norm_gamma", "embed_norm_beta")?,
            cls_token: get("cls_token", &[1, d])?,
            pos_embed: get("pos_embed", &[config.num_patches() + 1, d])?,
            blocks,
            head: linear("head", d, config.num_classes)?,
        };
        Ok((config, model))
    }
}

fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// `[m, k] × [k, n]`, row-major, i-k-j loop order.
fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for (a_row, c_row) in a.chunks_exact(k).zip(c.chunks_exact_mut(n)) {
        for (&aik, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            for (cij, &bkj) in c_row.iter_mut().zip(b_row) {
                *cij = *cij + aik * bkj;
            }
        }
    }
    c
}

/// Exact GELU, `x·Φ(x) = ½x(1 + erf(x/√2))`.
pub fn gelu<T: Scalar>(x: T) -> T {
    let v = x.as_f64();
    T::of(0.5 * v * (1.0 + libm::erf(v / std::f64::consts::SQRT_2)))
}

/// Normalizes each row over the last axis with population variance, then
/// scales by `gamma` and shifts by `beta`.
pub fn layer_norm<T: Scalar>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    let d = *x.shape().last().expect("rank >= 1");
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::mismatch(format!(
            "layer_norm over {d} features needs gamma/beta of shape [{d}], got {:?}/{:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    if eps <= T::zero() {
        return Err(Error::InvalidArgument("layer_norm eps must be positive".into()));
    }
    let n = T::of(d as f64);
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(d) {
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        for ((v, &g), &b) in row.iter_mut().zip(gamma.data()).zip(beta.data()) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Ok(out)
}

/// Pre-norm patch tokens: projected patches with CLS prepended and
/// positional embeddings added, `[P + 1, d]`.
pub fn patch_tokens<T: Scalar>(image: &Tensor<T>, model: &FitModel<T>, config: &FitConfig) -> Result<Tensor<T>> {
    let (h, w) = config.img_size;
    let c = config.in_chans;
    if image.shape() != [c, h, w] {
        return Err(Error::mismatch(format!(
            "image must be [{c}, {h}, {w}], got {:?}",
            image.shape()
        )));
    }
    let (ph, pw) = config.patch_size;
    let (gh, gw) = config.grid();
    let plen = config.patch_len();
    let mut patches = Vec::with_capacity(gh * gw * plen);
    for gy in 0..gh {
        for gx in 0..gw {
            for ch in 0..c {
                for py in 0..ph {
                    let row = &image.data()[(ch * h + gy * ph + py) * w + gx * pw..][..pw];
                    patches.extend_from_slice(row);
                }
            }
        }
    }
    let projected = model.patch_proj.forward(&Tensor::new([gh * gw, plen], patches)?)?;
    let d = config.embed_dim;
    let mut tokens = Vec::with_capacity((gh * gw + 1) * d);
    tokens.extend_from_slice(model.cls_token.data());
    tokens.extend_from_slice(projected.data());
    for (t, &p) in tokens.iter_mut().zip(model.pos_embed.data()) {
        *t = *t + p;
    }
    Tensor::new([gh * gw + 1, d], tokens)
}

/// Patch embedding followed by the embedding LayerNorm, `[P + 1, d]`.
pub fn patch_embed<T: Scalar>(image: &Tensor<T>, model: &FitModel<T>, config: &FitConfig) -> Result<Tensor<T>> {
    model.embed_norm.forward(&patch_tokens(image, model, config)?)
}

/// Parameter-free token mixing: DFT along the hidden axis, then along the
/// sequence axis, real part of the result.
pub fn fourier_mixing<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 2 {
        return Err(Error::mismatch(format!("fourier_mixing expects [S, d], got {:?}", x.shape())));
    }
    let mut z = x.to_complex();
    let shape = z.shape().to_vec();
    let mut planner = FftPlanner::new();
    fft_lanes(&mut planner, &shape, z.data_mut(), 1, false);
    fft_lanes(&mut planner, &shape, z.data_mut(), 0, false);
    Ok(z.re())
}

/// Per-head softmax weights `softmax(Q_h K_hᵀ / sqrt(d_k))`, each `[S, S]`.
pub fn attention_weights<T: Scalar>(x: &Tensor<T>, weights: &AttentionWeights<T>, num_heads: usize) -> Result<Vec<Tensor<T>>> {
    let (q, k, _) = qkv(x, weights, num_heads)?;
    let s = x.shape()[0];
    let dk = x.shape()[1] / num_heads;
    (0..num_heads)
        .map(|h| Tensor::new([s, s], head_scores(&q, &k, s, dk, num_heads, h)))
        .collect()
}

fn qkv<T: Scalar>(x: &Tensor<T>, w: &AttentionWeights<T>, num_heads: usize) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [_, d] = *x.shape() else {
        return Err(Error::mismatch(format!("attention expects [S, d], got {:?}", x.shape())));
    };
    if num_heads == 0 || d % num_heads != 0 {
        return Err(Error::InvalidArgument(format!(
            "embed dim {d} is not divisible by {num_heads} heads"
        )));
    }
    Ok((w.query.forward(x)?, w.key.forward(x)?, w.value.forward(x)?))
}

/// Extracts columns `[h·dk, (h+1)·dk)` of a `[S, d]` buffer.
fn head_slice<T: Scalar>(m: &Tensor<T>, s: usize, dk: usize, heads: usize, h: usize) -> Vec<T> {
    let d = dk * heads;
    let mut out = Vec::with_capacity(s * dk);
    for row in 0..s {
        out.extend_from_slice(&m.data()[row * d + h * dk..][..dk]);
    }
    out
}

fn head_scores<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>, s: usize, dk: usize, heads: usize, h: usize) -> Vec<T> {
    let qh = head_slice(q, s, dk, heads, h);
    let kt = transpose(&head_slice(k, s, dk, heads, h), s, dk);
    let mut scores = matmul(&qh, &kt, s, dk, s);
    let scale = T::one() / T::of(dk as f64).sqrt();
    for row in scores.chunks_exact_mut(s) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v * scale));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v * scale - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    scores
}

/// Multi-head softmax self-attention with `Q = K = V = x`.
pub fn attention_mixing<T: Scalar>(x: &Tensor<T>, weights: &AttentionWeights<T>, num_heads: usize) -> Result<Tensor<T>> {
    let (q, k, v) = qkv(x, weights, num_heads)?;
    let [s, d] = *x.shape() else { unreachable!() };
    let dk = d / num_heads;
    let mut concat = vec![T::zero(); s * d];
    for h in 0..num_heads {
        let probs = head_scores(&q, &k, s, dk, num_heads, h);
        let vh = head_slice(&v, s, dk, num_heads, h);
        let out = matmul(&probs, &vh, s, s, dk);
        for row in 0..s {
            concat[row * d + h * dk..][..dk].copy_from_slice(&out[row * dk..][..dk]);
        }
    }
    weights.output.forward(&Tensor::new([s, d], concat)?)
}

/// `dense(gelu(ff(x)))`.
pub fn feed_forward<T: Scalar>(x: &Tensor<T>, block: &BlockWeights<T>) -> Result<Tensor<T>> {
    let hidden = block.ff.forward(x)?.map(gelu);
    block.dense.forward(&hidden)
}

fn mix<T: Scalar>(x: &Tensor<T>, block: &BlockWeights<T>, config: &FitConfig) -> Result<Tensor<T>> {
    match (config.mixer, &block.attention) {
        (Mixer::Fourier, None) => fourier_mixing(x),
        (Mixer::Attention, Some(a)) => attention_mixing(x, a, config.num_heads),
        (mixer, _) => Err(Error::Config(format!(
            "block weights do not match the {mixer} mixer"
        ))),
    }
}

/// One transformer block; see the module docs for the residual wiring.
pub fn fit_block<T: Scalar>(x: &Tensor<T>, block: &BlockWeights<T>, config: &FitConfig) -> Result<Tensor<T>> {
    let mixed = mix(x, block, config)?;
    let x = block.norm1.forward(&mixed.axpby(T::one(), x, T::one())?)?;
    let x = feed_forward(&x, block)?;
    block.norm2.forward(&x.axpby(T::one(), &mixed, T::one())?)
}

/// Runs the blocks and classifier on already-embedded tokens `[P + 1, d]`.
pub fn fit_forward_tokens<T: Scalar>(tokens: &Tensor<T>, model: &FitModel<T>, config: &FitConfig) -> Result<Tensor<T>> {
    let mut x = tokens.clone();
    for block in &model.blocks {
        x = fit_block(&x, block, config)?;
    }
    let d = config.embed_dim;
    let cls = Tensor::new([1, d], x.data()[..d].to_vec())?;
    let logits = model.head.forward(&cls)?.map(gelu);
    logits.reshape([config.num_classes])
}

/// Image `[C, H, W]` to logits `[num_classes]`.
pub fn fit_forward<T: Scalar>(image: &Tensor<T>, model: &FitModel<T>, config: &FitConfig) -> Result<Tensor<T>> {
    fit_forward_tokens(&patch_embed(image, model, config)?, model, config)
}

/// `−log softmax(logits)[label]` with max subtraction, evaluated in `f64`.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<f64> {
    if logits.rank() != 1 {
        return Err(Error::mismatch(format!("logits must be rank 1, got {:?}", logits.shape())));
    }
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let z: Vec<f64> = logits.data().iter().map(|v| v.as_f64()).collect();
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    Ok(log_sum - (z[label] - max))
}

/// Learnable-scalar count implied by a configuration.
pub fn count_params(config: &FitConfig) -> Result<u64> {
    config.validate()?;
    let d = config.embed_dim as u64;
    let dff = config.dim_feedforward as u64;
    let embeddings = d * config.patch_len() as u64 + d // projection
        + 2 * d                                        // embedding LayerNorm
        + d                                            // CLS token
        + (config.num_patches() as u64 + 1) * d; // positions
    let mut block = 2 * (2 * d) + d * dff + dff + dff * d + d;
    if config.mixer == Mixer::Attention {
        block += 4 * d * d + 4 * d;
    }
    let head = d * config.num_classes as u64 + config.num_classes as u64;
    Ok(embeddings + config.depth as u64 * block + head)
}

/// Heads used for the attention side of [`bench_mixing`].
pub const BENCH_HEADS: usize = 1;

/// Times `fourier_mixing` against `attention_mixing` on random `[S, d]`
/// inputs for each sequence length.
pub fn bench_mixing<T: Scalar>(seq_lens: &[usize], d: usize, repeats: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if d == 0 || seq_lens.contains(&0) {
        return Err(Error::Config("benchmark sizes must be positive".into()));
    }
    let mut rng = Rng::new(seed);
    let weights = AttentionWeights::<T>::init(&mut rng, d)?;
    let mut rows = Vec::new();
    for &s in seq_lens {
        let x: Tensor<T> = rng.randn([s, d])?;
        let params = vec![("S".to_string(), s), ("d".to_string(), d)];
        let (ms, out) = bench::median_ms(repeats, || fourier_mixing(&x));
        rows.push(BenchRow {
            suite: "mixing".into(),
            params: params.clone(),
            method: "fourier".into(),
            median_ms: ms,
            repeats,
            checksum: out?.data()[0].as_f64(),
        });
        let (ms, out) = bench::median_ms(repeats, || attention_mixing(&x, &weights, BENCH_HEADS));
        rows.push(BenchRow {
            suite: "mixing".into(),
            params,
            method: "attention".into(),
            median_ms: ms,
            repeats,
            checksum: out?.data()[0].as_f64(),
        });
    }
    bench::sort_rows(&mut rows);
    Ok(rows)
}
