//! Two-layer convolutional patch encoders and joint-latent assembly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Graph, ParamStore, Scalar, Tensor, Var};

pub const SD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub channels: usize,
    pub patch: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel: usize,
    pub latent: usize,
}

impl EncoderSpec {
    /// conv 16@3x3 → ReLU → conv 32@3x3 → ReLU → average pool → linear to 16.
    pub fn new(channels: usize, patch: usize) -> Self {
        Self { channels, patch, conv1_filters: 16, conv2_filters: 32, kernel: 3, latent: 16 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 || self.kernel % 2 == 0 || self.channels == 0 || self.patch == 0 {
            return Err(Error::Config(format!("invalid encoder spec {self:?}")));
        }
        Ok(())
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.patch * self.patch
    }
}

/// Registers Kaiming-uniform weights and zero biases under `prefix`.
pub fn init_encoder<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, spec: &EncoderSpec, seed: u64) -> Result<()> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = spec.kernel;
    let mut uniform = |shape: &[usize], fan_in: usize| {
        let bound = (6.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        Tensor::raw(shape, (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect())
    };
    let w1 = uniform(&[spec.conv1_filters, spec.channels, k, k], spec.channels * k * k);
    let w2 = uniform(&[spec.conv2_filters, spec.conv1_filters, k, k], spec.conv1_filters * k * k);
    let wl = uniform(&[spec.conv2_filters, spec.latent], spec.conv2_filters);
    store.insert(&format!("{prefix}.conv1.w"), w1);
    store.insert(&format!("{prefix}.conv1.b"), Tensor::zeros(&[spec.conv1_filters]));
    store.insert(&format!("{prefix}.conv2.w"), w2);
    store.insert(&format!("{prefix}.conv2.b"), Tensor::zeros(&[spec.conv2_filters]));
    store.insert(&format!("{prefix}.lin.w"), wl);
    store.insert(&format!("{prefix}.lin.b"), Tensor::zeros(&[spec.latent]));
    Ok(())
}

/// Encodes a batch of patches `[B, C, u, u]` into raw latents `[B, latent]`.
pub fn encode<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    prefix: &str,
    spec: &EncoderSpec,
    patches: Var,
) -> Result<Var> {
    let s = g.value(patches).shape().to_vec();
    if s.len() != 4 || s[1] != spec.channels || s[2] != spec.patch || s[3] != spec.patch {
        return Err(Error::ShapeMismatch(format!(
            "patches {s:?} do not match encoder ({} channels, {}x{})",
            spec.channels, spec.patch, spec.patch
        )));
    }
    let p = |g: &mut Graph<T>, n: &str| g.param_by_name(store, &format!("{prefix}.{n}"));
    let (w1, b1) = (p(g, "conv1.w"), p(g, "conv1.b"));
    let (w2, b2) = (p(g, "conv2.w"), p(g, "conv2.b"));
    let (wl, bl) = (p(g, "lin.w"), p(g, "lin.b"));
    let h = g.conv2d(patches, w1, b1)?;
    let h = g.relu(h);
    let h = g.conv2d(h, w2, b2)?;
    let h = g.relu(h);
    let h = g.avg_pool(h);
    let z = g.matmul(h, wl);
    Ok(g.add_row(z, bl))
}

/// Encodes a single patch given as flat `[C * u * u]` data.
pub fn encode_patch<T: Scalar>(store: &ParamStore<T>, prefix: &str, spec: &EncoderSpec, patch: &[T]) -> Result<Tensor<T>> {
    if patch.len() != spec.patch_len() {
        return Err(Error::ShapeMismatch(format!("patch has {} values, expected {}", patch.len(), spec.patch_len())));
    }
    let mut g = Graph::inference();
    let x = g.constant(Tensor::raw(&[1, spec.channels, spec.patch, spec.patch], patch.to_vec()));
    let z = encode(&mut g, store, prefix, spec, x)?;
    Ok(g.value(z).clone().reshape(&[spec.latent]))
}

/// Per-component mean and (floored, population) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats<T> {
    pub mean: Tensor<T>,
    pub sd: Tensor<T>,
}

impl<T: Scalar> NormalizationStats<T> {
    pub fn from_latents(raw: &Tensor<T>) -> Self {
        let mut g = Graph::inference();
        let x = g.constant(raw.clone());
        let (_, m, s) = standardize(&mut g, x);
        Self { mean: g.value(m).clone(), sd: g.value(s).clone() }
    }

    pub fn apply(&self, raw: &Tensor<T>) -> Tensor<T> {
        let d = self.mean.len();
        let mut out = raw.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = (*v - self.mean.data()[i % d]) / self.sd.data()[i % d];
        }
        out
    }
}

/// Differentiable column standardization of `[N, d]` latents. Returns (standardized, mean, sd).
pub fn standardize<T: Scalar>(g: &mut Graph<T>, raw: Var) -> (Var, Var, Var) {
    let mean = g.col_mean(raw);
    let neg = g.neg(mean);
    let centered = g.add_row(raw, neg);
    let sq = g.square(centered);
    let var = g.col_mean(sq);
    let sd = g.floor_sqrt(var, T::of(SD_FLOOR));
    let inv = g.log(sd);
    let inv = g.neg(inv);
    let inv = g.exp(inv);
    let z = g.mul_row(centered, inv);
    (z, mean, sd)
}

/// Standardizes with fixed statistics (graph constants).
pub fn apply_stats<T: Scalar>(g: &mut Graph<T>, raw: Var, stats: &NormalizationStats<T>) -> Var {
    let neg = g.constant(stats.mean.map(|v| -v));
    let inv = g.constant(stats.sd.map(|v| T::one() / v));
    let c = g.add_row(raw, neg);
    g.mul_row(c, inv)
}

/// Where each joint-latent coordinate comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointLayout {
    /// `(mechanism name, start, width)` for each latent block, in order.
    pub blocks: Vec<(String, usize, usize)>,
    /// Start of the two appended coordinate columns, if present.
    pub coords: Option<usize>,
    pub dim: usize,
}

impl JointLayout {
    pub fn new(blocks: &[(String, usize)], coords: bool) -> Self {
        let mut off = 0;
        let mut out = Vec::new();
        for (name, w) in blocks {
            out.push((name.clone(), off, *w));
            off += w;
        }
        let c = coords.then_some(off);
        Self { blocks: out, coords: c, dim: off + if coords { 2 } else { 0 } }
    }

    /// Human-readable owner of joint index `i`.
    pub fn attribution(&self, i: usize) -> Option<String> {
        if let Some(c) = self.coords {
            if i == c {
                return Some("coordinate x".into());
            }
            if i == c + 1 {
                return Some("coordinate y".into());
            }
        }
        self.blocks.iter().find(|(_, s, w)| i >= *s && i < s + w).map(|(n, _, _)| n.clone())
    }
}

/// Standardizes each latent block with its statistics, concatenates and appends raw coordinates.
pub fn assemble<T: Scalar>(
    blocks: &[Tensor<T>],
    coords: Option<&Tensor<T>>,
    stats: &[Option<NormalizationStats<T>>],
) -> Result<Tensor<T>> {
    if stats.len() != blocks.len() {
        return Err(Error::MissingStats(format!("{} blocks, {} statistics", blocks.len(), stats.len())));
    }
    let mut g = Graph::inference();
    let mut parts = Vec::new();
    for (i, (b, s)) in blocks.iter().zip(stats).enumerate() {
        let s = s.as_ref().ok_or_else(|| Error::MissingStats(format!("block {i}")))?;
        let v = g.constant(b.clone());
        parts.push(apply_stats(&mut g, v, s));
    }
    if let Some(c) = coords {
        parts.push(g.constant(c.clone()));
    }
    let j = g.concat_cols(&parts);
    Ok(g.value(j).clone())
}
