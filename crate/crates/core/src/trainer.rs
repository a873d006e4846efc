//! Joint encoder + SVGP training, prediction, checkpoints and continuity probing.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, MechanismKind, PatchSet};
use crate::encoders::{self, encode, init_encoder, standardize, EncoderSpec, JointLayout, NormalizationStats};
use crate::error::{Error, Result};
use crate::gp::{self, elbo, init_gp, GpSpec, GpVars, KernelKind};
use crate::numcore::{adam_step, grad, value, Graph, ParamStore, Scalar, Tensor, Var};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DVCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const ENCODE_CHUNK: usize = 256;

const STREAM_ENCODER: u64 = 10;
const STREAM_INDUCING: u64 = 20;
const STREAM_BATCH: u64 = 21;
const STREAM_PROBE: u64 = 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub inducing: usize,
    pub seed: u64,
    pub kernel: KernelKind,
    pub structured_mean: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.01, iterations: 500, batch_size: 256, inducing: 50, seed: 0, kernel: KernelKind::Matern52, structured_mean: false }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.inducing == 0 {
            return Err(Error::Config("batch size and inducing count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Population standardization. Returns (standardized, mean, sd).
pub fn standardize_targets(y: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    if y.len() < 2 {
        return Err(Error::DegenerateTargets(0.0));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd >= 1e-12) {
        return Err(Error::DegenerateTargets(sd));
    }
    Ok((y.iter().map(|v| (v - mean) / sd).collect(), mean, sd))
}

/// Model inputs for a set of points: one patch per image mechanism, plus coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub patches: Vec<PatchSet>,
    pub coords: Option<Vec<(f64, f64)>>,
}

impl Inputs {
    pub fn from_cells(ds: &Dataset, cells: &[usize]) -> Self {
        let patches = ds.image_mechanisms().map(|m| m.patches().expect("image mechanism").select(cells)).collect();
        let coords = ds.has_coordinates().then(|| cells.iter().map(|&c| ds.coords(c)).collect());
        Self { patches, coords }
    }

    pub fn len(&self) -> usize {
        match (&self.coords, self.patches.first()) {
            (Some(c), _) => c.len(),
            (None, Some(p)) => p.cells(),
            (None, None) => 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Evenly spaced `side × side` probe cells over the grid.
pub fn probe_cells(ds: &Dataset, side: usize) -> Vec<usize> {
    let pick = |n: usize, i: usize| if side <= 1 { 0 } else { (i * (n - 1)) / (side - 1) };
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            out.push(pick(ds.rows, i) * ds.cols + pick(ds.cols, j));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Predictive mean in original target units.
    pub mean: Vec<f64>,
    /// Latent predictive standard deviation in original units.
    pub sd: Vec<f64>,
    pub std_mean: Vec<f64>,
    pub std_sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    encoders: Vec<(String, EncoderSpec)>,
    coordinates: bool,
    layout: JointLayout,
    gp: GpSpec,
    labeled: Vec<usize>,
    params: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ModelState<T> {
    pub config: TrainConfig,
    /// Image mechanisms in dataset order.
    pub encoders: Vec<(String, EncoderSpec)>,
    pub coordinates: bool,
    pub layout: JointLayout,
    pub gp: GpSpec,
    pub params: ParamStore<T>,
    pub stats: Vec<NormalizationStats<T>>,
    pub target_mean: f64,
    pub target_sd: f64,
    /// Canonically sorted training cells.
    pub labeled: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub state: ModelState<T>,
    /// Negative ELBO per Adam step.
    pub losses: Vec<f64>,
    pub elbo_init: f64,
    pub elbo_final: f64,
}

fn prefix(name: &str) -> String {
    format!("enc.{name}")
}

fn patch_tensor<T: Scalar>(p: &PatchSet, cells: &[usize]) -> Tensor<T> {
    let n = p.patch_len();
    let mut data = Vec::with_capacity(cells.len() * n);
    for &c in cells {
        data.extend(p.patch(c).iter().map(|&v| T::of(v as f64)));
    }
    Tensor::raw(&[cells.len(), p.channels, p.size, p.size], data)
}

fn coord_tensor<T: Scalar>(coords: &[(f64, f64)]) -> Tensor<T> {
    Tensor::raw(&[coords.len(), 2], coords.iter().flat_map(|&(x, y)| [T::of(x), T::of(y)]).collect())
}

/// Training inputs with patches deduplicated per mechanism.
struct Prepared<T> {
    uniq: Vec<Tensor<T>>,
    index: Vec<Vec<usize>>,
    coords: Option<Tensor<T>>,
}

impl<T: Scalar> Prepared<T> {
    fn new(inputs: &Inputs) -> Self {
        let all: Vec<usize> = (0..inputs.len()).collect();
        let (mut uniq, mut index) = (Vec::new(), Vec::new());
        for p in &inputs.patches {
            let (u, idx) = p.dedup(&all);
            uniq.push(patch_tensor(p, &u));
            index.push(idx);
        }
        Self { uniq, index, coords: inputs.coords.as_deref().map(coord_tensor) }
    }

    /// Joint latents with batch-statistics standardization recorded on the tape.
    fn joint(&self, g: &mut Graph<T>, store: &ParamStore<T>, encoders: &[(String, EncoderSpec)]) -> Result<Var> {
        let mut parts = Vec::new();
        for (k, (name, spec)) in encoders.iter().enumerate() {
            let u = g.constant(self.uniq[k].clone());
            let z = encode(g, store, &prefix(name), spec, u)?;
            let z = g.gather(z, &self.index[k]);
            parts.push(standardize(g, z).0);
        }
        if let Some(c) = &self.coords {
            parts.push(g.constant(c.clone()));
        }
        Ok(g.concat_cols(&parts))
    }
}

/// Raw latents for every patch in `p`, encoding each distinct patch once.
fn encode_all<T: Scalar>(store: &ParamStore<T>, name: &str, spec: &EncoderSpec, p: &PatchSet) -> Result<Tensor<T>> {
    let all: Vec<usize> = (0..p.cells()).collect();
    let (uniq, index) = p.dedup(&all);
    let mut lat = Vec::with_capacity(uniq.len() * spec.latent);
    for chunk in uniq.chunks(ENCODE_CHUNK) {
        let mut g = Graph::inference();
        let x = g.constant(patch_tensor(p, chunk));
        let z = encode(&mut g, store, &prefix(name), spec, x)?;
        lat.extend_from_slice(g.value(z).data());
    }
    let d = spec.latent;
    let mut out = Vec::with_capacity(index.len() * d);
    for &i in &index {
        out.extend_from_slice(&lat[i * d..(i + 1) * d]);
    }
    Ok(Tensor::raw(&[index.len(), d], out))
}

fn structure(ds: &Dataset, cfg: &TrainConfig) -> Result<(Vec<(String, EncoderSpec)>, bool, JointLayout, usize)> {
    let mut encoders = Vec::new();
    for m in &ds.mechanisms {
        if let MechanismKind::Image(p) = &m.kind {
            encoders.push((m.name.clone(), EncoderSpec::new(p.channels, p.size)));
        }
    }
    let coords = ds.has_coordinates();
    if cfg.structured_mean && !coords {
        return Err(Error::Config("structured mean needs a coordinate mechanism".into()));
    }
    if encoders.is_empty() && !coords {
        return Err(Error::Config("dataset has no mechanisms".into()));
    }
    let blocks: Vec<(String, usize)> = encoders.iter().map(|(n, s)| (n.clone(), s.latent)).collect();
    let layout = JointLayout::new(&blocks, coords);
    let dim = layout.dim;
    Ok((encoders, coords, layout, dim))
}

struct Setup<T> {
    cells: Vec<usize>,
    inputs: Inputs,
    prep: Prepared<T>,
    y: Vec<T>,
    y_mean: f64,
    y_sd: f64,
    encoders: Vec<(String, EncoderSpec)>,
    coordinates: bool,
    layout: JointLayout,
    spec: GpSpec,
    store: ParamStore<T>,
}

impl<T: Scalar> Setup<T> {
    fn new(ds: &Dataset, labeled: &[usize], cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut cells = labeled.to_vec();
        cells.sort_unstable();
        cells.dedup();
        if cells.len() < 2 {
            return Err(Error::Config(format!("need at least 2 labeled points, got {}", cells.len())));
        }
        if let Some(&c) = cells.iter().find(|&&c| c >= ds.len()) {
            return Err(Error::OutOfRange(format!("labeled cell {c} outside dataset of {}", ds.len())));
        }
        let n = cells.len();
        let y_raw: Vec<f64> = cells.iter().map(|&c| ds.targets[c]).collect();
        let (y_std, y_mean, y_sd) = standardize_targets(&y_raw)?;
        let y: Vec<T> = y_std.iter().map(|&v| T::of(v)).collect();

        let (encoders, coordinates, layout, dim) = structure(ds, cfg)?;
        let mut store = ParamStore::new();
        for (k, (name, spec)) in encoders.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(STREAM_ENCODER + k as u64);
            init_encoder(&mut store, &prefix(name), spec, rand::Rng::gen(&mut rng))?;
        }
        let inputs = Inputs::from_cells(ds, &cells);
        let prep = Prepared::<T>::new(&inputs);

        let m = cfg.inducing.min(n);
        let x0 = {
            let mut g = Graph::inference();
            let x = prep.joint(&mut g, &store, &encoders)?;
            g.value(x).clone()
        };
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_INDUCING);
        order.shuffle(&mut rng);
        let z0 = Tensor::raw(&[m, dim], order[..m].iter().flat_map(|&i| x0.row(i).to_vec()).collect());
        let structured = cfg.structured_mean.then(|| (dim - 2, dim - 1));
        let spec = GpSpec { dim, inducing: m, kernel: cfg.kernel, structured };
        init_gp(&mut store, &spec, z0)?;
        Ok(Self { cells, inputs, prep, y, y_mean, y_sd, encoders, coordinates, layout, spec, store })
    }

    /// ELBO over the rows `batch` of the training set (all rows when `None`).
    fn elbo(&self, g: &mut Graph<T>, p: &ParamStore<T>, batch: Option<&[usize]>) -> Result<Var> {
        let n = self.cells.len();
        let x = self.prep.joint(g, p, &self.encoders)?;
        let (x, y) = match batch {
            Some(b) => (g.gather(x, b), Tensor::raw(&[b.len()], b.iter().map(|&i| self.y[i]).collect())),
            None => (x, Tensor::raw(&[n], self.y.clone())),
        };
        let v = GpVars::load(g, p, &self.spec);
        let yv = g.constant(y);
        elbo(g, &v, &self.spec, x, yv, n)
    }
}

/// Finite-difference check of the full training objective (encoders, GP, optional
/// structured mean) at the seeded initial state, with the variational parameters
/// additionally drawn at random. Returns the worst relative error.
pub fn objective_grad_check(ds: &Dataset, labeled: &[usize], cfg: &TrainConfig, h: f64) -> Result<f64> {
    let mut s = Setup::<f64>::new(ds, labeled, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_PROBE + 1);
    for name in ["gp.m", "gp.lu"] {
        let id = s.store.id(name).expect("registered");
        for v in s.store.value_mut(id).data_mut() {
            let u: f64 = StandardNormal.sample(&mut rng);
            *v = 0.3 * u;
        }
    }
    crate::numcore::grad_check(&s.store, |g, p| s.elbo(g, p, None), h)
}

/// Trains encoders and GP jointly by Adam on the negative ELBO.
pub fn train<T: Scalar>(ds: &Dataset, labeled: &[usize], cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    let setup = Setup::<T>::new(ds, labeled, cfg)?;
    let n = setup.cells.len();
    let mut store = setup.store.clone();
    let elbo_init = value(&store, |g, p| setup.elbo(g, p, None))?.f64();

    let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    batch_rng.set_stream(STREAM_BATCH);
    let mut losses = Vec::with_capacity(cfg.iterations);
    let all: Vec<usize> = (0..n).collect();
    for step in 0..cfg.iterations {
        let batch: Vec<usize> = if n <= cfg.batch_size {
            all.clone()
        } else {
            let mut b = rand::seq::index::sample(&mut batch_rng, n, cfg.batch_size).into_vec();
            b.sort_unstable();
            b
        };
        let full_batch = batch.len() == n;
        let objective = |g: &mut Graph<T>, p: &ParamStore<T>| -> Result<Var> {
            let e = setup.elbo(g, p, (!full_batch).then_some(&batch[..]))?;
            Ok(g.neg(e))
        };
        let loss = match grad(&mut store, objective) {
            Ok(l) => l,
            Err(Error::NonFiniteGradient { .. } | Error::NonFinite) => return Err(Error::NonFiniteTrainingStep { step }),
            Err(e) => return Err(e),
        };
        losses.push(loss.f64());
        adam_step(&mut store, cfg.lr);
    }
    let elbo_final = value(&store, |g, p| setup.elbo(g, p, None))?.f64();

    let Setup { cells, inputs, y_mean, y_sd, encoders, coordinates, layout, spec, .. } = setup;
    let mut stats = Vec::new();
    for (k, (name, spec)) in encoders.iter().enumerate() {
        let raw = encode_all(&store, name, spec, &inputs.patches[k])?;
        stats.push(NormalizationStats::from_latents(&raw));
    }
    let state = ModelState {
        config: cfg.clone(),
        encoders,
        coordinates,
        layout,
        gp: spec,
        params: store,
        stats,
        target_mean: y_mean,
        target_sd: y_sd,
        labeled: cells,
    };
    Ok(TrainOutcome { state, losses, elbo_init, elbo_final })
}

impl<T: Scalar> ModelState<T> {
    fn check_inputs(&self, inputs: &Inputs) -> Result<()> {
        if inputs.patches.len() != self.encoders.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} patch sets for {} encoders",
                inputs.patches.len(),
                self.encoders.len()
            )));
        }
        if inputs.coords.is_some() != self.coordinates {
            return Err(Error::ShapeMismatch("coordinate channel presence differs from the model".into()));
        }
        let n = inputs.len();
        if inputs.patches.iter().any(|p| p.cells() != n) {
            return Err(Error::ShapeMismatch("patch sets differ in length".into()));
        }
        Ok(())
    }

    /// Standardized joint latents (fixed training statistics, raw coordinates appended).
    pub fn latents(&self, inputs: &Inputs) -> Result<Tensor<T>> {
        self.check_inputs(inputs)?;
        let mut blocks = Vec::new();
        for (k, (name, spec)) in self.encoders.iter().enumerate() {
            blocks.push(encode_all(&self.params, name, spec, &inputs.patches[k])?);
        }
        let coords = inputs.coords.as_deref().map(coord_tensor);
        let stats: Vec<_> = self.stats.iter().cloned().map(Some).collect();
        if blocks.is_empty() {
            return Ok(coords.expect("checked"));
        }
        encoders::assemble(&blocks, coords.as_ref(), &stats)
    }

    pub fn predict(&self, inputs: &Inputs) -> Result<Prediction> {
        let x = self.latents(inputs)?;
        let (mu, var) = gp::predict(&self.params, &self.gp, &x, false)?;
        let std_mean: Vec<f64> = mu.iter().map(|v| v.f64()).collect();
        let std_sd: Vec<f64> = var.iter().map(|v| v.f64().sqrt()).collect();
        Ok(Prediction {
            mean: std_mean.iter().map(|v| v * self.target_sd + self.target_mean).collect(),
            sd: std_sd.iter().map(|v| v * self.target_sd).collect(),
            std_mean,
            std_sd,
        })
    }

    pub fn predict_cells(&self, ds: &Dataset, cells: &[usize]) -> Result<Prediction> {
        self.predict(&Inputs::from_cells(ds, cells))
    }

    /// Learned structured-mean centre `(x_c, y_c)` in normalized coordinates.
    pub fn structured_center(&self) -> Option<(f64, f64)> {
        let raw = |n: &str| self.params.get(n).map(|t| t.item().f64());
        Some((gp::CENTER_BOUND * raw("gp.sm.raw_xc")?.tanh(), gp::CENTER_BOUND * raw("gp.sm.raw_yc")?.tanh()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tensors: Vec<(String, Tensor<T>)> =
            self.params.names().map(|n| (n.to_string(), self.params.get(n).expect("listed").clone())).collect();
        for ((name, _), s) in self.encoders.iter().zip(&self.stats) {
            tensors.push((format!("stats.{name}.mean"), s.mean.clone()));
            tensors.push((format!("stats.{name}.sd"), s.sd.clone()));
        }
        tensors.push(("target.mean".into(), Tensor::scalar(T::of(self.target_mean))));
        tensors.push(("target.sd".into(), Tensor::scalar(T::of(self.target_sd))));
        let meta = Meta {
            config: self.config.clone(),
            encoders: self.encoders.clone(),
            coordinates: self.coordinates,
            layout: self.layout.clone(),
            gp: self.gp,
            labeled: self.labeled.clone(),
            params: self.params.names().map(String::from).collect(),
        };
        let json = serde_json::to_vec(&meta)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in &tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                buf.extend_from_slice(&v.f64().to_le_bytes());
            }
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut r = Reader { buf: &buf, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = r.u64()? as usize;
        let meta: Meta = serde_json::from_slice(r.take(len)?)?;
        let count = r.u32()? as usize;
        let mut tensors = std::collections::HashMap::new();
        for _ in 0..count {
            let nl = r.u32()? as usize;
            let name = String::from_utf8(r.take(nl)?.to_vec()).map_err(|e| Error::Format(e.to_string()))?;
            let nd = r.u32()? as usize;
            let shape: Vec<usize> = (0..nd).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
            let numel: usize = shape.iter().product();
            let data: Vec<T> = (0..numel).map(|_| r.f64().map(T::of)).collect::<Result<_>>()?;
            tensors.insert(name, Tensor::raw(&shape, data));
        }
        if r.pos != buf.len() {
            return Err(Error::Format("trailing bytes after tensor directory".into()));
        }
        let mut take = |n: &str| tensors.remove(n).ok_or_else(|| Error::Format(format!("missing tensor `{n}`")));
        let mut params = ParamStore::new();
        for n in &meta.params {
            params.insert(n, take(n)?);
        }
        let mut stats = Vec::new();
        for (name, _) in &meta.encoders {
            stats.push(NormalizationStats { mean: take(&format!("stats.{name}.mean"))?, sd: take(&format!("stats.{name}.sd"))? });
        }
        let target_mean = take("target.mean")?.item().f64();
        let target_sd = take("target.sd")?.item().f64();
        Ok(Self {
            config: meta.config,
            encoders: meta.encoders,
            coordinates: meta.coordinates,
            layout: meta.layout,
            gp: meta.gp,
            params,
            stats,
            target_mean,
            target_sd,
            labeled: meta.labeled,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Max |Δ predictive mean| over `probe` after moving every parameter by `eps` along one
/// seeded random unit direction.
pub fn continuity_probe<T: Scalar>(state: &ModelState<T>, probe: &Inputs, eps: f64, seed: u64) -> Result<f64> {
    let base = state.predict(probe)?.mean;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_PROBE);
    let ids: Vec<usize> = (0..state.params.len()).collect();
    let dirs: Vec<Vec<f64>> =
        ids.iter().map(|&i| (0..state.params.value(i).len()).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let norm = dirs.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let mut moved = state.clone();
    for (&i, d) in ids.iter().zip(&dirs) {
        for (v, u) in moved.params.value_mut(i).data_mut().iter_mut().zip(d) {
            *v = *v + T::of(eps * u / norm);
        }
    }
    let out = moved.predict(probe)?.mean;
    Ok(base.iter().zip(&out).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}
