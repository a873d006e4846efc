//! Mechanism isolation by controlled inputs, anchor correction, clustering and the
//! non-additive scaling decomposition.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, MechanismKind, PatchSet};
use crate::error::{Error, Result};
use crate::numcore::Scalar;
use crate::trainer::{Inputs, ModelState};

/// Value at which a mechanism is held fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Patch(Vec<f32>),
    Coordinates(f64, f64),
}

pub type References = BTreeMap<String, Reference>;

/// First-category canonical patch for labeled image mechanisms, a uniform patch of ones
/// for unlabeled ones, and the grid centre for coordinates.
pub fn default_references(ds: &Dataset) -> References {
    let mut out = References::new();
    for m in &ds.mechanisms {
        let r = match &m.kind {
            MechanismKind::Coordinates => Reference::Coordinates(0.0, 0.0),
            MechanismKind::Image(p) => {
                let first = m.labels.as_ref().and_then(|l| l.iter().position(|&c| c == 0));
                match first {
                    Some(c) => Reference::Patch(p.patch(c).to_vec()),
                    None => Reference::Patch(vec![1.0; p.patch_len()]),
                }
            }
        };
        out.insert(m.name.clone(), r);
    }
    out
}

/// Reference patch taken from a given cell.
pub fn cell_reference(ds: &Dataset, mechanism: &str, cell: usize) -> Result<Reference> {
    let (_, m) = ds.mechanism(mechanism).ok_or_else(|| Error::Config(format!("unknown mechanism `{mechanism}`")))?;
    if cell >= ds.len() {
        return Err(Error::OutOfRange(format!("cell {cell}")));
    }
    Ok(match &m.kind {
        MechanismKind::Image(p) => Reference::Patch(p.patch(cell).to_vec()),
        MechanismKind::Coordinates => {
            let (x, y) = ds.coords(cell);
            Reference::Coordinates(x, y)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechanismResponse {
    pub mechanism: String,
    pub probe: Vec<usize>,
    /// References of the fixed mechanisms, and of this one for the all-reference input.
    pub references: References,
    pub values: Vec<f64>,
    /// Prediction with every mechanism at its reference, when this mechanism has one too.
    pub reference_value: Option<f64>,
    /// Total shift already subtracted from the raw predictions.
    pub offset: f64,
    /// Anchor offset δ (subtracted).
    pub delta: f64,
}

/// Builds inputs where `varied` takes `source` values (cells or a fixed reference) and
/// every other mechanism is fixed at its reference.
fn composite(ds: &Dataset, varied: &str, source: Source<'_>, refs: &References) -> Result<Inputs> {
    let n = match source {
        Source::Cells(c) => c.len(),
        Source::Fixed(_) => 1,
    };
    let fixed = |name: &str| refs.get(name).ok_or_else(|| Error::MissingReference(name.to_string()));
    let mut patches = Vec::new();
    let mut coords = None;
    for m in &ds.mechanisms {
        let value = if m.name == varied {
            match source {
                Source::Cells(cells) => {
                    match &m.kind {
                        MechanismKind::Image(p) => patches.push(p.select(cells)),
                        MechanismKind::Coordinates => coords = Some(cells.iter().map(|&c| ds.coords(c)).collect()),
                    }
                    continue;
                }
                Source::Fixed(r) => r,
            }
        } else {
            fixed(&m.name)?
        };
        match (&m.kind, value) {
            (MechanismKind::Image(p), Reference::Patch(px)) => {
                if px.len() != p.patch_len() {
                    return Err(Error::ShapeMismatch(format!("reference patch for `{}` has {} values", m.name, px.len())));
                }
                let pixels = (0..n).flat_map(|_| px.iter().copied()).collect();
                patches.push(PatchSet { channels: p.channels, size: p.size, pixels });
            }
            (MechanismKind::Coordinates, &Reference::Coordinates(x, y)) => coords = Some(vec![(x, y); n]),
            _ => return Err(Error::Config(format!("reference kind does not match mechanism `{}`", m.name))),
        }
    }
    Ok(Inputs { patches, coords })
}

#[derive(Clone, Copy)]
enum Source<'a> {
    Cells(&'a [usize]),
    Fixed(&'a Reference),
}

fn check_mechanism(ds: &Dataset, name: &str) -> Result<()> {
    ds.mechanism(name).map(|_| ()).ok_or_else(|| Error::Config(format!("unknown mechanism `{name}`")))
}

/// Raw predictive mean over `probe` with only `mechanism` varying.
pub fn mechanism_response<T: Scalar>(
    state: &ModelState<T>,
    ds: &Dataset,
    mechanism: &str,
    probe: &[usize],
    refs: &References,
) -> Result<MechanismResponse> {
    check_mechanism(ds, mechanism)?;
    let values = state.predict(&composite(ds, mechanism, Source::Cells(probe), refs)?)?.mean;
    let reference_value = match refs.get(mechanism) {
        Some(own) => Some(state.predict(&composite(ds, mechanism, Source::Fixed(own), refs)?)?.mean[0]),
        None => None,
    };
    Ok(MechanismResponse {
        mechanism: mechanism.to_string(),
        probe: probe.to_vec(),
        references: refs.clone(),
        values,
        reference_value,
        offset: 0.0,
        delta: 0.0,
    })
}

/// Removes the shared reference prediction so that responses sum to the model output
/// for an additive model: each loses `f(ref)·(1 − 1/n)`.
pub fn center(responses: &mut [MechanismResponse]) -> Result<()> {
    let n = responses.len() as f64;
    for r in responses.iter() {
        if r.reference_value.is_none() {
            return Err(Error::MissingReference(r.mechanism.clone()));
        }
    }
    for r in responses {
        let share = r.reference_value.expect("checked") * (1.0 - 1.0 / n);
        r.values.iter_mut().for_each(|v| *v -= share);
        r.offset += share;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub mechanism: String,
    /// Response value at the anchor input, on the same footing as the response values.
    pub value: f64,
}

/// Evaluates `response` at `input` (including any shift already applied) to build an anchor.
pub fn anchor_at<T: Scalar>(state: &ModelState<T>, ds: &Dataset, response: &MechanismResponse, input: &Reference) -> Result<Anchor> {
    let raw = state.predict(&composite(ds, &response.mechanism, Source::Fixed(input), &response.references)?)?.mean[0];
    Ok(Anchor { mechanism: response.mechanism.clone(), value: raw - response.offset })
}

/// Subtracts δₖ from each anchored response and adds Σδₖ to the single unanchored one.
pub fn anchor_correct(responses: &mut [MechanismResponse], anchors: &[Anchor]) -> Result<()> {
    let n = responses.len();
    if anchors.len() + 1 != n {
        return Err(Error::AnchorCountMismatch { expected: n.saturating_sub(1), got: anchors.len() });
    }
    let mut anchored = vec![None; n];
    for a in anchors {
        let k = responses
            .iter()
            .position(|r| r.mechanism == a.mechanism)
            .ok_or_else(|| Error::Config(format!("anchor names unknown mechanism `{}`", a.mechanism)))?;
        if anchored[k].replace(a.value).is_some() {
            return Err(Error::Config(format!("mechanism `{}` anchored twice", a.mechanism)));
        }
    }
    let mut total = 0.0;
    for (r, d) in responses.iter_mut().zip(&anchored) {
        if let Some(d) = *d {
            r.values.iter_mut().for_each(|v| *v -= d);
            r.delta = d;
            r.offset += d;
            total += d;
        }
    }
    let free = anchored.iter().position(Option::is_none).expect("exactly one unanchored mechanism");
    let r = &mut responses[free];
    r.values.iter_mut().for_each(|v| *v += total);
    r.delta = -total;
    r.offset -= total;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster per point, numbered by ascending centre.
    pub labels: Vec<usize>,
    pub centers: Vec<f64>,
    pub purity: f64,
}

const KMEANS_RESTARTS: usize = 100;
const KMEANS_MAX_ITER: usize = 100;

fn kmeans_once(x: &[f64], k: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<usize>, f64) {
    let n = x.len();
    let mut centers = vec![x[rng.gen_range(0..n)]];
    while centers.len() < k {
        let d2: Vec<f64> =
            x.iter().map(|v| centers.iter().map(|c| (v - c).powi(2)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if t < d {
                    pick = i;
                    break;
                }
                t -= d;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centers.push(x[next]);
    }
    let mut assign = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, v) in x.iter().enumerate() {
            let best = (0..k).min_by(|&a, &b| (v - centers[a]).abs().total_cmp(&(v - centers[b]).abs())).expect("k >= 1");
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<f64> = x.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(v, _)| *v).collect();
            if !members.is_empty() {
                *center = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = x.iter().zip(&assign).map(|(v, &a)| (v - centers[a]).powi(2)).sum();
    (centers, assign, inertia)
}

/// Seeded 1-D k-means with k-means++ restarts and purity against known categories.
pub fn cluster_check(predictions: &[f64], categories: &[u32], k: usize, seed: u64) -> Result<ClusterResult> {
    if predictions.len() != categories.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions, {} categories", predictions.len(), categories.len())));
    }
    if k == 0 || predictions.len() < k {
        return Err(Error::DegenerateInput(format!("cannot form {k} clusters from {} points", predictions.len())));
    }
    if predictions.iter().all(|&v| v == predictions[0]) {
        return Err(Error::DegenerateInput("all predictions identical".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<f64>, Vec<usize>, f64)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let run = kmeans_once(predictions, k, &mut rng);
        if best.as_ref().map_or(true, |b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (centers, assign, _) = best.expect("at least one restart");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]));
    let mut rank = vec![0; k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let labels: Vec<usize> = assign.iter().map(|&a| rank[a]).collect();
    let centers: Vec<f64> = order.iter().map(|&c| centers[c]).collect();
    let mut hits = 0;
    for c in 0..k {
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for (l, &cat) in labels.iter().zip(categories) {
            if *l == c {
                *counts.entry(cat).or_default() += 1;
            }
        }
        hits += counts.values().copied().max().unwrap_or(0);
    }
    Ok(ClusterResult { labels, centers, purity: hits as f64 / predictions.len() as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingDecomposition {
    pub k_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub a_c: Vec<f64>,
    pub a_a: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Fixed to 1.
    pub beta: Vec<f64>,
    pub p_star: f64,
    pub gauge: String,
    pub iterations: usize,
    /// Root-mean-square reconstruction error.
    pub residual_rms: f64,
    pub residual_max: f64,
}

impl ScalingDecomposition {
    pub fn reconstruct(&self, ki: usize, pi: usize) -> f64 {
        self.alpha[pi] * self.a_c[ki] + self.beta[ki] * self.a_a[pi]
    }
}

const ALS_TOL: f64 = 1e-10;
const ALS_MAX_ITER: usize = 500;

/// Slope and intercept of the least-squares line `y ≈ α x + a`.
fn regress(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let scale = x.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    if !(sxx > (1e-12 * scale).powi(2) * n) {
        return Err(Error::SingularRegression("c-domain contribution has no variance over K".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let alpha = sxy / sxx;
    Ok((alpha, my - alpha * mx))
}

/// Fits `A(K,P) = α(P)·A_c(K) + A_a(P)` by alternating least squares. `grid` is
/// K-major (`grid[ki * P + pi]`); the gauge is α(P*) = 1, A_a(P*) = 0 at `p_star`.
pub fn scaling_decompose(grid: &[f64], k_values: &[f64], p_values: &[f64], p_star: Option<usize>) -> Result<ScalingDecomposition> {
    let (nk, np) = (k_values.len(), p_values.len());
    if grid.len() != nk * np || nk == 0 || np == 0 {
        return Err(Error::ShapeMismatch(format!("grid of {} values for {nk}x{np}", grid.len())));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let star = match p_star {
        Some(s) if s < np => s,
        Some(s) => return Err(Error::OutOfRange(format!("reference column {s} of {np}"))),
        None => (0..np).max_by(|&a, &b| p_values[a].total_cmp(&p_values[b])).expect("np >= 1"),
    };
    if nk < 2 {
        return Err(Error::SingularRegression("need at least two K values".into()));
    }
    let at = |k: usize, p: usize| grid[k * np + p];
    let column = |p: usize| -> Vec<f64> { (0..nk).map(|k| at(k, p)).collect() };

    let mut a_c = column(star);
    let mut alpha = vec![1.0; np];
    let mut a_a = vec![0.0; np];
    let residual = |a_c: &[f64], alpha: &[f64], a_a: &[f64]| -> (f64, f64) {
        let (mut ss, mut mx) = (0.0f64, 0.0f64);
        for k in 0..nk {
            for p in 0..np {
                let e = (alpha[p] * a_c[k] + a_a[p] - at(k, p)).abs();
                ss += e * e;
                mx = mx.max(e);
            }
        }
        ((ss / (nk * np) as f64).sqrt(), mx)
    };
    let mut prev = f64::INFINITY;
    let mut iterations = 0;
    let (mut rms, mut max) = (0.0, 0.0);
    for it in 1..=ALS_MAX_ITER {
        iterations = it;
        for p in 0..np {
            (alpha[p], a_a[p]) = regress(&a_c, &column(p))?;
        }
        // Re-impose the gauge at P*, leaving the reconstruction unchanged.
        let (s, b) = (alpha[star], a_a[star]);
        if s == 0.0 {
            return Err(Error::SingularRegression("reference column has zero scaling".into()));
        }
        for v in a_c.iter_mut() {
            *v = s * *v + b;
        }
        for p in 0..np {
            a_a[p] -= alpha[p] * b / s;
            alpha[p] /= s;
        }
        alpha[star] = 1.0;
        a_a[star] = 0.0;
        (rms, max) = residual(&a_c, &alpha, &a_a);
        let scale = grid.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
        if rms <= 1e-15 * scale || (prev.is_finite() && (prev - rms).abs() <= ALS_TOL * prev) {
            break;
        }
        prev = rms;
        let norm: f64 = alpha.iter().map(|a| a * a).sum();
        for (k, v) in a_c.iter_mut().enumerate() {
            *v = (0..np).map(|p| alpha[p] * (at(k, p) - a_a[p])).sum::<f64>() / norm;
        }
    }
    Ok(ScalingDecomposition {
        k_values: k_values.to_vec(),
        p_values: p_values.to_vec(),
        a_c,
        a_a,
        alpha,
        beta: vec![1.0; nk],
        p_star: p_values[star],
        gauge: format!("alpha(P*)=1, A_a(P*)=0 at P*={}", p_values[star]),
        iterations,
        residual_rms: rms,
        residual_max: max,
    })
}
