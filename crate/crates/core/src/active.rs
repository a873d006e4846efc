//! Uncertainty-driven acquisition with a boundary penalty.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numcore::Scalar;
use crate::stats::rmse;
use crate::trainer::{train, Inputs, ModelState, Prediction, TrainConfig};

const STREAM_SEEDS: u64 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// Penalty weight in standardized-σ units.
    pub lambda: f64,
    /// Penalty margin in normalized coordinates.
    pub d0: f64,
    pub budget: usize,
    pub seed_points: usize,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self { lambda: 1.0, d0: 0.1, budget: 100, seed_points: 2, seed: 0 }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.d0 > 0.0 && self.d0 <= 1.0) {
            return Err(Error::Config(format!("d0 must lie in (0, 1], got {}", self.d0)));
        }
        if self.seed_points < 2 {
            return Err(Error::Config("at least 2 seed points are needed to train".into()));
        }
        Ok(())
    }
}

/// Linear ramp from 1 on the boundary to 0 at distance `d0` inside it.
pub fn penalty(x: f64, y: f64, d0: f64) -> f64 {
    let b = (1.0 - x.abs()).min(1.0 - y.abs());
    (1.0 - b / d0).max(0.0)
}

/// `σ − λ·penalty` per cell, with labeled cells set to −∞.
pub fn score(sigma: &[f64], coords: &[(f64, f64)], labeled: &[bool], lambda: f64, d0: f64) -> Vec<f64> {
    sigma
        .iter()
        .zip(coords)
        .zip(labeled)
        .map(|((&s, &(x, y)), &l)| if l { f64::NEG_INFINITY } else { s - lambda * penalty(x, y, d0) })
        .collect()
}

/// Smallest index attaining the maximum finite score.
pub fn select_next(scores: &[f64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s == f64::NEG_INFINITY || s.is_nan() {
            continue;
        }
        if best.map_or(true, |b| s > scores[b]) {
            best = Some(i);
        }
    }
    best.ok_or(Error::SelectionExhausted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 0 for seed measurements.
    pub iteration: usize,
    pub cell: usize,
    pub row: usize,
    pub col: usize,
    pub score: Option<f64>,
    /// Standardized predictive σ of the selected cell.
    pub sigma: Option<f64>,
    pub penalty: Option<f64>,
    /// Full-grid RMSE of the model that made the selection.
    pub rmse: Option<f64>,
    /// Grid-averaged standardized predictive σ of that model.
    pub mean_sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionTrace {
    pub entries: Vec<TraceEntry>,
}

impl AcquisitionTrace {
    pub fn selected(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.cell).collect()
    }

    pub fn at(&self, iteration: usize) -> Option<&TraceEntry> {
        self.entries.iter().find(|e| e.iteration == iteration && iteration > 0)
    }
}

/// Seeded uniform draw of distinct starting cells.
pub fn seed_cells(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::SelectionExhausted);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SEEDS);
    Ok(sample(&mut rng, n, k).into_vec())
}

pub fn run_loop<T: Scalar>(
    ds: &Dataset,
    acq: &AcquisitionConfig,
    cfg: &TrainConfig,
) -> Result<(AcquisitionTrace, ModelState<T>)> {
    run_loop_with(ds, acq, cfg, |_, _| Ok(()))
}

/// Seeds, then repeats train → predict → score → select for `budget` iterations.
/// `observe` receives each iteration's full-grid prediction.
pub fn run_loop_with<T: Scalar, F>(
    ds: &Dataset,
    acq: &AcquisitionConfig,
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<(AcquisitionTrace, ModelState<T>)>
where
    F: FnMut(usize, &Prediction) -> Result<()>,
{
    acq.validate()?;
    if !ds.has_coordinates() {
        return Err(Error::Config("acquisition needs a coordinate mechanism for the boundary penalty".into()));
    }
    let n = ds.len();
    let all: Vec<usize> = (0..n).collect();
    let grid = Inputs::from_cells(ds, &all);
    let coords: Vec<(f64, f64)> = all.iter().map(|&c| ds.coords(c)).collect();
    let truth = (!ds.clean.is_empty()).then_some(&ds.clean);

    let mut labeled = vec![false; n];
    let mut set = Vec::new();
    let mut trace = AcquisitionTrace::default();
    for c in seed_cells(n, acq.seed_points, acq.seed)? {
        labeled[c] = true;
        set.push(c);
        let (row, col) = ds.cell(c);
        trace.entries.push(TraceEntry {
            iteration: 0,
            cell: c,
            row,
            col,
            score: None,
            sigma: None,
            penalty: None,
            rmse: None,
            mean_sigma: None,
        });
    }
    for it in 1..=acq.budget {
        let state = train::<T>(ds, &set, cfg)?.state;
        let pred = state.predict(&grid)?;
        observe(it, &pred)?;
        let scores = score(&pred.std_sd, &coords, &labeled, acq.lambda, acq.d0);
        let c = select_next(&scores)?;
        let (row, col) = ds.cell(c);
        trace.entries.push(TraceEntry {
            iteration: it,
            cell: c,
            row,
            col,
            score: Some(scores[c]),
            sigma: Some(pred.std_sd[c]),
            penalty: Some(penalty(coords[c].0, coords[c].1, acq.d0)),
            rmse: truth.map(|t| rmse(&pred.mean, t)),
            mean_sigma: Some(pred.std_sd.iter().sum::<f64>() / n as f64),
        });
        labeled[c] = true;
        set.push(c);
    }
    let state = train::<T>(ds, &set, cfg)?.state;
    Ok((trace, state))
}
