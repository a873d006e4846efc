//! Spin-lattice ferroelectric simulator.
//!
//! Each site of an `N x N` lattice carries a two-component polarization
//! `(p_y, p_z)` (in-plane, out-of-plane) relaxing under Landau–Khalatnikov
//! dynamics `dp/dt = -gamma * dF/dp` in a double-well Landau free energy with
//! nearest-neighbour gradient coupling, a mean-field depolarization penalty on
//! the lattice-average out-of-plane polarization and per-site defect fields.
//!
//! Domain patterns are parameterized by `K` (position of a diagonal c–c wall)
//! and `P` (period of anti-diagonal a-domain stripes). a-domains carry a strong
//! in-plane defect field that locks them in-plane; c-domains carry a weak
//! imprint field anti-parallel to their initial polarization.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Mechanism, MechanismKind, PatchSet};
use crate::error::{Error, Result};

pub const K_MIN: i32 = -14;
pub const K_MAX: i32 = 14;
pub const P_MIN: u32 = 1;
pub const P_MAX: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeConfig {
    pub size: usize,
    /// Quadratic Landau coefficient of `p_z` (negative for a double well).
    pub a1: f64,
    /// Quadratic coefficient of the in-plane component `p_y` (hard axis when positive).
    pub a1_inplane: f64,
    /// Quartic Landau coefficient.
    pub a11: f64,
    /// Biquadratic `p_y^2 p_z^2` coupling; stiffens `p_z` on in-plane sites.
    pub a12: f64,
    pub k_grad: f64,
    pub alpha_dep: f64,
    pub gamma: f64,
    /// a-domain in-plane defect field, in units of the coercive field.
    pub a_defect: f64,
    /// c-domain imprint field, in units of the coercive field.
    pub c_imprint: f64,
    pub dt: f64,
    pub substeps: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            size: 15,
            a1: -1.0,
            a1_inplane: 1.0,
            a11: 1.0,
            a12: 8.0,
            k_grad: 0.02,
            alpha_dep: 0.2,
            gamma: 1.0,
            a_defect: 30.0,
            c_imprint: 0.1,
            dt: 0.01,
            substeps: 50,
        }
    }
}

impl LatticeConfig {
    pub fn coercive_field(&self) -> Result<f64> {
        coercive_field(self.a1, self.a11)
    }

    /// Magnitude of the single-site spontaneous polarization `sqrt(|a1| / a11)`.
    pub fn spontaneous_polarization(&self) -> f64 {
        (-self.a1 / self.a11).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        coercive_field(self.a1, self.a11)?;
        if self.size < 1 {
            return Err(Error::Config("lattice size must be >= 1".into()));
        }
        if self.alpha_dep < 0.0 || self.k_grad < 0.0 || self.a12 < 0.0 {
            return Err(Error::Config("coupling coefficients must be nonnegative".into()));
        }
        if !(self.gamma > 0.0 && self.dt > 0.0) || self.substeps == 0 {
            return Err(Error::Config("gamma, dt and substeps must be positive".into()));
        }
        Ok(())
    }
}

/// Spinodal field of the single-site double well `(a1/2) p^2 + (a11/4) p^4 - E p`.
pub fn coercive_field(a1: f64, a11: f64) -> Result<f64> {
    if !(a1 < 0.0 && a11 > 0.0) {
        return Err(Error::InvalidCoefficients { a1, a11 });
    }
    let m = -a1;
    Ok(2.0 / 3.0 * m * (m / (3.0 * a11)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteKind {
    A,
    C,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainPattern {
    pub k: i32,
    pub p: u32,
    pub size: usize,
    pub kinds: Vec<SiteKind>,
    /// Initial `(p_y, p_z)` per site.
    pub initial: Vec<[f64; 2]>,
    /// Defect field `(E_y, E_z)` per site, absolute units.
    pub defect: Vec<[f64; 2]>,
    /// Sign of initial `p_z` of the c-pattern before the a-overlay: -1, 0 (wall) or +1.
    pub c_image: Vec<f64>,
    /// 1 on a-domain sites, 0 elsewhere.
    pub a_image: Vec<f64>,
}

impl DomainPattern {
    pub fn a_fraction(&self) -> f64 {
        self.a_image.iter().sum::<f64>() / self.a_image.len() as f64
    }
}

/// Sign of the c-pattern at `(r, c)`: up above the wall line `c - r = K`,
/// down below it, zero on the wall itself.
pub fn c_sign(row: usize, col: usize, k: i32) -> f64 {
    let d = col as i64 - row as i64 - k as i64;
    match d.cmp(&0) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Less => -1.0,
        std::cmp::Ordering::Equal => 0.0,
    }
}

pub fn is_a_site(row: usize, col: usize, p: u32) -> bool {
    (row + col) % p as usize == 0
}

fn check_kp(k: i32, p: u32) -> Result<()> {
    if !(K_MIN..=K_MAX).contains(&k) {
        return Err(Error::OutOfRange(format!("K = {k} outside [{K_MIN}, {K_MAX}]")));
    }
    if !(P_MIN..=P_MAX).contains(&p) {
        return Err(Error::OutOfRange(format!("P = {p} outside [{P_MIN}, {P_MAX}]")));
    }
    Ok(())
}

/// Overlapped (K, P) pattern: the c-pattern overwritten by the a-stripes.
pub fn make_pattern(k: i32, p: u32, config: &LatticeConfig) -> Result<DomainPattern> {
    check_kp(k, p)?;
    build_pattern(k, Some(p), config)
}

/// c-pattern only, no a-domains.
pub fn make_c_pattern(k: i32, config: &LatticeConfig) -> Result<DomainPattern> {
    check_kp(k, P_MAX)?;
    build_pattern(k, None, config)
}

/// a-stripes over a uniform c-pattern (all sites initially down, as for `K = 14`).
pub fn make_a_pattern(p: u32, config: &LatticeConfig) -> Result<DomainPattern> {
    check_kp(K_MAX, p)?;
    let mut pat = build_pattern(K_MAX, Some(p), config)?;
    // K_MAX leaves one wall site in the corner; the a-sweep wants uniform c.
    let ec = config.coercive_field()?;
    for i in 0..pat.kinds.len() {
        if pat.kinds[i] == SiteKind::C && pat.c_image[i] == 0.0 {
            pat.c_image[i] = -1.0;
            pat.initial[i] = [0.0, -config.spontaneous_polarization()];
            pat.defect[i] = [0.0, config.c_imprint * ec];
        }
    }
    Ok(pat)
}

fn build_pattern(k: i32, p: Option<u32>, config: &LatticeConfig) -> Result<DomainPattern> {
    let n = config.size;
    let ec = config.coercive_field()?;
    let ps = config.spontaneous_polarization();
    let mut kinds = Vec::with_capacity(n * n);
    let mut initial = Vec::with_capacity(n * n);
    let mut defect = Vec::with_capacity(n * n);
    let mut c_image = Vec::with_capacity(n * n);
    let mut a_image = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            let s = c_sign(r, c, k);
            c_image.push(s);
            let a = p.is_some_and(|p| is_a_site(r, c, p));
            a_image.push(if a { 1.0 } else { 0.0 });
            if a {
                kinds.push(SiteKind::A);
                initial.push([ps, 0.0]);
                defect.push([config.a_defect * ec, 0.0]);
            } else {
                kinds.push(SiteKind::C);
                initial.push([0.0, s * ps]);
                defect.push([0.0, -s * config.c_imprint * ec]);
            }
        }
    }
    Ok(DomainPattern { k, p: p.unwrap_or(0), size: n, kinds, initial, defect, c_image, a_image })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldWaveform {
    /// Amplitude in units of the coercive field.
    pub amplitude: f64,
    pub periods: usize,
    pub samples_per_period: usize,
}

impl Default for FieldWaveform {
    fn default() -> Self {
        Self { amplitude: 2.0, periods: 2, samples_per_period: 200 }
    }
}

impl FieldWaveform {
    pub fn len(&self) -> usize {
        self.periods * self.samples_per_period + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Applied field at sample `i` in absolute units.
    pub fn field(&self, i: usize, ec: f64) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * i as f64 / self.samples_per_period as f64;
        self.amplitude * ec * phase.sin()
    }

    fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0) || self.periods < 1 || self.samples_per_period < 2 {
            return Err(Error::Config("waveform needs amplitude > 0, periods >= 1, samples >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopTrace {
    pub field: Vec<f64>,
    pub polarization: Vec<f64>,
    pub samples_per_period: usize,
}

/// Mutable lattice state with its fixed site fields.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub config: LatticeConfig,
    pub p: Vec<[f64; 2]>,
    pub defect: Vec<[f64; 2]>,
    neighbors: Vec<Vec<usize>>,
    force: Vec<[f64; 2]>,
}

impl Lattice {
    pub fn new(pattern: &DomainPattern, config: &LatticeConfig) -> Result<Self> {
        config.validate()?;
        let n = pattern.size;
        if n != config.size {
            return Err(Error::ShapeMismatch(format!(
                "pattern size {n} != lattice size {}",
                config.size
            )));
        }
        Ok(Self::from_parts(pattern.initial.clone(), pattern.defect.clone(), config))
    }

    pub fn from_parts(p: Vec<[f64; 2]>, defect: Vec<[f64; 2]>, config: &LatticeConfig) -> Self {
        let n = config.size;
        let mut neighbors = vec![Vec::with_capacity(4); n * n];
        for r in 0..n {
            for c in 0..n {
                let i = r * n + c;
                if r > 0 {
                    neighbors[i].push(i - n);
                }
                if r + 1 < n {
                    neighbors[i].push(i + n);
                }
                if c > 0 {
                    neighbors[i].push(i - 1);
                }
                if c + 1 < n {
                    neighbors[i].push(i + 1);
                }
            }
        }
        let force = vec![[0.0; 2]; p.len()];
        Self { config: *config, p, defect, neighbors, force }
    }

    pub fn mean_pz(&self) -> f64 {
        self.p.iter().map(|q| q[1]).sum::<f64>() / self.p.len() as f64
    }

    pub fn max_magnitude(&self) -> f64 {
        self.p.iter().map(|q| q[0].hypot(q[1])).fold(0.0, f64::max)
    }

    /// Total free energy at applied out-of-plane field `e`.
    pub fn free_energy(&self, e: f64) -> f64 {
        let c = &self.config;
        let mut f = 0.0;
        for (i, q) in self.p.iter().enumerate() {
            let (y, z) = (q[0], q[1]);
            let (y2, z2) = (y * y, z * z);
            f += 0.5 * (c.a1_inplane * y2 + c.a1 * z2) + 0.25 * c.a11 * (y2 * y2 + z2 * z2) + 0.5 * c.a12 * y2 * z2
                - self.defect[i][0] * y
                - (e + self.defect[i][1]) * z;
            for &j in &self.neighbors[i] {
                if j > i {
                    let dy = y - self.p[j][0];
                    let dz = z - self.p[j][1];
                    f += 0.5 * c.k_grad * (dy * dy + dz * dz);
                }
            }
        }
        let n2 = self.p.len() as f64;
        let m = self.mean_pz();
        f + 0.5 * c.alpha_dep * n2 * m * m
    }

    /// One forward-Euler step of the relaxation at field `e`.
    pub fn step(&mut self, e: f64) {
        let c = self.config;
        let m = self.mean_pz();
        for i in 0..self.p.len() {
            let [y, z] = self.p[i];
            let (y2, z2) = (y * y, z * z);
            let mut gy = c.a1_inplane * y + c.a11 * y2 * y + c.a12 * y * z2 - self.defect[i][0];
            let mut gz = c.a1 * z + c.a11 * z2 * z + c.a12 * z * y2 - e - self.defect[i][1]
                + c.alpha_dep * m;
            for &j in &self.neighbors[i] {
                gy += c.k_grad * (y - self.p[j][0]);
                gz += c.k_grad * (z - self.p[j][1]);
            }
            self.force[i] = [gy, gz];
        }
        let h = c.gamma * c.dt;
        for (q, g) in self.p.iter_mut().zip(&self.force) {
            q[0] -= h * g[0];
            q[1] -= h * g[1];
        }
    }
}

/// Drive `pattern` with `waveform` and record the lattice-average `p_z` at every field sample.
pub fn simulate(pattern: &DomainPattern, waveform: &FieldWaveform, config: &LatticeConfig) -> Result<LoopTrace> {
    simulate_with(pattern, waveform, config, |_, _| {})
}

/// [`simulate`] with an observer called after every field sample.
pub fn simulate_with(
    pattern: &DomainPattern,
    waveform: &FieldWaveform,
    config: &LatticeConfig,
    mut observe: impl FnMut(usize, &Lattice),
) -> Result<LoopTrace> {
    waveform.validate()?;
    let mut lattice = Lattice::new(pattern, config)?;
    let ec = config.coercive_field()?;
    let limit = 10.0 * config.spontaneous_polarization();
    let mut field = Vec::with_capacity(waveform.len());
    let mut polarization = Vec::with_capacity(waveform.len());
    for i in 0..waveform.len() {
        let e = waveform.field(i, ec);
        if i > 0 {
            for _ in 0..config.substeps {
                lattice.step(e);
            }
        }
        let mag = lattice.max_magnitude();
        if !mag.is_finite() || mag > limit {
            return Err(Error::NumericalBlowup { sample: i, magnitude: mag });
        }
        observe(i, &lattice);
        field.push(e);
        polarization.push(lattice.mean_pz());
    }
    Ok(LoopTrace { field, polarization, samples_per_period: waveform.samples_per_period })
}

/// Absolute shoelace area of the `(E, <p_z>)` contour over the final full period.
pub fn loop_area(trace: &LoopTrace) -> Result<f64> {
    let spp = trace.samples_per_period;
    let needed = 2 * spp + 1;
    let n = trace.field.len().min(trace.polarization.len());
    if spp < 2 || n < needed {
        return Err(Error::InsufficientTrace { needed, got: n });
    }
    let start = n - 1 - spp;
    Ok(shoelace(&trace.field[start..n], &trace.polarization[start..n]))
}

/// Absolute area enclosed by the closed polygon through `(x_i, y_i)`.
pub fn shoelace(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 3 {
        return 0.0;
    }
    // x_i (y_{i+1} - y_{i-1}) form: exactly zero when y is constant.
    let mut acc = 0.0;
    for i in 0..n {
        acc += x[i] * (y[(i + 1) % n] - y[(i + n - 1) % n]);
    }
    0.5 * acc.abs()
}

/// Loop areas of the two isolated ground-truth sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `(K, A_c(K))`: c-pattern only, no a-domains.
    pub c_sweep: Vec<(i32, f64)>,
    /// `(P, A_a(P))`: a-stripes over uniform c-polarization.
    pub a_sweep: Vec<(u32, f64)>,
}

pub fn c_sweep(k_values: &[i32], waveform: &FieldWaveform, config: &LatticeConfig) -> Result<Vec<(i32, f64)>> {
    k_values
        .iter()
        .map(|&k| {
            let pat = make_c_pattern(k, config)?;
            Ok((k, loop_area(&simulate(&pat, waveform, config)?)?))
        })
        .collect()
}

pub fn a_sweep(p_values: &[u32], waveform: &FieldWaveform, config: &LatticeConfig) -> Result<Vec<(u32, f64)>> {
    p_values
        .iter()
        .map(|&p| {
            let pat = make_a_pattern(p, config)?;
            Ok((p, loop_area(&simulate(&pat, waveform, config)?)?))
        })
        .collect()
}

pub fn ground_truth_sweeps(waveform: &FieldWaveform, config: &LatticeConfig) -> Result<GroundTruth> {
    let ks: Vec<i32> = (K_MIN..=K_MAX).collect();
    let ps: Vec<u32> = (P_MIN..=P_MAX).collect();
    Ok(GroundTruth { c_sweep: c_sweep(&ks, waveform, config)?, a_sweep: a_sweep(&ps, waveform, config)? })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FerroSample {
    pub k: i32,
    pub p: u32,
    pub c_image: Vec<f64>,
    pub a_image: Vec<f64>,
    pub loop_area: f64,
}

/// Simulate every `(K, P)` pair (K-major order) and record both channel images and the loop area.
pub fn build_ferrosim_dataset(
    k_values: &[i32],
    p_values: &[u32],
    waveform: &FieldWaveform,
    config: &LatticeConfig,
) -> Result<Vec<FerroSample>> {
    let mut out = Vec::with_capacity(k_values.len() * p_values.len());
    for &k in k_values {
        for &p in p_values {
            let pat = make_pattern(k, p, config)?;
            let area = loop_area(&simulate(&pat, waveform, config)?)?;
            out.push(FerroSample { k, p, c_image: pat.c_image, a_image: pat.a_image, loop_area: area });
        }
    }
    Ok(out)
}

/// Packs a K-major `(K, P)` sweep into a grid dataset: rows index K, columns index P,
/// with the c-pattern and a-mask as two single-channel image mechanisms.
pub fn to_dataset(samples: &[FerroSample], k_values: &[i32], p_values: &[u32], size: usize) -> Result<Dataset> {
    let (rows, cols) = (k_values.len(), p_values.len());
    if samples.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!("{} samples for a {rows}x{cols} grid", samples.len())));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.k != k_values[i / cols] || s.p != p_values[i % cols] {
            return Err(Error::ShapeMismatch(format!("sample {i} is not in K-major order")));
        }
    }
    let channel = |name: &str, get: fn(&FerroSample) -> &Vec<f64>| Mechanism {
        name: name.to_string(),
        kind: MechanismKind::Image(PatchSet {
            channels: 1,
            size,
            pixels: samples.iter().flat_map(|s| get(s).iter().map(|&v| v as f32)).collect(),
        }),
        labels: None,
        categories: Vec::new(),
        component: None,
    };
    let targets: Vec<f64> = samples.iter().map(|s| s.loop_area).collect();
    let ds = Dataset {
        name: "ferrosim".into(),
        rows,
        cols,
        mechanisms: vec![channel("c_domain", |s| &s.c_image), channel("a_domain", |s| &s.a_image)],
        clean: targets.clone(),
        targets,
        seed: 0,
        noise_sigma: 0.0,
        row_values: k_values.iter().map(|&k| k as f64).collect(),
        col_values: p_values.iter().map(|&p| p as f64).collect(),
    };
    ds.validate()?;
    Ok(ds)
}
