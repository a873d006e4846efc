//! Synthetic benchmark generation: mechanism fields, patch mosaics and composed targets.

mod glyphs;

pub use glyphs::{render as render_glyph, Suit};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Mechanism, MechanismKind, PatchSet};
use crate::error::{Error, Result};

pub const RGB_NAMES: [&str; 3] = ["red", "green", "blue"];
pub const RGB_BASE: [f64; 3] = [150.0, 110.0, 50.0];
pub const SUIT_BASE: [f64; 4] = [40.0, 80.0, 120.0, 160.0];

const STREAM_LABELS: u64 = 1;
const STREAM_TRANSFORM: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_SUIT_LABELS: u64 = 4;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Planar field affine in `row + col`: `lo` at (0, 0), `hi` at the opposite corner.
pub fn linear_field(rows: usize, cols: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if rows < 2 || cols < 2 {
        return Err(Error::OutOfRange("linear field needs at least 2x2 cells".into()));
    }
    let span = (rows + cols - 2) as f64;
    Ok((0..rows * cols).map(|i| lo + (hi - lo) * ((i / cols) + (i % cols)) as f64 / span).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StressFieldParams {
    /// Weld centre column, grid units.
    pub x0: f64,
    /// Weld centre row, grid units.
    pub y0: f64,
    pub sigma_tensile: f64,
    pub r_tensile: f64,
    pub sigma_compressive: f64,
    pub r_compressive: f64,
}

impl Default for StressFieldParams {
    fn default() -> Self {
        Self { x0: 60.0, y0: 40.0, sigma_tensile: 200.0, r_tensile: 10.0, sigma_compressive: -50.0, r_compressive: 30.0 }
    }
}

impl StressFieldParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_tensile > 0.0 && self.r_compressive > 0.0) {
            return Err(Error::OutOfRange("stress radii must be positive".into()));
        }
        Ok(())
    }

    /// Stress at grid position `(x, y)` = (column, row).
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let d2 = (x - self.x0).powi(2) + (y - self.y0).powi(2);
        self.sigma_tensile * (-d2 / (2.0 * self.r_tensile.powi(2))).exp()
            + self.sigma_compressive * (-d2 / (2.0 * self.r_compressive.powi(2))).exp()
    }

    /// Weld centre in normalized coordinates of a `rows x cols` grid.
    pub fn center_normalized(&self, rows: usize, cols: usize) -> (f64, f64) {
        (2.0 * self.x0 / (cols - 1) as f64 - 1.0, 2.0 * self.y0 / (rows - 1) as f64 - 1.0)
    }
}

/// Tensile peak plus compressive trough, both centred on the weld, in raw grid units.
pub fn stress_field(rows: usize, cols: usize, p: &StressFieldParams) -> Result<Vec<f64>> {
    p.validate()?;
    Ok((0..rows * cols).map(|i| p.at((i % cols) as f64, (i / cols) as f64)).collect())
}

/// Categorical patch grid with per-category base values.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMosaic {
    pub rows: usize,
    pub cols: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub categories: Vec<String>,
    pub labels: Vec<u32>,
    /// `[cells, channels, u, u]`, values in [0, 1].
    pub pixels: Vec<f32>,
    pub base_values: Vec<f64>,
}

impl PatchMosaic {
    pub fn into_mechanism(self, name: &str) -> Mechanism {
        Mechanism {
            name: name.to_string(),
            kind: MechanismKind::Image(PatchSet { channels: self.channels, size: self.patch_size, pixels: self.pixels }),
            labels: Some(self.labels),
            categories: self.categories,
            component: Some(self.base_values),
        }
    }
}

/// Uniformly coloured red/green/blue cells with default base values 150/110/50.
pub fn rgb_mosaic(rows: usize, cols: usize, patch_size: usize, seed: u64) -> Result<PatchMosaic> {
    rgb_mosaic_with(rows, cols, patch_size, seed, RGB_BASE)
}

pub fn rgb_mosaic_with(rows: usize, cols: usize, patch_size: usize, seed: u64, base: [f64; 3]) -> Result<PatchMosaic> {
    if patch_size < 1 {
        return Err(Error::OutOfRange("patch size must be at least 1".into()));
    }
    let n = rows * cols;
    let mut r = rng(seed, STREAM_LABELS);
    let labels: Vec<u32> = (0..n).map(|_| r.gen_range(0..3u32)).collect();
    let plane = patch_size * patch_size;
    let mut pixels = vec![0f32; n * 3 * plane];
    for (i, &l) in labels.iter().enumerate() {
        let off = i * 3 * plane + l as usize * plane;
        pixels[off..off + plane].fill(1.0);
    }
    Ok(PatchMosaic {
        rows,
        cols,
        patch_size,
        channels: 3,
        categories: RGB_NAMES.iter().map(|s| s.to_string()).collect(),
        base_values: labels.iter().map(|&l| base[l as usize]).collect(),
        labels,
        pixels,
    })
}

/// Card-suit glyphs with random rotation in ±30° and shear in ±0.2.
pub fn suit_mosaic(rows: usize, cols: usize, patch_size: usize, seed: u64) -> Result<PatchMosaic> {
    suit_mosaic_with(rows, cols, patch_size, seed, SUIT_BASE)
}

pub fn suit_mosaic_with(rows: usize, cols: usize, patch_size: usize, seed: u64, base: [f64; 4]) -> Result<PatchMosaic> {
    if patch_size < 8 {
        return Err(Error::OutOfRange("suit glyphs need patch size >= 8".into()));
    }
    let n = rows * cols;
    let mut lr = rng(seed, STREAM_SUIT_LABELS);
    let labels: Vec<u32> = (0..n).map(|_| lr.gen_range(0..4u32)).collect();
    let mut tr = rng(seed, STREAM_TRANSFORM);
    let max_angle = 30f64.to_radians();
    let mut pixels = Vec::with_capacity(n * patch_size * patch_size);
    for &l in &labels {
        let angle = tr.gen_range(-max_angle..=max_angle);
        let shear = tr.gen_range(-0.2..=0.2);
        pixels.extend(render_glyph(Suit::ALL[l as usize], patch_size, angle, shear));
    }
    Ok(PatchMosaic {
        rows,
        cols,
        patch_size,
        channels: 1,
        categories: Suit::ALL.iter().map(|s| s.name().to_string()).collect(),
        base_values: labels.iter().map(|&l| base[l as usize]).collect(),
        labels,
        pixels,
    })
}

/// Coordinate mechanism carrying a scalar spatial field as its component.
pub fn spatial_mechanism(field: Vec<f64>) -> Mechanism {
    Mechanism {
        name: "spatial".into(),
        kind: MechanismKind::Coordinates,
        labels: None,
        categories: Vec::new(),
        component: Some(field),
    }
}

/// Sums mechanism components into targets and adds seeded Gaussian noise of std `noise_sigma`.
pub fn compose(
    name: &str,
    rows: usize,
    cols: usize,
    mechanisms: Vec<Mechanism>,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    let n = rows * cols;
    if noise_sigma < 0.0 {
        return Err(Error::OutOfRange("noise sigma must be nonnegative".into()));
    }
    let mut clean = vec![0.0; n];
    for m in &mechanisms {
        let c = m.component.as_ref().ok_or_else(|| Error::ShapeMismatch(format!("`{}` has no component", m.name)))?;
        if c.len() != n {
            return Err(Error::ShapeMismatch(format!("`{}` has {} cells, grid has {n}", m.name, c.len())));
        }
        for (t, v) in clean.iter_mut().zip(c) {
            *t += v;
        }
    }
    let targets = if noise_sigma > 0.0 {
        let mut r = rng(seed, STREAM_NOISE);
        let d = Normal::new(0.0, noise_sigma).map_err(|e| Error::OutOfRange(e.to_string()))?;
        clean.iter().map(|&c| c + d.sample(&mut r)).collect()
    } else {
        clean.clone()
    };
    let ds = Dataset {
        name: name.to_string(),
        rows,
        cols,
        mechanisms,
        targets,
        clean,
        seed,
        noise_sigma,
        row_values: Vec::new(),
        col_values: Vec::new(),
    };
    ds.validate()?;
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Benchmark {
    /// RGB mosaic + linear field.
    #[serde(rename = "1")]
    One,
    /// RGB mosaic + residual-stress field.
    #[serde(rename = "1.1")]
    OneOne,
    /// Suit mosaic + residual-stress field.
    #[serde(rename = "2")]
    Two,
    /// RGB + suits + residual stress.
    #[serde(rename = "three-mechanism")]
    Three,
}

impl std::str::FromStr for Benchmark {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Self::One),
            "1.1" => Ok(Self::OneOne),
            "2" => Ok(Self::Two),
            "three-mechanism" | "three" | "3" => Ok(Self::Three),
            _ => Err(Error::Config(format!("unknown benchmark `{s}`"))),
        }
    }
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Self::One => "1",
            Self::OneOne => "1.1",
            Self::Two => "2",
            Self::Three => "three-mechanism",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub benchmark: Benchmark,
    pub rows: usize,
    pub cols: usize,
    pub patch_size: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    /// Replace the spatial field by zeros (coordinates stay as an input).
    pub no_spatial: bool,
    pub linear_lo: f64,
    pub linear_hi: f64,
    pub stress: StressFieldParams,
    pub rgb_base: [f64; 3],
    pub suit_base: [f64; 4],
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            benchmark: Benchmark::One,
            rows: 100,
            cols: 100,
            patch_size: 16,
            seed: 0,
            noise_sigma: 0.0,
            no_spatial: false,
            linear_lo: 10.0,
            linear_hi: 300.0,
            stress: StressFieldParams::default(),
            rgb_base: RGB_BASE,
            suit_base: SUIT_BASE,
        }
    }
}

/// Builds the configured benchmark dataset.
pub fn generate(cfg: &BenchConfig) -> Result<Dataset> {
    let (rows, cols, u, seed) = (cfg.rows, cfg.cols, cfg.patch_size, cfg.seed);
    let spatial = match cfg.benchmark {
        _ if cfg.no_spatial => vec![0.0; rows * cols],
        Benchmark::One => linear_field(rows, cols, cfg.linear_lo, cfg.linear_hi)?,
        _ => stress_field(rows, cols, &cfg.stress)?,
    };
    let mut mechs = Vec::new();
    if matches!(cfg.benchmark, Benchmark::One | Benchmark::OneOne | Benchmark::Three) {
        mechs.push(rgb_mosaic_with(rows, cols, u, seed, cfg.rgb_base)?.into_mechanism("color"));
    }
    if matches!(cfg.benchmark, Benchmark::Two | Benchmark::Three) {
        mechs.push(suit_mosaic_with(rows, cols, u, seed, cfg.suit_base)?.into_mechanism("suit"));
    }
    mechs.push(spatial_mechanism(spatial));
    compose(&format!("benchmark-{}", cfg.benchmark.name()), rows, cols, mechs, cfg.noise_sigma, seed)
}

/// RGB mosaic, suit mosaic and residual-stress field composed additively.
pub fn three_mechanism_dataset(rows: usize, cols: usize, seed: u64) -> Result<Dataset> {
    generate(&BenchConfig { benchmark: Benchmark::Three, rows, cols, seed, ..BenchConfig::default() })
}
