//! Grid datasets shared by the synthetic benchmarks and FerroSim, plus their on-disk format.
//!
//! A dataset directory holds `cells.csv` (one record per grid cell), `patches.bin`
//! (all image-mechanism pixels) and `dataset.json` (metadata needed to reload).
//!
//! `patches.bin` layout, little-endian:
//! magic `DVPA`, u32 version, u32 rows, u32 cols, u32 mechanism count, then per
//! mechanism u32 name length, name bytes, u32 channels, u32 patch size; then for
//! each mechanism in order the pixels of every cell in row-major cell order as f32
//! `[cells, channels, size, size]`.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PATCH_MAGIC: &[u8; 4] = b"DVPA";
pub const PATCH_VERSION: u32 = 1;

/// Per-cell image patches of one mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub channels: usize,
    pub size: usize,
    /// `[cells, channels, size, size]`
    pub pixels: Vec<f32>,
}

impl PatchSet {
    pub fn patch_len(&self) -> usize {
        self.channels * self.size * self.size
    }

    pub fn patch(&self, cell: usize) -> &[f32] {
        let n = self.patch_len();
        &self.pixels[cell * n..(cell + 1) * n]
    }

    pub fn cells(&self) -> usize {
        self.pixels.len() / self.patch_len()
    }

    /// Patches of `cells`, in that order.
    pub fn select(&self, cells: &[usize]) -> PatchSet {
        let mut pixels = Vec::with_capacity(cells.len() * self.patch_len());
        for &c in cells {
            pixels.extend_from_slice(self.patch(c));
        }
        PatchSet { channels: self.channels, size: self.size, pixels }
    }

    /// Unique patches among `cells` (first-occurrence order) and, per cell, the index of its unique patch.
    pub fn dedup(&self, cells: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let mut seen: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut uniq = Vec::new();
        let mut index = Vec::with_capacity(cells.len());
        for &c in cells {
            let key: Vec<u32> = self.patch(c).iter().map(|v| v.to_bits()).collect();
            let next = uniq.len();
            let id = *seen.entry(key).or_insert_with(|| {
                uniq.push(c);
                next
            });
            index.push(id);
        }
        (uniq, index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MechanismKind {
    Image(PatchSet),
    /// Normalized grid coordinates, derived from the cell position.
    Coordinates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub name: String,
    pub kind: MechanismKind,
    /// Category label per cell, when the mechanism is categorical.
    pub labels: Option<Vec<u32>>,
    pub categories: Vec<String>,
    /// Ground-truth contribution per cell, when known.
    pub component: Option<Vec<f64>>,
}

impl Mechanism {
    pub fn is_coordinates(&self) -> bool {
        matches!(self.kind, MechanismKind::Coordinates)
    }

    pub fn patches(&self) -> Option<&PatchSet> {
        match &self.kind {
            MechanismKind::Image(p) => Some(p),
            MechanismKind::Coordinates => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub mechanisms: Vec<MechanismMeta>,
    /// Free-form axis labels (e.g. K and P values for FerroSim grids).
    #[serde(default)]
    pub row_values: Vec<f64>,
    #[serde(default)]
    pub col_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismMeta {
    pub name: String,
    pub kind: String,
    pub categories: Vec<String>,
    pub has_labels: bool,
    pub has_component: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub mechanisms: Vec<Mechanism>,
    pub targets: Vec<f64>,
    /// Targets before observation noise.
    pub clean: Vec<f64>,
    pub seed: u64,
    pub noise_sigma: f64,
    pub row_values: Vec<f64>,
    pub col_values: Vec<f64>,
}

/// Maps a grid index onto [-1, 1]: `x = 2 col / (cols - 1) - 1`, `y = 2 row / (rows - 1) - 1`.
pub fn normalize_coords(row: usize, col: usize, rows: usize, cols: usize) -> Result<(f64, f64)> {
    if row >= rows || col >= cols {
        return Err(Error::OutOfRange(format!("cell ({row}, {col}) outside {rows}x{cols} grid")));
    }
    let f = |i: usize, n: usize| if n <= 1 { 0.0 } else { 2.0 * i as f64 / (n - 1) as f64 - 1.0 };
    Ok((f(col, cols), f(row, rows)))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    pub fn coords(&self, index: usize) -> (f64, f64) {
        let (r, c) = self.cell(index);
        normalize_coords(r, c, self.rows, self.cols).expect("cell index in range")
    }

    pub fn has_coordinates(&self) -> bool {
        self.mechanisms.iter().any(Mechanism::is_coordinates)
    }

    pub fn mechanism(&self, name: &str) -> Option<(usize, &Mechanism)> {
        self.mechanisms.iter().enumerate().find(|(_, m)| m.name == name)
    }

    pub fn image_mechanisms(&self) -> impl Iterator<Item = &Mechanism> {
        self.mechanisms.iter().filter(|m| !m.is_coordinates())
    }

    /// Checks extents and that known components sum to the clean targets.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.targets.len() != n || self.clean.len() != n {
            return Err(Error::ShapeMismatch(format!("expected {n} targets")));
        }
        for m in &self.mechanisms {
            if let Some(p) = m.patches() {
                if p.pixels.len() != n * p.patch_len() {
                    return Err(Error::ShapeMismatch(format!("mechanism `{}` patch count", m.name)));
                }
            }
            if m.component.as_ref().is_some_and(|c| c.len() != n) || m.labels.as_ref().is_some_and(|l| l.len() != n) {
                return Err(Error::ShapeMismatch(format!("mechanism `{}` per-cell arrays", m.name)));
            }
        }
        if self.mechanisms.iter().all(|m| m.component.is_some()) && !self.mechanisms.is_empty() {
            for i in 0..n {
                let s: f64 = self.mechanisms.iter().map(|m| m.component.as_ref().unwrap()[i]).sum();
                if s != self.clean[i] {
                    return Err(Error::DegenerateInput(format!("components do not sum to target at cell {i}")));
                }
            }
        }
        Ok(())
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            name: self.name.clone(),
            rows: self.rows,
            cols: self.cols,
            seed: self.seed,
            noise_sigma: self.noise_sigma,
            mechanisms: self
                .mechanisms
                .iter()
                .map(|m| MechanismMeta {
                    name: m.name.clone(),
                    kind: if m.is_coordinates() { "coordinates".into() } else { "image".into() },
                    categories: m.categories.clone(),
                    has_labels: m.labels.is_some(),
                    has_component: m.component.is_some(),
                })
                .collect(),
            row_values: self.row_values.clone(),
            col_values: self.col_values.clone(),
        }
    }

    /// Writes `cells.csv`, `patches.bin` and `dataset.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        fs::create_dir_all(dir)?;
        self.write_cells_csv(&dir.join("cells.csv"))?;
        self.write_patches(&dir.join("patches.bin"))?;
        fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&self.meta())? + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join("dataset.json"))?)?;
        let n = meta.rows * meta.cols;
        let mut patches = read_patches(&dir.join("patches.bin"))?;
        let mut rdr = csv::Reader::from_path(dir.join("cells.csv"))?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| Error::Format(format!("cells.csv lacks column `{name}`")))
        };
        let (ti, ci) = (col("target")?, col("clean")?);
        let mut targets = Vec::with_capacity(n);
        let mut clean = Vec::with_capacity(n);
        let mut labels: Vec<Vec<u32>> = vec![Vec::new(); meta.mechanisms.len()];
        let mut comps: Vec<Vec<f64>> = vec![Vec::new(); meta.mechanisms.len()];
        let label_cols: Vec<Option<usize>> = meta
            .mechanisms
            .iter()
            .map(|m| if m.has_labels { col(&format!("label_{}", m.name)).ok() } else { None })
            .collect();
        let comp_cols: Vec<Option<usize>> = meta
            .mechanisms
            .iter()
            .map(|m| if m.has_component { col(&format!("component_{}", m.name)).ok() } else { None })
            .collect();
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("bad number `{s}`: {e}")));
        for rec in rdr.records() {
            let rec = rec?;
            targets.push(parse(&rec[ti])?);
            clean.push(parse(&rec[ci])?);
            for (k, lc) in label_cols.iter().enumerate() {
                if let Some(j) = lc {
                    let cat = &rec[*j];
                    let id = meta.mechanisms[k].categories.iter().position(|c| c == cat);
                    labels[k].push(id.ok_or_else(|| Error::Format(format!("unknown category `{cat}`")))? as u32);
                }
            }
            for (k, cc) in comp_cols.iter().enumerate() {
                if let Some(j) = cc {
                    comps[k].push(parse(&rec[*j])?);
                }
            }
        }
        if targets.len() != n {
            return Err(Error::Format(format!("cells.csv has {} rows, expected {n}", targets.len())));
        }
        let mut mechanisms = Vec::new();
        for (k, m) in meta.mechanisms.iter().enumerate() {
            let kind = if m.kind == "coordinates" {
                MechanismKind::Coordinates
            } else {
                let pos = patches.iter().position(|(name, _)| name == &m.name);
                let (_, p) = patches.remove(pos.ok_or_else(|| Error::Format(format!("no patches for `{}`", m.name)))?);
                MechanismKind::Image(p)
            };
            mechanisms.push(Mechanism {
                name: m.name.clone(),
                kind,
                labels: m.has_labels.then(|| std::mem::take(&mut labels[k])),
                categories: m.categories.clone(),
                component: m.has_component.then(|| std::mem::take(&mut comps[k])),
            });
        }
        let ds = Dataset {
            name: meta.name,
            rows: meta.rows,
            cols: meta.cols,
            mechanisms,
            targets,
            clean,
            seed: meta.seed,
            noise_sigma: meta.noise_sigma,
            row_values: meta.row_values,
            col_values: meta.col_values,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn write_cells_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["row".to_string(), "col".into(), "x_norm".into(), "y_norm".into()];
        for m in &self.mechanisms {
            if m.labels.is_some() {
                header.push(format!("label_{}", m.name));
            }
        }
        header.push("target".into());
        header.push("clean".into());
        for m in &self.mechanisms {
            if m.component.is_some() {
                header.push(format!("component_{}", m.name));
            }
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let (r, c) = self.cell(i);
            let (x, y) = self.coords(i);
            let mut rec = vec![r.to_string(), c.to_string(), fmt(x), fmt(y)];
            for m in &self.mechanisms {
                if let Some(l) = &m.labels {
                    rec.push(m.categories[l[i] as usize].clone());
                }
            }
            rec.push(fmt(self.targets[i]));
            rec.push(fmt(self.clean[i]));
            for m in &self.mechanisms {
                if let Some(cmp) = &m.component {
                    rec.push(fmt(cmp[i]));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_patches(&self, path: &Path) -> Result<()> {
        let images: Vec<(&str, &PatchSet)> =
            self.mechanisms.iter().filter_map(|m| m.patches().map(|p| (m.name.as_str(), p))).collect();
        let mut buf = Vec::new();
        buf.extend_from_slice(PATCH_MAGIC);
        for v in [PATCH_VERSION, self.rows as u32, self.cols as u32, images.len() as u32] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for (name, p) in &images {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(p.channels as u32).to_le_bytes());
            buf.extend_from_slice(&(p.size as u32).to_le_bytes());
        }
        for (_, p) in &images {
            for v in &p.pixels {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }
}

/// Full-precision decimal that round-trips through `str::parse`.
pub fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a patch archive into `(mechanism name, patches)` pairs.
pub fn read_patches(path: &Path) -> Result<Vec<(String, PatchSet)>> {
    let bytes = fs::read(path)?;
    let mut r = bytes.as_slice();
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != PATCH_MAGIC {
        return Err(Error::Format("patch archive: bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != PATCH_VERSION {
        return Err(Error::Format(format!("patch archive: unsupported version {version}")));
    }
    let cells = read_u32(&mut r)? as usize * read_u32(&mut r)? as usize;
    let count = read_u32(&mut r)? as usize;
    let mut heads = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        heads.push((name, read_u32(&mut r)? as usize, read_u32(&mut r)? as usize));
    }
    let mut out = Vec::with_capacity(count);
    for (name, channels, size) in heads {
        let n = cells * channels * size * size;
        if r.len() < 4 * n {
            return Err(Error::Format("patch archive truncated".into()));
        }
        let (data, rest) = r.split_at(4 * n);
        r = rest;
        let pixels = data.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        out.push((name, PatchSet { channels, size, pixels }));
    }
    if !r.is_empty() {
        return Err(Error::Format("patch archive has trailing bytes".into()));
    }
    Ok(out)
}
