//! CSV tables and heatmap rasters.

use std::fmt::Write as _;
use std::fs;

use anyhow::{ensure, Result};
use divide_core::dataset::fmt;

use crate::manifest::Run;

/// Minimal CSV builder; every field is numeric or a plain identifier.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, run: &mut Run, name: &str) -> Result<()> {
        fs::write(run.file(name), &self.text)?;
        Ok(())
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Writes `{name}.csv` (the raw `rows x cols` grid) and `{name}.png` (8-bit grayscale, min-max scaled).
pub fn heatmap(run: &mut Run, name: &str, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    ensure!(values.len() == rows * cols, "heatmap {name}: {} values for a {rows}x{cols} grid", values.len());
    let mut csv = String::new();
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(|&v| fmt(v)).collect();
        writeln!(csv, "{}", line.join(","))?;
    }
    fs::write(run.file(&format!("{name}.csv")), csv)?;

    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = values
        .iter()
        .map(|&v| if v.is_finite() { ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect();
    image::save_buffer(
        run.file(&format!("{name}.png")),
        &pixels,
        cols as u32,
        rows as u32,
        image::ExtendedColorType::L8,
    )?;
    Ok(())
}
