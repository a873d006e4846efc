//! Procedural card-suit glyphs as implicit shapes on [-1, 1]² (y up).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Suit {
    Spades,
    Hearts,
    Diamonds,
    Clubs,
}

impl Suit {
    pub const ALL: [Suit; 4] = [Suit::Spades, Suit::Hearts, Suit::Diamonds, Suit::Clubs];

    pub fn name(self) -> &'static str {
        match self {
            Suit::Spades => "spades",
            Suit::Hearts => "hearts",
            Suit::Diamonds => "diamonds",
            Suit::Clubs => "clubs",
        }
    }

    /// Whether glyph-space point `(x, y)` is inked.
    pub fn contains(self, x: f64, y: f64) -> bool {
        match self {
            Suit::Hearts => heart(x, y + 0.05),
            Suit::Spades => heart(x, -(y - 0.15)) || stem(x, y),
            Suit::Diamonds => x.abs() / 0.55 + y.abs() / 0.8 <= 1.0,
            Suit::Clubs => {
                let disc = |cx: f64, cy: f64| (x - cx).powi(2) + (y - cy).powi(2) <= 0.27 * 0.27;
                disc(0.0, 0.33) || disc(-0.3, -0.08) || disc(0.3, -0.08) || stem(x, y)
            }
        }
    }
}

/// Heart curve `(u² + v² − 1)³ − u² v³ ≤ 0`, scaled to about 0.6 half-width.
fn heart(x: f64, y: f64) -> bool {
    let s = 0.55;
    let (u, v) = (x / s, y / s + 0.1);
    (u * u + v * v - 1.0).powi(3) - u * u * v.powi(3) <= 0.0
}

/// Small trapezoidal stem below the glyph body.
fn stem(x: f64, y: f64) -> bool {
    (-0.75..=-0.1).contains(&y) && x.abs() <= 0.06 + 0.25 * (-0.1 - y)
}

/// Renders a glyph into a `size x size` single-channel patch with 2x2 supersampling.
/// The glyph is rotated by `angle` (radians) and sheared by `shear` about the patch centre.
pub fn render(suit: Suit, size: usize, angle: f64, shear: f64) -> Vec<f32> {
    let (s, c) = angle.sin_cos();
    // Forward map A = R(angle) * [[1, shear], [0, 1]]; pixels are pulled through A^-1.
    let a = [[c, c * shear - s], [s, s * shear + c]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
    let mut out = vec![0f32; size * size];
    let sub = 2;
    for r in 0..size {
        for col in 0..size {
            let mut hits = 0;
            for i in 0..sub {
                for j in 0..sub {
                    let px = -1.0 + 2.0 * (col as f64 + (j as f64 + 0.5) / sub as f64) / size as f64;
                    let py = 1.0 - 2.0 * (r as f64 + (i as f64 + 0.5) / sub as f64) / size as f64;
                    let gx = inv[0][0] * px + inv[0][1] * py;
                    let gy = inv[1][0] * px + inv[1][1] * py;
                    if suit.contains(gx, gy) {
                        hits += 1;
                    }
                }
            }
            out[r * size + col] = hits as f32 / (sub * sub) as f32;
        }
    }
    out
}
