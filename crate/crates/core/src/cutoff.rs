//! Cut-off functions with closed-form derivatives.
//!
//! `chi0(t)` equals 1 on `|t| <= 1/2` and vanishes on `|t| >= 1`. On
//! `1/2 < |t| < 1`, with `r = 2|t| - 1`, two bridges are available:
//!
//! - [`CutoffShape::Bump`]: `exp(1 - 1/(1 - r^2))`. Flat at `|t| = 1`, but at
//!   `|t| = 1/2` only the value and first derivative match, so `chi0''`
//!   jumps from 0 to -8 there.
//! - [`CutoffShape::Smooth`]: `E(1-r) / (E(1-r) + E(r))` with `E(y) = exp(-1/y)`,
//!   flat at both ends.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoffShape {
    #[default]
    Bump,
    Smooth,
}

/// `E(y) = exp(-1/y)` and its first two derivatives, for `y > 0`.
fn flat(y: f64) -> (f64, f64, f64) {
    let e = (-1.0 / y).exp();
    if e == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let y2 = y * y;
    (e, e / y2, e * (1.0 / (y2 * y2) - 2.0 / (y2 * y)))
}

/// Step from 1 (at `r = 0`) to 0 (at `r = 1`): value and two `r`-derivatives.
fn smooth_step(r: f64) -> (f64, f64, f64) {
    let (p, p1, p2) = {
        let (e, e1, e2) = flat(1.0 - r);
        (e, -e1, e2)
    };
    let (q, q1, q2) = flat(r);
    let d = p + q;
    let d1 = p1 + q1;
    let n = p1 * q - p * q1;
    let n1 = p2 * q - p * q2;
    (p / d, n / (d * d), (n1 * d - 2.0 * n * d1) / (d * d * d))
}

fn bump(r: f64) -> (f64, f64, f64) {
    let u = 1.0 - r * r;
    let g = (1.0 - 1.0 / u).exp();
    if g == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let u2 = u * u;
    let g1 = -2.0 * r * g / u2;
    let g2 = -2.0 * g / u2 - 2.0 * r * g1 / u2 - 8.0 * r * r * g / (u2 * u);
    (g, g1, g2)
}

impl CutoffShape {
    /// `(chi0(t), chi0'(t), chi0''(t))`.
    pub fn chi0_all(self, t: f64) -> (f64, f64, f64) {
        let a = t.abs();
        if a <= 0.5 {
            (1.0, 0.0, 0.0)
        } else if a >= 1.0 {
            (0.0, 0.0, 0.0)
        } else {
            let r = 2.0 * a - 1.0;
            let (g, g1, g2) = match self {
                CutoffShape::Bump => bump(r),
                CutoffShape::Smooth => smooth_step(r),
            };
            (g, 2.0 * t.signum() * g1, 4.0 * g2)
        }
    }

    pub fn chi0(self, t: f64) -> f64 {
        self.chi0_all(t).0
    }
}

/// Rescaled cut-off `chi1(t) = chi0(t / width)`: identically 1 on
/// `|t| <= width/2`, supported in `|t| < width`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi1 {
    pub width: f64,
    pub shape: CutoffShape,
}

impl Chi1 {
    pub fn new(width: f64, shape: CutoffShape) -> Self {
        Chi1 { width, shape }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.shape.chi0(t / self.width)
    }
}
