//! Globally adaptive Gauss-Kronrod quadrature and the chord-displacement moment.

use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights for the odd Kronrod nodes, then the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub const MAX_INTERVALS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

/// G7-K15 rule on `[a, b]`: (Kronrod value, |Kronrod - Gauss|).
pub fn gauss_kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let s = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Bisects the interval with the largest error estimate until the total
/// error is below `max(abs_tol, rel_tol |value|)`.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Quadrature> {
    let piece = |a: f64, b: f64| {
        let (value, error) = gauss_kronrod_15(&f, a, b);
        Piece { a, b, value, error }
    };
    let mut heap = BinaryHeap::new();
    heap.push(piece(a, b));
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Quadrature {
                value,
                error,
                intervals: heap.len(),
            });
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::Budget(format!(
                "quadrature did not reach {rel_tol:e} in {MAX_INTERVALS} intervals"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        heap.push(piece(worst.a, m));
        heap.push(piece(m, worst.b));
    }
}

/// Tangential displacement `x(theta)` of an inner launch across the annulus
/// of width `epsilon`, written without cancellation.
pub fn inner_displacement(epsilon: f64, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let k = epsilon * (2.0 - epsilon);
    s * k / ((c * c + k * s * s).sqrt() + (1.0 - epsilon) * c)
}

/// `E[x(Theta)^2]` under the cosine law, to 1e-12 relative.
pub fn quadrature_ex2(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "epsilon {epsilon} outside (0, 0.5)"
        )));
    }
    let f = |th: f64| {
        let x = inner_displacement(epsilon, th);
        x * x * th.cos()
    };
    // the mass sits within about sqrt(eps) of grazing; split there
    let knee = FRAC_PI_2 - (epsilon.sqrt() * 8.0).min(0.5);
    let lo = integrate(f, 0.0, knee, 1e-13, 0.0)?;
    let hi = integrate(f, knee, FRAC_PI_2, 1e-13, 0.0)?;
    Ok(lo.value + hi.value)
}

/// `(1/2) eps^2 log(1/eps)`.
pub fn variance_scale(epsilon: f64) -> f64 {
    0.5 * epsilon * epsilon * (1.0 / epsilon).ln()
}
