//! Finite trigonometric series on the circle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest harmonic accepted in a profile.
pub const MAX_HARMONICS: usize = 8;

/// `c0 + sum_k cos[k-1] cos(k x) + sin[k-1] sin(k x)` for `k = 1..=K`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FourierSeries {
    pub c0: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

/// Value and first three derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl FourierSeries {
    pub fn constant(c0: f64) -> Self {
        Self {
            c0,
            cos: Vec::new(),
            sin: Vec::new(),
        }
    }

    pub fn new(c0: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        let s = Self { c0, cos, sin };
        s.check()?;
        Ok(s)
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.cos.len() > MAX_HARMONICS || self.sin.len() > MAX_HARMONICS {
            return Err(Error::InvalidProfile(format!(
                "at most {MAX_HARMONICS} harmonics are supported"
            )));
        }
        let finite = std::iter::once(&self.c0)
            .chain(&self.cos)
            .chain(&self.sin)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidProfile(
                "non-finite Fourier coefficient".into(),
            ));
        }
        Ok(())
    }

    pub fn harmonics(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    pub fn is_constant(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&v| v == 0.0)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            c0: self.c0 * k,
            cos: self.cos.iter().map(|v| v * k).collect(),
            sin: self.sin.iter().map(|v| v * k).collect(),
        }
    }

    /// Termwise sum.
    pub fn plus(&self, other: &Self) -> Self {
        let add = |a: &[f64], b: &[f64]| {
            (0..a.len().max(b.len()))
                .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
                .collect()
        };
        Self {
            c0: self.c0 + other.c0,
            cos: add(&self.cos, &other.cos),
            sin: add(&self.sin, &other.sin),
        }
    }

    fn coeff(v: &[f64], k: usize) -> f64 {
        v.get(k).copied().unwrap_or(0.0)
    }

    pub fn value(&self, x: f64) -> f64 {
        let (s, c) = x.sin_cos();
        self.value_cs(c, s)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.jet(x).d1
    }

    pub fn jet(&self, x: f64) -> Jet {
        let (s, c) = x.sin_cos();
        self.jet_cs(c, s)
    }

    /// Value at the angle whose cosine and sine are `(c1, s1)`.
    #[inline]
    pub fn value_cs(&self, c1: f64, s1: f64) -> f64 {
        let mut acc = self.c0;
        let (mut ck, mut sk) = (c1, s1);
        for k in 0..self.harmonics() {
            acc += Self::coeff(&self.cos, k) * ck + Self::coeff(&self.sin, k) * sk;
            let next_c = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = next_c;
        }
        acc
    }

    /// Value and first derivative at the angle with cosine/sine `(c1, s1)`.
    #[inline]
    pub fn value_d1_cs(&self, c1: f64, s1: f64) -> (f64, f64) {
        let mut v = self.c0;
        let mut d = 0.0;
        let (mut ck, mut sk) = (c1, s1);
        for k in 0..self.harmonics() {
            let (a, b) = (Self::coeff(&self.cos, k), Self::coeff(&self.sin, k));
            let kf = (k + 1) as f64;
            v += a * ck + b * sk;
            d += kf * (b * ck - a * sk);
            let next_c = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = next_c;
        }
        (v, d)
    }

    pub fn jet_cs(&self, c1: f64, s1: f64) -> Jet {
        let mut j = Jet {
            value: self.c0,
            ..Jet::default()
        };
        let (mut ck, mut sk) = (c1, s1);
        for k in 0..self.harmonics() {
            let (a, b) = (Self::coeff(&self.cos, k), Self::coeff(&self.sin, k));
            let kf = (k + 1) as f64;
            j.value += a * ck + b * sk;
            j.d1 += kf * (b * ck - a * sk);
            j.d2 -= kf * kf * (a * ck + b * sk);
            j.d3 += kf * kf * kf * (a * sk - b * ck);
            let next_c = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = next_c;
        }
        j
    }

    /// Sum of |k * coefficient| over harmonics; an upper bound on `sup |f'|`.
    pub fn derivative_bound(&self) -> f64 {
        (0..self.harmonics())
            .map(|k| {
                let (a, b) = (Self::coeff(&self.cos, k), Self::coeff(&self.sin, k));
                (k + 1) as f64 * a.hypot(b)
            })
            .sum()
    }
}

/// Fixed-size copy of a series for fast repeated evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct DenseSeries {
    c0: f64,
    a: [f64; MAX_HARMONICS],
    b: [f64; MAX_HARMONICS],
    n: usize,
}

impl DenseSeries {
    pub(crate) fn new(s: &FourierSeries) -> Self {
        let mut d = Self {
            c0: s.c0,
            a: [0.0; MAX_HARMONICS],
            b: [0.0; MAX_HARMONICS],
            n: s.harmonics(),
        };
        d.a[..s.cos.len()].copy_from_slice(&s.cos);
        d.b[..s.sin.len()].copy_from_slice(&s.sin);
        d
    }

    #[inline]
    pub(crate) fn value_cs(&self, c1: f64, s1: f64) -> f64 {
        let mut acc = self.c0;
        let (mut ck, mut sk) = (c1, s1);
        for k in 0..self.n {
            acc += self.a[k] * ck + self.b[k] * sk;
            let next_c = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = next_c;
        }
        acc
    }

    #[inline]
    pub(crate) fn value_d1_cs(&self, c1: f64, s1: f64) -> (f64, f64) {
        let mut v = self.c0;
        let mut d = 0.0;
        let (mut ck, mut sk) = (c1, s1);
        for k in 0..self.n {
            let kf = (k + 1) as f64;
            v += self.a[k] * ck + self.b[k] * sk;
            d += kf * (self.b[k] * ck - self.a[k] * sk);
            let next_c = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = next_c;
        }
        (v, d)
    }
}
