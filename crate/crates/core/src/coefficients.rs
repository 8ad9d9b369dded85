//! Pencil coefficients `p` and `σ` on a bounded interval.
//!
//! `p` is the piecewise-linear interpolant of samples on a uniform grid.
//! `σ` is a piecewise-linear base plus Heaviside steps; a step of height `c`
//! at `x₀` encodes the point mass `c·δ(x − x₀)` in `q = σ′`. At a step
//! location `σ` takes its right limit.

use crate::cjson::Cx;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoefficientError {
    #[error("coefficients: grid needs at least 2 nodes, got {0}")]
    GridTooSmall(usize),
    #[error("coefficients: interval ({0}, {1}) is empty or not finite")]
    BadInterval(f64, f64),
    #[error("coefficients: p has {p} samples but sigma has {sigma}")]
    LengthMismatch { p: usize, sigma: usize },
    #[error("coefficients: jump at {0} is not strictly inside the interval")]
    JumpOutside(f64),
    #[error("coefficients: duplicate jump location {0}")]
    DuplicateJump(f64),
    #[error("coefficients: non-finite sample")]
    NonFinite,
    #[error("coefficients: {op}: x = {x} is outside [{a}, {b}]")]
    OutOfDomain {
        op: &'static str,
        x: f64,
        a: f64,
        b: f64,
    },
}

/// A step `height · 1{x ≥ at}` added to `σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub at: f64,
    pub height: Complex64,
}

/// One mesh cell with linear `p` and `σ` (the step offsets already folded in).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub x0: f64,
    pub x1: f64,
    pub p0: Complex64,
    pub p1: Complex64,
    pub s0: Complex64,
    pub s1: Complex64,
}

impl Segment {
    #[inline]
    pub fn len(&self) -> f64 {
        self.x1 - self.x0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPair {
    a: f64,
    b: f64,
    p: Vec<Complex64>,
    sigma: Vec<Complex64>,
    jumps: Vec<Jump>,
    segments: Vec<Segment>,
}

impl CoefficientPair {
    pub fn new(
        interval: (f64, f64),
        p: Vec<Complex64>,
        sigma: Vec<Complex64>,
        mut jumps: Vec<Jump>,
    ) -> Result<Self, CoefficientError> {
        let (a, b) = interval;
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(CoefficientError::BadInterval(a, b));
        }
        if p.len() < 2 {
            return Err(CoefficientError::GridTooSmall(p.len()));
        }
        if p.len() != sigma.len() {
            return Err(CoefficientError::LengthMismatch {
                p: p.len(),
                sigma: sigma.len(),
            });
        }
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        if !p.iter().all(finite) || !sigma.iter().all(finite) {
            return Err(CoefficientError::NonFinite);
        }
        for j in &jumps {
            if !(j.at > a && j.at < b) {
                return Err(CoefficientError::JumpOutside(j.at));
            }
            if !finite(&j.height) {
                return Err(CoefficientError::NonFinite);
            }
        }
        jumps.sort_by(|l, r| l.at.total_cmp(&r.at));
        for w in jumps.windows(2) {
            if w[0].at == w[1].at {
                return Err(CoefficientError::DuplicateJump(w[0].at));
            }
        }
        let mut cp = CoefficientPair {
            a,
            b,
            p,
            sigma,
            jumps,
            segments: Vec::new(),
        };
        cp.segments = cp.build_segments();
        Ok(cp)
    }

    /// Samples `p` and `σ` from closures on a uniform grid of `g` nodes.
    pub fn from_fns(
        interval: (f64, f64),
        g: usize,
        p: impl Fn(f64) -> Complex64,
        sigma: impl Fn(f64) -> Complex64,
        jumps: Vec<Jump>,
    ) -> Result<Self, CoefficientError> {
        if g < 2 {
            return Err(CoefficientError::GridTooSmall(g));
        }
        let (a, b) = interval;
        let h = (b - a) / (g - 1) as f64;
        let xs: Vec<f64> = (0..g).map(|i| a + h * i as f64).collect();
        CoefficientPair::new(
            interval,
            xs.iter().map(|&x| p(x)).collect(),
            xs.iter().map(|&x| sigma(x)).collect(),
            jumps,
        )
    }

    pub fn constant(interval: (f64, f64), p: Complex64, sigma: Complex64) -> Self {
        CoefficientPair::new(interval, vec![p; 2], vec![sigma; 2], Vec::new())
            .expect("constant coefficients are always valid")
    }

    pub fn zero(interval: (f64, f64)) -> Self {
        Self::constant(interval, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn grid_size(&self) -> usize {
        self.p.len()
    }

    pub fn p_samples(&self) -> &[Complex64] {
        &self.p
    }

    pub fn sigma_samples(&self) -> &[Complex64] {
        &self.sigma
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn node(&self, i: usize) -> f64 {
        let n = self.p.len() - 1;
        if i == n {
            self.b
        } else {
            self.a + (self.b - self.a) * i as f64 / n as f64
        }
    }

    fn check_domain(&self, op: &'static str, x: f64) -> Result<(), CoefficientError> {
        if x >= self.a && x <= self.b {
            Ok(())
        } else {
            Err(CoefficientError::OutOfDomain {
                op,
                x,
                a: self.a,
                b: self.b,
            })
        }
    }

    fn interpolate(&self, v: &[Complex64], x: f64) -> Complex64 {
        let n = v.len() - 1;
        let t = (x - self.a) / (self.b - self.a) * n as f64;
        let i = (t.floor() as usize).min(n - 1);
        let frac = t - i as f64;
        v[i] * (1.0 - frac) + v[i + 1] * frac
    }

    fn step_sum(&self, x: f64) -> Complex64 {
        self.jumps
            .iter()
            .take_while(|j| j.at <= x)
            .map(|j| j.height)
            .sum()
    }

    pub fn eval_p(&self, x: f64) -> Result<Complex64, CoefficientError> {
        self.check_domain("eval_p", x)?;
        Ok(self.interpolate(&self.p, x))
    }

    pub fn eval_sigma(&self, x: f64) -> Result<Complex64, CoefficientError> {
        self.check_domain("eval_sigma", x)?;
        Ok(self.interpolate(&self.sigma, x) + self.step_sum(x))
    }

    /// `(1/(b − a)) ∫ p`, exact for the interpolant.
    pub fn mean_p(&self) -> Complex64 {
        let n = self.p.len() - 1;
        let inner: Complex64 = self.p[1..n].iter().sum();
        let total = (self.p[0] + self.p[n]) * 0.5 + inner;
        total / n as f64
    }

    /// Same coefficients with a constant added to `σ`.
    pub fn shift_sigma(&self, c: Complex64) -> Self {
        let sigma = self.sigma.iter().map(|s| s + c).collect();
        CoefficientPair::new(self.interval(), self.p.clone(), sigma, self.jumps.clone())
            .expect("shifting sigma keeps the pair valid")
    }

    /// Same coefficients with one more step in `σ`.
    pub fn with_jump(&self, jump: Jump) -> Result<Self, CoefficientError> {
        let mut jumps = self.jumps.clone();
        jumps.push(jump);
        CoefficientPair::new(self.interval(), self.p.clone(), self.sigma.clone(), jumps)
    }

    fn build_segments(&self) -> Vec<Segment> {
        let n = self.p.len() - 1;
        let mut breaks: Vec<f64> = (0..=n).map(|i| self.node(i)).collect();
        breaks.extend(self.jumps.iter().map(|j| j.at));
        breaks.sort_by(|l, r| l.total_cmp(r));
        breaks.dedup();
        breaks
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let (x0, x1) = (w[0], w[1]);
                // steps strictly left of x1 (and at x0) are active on the whole cell
                let offset = self.step_sum(x0);
                Segment {
                    x0,
                    x1,
                    p0: self.interpolate(&self.p, x0),
                    p1: self.interpolate(&self.p, x1),
                    s0: self.interpolate(&self.sigma, x0) + offset,
                    s1: self.interpolate(&self.sigma, x1) + offset,
                }
            })
            .collect()
    }
}

/// Wire form: `{ "interval": [a,b], "p": [..], "sigma": [..], "jumps": [[x0,[re,im]],..] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientPairJson {
    pub interval: [f64; 2],
    pub p: Vec<Cx>,
    pub sigma: Vec<Cx>,
    #[serde(default)]
    pub jumps: Vec<(f64, Cx)>,
}

impl From<&CoefficientPair> for CoefficientPairJson {
    fn from(cp: &CoefficientPair) -> Self {
        CoefficientPairJson {
            interval: [cp.a, cp.b],
            p: cp.p.iter().map(|&z| Cx(z)).collect(),
            sigma: cp.sigma.iter().map(|&z| Cx(z)).collect(),
            jumps: cp.jumps.iter().map(|j| (j.at, Cx(j.height))).collect(),
        }
    }
}

impl TryFrom<CoefficientPairJson> for CoefficientPair {
    type Error = CoefficientError;

    fn try_from(j: CoefficientPairJson) -> Result<Self, Self::Error> {
        CoefficientPair::new(
            (j.interval[0], j.interval[1]),
            j.p.into_iter().map(|c| c.0).collect(),
            j.sigma.into_iter().map(|c| c.0).collect(),
            j.jumps
                .into_iter()
                .map(|(at, h)| Jump { at, height: h.0 })
                .collect(),
        )
    }
}

impl Serialize for CoefficientPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CoefficientPairJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoefficientPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = CoefficientPairJson::deserialize(d)?;
        CoefficientPair::try_from(j).map_err(serde::de::Error::custom)
    }
}
