//! Forward problem for the pencil `-y'' + σ'y + 2λpy = λ²y`.
//!
//! The equation is integrated in the regularized form
//!
//! ```text
//! y'    = σ y + y1
//! y1'   = -σ y1 - σ² y + (2λp - λ²) y,      y1 = y' - σ y
//! ```
//!
//! with classical RK4 on a mesh containing every grid node and every step of
//! `σ`. Both `y` and `y1` are continuous across steps of `σ`, so mesh
//! alignment is all that is needed there. Differentiating in `λ` adds
//!
//! ```text
//! z'  = σ z + z1
//! z1' = -σ z1 - σ² z + (2λp - λ²) z + (2p - 2λ) y
//! ```
//!
//! which gives `∂λ` of any solution with `λ`-independent initial data.

use crate::cjson;
use crate::coefficients::{CoefficientPair, Segment};
use crate::entire::{EntireError, EntireExpr};
use crate::roots::{expand, Rect, RootError, RootFinder, RootOptions};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);
const ONE: C = C::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForwardError {
    #[error("forward: {op}: step count {steps} exceeds the cap {cap} at lambda = {lambda}")]
    StepUnderflow {
        op: &'static str,
        lambda: Complex64,
        steps: usize,
        cap: usize,
    },
    #[error("forward: {op}: {source}")]
    Entire {
        op: &'static str,
        source: EntireError,
    },
    #[error("forward: eigenvalues: {0}")]
    Roots(#[from] RootError),
    #[error("forward: composite: piece {index} starts at {start} but the previous piece ends at {end}")]
    NotContiguous { index: usize, start: f64, end: f64 },
    #[error("forward: composite: no pieces")]
    Empty,
    #[error("forward: subspectrum: equal values at positions {first} and {second} are not adjacent")]
    NotAdjacent { first: usize, second: usize },
    #[error("forward: subspectrum: non-finite value at position {0}")]
    NonFinite(usize),
}

/// Anything the integrator can walk through: an ordered chain of coefficient pieces.
pub trait Medium: Sync {
    fn pieces(&self) -> &[CoefficientPair];

    fn interval(&self) -> (f64, f64) {
        let p = self.pieces();
        (p[0].interval().0, p[p.len() - 1].interval().1)
    }

    /// Mean of `p` over the whole interval.
    fn mean_p(&self) -> Complex64 {
        let (a, b) = self.interval();
        self.pieces().iter().map(|c| c.mean_p() * c.len()).sum::<C>() / (b - a)
    }
}

impl Medium for CoefficientPair {
    fn pieces(&self) -> &[CoefficientPair] {
        std::slice::from_ref(self)
    }
}

/// Coefficients glued from contiguous pieces; `p` and `σ` may jump at the seams.
#[derive(Debug, Clone, PartialEq)]
pub struct Composite {
    pieces: Vec<CoefficientPair>,
}

impl Composite {
    pub fn new(pieces: Vec<CoefficientPair>) -> Result<Self, ForwardError> {
        if pieces.is_empty() {
            return Err(ForwardError::Empty);
        }
        for (i, w) in pieces.windows(2).enumerate() {
            let end = w[0].interval().1;
            let start = w[1].interval().0;
            if (end - start).abs() > 1e-12 * (1.0 + end.abs()) {
                return Err(ForwardError::NotContiguous {
                    index: i + 1,
                    start,
                    end,
                });
            }
        }
        Ok(Composite { pieces })
    }
}

impl Medium for Composite {
    fn pieces(&self) -> &[CoefficientPair] {
        &self.pieces
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Solution value and quasi-derivative at an endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointValues {
    #[serde(with = "cjson::one")]
    pub y: Complex64,
    #[serde(with = "cjson::one")]
    pub y1: Complex64,
}

/// `S(b, λ)` and `C(b, λ)` with their quasi-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fundamental {
    pub s: EndpointValues,
    pub c: EndpointValues,
    /// Low-order parts carried by the compensated integrator, `[S, S1, C, C1]`.
    lo: [C; 4],
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `Σ x_i y_i` with one level of error-free compensation.
fn dot2(pairs: &[(f64, f64)]) -> f64 {
    let (mut s, mut err) = (0.0, 0.0);
    for &(x, y) in pairs {
        let p = x * y;
        let e = x.mul_add(y, -p);
        let (t, q) = two_sum(s, p);
        s = t;
        err += q + e;
    }
    s + err
}

impl Fundamental {
    /// `C S^[1] - C^[1] S`, evaluated in extended precision from the hi/lo state.
    pub fn wronskian(&self) -> Complex64 {
        let [sl, s1l, cl, c1l] = self.lo;
        let (a, al, b, bl) = (self.c.y, cl, self.s.y1, s1l);
        let (c, cl2, d, dl) = (self.c.y1, c1l, self.s.y, sl);
        let re = dot2(&[
            (a.re, b.re),
            (-a.im, b.im),
            (a.re, bl.re),
            (-a.im, bl.im),
            (al.re, b.re),
            (-al.im, b.im),
            (-c.re, d.re),
            (c.im, d.im),
            (-c.re, dl.re),
            (c.im, dl.im),
            (-cl2.re, d.re),
            (cl2.im, d.im),
        ]);
        let im = dot2(&[
            (a.re, b.im),
            (a.im, b.re),
            (a.re, bl.im),
            (a.im, bl.re),
            (al.re, b.im),
            (al.im, b.re),
            (-c.re, d.im),
            (-c.im, d.re),
            (-c.re, dl.im),
            (-c.im, dl.re),
            (-cl2.re, d.im),
            (-cl2.im, d.re),
        ]);
        C::new(re, im)
    }
}

/// Eigenvalues with multiplicity by repetition, plus `ω₀ mod 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SubspectrumJson", into = "SubspectrumJson")]
pub struct Subspectrum {
    values: Vec<Complex64>,
    omega0_mod1: Complex64,
}

#[derive(Serialize, Deserialize)]
struct SubspectrumJson {
    #[serde(with = "cjson::vec")]
    values: Vec<Complex64>,
    #[serde(with = "cjson::one")]
    omega0_mod1: Complex64,
}

impl TryFrom<SubspectrumJson> for Subspectrum {
    type Error = ForwardError;

    fn try_from(j: SubspectrumJson) -> Result<Self, Self::Error> {
        Subspectrum::new(j.values, j.omega0_mod1)
    }
}

impl From<Subspectrum> for SubspectrumJson {
    fn from(s: Subspectrum) -> Self {
        SubspectrumJson {
            values: s.values,
            omega0_mod1: s.omega0_mod1,
        }
    }
}

/// Reduce the real part into `[0, 1)`.
pub fn reduce_mod1(z: Complex64) -> Complex64 {
    let r = z.re - z.re.floor();
    C::new(if r >= 1.0 { 0.0 } else { r }, z.im)
}

impl Subspectrum {
    pub fn new(values: Vec<Complex64>, omega0_mod1: Complex64) -> Result<Self, ForwardError> {
        for (i, v) in values.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(ForwardError::NonFinite(i));
            }
        }
        for i in 0..values.len() {
            let mut j = i + 1;
            while j < values.len() && values[j] == values[i] {
                j += 1;
            }
            if let Some(k) = values[j.min(values.len())..].iter().position(|v| *v == values[i]) {
                return Err(ForwardError::NotAdjacent {
                    first: i,
                    second: j + k,
                });
            }
        }
        Ok(Subspectrum {
            values,
            omega0_mod1: reduce_mod1(omega0_mod1),
        })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn omega0_mod1(&self) -> Complex64 {
        self.omega0_mod1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Distinct values with their repetition counts, in list order.
    pub fn groups(&self) -> Vec<(Complex64, usize)> {
        let mut out: Vec<(C, usize)> = Vec::new();
        for &v in &self.values {
            match out.last_mut() {
                Some((w, m)) if *w == v => *m += 1,
                _ => out.push((v, 1)),
            }
        }
        out
    }

    /// Keep the entries satisfying `keep`, preserving order.
    pub fn filter(&self, keep: impl Fn(Complex64) -> bool) -> Subspectrum {
        Subspectrum {
            values: self.values.iter().copied().filter(|&v| keep(v)).collect(),
            omega0_mod1: self.omega0_mod1,
        }
    }
}

/// RK4 settings shared by every forward computation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardSolver {
    /// Minimum resolution: steps per length π.
    pub steps_per_pi: usize,
    /// Largest phase advance `ω·h` per step, `ω = |λ| + |p| + |σ|`.
    pub phase: f64,
    pub max_steps: usize,
    pub roots: RootOptions,
}

impl Default for ForwardSolver {
    fn default() -> Self {
        ForwardSolver {
            steps_per_pi: 4096,
            phase: 0.005,
            max_steps: 50_000_000,
            roots: RootOptions::default(),
        }
    }
}

#[inline(always)]
fn rhs<const N: usize>(s: C, g: C, dg: C, nd: usize, st: &[[C; 2]; N]) -> [[C; 2]; N] {
    let mut out = [[ZERO; 2]; N];
    for j in 0..N {
        let [y, y1] = st[j];
        out[j] = [s * y + y1, g * y - s * y1];
    }
    for k in 0..nd {
        out[N - nd + k][1] += dg * st[k][0];
    }
    out
}

#[inline(always)]
fn axpy<const N: usize>(y: &[[C; 2]; N], h: f64, k: &[[C; 2]; N]) -> [[C; 2]; N] {
    let mut out = *y;
    for j in 0..N {
        out[j][0] += k[j][0] * h;
        out[j][1] += k[j][1] * h;
    }
    out
}

impl ForwardSolver {
    pub fn with_resolution(steps_per_pi: usize, phase: f64) -> Self {
        ForwardSolver {
            steps_per_pi,
            phase,
            ..Self::default()
        }
    }

    /// Integrate `N` columns; the last `nd` are `λ`-derivatives of the first `nd`.
    fn run<const N: usize>(
        &self,
        op: &'static str,
        m: &dyn Medium,
        lam: C,
        init: [[C; 2]; N],
        nd: usize,
        dir: Direction,
    ) -> Result<[[C; 2]; N], ForwardError> {
        Ok(self.run_split(op, m, lam, init, nd, dir)?.0)
    }

    /// As `run`, also returning the low-order parts lost to rounding.
    fn run_split<const N: usize>(
        &self,
        op: &'static str,
        m: &dyn Medium,
        lam: C,
        init: [[C; 2]; N],
        nd: usize,
        dir: Direction,
    ) -> Result<([[C; 2]; N], [[C; 2]; N]), ForwardError> {
        let hmax = PI / self.steps_per_pi as f64;
        let segs: Vec<&Segment> = m.pieces().iter().flat_map(|c| c.segments().iter()).collect();
        let mut st = init;
        let mut comp = [[ZERO; 2]; N];
        let mut steps = 0usize;
        let coef = |p: C, s: C| (s, (p * 2.0 - lam) * lam - s * s, (p - lam) * 2.0);
        let mut walk = |seg: &Segment| -> Result<(), ForwardError> {
            let len = seg.len();
            let omega = lam.norm() + seg.p0.norm().max(seg.p1.norm()) + seg.s0.norm().max(seg.s1.norm());
            let h_target = if omega > 0.0 { hmax.min(self.phase / omega) } else { hmax };
            let n = (len / h_target).ceil().max(1.0) as usize;
            steps += n;
            if steps > self.max_steps {
                return Err(ForwardError::StepUnderflow {
                    op,
                    lambda: lam,
                    steps,
                    cap: self.max_steps,
                });
            }
            let (sign, t_start) = match dir {
                Direction::Forward => (1.0, 0.0),
                Direction::Backward => (-1.0, 1.0),
            };
            let dt = sign / n as f64;
            let h = dt * len;
            let at = |t: f64| coef(seg.p0 + (seg.p1 - seg.p0) * t, seg.s0 + (seg.s1 - seg.s0) * t);
            let mut t = t_start;
            let mut c0 = at(t);
            for i in 0..n {
                let t1 = t_start + dt * (i + 1) as f64;
                let cm = at(0.5 * (t + t1));
                let c1 = at(t1);
                let k1 = rhs(c0.0, c0.1, c0.2, nd, &st);
                let k2 = rhs(cm.0, cm.1, cm.2, nd, &axpy(&st, 0.5 * h, &k1));
                let k3 = rhs(cm.0, cm.1, cm.2, nd, &axpy(&st, 0.5 * h, &k2));
                let k4 = rhs(c1.0, c1.1, c1.2, nd, &axpy(&st, h, &k3));
                for j in 0..N {
                    for l in 0..2 {
                        // compensated update keeps rounding from accumulating over long meshes
                        let inc = (k1[j][l] + (k2[j][l] + k3[j][l]) * 2.0 + k4[j][l]) * (h / 6.0) - comp[j][l];
                        let next = st[j][l] + inc;
                        comp[j][l] = (next - st[j][l]) - inc;
                        st[j][l] = next;
                    }
                }
                t = t1;
                c0 = c1;
            }
            Ok(())
        };
        match dir {
            Direction::Forward => segs.iter().try_for_each(|s| walk(s))?,
            Direction::Backward => segs.iter().rev().try_for_each(|s| walk(s))?,
        }
        let mut lo = comp;
        for col in lo.iter_mut() {
            for v in col.iter_mut() {
                *v = -*v;
            }
        }
        Ok((st, lo))
    }

    /// Solution from `(y0, y10)` at the start (forward) or end (backward) to the opposite endpoint.
    pub fn integrate(
        &self,
        m: &dyn Medium,
        lam: Complex64,
        y0: Complex64,
        y10: Complex64,
        dir: Direction,
    ) -> Result<EndpointValues, ForwardError> {
        let [[y, y1]] = self.run("integrate", m, lam, [[y0, y10]], 0, dir)?;
        Ok(EndpointValues { y, y1 })
    }

    /// As [`integrate`](Self::integrate), also returning the `λ`-derivative of the endpoint values.
    pub fn integrate_with_deriv(
        &self,
        m: &dyn Medium,
        lam: Complex64,
        y0: Complex64,
        y10: Complex64,
        dir: Direction,
    ) -> Result<(EndpointValues, EndpointValues), ForwardError> {
        let [[y, y1], [z, z1]] = self.run("integrate_with_deriv", m, lam, [[y0, y10], [ZERO, ZERO]], 1, dir)?;
        Ok((EndpointValues { y, y1 }, EndpointValues { y: z, y1: z1 }))
    }

    pub fn boundary_s(&self, m: &dyn Medium, lam: Complex64) -> Result<EndpointValues, ForwardError> {
        let [[y, y1]] = self.run("boundary_S", m, lam, [[ZERO, ONE]], 0, Direction::Forward)?;
        Ok(EndpointValues { y, y1 })
    }

    pub fn boundary_c(&self, m: &dyn Medium, lam: Complex64) -> Result<EndpointValues, ForwardError> {
        let [[y, y1]] = self.run("boundary_C", m, lam, [[ONE, ZERO]], 0, Direction::Forward)?;
        Ok(EndpointValues { y, y1 })
    }

    /// `S` and `∂λ S` at the right endpoint in one pass.
    pub fn boundary_s_with_deriv(
        &self,
        m: &dyn Medium,
        lam: Complex64,
    ) -> Result<(EndpointValues, EndpointValues), ForwardError> {
        let [[y, y1], [z, z1]] = self.run("boundary_S", m, lam, [[ZERO, ONE], [ZERO, ZERO]], 1, Direction::Forward)?;
        Ok((EndpointValues { y, y1 }, EndpointValues { y: z, y1: z1 }))
    }

    pub fn fundamental(&self, m: &dyn Medium, lam: Complex64) -> Result<Fundamental, ForwardError> {
        let ([[sy, sy1], [cy, cy1]], [[sl, s1l], [cl, c1l]]) =
            self.run_split("fundamental", m, lam, [[ZERO, ONE], [ONE, ZERO]], 0, Direction::Forward)?;
        Ok(Fundamental {
            s: EndpointValues { y: sy, y1: sy1 },
            c: EndpointValues { y: cy, y1: cy1 },
            lo: [sl, s1l, cl, c1l],
        })
    }

    /// `C S^[1] - C^[1] S` at the right endpoint; equals 1 for exact solutions.
    pub fn wronskian(&self, m: &dyn Medium, lam: Complex64) -> Result<Complex64, ForwardError> {
        Ok(self.fundamental(m, lam)?.wronskian())
    }

    /// `Δ(λ) = f₁(λ) S^[1](b, λ) + f₂(λ) S(b, λ)`.
    pub fn char_fn(
        &self,
        m: &dyn Medium,
        f1: &EntireExpr,
        f2: &EntireExpr,
        lam: Complex64,
    ) -> Result<Complex64, ForwardError> {
        let s = self.boundary_s(m, lam)?;
        let ent = |source| ForwardError::Entire { op: "char_fn", source };
        Ok(f1.eval(lam).map_err(ent)? * s.y1 + f2.eval(lam).map_err(ent)? * s.y)
    }

    /// `(Δ(λ), Δ'(λ))`.
    pub fn char_fn_with_deriv(
        &self,
        m: &dyn Medium,
        f1: &EntireExpr,
        f2: &EntireExpr,
        lam: Complex64,
    ) -> Result<(Complex64, Complex64), ForwardError> {
        let (s, ds) = self.boundary_s_with_deriv(m, lam)?;
        let ent = |source| ForwardError::Entire { op: "char_fn", source };
        let a = f1.jet(lam, 1).map_err(ent)?;
        let b = f2.jet(lam, 1).map_err(ent)?;
        Ok((
            a[0] * s.y1 + b[0] * s.y,
            a[1] * s.y1 + a[0] * ds.y1 + b[1] * s.y + b[0] * ds.y,
        ))
    }

    /// Zeros of `Δ` inside `search`, repeated by multiplicity and sorted by real part.
    ///
    /// `hint` is the expected shift of the eigenvalues from the integers
    /// (`ω₀` for Dirichlet data); strip boundaries are then placed halfway
    /// between expected eigenvalues.
    pub fn eigenvalues(
        &self,
        m: &dyn Medium,
        f1: &EntireExpr,
        f2: &EntireExpr,
        search: Rect,
        hint: Option<Complex64>,
    ) -> Result<Subspectrum, ForwardError> {
        let fd = |z: C| self.char_fn_with_deriv(m, f1, f2, z).map_err(|e| e.to_string());
        let mut opts = self.roots.clone();
        if let Some(w) = hint {
            let spacing = self.strip_spacing(m);
            let lo = ((search.re.0 - w.re) / spacing).floor() as i64 - 1;
            let hi = ((search.re.1 - w.re) / spacing).ceil() as i64 + 1;
            opts.cuts = Some((lo..=hi).map(|k| w.re + (k as f64 + 0.5) * spacing).collect());
        }
        let roots = RootFinder::new(&fd, &opts).find(&search)?;
        Subspectrum::new(expand(&roots), m.mean_p())
    }

    fn strip_spacing(&self, m: &dyn Medium) -> f64 {
        let (a, b) = m.interval();
        PI / (b - a)
    }
}

/// Integrate with the default solver.
pub fn integrate(
    m: &dyn Medium,
    lam: Complex64,
    y0: Complex64,
    y10: Complex64,
    dir: Direction,
) -> Result<EndpointValues, ForwardError> {
    ForwardSolver::default().integrate(m, lam, y0, y10, dir)
}

pub fn boundary_s(m: &dyn Medium, lam: Complex64) -> Result<EndpointValues, ForwardError> {
    ForwardSolver::default().boundary_s(m, lam)
}

pub fn boundary_c(m: &dyn Medium, lam: Complex64) -> Result<EndpointValues, ForwardError> {
    ForwardSolver::default().boundary_c(m, lam)
}

pub fn wronskian(m: &dyn Medium, lam: Complex64) -> Result<Complex64, ForwardError> {
    ForwardSolver::default().wronskian(m, lam)
}

pub fn char_fn(m: &dyn Medium, f1: &EntireExpr, f2: &EntireExpr, lam: Complex64) -> Result<Complex64, ForwardError> {
    ForwardSolver::default().char_fn(m, f1, f2, lam)
}

pub fn eigenvalues(
    m: &dyn Medium,
    f1: &EntireExpr,
    f2: &EntireExpr,
    search: Rect,
    hint: Option<Complex64>,
) -> Result<Subspectrum, ForwardError> {
    ForwardSolver::default().eigenvalues(m, f1, f2, search, hint)
}

/// `f₁ = 0, f₂ = 1`.
pub fn dirichlet() -> (EntireExpr, EntireExpr) {
    (EntireExpr::real(0.0), EntireExpr::real(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::Jump;
    use proptest::prelude::*;

    fn c(r: f64, i: f64) -> C {
        C::new(r, i)
    }

    fn zero() -> CoefficientPair {
        CoefficientPair::zero((0.0, PI))
    }

    fn constant_p(a: C) -> CoefficientPair {
        CoefficientPair::constant((0.0, PI), a, ZERO)
    }

    /// `S(π, λ)` and `S^[1](π, λ)` for constant `p = a`, `σ = 0`.
    fn closed_form_s(a: C, lam: C) -> (C, C) {
        let rho = (lam * lam - lam * a * 2.0).sqrt();
        if rho.norm() < 1e-12 {
            return (c(PI, 0.0), ONE);
        }
        ((rho * PI).sin() / rho, (rho * PI).cos())
    }

    #[test]
    fn integrate_examples() {
        let r = integrate(&zero(), c(1.0, 0.0), ZERO, ONE, Direction::Forward).unwrap();
        assert!(r.y.norm() < 1e-9 && (r.y1 + 1.0).norm() < 1e-9);
        let r = integrate(&zero(), c(0.5, 0.0), ZERO, ONE, Direction::Forward).unwrap();
        assert!((r.y - 2.0).norm() < 1e-9 && r.y1.norm() < 1e-9);
        let r = integrate(&constant_p(ONE), c(3.0, 0.0), ZERO, ONE, Direction::Forward).unwrap();
        let rho = 3f64.sqrt();
        assert!((r.y - (PI * rho).sin() / rho).norm() < 1e-9);
        assert!((r.y1 - (PI * rho).cos()).norm() < 1e-9);
    }

    #[test]
    fn backward_integration_inverts_forward() {
        let cp = CoefficientPair::from_fns((0.0, PI), 65, |x| c(0.3 * x.cos(), 0.0), |x| c(0.2 * x.sin(), 0.1), vec![Jump { at: 1.0, height: c(0.4, 0.0) }]).unwrap();
        let lam = c(2.3, 0.4);
        let f = integrate(&cp, lam, c(0.2, 0.0), c(0.7, -0.1), Direction::Forward).unwrap();
        let b = integrate(&cp, lam, f.y, f.y1, Direction::Backward).unwrap();
        assert!((b.y - 0.2).norm() < 1e-10 && (b.y1 - c(0.7, -0.1)).norm() < 1e-10);
    }

    #[test]
    fn boundary_examples() {
        for n in [1, 2, 5, -3] {
            let s = boundary_s(&zero(), c(n as f64, 0.0)).unwrap();
            assert!(s.y.norm() < 1e-9);
            assert!((s.y1 - if n % 2 == 0 { 1.0 } else { -1.0 }).norm() < 1e-9);
        }
        assert!((boundary_s(&zero(), ZERO).unwrap().y - PI).norm() < 1e-9);
        let lam = c(2.5, 0.0);
        let (s, s1) = closed_form_s(ONE, lam);
        let got = boundary_s(&constant_p(ONE), lam).unwrap();
        assert!((got.y - s).norm() < 1e-9 && (got.y1 - s1).norm() < 1e-9);
        let cc = boundary_c(&zero(), c(0.5, 0.0)).unwrap();
        assert!(cc.y.norm() < 1e-9 && (cc.y1 + 0.5).norm() < 1e-9);
    }

    #[test]
    fn wronskian_examples() {
        assert!((wronskian(&zero(), ONE).unwrap() - 1.0).norm() < 1e-10);
        let cp = constant_p(ONE).with_jump(Jump { at: PI / 2.0, height: ONE }).unwrap();
        assert!((wronskian(&cp, c(2.0, 1.0)).unwrap() - 1.0).norm() < 1e-8);
        let cp = CoefficientPair::from_fns((0.0, PI), 33, |x| c(x.sin(), 0.2), |x| c(x, -x), vec![]).unwrap();
        assert!((wronskian(&cp, ZERO).unwrap() - 1.0).norm() < 1e-10);
    }

    #[test]
    fn char_fn_examples() {
        let (f1, f2) = dirichlet();
        for n in 1..4 {
            assert!(char_fn(&zero(), &f1, &f2, c(n as f64, 0.0)).unwrap().norm() < 1e-9);
        }
        let one = EntireExpr::real(1.0);
        let zero_f = EntireExpr::real(0.0);
        assert!(char_fn(&zero(), &one, &zero_f, c(1.5, 0.0)).unwrap().norm() < 1e-9);
        let v = char_fn(&zero(), &one, &one, c(0.25, 0.0)).unwrap();
        let want = (PI / 4.0).cos() + (PI / 4.0).sin() / 0.25;
        assert!((v - want).norm() < 1e-9);
    }

    #[test]
    fn char_fn_derivative_matches_difference_quotient() {
        let cp = CoefficientPair::from_fns((0.0, PI), 33, |x| c(0.5 * x.cos(), 0.0), |x| c(0.3 * x, 0.0), vec![]).unwrap();
        let f1 = EntireExpr::sin(EntireExpr::Var);
        let f2 = EntireExpr::Poly(vec![ONE, c(0.0, 0.5)]);
        let s = ForwardSolver::default();
        let z = c(1.7, 0.3);
        let (_, d) = s.char_fn_with_deriv(&cp, &f1, &f2, z).unwrap();
        let h = 1e-5;
        let fd = (s.char_fn(&cp, &f1, &f2, z + h).unwrap() - s.char_fn(&cp, &f1, &f2, z - h).unwrap()) / (2.0 * h);
        assert!((d - fd).norm() < 1e-7 * (1.0 + d.norm()));
    }

    #[test]
    fn eigenvalue_examples() {
        let (f1, f2) = dirichlet();
        let sub = eigenvalues(&zero(), &f1, &f2, Rect::new((0.5, 5.5), (-1.0, 1.0)), None).unwrap();
        assert_eq!(sub.len(), 5);
        for (k, v) in sub.values().iter().enumerate() {
            assert!((v - (k + 1) as f64).norm() < 1e-9);
        }
        let sub = eigenvalues(&constant_p(ONE), &f1, &f2, Rect::new((1.5, 3.0), (-1.0, 1.0)), Some(ONE)).unwrap();
        assert_eq!(sub.len(), 1);
        assert!((sub.values()[0] - (1.0 + 2f64.sqrt())).norm() < 1e-8);
        let one = EntireExpr::real(1.0);
        let zero_f = EntireExpr::real(0.0);
        let sub = eigenvalues(&zero(), &one, &zero_f, Rect::new((0.0, 3.0), (-1.0, 1.0)), None).unwrap();
        let want = [0.5, 1.5, 2.5];
        assert_eq!(sub.len(), 3);
        for (v, w) in sub.values().iter().zip(want) {
            assert!((v - w).norm() < 1e-9);
        }
    }

    #[test]
    fn double_eigenvalue_repeated() {
        // Δ = (λ - 2)² S^[1] + 0·S has a double zero at 2 besides cos-type zeros
        let f1 = EntireExpr::Poly(vec![c(4.0, 0.0), c(-4.0, 0.0), ONE]);
        let f2 = EntireExpr::real(0.0);
        let sub = eigenvalues(&zero(), &f1, &f2, Rect::new((1.7, 2.3), (-0.5, 0.5)), None).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.values()[0], sub.values()[1]);
        assert!((sub.values()[0] - 2.0).norm() < 1e-6);
        assert_eq!(sub.groups(), vec![(sub.values()[0], 2)]);
    }

    #[test]
    fn subspectrum_convention_and_json() {
        assert!(Subspectrum::new(vec![ONE, c(2.0, 0.0), ONE], ZERO).is_err());
        let s = Subspectrum::new(vec![ONE, ONE, c(2.0, 0.0)], c(1.3, 0.5)).unwrap();
        assert!((s.omega0_mod1() - c(0.3, 0.5)).norm() < 1e-12);
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"omega0_mod1\""));
        let back: Subspectrum = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Subspectrum>(r#"{"values":[1,2,1],"omega0_mod1":0}"#).is_err());
        assert_eq!(reduce_mod1(c(-0.25, 0.0)), c(0.75, 0.0));
    }

    #[test]
    fn composite_matches_single_piece() {
        let whole = CoefficientPair::from_fns((0.0, 2.0 * PI), 129, |x| c(0.2 * x.cos(), 0.0), |_| ZERO, vec![]).unwrap();
        let left = CoefficientPair::from_fns((0.0, PI), 65, |x| c(0.2 * x.cos(), 0.0), |_| ZERO, vec![]).unwrap();
        let right = CoefficientPair::from_fns((PI, 2.0 * PI), 65, |x| c(0.2 * x.cos(), 0.0), |_| ZERO, vec![]).unwrap();
        let comp = Composite::new(vec![left, right]).unwrap();
        let lam = c(1.3, 0.2);
        let a = boundary_s(&whole, lam).unwrap();
        let b = boundary_s(&comp, lam).unwrap();
        assert!((a.y - b.y).norm() < 1e-10);
        assert!(Composite::new(vec![zero(), zero()]).is_err());
        assert!((comp.mean_p() - whole.mean_p()).norm() < 1e-12);
    }

    #[test]
    fn step_cap_is_reported() {
        let s = ForwardSolver {
            max_steps: 100,
            ..ForwardSolver::default()
        };
        assert!(matches!(s.boundary_s(&zero(), ONE), Err(ForwardError::StepUnderflow { .. })));
    }

    #[test]
    fn boundary_values_are_entire() {
        let cp = CoefficientPair::from_fns((0.0, PI), 33, |x| c(0.4 * x.sin(), 0.0), |x| c(0.1 * x, 0.0), vec![]).unwrap();
        let center = c(1.2, 0.1);
        let q = 48;
        let r = 0.5;
        let ring: Vec<(C, C)> = (0..q)
            .map(|j| {
                let w = C::from_polar(1.0, 2.0 * PI * j as f64 / q as f64);
                (w, boundary_s(&cp, center + w * r).unwrap().y)
            })
            .collect();
        for z in [c(1.3, 0.05), c(1.0, 0.2)] {
            // Cauchy integral formula on the circle (trapezoid rule)
            let v: C = ring.iter().map(|(w, f)| f * w * r / (center + w * r - z)).sum::<C>() / q as f64;
            assert!((v - boundary_s(&cp, z).unwrap().y).norm() < 1e-6);
        }
    }

    #[test]
    fn dirichlet_spectrum_ignores_constant_sigma_shift() {
        let cp = CoefficientPair::from_fns((0.0, PI), 33, |x| c(0.3 * x.cos(), 0.0), |x| c(0.2 * x, 0.0), vec![]).unwrap();
        let (f1, f2) = dirichlet();
        let rect = Rect::new((0.5, 4.5), (-1.0, 1.0));
        let a = eigenvalues(&cp, &f1, &f2, rect, None).unwrap();
        let b = eigenvalues(&cp.shift_sigma(c(0.7, 0.0)), &f1, &f2, rect, None).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).norm() < 1e-8);
        }
    }

    #[test]
    fn dirichlet_tail_approaches_shifted_integers() {
        let cp = CoefficientPair::from_fns((0.0, PI), 65, |x| c(0.3 + 0.2 * x.cos(), 0.0), |_| ZERO, vec![]).unwrap();
        let w = cp.mean_p();
        let (f1, f2) = dirichlet();
        let sub = eigenvalues(&cp, &f1, &f2, Rect::new((0.5, 16.5), (-1.0, 1.0)), Some(w)).unwrap();
        let dev: Vec<f64> = sub.values().iter().enumerate().map(|(k, v)| (v - (k + 1) as f64 - w).norm()).collect();
        assert!(dev[dev.len() - 1] < dev[0]);
        assert!(dev[dev.len() - 1] < 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn wronskian_identity(a in -1.0..1.0f64, b in -1.0..1.0f64, h in -1.0..1.0f64, at in 0.3..2.8f64, re in -8.0..8.0f64, im in -3.0..3.0f64) {
            let cp = CoefficientPair::from_fns((0.0, PI), 33, |x| c(a * x.cos(), 0.1 * b), |x| c(b * x.sin(), a * 0.2), vec![Jump { at, height: c(h, 0.0) }]).unwrap();
            let w = wronskian(&cp, c(re, im)).unwrap();
            prop_assert!((w - 1.0).norm() < 1e-8, "W - 1 = {}", (w - 1.0).norm());
        }
    }
}
