//! Zeros of analytic functions in a rectangle by the argument principle.
//!
//! The rectangle is cut into vertical strips that share their vertical
//! edges. The change of `arg f` along each edge is tracked by adaptive
//! bisection until consecutive samples differ by less than `max_arg_step`.
//! Strips with one zero are polished by Newton's method; strips with more are
//! split in quadtree fashion until each zero is isolated or a cluster is
//! smaller than `cluster_size`, in which case the modified Newton iteration
//! `z - m f/f'` is used and the cluster is reported as one multiple zero.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("roots: {op}: a zero lies on the contour after {attempts} jittered attempts")]
    ZeroOnContour { op: &'static str, attempts: usize },
    #[error("roots: {op}: winding number {value} is not an integer")]
    NonIntegerWinding { op: &'static str, value: f64 },
    #[error("roots: refine: Newton iteration failed near {at}")]
    NewtonFailed { at: Complex64 },
    #[error("roots: {op}: subdivision exceeded depth {depth}")]
    TooDeep { op: &'static str, depth: usize },
    #[error("roots: function evaluation failed: {0}")]
    Eval(String),
    #[error("roots: bad rectangle [{0}, {1}] x [{2}, {3}]")]
    BadRect(f64, f64, f64, f64),
}

/// Closed axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl Rect {
    pub fn new(re: (f64, f64), im: (f64, f64)) -> Self {
        Rect { re, im }
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.re.0 + self.re.1), 0.5 * (self.im.0 + self.im.1))
    }

    pub fn diameter(&self) -> f64 {
        (self.re.1 - self.re.0).hypot(self.im.1 - self.im.0)
    }

    pub fn contains(&self, z: Complex64, slack: f64) -> bool {
        z.re >= self.re.0 - slack
            && z.re <= self.re.1 + slack
            && z.im >= self.im.0 - slack
            && z.im <= self.im.1 + slack
    }

    fn valid(&self) -> bool {
        self.re.0.is_finite()
            && self.re.1.is_finite()
            && self.im.0.is_finite()
            && self.im.1.is_finite()
            && self.re.1 > self.re.0
            && self.im.1 > self.im.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootOptions {
    /// Target width of the vertical strips.
    pub cell_width: f64,
    /// Initial sample spacing along every edge.
    pub initial_spacing: f64,
    pub max_arg_step: f64,
    /// Bisection floor; reaching it means a zero sits on the contour.
    pub min_spacing: f64,
    pub merge_tol: f64,
    pub cluster_size: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_jitter: usize,
    pub max_depth: usize,
    /// Explicit strip boundaries; overrides `cell_width` when given.
    pub cuts: Option<Vec<f64>>,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            cell_width: 0.5,
            initial_spacing: 0.25,
            max_arg_step: PI / 4.0,
            min_spacing: 1e-11,
            merge_tol: 1e-7,
            cluster_size: 1e-5,
            newton_tol: 1e-13,
            max_newton: 60,
            max_jitter: 5,
            max_depth: 40,
            cuts: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub z: Complex64,
    pub multiplicity: usize,
}

enum Fail {
    Contour,
    Other(RootError),
}

impl From<RootError> for Fail {
    fn from(e: RootError) -> Self {
        Fail::Other(e)
    }
}

/// Zero finder driven by an oracle returning `(f, f')`.
pub struct RootFinder<'a, G> {
    fd: &'a G,
    opts: &'a RootOptions,
}

#[derive(Clone, Copy)]
struct Sample {
    z: Complex64,
    f: Complex64,
    /// `|f/f'|`, a lower bound (up to multiplicity) on the distance to the nearest zero.
    reach: f64,
}

impl<'a, G> RootFinder<'a, G>
where
    G: Fn(Complex64) -> Result<(Complex64, Complex64), String> + Sync,
{
    pub fn new(fd: &'a G, opts: &'a RootOptions) -> Self {
        RootFinder { fd, opts }
    }

    fn eval(&self, z: Complex64) -> Result<Sample, Fail> {
        let (f, d) = (self.fd)(z).map_err(|e| Fail::Other(RootError::Eval(e)))?;
        if f == Complex64::new(0.0, 0.0) {
            return Err(Fail::Contour);
        }
        if !(f.re.is_finite() && f.im.is_finite()) {
            return Err(Fail::Other(RootError::Eval(format!("non-finite value at {z}"))));
        }
        let reach = if d.norm() > 0.0 { (f / d).norm() } else { f64::INFINITY };
        Ok(Sample { z, f, reach })
    }

    /// Continuous change of `arg f` along the segment from `a` to `b`.
    fn arg_increment(&self, a: Complex64, b: Complex64) -> Result<f64, Fail> {
        let len = (b - a).norm();
        let n = ((len / self.opts.initial_spacing).ceil() as usize).max(1);
        let pts: Vec<Complex64> = (0..=n).map(|k| a + (b - a) * (k as f64 / n as f64)).collect();
        let vals: Vec<Sample> = pts.iter().map(|&z| self.eval(z)).collect::<Result<_, _>>()?;
        let mut total = 0.0;
        for k in 0..n {
            let mut stack = vec![(vals[k], vals[k + 1])];
            while let Some((s0, s1)) = stack.pop() {
                let d = (s1.f / s0.f).arg();
                let len = (s1.z - s0.z).norm();
                if d.abs() < self.opts.max_arg_step && len <= s0.reach.min(s1.reach) {
                    total += d;
                    continue;
                }
                if len < self.opts.min_spacing * (1.0 + s0.z.norm()) {
                    return Err(Fail::Contour);
                }
                let sm = self.eval((s0.z + s1.z) * 0.5)?;
                stack.push((sm, s1));
                stack.push((s0, sm));
            }
        }
        Ok(total)
    }

    fn winding_of(&self, r: &Rect) -> Result<usize, Fail> {
        let c = |x: f64, y: f64| Complex64::new(x, y);
        let (x0, x1) = r.re;
        let (y0, y1) = r.im;
        let edges = [
            (c(x0, y0), c(x1, y0)),
            (c(x1, y0), c(x1, y1)),
            (c(x1, y1), c(x0, y1)),
            (c(x0, y1), c(x0, y0)),
        ];
        let mut total = 0.0;
        for (a, b) in edges {
            total += self.arg_increment(a, b)?;
        }
        to_count(total, "winding")
    }

    /// Number of zeros inside `rect`, counted with multiplicity.
    pub fn count(&self, rect: &Rect) -> Result<usize, RootError> {
        if !rect.valid() {
            return Err(RootError::BadRect(rect.re.0, rect.re.1, rect.im.0, rect.im.1));
        }
        let mut r = *rect;
        for attempt in 0..=self.opts.max_jitter {
            match self.winding_of(&r) {
                Ok(m) => return Ok(m),
                Err(Fail::Other(e)) => return Err(e),
                Err(Fail::Contour) => {
                    let j = jitter(attempt) * rect.diameter().min(1.0);
                    r = Rect::new((rect.re.0 - j, rect.re.1 + j), (rect.im.0 - j, rect.im.1 + j));
                }
            }
        }
        Err(RootError::ZeroOnContour {
            op: "count",
            attempts: self.opts.max_jitter,
        })
    }

    /// All zeros inside `rect`, sorted by real then imaginary part.
    pub fn find(&self, rect: &Rect) -> Result<Vec<Root>, RootError> {
        if !rect.valid() {
            return Err(RootError::BadRect(rect.re.0, rect.re.1, rect.im.0, rect.im.1));
        }
        let mut last = None;
        for attempt in 0..=self.opts.max_jitter {
            let shift = if attempt == 0 { 0.0 } else { jitter(attempt) };
            match self.find_once(rect, shift) {
                Ok(mut roots) => {
                    roots = merge(roots, self.opts.merge_tol);
                    roots.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
                    return Ok(roots);
                }
                Err(Fail::Other(e)) => return Err(e),
                Err(Fail::Contour) => last = Some(attempt),
            }
        }
        Err(RootError::ZeroOnContour {
            op: "find",
            attempts: last.unwrap_or(0),
        })
    }

    fn cuts(&self, rect: &Rect, shift: f64) -> Vec<f64> {
        let w0 = match &self.opts.cuts {
            Some(_) => 1.0,
            None => self.opts.cell_width,
        };
        let (a, b) = (rect.re.0 - shift * w0, rect.re.1 + shift * w0);
        let mut xs = vec![a];
        match &self.opts.cuts {
            Some(c) => xs.extend(c.iter().map(|x| x + shift).filter(|&x| x > a && x < b)),
            None => {
                let n = ((b - a) / self.opts.cell_width).ceil().max(1.0) as usize;
                let w = (b - a) / n as f64;
                xs.extend((1..n).map(|k| a + w * k as f64 + shift * w));
            }
        }
        xs.push(b);
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }

    fn find_once(&self, rect: &Rect, shift: f64) -> Result<Vec<Root>, Fail> {
        let h = rect.im.1 - rect.im.0;
        let y0 = rect.im.0 - shift * 0.37 * h.min(1.0) * 0.1;
        let y1 = rect.im.1 + shift * 0.61 * h.min(1.0) * 0.1;
        let xs = self.cuts(rect, shift);
        let c = |x: f64, y: f64| Complex64::new(x, y);
        let verticals: Vec<f64> = xs
            .par_iter()
            .map(|&x| self.arg_increment(c(x, y0), c(x, y1)))
            .collect::<Result<_, _>>()?;
        let cells: Vec<(Rect, f64, f64)> = xs
            .windows(2)
            .map(|w| (Rect::new((w[0], w[1]), (y0, y1)), w[0], w[1]))
            .collect();
        let horizontals: Vec<(f64, f64)> = cells
            .par_iter()
            .map(|(_, a, b)| Ok((self.arg_increment(c(*a, y0), c(*b, y0))?, self.arg_increment(c(*a, y1), c(*b, y1))?)))
            .collect::<Result<_, Fail>>()?;
        let mut jobs = Vec::new();
        for (i, (cell, _, _)) in cells.iter().enumerate() {
            let (bot, top) = horizontals[i];
            let total = bot + verticals[i + 1] - top - verticals[i];
            let m = to_count(total, "find")?;
            if m > 0 {
                jobs.push((*cell, m));
            }
        }
        let found: Vec<Vec<Root>> = jobs
            .par_iter()
            .map(|(cell, m)| self.resolve(cell, *m, 0))
            .collect::<Result<_, _>>()?;
        Ok(found.into_iter().flatten().collect())
    }

    fn resolve(&self, cell: &Rect, m: usize, depth: usize) -> Result<Vec<Root>, Fail> {
        if m == 0 {
            return Ok(Vec::new());
        }
        if depth > self.opts.max_depth {
            return Err(Fail::Other(RootError::TooDeep {
                op: "resolve",
                depth,
            }));
        }
        let size = (cell.re.1 - cell.re.0).max(cell.im.1 - cell.im.0);
        if m == 1 {
            if let Some(z) = self.newton(cell.center(), 1, cell) {
                return Ok(vec![Root { z, multiplicity: 1 }]);
            }
        } else if size < self.opts.cluster_size {
            return match self.newton(cell.center(), m, cell) {
                Some(z) => Ok(vec![Root { z, multiplicity: m }]),
                None => Ok(vec![Root {
                    z: cell.center(),
                    multiplicity: m,
                }]),
            };
        }
        for attempt in 0..=self.opts.max_jitter {
            let off = if attempt == 0 { 0.0 } else { jitter(attempt) * 0.2 };
            let xm = cell.re.0 + (cell.re.1 - cell.re.0) * (0.5 + off);
            let ym = cell.im.0 + (cell.im.1 - cell.im.0) * (0.5 - 0.7 * off);
            let kids = [
                Rect::new((cell.re.0, xm), (cell.im.0, ym)),
                Rect::new((xm, cell.re.1), (cell.im.0, ym)),
                Rect::new((cell.re.0, xm), (ym, cell.im.1)),
                Rect::new((xm, cell.re.1), (ym, cell.im.1)),
            ];
            let counts: Result<Vec<usize>, Fail> = kids.iter().map(|k| self.winding_of(k)).collect();
            match counts {
                Ok(ms) if ms.iter().sum::<usize>() == m => {
                    let mut out = Vec::new();
                    for (k, mk) in kids.iter().zip(ms) {
                        out.extend(self.resolve(k, mk, depth + 1)?);
                    }
                    return Ok(out);
                }
                Ok(_) | Err(Fail::Contour) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Fail::Contour)
    }

    /// Newton (or modified Newton for `m > 1`) started at `z`, accepted only inside `cell`.
    fn newton(&self, mut z: Complex64, m: usize, cell: &Rect) -> Option<Complex64> {
        let slack = 1e-9 * (1.0 + cell.diameter());
        for _ in 0..self.opts.max_newton {
            let (f, d) = (self.fd)(z).ok()?;
            if f == Complex64::new(0.0, 0.0) {
                return cell.contains(z, slack).then_some(z);
            }
            if d == Complex64::new(0.0, 0.0) || !d.re.is_finite() || !d.im.is_finite() {
                return None;
            }
            let step = f / d * m as f64;
            z -= step;
            if !cell.contains(z, cell.diameter()) {
                return None;
            }
            if step.norm() <= self.opts.newton_tol * (1.0 + z.norm()) {
                return cell.contains(z, slack).then_some(z);
            }
        }
        None
    }

    /// Newton polish from an arbitrary seed with no containment check.
    pub fn polish(&self, mut z: Complex64, m: usize) -> Result<Complex64, RootError> {
        let start = z;
        for _ in 0..self.opts.max_newton {
            let (f, d) = (self.fd)(z).map_err(RootError::Eval)?;
            if f == Complex64::new(0.0, 0.0) {
                return Ok(z);
            }
            if d == Complex64::new(0.0, 0.0) {
                return Err(RootError::NewtonFailed { at: start });
            }
            let step = f / d * m as f64;
            z -= step;
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(RootError::NewtonFailed { at: start });
            }
            if step.norm() <= self.opts.newton_tol * (1.0 + z.norm()) {
                return Ok(z);
            }
        }
        Err(RootError::NewtonFailed { at: start })
    }
}

fn jitter(attempt: usize) -> f64 {
    const J: [f64; 6] = [0.0, 0.0131, -0.0217, 0.0293, -0.0371, 0.0457];
    J[attempt.min(J.len() - 1)]
}

fn to_count(total: f64, op: &'static str) -> Result<usize, Fail> {
    let w = total / (2.0 * PI);
    let r = w.round();
    if (w - r).abs() > 0.1 || r < 0.0 {
        return Err(Fail::Other(RootError::NonIntegerWinding { op, value: w }));
    }
    Ok(r as usize)
}

/// Merge roots closer than `tol` (relative to `1 + |z|`), adding multiplicities.
pub fn merge(mut roots: Vec<Root>, tol: f64) -> Vec<Root> {
    roots.sort_by(|a, b| a.z.re.total_cmp(&b.z.re));
    let mut out: Vec<Root> = Vec::new();
    for r in roots {
        let hit = out
            .iter_mut()
            .rev()
            .take_while(|o| r.z.re - o.z.re <= tol * (1.0 + r.z.norm()))
            .find(|o| (o.z - r.z).norm() <= tol * (1.0 + r.z.norm()));
        match hit {
            Some(o) => {
                let m = o.multiplicity + r.multiplicity;
                o.z = (o.z * o.multiplicity as f64 + r.z * r.multiplicity as f64) / m as f64;
                o.multiplicity = m;
            }
            None => out.push(r),
        }
    }
    out
}

/// Expand roots into a list with each value repeated by its multiplicity.
pub fn expand(roots: &[Root]) -> Vec<Complex64> {
    roots
        .iter()
        .flat_map(|r| std::iter::repeat(r.z).take(r.multiplicity))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(r: f64, i: f64) -> Complex64 {
        Complex64::new(r, i)
    }

    fn poly_roots(zs: Vec<Complex64>, rect: Rect) -> Vec<Root> {
        let z2 = zs;
        let fd = move |z: Complex64| -> Result<(Complex64, Complex64), String> {
            let v: Complex64 = z2.iter().map(|r| z - r).product();
            let d: Complex64 = (0..z2.len())
                .map(|i| {
                    z2.iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, r)| z - r)
                        .product::<Complex64>()
                })
                .sum();
            Ok((v, d))
        };
        let opts = RootOptions::default();
        RootFinder::new(&fd, &opts).find(&rect).unwrap()
    }

    #[test]
    fn simple_polynomial_roots() {
        let truth = vec![c(0.3, 0.2), c(-1.1, -0.4), c(2.2, 0.0)];
        let got = poly_roots(truth, Rect::new((-3.0, 3.0), (-1.0, 1.0)));
        assert_eq!(got.len(), 3);
        assert!((got[0].z - c(-1.1, -0.4)).norm() < 1e-12);
        assert!((got[1].z - c(0.3, 0.2)).norm() < 1e-12);
        assert!((got[2].z - c(2.2, 0.0)).norm() < 1e-12);
        assert!(got.iter().all(|r| r.multiplicity == 1));
    }

    #[test]
    fn double_root_reported_once_with_multiplicity_two() {
        let got = poly_roots(vec![c(0.7, 0.1), c(0.7, 0.1), c(-0.9, 0.0)], Rect::new((-2.0, 2.0), (-1.0, 1.0)));
        assert_eq!(got.len(), 2);
        assert_eq!(got[1].multiplicity, 2);
        assert!((got[1].z - c(0.7, 0.1)).norm() < 1e-6);
        assert_eq!(expand(&got).len(), 3);
    }

    #[test]
    fn close_but_distinct_roots_separate() {
        let got = poly_roots(vec![c(0.5, 0.0), c(0.5 + 1e-3, 0.0)], Rect::new((-1.0, 2.0), (-1.0, 1.0)));
        assert_eq!(got.len(), 2);
        assert!((got[1].z.re - got[0].z.re - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn zeros_of_sine_by_strips() {
        let fd = |z: Complex64| -> Result<(Complex64, Complex64), String> { Ok(((z * PI).sin(), (z * PI).cos() * PI)) };
        let opts = RootOptions::default();
        let rf = RootFinder::new(&fd, &opts);
        // the strip cuts fall on integers here, which forces the jitter path
        let got = rf.find(&Rect::new((-3.5, 3.5), (-1.0, 1.0)));
        let roots = got.unwrap();
        let zs: Vec<f64> = roots.iter().map(|r| r.z.re).collect();
        assert_eq!(zs.len(), 7);
        for (k, z) in zs.iter().enumerate() {
            assert!((z - (k as f64 - 3.0)).abs() < 1e-12);
        }
        assert_eq!(rf.count(&Rect::new((0.5, 3.5), (-2.0, 2.0))).unwrap(), 3);
    }

    #[test]
    fn merge_sums_multiplicities() {
        let m = merge(
            vec![
                Root { z: c(1.0, 0.0), multiplicity: 1 },
                Root { z: c(1.0 + 1e-9, 0.0), multiplicity: 1 },
                Root { z: c(2.0, 0.0), multiplicity: 1 },
            ],
            1e-7,
        );
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].multiplicity, 2);
    }

    #[test]
    fn bad_rectangle_rejected() {
        let fd = |z: Complex64| -> Result<(Complex64, Complex64), String> { Ok((z, c(1.0, 0.0))) };
        let opts = RootOptions::default();
        let rf = RootFinder::new(&fd, &opts);
        assert!(matches!(rf.find(&Rect::new((1.0, 0.0), (0.0, 1.0))), Err(RootError::BadRect(..))));
    }
}
