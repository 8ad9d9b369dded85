//! Entire functions of the spectral parameter.
//!
//! An [`EntireExpr`] is a small expression tree. Derivatives are computed by
//! propagating truncated Taylor series ("jets") through the tree, so
//! `deriv(f, λ, ν)` returns the scaled derivative `f^{<ν>}(λ) = f^{(ν)}(λ)/ν!`
//! exactly up to rounding. Leaves backed by a numerical solver are memoized
//! and differentiated by trapezoidal Cauchy quadrature on a small circle.

use crate::cjson::Cx;
use num_complex::Complex64;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Highest scaled derivative order the pipeline asks for.
pub const MAX_ORDER: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntireError {
    #[error("entire: eval: solver-backed tag `{0}` is not registered")]
    Unregistered(String),
    #[error("entire: deriv: order {0} exceeds the supported maximum {MAX_ORDER}")]
    OrderTooHigh(usize),
    #[error("entire: deriv: contour of radius {radius} around {center} touches a singularity marker")]
    ContourCollision { center: Complex64, radius: f64 },
    #[error("entire: solver `{tag}` failed: {message}")]
    Solver { tag: String, message: String },
    #[error("entire: malformed expression: {0}")]
    Parse(String),
}

type Callable = dyn Fn(Complex64) -> Result<Complex64, String> + Send + Sync;

/// Numerically evaluated entire function with a memo table keyed by `λ`.
pub struct SolverFn {
    tag: String,
    func: Box<Callable>,
    memo: Mutex<HashMap<(u64, u64), Complex64>>,
    radius: f64,
    nodes: usize,
    singularities: Vec<Complex64>,
}

impl fmt::Debug for SolverFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolverFn")
            .field("tag", &self.tag)
            .field("radius", &self.radius)
            .field("nodes", &self.nodes)
            .finish_non_exhaustive()
    }
}

impl SolverFn {
    pub fn new(
        tag: impl Into<String>,
        func: impl Fn(Complex64) -> Result<Complex64, String> + Send + Sync + 'static,
    ) -> Self {
        SolverFn {
            tag: tag.into(),
            func: Box::new(func),
            memo: Mutex::new(HashMap::new()),
            radius: 0.1,
            nodes: 32,
            singularities: Vec::new(),
        }
    }

    /// Cauchy contour used for derivatives (defaults r = 0.1, Q = 32).
    pub fn with_contour(mut self, radius: f64, nodes: usize) -> Self {
        self.radius = radius;
        self.nodes = nodes.max(4);
        self
    }

    /// Points the derivative contour must keep clear of.
    pub fn with_singularities(mut self, s: Vec<Complex64>) -> Self {
        self.singularities = s;
        self
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn memo_len(&self) -> usize {
        self.memo.lock().len()
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64, EntireError> {
        let key = (z.re.to_bits(), z.im.to_bits());
        if let Some(v) = self.memo.lock().get(&key) {
            return Ok(*v);
        }
        // evaluated outside the lock; a concurrent duplicate insert stores the same value
        let v = (self.func)(z).map_err(|message| EntireError::Solver {
            tag: self.tag.clone(),
            message,
        })?;
        self.memo.lock().insert(key, v);
        Ok(v)
    }

    /// Taylor coefficients `f^{<k>}(z)`, `k = 0..=order`.
    pub fn taylor(&self, z: Complex64, order: usize) -> Result<Vec<Complex64>, EntireError> {
        let f0 = self.eval(z)?;
        if order == 0 {
            return Ok(vec![f0]);
        }
        if self
            .singularities
            .iter()
            .any(|s| (s - z).norm() <= self.radius * (1.0 + 1e-12))
        {
            return Err(EntireError::ContourCollision {
                center: z,
                radius: self.radius,
            });
        }
        let q = self.nodes;
        let samples: Vec<(Complex64, Complex64)> = (0..q)
            .map(|j| {
                let w = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / q as f64);
                self.eval(z + w * self.radius).map(|v| (w, v))
            })
            .collect::<Result<_, _>>()?;
        let mut out = Vec::with_capacity(order + 1);
        out.push(f0);
        for k in 1..=order {
            let s: Complex64 = samples.iter().map(|(w, v)| v * w.powi(-(k as i32))).sum();
            out.push(s / (q as f64 * self.radius.powi(k as i32)));
        }
        Ok(out)
    }
}

/// Tagged reference to a [`SolverFn`]; unbound until resolved against a [`Registry`].
#[derive(Clone)]
pub struct SolverRef {
    tag: String,
    func: Option<Arc<SolverFn>>,
}

impl fmt::Debug for SolverRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Solver({}{})", self.tag, if self.func.is_some() { "" } else { ", unbound" })
    }
}

#[derive(Debug, Default, Clone)]
pub struct Registry {
    map: HashMap<String, Arc<SolverFn>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, f: Arc<SolverFn>) {
        self.map.insert(f.tag.clone(), f);
    }

    pub fn get(&self, tag: &str) -> Option<&Arc<SolverFn>> {
        self.map.get(tag)
    }
}

#[derive(Debug, Clone)]
pub enum EntireExpr {
    Const(Complex64),
    Var,
    /// `a·λ + b`
    Affine { a: Complex64, b: Complex64 },
    Sum(Vec<EntireExpr>),
    Prod(Vec<EntireExpr>),
    Neg(Box<EntireExpr>),
    Sin(Box<EntireExpr>),
    Cos(Box<EntireExpr>),
    Exp(Box<EntireExpr>),
    /// Coefficients in increasing degree.
    Poly(Vec<Complex64>),
    Solver(SolverRef),
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn jet_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    (0..a.len())
        .map(|k| (0..=k).map(|j| a[j] * b[k - j]).sum())
        .collect()
}

fn jet_sin_cos(u: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let n = u.len();
    let mut s = vec![u[0].sin(); 1];
    let mut c = vec![u[0].cos(); 1];
    for k in 1..n {
        let mut sk = Complex64::new(0.0, 0.0);
        let mut ck = Complex64::new(0.0, 0.0);
        for j in 1..=k {
            let ju = u[j] * j as f64;
            sk += ju * c[k - j];
            ck -= ju * s[k - j];
        }
        s.push(sk / k as f64);
        c.push(ck / k as f64);
    }
    (s, c)
}

fn jet_exp(u: &[Complex64]) -> Vec<Complex64> {
    let mut e = vec![u[0].exp()];
    for k in 1..u.len() {
        let sk: Complex64 = (1..=k).map(|j| u[j] * j as f64 * e[k - j]).sum();
        e.push(sk / k as f64);
    }
    e
}

impl EntireExpr {
    pub fn constant(c: Complex64) -> Self {
        EntireExpr::Const(c)
    }

    pub fn real(c: f64) -> Self {
        EntireExpr::Const(re(c))
    }

    pub fn affine(a: Complex64, b: Complex64) -> Self {
        EntireExpr::Affine { a, b }
    }

    pub fn sin(arg: EntireExpr) -> Self {
        EntireExpr::Sin(Box::new(arg))
    }

    pub fn cos(arg: EntireExpr) -> Self {
        EntireExpr::Cos(Box::new(arg))
    }

    pub fn exp(arg: EntireExpr) -> Self {
        EntireExpr::Exp(Box::new(arg))
    }

    pub fn neg(arg: EntireExpr) -> Self {
        EntireExpr::Neg(Box::new(arg))
    }

    pub fn solver(f: Arc<SolverFn>) -> Self {
        EntireExpr::Solver(SolverRef {
            tag: f.tag.clone(),
            func: Some(f),
        })
    }

    pub fn unbound_solver(tag: impl Into<String>) -> Self {
        EntireExpr::Solver(SolverRef {
            tag: tag.into(),
            func: None,
        })
    }

    /// True when the tree is syntactically the zero constant.
    pub fn is_zero_const(&self) -> bool {
        match self {
            EntireExpr::Const(c) => *c == re(0.0),
            EntireExpr::Poly(cs) => cs.iter().all(|c| *c == re(0.0)),
            _ => false,
        }
    }

    /// Resolve every solver tag against `reg`.
    pub fn bind(&mut self, reg: &Registry) -> Result<(), EntireError> {
        match self {
            EntireExpr::Solver(r) => {
                let f = reg
                    .get(&r.tag)
                    .ok_or_else(|| EntireError::Unregistered(r.tag.clone()))?;
                r.func = Some(f.clone());
                Ok(())
            }
            EntireExpr::Sum(xs) | EntireExpr::Prod(xs) => xs.iter_mut().try_for_each(|x| x.bind(reg)),
            EntireExpr::Neg(x) | EntireExpr::Sin(x) | EntireExpr::Cos(x) | EntireExpr::Exp(x) => x.bind(reg),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64, EntireError> {
        Ok(self.jet(z, 0)?[0])
    }

    /// `f^{<ν>}(z)`, the ν-th derivative divided by ν!.
    pub fn deriv(&self, z: Complex64, nu: usize) -> Result<Complex64, EntireError> {
        Ok(self.jet(z, nu)?[nu])
    }

    /// All scaled derivatives `f^{<0>}(z), …, f^{<order>}(z)`.
    pub fn jet(&self, z: Complex64, order: usize) -> Result<Vec<Complex64>, EntireError> {
        if order > MAX_ORDER {
            return Err(EntireError::OrderTooHigh(order));
        }
        let n = order + 1;
        let zero = re(0.0);
        let out = match self {
            EntireExpr::Const(c) => {
                let mut v = vec![zero; n];
                v[0] = *c;
                v
            }
            EntireExpr::Var => {
                let mut v = vec![zero; n];
                v[0] = z;
                if n > 1 {
                    v[1] = re(1.0);
                }
                v
            }
            EntireExpr::Affine { a, b } => {
                let mut v = vec![zero; n];
                v[0] = a * z + b;
                if n > 1 {
                    v[1] = *a;
                }
                v
            }
            EntireExpr::Sum(xs) => {
                let mut acc = vec![zero; n];
                for x in xs {
                    for (a, b) in acc.iter_mut().zip(x.jet(z, order)?) {
                        *a += b;
                    }
                }
                acc
            }
            EntireExpr::Prod(xs) => {
                let mut acc = vec![zero; n];
                acc[0] = re(1.0);
                for x in xs {
                    acc = jet_mul(&acc, &x.jet(z, order)?);
                }
                acc
            }
            EntireExpr::Neg(x) => x.jet(z, order)?.into_iter().map(|v| -v).collect(),
            EntireExpr::Sin(x) => jet_sin_cos(&x.jet(z, order)?).0,
            EntireExpr::Cos(x) => jet_sin_cos(&x.jet(z, order)?).1,
            EntireExpr::Exp(x) => jet_exp(&x.jet(z, order)?),
            EntireExpr::Poly(cs) => {
                let mut var = vec![zero; n];
                var[0] = z;
                if n > 1 {
                    var[1] = re(1.0);
                }
                let mut acc = vec![zero; n];
                for c in cs.iter().rev() {
                    acc = jet_mul(&acc, &var);
                    acc[0] += c;
                }
                acc
            }
            EntireExpr::Solver(r) => match &r.func {
                Some(f) => f.taylor(z, order)?,
                None => return Err(EntireError::Unregistered(r.tag.clone())),
            },
        };
        Ok(out)
    }

    pub fn to_json(&self) -> ExprJson {
        match self {
            EntireExpr::Const(c) => ExprJson::Const { value: Cx(*c) },
            EntireExpr::Var => ExprJson::Var,
            EntireExpr::Affine { a, b } => ExprJson::Axpb { a: Cx(*a), b: Cx(*b) },
            EntireExpr::Sum(xs) => ExprJson::Sum {
                args: xs.iter().map(|x| x.to_json()).collect(),
            },
            EntireExpr::Prod(xs) => ExprJson::Prod {
                args: xs.iter().map(|x| x.to_json()).collect(),
            },
            EntireExpr::Neg(x) => ExprJson::Neg { arg: Box::new(x.to_json()) },
            EntireExpr::Sin(x) => ExprJson::Sin { arg: Box::new(x.to_json()) },
            EntireExpr::Cos(x) => ExprJson::Cos { arg: Box::new(x.to_json()) },
            EntireExpr::Exp(x) => ExprJson::Exp { arg: Box::new(x.to_json()) },
            EntireExpr::Poly(cs) => ExprJson::Poly {
                coeffs: cs.iter().map(|&c| Cx(c)).collect(),
            },
            EntireExpr::Solver(r) => ExprJson::Solver { tag: r.tag.clone() },
        }
    }

    /// Parse the JSON grammar; solver tags are left unbound.
    pub fn from_json_str(s: &str) -> Result<Self, EntireError> {
        let j: ExprJson = serde_json::from_str(s).map_err(|e| EntireError::Parse(e.to_string()))?;
        Ok(j.into())
    }
}

/// JSON grammar, e.g. `{"op":"sin","arg":{"op":"axpb","a":1,"b":0}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum ExprJson {
    Const { value: Cx },
    Var,
    Axpb { a: Cx, b: Cx },
    Sum { args: Vec<ExprJson> },
    Prod { args: Vec<ExprJson> },
    Neg { arg: Box<ExprJson> },
    Sin { arg: Box<ExprJson> },
    Cos { arg: Box<ExprJson> },
    Exp { arg: Box<ExprJson> },
    Poly { coeffs: Vec<Cx> },
    Solver { tag: String },
}

impl From<ExprJson> for EntireExpr {
    fn from(j: ExprJson) -> Self {
        match j {
            ExprJson::Const { value } => EntireExpr::Const(value.0),
            ExprJson::Var => EntireExpr::Var,
            ExprJson::Axpb { a, b } => EntireExpr::Affine { a: a.0, b: b.0 },
            ExprJson::Sum { args } => EntireExpr::Sum(args.into_iter().map(Into::into).collect()),
            ExprJson::Prod { args } => EntireExpr::Prod(args.into_iter().map(Into::into).collect()),
            ExprJson::Neg { arg } => EntireExpr::neg((*arg).into()),
            ExprJson::Sin { arg } => EntireExpr::sin((*arg).into()),
            ExprJson::Cos { arg } => EntireExpr::cos((*arg).into()),
            ExprJson::Exp { arg } => EntireExpr::exp((*arg).into()),
            ExprJson::Poly { coeffs } => EntireExpr::Poly(coeffs.into_iter().map(|c| c.0).collect()),
            ExprJson::Solver { tag } => EntireExpr::unbound_solver(tag),
        }
    }
}
