//! Transformation kernels and the boundary-triple surrogate.
//!
//! For coefficients on `(0, π)` there are `K, N ∈ L₂(-π, π)` with
//!
//! ```text
//! λ S(π, λ)   = sin π(λ - ω₀) + ∫ K(t) e^{iλt} dt
//! S^[1](π, λ) = cos π(λ - ω₀) + ∫ N(t) e^{iλt} dt
//! ```
//!
//! and `ω₀` the mean of `p`. Sampling the left-hand sides at the integers
//! gives the Fourier coefficients `c_n = ∫ K(t) e^{int} dt` exactly, and the
//! transform is rebuilt from them by the cardinal series
//! `Σ c_n sinc(λ - n)`.
//!
//! The coefficients decay like `(-1)ⁿ(γ₁/n + γ₂/n² + γ₃/n³ + …)` because the
//! periodic extensions of `K` and `N` are not smooth at `t = ±π`. Each kernel
//! therefore carries a [`Tail`] of amplitudes for polynomial atoms `A_j(t)`
//! whose transforms `a_j` are entire with `a_j(n) = (-1)ⁿ/nʲ` for `n ≠ 0`.
//! The cardinal series is applied to what is left:
//!
//! ```text
//! ∫ K e^{iλt} = Σ_n (c_n - Σ_j γ_j a_j(n)) sinc(λ - n) + Σ_j γ_j a_j(λ)
//! ```

use crate::cjson;
use crate::coefficients::CoefficientPair;
use crate::forward::{ForwardError, ForwardSolver};
use crate::moments::{poly_jet, sinc, sinc_jet};
use num_complex::Complex64;
use rayon::prelude::*;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use std::f64::consts::PI;
use thiserror::Error;

type C = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernels: extract_triple: truncation {0} is below the minimum 8")]
    TruncationTooSmall(usize),
    #[error("kernels: extract_triple: interval ({0}, {1}) is not (0, π)")]
    NotUnitInterval(f64, f64),
    #[error("kernels: triple: coefficient vectors have lengths {k} and {n}; both must equal 2N+1")]
    BadLength { k: usize, n: usize },
    #[error("kernels: extract_triple: {0}")]
    Forward(#[from] ForwardError),
}

/// Which kernel to transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    K,
    N,
}

/// `ω₀` with the Fourier coefficients `c_n, n = -N..N` of `K` and `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTriple {
    #[serde(with = "cjson::one")]
    omega0: Complex64,
    #[serde(rename = "K", with = "cjson::vec")]
    k: Vec<Complex64>,
    #[serde(rename = "N", with = "cjson::vec")]
    n: Vec<Complex64>,
    #[serde(rename = "K_tail", with = "tail_json", default)]
    k_tail: Tail,
    #[serde(rename = "N_tail", with = "tail_json", default)]
    n_tail: Tail,
}

mod tail_json {
    use super::{Tail, TAIL_ATOMS};
    use crate::cjson::Cx;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(t: &Tail, s: S) -> Result<S::Ok, S::Error> {
        t.0.iter().map(|c| Cx(*c)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Tail, D::Error> {
        let v = Vec::<Cx>::deserialize(d)?;
        if v.len() > TAIL_ATOMS {
            return Err(D::Error::custom(format!("tail has {} amplitudes; at most {TAIL_ATOMS} allowed", v.len())));
        }
        let mut t = Tail::default();
        for (slot, c) in t.0.iter_mut().zip(v) {
            *slot = c.0;
        }
        Ok(t)
    }
}

fn zero() -> C {
    C::new(0.0, 0.0)
}

/// Number of polynomial atoms in a [`Tail`].
pub const TAIL_ATOMS: usize = 3;

/// Coefficients of `A_j`, `j = 1..=TAIL_ATOMS`: `A_1 = it/2π` and
/// `A_{j+1}(t) = -i ∫₋π^t (A_j(s) - a_j(0)/2π) ds`.
fn atoms() -> &'static [(Vec<C>, C); TAIL_ATOMS] {
    static ATOMS: OnceLock<[(Vec<C>, C); TAIL_ATOMS]> = OnceLock::new();
    ATOMS.get_or_init(|| {
        let integral = |p: &[C]| -> C {
            p.iter().enumerate().map(|(k, a)| if k % 2 == 0 { a * (2.0 * PI.powi(k as i32 + 1) / (k + 1) as f64) } else { zero() }).sum()
        };
        let mut p = vec![zero(), C::new(0.0, 1.0 / (2.0 * PI))];
        std::array::from_fn(|_| {
            let at0 = integral(&p);
            let out = (p.clone(), at0);
            let mut b = p.clone();
            b[0] -= at0 / (2.0 * PI);
            let mut q = vec![zero(); b.len() + 1];
            for (k, a) in b.iter().enumerate() {
                q[k + 1] = a * C::new(0.0, -1.0) / (k + 1) as f64;
            }
            let shift: C = q.iter().enumerate().map(|(k, a)| a * (-PI).powi(k as i32)).sum();
            q[0] -= shift;
            p = q;
            out
        })
    })
}

/// `a_j(n)`: `(-1)ⁿ/nʲ` for `n ≠ 0`.
pub fn atom_sample(j: usize, n: i64) -> C {
    if n == 0 {
        return atoms()[j].1;
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    C::new(sign / (n as f64).powi(j as i32 + 1), 0.0)
}

/// Scaled derivatives of `a_j(λ) = ∫ A_j(t) e^{iλt} dt`, `j = 0..TAIL_ATOMS`.
pub fn atom_jet(j: usize, lam: Complex64, order: usize) -> Vec<Complex64> {
    poly_jet(lam, &atoms()[j].0, order)
}

/// `∫ |A_j(t)|² dt`.
pub fn atom_norm_sqr(j: usize) -> f64 {
    let p = &atoms()[j].0;
    let mut acc = 0.0;
    for (a, x) in p.iter().enumerate() {
        for (b, y) in p.iter().enumerate() {
            let k = a + b;
            if k % 2 == 0 {
                acc += (x.conj() * y).re * 2.0 * PI.powi(k as i32 + 1) / (k + 1) as f64;
            }
        }
    }
    acc
}

/// Scaled derivatives in `λ` of `sin π(λ - ω₀)` (or of the cosine), `k = 0..=order`.
pub fn trig_jet(lam: Complex64, omega0: Complex64, order: usize, cosine: bool) -> Vec<Complex64> {
    let a = PI * (lam - omega0);
    let (s, c) = (a.sin(), a.cos());
    let mut fact = 1.0;
    (0..=order)
        .map(|k| {
            if k > 0 {
                fact *= k as f64;
            }
            let base = match (k % 4, cosine) {
                (0, false) | (3, true) => s,
                (1, false) | (0, true) => c,
                (2, false) | (1, true) => -s,
                _ => -c,
            };
            base * PI.powi(k as i32) / fact
        })
        .collect()
}

/// Amplitudes `γ_1..γ_J` of the polynomial atoms of one kernel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tail(pub [Complex64; TAIL_ATOMS]);

impl Tail {
    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|g| *g == zero())
    }

    /// Closed-form part at the integer `n`.
    pub fn sample(&self, n: i64) -> Complex64 {
        self.0.iter().enumerate().map(|(j, g)| g * atom_sample(j, n)).sum()
    }

    /// Scaled derivatives of the closed-form part at `λ`, `k = 0..=order`.
    pub fn jet(&self, lam: Complex64, order: usize) -> Vec<Complex64> {
        let deg = atoms()[TAIL_ATOMS - 1].0.len();
        let mut poly = vec![zero(); deg];
        for (g, (p, _)) in self.0.iter().zip(atoms()) {
            for (acc, a) in poly.iter_mut().zip(p) {
                *acc += g * a;
            }
        }
        poly_jet(lam, &poly, order)
    }

    /// Least-squares fit to the last sixteen coefficient pairs of `c`, `n = -N..N`.
    ///
    /// The odd part `(-1)ⁿn(c_n - c_{-n})/2` is a polynomial in `1/n²` with
    /// constant term `γ₁` and slope `γ₃`; the even part `(-1)ⁿn²(c_n + c_{-n})/2`
    /// has constant term `γ₂`.
    pub fn fit(c: &[Complex64]) -> Self {
        let nt = (c.len() - 1) / 2;
        let w = 16.min(nt);
        if w < 3 {
            return Tail::default();
        }
        let mut odd = Vec::with_capacity(w);
        let mut even = Vec::with_capacity(w);
        for n in (nt + 1 - w)..=nt {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let nf = n as f64;
            let x = 1.0 / (nf * nf);
            odd.push((x, (c[nt + n] - c[nt - n]) * (0.5 * sign * nf)));
            even.push((x, (c[nt + n] + c[nt - n]) * (0.5 * sign * nf * nf)));
        }
        let o = quadratic_fit(&odd);
        let e = quadratic_fit(&even);
        Tail([o[0], e[0], o[1]])
    }
}

/// Least-squares `y ≈ b₀ + b₁x + b₂x²`.
fn quadratic_fit(data: &[(f64, C)]) -> [C; 3] {
    // scale x to O(1) for conditioning
    let xmax = data.iter().map(|d| d.0).fold(0.0, f64::max);
    let a = DMatrix::from_fn(data.len(), 3, |i, j| (data[i].0 / xmax).powi(j as i32));
    let svd = a.svd(true, true);
    let solve = |ys: DVector<f64>| svd.solve(&ys, 1e-14).expect("svd with vectors");
    let re = solve(DVector::from_iterator(data.len(), data.iter().map(|d| d.1.re)));
    let im = solve(DVector::from_iterator(data.len(), data.iter().map(|d| d.1.im)));
    std::array::from_fn(|j| C::new(re[j], im[j]) / xmax.powi(j as i32))
}

impl BoundaryTriple {
    pub fn new(omega0: Complex64, k: Vec<Complex64>, n: Vec<Complex64>) -> Result<Self, KernelError> {
        if k.len() != n.len() || k.len() % 2 == 0 || k.len() < 3 {
            return Err(KernelError::BadLength { k: k.len(), n: n.len() });
        }
        Ok(BoundaryTriple {
            omega0,
            k,
            n,
            k_tail: Tail::default(),
            n_tail: Tail::default(),
        })
    }

    pub fn with_tails(mut self, k: Tail, n: Tail) -> Self {
        self.k_tail = k;
        self.n_tail = n;
        self
    }

    /// Tails fitted from the coefficients themselves.
    pub fn with_estimated_tails(self) -> Self {
        let (a, b) = (Tail::fit(&self.k), Tail::fit(&self.n));
        self.with_tails(a, b)
    }

    /// Triple whose only nonzero coefficient is `c_0 = sin πω₀` of `K`.
    pub fn free(omega0: Complex64, truncation: usize) -> Self {
        let len = 2 * truncation + 1;
        let mut k = vec![zero(); len];
        k[truncation] = (omega0 * PI).sin();
        BoundaryTriple::new(omega0, k, vec![zero(); len]).expect("valid lengths")
    }

    pub fn truncation(&self) -> usize {
        (self.k.len() - 1) / 2
    }

    pub fn omega0(&self) -> Complex64 {
        self.omega0
    }

    pub fn k_coeffs(&self) -> &[Complex64] {
        &self.k
    }

    pub fn n_coeffs(&self) -> &[Complex64] {
        &self.n
    }

    pub fn tail(&self, which: Kernel) -> Tail {
        match which {
            Kernel::K => self.k_tail,
            Kernel::N => self.n_tail,
        }
    }

    /// Coefficient `c_n` of the chosen kernel.
    pub fn coeff(&self, which: Kernel, n: i64) -> Complex64 {
        let v = match which {
            Kernel::K => &self.k,
            Kernel::N => &self.n,
        };
        v[(n + self.truncation() as i64) as usize]
    }

    /// Same kernels with `ω₀` replaced.
    pub fn with_omega0(&self, omega0: Complex64) -> Self {
        BoundaryTriple { omega0, ..self.clone() }
    }

    /// Every coefficient and tail multiplied by `-1`.
    pub fn negated(&self) -> Self {
        BoundaryTriple {
            omega0: self.omega0,
            k: self.k.iter().map(|c| -c).collect(),
            n: self.n.iter().map(|c| -c).collect(),
            k_tail: Tail(self.k_tail.0.map(|g| -g)),
            n_tail: Tail(self.n_tail.0.map(|g| -g)),
        }
    }

    /// `c_0 - sin πω₀`; zero for a genuine problem since `∫K = c_0`.
    pub fn analyticity_defect(&self) -> Complex64 {
        self.k[self.truncation()] - (self.omega0 * PI).sin()
    }

    fn parts(&self, which: Kernel) -> (&[C], Tail) {
        let c = match which {
            Kernel::K => &self.k,
            Kernel::N => &self.n,
        };
        (c, self.tail(which))
    }

    /// `∫ kernel(t) e^{iλt} dt`.
    pub fn transform(&self, which: Kernel, lam: Complex64) -> Complex64 {
        let (c, g) = self.parts(which);
        let nt = self.truncation() as i64;
        let near = (lam.re.round() as i64, (lam - lam.re.round()).norm() < 1e-3);
        let s = (lam * PI).sin() / PI;
        let mut acc = zero();
        for (idx, cn) in c.iter().enumerate() {
            let n = idx as i64 - nt;
            let r = cn - g.sample(n);
            if r == zero() {
                continue;
            }
            let term = if near.1 && near.0 == n {
                sinc(lam - n as f64)
            } else {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                s * sign / (lam - n as f64)
            };
            acc += r * term;
        }
        if !g.is_zero() {
            acc += g.jet(lam, 0)[0];
        }
        acc
    }

    /// Scaled derivatives of the transform, `k = 0..=order`.
    pub fn transform_jet(&self, which: Kernel, lam: Complex64, order: usize) -> Vec<Complex64> {
        if order == 0 {
            return vec![self.transform(which, lam)];
        }
        let (c, g) = self.parts(which);
        let nt = self.truncation() as i64;
        let mut acc = vec![zero(); order + 1];
        for (idx, cn) in c.iter().enumerate() {
            let n = idx as i64 - nt;
            let r = cn - g.sample(n);
            if r == zero() {
                continue;
            }
            for (a, s) in acc.iter_mut().zip(sinc_jet(lam - n as f64, order)) {
                *a += r * s;
            }
        }
        if !g.is_zero() {
            for (a, s) in acc.iter_mut().zip(g.jet(lam, order)) {
                *a += s;
            }
        }
        acc
    }

    /// `S(π, λ)`.
    pub fn eval_s(&self, lam: Complex64) -> Complex64 {
        if lam.norm() < 0.1 {
            return self.s_jet_circle(lam, 0)[0];
        }
        ((PI * (lam - self.omega0)).sin() + self.transform(Kernel::K, lam)) / lam
    }

    /// `S^[1](π, λ)`.
    pub fn eval_s1(&self, lam: Complex64) -> Complex64 {
        (PI * (lam - self.omega0)).cos() + self.transform(Kernel::N, lam)
    }

    /// `λ S(π, λ)`, entire without special casing.
    pub fn eval_lambda_s(&self, lam: Complex64) -> Complex64 {
        (PI * (lam - self.omega0)).sin() + self.transform(Kernel::K, lam)
    }

    /// Scaled derivatives of `λ S(π, λ)`.
    pub fn lambda_s_jet(&self, lam: Complex64, order: usize) -> Vec<Complex64> {
        let t = trig_jet(lam, self.omega0, order, false);
        let g = self.transform_jet(Kernel::K, lam, order);
        t.iter().zip(&g).map(|(a, b)| a + b).collect()
    }

    /// Scaled derivatives of `S(π, λ)`.
    pub fn s_jet(&self, lam: Complex64, order: usize) -> Vec<Complex64> {
        if lam.norm() < 0.1 {
            return self.s_jet_circle(lam, order);
        }
        let f = self.lambda_s_jet(lam, order);
        // S = F/λ: F_k = λ S_k + S_{k-1}
        let mut s = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let prev = if k > 0 { s[k - 1] } else { zero() };
            s.push((f[k] - prev) / lam);
        }
        s
    }

    /// Scaled derivatives of `S^[1](π, λ)`.
    pub fn s1_jet(&self, lam: Complex64, order: usize) -> Vec<Complex64> {
        let t = trig_jet(lam, self.omega0, order, true);
        let g = self.transform_jet(Kernel::N, lam, order);
        t.iter().zip(&g).map(|(a, b)| a + b).collect()
    }

    /// Cauchy integrals on a circle of radius 0.25 around `λ`, for `|λ|` small.
    fn s_jet_circle(&self, lam: Complex64, order: usize) -> Vec<Complex64> {
        let q = 32;
        let r = 0.25;
        let pts: Vec<(C, C)> = (0..q)
            .map(|j| {
                let w = C::from_polar(1.0, 2.0 * PI * j as f64 / q as f64);
                let z = lam + w * r;
                (w, ((PI * (z - self.omega0)).sin() + self.transform(Kernel::K, z)) / z)
            })
            .collect();
        (0..=order)
            .map(|k| pts.iter().map(|(w, v)| v * w.powi(-(k as i32))).sum::<C>() / (q as f64 * r.powi(k as i32)))
            .collect()
    }
}

/// Sample `K, N` coefficients from the forward problem, `n = -N..N`.
pub fn extract_triple(cp: &CoefficientPair, truncation: usize) -> Result<BoundaryTriple, KernelError> {
    extract_triple_with(&ForwardSolver::default(), cp, truncation)
}

pub fn extract_triple_with(
    solver: &ForwardSolver,
    cp: &CoefficientPair,
    truncation: usize,
) -> Result<BoundaryTriple, KernelError> {
    if truncation < 8 {
        return Err(KernelError::TruncationTooSmall(truncation));
    }
    let (a, b) = cp.interval();
    if a.abs() > 1e-12 || (b - PI).abs() > 1e-12 {
        return Err(KernelError::NotUnitInterval(a, b));
    }
    let w0 = cp.mean_p();
    let nt = truncation as i64;
    let samples: Vec<(C, C)> = (-nt..=nt)
        .into_par_iter()
        .map(|n| {
            let lam = C::new(n as f64, 0.0);
            let s = solver.boundary_s(cp, lam)?;
            let arg = (lam - w0) * PI;
            let fk = if n == 0 { -arg.sin() } else { lam * s.y - arg.sin() };
            Ok((fk, s.y1 - arg.cos()))
        })
        .collect::<Result<_, ForwardError>>()?;
    let (k, n): (Vec<C>, Vec<C>) = samples.into_iter().unzip();
    Ok(BoundaryTriple::new(w0, k, n)?.with_estimated_tails())
}
