//! Reconstruction of `S(π, λ)` and `S^[1](π, λ)` from a subspectrum.
//!
//! Writing `u = [N̄, K̄]` and `(g, h) = ∫ (ḡ₁h₁ + ḡ₂h₂)`, every eigenvalue gives
//! a linear condition `(u, v^{<ν>}(·, λ_n)) = w^{<ν>}(λ_n)` with
//!
//! ```text
//! v(t, λ) = [λ f₁(λ) e^{iλt}, f₂(λ) e^{iλt}]
//! w(λ)    = -λ f₁(λ) cos π(λ - ω₀) - f₂(λ) sin π(λ - ω₀)
//! ```
//!
//! plus `(u, [0, 1]) = sin πω₀` from analyticity at the origin. The
//! finite section is solved by ridge-regularized least squares, after which
//! the kernels give `S`, `S^[1]`, their zeros `θ_k` and the Weyl residues.
//!
//! Components of an [`HVector`] are truncated exponential series
//! `Σ_{|n|≤T} g_n e^{int}` plus multiples of the conjugated tail atoms
//! `conj A_j` from [`crate::kernels`]. For a *row* `v_k` the tail slots hold
//! the pairings `∫ A_j v` instead, so that [`HVector::inner`] is exact.

use crate::coefficients::CoefficientPair;
use crate::entire::{EntireError, EntireExpr, MAX_ORDER};
use crate::forward::{ForwardError, ForwardSolver, Medium, Subspectrum};
use crate::kernels::{atom_jet, atom_norm_sqr, atom_sample, trig_jet, BoundaryTriple, Kernel, KernelError, Tail, TAIL_ATOMS};
use crate::moments::{sinc, sinc_jet};
use crate::roots::{expand, Rect, RootError, RootFinder, RootOptions};
use crate::cjson;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InverseError {
    #[error("inverse: build_moment_system: multiplicity {nu} at lambda = {lambda} exceeds the derivative limit {MAX_ORDER}")]
    DerivativeLimit { lambda: Complex64, nu: usize },
    #[error("inverse: {op}: {source}")]
    Entire { op: &'static str, source: EntireError },
    #[error("inverse: solve_u: no rows")]
    NoRows,
    #[error("inverse: solve_u: finite section incomplete: effective rank {rank} of {needed} band coefficients")]
    Incomplete { rank: usize, needed: usize },
    #[error("inverse: solve_u: singular value decomposition failed")]
    Svd,
    #[error("inverse: locate_thetas: {0}")]
    Roots(#[from] RootError),
    #[error("inverse: locate_thetas: found {found} zeros in the window, expected {expected}")]
    ThetaCount { found: usize, expected: usize },
    #[error("inverse: weyl_residues: S^[1](pi, theta) vanishes at theta = {0}")]
    VanishingS1(Complex64),
    #[error("inverse: parity_fix: omega0 - (omega0 mod 1) = {0} is not an integer")]
    ParityNotInteger(Complex64),
    #[error("inverse: sigma_shift: |S(pi, lambda)| < 1e-6 at probe {0}")]
    ProbeNearZero(Complex64),
    #[error("inverse: sigma_shift: h varies by {0:e} across probes")]
    NonConstantShift(f64),
    #[error("inverse: sigma_shift: no probes")]
    NoProbes,
    #[error("inverse: {0}")]
    Kernel(#[from] KernelError),
    #[error("inverse: sigma_shift: {0}")]
    Forward(#[from] ForwardError),
}

/// Element of `L₂(-π, π) ⊕ L₂(-π, π)` in the truncated exponential basis plus tail atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct HVector {
    pub first: Vec<Complex64>,
    pub first_tail: [Complex64; TAIL_ATOMS],
    pub second: Vec<Complex64>,
    pub second_tail: [Complex64; TAIL_ATOMS],
}

impl HVector {
    pub fn zero(truncation: usize) -> Self {
        HVector {
            first: vec![ZERO; 2 * truncation + 1],
            first_tail: [ZERO; TAIL_ATOMS],
            second: vec![ZERO; 2 * truncation + 1],
            second_tail: [ZERO; TAIL_ATOMS],
        }
    }

    pub fn truncation(&self) -> usize {
        (self.first.len() - 1) / 2
    }

    /// `(self, row)`, conjugating `self`.
    pub fn inner(&self, row: &HVector) -> Complex64 {
        let band: C = self.first.iter().zip(&row.first).chain(self.second.iter().zip(&row.second)).map(|(a, b)| a.conj() * b).sum();
        let tails: C = self
            .first_tail
            .iter()
            .zip(&row.first_tail)
            .chain(self.second_tail.iter().zip(&row.second_tail))
            .map(|(a, b)| a.conj() * b)
            .sum();
        band * (2.0 * PI) + tails
    }

    /// `√(2π)·ℓ₂` of the band coefficients together with `‖A_j‖`-weighted tails.
    pub fn norm(&self) -> f64 {
        let band: f64 = self.first.iter().chain(&self.second).map(|c| c.norm_sqr()).sum();
        let tails: f64 = (0..TAIL_ATOMS)
            .map(|j| (self.first_tail[j].norm_sqr() + self.second_tail[j].norm_sqr()) * atom_norm_sqr(j))
            .sum();
        (2.0 * PI * band + tails).sqrt()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        HVector {
            first: self.first.iter().map(|c| c * s).collect(),
            first_tail: self.first_tail.map(|c| c * s),
            second: self.second.iter().map(|c| c * s).collect(),
            second_tail: self.second_tail.map(|c| c * s),
        }
    }

    /// `u = [N̄, K̄]` of a boundary triple.
    pub fn from_triple(bt: &BoundaryTriple) -> Self {
        let nt = bt.truncation() as i64;
        let part = |which: Kernel| {
            let tail = bt.tail(which);
            let band = (-nt..=nt).map(|n| (bt.coeff(which, n) - tail.sample(n)).conj() / (2.0 * PI)).collect();
            (band, tail.0.map(|g| g.conj()))
        };
        let (first, first_tail) = part(Kernel::N);
        let (second, second_tail) = part(Kernel::K);
        HVector {
            first,
            first_tail,
            second,
            second_tail,
        }
    }
}

/// Rows `v_k` and right-hand sides `w_k` of the finite section.
#[derive(Debug, Clone)]
pub struct MomentSystem {
    pub vs: Vec<HVector>,
    pub ws: Vec<Complex64>,
    /// `(λ_n, ν)` of every row; the analyticity row is `(0, 0)`.
    pub nodes: Vec<(Complex64, usize)>,
}

impl MomentSystem {
    pub fn len(&self) -> usize {
        self.vs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vs.is_empty()
    }

    /// `(u, v_k) - w_k` for every row.
    pub fn residuals(&self, u: &HVector) -> Vec<Complex64> {
        self.vs.iter().zip(&self.ws).map(|(v, w)| u.inner(v) - w).collect()
    }
}

fn ent(op: &'static str) -> impl Fn(EntireError) -> InverseError {
    move |source| InverseError::Entire { op, source }
}

/// Leibniz product of two scaled-derivative jets, entry `order`.
fn leibniz(a: &[C], b: &[C], order: usize) -> C {
    (0..=order).map(|j| a[j] * b[order - j]).sum()
}

/// Subspectrum entries with `|λ| ≤ T - 2`, plus `λ₀ = 0`.
pub fn build_moment_system(sub: &Subspectrum, f1: &EntireExpr, f2: &EntireExpr, truncation: usize) -> Result<MomentSystem, InverseError> {
    build_moment_system_at(sub, f1, f2, truncation, sub.omega0_mod1())
}

/// As [`build_moment_system`] with an explicit, unreduced `ω₀`.
pub fn build_moment_system_at(
    sub: &Subspectrum,
    f1: &EntireExpr,
    f2: &EntireExpr,
    truncation: usize,
    omega0: Complex64,
) -> Result<MomentSystem, InverseError> {
    let limit = truncation as f64 - 2.0;
    let mut nodes = vec![(ZERO, 0usize)];
    for (lam, m) in sub.groups() {
        if lam.norm() > limit {
            continue;
        }
        // a genuine zero at the origin extends the λ₀ group
        let first = if lam == ZERO { 1 } else { 0 };
        let last = if lam == ZERO { m } else { m - 1 };
        for nu in first..=last {
            if nu > MAX_ORDER {
                return Err(InverseError::DerivativeLimit { lambda: lam, nu });
            }
            nodes.push((lam, nu));
        }
    }
    let rows: Vec<(HVector, C)> = nodes
        .par_iter()
        .enumerate()
        .map(|(k, &(lam, nu))| {
            if k == 0 {
                Ok(analyticity_row(truncation, omega0))
            } else {
                moment_row(lam, nu, f1, f2, omega0, truncation)
            }
        })
        .collect::<Result<_, InverseError>>()?;
    let (vs, ws) = rows.into_iter().unzip();
    Ok(MomentSystem { vs, ws, nodes })
}

fn analyticity_row(truncation: usize, omega0: C) -> (HVector, C) {
    let mut v = HVector::zero(truncation);
    v.second[truncation] = C::new(1.0, 0.0);
    for j in 0..TAIL_ATOMS {
        v.second_tail[j] = atom_sample(j, 0);
    }
    (v, (omega0 * PI).sin())
}

fn moment_row(lam: C, nu: usize, f1: &EntireExpr, f2: &EntireExpr, omega0: C, truncation: usize) -> Result<(HVector, C), InverseError> {
    let a = f1.jet(lam, nu).map_err(ent("build_moment_system"))?;
    // λ f₁(λ)
    let la: Vec<C> = (0..=nu).map(|k| lam * a[k] + if k > 0 { a[k - 1] } else { ZERO }).collect();
    let b = f2.jet(lam, nu).map_err(ent("build_moment_system"))?;
    let nt = truncation as i64;
    let mut v = HVector::zero(truncation);
    let first_on = la.iter().any(|c| *c != ZERO);
    let second_on = b.iter().any(|c| *c != ZERO);
    for (idx, n) in (-nt..=nt).enumerate() {
        let s = if nu == 0 { vec![sinc(lam - n as f64)] } else { sinc_jet(lam - n as f64, nu) };
        if first_on {
            v.first[idx] = leibniz(&la, &s, nu);
        }
        if second_on {
            v.second[idx] = leibniz(&b, &s, nu);
        }
    }
    for j in 0..TAIL_ATOMS {
        let at = atom_jet(j, lam, nu);
        if first_on {
            v.first_tail[j] = leibniz(&la, &at, nu);
        }
        if second_on {
            v.second_tail[j] = leibniz(&b, &at, nu);
        }
    }
    let cs = trig_jet(lam, omega0, nu, true);
    let sn = trig_jet(lam, omega0, nu, false);
    let w = -leibniz(&la, &cs, nu) - leibniz(&b, &sn, nu);
    Ok((v, w))
}

/// Outcome of the regularized finite-section solve.
#[derive(Debug, Clone)]
pub struct MomentSolve {
    pub u: HVector,
    /// Whether any row touches the `N̄` and `K̄` components.
    pub determined: [bool; 2],
    /// Singular values of the column-normalized system, descending.
    pub singular_values: Vec<f64>,
    /// Singular values above `√ε`.
    pub rank: usize,
    /// Band coefficients the rows are expected to pin down.
    pub needed: usize,
}

impl MomentSolve {
    /// `σ_max/σ_min` over the effective rank.
    pub fn condition(&self) -> f64 {
        match (self.singular_values.first(), self.singular_values.get(self.rank.max(1) - 1)) {
            (Some(a), Some(b)) if *b > 0.0 => a / b,
            _ => f64::INFINITY,
        }
    }
}

/// Ridge parameter relative to `‖Gram‖ = σ_max²`.
pub const RIDGE: f64 = 1e-10;
/// Exponent of the `(1 + |n|)` weight on band coefficients in the ridge term.
///
/// Only the null space of the finite section feels it: there it moves the
/// undetermined band-edge content into the tail atoms.
pub const SMOOTHING: i32 = 2;
/// Effective rank below this fraction of the band dimension means incompleteness.
const COMPLETENESS: f64 = 0.9;

/// `argmin Σ_k |(u, v_k) - w_k|² + ε‖Wu‖²` over the first `count` rows,
/// `ε = RIDGE·σ_max²` and `W` the [`SMOOTHING`] weight.
pub fn solve_u(sys: &MomentSystem, count: usize) -> Result<HVector, InverseError> {
    Ok(solve_moments(sys, count)?.u)
}

pub fn solve_moments(sys: &MomentSystem, count: usize) -> Result<MomentSolve, InverseError> {
    let count = count.min(sys.len());
    if count == 0 {
        return Err(InverseError::NoRows);
    }
    let nt = sys.vs[0].truncation();
    let band = 2 * nt + 1;
    let block = band + TAIL_ATOMS;
    let rows = &sys.vs[..count];
    let determined = [
        rows.iter().any(|v| v.first.iter().chain(&v.first_tail).any(|c| *c != ZERO)),
        rows.iter().any(|v| v.second.iter().chain(&v.second_tail).any(|c| *c != ZERO)),
    ];
    // penalty weights: `‖u‖` in the unknowns x = (2π ū_n, τ̄_j), with band
    // coefficient n further weighted by (1 + |n|)^SMOOTHING
    let weight = |j: usize| {
        if j < band {
            (1.0 + (j as f64 - nt as f64).abs()).powi(SMOOTHING) / (2.0 * PI).sqrt()
        } else {
            atom_norm_sqr(j - band).sqrt()
        }
    };
    let mut cols: Vec<(usize, usize, f64)> = Vec::new();
    for (comp, on) in determined.iter().enumerate() {
        if *on {
            cols.extend((0..block).map(|j| (comp, j, weight(j))));
        }
    }
    let entry = |v: &HVector, comp: usize, j: usize| -> C {
        let (b, t) = if comp == 0 { (&v.first, &v.first_tail) } else { (&v.second, &v.second_tail) };
        if j < band { b[j] } else { t[j - band] }
    };
    let a = DMatrix::from_fn(count, cols.len(), |i, c| {
        let (comp, j, d) = cols[c];
        entry(&rows[i], comp, j) / d
    });
    let svd = a.svd(true, true);
    let (Some(uu), Some(vt)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
        return Err(InverseError::Svd);
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = sv.first().copied().unwrap_or(0.0);
    let eps = RIDGE * smax * smax;
    let rank = sv.iter().filter(|s| **s > eps.sqrt()).count();
    let band_rows = nt.saturating_sub(2);
    let needed = determined.iter().filter(|d| **d).count() * (2 * band_rows + 1);
    if (rank as f64) < COMPLETENESS * needed as f64 {
        return Err(InverseError::Incomplete { rank, needed });
    }
    let w = nalgebra::DVector::from_iterator(count, sys.ws[..count].iter().copied());
    let mut z = nalgebra::DVector::<C>::zeros(cols.len());
    for &i in &order {
        let s = svd.singular_values[i];
        if s == 0.0 {
            continue;
        }
        let coef = uu.column(i).dotc(&w) * (s / (s * s + eps));
        z += vt.row(i).adjoint() * coef;
    }
    let mut u = HVector::zero(nt);
    for (c, &(comp, j, d)) in cols.iter().enumerate() {
        let x = z[c] / d;
        let (b, t) = if comp == 0 { (&mut u.first, &mut u.first_tail) } else { (&mut u.second, &mut u.second_tail) };
        if j < band {
            b[j] = x.conj() / (2.0 * PI);
        } else {
            t[j - band] = x.conj();
        }
    }
    Ok(MomentSolve {
        u,
        determined,
        singular_values: sv,
        rank,
        needed,
    })
}

/// `K = conj` of the second component, `N = conj` of the first.
pub fn reconstruct_triple(u: &HVector, omega0_mod1: Complex64) -> BoundaryTriple {
    let nt = u.truncation() as i64;
    let part = |band: &[C], tail: &[C; TAIL_ATOMS]| {
        let t = Tail(tail.map(|g| g.conj()));
        let c: Vec<C> = (-nt..=nt).zip(band).map(|(n, g)| g.conj() * (2.0 * PI) + t.sample(n)).collect();
        (c, t)
    };
    let (n, tn) = part(&u.first, &u.first_tail);
    let (k, tk) = part(&u.second, &u.second_tail);
    BoundaryTriple::new(omega0_mod1, k, n).expect("equal odd lengths").with_tails(tk, tn)
}

/// Zeros `θ_k`, `k = -K..-1, 1..K`, of `S(π, λ)` built from a triple.
pub fn locate_thetas(bt: &BoundaryTriple, count: usize) -> Result<Vec<Complex64>, InverseError> {
    locate_thetas_seeded(bt, count, 0.0)
}

/// As [`locate_thetas`], with strip boundaries at `k + ω₀ + shift + 1/2`.
///
/// All zeros of `λ S(π, λ)` in the window are found by the argument
/// principle with Newton polishing; the forced zero at the origin is
/// removed and the rest are labelled in order of real part.
pub fn locate_thetas_seeded(bt: &BoundaryTriple, count: usize, shift: f64) -> Result<Vec<Complex64>, InverseError> {
    let w = bt.omega0();
    let centre = w.re + shift;
    let kk = count as f64;
    let rect = Rect::new((centre - kk - 0.5, centre + kk + 0.5), (w.im - 2.5, w.im + 2.5));
    let opts = RootOptions {
        cuts: Some((-(count as i64) - 1..=count as i64).map(|k| centre + k as f64 + 0.5).collect()),
        ..RootOptions::default()
    };
    let fd = |z: C| {
        let j = bt.lambda_s_jet(z, 1);
        Ok((j[0], j[1]))
    };
    let mut zs = expand(&RootFinder::new(&fd, &opts).find(&rect)?);
    if let Some((i, _)) = zs.iter().enumerate().min_by(|a, b| a.1.norm().total_cmp(&b.1.norm())) {
        if zs[i].norm() < 0.5 {
            zs.remove(i);
        }
    }
    if zs.len() != 2 * count {
        return Err(InverseError::ThetaCount {
            found: zs.len(),
            expected: 2 * count,
        });
    }
    Ok(zs)
}

/// `θ_k` with the Weyl residues `M_{n+ν}` attached to each position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylData {
    #[serde(with = "cjson::vec")]
    pub thetas: Vec<Complex64>,
    /// `k` of each `θ_k`: `-K..-1, 1..K`.
    pub labels: Vec<i64>,
    #[serde(with = "cjson::vec")]
    pub residues: Vec<Complex64>,
    #[serde(with = "cjson::one")]
    pub omega0: Complex64,
    /// False when `S^[1]` was not determined by the data.
    #[serde(default = "yes")]
    pub residues_valid: bool,
}

fn yes() -> bool {
    true
}

impl WeylData {
    /// Distinct `θ` with multiplicity and the index of the first copy.
    pub fn groups(&self) -> Vec<(usize, Complex64, usize)> {
        let mut out: Vec<(usize, C, usize)> = Vec::new();
        for (i, &t) in self.thetas.iter().enumerate() {
            match out.last_mut() {
                Some((_, z, m)) if *z == t => *m += 1,
                _ => out.push((i, t, 1)),
            }
        }
        out
    }
}

/// Labels `-K..-1, 1..K` for `2K` values sorted by real part.
pub fn theta_labels(len: usize) -> Vec<i64> {
    let k = (len / 2) as i64;
    (-k..0).chain(1..=len as i64 - k).collect()
}

const S1_FLOOR: f64 = 1e-10;
const CONTOUR_NODES: usize = 64;

/// Residues by the derivative formula at simple zeros and contour quadrature at multiple ones.
pub fn weyl_residues(bt: &BoundaryTriple, thetas: &[Complex64]) -> Result<WeylData, InverseError> {
    residues_with(bt, thetas, false)
}

/// Residues by contour quadrature everywhere.
pub fn weyl_residues_contour(bt: &BoundaryTriple, thetas: &[Complex64]) -> Result<WeylData, InverseError> {
    residues_with(bt, thetas, true)
}

fn residues_with(bt: &BoundaryTriple, thetas: &[Complex64], contour: bool) -> Result<WeylData, InverseError> {
    let mut wd = WeylData {
        thetas: thetas.to_vec(),
        labels: theta_labels(thetas.len()),
        residues: vec![ZERO; thetas.len()],
        omega0: bt.omega0(),
        residues_valid: true,
    };
    let groups = wd.groups();
    let distinct: Vec<C> = groups.iter().map(|g| g.1).collect();
    let values: Vec<Vec<C>> = groups
        .par_iter()
        .map(|&(_, t, m)| {
            let s1 = bt.eval_s1(t);
            if s1.norm() < S1_FLOOR {
                return Err(InverseError::VanishingS1(t));
            }
            if m == 1 && !contour {
                return Ok(vec![1.0 / (s1 * bt.s_jet(t, 1)[1])]);
            }
            let gap = distinct.iter().filter(|z| **z != t).map(|z| (z - t).norm()).fold(f64::INFINITY, f64::min);
            let r = (0.5 * gap).min(0.25);
            let pts: Vec<(C, C)> = (0..CONTOUR_NODES)
                .map(|j| {
                    let e = C::from_polar(1.0, 2.0 * PI * j as f64 / CONTOUR_NODES as f64);
                    (e * r, bt.eval_s(t + e * r))
                })
                .collect();
            Ok((0..m)
                .map(|nu| pts.iter().map(|(d, s)| d.powi(nu as i32 + 1) / s).sum::<C>() / (CONTOUR_NODES as f64 * s1))
                .collect())
        })
        .collect::<Result<_, InverseError>>()?;
    for ((start, _, _), vals) in groups.iter().zip(values) {
        for (nu, v) in vals.into_iter().enumerate() {
            wd.residues[start + nu] = v;
        }
    }
    Ok(wd)
}

/// Move a triple built with `ω₀ mod 1` onto the true `ω₀`.
pub fn parity_fix(bt: &BoundaryTriple, omega0_true: Complex64) -> Result<BoundaryTriple, InverseError> {
    let d = omega0_true - bt.omega0();
    let m = d.re.round();
    if (d.re - m).abs() > 1e-6 || d.im.abs() > 1e-6 {
        return Err(InverseError::ParityNotInteger(d));
    }
    let fixed = if (m as i64).rem_euclid(2) == 1 { bt.negated() } else { bt.clone() };
    Ok(fixed.with_omega0(omega0_true))
}

/// Source of `S(π, λ)` and `S^[1](π, λ)`.
pub trait BoundaryEval: Sync {
    fn s(&self, lam: Complex64) -> Result<Complex64, InverseError>;
    fn s1(&self, lam: Complex64) -> Result<Complex64, InverseError>;
}

impl BoundaryEval for BoundaryTriple {
    fn s(&self, lam: Complex64) -> Result<Complex64, InverseError> {
        Ok(self.eval_s(lam))
    }

    fn s1(&self, lam: Complex64) -> Result<Complex64, InverseError> {
        Ok(self.eval_s1(lam))
    }
}

/// Boundary values straight from the forward integrator.
pub struct ForwardBoundary<'a> {
    pub medium: &'a dyn Medium,
    pub solver: ForwardSolver,
}

impl BoundaryEval for ForwardBoundary<'_> {
    fn s(&self, lam: Complex64) -> Result<Complex64, InverseError> {
        Ok(self.solver.boundary_s(self.medium, lam)?.y)
    }

    fn s1(&self, lam: Complex64) -> Result<Complex64, InverseError> {
        Ok(self.solver.boundary_s(self.medium, lam)?.y1)
    }
}

/// Mean of `h = (S̃^[1] - S^[1])/S` over the probes and its spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaShift {
    pub h: Complex64,
    pub spread: f64,
}

/// Largest tolerated spread of `h` across probes.
pub const SHIFT_SPREAD: f64 = 1e-4;

/// Constant to add to the candidate `σ̃`.
pub fn sigma_shift(target: &dyn BoundaryEval, candidate: &CoefficientPair, probes: &[Complex64]) -> Result<SigmaShift, InverseError> {
    sigma_shift_with(&ForwardSolver::default(), target, candidate, probes, SHIFT_SPREAD)
}

pub fn sigma_shift_with(
    solver: &ForwardSolver,
    target: &dyn BoundaryEval,
    candidate: &CoefficientPair,
    probes: &[Complex64],
    max_spread: f64,
) -> Result<SigmaShift, InverseError> {
    if probes.is_empty() {
        return Err(InverseError::NoProbes);
    }
    let hs: Vec<C> = probes
        .par_iter()
        .map(|&lam| {
            let s = target.s(lam)?;
            if s.norm() < 1e-6 {
                return Err(InverseError::ProbeNearZero(lam));
            }
            let own = solver.boundary_s(candidate, lam)?.y1;
            Ok((own - target.s1(lam)?) / s)
        })
        .collect::<Result<_, InverseError>>()?;
    let h = hs.iter().sum::<C>() / hs.len() as f64;
    let spread = hs.iter().map(|x| (x - h).norm()).fold(0.0, f64::max);
    if spread > max_spread {
        return Err(InverseError::NonConstantShift(spread));
    }
    Ok(SigmaShift { h, spread })
}

/// Steps 1 to 4: triple, `θ_k` and residues from a subspectrum.
#[derive(Debug, Clone)]
pub struct Inversion {
    pub triple: BoundaryTriple,
    pub solve: MomentSolve,
    pub rows: usize,
}

pub fn invert(sub: &Subspectrum, f1: &EntireExpr, f2: &EntireExpr, truncation: usize) -> Result<Inversion, InverseError> {
    invert_at(sub, f1, f2, truncation, sub.omega0_mod1())
}

/// As [`invert`] with an explicit, unreduced `ω₀`.
pub fn invert_at(sub: &Subspectrum, f1: &EntireExpr, f2: &EntireExpr, truncation: usize, omega0: Complex64) -> Result<Inversion, InverseError> {
    let sys = build_moment_system_at(sub, f1, f2, truncation, omega0)?;
    let solve = solve_moments(&sys, sys.len())?;
    Ok(Inversion {
        triple: reconstruct_triple(&solve.u, omega0),
        rows: sys.len(),
        solve,
    })
}

impl Inversion {
    /// `θ_k` for `|k| ≤ count` and their residues; residues are flagged
    /// invalid when no row constrained `N`.
    pub fn weyl(&self, count: usize) -> Result<WeylData, InverseError> {
        let thetas = locate_thetas(&self.triple, count)?;
        let mut wd = weyl_residues(&self.triple, &thetas)?;
        wd.residues_valid = self.solve.determined[0];
        Ok(wd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{dirichlet, eigenvalues};
    use crate::kernels::extract_triple;

    fn c(r: f64, i: f64) -> C {
        C::new(r, i)
    }

    fn free_dirichlet(t: i64, omega0: C) -> Subspectrum {
        let v: Vec<C> = (-t..=t).filter(|k| *k != 0).map(|k| c(k as f64, 0.0)).collect();
        Subspectrum::new(v, omega0).unwrap()
    }

    #[test]
    fn simple_row_for_dirichlet_data() {
        let (f1, f2) = dirichlet();
        let sub = Subspectrum::new(vec![c(1.3, 0.0)], c(0.25, 0.0)).unwrap();
        let sys = build_moment_system(&sub, &f1, &f2, 8).unwrap();
        assert_eq!(sys.len(), 2);
        assert!((sys.ws[0] - (PI / 4.0).sin()).norm() < 1e-15);
        assert!((sys.ws[1] + (PI * (1.3 - 0.25)).sin()).norm() < 1e-14);
        let v = &sys.vs[1];
        assert!(v.first.iter().all(|z| *z == ZERO));
        assert!((v.second[8 + 1] - sinc(c(0.3, 0.0))).norm() < 1e-15);
    }

    #[test]
    fn derivative_row_matches_difference_quotient() {
        let f1 = EntireExpr::real(1.0);
        let f2 = EntireExpr::real(0.0);
        let sub = Subspectrum::new(vec![c(2.0, 0.0), c(2.0, 0.0)], c(0.1, 0.0)).unwrap();
        let sys = build_moment_system(&sub, &f1, &f2, 8).unwrap();
        assert_eq!(sys.nodes, vec![(ZERO, 0), (c(2.0, 0.0), 0), (c(2.0, 0.0), 1)]);
        let h = 1e-5;
        let at = |lam: C| moment_row(lam, 0, &f1, &f2, c(0.1, 0.0), 8).unwrap();
        let (vp, wp) = at(c(2.0 + h, 0.0));
        let (vm, wm) = at(c(2.0 - h, 0.0));
        for idx in [0usize, 5, 10, 16] {
            let d = (vp.first[idx] - vm.first[idx]) / (2.0 * h);
            assert!((sys.vs[2].first[idx] - d).norm() < 1e-8);
        }
        let dt = (vp.first_tail[1] - vm.first_tail[1]) / (2.0 * h);
        assert!((sys.vs[2].first_tail[1] - dt).norm() < 1e-8);
        assert!((sys.ws[2] - (wp - wm) / (2.0 * h)).norm() < 1e-8);
    }

    #[test]
    fn single_row_solution_is_a_constant() {
        let sys = MomentSystem {
            vs: vec![analyticity_row(8, ZERO).0],
            ws: vec![c(0.7, 0.0)],
            nodes: vec![(ZERO, 0)],
        };
        let mut u = HVector::zero(8);
        u.second[8] = c(0.7 / (2.0 * PI), 0.0);
        // one row cannot be complete; the raw regularized solution is still the constant
        assert!(matches!(solve_moments(&sys, 1), Err(InverseError::Incomplete { .. })));
        assert!((u.inner(&sys.vs[0]) - 0.7).norm() < 1e-15);
    }

    #[test]
    fn true_kernels_satisfy_the_moment_system() {
        let cp = CoefficientPair::from_fns((0.0, PI), 129, |x| c(0.3 * x.cos(), 0.0), |_| c(0.0, 0.0), vec![]).unwrap();
        let (f1, f2) = dirichlet();
        let sub = eigenvalues(&cp, &f1, &f2, Rect::new((-20.5, 20.5), (-1.0, 1.0)), Some(ZERO)).unwrap();
        let t = extract_triple(&cp, 24).unwrap();
        let sys = build_moment_system(&sub, &f1, &f2, 24).unwrap();
        let r = sys.residuals(&HVector::from_triple(&t));
        assert!(r.iter().all(|x| x.norm() < 1e-6), "{:?}", r.iter().map(|x| x.norm()).fold(0.0, f64::max));
    }

    #[test]
    fn free_round_trip_gives_zero_kernels() {
        let (f1, f2) = dirichlet();
        let inv = invert(&free_dirichlet(22, ZERO), &f1, &f2, 24).unwrap();
        assert_eq!(inv.solve.determined, [false, true]);
        assert!(inv.solve.u.norm() < 1e-6);
        let th = locate_thetas(&inv.triple, 10).unwrap();
        for (z, k) in th.iter().zip(theta_labels(20)) {
            assert!((z - k as f64).norm() < 1e-8, "{k}: {z}");
        }
    }

    #[test]
    fn reconstruct_inverts_from_triple() {
        let cp = CoefficientPair::from_fns((0.0, PI), 65, |x| c(0.2 * x.sin(), 0.1), |x| c(0.1 * x, 0.0), vec![]).unwrap();
        let t = extract_triple(&cp, 16).unwrap();
        let back = reconstruct_triple(&HVector::from_triple(&t), t.omega0());
        for lam in [c(0.5, 0.0), c(3.3, -0.4)] {
            assert!((back.eval_s(lam) - t.eval_s(lam)).norm() < 1e-13);
            assert!((back.eval_s1(lam) - t.eval_s1(lam)).norm() < 1e-13);
        }
    }

    #[test]
    fn free_residues_are_n_over_pi() {
        let t = BoundaryTriple::free(ZERO, 16);
        let th = locate_thetas(&t, 6).unwrap();
        let wd = weyl_residues(&t, &th).unwrap();
        for (m, k) in wd.residues.iter().zip(&wd.labels) {
            assert!((m - *k as f64 / PI).norm() < 1e-10, "{k}: {m}");
        }
        let wc = weyl_residues_contour(&t, &th).unwrap();
        for (a, b) in wd.residues.iter().zip(&wc.residues) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn parity_rule() {
        let t = BoundaryTriple::free(c(0.3, 0.0), 8);
        assert_eq!(parity_fix(&t, c(0.3, 0.0)).unwrap(), t);
        let one = parity_fix(&t, c(1.3, 0.0)).unwrap();
        assert!((one.coeff(Kernel::K, 0) + t.coeff(Kernel::K, 0)).norm() < 1e-15);
        for lam in [c(0.7, 0.0), c(2.2, 0.3)] {
            assert!((one.eval_s(lam) + t.eval_s(lam)).norm() < 1e-12);
        }
        assert_eq!(parity_fix(&t, c(2.3, 0.0)).unwrap().coeff(Kernel::K, 0), t.coeff(Kernel::K, 0));
        assert!(matches!(parity_fix(&t, c(0.8, 0.0)), Err(InverseError::ParityNotInteger(_))));
    }

    #[test]
    fn sigma_shift_recovers_injected_constant() {
        let cp = CoefficientPair::from_fns((0.0, PI), 65, |x| c(0.2 * x.cos(), 0.0), |x| c(0.3 * x.sin(), 0.0), vec![]).unwrap();
        let target = ForwardBoundary {
            medium: &cp,
            solver: ForwardSolver::default(),
        };
        let probes: Vec<C> = (0..5).map(|j| c(0.37 + 1.1 * j as f64, 0.2)).collect();
        let same = sigma_shift(&target, &cp, &probes).unwrap();
        assert!(same.h.norm() < 1e-9);
        let shifted = sigma_shift(&target, &cp.shift_sigma(c(-1.0, -1.0)), &probes).unwrap();
        assert!((shifted.h - c(1.0, 1.0)).norm() < 1e-8 && shifted.spread < 1e-8);
    }
}
