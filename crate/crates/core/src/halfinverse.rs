//! Half-interval inverse problem on `(0, 2π)`.
//!
//! The Dirichlet spectrum `{μ_k}` of the doubled interval and the known
//! coefficients on `(π, 2π)` are reduced to a subspectrum problem on
//! `(0, π)` with `f₁ = -φ(π, ·)`, `f₂ = φ^[1](π, ·)`, where `φ` solves the
//! equation on the known half with `φ(2π) = 0`, `φ^[1](2π) = 1`.

use crate::coefficients::CoefficientPair;
use crate::conditions::{check_a, check_s, ConditionError, IM_BOUND};
use crate::entire::{EntireExpr, SolverFn};
use crate::forward::{dirichlet, reduce_mod1, Composite, Direction, ForwardError, ForwardSolver, Medium, Subspectrum};
use crate::inverse::{invert, parity_fix, sigma_shift_with, theta_labels, InverseError, Inversion, WeylData, SHIFT_SPREAD};
use crate::recovery::{recover_pq, RecoveryConfig, RecoveryError};
use crate::roots::Rect;
use crate::cjson;
use num_complex::Complex64;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

type C = Complex64;

/// Largest tolerated deviation of a tail block mean from the median.
pub const TAIL_SPREAD: f64 = 0.1;
/// Fewest tail eigenvalues accepted by [`estimate_omega0_mod1`].
pub const MIN_TAIL: usize = 16;
const BLOCK: usize = 4;

#[derive(Debug, Error)]
pub enum HalfError {
    #[error("halfinverse: {op}: {source}")]
    Forward { op: &'static str, source: ForwardError },
    #[error("halfinverse: estimate_omega0_mod1: {available} tail eigenvalues, need {MIN_TAIL}")]
    ShortTail { available: usize },
    #[error("halfinverse: estimate_omega0_mod1: tail estimate unstable (spread {0:.3e})")]
    UnstableTail(f64),
    #[error("halfinverse: {0} labels for {1} eigenvalues")]
    Labels(usize, usize),
    #[error("halfinverse: known half must be (pi, 2pi), got ({0}, {1})")]
    Interval(f64, f64),
    #[error("halfinverse: solve_half: condition {0} fails on the given spectrum")]
    Condition(&'static str),
    #[error("halfinverse: solve_half: {0}")]
    Conditions(#[from] ConditionError),
    #[error("halfinverse: solve_half: {stage}: {source}")]
    Inverse { stage: &'static str, source: InverseError },
    #[error("halfinverse: solve_half: {0}")]
    Recovery(#[from] RecoveryError),
}

/// Spectrum on `(0, 2π)` plus the coefficients on `(π, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfProblem {
    pub known_half: CoefficientPair,
    /// Dirichlet eigenvalues `μ_k` sorted by real part; `omega0_mod1` is ignored.
    pub spectrum: Subspectrum,
    /// `k` of each `μ_k`; defaults to `-K..-1, 1..K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
    /// `(1/π) ∫_π^{2π} p`.
    #[serde(with = "cjson::one")]
    pub known_mean: Complex64,
}

impl HalfProblem {
    pub fn new(known_half: CoefficientPair, spectrum: Subspectrum) -> Self {
        let known_mean = known_half.mean_p();
        HalfProblem {
            known_half,
            spectrum,
            labels: None,
            known_mean,
        }
    }

    pub fn labels(&self) -> Result<Vec<i64>, HalfError> {
        let n = self.spectrum.len();
        match &self.labels {
            Some(l) if l.len() == n => Ok(l.clone()),
            Some(l) => Err(HalfError::Labels(l.len(), n)),
            None => Ok(theta_labels(n)),
        }
    }
}

/// `(φ(π, λ), φ^[1](π, λ))` by backward integration from `2π`.
pub fn phi_at_midpoint(known_half: &CoefficientPair, lam: Complex64) -> Result<(Complex64, Complex64), HalfError> {
    phi_with(&ForwardSolver::default(), known_half, lam)
}

fn phi_with(solver: &ForwardSolver, known_half: &CoefficientPair, lam: C) -> Result<(C, C), HalfError> {
    let (a, b) = known_half.interval();
    if (a - PI).abs() > 1e-12 || (b - 2.0 * PI).abs() > 1e-12 {
        return Err(HalfError::Interval(a, b));
    }
    let v = solver
        .integrate(known_half, lam, C::new(0.0, 0.0), C::new(1.0, 0.0), Direction::Backward)
        .map_err(|source| HalfError::Forward { op: "phi_at_midpoint", source })?;
    Ok((v.y, v.y1))
}

/// `f₁ = -φ(π, ·)` and `f₂ = φ^[1](π, ·)` as solver-backed expressions sharing one integration per `λ`.
pub fn midpoint_pair(known_half: &CoefficientPair, solver: &ForwardSolver) -> (EntireExpr, EntireExpr) {
    let cache: Arc<Mutex<HashMap<(u64, u64), (C, C)>>> = Arc::default();
    let half = Arc::new(known_half.clone());
    let make = |tag: &str, pick: fn((C, C)) -> C| {
        let (cache, half, solver) = (cache.clone(), half.clone(), solver.clone());
        let f = SolverFn::new(tag, move |z: C| {
            let key = (z.re.to_bits(), z.im.to_bits());
            if let Some(v) = cache.lock().get(&key) {
                return Ok(pick(*v));
            }
            let v = phi_with(&solver, &half, z).map_err(|e| e.to_string())?;
            cache.lock().insert(key, v);
            Ok(pick(v))
        });
        EntireExpr::solver(Arc::new(f))
    };
    (make("minus_phi", |v| -v.0), make("phi_quasi", |v| v.1))
}

/// `ω₀ mod 1` from the tail of `{μ_k}` and the mean of `p` on `(π, 2π)`.
///
/// `c` is the median of block means of `(μ_k + μ_{-k})/2` over `K/2 < k ≤ K`,
/// and `ω₀ = 2c - known_mean`.
pub fn estimate_omega0_mod1(spectrum: &Subspectrum, labels: &[i64], known_mean: Complex64) -> Result<Complex64, HalfError> {
    let vals = spectrum.values();
    if labels.len() != vals.len() {
        return Err(HalfError::Labels(labels.len(), vals.len()));
    }
    let find = |k: i64| labels.iter().position(|l| *l == k).map(|i| vals[i]);
    let kmax = labels.iter().map(|k| k.abs()).max().unwrap_or(0);
    let mut pairs = Vec::new();
    for k in (kmax / 2 + 1)..=kmax {
        match (find(k), find(-k)) {
            (Some(a), Some(b)) => pairs.push((a + b) * 0.5),
            (Some(a), None) => pairs.push(a - k as f64 / 2.0),
            (None, Some(b)) => pairs.push(b + k as f64 / 2.0),
            _ => {}
        }
    }
    let available: usize = (kmax / 2 + 1..=kmax).map(|k| usize::from(find(k).is_some()) + usize::from(find(-k).is_some())).sum();
    if available < MIN_TAIL {
        return Err(HalfError::ShortTail { available });
    }
    let means: Vec<C> = pairs.chunks(BLOCK).map(|b| b.iter().sum::<C>() / b.len() as f64).collect();
    let c = C::new(median(means.iter().map(|z| z.re).collect()), median(means.iter().map(|z| z.im).collect()));
    let spread = means.iter().map(|m| (m - c).norm()).fold(0.0, f64::max);
    if spread > TAIL_SPREAD {
        return Err(HalfError::UnstableTail(spread));
    }
    Ok(reduce_mod1(c * 2.0 - known_mean))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Everything [`solve_half`] produced on the way.
#[derive(Debug, Clone)]
pub struct HalfSolution {
    /// Recovered coefficients on `(0, π)`.
    pub left: CoefficientPair,
    pub omega0_mod1: Complex64,
    pub omega0: Complex64,
    pub inversion: Inversion,
    pub weyl: WeylData,
    pub sigma_shift: Complex64,
    pub misfit: f64,
}

const PROBES: [f64; 10] = [0.31, 1.27, 2.43, 3.61, 4.77, -0.53, -1.71, -2.89, -4.13, 5.37];

/// Recover `(p, σ)` on `(0, π)`.
pub fn solve_half(hp: &HalfProblem, cfg: &RecoveryConfig, truncation: usize) -> Result<HalfSolution, HalfError> {
    solve_half_with(hp, cfg, truncation, SHIFT_SPREAD)
}

/// As [`solve_half`], accepting a `σ` shift whose probe values differ by up to `shift_spread`.
pub fn solve_half_with(hp: &HalfProblem, cfg: &RecoveryConfig, truncation: usize, shift_spread: f64) -> Result<HalfSolution, HalfError> {
    let solver = ForwardSolver::default();
    let (f1, f2) = midpoint_pair(&hp.known_half, &solver);
    let labels = hp.labels()?;
    if !check_s(&hp.spectrum, &f1, &f2)?.0 {
        return Err(HalfError::Condition("S"));
    }
    if !check_a(&hp.spectrum, hp.spectrum.len(), IM_BOUND).0 {
        return Err(HalfError::Condition("A"));
    }
    let w = estimate_omega0_mod1(&hp.spectrum, &labels, hp.known_mean)?;
    let sub = Subspectrum::new(hp.spectrum.values().to_vec(), w).expect("values already validated");
    let inv = |stage| move |source| HalfError::Inverse { stage, source };
    let inversion = invert(&sub, &f1, &f2, truncation).map_err(inv("invert"))?;
    let count = cfg.max_index.min(truncation.saturating_sub(4));
    let weyl = inversion.weyl(count).map_err(inv("locate_thetas"))?;
    let rec = recover_pq(&weyl, cfg)?;
    let mean = rec.pair.mean_p();
    let omega0 = w + C::new((mean.re - w.re).round(), 0.0);
    let fixed = parity_fix(&inversion.triple, omega0).map_err(inv("parity_fix"))?;
    let probes: Vec<C> = PROBES.iter().map(|&x| C::new(x + omega0.re, 0.0)).collect();
    let shift = sigma_shift_with(&solver, &fixed, &rec.pair, &probes, shift_spread).map_err(inv("sigma_shift"))?;
    Ok(HalfSolution {
        left: rec.pair.shift_sigma(shift.h),
        omega0_mod1: w,
        omega0,
        inversion,
        weyl,
        sigma_shift: shift.h,
        misfit: rec.misfit,
    })
}

/// Dirichlet eigenvalues `μ_k`, `0 < |k| ≤ count`, of `left ∪ right` on `(0, 2π)`.
pub fn doubled_spectrum(left: &CoefficientPair, right: &CoefficientPair, count: usize) -> Result<Subspectrum, HalfError> {
    let m = Composite::new(vec![left.clone(), right.clone()]).map_err(|source| HalfError::Forward { op: "doubled_spectrum", source })?;
    let c = m.mean_p();
    let half = count as f64 / 2.0 + 0.25;
    let (f1, f2) = dirichlet();
    ForwardSolver::default()
        .eigenvalues(&m, &f1, &f2, Rect::new((c.re - half, c.re + half), (c.im - 3.0, c.im + 3.0)), Some(c))
        .map_err(|source| HalfError::Forward { op: "doubled_spectrum", source })
}

/// `φ^[1](π, μ) S(π, μ) - S^[1](π, μ) φ(π, μ)` for each `μ`.
pub fn matching_defects(left: &CoefficientPair, right: &CoefficientPair, mus: &[Complex64]) -> Result<Vec<Complex64>, HalfError> {
    let solver = ForwardSolver::default();
    mus.iter()
        .map(|&mu| {
            let (phi, phi1) = phi_with(&solver, right, mu)?;
            let s = solver.boundary_s(left, mu).map_err(|source| HalfError::Forward { op: "matching_defects", source })?;
            Ok(phi1 * s.y - s.y1 * phi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(r: f64, i: f64) -> C {
        C::new(r, i)
    }

    fn right_const(p: f64) -> CoefficientPair {
        CoefficientPair::constant((PI, 2.0 * PI), c(p, 0.0), c(0.0, 0.0))
    }

    #[test]
    fn free_half_at_midpoint() {
        let (phi, phi1) = phi_at_midpoint(&right_const(0.0), c(1.0, 0.0)).unwrap();
        assert!(phi.norm() < 1e-10 && (phi1 + 1.0).norm() < 1e-10);
        let (phi, phi1) = phi_at_midpoint(&right_const(0.0), c(0.5, 0.0)).unwrap();
        assert!((phi + 2.0).norm() < 1e-10 && phi1.norm() < 1e-10);
    }

    #[test]
    fn constant_half_matches_closed_form() {
        for lam in [c(0.7, 0.0), c(3.3, 0.4), c(-2.1, -0.2)] {
            let rho = (lam * lam - lam * 2.0).sqrt();
            let want = -(rho * PI).sin() / rho;
            let (phi, _) = phi_at_midpoint(&right_const(1.0), lam).unwrap();
            assert!((phi - want).norm() < 1e-9, "{lam}: {phi} vs {want}");
        }
    }

    #[test]
    fn wrong_interval_is_rejected() {
        let bad = CoefficientPair::zero((0.0, PI));
        assert!(matches!(phi_at_midpoint(&bad, c(1.0, 0.0)), Err(HalfError::Interval(..))));
    }

    #[test]
    fn omega0_of_free_problem() {
        let k = 24;
        let vals: Vec<C> = (-k..=k).filter(|&j| j != 0).map(|j| c(j as f64 / 2.0, 0.0)).collect();
        let sub = Subspectrum::new(vals, c(0.0, 0.0)).unwrap();
        let w = estimate_omega0_mod1(&sub, &theta_labels(sub.len()), c(0.0, 0.0)).unwrap();
        assert!(w.norm() < 1e-12);
    }

    #[test]
    fn omega0_of_constant_p_closed_form() {
        let k = 40i64;
        let mut vals: Vec<C> = (1..=k).map(|j| c(1.0 - (1.0 + (j * j) as f64 / 4.0).sqrt(), 0.0)).collect();
        vals.reverse();
        vals.extend((1..=k).map(|j| c(1.0 + (1.0 + (j * j) as f64 / 4.0).sqrt(), 0.0)));
        let sub = Subspectrum::new(vals, c(0.0, 0.0)).unwrap();
        let w = estimate_omega0_mod1(&sub, &theta_labels(sub.len()), c(1.0, 0.0)).unwrap();
        let d = w.re - w.re.round();
        assert!(d.abs() < 1e-9 && w.im.abs() < 1e-12, "{w}");
    }

    #[test]
    fn short_tail_is_rejected() {
        let vals: Vec<C> = (-4..=4).filter(|&j| j != 0).map(|j| c(j as f64 / 2.0, 0.0)).collect();
        let sub = Subspectrum::new(vals, c(0.0, 0.0)).unwrap();
        assert!(matches!(
            estimate_omega0_mod1(&sub, &theta_labels(sub.len()), c(0.0, 0.0)),
            Err(HalfError::ShortTail { .. })
        ));
    }

    #[test]
    fn doubled_spectrum_satisfies_matching_relation() {
        let left = CoefficientPair::constant((0.0, PI), c(1.0, 0.0), c(0.0, 0.0));
        let right = right_const(0.0);
        let sub = doubled_spectrum(&left, &right, 16).unwrap();
        assert_eq!(sub.len(), 32);
        let w = estimate_omega0_mod1(&sub, &theta_labels(sub.len()), c(0.0, 0.0)).unwrap();
        assert!((w.re - w.re.round()).abs() < 2e-2, "{w}");
        for d in matching_defects(&left, &right, sub.values()).unwrap() {
            assert!(d.norm() < 1e-7, "{d}");
        }
    }

    #[test]
    fn midpoint_pair_shares_integrations() {
        let (f1, f2) = midpoint_pair(&right_const(0.0), &ForwardSolver::default());
        let z = c(0.5, 0.0);
        assert!((f1.eval(z).unwrap() - 2.0).norm() < 1e-10);
        assert!(f2.eval(z).unwrap().norm() < 1e-10);
    }
}
