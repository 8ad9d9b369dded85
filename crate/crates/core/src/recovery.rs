//! Recovery of `p` and `σ` from `θ_k` and Weyl residues.
//!
//! **This is a surrogate.** The reconstruction of `p, q` from the zeros of
//! `S(π, λ)` and the residues of the Weyl function is an external
//! algorithm; this module replaces it by output least squares with the
//! forward solver in the loop. It minimizes
//!
//! ```text
//! Σ_k |S_cand(π, θ_k)|² + Σ_k ρ_k |M_cand,k - M_k|² + τ‖c‖²,   ρ_k = 1/(1 + |k|)²
//! ```
//!
//! over cosine coefficients of `p` and of `σ̃(x) = Σ_j b_j (cos jx - 1)`
//! (gauge `σ̃(0) = 0`), optionally plus one step `s·1_{x ≥ x₀}` of `σ̃`,
//! by Levenberg–Marquardt with a finite-difference Jacobian. Nothing here
//! certifies uniqueness: data that cannot tell two coefficient pairs apart
//! (for instance a Dirichlet spectrum alone, which is blind to `x ↦ π - x`)
//! leave the result at whichever minimizer the iteration reaches.

use crate::coefficients::{CoefficientError, CoefficientPair, Jump};
use crate::forward::{ForwardError, ForwardSolver};
use crate::inverse::WeylData;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

type C = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("recovery: recover_pq: {usable} usable entries, need at least {needed}")]
    TooFewData { usable: usize, needed: usize },
    #[error("recovery: recover_pq: invalid config: {0}")]
    Config(String),
    #[error("recovery: recover_pq: no misfit below {tol:e} after {iterations} iterations (final misfit {misfit:e})")]
    NotConverged { iterations: usize, misfit: f64, tol: f64 },
    #[error("recovery: recover_pq: Jacobian has rank {rank} of {params}")]
    RankCollapse { rank: usize, params: usize },
    #[error("recovery: recover_pq: {0}")]
    Forward(#[from] ForwardError),
    #[error("recovery: recover_pq: {0}")]
    Coefficients(#[from] CoefficientError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Zero,
    #[default]
    Asymptotic,
}

/// One step of `σ̃` with fitted height and, optionally, location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepAtom {
    /// Initial location in `(0, π)`.
    pub at: f64,
    #[serde(default = "yes")]
    pub fit_location: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    /// Cosine modes for `p` (`cos 0x..`) and for `σ̃` (`cos x..`).
    pub basis_dim: usize,
    pub max_iter: usize,
    pub tikhonov: f64,
    pub init: Init,
    /// Allow complex coefficients.
    pub complex: bool,
    pub step_atom: Option<StepAtom>,
    /// Only `θ_k` with `|k| ≤ max_index` enter the misfit.
    pub max_index: usize,
    /// Target misfit; reaching the iteration cap above it is an error.
    pub misfit_tol: f64,
    /// Grid size of the returned coefficient pair.
    pub grid: usize,
    /// Forward solver resolution inside the loop.
    pub steps_per_pi: usize,
    pub phase: f64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            basis_dim: 8,
            max_iter: 40,
            tikhonov: 0.0,
            init: Init::Asymptotic,
            complex: false,
            step_atom: None,
            max_index: 24,
            misfit_tol: 1e-8,
            grid: 257,
            steps_per_pi: 2048,
            phase: 0.01,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<(), RecoveryError> {
        let bad = |m: &str| Err(RecoveryError::Config(m.to_string()));
        if self.basis_dim < 1 {
            return bad("basis_dim must be at least 1");
        }
        if !(self.tikhonov >= 0.0) {
            return bad("tikhonov must be non-negative");
        }
        if self.grid < 2 {
            return bad("grid must be at least 2");
        }
        if let Some(s) = self.step_atom {
            if !(s.at > 0.0 && s.at < PI) {
                return bad("step_atom.at must lie in (0, pi)");
            }
        }
        Ok(())
    }

    fn real_params(&self) -> usize {
        2 * self.basis_dim + usize::from(self.step_atom.is_some())
    }

    fn param_count(&self) -> usize {
        let base = self.real_params() * if self.complex { 2 } else { 1 };
        base + usize::from(self.step_atom.map(|s| s.fit_location).unwrap_or(false))
    }
}

/// Coefficients of `p`, `σ̃` and the step, decoded from a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub p: Vec<Complex64>,
    pub sigma: Vec<Complex64>,
    pub step: Option<(f64, Complex64)>,
}

impl Model {
    fn decode(x: &[f64], cfg: &RecoveryConfig) -> Model {
        let d = cfg.basis_dim;
        let r = cfg.real_params();
        let val = |i: usize| C::new(x[i], if cfg.complex { x[r + i] } else { 0.0 });
        let step = cfg.step_atom.map(|s| {
            let at = if s.fit_location { x[x.len() - 1] } else { s.at };
            (at, val(2 * d))
        });
        Model {
            p: (0..d).map(val).collect(),
            sigma: (d..2 * d).map(val).collect(),
            step,
        }
    }

    pub fn eval_p(&self, x: f64) -> Complex64 {
        self.p.iter().enumerate().map(|(j, a)| a * (j as f64 * x).cos()).sum()
    }

    /// Continuous part of `σ̃`.
    pub fn eval_sigma(&self, x: f64) -> Complex64 {
        self.sigma.iter().enumerate().map(|(j, b)| b * (((j + 1) as f64 * x).cos() - 1.0)).sum()
    }

    pub fn to_pair(&self, grid: usize) -> Result<CoefficientPair, CoefficientError> {
        let jumps = match self.step {
            Some((at, height)) if at > 0.0 && at < PI => vec![Jump { at, height }],
            _ => Vec::new(),
        };
        CoefficientPair::from_fns((0.0, PI), grid, |x| self.eval_p(x), |x| self.eval_sigma(x), jumps)
    }
}

/// Output of [`recover_pq`].
#[derive(Debug, Clone)]
pub struct Recovery {
    pub pair: CoefficientPair,
    pub model: Model,
    pub misfit: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial guess.
    pub history: Vec<f64>,
}

/// Cesàro mean of `(θ_k + θ_{-k})/2` over `k = 1..K`.
pub fn cesaro_omega0(wd: &WeylData) -> Complex64 {
    let find = |k: i64| wd.labels.iter().position(|l| *l == k).map(|i| wd.thetas[i]);
    let mut partial = Vec::new();
    let mut acc = C::new(0.0, 0.0);
    let mut k = 1;
    while let (Some(a), Some(b)) = (find(k), find(-k)) {
        acc += (a + b) * 0.5;
        partial.push(acc / k as f64);
        k += 1;
    }
    if partial.is_empty() {
        return wd.omega0;
    }
    partial.iter().sum::<C>() / partial.len() as f64
}

struct Problem<'a> {
    cfg: &'a RecoveryConfig,
    solver: ForwardSolver,
    /// `(θ, label, position ν within its group, group multiplicity)`.
    rows: Vec<(C, i64, usize, usize)>,
    residues: Option<Vec<C>>,
    thetas: Vec<C>,
}

impl Problem<'_> {
    /// Stacked real residual vector for parameters `x`.
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, RecoveryError> {
        let model = Model::decode(x, self.cfg);
        let cp = model.to_pair(self.cfg.grid)?;
        let per_row: Vec<Vec<C>> = self
            .rows
            .par_iter()
            .map(|&(t, k, nu, mult)| self.row(&cp, t, k, nu, mult))
            .collect::<Result<_, RecoveryError>>()?;
        let mut out: Vec<f64> = per_row.into_iter().flatten().flat_map(|z| [z.re, z.im]).collect();
        let tk = self.cfg.tikhonov.sqrt();
        if tk > 0.0 {
            out.extend(x.iter().map(|v| v * tk));
        }
        Ok(out)
    }

    fn row(&self, cp: &CoefficientPair, t: C, k: i64, nu: usize, mult: usize) -> Result<Vec<C>, RecoveryError> {
        let (s, ds) = self.solver.boundary_s_with_deriv(cp, t)?;
        let mut out = Vec::with_capacity(2);
        if nu == 0 {
            out.push(s.y);
        }
        if let Some(res) = &self.residues {
            let rho = 1.0 / (1.0 + k.unsigned_abs() as f64);
            let m = if mult == 1 {
                1.0 / (s.y1 * ds.y)
            } else {
                self.contour_residue(cp, t, nu, s.y1)?
            };
            let idx = self.thetas.iter().position(|z| *z == t).expect("row theta is in the data") + nu;
            out.push((m - res[idx]) * rho);
        }
        Ok(out)
    }

    fn contour_residue(&self, cp: &CoefficientPair, t: C, nu: usize, s1: C) -> Result<C, RecoveryError> {
        let gap = self.thetas.iter().filter(|z| **z != t).map(|z| (z - t).norm()).fold(f64::INFINITY, f64::min);
        let r = (0.5 * gap).min(0.25);
        let q = 64;
        let mut acc = C::new(0.0, 0.0);
        for j in 0..q {
            let d = C::from_polar(r, 2.0 * PI * j as f64 / q as f64);
            acc += d.powi(nu as i32 + 1) / self.solver.boundary_s(cp, t + d)?.y;
        }
        Ok(acc / (q as f64 * s1))
    }
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Smallest `max_index` of the continuation ladder.
const FIRST_STAGE: usize = 4;

fn rows_for(wd: &WeylData, max_index: usize) -> Vec<(C, i64, usize, usize)> {
    let mut rows = Vec::new();
    for (start, t, m) in wd.groups() {
        if wd.labels[start].unsigned_abs() as usize > max_index {
            continue;
        }
        for nu in 0..m {
            rows.push((t, wd.labels[start + nu], nu, m));
        }
    }
    rows
}

/// Damped Gauss–Newton fit of `(p, σ̃)` to the Weyl data; fails unless the misfit reaches `misfit_tol`.
pub fn recover_pq(wd: &WeylData, cfg: &RecoveryConfig) -> Result<Recovery, RecoveryError> {
    let rec = fit_pq(wd, cfg)?;
    if rec.misfit > cfg.misfit_tol {
        return Err(RecoveryError::NotConverged {
            iterations: rec.iterations,
            misfit: rec.misfit,
            tol: cfg.misfit_tol,
        });
    }
    Ok(rec)
}

/// The fit behind [`recover_pq`], returned whatever misfit it ends at.
///
/// The fit runs on `|k| ≤ 4, 8, 16, ..` in turn, each stage starting from
/// the previous minimizer, and ends on `|k| ≤ max_index`; the reported
/// misfit, iteration count and history belong to that last stage.
pub fn fit_pq(wd: &WeylData, cfg: &RecoveryConfig) -> Result<Recovery, RecoveryError> {
    cfg.validate()?;
    let per_row = if wd.residues_valid { 2 } else { 1 };
    let usable = rows_for(wd, cfg.max_index).len();
    let np = cfg.param_count();
    if usable * per_row < 2 * cfg.basis_dim || usable == 0 {
        return Err(RecoveryError::TooFewData {
            usable,
            needed: 2 * cfg.basis_dim,
        });
    }
    let problem = |max_index| Problem {
        cfg,
        solver: ForwardSolver::with_resolution(cfg.steps_per_pi, cfg.phase),
        rows: rows_for(wd, max_index),
        residues: wd.residues_valid.then(|| wd.residues.clone()),
        thetas: wd.thetas.clone(),
    };
    let mut x = vec![0.0; np];
    if cfg.init == Init::Asymptotic {
        let w = cesaro_omega0(wd);
        x[0] = w.re;
        if cfg.complex {
            x[cfg.real_params()] = w.im;
        }
    }
    if let Some(s) = cfg.step_atom {
        if s.fit_location {
            x[np - 1] = s.at;
        }
    }
    let mut stage = FIRST_STAGE;
    while stage < cfg.max_index {
        let pr = problem(stage);
        if pr.rows.len() * per_row >= np {
            x = levenberg(&pr, x, cfg.max_iter)?.x;
        }
        stage *= 2;
    }
    let fit = levenberg(&problem(cfg.max_index), x, cfg.max_iter)?;
    let model = Model::decode(&fit.x, cfg);
    Ok(Recovery {
        pair: model.to_pair(cfg.grid)?,
        model,
        misfit: fit.misfit,
        iterations: fit.iterations,
        history: fit.history,
    })
}

struct Fit {
    x: Vec<f64>,
    misfit: f64,
    iterations: usize,
    history: Vec<f64>,
}

fn levenberg(problem: &Problem, mut x: Vec<f64>, max_iter: usize) -> Result<Fit, RecoveryError> {
    let cfg = problem.cfg;
    let np = x.len();
    let mut r = problem.residual(&x)?;
    let mut f = cost(&r);
    let mut history = vec![f];
    let mut damping = 1e-3;
    let mut iterations = 0;
    while iterations < max_iter && f > cfg.misfit_tol {
        iterations += 1;
        let jac = jacobian(problem, &x, &r)?;
        let rank = jac.clone().svd(false, false).singular_values.iter().filter(|s| **s > 1e-12 * (1.0 + f.sqrt())).count();
        if rank == 0 {
            return Err(RecoveryError::RankCollapse { rank, params: np });
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let mut accepted = false;
        let mut stalled = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for i in 0..np {
                a[(i, i)] += damping * (jtj[(i, i)] + 1e-12);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&g)) else {
                damping *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi - si).collect();
            if let Some(loc) = cfg.step_atom.filter(|s| s.fit_location).map(|_| trial[np - 1]) {
                if !(loc > 0.0 && loc < PI) {
                    damping *= 10.0;
                    continue;
                }
            }
            let Ok(rt) = problem.residual(&trial) else {
                damping *= 10.0;
                continue;
            };
            let ft = cost(&rt);
            if ft < f {
                stalled = step.norm() <= 1e-12 * (1.0 + DVector::from_column_slice(&x).norm()) || (f - ft) < 1e-12 * f;
                x = trial;
                r = rt;
                f = ft;
                history.push(f);
                damping = (damping / 3.0).max(1e-12);
                accepted = true;
                break;
            }
            damping *= 10.0;
        }
        if !accepted || stalled {
            break;
        }
    }
    Ok(Fit {
        x,
        misfit: f,
        iterations,
        history,
    })
}

fn jacobian(problem: &Problem, x: &[f64], r0: &[f64]) -> Result<DMatrix<f64>, RecoveryError> {
    let cols: Vec<Vec<f64>> = (0..x.len())
        .into_par_iter()
        .map(|j| {
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.to_vec();
            xp[j] += h;
            let rp = problem.residual(&xp)?;
            Ok(rp.iter().zip(r0).map(|(a, b)| (a - b) / h).collect())
        })
        .collect::<Result<_, RecoveryError>>()?;
    Ok(DMatrix::from_fn(r0.len(), x.len(), |i, j| cols[j][i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::{locate_thetas, weyl_residues};
    use crate::kernels::extract_triple;

    fn c(r: f64, i: f64) -> C {
        C::new(r, i)
    }

    fn weyl_of(cp: &CoefficientPair, count: usize) -> WeylData {
        let t = extract_triple(cp, 48).unwrap();
        let th = locate_thetas(&t, count).unwrap();
        weyl_residues(&t, &th).unwrap()
    }

    #[test]
    fn config_json_defaults_and_validation() {
        let cfg: RecoveryConfig = serde_json::from_str(r#"{"basis_dim": 4, "init": "zero"}"#).unwrap();
        assert_eq!(cfg.basis_dim, 4);
        assert_eq!(cfg.init, Init::Zero);
        assert_eq!(cfg.max_iter, RecoveryConfig::default().max_iter);
        assert!(serde_json::from_str::<RecoveryConfig>(r#"{"bogus": 1}"#).is_err());
        let bad = RecoveryConfig {
            basis_dim: 0,
            ..RecoveryConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn model_gauge_pins_sigma_at_zero() {
        let cfg = RecoveryConfig {
            basis_dim: 3,
            ..RecoveryConfig::default()
        };
        let m = Model::decode(&[0.1, 0.2, 0.0, 0.5, -0.3, 0.2], &cfg);
        assert!(m.eval_sigma(0.0).norm() < 1e-15);
        assert!((m.eval_p(0.0) - 0.3).norm() < 1e-15);
    }

    #[test]
    fn cesaro_estimate_for_constant_p() {
        let wd = weyl_of(&CoefficientPair::constant((0.0, PI), c(1.0, 0.0), c(0.0, 0.0)), 12);
        assert!((cesaro_omega0(&wd) - 1.0).norm() < 1e-6);
    }

    #[test]
    fn free_problem_is_recovered_from_zero() {
        let wd = weyl_of(&CoefficientPair::zero((0.0, PI)), 12);
        let cfg = RecoveryConfig {
            basis_dim: 3,
            init: Init::Zero,
            max_index: 10,
            ..RecoveryConfig::default()
        };
        let rec = recover_pq(&wd, &cfg).unwrap();
        assert!(rec.model.p.iter().chain(&rec.model.sigma).all(|a| a.norm() < 5e-3));
    }

    #[test]
    fn constant_p_mode_and_monotone_objective() {
        let wd = weyl_of(&CoefficientPair::constant((0.0, PI), c(1.0, 0.0), c(0.0, 0.0)), 12);
        let cfg = RecoveryConfig {
            basis_dim: 2,
            init: Init::Asymptotic,
            max_index: 10,
            misfit_tol: 1e-10,
            ..RecoveryConfig::default()
        };
        let rec = recover_pq(&wd, &cfg).unwrap();
        assert!((rec.model.p[0] - 1.0).norm() < 1e-2, "{:?}", rec.model);
        assert!(rec.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
