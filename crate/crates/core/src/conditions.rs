//! Finite-section diagnostics for the data hypotheses.
//!
//! Every verdict here is a finite-section proxy: it inspects the
//! available window of the subspectrum only, and cannot certify a
//! completeness or Riesz-basis property of the infinite family.

use crate::entire::{EntireError, EntireExpr};
use crate::forward::Subspectrum;
use crate::inverse::{build_moment_system, solve_moments, InverseError};
use crate::moments::full;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

type C = Complex64;

pub const PROXY_LABEL: &str = "finite-section proxy";
/// Default `sup |Im λ_n|` accepted by [`check_a`].
pub const IM_BOUND: f64 = 10.0;
/// Relative threshold below which `f₁` and `f₂` count as vanishing together.
pub const S_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error("conditions: check_s: {0}")]
    Entire(#[from] EntireError),
    #[error("conditions: report: {0}")]
    Inverse(#[from] InverseError),
}

/// Radius of the circle on which the local scale of `f₁, f₂` is sampled.
const SCALE_RADIUS: f64 = 0.5;
const SCALE_NODES: usize = 8;

/// Simultaneous-zero test on the subspectrum.
///
/// Returns the verdict and `min_n max(|f₁(λ_n)|, |f₂(λ_n)|) / scale_n`, where
/// `scale_n` is the largest of `|f₁|, |f₂|` on a circle of radius 0.5 around `λ_n`.
pub fn check_s(sub: &Subspectrum, f1: &EntireExpr, f2: &EntireExpr) -> Result<(bool, f64), ConditionError> {
    let worst = sub
        .groups()
        .par_iter()
        .map(|&(lam, _)| {
            let at = f1.eval(lam)?.norm().max(f2.eval(lam)?.norm());
            let mut scale = at;
            for j in 0..SCALE_NODES {
                let z = lam + C::from_polar(SCALE_RADIUS, 2.0 * PI * j as f64 / SCALE_NODES as f64);
                scale = scale.max(f1.eval(z)?.norm()).max(f2.eval(z)?.norm());
            }
            Ok(if scale > 0.0 { at / scale } else { 0.0 })
        })
        .collect::<Result<Vec<f64>, EntireError>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    Ok((worst > S_THRESHOLD, worst))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AReport {
    pub max_im: f64,
    pub bound: f64,
    /// One-based position from which every value in the window is simple.
    pub n0: usize,
    pub n0_search: usize,
    pub window: usize,
}

/// Bounded imaginary parts and eventual simplicity on the available window.
pub fn check_a(sub: &Subspectrum, n0_search: usize, bound: f64) -> (bool, AReport) {
    let vals = sub.values();
    let max_im = vals.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    let mut n0 = 1;
    let mut pos = 0;
    for (_, m) in sub.groups() {
        pos += m;
        if m > 1 {
            n0 = pos + 1;
        }
    }
    let report = AReport {
        max_im,
        bound,
        n0,
        n0_search,
        window: vals.len(),
    };
    (max_im <= bound && n0 <= n0_search.max(1), report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub cond: f64,
    pub rows: usize,
    pub halfwidth: f64,
}

/// Rows `(λ, ν)` of the exponential family `t^ν e^{iλt}` with `|Re λ| ≤ T`.
fn gram_rows(sub: &Subspectrum, truncation: usize) -> Vec<(C, usize)> {
    sub.groups()
        .into_iter()
        .filter(|(v, _)| v.re.abs() <= truncation as f64)
        .flat_map(|(v, m)| (0..m).map(move |nu| (v, nu)))
        .collect()
}

/// `⟨t^a e^{iλt}, t^b e^{iμt}⟩` on `(-h, h)`.
fn gram_entry(a: (C, usize), b: (C, usize), h: f64) -> C {
    let k = a.1 + b.1;
    full(a.0 - b.0.conj(), h, k)[k]
}

/// Unit-diagonal Gram matrix of the exponential family on `(-h, h)`.
pub fn gram_matrix(sub: &Subspectrum, halfwidth: f64, truncation: usize) -> DMatrix<Complex64> {
    let rows = gram_rows(sub, truncation);
    let n = rows.len();
    let entries: Vec<C> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            if j < i {
                return C::new(0.0, 0.0);
            }
            gram_entry(rows[i], rows[j], halfwidth)
        })
        .collect();
    let mut g = DMatrix::from_fn(n, n, |i, j| if j >= i { entries[i * n + j] } else { entries[j * n + i].conj() });
    let d: Vec<f64> = (0..n).map(|i| g[(i, i)].re.max(f64::MIN_POSITIVE).sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] /= d[i] * d[j];
        }
    }
    g
}

/// Extreme singular values of the normalized Gram section.
pub fn gram_diagnostic(sub: &Subspectrum, halfwidth: f64, truncation: usize) -> GramReport {
    let g = gram_matrix(sub, halfwidth, truncation);
    let rows = g.nrows();
    if rows == 0 {
        return GramReport {
            sigma_min: 0.0,
            sigma_max: 0.0,
            cond: f64::INFINITY,
            rows,
            halfwidth,
        };
    }
    let sv = g.singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min().max(0.0);
    GramReport {
        sigma_min,
        sigma_max,
        cond: if sigma_min > 0.0 { (sigma_max / sigma_min).max(1.0) } else { f64::INFINITY },
        rows,
        halfwidth,
    }
}

/// Completeness proxy of the moment system, as used by the inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub rank: usize,
    pub needed: usize,
    pub condition: f64,
    pub complete: bool,
}

pub fn moment_diagnostic(sub: &Subspectrum, f1: &EntireExpr, f2: &EntireExpr, truncation: usize) -> Result<MomentReport, ConditionError> {
    let sys = build_moment_system(sub, f1, f2, truncation)?;
    match solve_moments(&sys, sys.len()) {
        Ok(s) => Ok(MomentReport {
            rank: s.rank,
            needed: s.needed,
            condition: s.condition(),
            complete: true,
        }),
        Err(InverseError::Incomplete { rank, needed }) => Ok(MomentReport {
            rank,
            needed,
            condition: f64::INFINITY,
            complete: false,
        }),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub label: String,
    #[serde(rename = "S_ok")]
    pub s_ok: bool,
    #[serde(rename = "S_min")]
    pub s_min: f64,
    #[serde(rename = "A_ok")]
    pub a_ok: bool,
    #[serde(rename = "A")]
    pub a: AReport,
    pub gram_sigma_min: f64,
    pub gram_cond: f64,
    pub gram: GramReport,
    pub moments: MomentReport,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.s_ok && self.a_ok && self.moments.complete
    }
}

/// All diagnostics for one data set, with the Gram section on `(-2π, 2π)`.
pub fn report(sub: &Subspectrum, f1: &EntireExpr, f2: &EntireExpr, truncation: usize) -> Result<ConditionReport, ConditionError> {
    let (s_ok, s_min) = check_s(sub, f1, f2)?;
    let (a_ok, a) = check_a(sub, sub.len(), IM_BOUND);
    let gram = gram_diagnostic(sub, 2.0 * PI, truncation);
    let moments = moment_diagnostic(sub, f1, f2, truncation)?;
    Ok(ConditionReport {
        label: PROXY_LABEL.to_string(),
        s_ok,
        s_min,
        a_ok,
        a,
        gram_sigma_min: gram.sigma_min,
        gram_cond: gram.cond,
        gram,
        moments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(r: f64, i: f64) -> C {
        C::new(r, i)
    }

    fn sub(v: Vec<C>) -> Subspectrum {
        Subspectrum::new(v, c(0.0, 0.0)).unwrap()
    }

    fn halves(t: i64) -> Subspectrum {
        sub((-2 * t..=2 * t).map(|n| c(n as f64 / 2.0, 0.0)).collect())
    }

    #[test]
    fn check_s_detects_simultaneous_zero() {
        let s = sub(vec![c(2.0, 0.0), c(2.5, 0.0)]);
        let (ok, _) = check_s(&s, &EntireExpr::real(0.0), &EntireExpr::real(1.0)).unwrap();
        assert!(ok);
        let sin = EntireExpr::sin(EntireExpr::affine(c(PI, 0.0), c(0.0, 0.0)));
        let (ok, m) = check_s(&s, &sin, &sin).unwrap();
        assert!(!ok && m < 1e-12);
        let (ok, _) = check_s(&sub(vec![c(2.5, 0.0)]), &sin, &sin).unwrap();
        assert!(ok);
    }

    #[test]
    fn check_a_examples() {
        let (ok, r) = check_a(&sub((1..=50).map(|k| c(k as f64 + 0.1, 0.0)).collect()), 1, IM_BOUND);
        assert!(ok);
        assert_eq!(r.n0, 1);
        let mut v = vec![c(1.0, 0.0), c(1.0, 0.0)];
        v.extend((2..=10).map(|k| c(k as f64, 0.0)));
        let (ok, r) = check_a(&sub(v), 3, IM_BOUND);
        assert!(ok);
        assert_eq!(r.n0, 3);
        let (ok, r) = check_a(&sub((1..=20).map(|k| c(k as f64, k as f64)).collect()), 1, IM_BOUND);
        assert!(!ok);
        assert_eq!(r.max_im, 20.0);
    }

    #[test]
    fn half_integer_family_is_orthonormal_on_doubled_interval() {
        let r = gram_diagnostic(&halves(8), 2.0 * PI, 8);
        assert_eq!(r.rows, 33);
        assert!((r.cond - 1.0).abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn double_value_adds_a_derivative_row() {
        let s = sub(vec![c(0.7, 0.0), c(0.7, 0.0)]);
        let g = gram_matrix(&s, 2.0 * PI, 4);
        assert_eq!(g.nrows(), 2);
        let h = 2.0 * PI;
        // ∫ t e^{0} = 0 on a symmetric interval
        assert!(g[(0, 1)].norm() < 1e-12);
        let r = gram_diagnostic(&s, h, 4);
        assert!((r.sigma_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_entry_matches_closed_form() {
        let (a, b, h) = (c(1.3, 0.2), c(-0.4, 0.5), 2.0 * PI);
        let d = a - b.conj();
        let want = (d * h).sin() * 2.0 / d;
        assert!((gram_entry((a, 0), (b, 0), h) - want).norm() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn gram_is_hermitian_psd(vals in prop::collection::vec((-6.0f64..6.0, -1.0f64..1.0), 1..12)) {
            let mut v: Vec<C> = vals.iter().map(|&(r, i)| c(r, i)).collect();
            v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            v.dedup();
            let g = gram_matrix(&sub(v), 2.0 * PI, 8);
            let norm = g.norm();
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    prop_assert!((g[(i, j)] - g[(j, i)].conj()).norm() < 1e-12 * (1.0 + norm));
                }
            }
            let e = g.symmetric_eigenvalues();
            prop_assert!(e.min() >= -1e-10 * norm.max(1.0));
        }

        #[test]
        fn real_values_give_real_gram(vals in prop::collection::vec(-6.0f64..6.0, 1..10)) {
            let mut v: Vec<C> = vals.iter().map(|&r| c(r, 0.0)).collect();
            v.sort_by(|a, b| a.re.total_cmp(&b.re));
            v.dedup();
            let g = gram_matrix(&sub(v), 2.0 * PI, 8);
            prop_assert!(g.iter().all(|z| z.im.abs() < 1e-12));
        }
    }
}
