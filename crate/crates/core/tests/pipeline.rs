use num_complex::Complex64 as C;
use pencilspec::cli::relative_l2;
use pencilspec::coefficients::{CoefficientPair, Jump};
use pencilspec::forward::{dirichlet, ForwardSolver};
use pencilspec::halfinverse::{doubled_spectrum, solve_half_with, HalfProblem};
use pencilspec::inverse::{locate_thetas, weyl_residues};
use pencilspec::kernels::extract_triple;
use pencilspec::recovery::{recover_pq, RecoveryConfig, StepAtom};
use pencilspec::roots::Rect;
use std::f64::consts::PI;

fn c(r: f64, i: f64) -> C {
    C::new(r, i)
}

#[test]
fn constant_sigma_shift_leaves_the_spectrum_unchanged() {
    let cp = CoefficientPair::from_fns((0.0, PI), 257, |x| c(0.2 * x.cos(), 0.0), |x| c(0.3 * x.sin(), 0.0), vec![]).unwrap();
    let (f1, f2) = dirichlet();
    let solver = ForwardSolver::default();
    let search = Rect::new((-8.5, 8.5), (-3.0, 3.0));
    let base = solver.eigenvalues(&cp, &f1, &f2, search, None).unwrap();
    for h in [c(1.5, 0.0), c(-0.7, 0.4)] {
        let moved = solver.eigenvalues(&cp.shift_sigma(h), &f1, &f2, search, None).unwrap();
        assert_eq!(moved.len(), base.len());
        for (a, b) in moved.values().iter().zip(base.values()) {
            assert!((a - b).norm() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn cosine_potential_is_recovered_from_weyl_data() {
    let cp = CoefficientPair::from_fns((0.0, PI), 257, |x| c(0.3 * x.cos(), 0.0), |_| c(0.0, 0.0), vec![]).unwrap();
    let bt = extract_triple(&cp, 48).unwrap();
    let wd = weyl_residues(&bt, &locate_thetas(&bt, 16).unwrap()).unwrap();
    assert!(wd.residues_valid);
    let cfg = RecoveryConfig {
        basis_dim: 4,
        max_index: 16,
        ..RecoveryConfig::default()
    };
    let rec = recover_pq(&wd, &cfg).unwrap();
    let e = relative_l2(|x| rec.model.eval_p(x), |x| c(0.3 * x.cos(), 0.0));
    assert!(e < 1e-3, "relative error {e:.3e}");
}

#[test]
fn half_interval_step_in_sigma() {
    let left = CoefficientPair::from_fns(
        (0.0, PI),
        257,
        |x| c(0.2 * x.cos(), 0.0),
        |_| c(0.0, 0.0),
        vec![Jump {
            at: PI / 2.0,
            height: c(0.5, 0.0),
        }],
    )
    .unwrap();
    let right = CoefficientPair::zero((PI, 2.0 * PI));
    let hp = HalfProblem::new(right.clone(), doubled_spectrum(&left, &right, 128).unwrap());
    let cfg = RecoveryConfig {
        step_atom: Some(StepAtom {
            at: 1.3,
            fit_location: true,
        }),
        misfit_tol: 1e-6,
        ..RecoveryConfig::default()
    };
    let sol = solve_half_with(&hp, &cfg, 64, 1e-1).unwrap();
    let step = sol.left.jumps();
    assert_eq!(step.len(), 1);
    assert!((step[0].at - PI / 2.0).abs() < 5e-2, "{:?}", step[0]);
    assert!((step[0].height - 0.5).norm() < 5e-2, "{:?}", step[0]);
    let e = relative_l2(|x| sol.left.eval_p(x).unwrap(), |x| c(0.2 * x.cos(), 0.0));
    assert!(e < 5e-2, "relative p error {e:.3e}");
}
