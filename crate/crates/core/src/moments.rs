//! Polynomial-weighted exponential integrals.
//!
//! `half(z, h, m) = ∫₀ʰ tᵏ e^{izt} dt` for `k = 0..=m`, and the derived
//! symmetric moments on `(-h, h)`. Small `|z|h` uses Gauss–Legendre
//! quadrature; large `|z|h` uses the upward recurrence
//! `P_k = [tᵏ e^{izt}/(iz)]₀ʰ - (k/(iz)) P_{k-1}`.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::OnceLock;

type C = Complex64;

const GL_ORDER: usize = 64;
/// Above this value of `|z|h` the recurrence is used.
const SWITCH: f64 = 8.0 * PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gl64() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(GL_ORDER))
}

/// `∫₀ʰ tᵏ e^{izt} dt`, `k = 0..=m`.
pub fn half(z: C, h: f64, m: usize) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); m + 1];
    if z.norm() * h <= SWITCH.max(2.0 * (m + 1) as f64) {
        let (x, w) = gl64();
        for (xi, wi) in x.iter().zip(w) {
            let t = 0.5 * h * (xi + 1.0);
            let e = (C::i() * z * t).exp() * (0.5 * h * wi);
            let mut tk = 1.0;
            for o in out.iter_mut() {
                *o += e * tk;
                tk *= t;
            }
        }
    } else {
        let iz = C::i() * z;
        let eh = (iz * h).exp();
        out[0] = (eh - 1.0) / iz;
        let mut hk = 1.0;
        for k in 1..=m {
            hk *= h;
            out[k] = (eh * hk - out[k - 1] * k as f64) / iz;
        }
    }
    out
}

/// `∫₋ₕʰ tᵏ e^{izt} dt`, `k = 0..=m`.
pub fn full(z: C, h: f64, m: usize) -> Vec<C> {
    let a = half(z, h, m);
    let b = half(-z, h, m);
    a.iter()
        .zip(&b)
        .enumerate()
        .map(|(k, (p, q))| if k % 2 == 0 { p + q } else { p - q })
        .collect()
}

fn i_pow(k: usize) -> C {
    [C::new(1.0, 0.0), C::new(0.0, 1.0), C::new(-1.0, 0.0), C::new(0.0, -1.0)][k % 4]
}

fn factorials(m: usize) -> Vec<f64> {
    let mut f = vec![1.0; m + 1];
    for k in 1..=m {
        f[k] = f[k - 1] * k as f64;
    }
    f
}

/// Scaled derivatives of the sinc kernel `s(z) = sin(πz)/(πz) = (1/2π)∫₋π^π e^{izt} dt`:
/// `s^{<k>}(z) = (1/2π)(1/k!)∫₋π^π (it)ᵏ e^{izt} dt`, `k = 0..=m`.
pub fn sinc_jet(z: C, m: usize) -> Vec<C> {
    let e = full(z, PI, m);
    let f = factorials(m);
    (0..=m).map(|k| e[k] * i_pow(k) / (f[k] * 2.0 * PI)).collect()
}

/// `sin(πz)/(πz)` with its removable singularity filled in.
pub fn sinc(z: C) -> C {
    let w = z * PI;
    if w.norm() < 1e-4 {
        let w2 = w * w;
        C::new(1.0, 0.0) - w2 / 6.0 + w2 * w2 / 120.0
    } else {
        w.sin() / w
    }
}

/// Scaled derivatives of `∫₋π^π P(t) e^{izt} dt` for the polynomial with
/// coefficients `poly` (constant term first), `k = 0..=m`.
pub fn poly_jet(z: C, poly: &[C], m: usize) -> Vec<C> {
    let e = full(z, PI, m + poly.len().saturating_sub(1));
    let f = factorials(m);
    (0..=m)
        .map(|k| {
            let s: C = poly.iter().enumerate().map(|(j, a)| a * e[j + k]).sum();
            s * i_pow(k) / f[k]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(r: f64, i: f64) -> C {
        C::new(r, i)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(64);
        for k in [0usize, 1, 10, 63, 126] {
            let got: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
            let want = if k % 2 == 1 { 0.0 } else { 2.0 / (k + 1) as f64 };
            assert!((got - want).abs() < 1e-13, "degree {k}: {got}");
        }
        let (x, w) = gauss_legendre(5);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn both_branches_agree_near_the_switch() {
        for z in [c(SWITCH / PI * 0.999, 0.3), c(-SWITCH / PI * 1.001, -0.2)] {
            let a = half(z, PI, 9);
            // force the other branch by splitting the interval in halves
            let l = half(z, PI / 2.0, 9);
            let r: Vec<C> = {
                let shift = (C::i() * z * (PI / 2.0)).exp();
                let inner = half(z, PI / 2.0, 9);
                // ∫_{π/2}^{π} t^k e^{izt} = e^{izπ/2} Σ_j C(k,j)(π/2)^{k-j} ∫_0^{π/2} s^j e^{izs}
                (0..=9)
                    .map(|k| {
                        let mut s = C::new(0.0, 0.0);
                        let mut binom = 1.0;
                        for j in 0..=k {
                            s += inner[j] * binom * (PI / 2.0).powi((k - j) as i32);
                            binom = binom * (k - j) as f64 / (j + 1) as f64;
                        }
                        s * shift
                    })
                    .collect()
            };
            for k in 0..=9 {
                let b = l[k] + r[k];
                assert!((a[k] - b).norm() < 1e-10 * (1.0 + b.norm()), "k={k}: {} vs {}", a[k], b);
            }
        }
    }

    #[test]
    fn zeroth_moment_closed_form() {
        for z in [c(0.0, 0.0), c(0.3, 0.0), c(2.5, 1.0), c(40.0, -0.5)] {
            let e = full(z, PI, 0)[0];
            let want = if z.norm() == 0.0 { c(2.0 * PI, 0.0) } else { (z * PI).sin() * 2.0 / z };
            assert!((e - want).norm() < 1e-12 * (1.0 + want.norm()));
        }
    }

    #[test]
    fn sinc_jet_matches_sinc_and_difference_quotient() {
        for z in [c(0.0, 0.0), c(0.37, 0.1), c(3.2, 0.0), c(-30.4, 0.2)] {
            let j = sinc_jet(z, 2);
            assert!((j[0] - sinc(z)).norm() < 1e-13);
            let h = 1e-5;
            let d = (sinc(z + h) - sinc(z - h)) / (2.0 * h);
            assert!((j[1] - d).norm() < 1e-8);
        }
        assert!((sinc(c(2.0, 0.0))).norm() < 1e-15);
    }

    #[test]
    fn poly_jet_of_a_ramp() {
        let ramp = [c(0.0, 0.0), c(0.0, 1.0 / (2.0 * PI))];
        for z in [c(0.4, 0.0), c(5.5, 0.3), c(-40.2, 0.0)] {
            let want = ((z * PI).cos() - sinc(z)) / z;
            assert!((poly_jet(z, &ramp, 0)[0] - want).norm() < 1e-12);
        }
        let z = c(1.3, 0.1);
        let h = 1e-5;
        let d = (poly_jet(z + h, &ramp, 0)[0] - poly_jet(z - h, &ramp, 0)[0]) / (2.0 * h);
        assert!((poly_jet(z, &ramp, 2)[1] - d).norm() < 1e-8);
    }
}
