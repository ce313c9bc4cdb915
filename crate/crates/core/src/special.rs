//! Gaussian tail, Marcum Q of order one, and adaptive Gauss-Kronrod quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{NompError, Result};

/// Standard normal upper tail `Pr{X > x}`.
pub fn gaussian_q(arg: f64) -> f64 {
    0.5 * libm::erfc(arg / std::f64::consts::SQRT_2)
}

/// Marcum Q-function of order one, `Q₁(a, b)`.
///
/// Evaluated as the Poisson mixture `Σ_k Pois(k; a²/2)·Pr{Pois(b²/2) ≤ k}`,
/// summed over the window where the first factor carries non-negligible mass.
pub fn marcum_q1(a: f64, b: f64) -> f64 {
    let a = a.abs();
    let b = b.abs();
    if b == 0.0 {
        return 1.0;
    }
    let lambda = 0.5 * b * b;
    if a == 0.0 {
        return (-lambda).exp();
    }
    let mu = 0.5 * a * a;
    let spread = 10.0 * mu.sqrt();
    let lo = (mu - spread - 10.0).floor().max(0.0) as u64;
    let hi = (mu + spread + 30.0).ceil() as u64;

    let ln_mu = mu.ln();
    let ln_lambda = lambda.ln();
    let mut total = 0.0;
    let mut mass = 0.0;
    // Pr{Pois(λ) ≤ k} is the regularised upper incomplete gamma Q(k+1, λ).
    let mut cdf = gamma_ur(lo as f64 + 1.0, lambda);
    for k in lo..=hi {
        let kf = k as f64;
        if k > lo {
            cdf += (-lambda + kf * ln_lambda - ln_gamma(kf + 1.0)).exp();
        }
        let weight = (-mu + kf * ln_mu - ln_gamma(kf + 1.0)).exp();
        total += weight * cdf.min(1.0);
        mass += weight;
    }
    // normalising by the summed weights cancels rounding in the shared e^{−μ}
    (total / mass).clamp(0.0, 1.0)
}

// Kronrod 15-point abscissae (non-negative half) and weights; the Gauss
// 7-point rule uses the odd-indexed abscissae.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 5000;

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive 7/15-point Gauss-Kronrod integration of `f` over the
/// consecutive intervals defined by `breakpoints` (at least two, ascending).
/// The worst interval is bisected until the summed error estimate is at most
/// `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], abs_tol: f64) -> Result<f64> {
    if breakpoints.len() < 2 || breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(crate::error::invalid(
            "integration breakpoints must be at least two ascending values",
        ));
    }
    let mut heap = BinaryHeap::new();
    let mut err = 0.0;
    for w in breakpoints.windows(2) {
        let (v, e) = gk15(&f, w[0], w[1]);
        err += e;
        heap.push(Piece {
            a: w[0],
            b: w[1],
            value: v,
            err: e,
        });
    }
    while !(err <= abs_tol) {
        if heap.len() >= MAX_INTERVALS {
            return Err(NompError::Quadrature {
                tolerance: abs_tol,
                estimate: err,
            });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            return Err(NompError::Quadrature {
                tolerance: abs_tol,
                estimate: err,
            });
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        err += e1 + e2 - worst.err;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            err: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            err: e2,
        });
    }
    Ok(heap.iter().map(|p| p.value).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn phi(arg: f64) -> f64 {
        (-0.5 * arg * arg).exp() / (2.0 * PI).sqrt()
    }

    /// `Q₁(a, b) = 1 − Pr{|a + Z| ≤ b}` for a unit complex Gaussian `Z`, as a
    /// one-dimensional integral over the disk, using `v = b·sin t`.
    fn marcum_oracle(a: f64, b: f64) -> f64 {
        if b == 0.0 {
            return 1.0;
        }
        let cdf = |arg: f64| 1.0 - gaussian_q(arg);
        let integrand = |t: f64| {
            let c = b * t.cos();
            phi(b * t.sin()) * (cdf(c - a) - cdf(-c - a)) * c
        };
        let m = 4000;
        let (lo, hi) = (-PI / 2.0, PI / 2.0);
        let h = (hi - lo) / m as f64;
        let mut acc = integrand(lo) + integrand(hi);
        for i in 1..m {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(lo + i as f64 * h);
        }
        1.0 - acc * h / 3.0
    }

    #[test]
    fn gaussian_q_values() {
        assert_eq!(gaussian_q(0.0), 0.5);
        assert!((gaussian_q(1.0) - 0.158_655_253_931_457_07).abs() < 1e-16);
        assert!((gaussian_q(-1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((gaussian_q(5.0) - 2.866_515_718_791_946e-7).abs() < 1e-21);
    }

    #[test]
    fn marcum_edge_cases() {
        assert_eq!(marcum_q1(3.0, 0.0), 1.0);
        for b in [0.1, 1.0, 2.5, 7.0] {
            assert!((marcum_q1(0.0, b) - (-0.5 * b * b).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn marcum_matches_integration_oracle() {
        for i in 0..=20 {
            for j in 0..=20 {
                let a = 0.5 * i as f64;
                let b = 0.5 * j as f64;
                let got = marcum_q1(a, b);
                let want = marcum_oracle(a, b);
                assert!(
                    (got - want).abs() < 1e-8,
                    "Q1({a}, {b}) = {got}, oracle {want}"
                );
            }
        }
    }

    #[test]
    fn marcum_monotone() {
        let mut prev = 0.0;
        for i in 0..50 {
            let q = marcum_q1(0.2 * i as f64, 4.0);
            assert!(q >= prev);
            prev = q;
        }
        let mut prev = 1.0;
        for i in 0..50 {
            let q = marcum_q1(4.0, 0.2 * i as f64);
            assert!(q <= prev);
            prev = q;
        }
    }

    #[test]
    fn marcum_large_arguments_stay_finite() {
        let q = marcum_q1(1244.0, 4.5);
        assert!((q - 1.0).abs() < 1e-12);
        let q = marcum_q1(50.0, 50.0);
        assert!(q > 0.45 && q < 0.55, "{q}");
    }

    #[test]
    fn integrate_polynomial_exactly() {
        let v = integrate(|arg| arg.powi(5) - 2.0 * arg, &[0.0, 2.0], 1e-12).unwrap();
        assert!((v - (64.0 / 6.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn integrate_with_breakpoints_and_kink() {
        let v = integrate(|arg: f64| arg.abs().sqrt(), &[-1.0, 0.0, 1.0], 1e-10).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-9);
        let v = integrate(|arg: f64| arg.sin(), &[0.0, PI], 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn integrate_reports_failure() {
        let r = integrate(|arg: f64| 1.0 / arg, &[0.0, 1.0], 1e-10);
        assert!(matches!(r, Err(NompError::Quadrature { .. })));
        assert!(integrate(|arg| arg, &[1.0], 1e-8).is_err());
        assert!(integrate(|arg| arg, &[1.0, 0.0], 1e-8).is_err());
    }
}
