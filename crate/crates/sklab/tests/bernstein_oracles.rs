//! Laplace-transform oracles for the closed-form stable densities.
//!
//! The integrator here is deliberately independent of the library's
//! adaptive quadrature: plain composite Simpson on a fixed logarithmic
//! grid, accurate enough to certify the 1e-6 tolerance.

use sklab::bernstein::{subordinator_densities, SubordinatorLaw};

/// Composite Simpson of `f` over `[a, b]` after the substitution `t = e^u`.
fn simpson_log(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let lo = a.ln();
    let hi = b.ln();
    let n = 2 * panels;
    let h = (hi - lo) / n as f64;
    let g = |u: f64| {
        let t = u.exp();
        f(t) * t
    };
    let mut acc = g(lo) + g(hi);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(lo + h * i as f64);
    }
    acc * h / 3.0
}

#[test]
fn nu_laplace_transform_matches_psi() {
    // int_0^inf (1 - e^{-lambda t}) nu(t) dt = lambda^gamma
    for &gamma in &[0.3, 0.5, 0.7] {
        let law = SubordinatorLaw::exact_stable(gamma).unwrap();
        for &lambda in &[0.5, 1.0, 2.0, 10.0] {
            // truncation tail of nu is t^{-gamma}/Gamma(1-gamma); push it
            // below 1e-9 by ending at 1e10^{1/gamma}
            let t_hi = 1e10f64.powf(1.0 / gamma);
            let value = simpson_log(
                |t| -(-lambda * t).exp_m1() * law.nu(t),
                1e-30 / lambda,
                t_hi,
                60_000,
            );
            let expected = lambda.powf(gamma);
            let rel = (value / expected - 1.0).abs();
            assert!(
                rel <= 1e-6,
                "gamma={gamma}, lambda={lambda}: transform {value} vs {expected} (rel {rel:.2e})"
            );
        }
    }
}

#[test]
fn v_laplace_transform_matches_inverse_psi() {
    // int_0^inf e^{-lambda t} v(t) dt = lambda^{-gamma}
    for &gamma in &[0.3, 0.5, 0.7] {
        let law = SubordinatorLaw::exact_stable(gamma).unwrap();
        for &lambda in &[0.5, 1.0, 2.0, 10.0] {
            let value = simpson_log(
                |t| (-lambda * t).exp() * law.v(t),
                1e-30 / lambda,
                300.0 / lambda,
                40_000,
            );
            let expected = lambda.powf(-gamma);
            let rel = (value / expected - 1.0).abs();
            assert!(
                rel <= 1e-6,
                "gamma={gamma}, lambda={lambda}: transform {value} vs {expected} (rel {rel:.2e})"
            );
        }
    }
}

#[test]
fn frozen_density_values_at_one() {
    // values certified by the transform oracles above
    let law = SubordinatorLaw::exact_stable(0.5).unwrap();
    let (nu, v) = subordinator_densities(&law, 1.0).unwrap();
    assert!((nu - 0.28209479177387814).abs() < 1e-14, "nu(1) = {nu}");
    assert!((v - 0.5641895835477563).abs() < 1e-14, "v(1) = {v}");
}
