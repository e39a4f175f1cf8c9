//! Property tests for the structural invariants of the estimate functions.

use proptest::prelude::*;

use sklab::bernstein::{scale_profile, LaplaceExponent, SubordinatorLaw};
use sklab::estimates::{
    green_comparison, heat_kernel_comparison, jump_comparison, BoundaryTriple, ComparisonKernel,
    JumpCase, UNIT_DISK_LAMBDA1,
};

fn kernel(phi_alpha: f64, gamma: f64) -> ComparisonKernel {
    let phi = LaplaceExponent::stable(phi_alpha).unwrap();
    ComparisonKernel::new(
        2,
        scale_profile(&phi),
        SubordinatorLaw::exact_stable(gamma).unwrap(),
        UNIT_DISK_LAMBDA1,
    )
    .unwrap()
}

fn case_for(gamma: f64) -> JumpCase {
    if gamma > 0.5 {
        JumpCase::I
    } else {
        JumpCase::Ii
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixture_exponent_concavity_sandwich(
        w in 0.05f64..0.95,
        a1 in 0.05f64..0.95,
        a2 in 0.05f64..0.95,
        t in 1e-6f64..1e6,
        lambda in 1e-6f64..1e6,
    ) {
        let f = LaplaceExponent::mix(&[(w, a1), (1.0 - w, a2)]).unwrap();
        let ft = f.value(t);
        let flt = f.value(lambda * t);
        prop_assert!(flt >= lambda.min(1.0) * ft * (1.0 - 1e-11));
        prop_assert!(flt <= lambda.max(1.0) * ft * (1.0 + 1e-11));
    }

    #[test]
    fn profile_inverse_round_trip(
        w in 0.05f64..0.95,
        a1 in 0.05f64..0.95,
        a2 in 0.05f64..0.95,
        t in 1e-8f64..1e8,
    ) {
        let phi = LaplaceExponent::mix(&[(w, a1), (1.0 - w, a2)]).unwrap();
        let p = scale_profile(&phi);
        let r = p.inverse(t).unwrap();
        prop_assert!((p.value(r) / t - 1.0).abs() < 1e-8);
    }

    #[test]
    fn heat_kernel_symmetric_in_boundary_distances(
        phi_alpha in 0.15f64..0.95,
        gamma in 0.15f64..0.95,
        dx in 1e-5f64..1.0,
        dy in 1e-5f64..1.0,
        r in 1e-4f64..2.0,
        t in 1e-6f64..10.0,
    ) {
        let k = kernel(phi_alpha, gamma);
        let a = heat_kernel_comparison(&k, t, &BoundaryTriple::new(dx, dy, r).unwrap()).unwrap();
        let b = heat_kernel_comparison(&k, t, &BoundaryTriple::new(dy, dx, r).unwrap()).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(b));
    }

    #[test]
    fn green_symmetric_and_positive(
        phi_alpha in 0.15f64..0.95,
        gamma in 0.15f64..0.95,
        dx in 1e-5f64..1.0,
        dy in 1e-5f64..1.0,
        r in 1e-4f64..2.0,
    ) {
        let k = kernel(phi_alpha, gamma);
        let a = green_comparison(&k, &BoundaryTriple::new(dx, dy, r).unwrap());
        let b = green_comparison(&k, &BoundaryTriple::new(dy, dx, r).unwrap());
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(b));
    }

    #[test]
    fn jump_symmetric_and_dominated_by_interior_scale(
        phi_alpha in 0.15f64..0.95,
        gamma in 0.15f64..0.95,
        dx in 1e-5f64..1.0,
        dy in 1e-5f64..1.0,
        r in 1e-4f64..2.0,
    ) {
        prop_assume!((gamma - 0.5).abs() > 0.02);
        let k = kernel(phi_alpha, gamma);
        let case = case_for(gamma);
        let a = jump_comparison(&k, &BoundaryTriple::new(dx, dy, r).unwrap(), case).unwrap();
        let b = jump_comparison(&k, &BoundaryTriple::new(dy, dx, r).unwrap(), case).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(b));
        // boundary factors only ever damp the interior jump scale
        prop_assert!(a <= k.j(r) * (1.0 + 1e-12));
    }

    #[test]
    fn jump_continuous_across_branch_seam(
        phi_alpha in 0.15f64..0.95,
        gamma in 0.15f64..0.95,
        dy in 1e-4f64..1.0,
        r in 1e-3f64..1.0,
    ) {
        prop_assume!((gamma - 0.5).abs() > 0.02);
        let k = kernel(phi_alpha, gamma);
        let case = case_for(gamma);
        // delta_x crosses r
        let eps = 1e-11;
        let below = jump_comparison(&k, &BoundaryTriple::new(r * (1.0 - eps), dy, r).unwrap(), case).unwrap();
        let at = jump_comparison(&k, &BoundaryTriple::new(r, dy, r).unwrap(), case).unwrap();
        prop_assert!((below - at).abs() <= 1e-8 * at.max(below));
    }

    #[test]
    fn green_continuous_across_branch_seam(
        phi_alpha in 0.15f64..0.95,
        gamma in 0.15f64..0.95,
        dy in 1e-4f64..1.0,
        r in 1e-3f64..1.0,
    ) {
        let k = kernel(phi_alpha, gamma);
        let eps = 1e-11;
        let below = green_comparison(&k, &BoundaryTriple::new(r * (1.0 - eps), dy, r).unwrap());
        let at = green_comparison(&k, &BoundaryTriple::new(r, dy, r).unwrap());
        prop_assert!((below - at).abs() <= 1e-8 * at.max(below));
    }

    #[test]
    fn scaling_window_brackets_stable_index(alpha in 0.1f64..0.9) {
        let f = LaplaceExponent::stable(alpha).unwrap();
        let w = sklab::bernstein::estimate_scaling_indices(|l| f.value(l), (1.0, 1e6), 80, false).unwrap();
        prop_assert!((w.lower_exponent - alpha).abs() < 1e-9);
        prop_assert!((w.upper_exponent - alpha).abs() < 1e-9);
    }
}
