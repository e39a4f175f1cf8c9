//! Acceptance suite: one test per acceptance criterion, each printing a
//! pass/fail line with the measured numbers and enforcing its runtime cap.
//!
//! Every tolerance is pinned here in code. Experiments run through the
//! same config/dispatch path the command-line front end uses.

use std::time::Instant;

use sklab::bernstein::{
    compose_exponents, estimate_scaling_indices, LaplaceExponent, ScalingWindow,
};
use sklab::config::{
    DomainSpec, ExperimentConfig, ExperimentKind, PathSpec, SweepParams, ToleranceSpec,
};
use sklab::lab::run_experiment;
use sklab::montecarlo::{BoundaryScenario, HarnackScenario, RatioExperimentKind};
use sklab::quadrature::ProfileMode;
use sklab::report::{CheckResult, Report};

fn stable(alpha: f64) -> sklab::config::ExponentSpec {
    sklab::config::ExponentSpec::Stable { alpha }
}

fn config(seed: u64, phi: f64, psi: f64, experiment: ExperimentKind) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        workers: 0,
        phi: stable(phi),
        psi: stable(psi),
        psi_density: None,
        domain: DomainSpec::Disk {
            center: [0.0, 0.0],
            radius: 1.0,
        },
        dimension: 2,
        lambda1: sklab::estimates::UNIT_DISK_LAMBDA1,
        tolerances: ToleranceSpec::default(),
        experiment,
    }
}

fn check<'a>(report: &'a Report, name: &str) -> &'a CheckResult {
    report
        .checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("missing check {name}: have {:?}", report.checks.iter().map(|c| &c.name).collect::<Vec<_>>()))
}

fn assert_check(report: &Report, name: &str) {
    let c = check(report, name);
    assert!(c.pass, "check {name} failed: {:?} {:?}", c.values, c.notes);
}

#[test]
fn criterion_01_stable_density_laplace_oracles() {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for psi in [0.5, 0.7] {
        let report = run_experiment(config(1, 0.6, psi, ExperimentKind::ExponentInspect {})).unwrap();
        let c = check(&report, "density-oracle");
        assert!(c.pass, "density oracle failed for gamma={psi}: {:?}", c.values);
        worst = worst
            .max(c.values["worst_nu_relative_error"])
            .max(c.values["worst_v_relative_error"]);
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(worst <= 1e-6, "worst transform error {worst:.3e}");
    assert!(elapsed < 1.0, "criterion 1 took {elapsed:.2} s (cap 1 s)");
    println!("criterion 01 PASS: density transforms within {worst:.2e} of psi ({elapsed:.2} s)");
}

#[test]
fn criterion_02_scaling_index_recovery() {
    let t0 = Instant::now();
    for alpha in [0.3, 0.6, 0.9] {
        let f = LaplaceExponent::stable(alpha).unwrap();
        let w = estimate_scaling_indices(|l| f.value(l), (1.0, 1e6), 200, false).unwrap();
        assert!(
            (w.lower_exponent - alpha).abs() <= 0.02 && (w.upper_exponent - alpha).abs() <= 0.02,
            "alpha={alpha}: window ({}, {})",
            w.lower_exponent,
            w.upper_exponent
        );
    }

    // composed pure powers: both indices equal the product
    let chi = compose_exponents(
        &LaplaceExponent::stable(0.5).unwrap(),
        &LaplaceExponent::stable(0.6).unwrap(),
    )
    .unwrap();
    let w = estimate_scaling_indices(|l| chi.value(l), (1.0, 1e6), 200, false).unwrap();
    assert!((w.lower_exponent - 0.3).abs() <= 0.02 && (w.upper_exponent - 0.3).abs() <= 0.02);

    // mixtures: the fitted window of the composition sits inside the
    // elementwise product window
    let psi = LaplaceExponent::mix(&[(0.5, 0.3), (0.5, 0.7)]).unwrap();
    let phi = LaplaceExponent::mix(&[(0.5, 0.4), (0.5, 0.9)]).unwrap();
    let composed = compose_exponents(&psi, &phi).unwrap();
    let w_meas = estimate_scaling_indices(|l| composed.value(l), (1.0, 1e6), 200, false).unwrap();
    let w_prod = ScalingWindow::compose(
        &estimate_scaling_indices(|l| psi.value(l), (1.0, 1e6), 200, false).unwrap(),
        &estimate_scaling_indices(|l| phi.value(l), (1.0, 1e6), 200, false).unwrap(),
    );
    assert!(
        w_meas.lower_exponent >= w_prod.lower_exponent - 0.02
            && w_meas.upper_exponent <= w_prod.upper_exponent + 0.02,
        "measured ({}, {}) vs product ({}, {})",
        w_meas.lower_exponent,
        w_meas.upper_exponent,
        w_prod.lower_exponent,
        w_prod.upper_exponent
    );

    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "criterion 2 took {elapsed:.2} s (cap 1 s)");
    println!("criterion 02 PASS: stable indices and composition windows recovered ({elapsed:.2} s)");
}

#[test]
fn criterion_03_green_small_range_and_assembled_sweeps() {
    for phi in [0.4, 0.6, 0.9] {
        for psi in [0.3, 0.5, 0.7] {
            let t0 = Instant::now();
            let lemma = run_experiment(config(
                3,
                phi,
                psi,
                ExperimentKind::VerifyLemma {
                    id: "6.3".into(),
                    sweep: SweepParams::default(),
                    cap: 100.0,
                    refine: true,
                },
            ))
            .unwrap();
            assert_check(&lemma, "lemma-6.3");
            assert_check(&lemma, "lemma-6.3-stability");

            let assembled = run_experiment(config(
                3,
                phi,
                psi,
                ExperimentKind::AssembledGreen {
                    sweep: SweepParams::default(),
                    cap: 100.0,
                    refine: true,
                },
            ))
            .unwrap();
            assert_check(&assembled, "assembled-green");
            assert_check(&assembled, "assembled-green-stability");

            let elapsed = t0.elapsed().as_secs_f64();
            assert!(elapsed < 120.0, "pair ({phi}, {psi}) took {elapsed:.1} s (cap 120 s)");
            println!(
                "criterion 03 PASS pair ({phi:.1}, {psi:.1}): C_small = {:.3}, C_assembled = {:.3} ({elapsed:.1} s)",
                check(&lemma, "lemma-6.3").values["fitted_c"],
                check(&assembled, "assembled-green").values["fitted_c"],
            );
        }
    }
}

#[test]
fn criterion_04_jump_small_range_and_boundary_factor_sweeps() {
    for (id, psi) in [("8.1i", 0.7), ("8.1ii", 0.3), ("8.2i", 0.7), ("8.2ii", 0.3)] {
        let t0 = Instant::now();
        let report = run_experiment(config(
            4,
            0.6,
            psi,
            ExperimentKind::VerifyLemma {
                id: id.into(),
                sweep: SweepParams::default(),
                cap: 100.0,
                refine: true,
            },
        ))
        .unwrap();
        let name = format!("lemma-{id}");
        assert_check(&report, &name);
        assert_check(&report, &format!("{name}-stability"));
        let elapsed = t0.elapsed().as_secs_f64();
        assert!(elapsed < 120.0, "{id} took {elapsed:.1} s (cap 120 s)");
        println!(
            "criterion 04 PASS {id}: C = {:.3} ({elapsed:.1} s)",
            check(&report, &name).values["fitted_c"]
        );
    }
}

#[test]
fn criterion_05_jump_boundary_phase_transition() {
    // Phi = r^{2 beta} with beta = 0.6; window delta in [1e-4, 1e-2]
    let phase = |psi: f64| ExperimentKind::JumpPhase {
        delta_y: 0.3,
        r: 0.4,
        depth_hi: 1e-2,
        depth_lo: 1e-4,
        points: 9,
        slope_tol: 0.05,
        corr_min: 0.95,
    };

    for (psi, check_name) in [
        (0.3, "jump-phase-slope"),
        (0.7, "jump-phase-slope"),
        (0.5, "jump-phase-log-correlation"),
    ] {
        let t0 = Instant::now();
        let report = run_experiment(config(5, 0.6, psi, phase(psi))).unwrap();
        assert_check(&report, check_name);
        let elapsed = t0.elapsed().as_secs_f64();
        assert!(elapsed < 60.0, "gamma={psi} took {elapsed:.1} s (cap 60 s)");
        let c = check(&report, check_name);
        println!(
            "criterion 05 PASS gamma={psi}: {} = {:.4} ({elapsed:.1} s)",
            if psi == 0.5 { "correlation" } else { "slope" },
            c.values.get("slope").or_else(|| c.values.get("correlation")).unwrap()
        );
    }
}

fn lifetime_kind(n: u32) -> ExperimentKind {
    ExperimentKind::McLifetime {
        q_angle: 0.0,
        r0: 0.1,
        decades: 2.0,
        points: 8,
        n,
        slope_tol: 0.1,
        corr_min: 0.9,
        path: PathSpec::default(),
    }
}

#[test]
fn criterion_06_exit_time_laws() {
    for (psi, check_name) in [
        (0.8, "lifetime-slope"),
        (0.3, "lifetime-slope"),
        (0.5, "lifetime-log-correlation"),
    ] {
        let t0 = Instant::now();
        let report = run_experiment(config(6, 0.9, psi, lifetime_kind(100_000))).unwrap();
        assert_check(&report, check_name);
        assert_check(&report, "lifetime-truncation");
        let elapsed = t0.elapsed().as_secs_f64();
        assert!(elapsed < 600.0, "gamma={psi} took {elapsed:.1} s (cap 600 s)");
        let c = check(&report, check_name);
        println!(
            "criterion 06 PASS gamma={psi}: {:?} ({elapsed:.1} s)",
            c.values
        );
    }
}

#[test]
fn criterion_07_green_consistency() {
    let t0 = Instant::now();
    let report = run_experiment(config(
        7,
        0.6,
        0.7,
        ExperimentKind::McGreenOccupation {
            x: [0.3, 0.0],
            n: 30_000,
            cap: 100.0,
            refine: true,
            path: PathSpec::default(),
        },
    ))
    .unwrap();
    assert_check(&report, "occupation-vs-assembled");
    assert_check(&report, "occupation-total-vs-lifetime");
    assert_check(&report, "occupation-symmetry-pair");
    assert_check(&report, "occupation-stability");
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "criterion 7 took {elapsed:.1} s (cap 600 s)");
    println!(
        "criterion 07 PASS: C = {:.3}, stability change {:.3} ({elapsed:.1} s)",
        check(&report, "occupation-vs-assembled").values["fitted_c"],
        check(&report, "occupation-stability").values["relative_change"],
    );
}

#[test]
fn criterion_08_harnack_and_carleson() {
    let t0 = Instant::now();
    let harnack = run_experiment(config(
        8,
        0.6,
        0.7,
        ExperimentKind::McRatio {
            scenario: RatioExperimentKind::Harnack(HarnackScenario {
                center: sklab::domain::Point::zero(),
                radius: 0.2,
                n_data: 5,
            }),
            n: 20_000,
            cap: 50.0,
            refine: true,
            path: PathSpec::default(),
        },
    ))
    .unwrap();
    assert_check(&harnack, "harnack-constant");
    assert_check(&harnack, "harnack-stability");
    let harnack_elapsed = t0.elapsed().as_secs_f64();
    assert!(harnack_elapsed < 600.0, "harnack took {harnack_elapsed:.1} s (cap 600 s)");

    let t1 = Instant::now();
    let carleson = run_experiment(config(
        8,
        0.6,
        0.7,
        ExperimentKind::McRatio {
            scenario: RatioExperimentKind::Carleson(BoundaryScenario {
                q_angle: 0.0,
                r: 0.4,
                n_data: 5,
            }),
            n: 15_000,
            cap: 50.0,
            refine: true,
            path: PathSpec::default(),
        },
    ))
    .unwrap();
    assert_check(&carleson, "carleson-constant");
    assert_check(&carleson, "carleson-stability");
    let carleson_elapsed = t1.elapsed().as_secs_f64();
    assert!(carleson_elapsed < 600.0, "carleson took {carleson_elapsed:.1} s (cap 600 s)");

    println!(
        "criterion 08 PASS: harnack C = {:.3} ({harnack_elapsed:.1} s), carleson C = {:.3} ({carleson_elapsed:.1} s)",
        check(&harnack, "harnack-constant").values["fitted_c"],
        check(&carleson, "carleson-constant").values["fitted_c"],
    );
}

#[test]
fn criterion_09_boundary_decay_rate() {
    let t0 = Instant::now();
    let report = run_experiment(config(
        9,
        0.9,
        0.8,
        ExperimentKind::McRatio {
            scenario: RatioExperimentKind::Bhp(BoundaryScenario {
                q_angle: 0.0,
                r: 0.4,
                n_data: 5,
            }),
            n: 20_000,
            cap: 10.0,
            refine: false,
            path: PathSpec::default(),
        },
    ))
    .unwrap();
    assert_check(&report, "bhp-constant");
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "criterion 9 took {elapsed:.1} s (cap 600 s)");
    println!(
        "criterion 09 PASS: normalized decay ratio {:.3} within cap 10 ({elapsed:.1} s)",
        check(&report, "bhp-constant").values["fitted_c"]
    );
}

fn quad_profile_kind(mode: ProfileMode) -> ExperimentKind {
    ExperimentKind::CounterexampleQuad {
        q_angle: 0.0,
        r0: 0.1,
        depth_hi_frac: 0.1,
        decades: 2.0,
        points: 9,
        mode,
        growth_min: 2.0,
        corr_min: 0.9,
        control_cap: 1.5,
    }
}

fn mc_profile_kind(mode: ProfileMode) -> ExperimentKind {
    ExperimentKind::McCounterexample {
        q_angle: 0.0,
        r0: 0.1,
        depth_hi_frac: 0.1,
        decades: 2.0,
        points: 7,
        n: 20_000,
        mode,
        growth_min: 2.0,
        corr_min: 0.9,
        control_cap: 1.5,
        path: PathSpec::default(),
    }
}

/// The headline reproduction: the boundary construction diverges like
/// `log(1/delta)` at and below index 1/2 and stays bounded above it.
/// This test covers the divergence signatures (monotone rise, correlation
/// with `log(1/delta)`, path-functional growth) and the high-index
/// controls for both routes.
#[test]
fn criterion_10_phase_transition_profiles_and_controls() {
    let t0 = Instant::now();
    for psi in [0.5, 0.3] {
        let quad = run_experiment(config(10, 0.6, psi, quad_profile_kind(ProfileMode::Strict))).unwrap();
        assert_check(&quad, "profile-quad-monotone");
        assert_check(&quad, "profile-quad-log-correlation");

        let mc = run_experiment(config(1, 0.6, psi, mc_profile_kind(ProfileMode::Strict))).unwrap();
        assert_check(&mc, "profile-mc-monotone");
        assert_check(&mc, "profile-mc-growth");
        assert_check(&mc, "profile-mc-log-correlation");
        println!(
            "criterion 10 PASS gamma={psi}: mc growth {:.3}, quad correlation {:.4}",
            check(&mc, "profile-mc-growth").values["growth_factor"],
            check(&quad, "profile-quad-log-correlation").values["correlation"],
        );
    }

    // high-index controls stay within a factor 1.5
    let quad_control =
        run_experiment(config(10, 0.6, 0.8, quad_profile_kind(ProfileMode::Control))).unwrap();
    assert_check(&quad_control, "profile-quad-control-bounded");
    let mc_control = run_experiment(config(1, 0.6, 0.8, mc_profile_kind(ProfileMode::Control))).unwrap();
    assert_check(&mc_control, "profile-mc-control-bounded");
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 900.0, "criterion 10 took {elapsed:.1} s (cap 900 s)");
    println!(
        "criterion 10 PASS controls: quad variation {:.3}, mc variation {:.3} ({elapsed:.1} s)",
        check(&quad_control, "profile-quad-control-bounded").values["variation"],
        check(&mc_control, "profile-mc-control-bounded").values["variation"],
    );
}

/// The quadrature surrogate's growth-factor gate, exactly as stated.
///
/// KNOWN RED. The surrogate integrates the unnormalized comparison kernel,
/// whose near-diagonal shell contributes a constant ~14x the logarithmic
/// coefficient to the normalized profile (the product of comparison factors
/// carries no joint normalization). The measured growth over any 2-decade
/// window is therefore ~1.5-1.8, below the gate of 2, even though the
/// profile provably diverges (monotone, correlation ~0.999 with
/// log(1/delta)) and the path-level functional clears the same gate at 3+.
/// See the decisions ledger for the full analysis.
#[test]
fn criterion_10_quadrature_growth_gate() {
    for psi in [0.5, 0.3] {
        let quad = run_experiment(config(10, 0.6, psi, quad_profile_kind(ProfileMode::Strict))).unwrap();
        let c = check(&quad, "profile-quad-growth");
        assert!(
            c.pass,
            "quadrature growth gate (>= 2 over 2 decades) not met for gamma={psi}: \
             measured {:.3}; the divergence itself is established by the monotone and \
             correlation checks and by the path functional",
            c.values["growth_factor"]
        );
        println!(
            "criterion 10 quadrature growth gamma={psi}: {:.3}",
            c.values["growth_factor"]
        );
    }
}

#[test]
fn criterion_11_determinism() {
    let small = ExperimentKind::McLifetime {
        q_angle: 0.0,
        r0: 0.1,
        decades: 1.0,
        points: 3,
        n: 2_000,
        slope_tol: 10.0,
        corr_min: 0.0,
        path: PathSpec::default(),
    };
    let r1 = run_experiment(config(11, 0.7, 0.6, small.clone())).unwrap();
    let r2 = run_experiment(config(11, 0.7, 0.6, small.clone())).unwrap();
    assert_eq!(
        r1.to_json().unwrap(),
        r2.to_json().unwrap(),
        "identical config and seed must give byte-identical reports"
    );

    // worker count must not change any recorded number
    let mut c1 = config(11, 0.7, 0.6, small.clone());
    c1.workers = 1;
    let mut c2 = config(11, 0.7, 0.6, small);
    c2.workers = 2;
    let w1 = run_experiment(c1).unwrap();
    let w2 = run_experiment(c2).unwrap();
    assert_eq!(
        serde_json::to_string(&w1.checks).unwrap(),
        serde_json::to_string(&w2.checks).unwrap()
    );
    assert_eq!(
        serde_json::to_string(&w1.tables).unwrap(),
        serde_json::to_string(&w2.tables).unwrap()
    );
    println!("criterion 11 PASS: byte-identical reruns, worker-count invariant");
}
