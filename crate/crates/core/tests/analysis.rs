use std::f64::consts::PI;
use std::sync::OnceLock;

use gpss_core::analysis::{
    euler_mode_profiles, euler_modes, exterior_transform_residual, exterior_transform_residual_with, extract_k,
    far_field_diagnostics, fit_log_sinusoid, fit_power, kernel_psi1, lambda_q_value, log_series, wronskian,
    ExteriorVariant, FarFieldSettings,
};
use gpss_core::integrator::{Profile, ProfileKind, SingularOrder, Tolerances};
use gpss_core::profiles::{
    default_bracket, find_lambda_star, scale_emden, shoot_lambda, solve_emden_fowler, LambdaStar, ShootSettings,
    DEFAULT_SINGULAR_R0,
};
use gpss_core::{derive_constants, ProblemParams};
use proptest::prelude::*;

const TOL: Tolerances = Tolerances { rtol: 1e-12, atol: 1e-14 };

fn q_profile() -> &'static Profile {
    static Q: OnceLock<Profile> = OnceLock::new();
    Q.get_or_init(|| solve_emden_fowler(1e4, TOL, &ProblemParams::pure_p(5, 3.0)).unwrap())
}

fn lambda_star() -> &'static LambdaStar {
    static L: OnceLock<LambdaStar> = OnceLock::new();
    L.get_or_init(|| {
        let p = ProblemParams::canonical();
        find_lambda_star(
            default_bracket(&p),
            1e-11,
            DEFAULT_SINGULAR_R0,
            SingularOrder::Corrected,
            &p,
            &ShootSettings::default(),
            None,
        )
        .unwrap()
    })
}

fn psi1() -> &'static Profile {
    static P: OnceLock<Profile> = OnceLock::new();
    P.get_or_init(|| {
        let ls = lambda_star();
        kernel_psi1(ls.lambda_star, &ls.phi, ls.lambda_star.sqrt() + 2.0, Tolerances::new(1e-12, 0.0)).unwrap()
    })
}

fn wrap(phase: f64) -> f64 {
    phase.rem_euclid(2.0 * PI)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sinusoid_parameters_are_recovered(
        a in 0.5f64..5.0,
        f in 2.5f64..6.0,
        phase in 0.0f64..(2.0 * PI),
        b in -1.0f64..1.0,
    ) {
        let s = log_series(1.0, 1e4, 600, |r| Ok(a * (f * r.ln() + phase).sin() + b)).unwrap();
        let fit = fit_log_sinusoid(&s, Some(f * 1.02)).unwrap();
        prop_assert!((fit.amplitude - a).abs() < 1e-6 * a);
        prop_assert!((fit.frequency - f).abs() < 1e-6 * f);
        prop_assert!((fit.offset - b).abs() < 1e-6);
        let dphi = (wrap(fit.phase) - wrap(phase)).abs();
        prop_assert!(dphi.min(2.0 * PI - dphi) < 1e-5, "{} vs {}", fit.phase, phase);
        prop_assert!(fit.frequency > 0.0 && fit.residual_rms.is_finite());
    }

    #[test]
    fn power_law_is_recovered(e in -2.0f64..2.0, c in 0.1f64..10.0, n in 3usize..40) {
        let pts: Vec<(f64, f64)> = (0..n).map(|i| {
            let x = 10f64.powf(i as f64 / 4.0);
            (x, c * x.powf(e))
        }).collect();
        let fit = fit_power(&pts).unwrap();
        prop_assert!((fit.exponent - e).abs() < 1e-10);
        prop_assert!((fit.coefficient - c).abs() < 1e-9 * c);
        prop_assert_eq!(fit.points, n);
    }

    #[test]
    fn lambda_q_follows_the_scaling(theta in 1.0f64..200.0, x in 0.1f64..100.0) {
        // alpha u + r u' of u = theta Q(s r) is theta (Lambda Q)(s r)
        let q = q_profile();
        let s = scale_emden(theta, q).unwrap();
        let r = x / theta;
        let (u, du) = s.eval(r).unwrap();
        let lhs = u + r * du;
        let rhs = theta * lambda_q_value(q, x, 1.0).unwrap().0;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (theta * u.abs().max(r * du.abs())));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn far_field_law_holds_for_decaying_shoots(
        params in prop_oneof![Just(ProblemParams::canonical()), Just(ProblemParams::pure_p(5, 3.0))],
        log_theta in 0.5f64..3.5,
    ) {
        let theta = 10f64.powf(log_theta);
        let shot = shoot_lambda(theta, default_bracket(&params), 1e-11, &params, &ShootSettings::default()).unwrap();
        let l = shot.lambda;
        let ff = far_field_diagnostics(&shot.profile, l, &FarFieldSettings::default()).unwrap();
        prop_assert!((ff.plateau1.value - (l - 5.0) / 2.0).abs() < 1e-3, "{:?}", ff.plateau1);
        prop_assert!((ff.plateau2.value - (l - 5.0) * (l + 1.0) / 8.0).abs() < 1e-2, "{:?}", ff.plateau2);
        prop_assert!(ff.k.value > 0.0);
    }

    #[test]
    fn transform_residual_on_converged_shoots(log_theta in 1.0f64..4.0) {
        let params = ProblemParams::canonical();
        let theta = 10f64.powf(log_theta);
        let ls = lambda_star();
        let shot = shoot_lambda(theta, default_bracket(&params), 1e-11, &params, &ShootSettings::default()).unwrap();
        let eps = shot.lambda - ls.lambda_star;
        let r = exterior_transform_residual(&shot.profile, eps, 0.3).unwrap();
        prop_assert!(r.max_relative < 1e-8, "{r:?}");
        for v in [ExteriorVariant::FlippedPower, ExteriorVariant::FlippedRhs] {
            let bad = exterior_transform_residual_with(&shot.profile, eps, 0.3, v).unwrap();
            prop_assert!(bad.max_relative >= 1e-8, "{v:?}: {bad:?}");
        }
    }
}

#[test]
fn synthetic_sinusoid_example() {
    let s = log_series(1.0, 1e3, 500, |r| Ok(2.0 * (3.873 * r.ln() + 0.7).sin())).unwrap();
    let f = fit_log_sinusoid(&s, Some(3.873)).unwrap();
    assert!((f.amplitude - 2.0).abs() < 1e-6);
    assert!((f.frequency - 3.873).abs() < 1e-6);
    assert!((wrap(f.phase) - 0.7).abs() < 1e-6);
}

#[test]
fn short_window_is_rejected() {
    let s = log_series(1.0, 2.0, 100, |r| Ok((3.873 * r.ln()).sin())).unwrap();
    assert!(matches!(fit_log_sinusoid(&s, Some(3.873)), Err(gpss_core::Error::WindowTooShort { .. })));
}

#[test]
fn transform_at_zero_epsilon_is_the_plain_residual() {
    let params = ProblemParams::canonical();
    let shot = shoot_lambda(50.0, default_bracket(&params), 1e-11, &params, &ShootSettings::default()).unwrap();
    let r = exterior_transform_residual(&shot.profile, 0.0, 0.3).unwrap();
    assert!(r.max_relative < 100.0 * 1e-12, "{r:?}");
}

#[test]
fn k_of_scaled_ground_state_is_the_height() {
    let params = ProblemParams::linear(5);
    for theta in [1.0, 3.0] {
        let shot = shoot_lambda(theta, (4.0, 6.0), 1e-11, &params, &ShootSettings::default()).unwrap();
        let k = extract_k(&shot.profile, shot.lambda, &FarFieldSettings::default()).unwrap();
        assert!((k.k - theta).abs() < 1e-6 * theta, "theta {theta}: {k:?}");
        assert!(!k.no_plateau);
    }
}

#[test]
fn singular_far_field_constant() {
    let ls = lambda_star();
    let k = extract_k(&ls.phi, ls.lambda_star, &FarFieldSettings::default()).unwrap();
    assert!(k.k > 0.0 && k.drift < 0.01, "{k:?}");
}

#[test]
fn psi1_launch_matches_the_decay_law() {
    let ls = lambda_star();
    let psi = psi1();
    let r = psi.r_max();
    let (v, dv) = psi.eval(r).unwrap();
    let expect = -r + (ls.lambda_star - 5.0) / (2.0 * r);
    assert!((dv / v - expect).abs() < 10.0 * r.powi(-3), "{} vs {expect}", dv / v);
    assert!(psi.r_min() <= ls.phi.r_min());
}

#[test]
fn linear_kernel_is_the_ground_state() {
    // in linear mode the potential vanishes and lambda = d leaves the Hermite operator
    let params = ProblemParams::linear(5);
    let grid: Vec<f64> = (1..=600).map(|i| i as f64 * 0.01).collect();
    let u: Vec<f64> = grid.iter().map(|r| (-r * r / 2.0).exp()).collect();
    let du: Vec<f64> = grid.iter().zip(&u).map(|(r, u)| -r * u).collect();
    let phi = Profile::from_samples(params, 5.0, ProfileKind::Smooth, grid, u, du).unwrap();
    let psi = kernel_psi1(5.0, &phi, 4.5, Tolerances::new(1e-12, 0.0)).unwrap();
    for r in [0.05, 0.5, 1.0, 2.0, 3.0] {
        let exact = (-r * r / 2.0f64).exp();
        assert!((psi.u(r).unwrap() / exact - 1.0).abs() < 1e-8, "r = {r}");
    }
    assert!(kernel_psi1(5.0, &phi, 3.0, Tolerances::default()).is_err());
}

/// Fitted log-frequencies of the Q tail, the Lambda Q tail and psi_1 near the origin.
fn universal_frequencies() -> [f64; 3] {
    let q = q_profile();
    let a = 2f64.sqrt();
    let fq =
        fit_log_sinusoid(&log_series(1e2, 1e4, 2000, |r| Ok(r.powf(1.5) * (q.u(r)? - a / r))).unwrap(), None).unwrap();
    let fl = fit_log_sinusoid(
        &log_series(1e2, 1e4, 2000, |r| Ok(r.powf(1.5) * lambda_q_value(q, r, 1.0)?.0)).unwrap(),
        None,
    )
    .unwrap();
    let psi = psi1();
    let fp = fit_log_sinusoid(&log_series(1e-4, 1e-2, 1000, |r| Ok(r.powf(1.5) * psi.u(r)?)).unwrap(), None).unwrap();
    [fq.frequency, fl.frequency, fp.frequency]
}

#[test]
fn frequencies_agree_with_each_other() {
    let f = universal_frequencies();
    for i in 0..3 {
        for j in 0..i {
            assert!((f[i] - f[j]).abs() < 0.02 * f[j], "{f:?}");
        }
    }
}

#[test]
fn frequencies_equal_omega() {
    let omega = derive_constants(&ProblemParams::canonical()).unwrap().omega;
    let f = universal_frequencies();
    assert!(f.iter().all(|x| (x - omega).abs() < 0.02 * omega), "fitted {f:?}, omega {omega}");
}

#[test]
fn euler_mode_residual_is_machine_precision() {
    let p = ProblemParams::canonical();
    let pa = 3.0 * 2.0;
    let mut rng_r = 0.0137f64;
    for _ in 0..100 {
        rng_r = (rng_r * 7.31 + 0.113).fract();
        let r = 0.01 * 1000f64.powf(rng_r);
        let h = 1e-5 * r;
        let d2 = (euler_modes(r + h, &p).unwrap().dphi1 - euler_modes(r - h, &p).unwrap().dphi1) / (2.0 * h);
        let m = euler_modes(r, &p).unwrap();
        let res = d2 + 4.0 / r * m.dphi1 + pa / (r * r) * m.phi1;
        let scale = d2.abs() + (4.0 / r * m.dphi1).abs() + (pa / (r * r) * m.phi1).abs();
        assert!(res.abs() < 1e-8 * scale, "r = {r}: {res}");
    }
    let m = euler_modes(1.0, &p).unwrap();
    assert_eq!((m.phi1, m.phi2), (0.0, 1.0));
}

#[test]
fn euler_mode_quarter_period_at_omega() {
    let p = ProblemParams::canonical();
    let r = 1.50018f64;
    let m = euler_modes(r, &p).unwrap();
    assert!((m.phi1 - 0.5442).abs() < 1e-4, "phi1({r}) = {}", m.phi1);
}

#[test]
fn euler_wronskian_is_omega() {
    let p = ProblemParams::canonical();
    let (f, g) = euler_mode_profiles(&p, 0.01, 10.0, 500).unwrap();
    let w = wronskian(&f, &g, None).unwrap();
    assert!(w.max_rel_deviation < 1e-10);
    assert!((w.median - 3.87298).abs() < 1e-5, "W r^(d-1) = {}", w.median);
}
