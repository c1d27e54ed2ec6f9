mod common;

use common::{random_chi, random_params, reference_params, rng};
use hjp_core::measure::{
    coefficient_matrix, jump_risk_premia, martingale_residuals, phi_process, solve_internal, to_q_params,
    RiskPremiumParams,
};
use hjp_core::{IntensityDynamics, IntensityState, ModelParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn multiplier_closed_form(p: &ModelParams, chi: &RiskPremiumParams) -> [f64; 2] {
    let (lp, lm) = (&p.law_plus, &p.law_minus);
    [
        (chi.chi_plus * lp.nu()).exp() / (1.0 - lp.eta() * chi.chi_plus),
        (chi.chi_minus * lm.nu()).exp() / (1.0 + lm.eta() * chi.chi_minus),
    ]
}

#[test]
fn solution_matches_dense_solver_and_unit_determinant() {
    let mut r = rng(21);
    for _ in 0..100 {
        let p = random_params(&mut r);
        let chi = random_chi(&mut r, &p);
        let sol = solve_internal(&p, &chi).unwrap();
        let a = DMatrix::from_row_slice(5, 5, &coefficient_matrix(&p));
        let m = multiplier_closed_form(&p, &chi);
        let d = &p.dynamics;
        let b = DVector::from_vec(vec![
            chi.chi_plus,
            chi.chi_minus,
            0.0,
            (m[0] - 1.0) / d.kappa_plus,
            (m[1] - 1.0) / d.kappa_minus,
        ]);
        let x = a.clone().lu().solve(&b).unwrap();
        let ours = [sol.xi_plus, sol.xi_minus, sol.c_plus, sol.c_minus, sol.c];
        for i in 0..5 {
            assert!((ours[i] - x[i]).abs() <= 1e-9 * x[i].abs().max(1.0), "{i}: {} vs {}", ours[i], x[i]);
        }
        assert!((a.determinant() - 1.0).abs() < 1e-12);
        assert!((sol.determinant - 1.0).abs() < 1e-12);
        let scale = 1.0 + d.kappa_plus * d.theta_plus + d.kappa_minus * d.theta_minus;
        assert!(sol.residual < 1e-10 * scale, "{}", sol.residual);
        for res in martingale_residuals(&p, &chi, &sol).unwrap() {
            assert!(res.abs() < 1e-10 * scale, "{res}");
        }
    }
}

#[test]
fn uncoupled_solution_has_closed_form() {
    let mut p = reference_params();
    p.dynamics.beta = [[0.0; 2]; 2];
    let chi = RiskPremiumParams::new(4.0, -6.0);
    let sol = solve_internal(&p, &chi).unwrap();
    let m = multiplier_closed_form(&p, &chi);
    let d = &p.dynamics;
    assert!((sol.xi_plus - chi.chi_plus).abs() < 1e-12);
    assert!((sol.xi_minus - chi.chi_minus).abs() < 1e-12);
    assert!((sol.c_plus - ((m[0] - 1.0) / d.kappa_plus - chi.chi_plus)).abs() < 1e-12);
    assert!((sol.c_minus - ((m[1] - 1.0) / d.kappa_minus - chi.chi_minus)).abs() < 1e-12);
    let c = -d.theta_plus * (m[0] - 1.0) - d.theta_minus * (m[1] - 1.0);
    assert!((sol.c - c).abs() < 1e-10);
}

#[test]
fn intensity_multiplier_matches_quadrature() {
    let law = hjp_core::JumpLaw::positive(0.03, 0.02).unwrap();
    let oracle = common::integrate_law(&law, 10.0, |j| (10.0 * j).exp());
    assert!((oracle - 0.3f64.exp() / 0.8).abs() < 1e-10);
    assert!((law.laplace_real(-10.0).unwrap() - oracle).abs() < 1e-10);
}

#[test]
fn phi_assembles_from_four_compensators() {
    let p = reference_params();
    let chi = RiskPremiumParams::new(5.0, -8.0);
    let state = IntensityState::new(0.0, 14.0, 9.0);
    let r = 0.03;
    let lp = &p.law_plus;
    let lm = &p.law_minus;
    let comp_p = [lp.nu().exp() / (1.0 - lp.eta()) - 1.0, lm.nu().exp() / (1.0 + lm.eta()) - 1.0];
    let eq = [lp.eta() / (1.0 - lp.eta() * chi.chi_plus), lm.eta() / (1.0 + lm.eta() * chi.chi_minus)];
    let comp_q = [lp.nu().exp() / (1.0 - eq[0]) - 1.0, lm.nu().exp() / (1.0 + eq[1]) - 1.0];
    let m = multiplier_closed_form(&p, &chi);
    let gp = m[0] * state.lambda_plus * comp_q[0] - state.lambda_plus * comp_p[0];
    let gm = m[1] * state.lambda_minus * comp_q[1] - state.lambda_minus * comp_p[1];
    let expected = (p.mu - r + gp + gm) / p.sigma;
    assert!((phi_process(&p, &chi, r, &state).unwrap() - expected).abs() < 1e-12);
    let (g1, g2) = jump_risk_premia(&p, &chi, &state).unwrap();
    assert!((g1 - gp).abs() < 1e-12 && (g2 - gm).abs() < 1e-12);
}

#[test]
fn zero_tilt_reproduces_the_statistical_model() {
    let p = reference_params();
    let state = IntensityState::new(0.0, 12.0, 7.0);
    let q = to_q_params(&p, &RiskPremiumParams::default(), 0.02, &state).unwrap();
    assert_eq!(q.dynamics, p.dynamics);
    assert_eq!(q.law_plus, p.law_plus);
    assert_eq!(q.law_minus, p.law_minus);
    assert_eq!(q.lambda(), state.lambda());
    assert_eq!(jump_risk_premia(&p, &RiskPremiumParams::default(), &state).unwrap(), (0.0, 0.0));
}

fn same_dynamics(a: &IntensityDynamics, b: &IntensityDynamics, tol: f64) -> bool {
    let fa = [a.kappa_plus, a.kappa_minus, a.theta_plus, a.theta_minus, a.beta[0][0], a.beta[0][1], a.beta[1][0], a.beta[1][1]];
    let fb = [b.kappa_plus, b.kappa_minus, b.theta_plus, b.theta_minus, b.beta[0][0], b.beta[0][1], b.beta[1][0], b.beta[1][1]];
    fa.iter().zip(&fb).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_tilt_recovers_the_original_model(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let p = random_params(&mut r);
        let chi = random_chi(&mut r, &p);
        let state = p.initial_state();
        let q = to_q_params(&p, &chi, 0.0, &state).unwrap();
        let back_chi = RiskPremiumParams::new(-chi.chi_plus, -chi.chi_minus);
        let back = to_q_params(&q.as_model(), &back_chi, 0.0, &IntensityState::from_pair(0.0, q.lambda())).unwrap();
        prop_assert!(same_dynamics(&back.dynamics, &p.dynamics, 1e-10));
        prop_assert!((back.law_plus.eta() - p.law_plus.eta()).abs() < 1e-12);
        prop_assert!((back.law_minus.eta() - p.law_minus.eta()).abs() < 1e-12);
        prop_assert!((back.lambda_plus - state.lambda_plus).abs() < 1e-10 * state.lambda_plus);
        prop_assert!((back.lambda_minus - state.lambda_minus).abs() < 1e-10 * state.lambda_minus);
    }

    #[test]
    fn positive_premium_increases_with_its_tilt(seed in 0u64..10_000, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let mut r = rng(seed);
        let p = random_params(&mut r);
        let chi_m = random_chi(&mut r, &p).chi_minus;
        let up = RiskPremiumParams::admissible_region(&p.law_plus, &p.law_minus)[0].1.min(20.0);
        let (lo, hi) = (-20.0 + (up + 20.0) * a.min(b) * 0.95, -20.0 + (up + 20.0) * a.max(b) * 0.95);
        prop_assume!(hi - lo > 1e-6);
        let s = p.initial_state();
        let g_lo = jump_risk_premia(&p, &RiskPremiumParams::new(lo, chi_m), &s).unwrap().0;
        let g_hi = jump_risk_premia(&p, &RiskPremiumParams::new(hi, chi_m), &s).unwrap().0;
        prop_assert!(g_hi > g_lo);
    }
}
