mod common;

use common::{reference_params, rng};
use hjp_core::analytics::{cost_of_carry, hac_regression, ks_critical_1pct, time_change_residuals};
use hjp_core::sim::{simulate_events, EventSeries, JumpEvent, DEFAULT_EVENT_CAP};
use hjp_core::{IntensityDynamics, IntensityState, Side};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// `(X'X)^-1 X' diag(u^2) X (X'X)^-1` from a dense solver.
fn white_errors(y: &[f64], cols: &[Vec<f64>], intercept: bool) -> Vec<f64> {
    let n = y.len();
    let mut all: Vec<Vec<f64>> = Vec::new();
    if intercept {
        all.push(vec![1.0; n]);
    }
    all.extend(cols.iter().cloned());
    let x = DMatrix::from_fn(n, all.len(), |i, j| all[j][i]);
    let yv = DVector::from_column_slice(y);
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let b = &xtx_inv * x.transpose() * &yv;
    let u = &yv - &x * b;
    let meat = x.transpose() * DMatrix::from_diagonal(&u.map(|v| v * v)) * &x;
    let v = &xtx_inv * meat * &xtx_inv;
    (0..all.len()).map(|i| v[(i, i)].sqrt()).collect()
}

fn noisy_data(n: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut r = rng(seed);
    let x1: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| r.random_range(0.0..2.0)).collect();
    let y = (0..n).map(|i| 0.5 + 1.5 * x1[i] - 0.7 * x2[i] + r.random_range(-0.5..0.5) * (1.0 + x1[i].abs())).collect();
    (y, vec![x1, x2])
}

#[test]
fn lag_zero_equals_white_errors() {
    let (y, cols) = noisy_data(300, 51);
    for intercept in [true, false] {
        let rep = hac_regression(&y, &cols, intercept, Some(0)).unwrap();
        let oracle = white_errors(&y, &cols, intercept);
        for (a, b) in rep.hac_std_errors.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn bartlett_weights_match_a_direct_sum() {
    let (y, cols) = noisy_data(120, 52);
    let lag = 3;
    let rep = hac_regression(&y, &cols, true, Some(lag)).unwrap();
    let n = y.len();
    let x = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
    let yv = DVector::from_column_slice(&y);
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let u = &yv - &x * (&xtx_inv * x.transpose() * &yv);
    let mut s = DMatrix::zeros(3, 3);
    for t in 0..n {
        for v in 0..n {
            let l = t.abs_diff(v);
            if l <= lag {
                let w = 1.0 - l as f64 / (lag as f64 + 1.0);
                s += w * u[t] * u[v] * x.row(t).transpose() * x.row(v);
            }
        }
    }
    let cov = &xtx_inv * s * &xtx_inv;
    for i in 0..3 {
        assert!((rep.hac_std_errors[i] - cov[(i, i)].sqrt()).abs() < 1e-10);
    }
}

#[test]
fn constant_intensity_residuals_are_scaled_gaps() {
    let d = IntensityDynamics { kappa_plus: 2.0, kappa_minus: 2.0, theta_plus: 3.0, theta_minus: 5.0, beta: [[0.0; 2]; 2] };
    let mut r = rng(53);
    let mut t = 0.0;
    let events: Vec<JumpEvent> = (0..50)
        .map(|_| {
            t += r.random_range(0.01..0.5);
            JumpEvent { t, size: 0.05, sign: Side::Positive }
        })
        .collect();
    let qq = time_change_residuals(&d, &EventSeries::new(events.clone(), t).unwrap(), None, None);
    let mut prev = 0.0;
    for (p, e) in qq.plus.points.iter().zip(&events) {
        assert!((p.sample - 3.0 * (e.t - prev)).abs() < 1e-12);
        prev = e.t;
    }
}

#[test]
fn correctly_specified_residuals_pass_ks() {
    let p = reference_params();
    let events = simulate_events(&p.dynamics, &p.law_plus, &p.law_minus, p.lambda0(), 30.0, 54, DEFAULT_EVENT_CAP).unwrap();
    let qq = time_change_residuals(&p.dynamics, &events, Some(p.initial_state()), Some(15.0));
    for s in [&qq.plus, &qq.minus] {
        assert!(s.ks_statistic < ks_critical_1pct(s.points.len()));
        assert!(s.points.iter().any(|p| p.in_sample) && s.points.iter().any(|p| !p.in_sample));
    }
}

proptest! {
    #[test]
    fn shifting_events_with_the_start_state_changes_nothing(seed in 0u64..1000, shift in 0.0..50.0f64) {
        let p = reference_params();
        let events = simulate_events(&p.dynamics, &p.law_plus, &p.law_minus, p.lambda0(), 3.0, seed, DEFAULT_EVENT_CAP).unwrap();
        let shifted: Vec<JumpEvent> = events.events().iter().map(|e| JumpEvent { t: e.t + shift, ..*e }).collect();
        let a = time_change_residuals(&p.dynamics, &events, Some(p.initial_state()), None);
        let b = time_change_residuals(
            &p.dynamics,
            &EventSeries::new(shifted, 3.0 + shift).unwrap(),
            Some(IntensityState::from_pair(shift, p.lambda0())),
            None,
        );
        for (x, y) in a.plus.points.iter().chain(&a.minus.points).zip(b.plus.points.iter().chain(&b.minus.points)) {
            prop_assert!((x.sample - y.sample).abs() < 1e-9 * x.sample.max(1.0));
        }
    }

    #[test]
    fn carry_is_scale_free(f in 1.0..1000.0f64, s in 1.0..1000.0f64, tau in 0.01..2.0f64, c in 1e-3..1e3f64) {
        let base = cost_of_carry(f, s, tau);
        prop_assert!((cost_of_carry(f * c, s * c, tau) - base).abs() <= 4.0 * f64::EPSILON / tau);
        let pow2 = 2f64.powi((c.ln() * 3.0) as i32);
        prop_assert_eq!(cost_of_carry(f * pow2, s * pow2, tau), base);
    }

    #[test]
    fn reordering_regressors_permutes_coefficients(seed in 0u64..1000) {
        let (y, cols) = noisy_data(80, seed);
        let a = hac_regression(&y, &cols, true, None).unwrap();
        let swapped = vec![cols[1].clone(), cols[0].clone()];
        let b = hac_regression(&y, &swapped, true, None).unwrap();
        prop_assert!((a.coefficients[0] - b.coefficients[0]).abs() < 1e-10);
        prop_assert!((a.coefficients[1] - b.coefficients[2]).abs() < 1e-10);
        prop_assert!((a.coefficients[2] - b.coefficients[1]).abs() < 1e-10);
        prop_assert!((a.hac_std_errors[1] - b.hac_std_errors[2]).abs() < 1e-10);
    }
}
