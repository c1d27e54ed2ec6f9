mod common;

use common::{mean_se, reference_params};
use hjp_core::measure::{to_q_params, RiskPremiumParams};
use hjp_core::sim::{simulate_events, simulate_path, simulate_terminal_batch, Measure, DEFAULT_EVENT_CAP};
use hjp_core::{IntensityDynamics, JumpLaw, ModelParams, Side};
use proptest::prelude::*;

fn no_jumps(mu: f64, sigma: f64) -> ModelParams {
    ModelParams::new_unchecked(
        mu,
        sigma,
        IntensityDynamics { kappa_plus: 1.0, kappa_minus: 1.0, theta_plus: 0.0, theta_minus: 0.0, beta: [[0.0; 2]; 2] },
        JumpLaw::positive(0.03, 0.02).unwrap(),
        JumpLaw::negative(-0.03, 0.02).unwrap(),
        [0.0, 0.0],
    )
}

#[test]
fn uncoupled_counts_follow_the_poisson_law() {
    let d = IntensityDynamics { kappa_plus: 3.0, kappa_minus: 3.0, theta_plus: 50.0, theta_minus: 20.0, beta: [[0.0; 2]; 2] };
    let (lp, lm) = (JumpLaw::positive(0.01, 0.01).unwrap(), JumpLaw::negative(-0.01, 0.01).unwrap());
    let counts: Vec<f64> = (0..200)
        .map(|s| simulate_events(&d, &lp, &lm, [50.0, 20.0], 10.0, s, DEFAULT_EVENT_CAP).unwrap().count(Side::Positive) as f64)
        .collect();
    let (m, _) = mean_se(&counts);
    assert!((m - 500.0).abs() < 3.0 * (500.0f64 / 200.0).sqrt(), "{m}");
}

#[test]
fn pure_diffusion_terminal_moments() {
    let p = no_jumps(0.0, 0.2);
    let t = 2.0;
    let seeds: Vec<u64> = (0..100_000).collect();
    let xs: Vec<f64> = simulate_terminal_batch(&p, t, &seeds, 10).unwrap().iter().map(|d| d.x).collect();
    let (m, se) = mean_se(&xs);
    assert!((m + 0.02 * t).abs() < 3.0 * se, "{m}");
    let n = xs.len() as f64;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    // standard error of a normal sample variance
    let se_var = 0.04 * t * (2.0 / (n - 1.0)).sqrt();
    assert!((var - 0.04 * t).abs() < 3.0 * se_var, "{var}");
}

#[test]
fn statistical_measure_grows_at_mu() {
    let p = reference_params();
    let t = 0.5;
    let seeds: Vec<u64> = (0..200_000).collect();
    let ys: Vec<f64> = simulate_terminal_batch(&p, t, &seeds, DEFAULT_EVENT_CAP).unwrap().iter().map(|d| d.x.exp()).collect();
    let (m, se) = mean_se(&ys);
    assert!((m - (p.mu * t).exp()).abs() < 3.0 * se, "{m} vs {}", (p.mu * t).exp());
}

#[test]
fn risk_neutral_measure_grows_at_r() {
    let p = reference_params();
    let r = 0.04;
    let t = 0.5;
    let q = to_q_params(&p, &RiskPremiumParams::new(8.0, -6.0), r, &p.initial_state()).unwrap();
    let seeds: Vec<u64> = (0..200_000).map(|s| s + 1_000_000).collect();
    let ys: Vec<f64> =
        simulate_terminal_batch(&q.as_model(), t, &seeds, DEFAULT_EVENT_CAP).unwrap().iter().map(|d| d.x.exp()).collect();
    let (m, se) = mean_se(&ys);
    assert!((m - (r * t).exp()).abs() < 3.0 * se, "{m}");
}

#[test]
fn path_simulation_under_q_uses_the_transformed_model() {
    let p = reference_params();
    let q = to_q_params(&p, &RiskPremiumParams::new(5.0, -5.0), 0.01, &p.initial_state()).unwrap();
    let a = simulate_path(&p, Measure::RiskNeutral(&q), 1.0, 0.01, 3, DEFAULT_EVENT_CAP).unwrap();
    let b = simulate_path(&q.as_model(), Measure::Physical, 1.0, 0.01, 3, DEFAULT_EVENT_CAP).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn intensities_decay_exactly_between_events(seed in 0u64..1000) {
        let p = reference_params();
        let path = simulate_path(&p, Measure::Physical, 2.0, 0.001, seed, DEFAULT_EVENT_CAP).unwrap();
        let d = &p.dynamics;
        let ev = path.events.events();
        for i in 1..path.times.len() {
            let (t0, t1) = (path.times[i - 1], path.times[i]);
            if ev.iter().any(|e| e.t > t0 && e.t <= t1) {
                continue;
            }
            let dt = t1 - t0;
            let lp = d.theta_plus + (-d.kappa_plus * dt).exp() * (path.lambda_plus[i - 1] - d.theta_plus);
            let lm = d.theta_minus + (-d.kappa_minus * dt).exp() * (path.lambda_minus[i - 1] - d.theta_minus);
            prop_assert!((path.lambda_plus[i] - lp).abs() < 1e-12 * lp.max(1.0));
            prop_assert!((path.lambda_minus[i] - lm).abs() < 1e-12 * lm.max(1.0));
        }
        for e in ev {
            match e.sign {
                Side::Positive => prop_assert!(e.size > p.law_plus.nu()),
                Side::Negative => prop_assert!(e.size < p.law_minus.nu()),
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_paths(seed in any::<u64>()) {
        let p = reference_params();
        let a = simulate_path(&p, Measure::Physical, 1.0, 0.01, seed, DEFAULT_EVENT_CAP).unwrap();
        let b = simulate_path(&p, Measure::Physical, 1.0, 0.01, seed, DEFAULT_EVENT_CAP).unwrap();
        prop_assert_eq!(a, b);
    }
}
