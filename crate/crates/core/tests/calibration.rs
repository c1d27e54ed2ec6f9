mod common;

use common::reference_params;
use hjp_core::bs::{bs_vega, OptionSpec, OptionType};
use hjp_core::calibration::{calibrate, objective, CalibrationConfig, Quote, QuoteSlice};
use hjp_core::fourier::FourierPricer;
use hjp_core::measure::{to_q_params, RiskPremiumParams};
use hjp_core::ModelParams;

fn synthetic_slice(params: &ModelParams, sigma: f64, chi: RiskPremiumParams) -> QuoteSlice {
    let spot = 100.0;
    let state = params.initial_state();
    let q = to_q_params(&params.with_sigma(sigma), &chi, 0.0, &state).unwrap();
    let pricer = FourierPricer::new(Default::default());
    let mut quotes = Vec::new();
    for &tau in &[1.0 / 52.0, 1.0 / 12.0] {
        for i in 0..7 {
            let strike = 85.0 + 5.0 * i as f64;
            let kind = if strike >= spot { OptionType::Call } else { OptionType::Put };
            let pt = pricer.iv_point(&q, OptionSpec::new(strike, tau, kind, spot, 0.0).unwrap()).unwrap();
            let weight = bs_vega(&pt.spec, pt.iv);
            quotes.push(Quote { tau, strike, kind, iv: pt.iv, weight });
        }
    }
    QuoteSlice { as_of_day: 0, spot, rate: 0.0, state, quotes }
}

#[test]
fn argmin_ignores_weight_scale_and_runs_are_repeatable() {
    let p = reference_params();
    let slice = synthetic_slice(&p, 0.6, RiskPremiumParams::new(6.0, -4.0));
    let cfg = CalibrationConfig::default();
    let a = calibrate(&p, &slice, &cfg).unwrap();
    let b = calibrate(&p, &slice, &cfg).unwrap();
    assert_eq!(a, b);

    let mut scaled = slice.clone();
    for q in &mut scaled.quotes {
        q.weight *= 7.5;
    }
    let c = calibrate(&p, &scaled, &cfg).unwrap();
    assert!((a.sigma_hat - c.sigma_hat).abs() < 1e-6);
    assert!((a.chi_plus_hat - c.chi_plus_hat).abs() < 1e-4);
    assert!((a.chi_minus_hat - c.chi_minus_hat).abs() < 1e-4);
    let q = cfg.quadrature;
    let ratio = objective(&p, c.sigma_hat, &RiskPremiumParams::new(c.chi_plus_hat, c.chi_minus_hat), &scaled, &q)
        / objective(&p, c.sigma_hat, &RiskPremiumParams::new(c.chi_plus_hat, c.chi_minus_hat), &slice, &q);
    assert!(ratio.is_nan() || (ratio - 7.5).abs() < 1e-9);
}
