#![allow(dead_code)]

use hjp_core::measure::RiskPremiumParams;
use hjp_core::{IntensityDynamics, JumpLaw, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// Integral of `g` against the law's density, by Simpson on the support
/// truncated where the exponential tail drops below 1e-30.
pub fn integrate_law<G: Fn(f64) -> f64>(law: &JumpLaw, tilt_rate: f64, g: G) -> f64 {
    // density: exp(-|j - nu|/eta)/eta on the side of nu away from zero
    let (nu, eta) = (law.nu(), law.eta());
    let decay = 1.0 / eta - tilt_rate;
    assert!(decay > 0.0);
    let width = 70.0 / decay;
    let dens = |x: f64| (-x / eta).exp() / eta;
    if law.side() == hjp_core::Side::Positive {
        simpson(|x| dens(x) * g(nu + x), 0.0, width, 200_000)
    } else {
        simpson(|x| dens(x) * g(nu - x), 0.0, width, 200_000)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_law<R: Rng>(rng: &mut R, positive: bool) -> JumpLaw {
    let nu = rng.random_range(0.005..0.05);
    let eta = rng.random_range(0.005..0.05);
    if positive {
        JumpLaw::positive(nu, eta).unwrap()
    } else {
        JumpLaw::negative(-nu, eta).unwrap()
    }
}

/// Stationary parameter set with every coupling active.
pub fn random_params<R: Rng>(rng: &mut R) -> ModelParams {
    loop {
        let lp = random_law(rng, true);
        let lm = random_law(rng, false);
        let kp = rng.random_range(5.0..40.0);
        let km = rng.random_range(5.0..40.0);
        let f: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.02..0.4));
        let dynamics = IntensityDynamics {
            kappa_plus: kp,
            kappa_minus: km,
            theta_plus: rng.random_range(2.0..15.0),
            theta_minus: rng.random_range(2.0..15.0),
            beta: [
                [f[0] * kp / lp.mean(), -f[1] * kp / lm.mean().abs()],
                [f[2] * km / lp.mean(), -f[3] * km / lm.mean().abs()],
            ],
        };
        let lambda0 = [
            dynamics.theta_plus * rng.random_range(0.5..2.0),
            dynamics.theta_minus * rng.random_range(0.5..2.0),
        ];
        let mu = rng.random_range(-0.1..0.3);
        let sigma = rng.random_range(0.2..0.8);
        if let Ok(p) = ModelParams::new(mu, sigma, dynamics, lp, lm, lambda0) {
            return p;
        }
    }
}

pub fn random_chi<R: Rng>(rng: &mut R, params: &ModelParams) -> RiskPremiumParams {
    let [(_, up), (lo, _)] = RiskPremiumParams::admissible_region(&params.law_plus, &params.law_minus);
    RiskPremiumParams::new(rng.random_range(-20.0..(0.9 * up).min(20.0)), rng.random_range((0.9 * lo).max(-20.0)..20.0))
}

/// Reference parameter set used across tests.
pub fn reference_params() -> ModelParams {
    let dynamics = IntensityDynamics {
        kappa_plus: 20.0,
        kappa_minus: 25.0,
        theta_plus: 8.0,
        theta_minus: 10.0,
        beta: [[60.0, -40.0], [50.0, -90.0]],
    };
    ModelParams::new(
        0.1,
        0.5,
        dynamics,
        JumpLaw::positive(0.03, 0.02).unwrap(),
        JumpLaw::negative(-0.03, 0.025).unwrap(),
        [8.0, 10.0],
    )
    .unwrap()
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
