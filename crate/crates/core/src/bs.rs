//! Black-Scholes price, vega, delta and implied volatility.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionType {
    Call,
    Put,
}

impl OptionType {
    pub fn as_str(self) -> &'static str {
        match self {
            OptionType::Call => "call",
            OptionType::Put => "put",
        }
    }
}

impl std::str::FromStr for OptionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "call" | "c" => Ok(OptionType::Call),
            "put" | "p" => Ok(OptionType::Put),
            other => Err(Error::invalid(format!("unknown option type '{other}'"))),
        }
    }
}

/// European option contract together with spot and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub strike: f64,
    pub tau: f64,
    pub kind: OptionType,
    pub spot: f64,
    pub rate: f64,
}

impl OptionSpec {
    pub fn new(strike: f64, tau: f64, kind: OptionType, spot: f64, rate: f64) -> Result<Self> {
        let spec = Self { strike, tau, kind, spot, rate };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0 && self.spot > 0.0 && self.tau > 0.0) || !self.rate.is_finite() {
            return Err(Error::invalid(format!(
                "option needs positive strike, spot and maturity: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.tau).exp()
    }

    /// `(lower, upper)` no-arbitrage price bounds.
    pub fn price_bounds(&self) -> (f64, f64) {
        let pv_strike = self.strike * self.discount();
        match self.kind {
            OptionType::Call => ((self.spot - pv_strike).max(0.0), self.spot),
            OptionType::Put => ((pv_strike - self.spot).max(0.0), pv_strike),
        }
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

pub fn norm_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

fn d1_d2(spot: f64, strike: f64, tau: f64, r: f64, sigma: f64) -> (f64, f64) {
    let sd = sigma * tau.sqrt();
    let d1 = ((spot / strike).ln() + (r + 0.5 * sigma * sigma) * tau) / sd;
    (d1, d1 - sd)
}

/// Black-Scholes price and vega (per unit volatility).
pub fn bs_price_vega(spot: f64, strike: f64, tau: f64, r: f64, sigma: f64, kind: OptionType) -> (f64, f64) {
    let n = std_normal();
    let df = (-r * tau).exp();
    if sigma <= 0.0 || tau <= 0.0 {
        let fwd_intrinsic = match kind {
            OptionType::Call => (spot - strike * df).max(0.0),
            OptionType::Put => (strike * df - spot).max(0.0),
        };
        return (fwd_intrinsic, 0.0);
    }
    let (d1, d2) = d1_d2(spot, strike, tau, r, sigma);
    let price = match kind {
        OptionType::Call => spot * n.cdf(d1) - strike * df * n.cdf(d2),
        OptionType::Put => strike * df * n.cdf(-d2) - spot * n.cdf(-d1),
    };
    (price, spot * n.pdf(d1) * tau.sqrt())
}

pub fn bs_price(spec: &OptionSpec, sigma: f64) -> f64 {
    bs_price_vega(spec.spot, spec.strike, spec.tau, spec.rate, sigma, spec.kind).0
}

pub fn bs_vega(spec: &OptionSpec, sigma: f64) -> f64 {
    bs_price_vega(spec.spot, spec.strike, spec.tau, spec.rate, sigma, spec.kind).1
}

/// Spot delta.
pub fn bs_delta(spec: &OptionSpec, sigma: f64) -> f64 {
    let (d1, _) = d1_d2(spec.spot, spec.strike, spec.tau, spec.rate, sigma);
    match spec.kind {
        OptionType::Call => norm_cdf(d1),
        OptionType::Put => norm_cdf(d1) - 1.0,
    }
}

/// Strike whose spot delta equals `delta` (call: `0 < delta < 1`, put:
/// `-1 < delta < 0`).
pub fn strike_from_delta(delta: f64, spot: f64, tau: f64, r: f64, sigma: f64, kind: OptionType) -> Result<f64> {
    let call_delta = match kind {
        OptionType::Call => delta,
        OptionType::Put => delta + 1.0,
    };
    if !(call_delta > 0.0 && call_delta < 1.0) {
        return Err(Error::invalid(format!("delta {delta} out of range for {kind:?}")));
    }
    let d1 = std_normal().inverse_cdf(call_delta);
    let sd = sigma * tau.sqrt();
    Ok(spot * (-d1 * sd + (r + 0.5 * sigma * sigma) * tau).exp())
}

/// Implied volatility by safeguarded Newton iteration on a bracket.
///
/// The inversion runs on the out-of-the-money leg (via put-call parity) where
/// the price is most sensitive to volatility.
pub fn implied_vol(price: f64, spec: &OptionSpec) -> Result<f64> {
    spec.validate()?;
    let (lower, upper) = spec.price_bounds();
    if !price.is_finite() || price <= lower || price >= upper {
        return Err(Error::OutOfBounds { price, lower, upper });
    }
    let pv_strike = spec.strike * spec.discount();
    let forward_moneyness = spec.spot - pv_strike;
    let (target, otm) = match spec.kind {
        OptionType::Call if forward_moneyness > 0.0 => {
            (price - forward_moneyness, OptionSpec { kind: OptionType::Put, ..*spec })
        }
        OptionType::Put if forward_moneyness < 0.0 => {
            (price + forward_moneyness, OptionSpec { kind: OptionType::Call, ..*spec })
        }
        _ => (price, *spec),
    };
    if !(target > 0.0) {
        return Err(Error::OutOfBounds { price, lower, upper });
    }

    let f = |s: f64| bs_price(&otm, s) - target;
    let mut lo = 1e-6;
    let mut hi = 1.0;
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::OutOfBounds { price, lower, upper });
        }
    }
    if f(lo) > 0.0 {
        // price below what any positive volatility >= 1e-6 produces
        lo = 0.0;
    }
    let mut sigma = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (p, vega) = bs_price_vega(otm.spot, otm.strike, otm.tau, otm.rate, sigma, otm.kind);
        let diff = p - target;
        if diff > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        if diff.abs() <= 1e-15 * target.max(1e-300) || hi - lo <= 1e-15 * hi {
            return Ok(sigma);
        }
        let newton = if vega > 0.0 { sigma - diff / vega } else { f64::NAN };
        sigma = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn atm_price_matches_normal_cdf_identity() {
        let (p, _) = bs_price_vega(1.0, 1.0, 1.0, 0.0, 0.2, OptionType::Call);
        assert_abs_diff_eq!(p, 2.0 * norm_cdf(0.1) - 1.0, epsilon = 1e-15);
        let (q, _) = bs_price_vega(1.0, 1.0, 1.0, 0.0, 0.2, OptionType::Put);
        assert_abs_diff_eq!(q, p, epsilon = 1e-15);
    }

    #[test]
    fn zero_vol_limit_is_intrinsic() {
        let (p, v) = bs_price_vega(110.0, 100.0, 0.5, 0.0, 1e-9, OptionType::Call);
        assert_abs_diff_eq!(p, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn put_call_parity() {
        for &(k, r, s) in &[(80.0, 0.03, 0.4), (100.0, 0.0, 0.9), (125.0, 0.1, 0.15)] {
            let c = bs_price_vega(100.0, k, 0.7, r, s, OptionType::Call).0;
            let p = bs_price_vega(100.0, k, 0.7, r, s, OptionType::Put).0;
            assert_abs_diff_eq!(c - p, 100.0 - k * (-r * 0.7_f64).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn implied_vol_round_trip() {
        for kind in [OptionType::Call, OptionType::Put] {
            for &k in &[70.0, 95.0, 100.0, 105.0, 140.0] {
                let spec = OptionSpec::new(k, 0.25, kind, 100.0, 0.02).unwrap();
                let price = bs_price(&spec, 0.63);
                let iv = implied_vol(price, &spec).unwrap();
                assert_abs_diff_eq!(iv, 0.63, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn implied_vol_rejects_bound_violations() {
        let spec = OptionSpec::new(90.0, 0.5, OptionType::Call, 100.0, 0.0).unwrap();
        let (lower, upper) = spec.price_bounds();
        assert!(matches!(implied_vol(lower, &spec), Err(Error::OutOfBounds { .. })));
        assert!(matches!(implied_vol(upper, &spec), Err(Error::OutOfBounds { .. })));
        assert!(matches!(implied_vol(-1.0, &spec), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn delta_strike_inversion() {
        let k = strike_from_delta(0.25, 100.0, 1.0 / 12.0, 0.01, 0.7, OptionType::Call).unwrap();
        let spec = OptionSpec::new(k, 1.0 / 12.0, OptionType::Call, 100.0, 0.01).unwrap();
        assert_abs_diff_eq!(bs_delta(&spec, 0.7), 0.25, epsilon = 1e-12);
        let kp = strike_from_delta(-0.25, 100.0, 1.0 / 12.0, 0.01, 0.7, OptionType::Put).unwrap();
        let spec = OptionSpec::new(kp, 1.0 / 12.0, OptionType::Put, 100.0, 0.01).unwrap();
        assert_abs_diff_eq!(bs_delta(&spec, 0.7), -0.25, epsilon = 1e-12);
        assert!(kp < 100.0 && k > 100.0);
    }
}
