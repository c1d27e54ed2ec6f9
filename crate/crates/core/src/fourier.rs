//! Option pricing by the Lewis-Lipton capped-payoff integral.
//!
//! With `k = ln(S/K)` and `E(tau; w)` the risk-neutral MGF of the log return,
//!
//! ```text
//! U = exp(-r tau) K / pi * int_0^inf Re[exp((1/2 - iy) k) E(tau; 1/2 - iy)] / (y^2 + 1/4) dy
//! call = S - U,   put = exp(-r tau) K - U
//! ```
//!
//! `E` on the quadrature nodes does not depend on the strike, so each
//! maturity gets one cached grid that all strikes reuse.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bs::{implied_vol, OptionSpec, OptionType};
use crate::error::{Error, Result};
use crate::measure::QParams;
use crate::mgf::{solve_mgf_odes, OdeConfig};
use crate::model::ModelParams;
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Successive panel refinements must agree to this relative tolerance.
    pub rel_tol: f64,
    /// Absolute floor on the same comparison.
    pub abs_tol: f64,
    /// Gauss-Legendre points per panel.
    pub order: usize,
    pub initial_subdivisions: usize,
    pub max_subdivisions: usize,
    /// Tail bound on the integrand envelope used to pick the truncation point.
    pub envelope_tol: f64,
    pub max_y: f64,
    pub ode: OdeConfig,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            abs_tol: 1e-12,
            order: 16,
            initial_subdivisions: 1,
            max_subdivisions: 256,
            envelope_tol: 1e-12,
            max_y: 1e6,
            ode: OdeConfig::default(),
        }
    }
}

/// Strike-independent integration data for one maturity.
#[derive(Debug, Clone)]
pub struct MaturityGrid {
    pub tau: f64,
    pub y_max: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `E(tau; 1/2 - iy)` at each node.
    pub values: Vec<Complex64>,
    /// Largest `|ln(S/K)|` the refinement was checked against; infinite
    /// for grids built from a fixed plan.
    pub k_max: f64,
    pub subdivisions: usize,
}

/// Node layout of a grid: truncation point and panel subdivisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPlan {
    pub y_max: f64,
    pub subdivisions: usize,
}

impl GridPlan {
    /// Layout covering both plans.
    pub fn union(self, other: GridPlan) -> GridPlan {
        GridPlan { y_max: self.y_max.max(other.y_max), subdivisions: self.subdivisions.max(other.subdivisions) }
    }
}

impl MaturityGrid {
    pub fn plan(&self) -> GridPlan {
        GridPlan { y_max: self.y_max, subdivisions: self.subdivisions }
    }

    /// `int_0^y_max Re[exp((1/2 - iy) k) E] / (y^2 + 1/4) dy`.
    pub fn integral(&self, k: f64) -> f64 {
        let scale = (0.5 * k).exp();
        self.nodes
            .iter()
            .zip(&self.weights)
            .zip(&self.values)
            .map(|((&y, &w), e)| {
                let phase = Complex64::new(0.0, -y * k).exp();
                w * (phase * e).re / (y * y + 0.25)
            })
            .sum::<f64>()
            * scale
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct GridKey {
    params: Vec<u64>,
    tau: u64,
    k_bucket: u64,
}

fn params_key(q: &QParams, cfg: &QuadratureConfig) -> Vec<u64> {
    let d = &q.dynamics;
    [
        q.r,
        q.sigma,
        d.kappa_plus,
        d.kappa_minus,
        d.theta_plus,
        d.theta_minus,
        d.beta[0][0],
        d.beta[0][1],
        d.beta[1][0],
        d.beta[1][1],
        q.law_plus.nu(),
        q.law_plus.eta(),
        q.law_minus.nu(),
        q.law_minus.eta(),
        q.lambda_plus,
        q.lambda_minus,
        cfg.rel_tol,
        cfg.abs_tol,
        cfg.envelope_tol,
        cfg.ode.rel_tol,
        cfg.ode.abs_tol,
    ]
    .iter()
    .map(|v| v.to_bits())
    .chain([cfg.order as u64, cfg.initial_subdivisions as u64, cfg.max_subdivisions as u64])
    .collect()
}

/// Fourier pricer with a per-maturity cache of MGF grids.
///
/// The cache may be read and filled concurrently; a grid depends only on its
/// key, so results do not depend on which thread builds it first.
#[derive(Debug, Default)]
pub struct FourierPricer {
    cfg: QuadratureConfig,
    plan: Option<GridPlan>,
    cache: RwLock<HashMap<GridKey, Arc<MaturityGrid>>>,
}

fn log_moneyness_bucket(k: f64) -> f64 {
    (k.abs().max(0.5) / 0.25).ceil() * 0.25
}

/// `E(tau; 1/2 - iy)` for every node `y`, one row per maturity.
fn mgf_values_multi(
    model: &ModelParams,
    taus: &[f64],
    ys: &[f64],
    lambda: [f64; 2],
    ode: &OdeConfig,
) -> Result<Vec<Vec<Complex64>>> {
    let per_node: Vec<Vec<Complex64>> = ys
        .par_iter()
        .map(|&y| {
            let omega = Complex64::new(0.5, -y);
            let zero = Complex64::new(0.0, 0.0);
            let sol = solve_mgf_odes(model, omega, zero, zero, taus, ode)?;
            Ok(sol.points.iter().map(|pt| pt.evaluate(omega, 0.0, lambda)).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..taus.len()).map(|i| per_node.iter().map(|row| row[i]).collect()).collect())
}

fn mgf_values(model: &ModelParams, tau: f64, ys: &[f64], lambda: [f64; 2], ode: &OdeConfig) -> Result<Vec<Complex64>> {
    Ok(mgf_values_multi(model, &[tau], ys, lambda, ode)?.remove(0))
}

/// Panel breakpoints `0, 1/2, 1, 2, ..., y_max`, each split into `subdivisions`.
fn panel_rule(y_max: f64, subdivisions: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut breaks = vec![0.0];
    let mut b = 0.5;
    while b < y_max * (1.0 - 1e-12) {
        breaks.push(b);
        b *= 2.0;
    }
    breaks.push(y_max);
    let (x, w) = gauss_legendre(order);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for pair in breaks.windows(2) {
        let h = (pair[1] - pair[0]) / subdivisions as f64;
        for s in 0..subdivisions {
            let mid = pair[0] + h * (s as f64 + 0.5);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + 0.5 * h * xi);
                weights.push(0.5 * h * wi);
            }
        }
    }
    (nodes, weights)
}

fn build_grid(q: &QParams, tau: f64, k_max: f64, cfg: &QuadratureConfig) -> Result<MaturityGrid> {
    let model = q.as_model();
    let lambda = q.lambda();

    // truncation: double y until the tail bound holds at two consecutive points
    let mut y = 4.0;
    let mut passes = 0;
    loop {
        let e = mgf_values(&model, tau, &[y], lambda, &cfg.ode)?[0];
        let tail = e.norm() * (0.5 * k_max).exp() * y / (y * y + 0.25);
        passes = if tail < cfg.envelope_tol { passes + 1 } else { 0 };
        if passes == 2 {
            break;
        }
        y *= 2.0;
        if y > cfg.max_y {
            return Err(Error::QuadratureFailure(format!(
                "integrand envelope above {} at y={} for tau={tau}",
                cfg.envelope_tol, cfg.max_y
            )));
        }
    }
    let y_max = y;

    let probes = [-k_max, -0.5 * k_max, 0.0, 0.5 * k_max, k_max];
    let mut subdivisions = cfg.initial_subdivisions.max(1);
    let mut grid = {
        let (nodes, weights) = panel_rule(y_max, subdivisions, cfg.order);
        let values = mgf_values(&model, tau, &nodes, lambda, &cfg.ode)?;
        MaturityGrid { tau, y_max, nodes, weights, values, k_max, subdivisions }
    };
    let mut previous: Vec<f64> = probes.iter().map(|&k| grid.integral(k)).collect();
    loop {
        subdivisions *= 2;
        if subdivisions > cfg.max_subdivisions {
            return Err(Error::QuadratureFailure(format!(
                "panel refinement did not settle within {} subdivisions for tau={tau}",
                cfg.max_subdivisions
            )));
        }
        let (nodes, weights) = panel_rule(y_max, subdivisions, cfg.order);
        let values = mgf_values(&model, tau, &nodes, lambda, &cfg.ode)?;
        grid = MaturityGrid { tau, y_max, nodes, weights, values, k_max, subdivisions };
        let current: Vec<f64> = probes.iter().map(|&k| grid.integral(k)).collect();
        let settled = current
            .iter()
            .zip(&previous)
            .all(|(a, b)| (a - b).abs() <= cfg.rel_tol * a.abs() + cfg.abs_tol);
        if settled {
            return Ok(grid);
        }
        previous = current;
    }
}

impl FourierPricer {
    pub fn new(cfg: QuadratureConfig) -> Self {
        Self { cfg, plan: None, cache: RwLock::new(HashMap::new()) }
    }

    /// Pricer that skips the adaptive search and uses `plan` for every
    /// maturity. Prices are then smooth functions of the parameters.
    pub fn with_plan(cfg: QuadratureConfig, plan: GridPlan) -> Self {
        Self { cfg, plan: Some(plan), cache: RwLock::new(HashMap::new()) }
    }

    fn key(&self, q: &QParams, tau: f64, k_max: f64) -> GridKey {
        GridKey { params: params_key(q, &self.cfg), tau: tau.to_bits(), k_bucket: k_max.to_bits() }
    }

    /// Fills the cache for all `taus` at once. With a plan, each node needs a
    /// single ODE solve across all maturities.
    pub fn prepare(&self, q: &QParams, taus: &[f64]) -> Result<()> {
        let Some(plan) = self.plan else {
            for &tau in taus {
                self.grid(q, tau, 0.0)?;
            }
            return Ok(());
        };
        let mut taus: Vec<f64> = taus.to_vec();
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        if taus.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::invalid("maturities must be positive"));
        }
        let (nodes, weights) = panel_rule(plan.y_max, plan.subdivisions, self.cfg.order);
        let values = mgf_values_multi(&q.as_model(), &taus, &nodes, q.lambda(), &self.cfg.ode)?;
        let mut cache = self.cache.write().expect("grid cache poisoned");
        for (tau, values) in taus.iter().zip(values) {
            let grid = MaturityGrid {
                tau: *tau,
                y_max: plan.y_max,
                nodes: nodes.clone(),
                weights: weights.clone(),
                values,
                k_max: f64::INFINITY,
                subdivisions: plan.subdivisions,
            };
            cache.entry(self.key(q, *tau, f64::INFINITY)).or_insert_with(|| Arc::new(grid));
        }
        Ok(())
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.cfg
    }

    /// Cached grid for maturity `tau` valid for `|ln(S/K)| <= k`.
    pub fn grid(&self, q: &QParams, tau: f64, k: f64) -> Result<Arc<MaturityGrid>> {
        if !(tau > 0.0) {
            return Err(Error::invalid(format!("maturity must be positive, got {tau}")));
        }
        if self.plan.is_some() {
            let key = self.key(q, tau, f64::INFINITY);
            if let Some(g) = self.cache.read().expect("grid cache poisoned").get(&key) {
                return Ok(Arc::clone(g));
            }
            self.prepare(q, &[tau])?;
            return Ok(Arc::clone(&self.cache.read().expect("grid cache poisoned")[&key]));
        }
        let k_max = log_moneyness_bucket(k);
        let key = self.key(q, tau, k_max);
        if let Some(g) = self.cache.read().expect("grid cache poisoned").get(&key) {
            return Ok(Arc::clone(g));
        }
        let grid = Arc::new(build_grid(q, tau, k_max, &self.cfg)?);
        let mut cache = self.cache.write().expect("grid cache poisoned");
        Ok(Arc::clone(cache.entry(key).or_insert(grid)))
    }

    /// Price of the capped payoff `min(S_T, K)`, discounted.
    pub fn capped_payoff(&self, q: &QParams, spec: &OptionSpec) -> Result<f64> {
        check_spec(q, spec)?;
        let k = (spec.spot / spec.strike).ln();
        let grid = self.grid(q, spec.tau, k)?;
        Ok(spec.discount() * spec.strike / std::f64::consts::PI * grid.integral(k))
    }

    pub fn price(&self, q: &QParams, spec: &OptionSpec) -> Result<f64> {
        let u = self.capped_payoff(q, spec)?;
        let price = match spec.kind {
            OptionType::Call => spec.spot - u,
            OptionType::Put => spec.discount() * spec.strike - u,
        };
        // quadrature noise below the no-arbitrage floor
        let (lower, _) = spec.price_bounds();
        Ok(price.max(lower))
    }

    /// Model prices and implied volatilities on a maturity-by-strike grid,
    /// each quoted on its out-of-the-money leg.
    pub fn iv_surface(&self, q: &QParams, maturities: &[f64], strikes: &[f64], spot: f64) -> Result<Vec<IvPoint>> {
        let mut out = Vec::with_capacity(maturities.len() * strikes.len());
        for &tau in maturities {
            for &strike in strikes {
                let forward = spot * (q.r * tau).exp();
                let kind = if strike >= forward { OptionType::Call } else { OptionType::Put };
                let spec = OptionSpec::new(strike, tau, kind, spot, q.r)?;
                out.push(self.iv_point(q, spec)?);
            }
        }
        Ok(out)
    }

    pub fn iv_point(&self, q: &QParams, spec: OptionSpec) -> Result<IvPoint> {
        let price = self.price(q, &spec)?;
        let iv = implied_vol(price, &spec)?;
        Ok(IvPoint { spec, price, iv })
    }
}

fn check_spec(q: &QParams, spec: &OptionSpec) -> Result<()> {
    spec.validate()?;
    if (spec.rate - q.r).abs() > 1e-14 * q.r.abs().max(1.0) {
        return Err(Error::invalid(format!(
            "option rate {} differs from the risk-neutral model rate {}",
            spec.rate, q.r
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvPoint {
    pub spec: OptionSpec,
    pub price: f64,
    pub iv: f64,
}

/// One-off price without reusing a cache.
pub fn price_option(q: &QParams, spec: &OptionSpec, cfg: &QuadratureConfig) -> Result<f64> {
    FourierPricer::new(*cfg).price(q, spec)
}

pub fn iv_surface(q: &QParams, maturities: &[f64], strikes: &[f64], spot: f64, cfg: &QuadratureConfig) -> Result<Vec<IvPoint>> {
    FourierPricer::new(*cfg).iv_surface(q, maturities, strikes, spot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs::bs_price;
    use crate::measure::{to_q_params, RiskPremiumParams};
    use crate::model::tests_support::sample_params;
    use crate::model::{IntensityDynamics, IntensityState, JumpLaw};

    fn jump_free(sigma: f64, r: f64) -> QParams {
        let dynamics = IntensityDynamics {
            kappa_plus: 1.0,
            kappa_minus: 1.0,
            theta_plus: 0.0,
            theta_minus: 0.0,
            beta: [[0.0; 2]; 2],
        };
        let p = ModelParams::new_unchecked(
            0.0,
            sigma,
            dynamics,
            JumpLaw::positive(0.03, 0.02).unwrap(),
            JumpLaw::negative(-0.03, 0.02).unwrap(),
            [0.0, 0.0],
        );
        to_q_params(&p, &RiskPremiumParams::default(), r, &IntensityState::new(0.0, 0.0, 0.0)).unwrap()
    }

    #[test]
    fn reduces_to_black_scholes_at_the_money() {
        let q = jump_free(0.2, 0.0);
        let pricer = FourierPricer::default();
        let expected = 2.0 * crate::bs::norm_cdf(0.1) - 1.0;
        for kind in [OptionType::Call, OptionType::Put] {
            let spec = OptionSpec::new(1.0, 1.0, kind, 1.0, 0.0).unwrap();
            assert!((pricer.price(&q, &spec).unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn reduces_to_black_scholes_off_the_money_with_rate() {
        let q = jump_free(0.45, 0.05);
        let pricer = FourierPricer::default();
        for &k in &[80.0, 95.0, 110.0, 120.0] {
            for kind in [OptionType::Call, OptionType::Put] {
                let spec = OptionSpec::new(k, 0.5, kind, 100.0, 0.05).unwrap();
                let bs = bs_price(&spec, 0.45);
                let f = pricer.price(&q, &spec).unwrap();
                assert!((f - bs).abs() <= 1e-7 * bs, "K={k} {kind:?}: {f} vs {bs}");
            }
        }
    }

    #[test]
    fn grid_is_reused_across_strikes() {
        let p = sample_params();
        let q = to_q_params(&p, &RiskPremiumParams::new(2.0, -2.0), 0.01, &p.initial_state()).unwrap();
        let pricer = FourierPricer::default();
        let a = pricer.grid(&q, 0.1, 0.1).unwrap();
        let b = pricer.grid(&q, 0.1, 0.3).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn parity_and_strike_monotonicity_with_jumps() {
        let p = sample_params();
        let q = to_q_params(&p, &RiskPremiumParams::new(5.0, -5.0), 0.03, &p.initial_state()).unwrap();
        let pricer = FourierPricer::default();
        let mut last_call = f64::INFINITY;
        let mut last_put = 0.0;
        for i in 0..9 {
            let k = 80.0 + 5.0 * i as f64;
            let c = pricer.price(&q, &OptionSpec::new(k, 0.25, OptionType::Call, 100.0, 0.03).unwrap()).unwrap();
            let pu = pricer.price(&q, &OptionSpec::new(k, 0.25, OptionType::Put, 100.0, 0.03).unwrap()).unwrap();
            let parity = 100.0 - k * (-0.03_f64 * 0.25).exp();
            assert!(((c - pu) - parity).abs() <= 1e-8 * 100.0);
            assert!(c < last_call && pu > last_put);
            last_call = c;
            last_put = pu;
        }
    }

    #[test]
    fn planned_grid_matches_adaptive_prices() {
        let p = sample_params();
        let q = to_q_params(&p, &RiskPremiumParams::new(4.0, -6.0), 0.02, &p.initial_state()).unwrap();
        let adaptive = FourierPricer::default();
        let plan = adaptive.grid(&q, 0.05, 0.2).unwrap().plan().union(adaptive.grid(&q, 0.2, 0.2).unwrap().plan());
        let planned = FourierPricer::with_plan(QuadratureConfig::default(), plan);
        planned.prepare(&q, &[0.05, 0.2]).unwrap();
        for &tau in &[0.05, 0.2] {
            for &k in &[85.0, 100.0, 120.0] {
                let spec = OptionSpec::new(k, tau, OptionType::Call, 100.0, 0.02).unwrap();
                let a = adaptive.price(&q, &spec).unwrap();
                let b = planned.price(&q, &spec).unwrap();
                assert!((a - b).abs() < 1e-9 * 100.0, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn mismatched_rate_is_rejected() {
        let q = jump_free(0.2, 0.01);
        let spec = OptionSpec::new(1.0, 1.0, OptionType::Call, 1.0, 0.02).unwrap();
        assert!(matches!(price_option(&q, &spec, &QuadratureConfig::default()), Err(Error::InvalidInput(_))));
    }
}
