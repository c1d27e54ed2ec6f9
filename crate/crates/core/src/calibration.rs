//! Fit of the diffusion volatility and the two jump risk-premium parameters
//! to one dated slice of implied volatilities, with the statistical jump
//! parameters held fixed.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::bs::{bs_vega, implied_vol, OptionSpec, OptionType};
use crate::error::{Error, Result};
use crate::estimation::parse_day;
use crate::fourier::{FourierPricer, GridPlan, QuadratureConfig};
use crate::measure::{jump_risk_premia, to_q_params, RiskPremiumParams};
use crate::model::{IntensityState, ModelParams};
use crate::optim::{nelder_mead, NelderMeadConfig};

/// Objective increment per unit weight for a quote the model cannot price.
pub const FAILED_QUOTE_PENALTY: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub tau: f64,
    pub strike: f64,
    pub kind: OptionType,
    pub iv: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSlice {
    /// Calendar day of the quotes (see `estimation::parse_day`).
    pub as_of_day: i64,
    pub spot: f64,
    pub rate: f64,
    /// Statistical intensity state at the as-of time.
    pub state: IntensityState,
    pub quotes: Vec<Quote>,
}

impl QuoteSlice {
    pub fn validate(&self) -> Result<()> {
        if self.quotes.is_empty() {
            return Err(Error::invalid("quote slice is empty"));
        }
        if !(self.spot > 0.0) || !self.rate.is_finite() {
            return Err(Error::invalid("slice needs a positive spot and a finite rate"));
        }
        for (i, q) in self.quotes.iter().enumerate() {
            if !(q.iv > 0.0 && q.tau > 0.0 && q.strike > 0.0) || !(q.weight >= 0.0) {
                return Err(Error::invalid(format!("quote {i} has invalid fields: {q:?}")));
            }
        }
        if !self.quotes.iter().any(|q| q.weight > 0.0) {
            return Err(Error::invalid("at least one quote weight must be positive"));
        }
        Ok(())
    }

    pub fn spec(&self, q: &Quote) -> Result<OptionSpec> {
        OptionSpec::new(q.strike, q.tau, q.kind, self.spot, self.rate)
    }

    /// Reads `as_of,tau,strike,type,iv[,vega][,spot][,rate]` rows. Missing
    /// vegas become market Black-Scholes vegas; `spot` and `rate` arguments
    /// override the corresponding columns. The intensity state is left at
    /// zero for the caller to fill in.
    pub fn read_csv<R: Read>(reader: R, spot: Option<f64>, rate: Option<f64>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            as_of: String,
            tau: f64,
            strike: f64,
            #[serde(rename = "type")]
            kind: String,
            iv: f64,
            vega: Option<f64>,
            spot: Option<f64>,
            rate: Option<f64>,
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            rows.push(row);
        }
        let first = rows.first().ok_or_else(|| Error::invalid("quotes file has no rows"))?;
        let as_of_day = parse_day(&first.as_of)?;
        let spot = spot.or(first.spot).ok_or_else(|| Error::invalid("spot missing from quotes and arguments"))?;
        let rate = rate.or(first.rate).unwrap_or(0.0);
        let mut quotes = Vec::with_capacity(rows.len());
        for row in &rows {
            if parse_day(&row.as_of)? != as_of_day {
                return Err(Error::invalid("a quote slice must share one as_of date"));
            }
            let kind: OptionType = row.kind.parse()?;
            let weight = match row.vega {
                Some(v) => v,
                None => bs_vega(&OptionSpec::new(row.strike, row.tau, kind, spot, rate)?, row.iv),
            };
            quotes.push(Quote { tau: row.tau, strike: row.strike, kind, iv: row.iv, weight });
        }
        let slice = Self { as_of_day, spot, rate, state: IntensityState::new(0.0, 0.0, 0.0), quotes };
        slice.validate()?;
        Ok(slice)
    }
}

/// Per-quote outcome at a parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuoteFit {
    pub quote: Quote,
    pub model_iv: Option<f64>,
    /// `|iv_mkt - iv_model| / iv_mkt`, or the failure penalty.
    pub abs_pct_error: f64,
}

fn model_ivs(
    params: &ModelParams,
    sigma: f64,
    chi: &RiskPremiumParams,
    slice: &QuoteSlice,
    qcfg: &QuadratureConfig,
    plan: Option<GridPlan>,
) -> Vec<Option<f64>> {
    let p = params.with_sigma(sigma);
    let Ok(q) = to_q_params(&p, chi, slice.rate, &slice.state) else {
        return vec![None; slice.quotes.len()];
    };
    let pricer = match plan {
        Some(plan) => {
            let pricer = FourierPricer::with_plan(*qcfg, plan);
            let taus: Vec<f64> = slice.quotes.iter().map(|q| q.tau).collect();
            if pricer.prepare(&q, &taus).is_err() {
                return vec![None; slice.quotes.len()];
            }
            pricer
        }
        None => FourierPricer::new(*qcfg),
    };
    slice
        .quotes
        .iter()
        .map(|quote| {
            // price on the out-of-the-money leg, where the inversion is best conditioned
            let forward = slice.spot * (slice.rate * quote.tau).exp();
            let kind = if quote.strike >= forward { OptionType::Call } else { OptionType::Put };
            let spec = OptionSpec::new(quote.strike, quote.tau, kind, slice.spot, slice.rate).ok()?;
            let price = pricer.price(&q, &spec).ok()?;
            implied_vol(price, &spec).ok()
        })
        .collect()
}

pub fn quote_fits(
    params: &ModelParams,
    sigma: f64,
    chi: &RiskPremiumParams,
    slice: &QuoteSlice,
    qcfg: &QuadratureConfig,
) -> Vec<QuoteFit> {
    fits_with(params, sigma, chi, slice, qcfg, None)
}

fn fits_with(
    params: &ModelParams,
    sigma: f64,
    chi: &RiskPremiumParams,
    slice: &QuoteSlice,
    qcfg: &QuadratureConfig,
    plan: Option<GridPlan>,
) -> Vec<QuoteFit> {
    model_ivs(params, sigma, chi, slice, qcfg, plan)
        .into_iter()
        .zip(&slice.quotes)
        .map(|(iv, quote)| QuoteFit {
            quote: *quote,
            model_iv: iv,
            abs_pct_error: iv.map_or(FAILED_QUOTE_PENALTY, |m| (quote.iv - m).abs() / quote.iv),
        })
        .collect()
}

/// Weighted sum of stored per-quote errors.
pub fn weighted_error(fits: &[QuoteFit]) -> f64 {
    fits.iter().map(|f| f.quote.weight * f.abs_pct_error).sum()
}

/// Vega-weighted absolute percentage implied-volatility error.
pub fn objective(
    params: &ModelParams,
    sigma: f64,
    chi: &RiskPremiumParams,
    slice: &QuoteSlice,
    qcfg: &QuadratureConfig,
) -> f64 {
    weighted_error(&quote_fits(params, sigma, chi, slice, qcfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub sigma_bounds: (f64, f64),
    /// Box on both risk-premium parameters, intersected with the admissible
    /// region of the jump laws.
    pub chi_box: (f64, f64),
    /// Loose search run from every start.
    pub scout: NelderMeadConfig,
    /// Tight search from the best scouted point.
    pub nelder_mead: NelderMeadConfig,
    pub quadrature: QuadratureConfig,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            sigma_bounds: (0.01, 5.0),
            chi_box: (-30.0, 30.0),
            scout: NelderMeadConfig { max_iter: 120, f_tol: 1e-6, x_tol: 1e-4, initial_step: 0.3, restarts: 0 },
            nelder_mead: NelderMeadConfig { max_iter: 600, f_tol: 1e-12, x_tol: 1e-7, initial_step: 0.05, restarts: 2 },
            quadrature: QuadratureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub sigma_hat: f64,
    pub chi_plus_hat: f64,
    pub chi_minus_hat: f64,
    pub objective: f64,
    pub quotes: Vec<QuoteFit>,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub start_objectives: Vec<f64>,
    pub converged: bool,
}

/// Fixed node layout used during the search: the adaptive layouts of every
/// maturity at a low-volatility probe point, merged.
/// The reported fit is re-priced adaptively.
fn search_plan(
    params: &ModelParams,
    slice: &QuoteSlice,
    sigma: f64,
    chi_plus: f64,
    chi_minus: f64,
    cfg: &CalibrationConfig,
) -> Result<GridPlan> {
    let q = to_q_params(&params.with_sigma(sigma), &RiskPremiumParams::new(chi_plus, chi_minus), slice.rate, &slice.state)?;
    let pricer = FourierPricer::new(cfg.quadrature);
    let k_max = slice.quotes.iter().map(|q| (slice.spot / q.strike).ln().abs()).fold(0.0, f64::max);
    let mut plan: Option<GridPlan> = None;
    for quote in &slice.quotes {
        let p = pricer.grid(&q, quote.tau, k_max)?.plan();
        plan = Some(plan.map_or(p, |acc| acc.union(p)));
    }
    let plan = plan.expect("slice is non-empty");
    Ok(plan)
}

/// Maps an unconstrained coordinate onto `(lo, hi)`.
fn to_box(u: f64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) / (1.0 + (-u).exp())
}

fn from_box(x: f64, lo: f64, hi: f64) -> f64 {
    let s = ((x - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
    (s / (1.0 - s)).ln()
}

/// Minimizes the objective over `(sigma, chi+, chi-)`. A loose search runs
/// from five starts (the box centre and the four corners of the inner half of
/// the `chi` box, all at the vega-weighted mean market volatility) and the
/// best of them is polished.
pub fn calibrate(params: &ModelParams, slice: &QuoteSlice, cfg: &CalibrationConfig) -> Result<CalibrationResult> {
    slice.validate()?;
    let region = RiskPremiumParams::admissible_region(&params.law_plus, &params.law_minus);
    let bounds = [
        cfg.sigma_bounds,
        (cfg.chi_box.0.max(region[0].0), cfg.chi_box.1.min(region[0].1)),
        (cfg.chi_box.0.max(region[1].0), cfg.chi_box.1.min(region[1].1)),
    ];
    if bounds.iter().any(|b| !(b.0 < b.1)) {
        return Err(Error::InfeasibleRegion(format!("empty search box {bounds:?}")));
    }
    let decode = |u: &[f64]| -> [f64; 3] {
        [to_box(u[0], bounds[0].0, bounds[0].1), to_box(u[1], bounds[1].0, bounds[1].1), to_box(u[2], bounds[2].0, bounds[2].1)]
    };
    let wsum: f64 = slice.quotes.iter().map(|q| q.weight).sum();
    let sigma0 = (slice.quotes.iter().map(|q| q.weight * q.iv).sum::<f64>() / wsum)
        .clamp(bounds[0].0 * 1.01, bounds[0].1 * 0.99);
    let mid = |b: (f64, f64), s: f64| b.0 + s * (b.1 - b.0);

    let plan = search_plan(params, slice, (0.5 * sigma0).max(bounds[0].0), mid(bounds[1], 0.5), mid(bounds[2], 0.5), cfg)?;
    let f = |u: &[f64]| {
        let x = decode(u);
        let fits = fits_with(params, x[0], &RiskPremiumParams::new(x[1], x[2]), slice, &cfg.quadrature, Some(plan));
        weighted_error(&fits)
    };
    let starts: Vec<[f64; 3]> = [(0.5, 0.5), (0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)]
        .iter()
        .map(|&(a, b)| [sigma0, mid(bounds[1], a), mid(bounds[2], b)])
        .collect();

    let penalty_all = FAILED_QUOTE_PENALTY * wsum;
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    let mut start_objectives = Vec::with_capacity(starts.len());
    for x0 in &starts {
        let u0 = [from_box(x0[0], bounds[0].0, bounds[0].1), from_box(x0[1], bounds[1].0, bounds[1].1), from_box(x0[2], bounds[2].0, bounds[2].1)];
        let f0 = f(&u0);
        start_objectives.push(f0);
        if !(f0 < penalty_all) {
            continue;
        }
        let m = nelder_mead(f, &u0, &cfg.scout);
        if best.as_ref().is_none_or(|b| m.f < b.0) {
            best = Some((m.f, m.x, m.converged));
        }
    }
    let (_, u, _) = best.ok_or_else(|| {
        Error::InfeasibleRegion("the model could not price any quote at any start".into())
    })?;
    let polished = nelder_mead(f, &u, &cfg.nelder_mead);
    let (u, converged) = (polished.x, polished.converged);
    let x = decode(&u);
    let chi = RiskPremiumParams::new(x[1], x[2]);
    let quotes = quote_fits(params, x[0], &chi, slice, &cfg.quadrature);
    let (gamma_plus, gamma_minus) = jump_risk_premia(params, &chi, &slice.state)?;
    Ok(CalibrationResult {
        sigma_hat: x[0],
        chi_plus_hat: x[1],
        chi_minus_hat: x[2],
        objective: weighted_error(&quotes),
        quotes,
        gamma_plus,
        gamma_minus,
        start_objectives,
        converged,
    })
}
