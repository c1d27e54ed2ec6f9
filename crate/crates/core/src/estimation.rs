//! Statistical-measure estimation from a daily return series: threshold
//! search, jump classification, jump-scale estimators and the partial
//! likelihood of the intensity parameters.

use std::io::Read;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{IntensityDynamics, IntensityState, JumpLaw, ModelParams, Side, DAYS_PER_YEAR};
use crate::optim::{bfgs_refine, nelder_mead, NelderMeadConfig};
use crate::sim::{EventSeries, JumpEvent};

/// Parses a timestamp given either as an integer day number or as
/// `YYYY-MM-DD` (mapped to days since 1970-01-01).
pub fn parse_day(s: &str) -> Result<i64> {
    let s = s.trim();
    if let Ok(d) = s.parse::<i64>() {
        return Ok(d);
    }
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| Error::invalid(format!("unrecognized timestamp '{s}'")))?;
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch");
    Ok(date.signed_duration_since(epoch).num_days())
}

/// Daily log returns. The return stamped with day `d` covers `(d-1, d]`, so
/// the first return ends at `1/365` years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    days: Vec<i64>,
    returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(days: Vec<i64>, returns: Vec<f64>) -> Result<Self> {
        if days.len() != returns.len() {
            return Err(Error::invalid("timestamps and returns differ in length"));
        }
        if days.is_empty() {
            return Err(Error::invalid("return series is empty"));
        }
        if days.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("timestamps must be strictly increasing"));
        }
        if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
            return Err(Error::invalid(format!("return {i} is not finite")));
        }
        Ok(Self { days, returns })
    }

    /// Reads `timestamp,log_return` rows; `#` lines are comments.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            timestamp: String,
            log_return: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let mut days = Vec::new();
        let mut returns = Vec::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            days.push(parse_day(&row.timestamp)?);
            returns.push(row.log_return);
        }
        Self::new(days, returns)
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn days(&self) -> &[i64] {
        &self.days
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn origin_day(&self) -> i64 {
        self.days[0] - 1
    }

    /// Model time in years of a calendar day.
    pub fn day_to_time(&self, day: i64) -> f64 {
        (day - self.origin_day()) as f64 / DAYS_PER_YEAR
    }

    pub fn times(&self) -> Vec<f64> {
        self.days.iter().map(|&d| self.day_to_time(d)).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.day_to_time(*self.days.last().expect("non-empty"))
    }
}

/// `(mean, skew, excess kurtosis)` with `1/n` central moments.
pub fn sample_moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (mean, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Linearly interpolated percentile (`p` in `[0, 100]`) of sorted data.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThresholdGrid {
    /// Per-side percentiles of the positive returns and of the magnitudes of
    /// the negative returns.
    Percentiles(Vec<f64>),
    /// Explicit candidates; `minus` holds negative values.
    Explicit { plus: Vec<f64>, minus: Vec<f64> },
}

impl Default for ThresholdGrid {
    fn default() -> Self {
        ThresholdGrid::Percentiles((0..40).map(|i| 80.0 + 0.5 * i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PotConfig {
    pub grid: ThresholdGrid,
    pub min_filtered: usize,
    pub min_length: usize,
}

impl Default for PotConfig {
    fn default() -> Self {
        Self { grid: ThresholdGrid::default(), min_filtered: 30, min_length: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotResult {
    pub nu_plus_hat: f64,
    pub nu_minus_hat: f64,
    pub jumps: EventSeries,
    /// `(skew, excess kurtosis)` of the returns strictly inside the thresholds.
    pub filtered_moments: (f64, f64),
    pub n_filtered: usize,
    pub objective: f64,
}

fn candidates(returns: &[f64], grid: &ThresholdGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    match grid {
        ThresholdGrid::Percentiles(ps) => {
            let mut pos: Vec<f64> = returns.iter().copied().filter(|r| *r > 0.0).collect();
            let mut neg: Vec<f64> = returns.iter().filter(|r| **r < 0.0).map(|r| -r).collect();
            if pos.is_empty() || neg.is_empty() {
                return Err(Error::DegenerateSample("returns must contain both signs".into()));
            }
            pos.sort_by(f64::total_cmp);
            neg.sort_by(f64::total_cmp);
            Ok((
                ps.iter().map(|&p| percentile(&pos, p)).collect(),
                ps.iter().map(|&p| -percentile(&neg, p)).collect(),
            ))
        }
        ThresholdGrid::Explicit { plus, minus } => Ok((plus.clone(), minus.clone())),
    }
}

/// Picks the threshold pair whose inner sample is closest to Gaussian in
/// skew and excess kurtosis, then labels returns at or beyond it as jumps.
pub fn pot_filter(series: &ReturnSeries, cfg: &PotConfig) -> Result<PotResult> {
    let returns = series.returns();
    if returns.len() < cfg.min_length {
        return Err(Error::DegenerateSample(format!(
            "{} returns, at least {} required",
            returns.len(),
            cfg.min_length
        )));
    }
    let (plus, minus) = candidates(returns, &cfg.grid)?;
    if plus.iter().any(|v| !(*v > 0.0)) || minus.iter().any(|v| !(*v < 0.0)) {
        return Err(Error::invalid("threshold candidates need nu+ > 0 > nu-"));
    }

    // (objective, jumps, nu+, nu-, skew, kurt, n_filtered)
    let mut best: Option<(f64, usize, f64, f64, f64, f64, usize)> = None;
    let mut inner = Vec::with_capacity(returns.len());
    for &np in &plus {
        for &nm in &minus {
            inner.clear();
            inner.extend(returns.iter().copied().filter(|r| *r > nm && *r < np));
            if inner.len() < cfg.min_filtered {
                continue;
            }
            let (_, skew, kurt) = sample_moments(&inner);
            if !skew.is_finite() || !kurt.is_finite() {
                continue;
            }
            let obj = skew.abs() + kurt.abs();
            let jumps = returns.len() - inner.len();
            let better = match &best {
                None => true,
                Some(b) => obj < b.0 || (obj == b.0 && (jumps < b.1 || (jumps == b.1 && np > b.2))),
            };
            if better {
                best = Some((obj, jumps, np, nm, skew, kurt, inner.len()));
            }
        }
    }
    let (objective, _, nu_plus, nu_minus, skew, kurt, n_filtered) = best.ok_or_else(|| {
        Error::DegenerateSample(format!("every threshold pair leaves fewer than {} returns", cfg.min_filtered))
    })?;
    Ok(PotResult {
        nu_plus_hat: nu_plus,
        nu_minus_hat: nu_minus,
        jumps: classify(series, nu_plus, nu_minus)?,
        filtered_moments: (skew, kurt),
        n_filtered,
        objective,
    })
}

/// Returns `>= nu_plus` become positive jumps and returns `<= nu_minus`
/// negative jumps, stamped with the return's model time.
pub fn classify(series: &ReturnSeries, nu_plus: f64, nu_minus: f64) -> Result<EventSeries> {
    let events = series
        .days()
        .iter()
        .zip(series.returns())
        .filter_map(|(&d, &r)| {
            let t = series.day_to_time(d);
            if r >= nu_plus {
                Some(JumpEvent { t, size: r, sign: Side::Positive })
            } else if r <= nu_minus {
                Some(JumpEvent { t, size: r, sign: Side::Negative })
            } else {
                None
            }
        })
        .collect();
    EventSeries::new(events, series.horizon())
}

/// Mean excess of the jumps beyond their thresholds, `(eta+, eta-)`.
pub fn estimate_eta(jumps: &EventSeries, nu_plus: f64, nu_minus: f64) -> Result<(f64, f64)> {
    let mean_excess = |side: Side, excess: &dyn Fn(f64) -> f64| -> Result<f64> {
        let xs: Vec<f64> = jumps.sizes(side).map(excess).collect();
        if xs.is_empty() {
            return Err(Error::EmptySide(side));
        }
        Ok(xs.iter().sum::<f64>() / xs.len() as f64)
    };
    Ok((
        mean_excess(Side::Positive, &|j| j - nu_plus)?,
        mean_excess(Side::Negative, &|j| nu_minus - j)?,
    ))
}

/// Drift and diffusion volatility matched to the return sample: `sigma` from
/// the standard deviation of the non-jump returns and `mu` so that the model
/// mean log return equals the sample mean at the average jump rates.
pub fn estimate_diffusion(series: &ReturnSeries, pot: &PotResult, laws: (&JumpLaw, &JumpLaw)) -> Result<(f64, f64)> {
    let inner: Vec<f64> = series
        .returns()
        .iter()
        .copied()
        .filter(|r| *r > pot.nu_minus_hat && *r < pot.nu_plus_hat)
        .collect();
    let n = inner.len() as f64;
    let m = inner.iter().sum::<f64>() / n;
    let var = inner.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    let sigma = (var * DAYS_PER_YEAR).sqrt();
    let t = series.horizon();
    let mean_rate = series.returns().iter().sum::<f64>() / t;
    let mut jump_drift = 0.0;
    for law in [laws.0, laws.1] {
        let rate = pot.jumps.count(law.side()) as f64 / t;
        jump_drift += rate * (law.mean() - law.compensator()?);
    }
    Ok((mean_rate + 0.5 * sigma * sigma - jump_drift, sigma))
}

/// Partial log-likelihood of the intensity parameters, started at
/// `lambda(0) = theta` and integrated exactly between events up to the
/// series horizon.
pub fn partial_loglik(dynamics: &IntensityDynamics, events: &EventSeries) -> Result<f64> {
    let mut lambda = dynamics.theta();
    let mut t = 0.0;
    let mut ll = 0.0;
    for e in events.events() {
        let dt = e.t - t;
        let integral = dynamics.integrate(lambda, dt);
        lambda = dynamics.decay(lambda, dt);
        let pre = lambda[e.sign.index()];
        if !(pre > 0.0) {
            return Err(Error::NumericDomain(format!("pre-event intensity {pre} at t={}", e.t)));
        }
        ll += pre.ln() - integral[0] - integral[1];
        lambda = dynamics.excite(lambda, e.sign, e.size);
        t = e.t;
    }
    let tail = dynamics.integrate(lambda, events.horizon() - t);
    Ok(ll - tail[0] - tail[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredIntensities {
    /// Post-event state at each event after the starting time.
    pub at_events: Vec<IntensityState>,
    /// State just after any events at each requested grid time.
    pub at_grid: Vec<IntensityState>,
}

/// Runs the intensity recursion forward from `from` through `events`
/// (absolute times), reporting post-event states and states on `grid`.
pub fn filter_intensities(
    dynamics: &IntensityDynamics,
    events: &[JumpEvent],
    from: &IntensityState,
    grid: &[f64],
) -> Result<FilteredIntensities> {
    if grid.windows(2).any(|w| w[1] < w[0]) || grid.first().is_some_and(|g| *g < from.t) {
        return Err(Error::invalid("grid must be sorted and start at or after the initial state"));
    }
    let mut at_events = Vec::new();
    let mut at_grid = Vec::with_capacity(grid.len());
    let mut lambda = from.lambda();
    let mut t = from.t;
    let mut gi = 0;
    for e in events.iter().filter(|e| e.t > from.t) {
        while gi < grid.len() && grid[gi] < e.t {
            at_grid.push(IntensityState::from_pair(grid[gi], dynamics.decay(lambda, grid[gi] - t)));
            gi += 1;
        }
        lambda = dynamics.excite(dynamics.decay(lambda, e.t - t), e.sign, e.size);
        t = e.t;
        at_events.push(IntensityState::from_pair(t, lambda));
    }
    for &g in &grid[gi..] {
        at_grid.push(IntensityState::from_pair(g, dynamics.decay(lambda, g - t)));
    }
    Ok(FilteredIntensities { at_events, at_grid })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleConfig {
    pub starts: usize,
    pub seed: u64,
    pub nelder_mead: NelderMeadConfig,
    pub bfgs_iter: usize,
    pub min_events: usize,
    /// Restrict the search to the sufficient finite-mean region.
    pub enforce_stationarity: bool,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            seed: 20_240_601,
            nelder_mead: NelderMeadConfig { max_iter: 20_000, f_tol: 1e-11, x_tol: 1e-8, initial_step: 0.5, restarts: 3 },
            bfgs_iter: 200,
            min_events: 10,
            enforce_stationarity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub dynamics: IntensityDynamics,
    pub nu_plus_hat: f64,
    pub nu_minus_hat: f64,
    pub eta_plus_hat: f64,
    pub eta_minus_hat: f64,
    pub loglik: f64,
    pub horizon: f64,
    /// Post-event intensities over the training events.
    pub lambda_path: Vec<IntensityState>,
    pub starts_converged: usize,
}

impl MleResult {
    pub fn laws(&self) -> Result<(JumpLaw, JumpLaw)> {
        Ok((
            JumpLaw::positive(self.nu_plus_hat, self.eta_plus_hat)?,
            JumpLaw::negative(self.nu_minus_hat, self.eta_minus_hat)?,
        ))
    }

    /// Full statistical-measure parameters with the given drift and volatility,
    /// started at the long-run intensity levels.
    pub fn model_params(&self, mu: f64, sigma: f64) -> Result<ModelParams> {
        let (lp, lm) = self.laws()?;
        ModelParams::new(mu, sigma, self.dynamics, lp, lm, self.dynamics.theta())
    }
}

/// Unconstrained coordinates: logs of kappa and theta, signed logs of beta.
fn decode(u: &[f64]) -> IntensityDynamics {
    IntensityDynamics {
        kappa_plus: u[0].exp(),
        kappa_minus: u[1].exp(),
        theta_plus: u[2].exp(),
        theta_minus: u[3].exp(),
        beta: [[u[4].exp(), -u[5].exp()], [u[6].exp(), -u[7].exp()]],
    }
}

fn encode(d: &IntensityDynamics) -> Vec<f64> {
    vec![
        d.kappa_plus.ln(),
        d.kappa_minus.ln(),
        d.theta_plus.ln(),
        d.theta_minus.ln(),
        d.beta[0][0].ln(),
        (-d.beta[0][1]).ln(),
        d.beta[1][0].ln(),
        (-d.beta[1][1]).ln(),
    ]
}

/// Start with branching shares `f = [f11, f12, f21, f22]` of each kappa.
fn start_point(kappa: [f64; 2], theta: [f64; 2], f: [f64; 4], mean_jump: [f64; 2]) -> IntensityDynamics {
    IntensityDynamics {
        kappa_plus: kappa[0],
        kappa_minus: kappa[1],
        theta_plus: theta[0],
        theta_minus: theta[1],
        beta: [
            [f[0] * kappa[0] / mean_jump[0], f[1] * kappa[0] / mean_jump[1]],
            [f[2] * kappa[1] / mean_jump[0], f[3] * kappa[1] / mean_jump[1]],
        ],
    }
}

/// Maximizes the partial likelihood from several starts. The starts are
/// drawn from one seeded stream before any optimization runs and the winner
/// is chosen by `(loglik, start index)`, so the result does not depend on
/// thread scheduling.
pub fn fit_mle(events: &EventSeries, nu_plus: f64, nu_minus: f64, cfg: &MleConfig) -> Result<MleResult> {
    if events.len() < cfg.min_events {
        return Err(Error::DegenerateSample(format!(
            "{} events, at least {} required",
            events.len(),
            cfg.min_events
        )));
    }
    let (eta_plus, eta_minus) = estimate_eta(events, nu_plus, nu_minus)?;
    let horizon = events.horizon();
    let mean_jump = [
        events.sizes(Side::Positive).sum::<f64>() / events.count(Side::Positive) as f64,
        events.sizes(Side::Negative).sum::<f64>() / events.count(Side::Negative) as f64,
    ];
    let rate = [events.count(Side::Positive) as f64 / horizon, events.count(Side::Negative) as f64 / horizon];

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![encode(&start_point([10.0, 10.0], [0.5 * rate[0], 0.5 * rate[1]], [0.2, 0.1, 0.1, 0.2], mean_jump))];
    while starts.len() < cfg.starts.max(1) {
        let kappa = [rng.random_range(0.0..4.6_f64).exp(), rng.random_range(0.0..4.6_f64).exp()];
        let theta = [rate[0] * rng.random_range(0.2..1.0), rate[1] * rng.random_range(0.2..1.0)];
        let f = [
            rng.random_range(0.01..0.45),
            rng.random_range(0.01..0.45),
            rng.random_range(0.01..0.45),
            rng.random_range(0.01..0.45),
        ];
        starts.push(encode(&start_point(kappa, theta, f, mean_jump)));
    }

    let objective = |u: &[f64]| -> f64 {
        let d = decode(u);
        if cfg.enforce_stationarity {
            let ok = d.kappa_plus >= d.beta[0][0] * mean_jump[0] + d.beta[0][1] * mean_jump[1]
                && d.kappa_minus >= d.beta[1][0] * mean_jump[0] + d.beta[1][1] * mean_jump[1];
            if !ok {
                return f64::INFINITY;
            }
        }
        match partial_loglik(&d, events) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    };

    let results: Vec<(usize, Vec<f64>, f64, bool)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, u0)| {
            let nm = nelder_mead(objective, u0, &cfg.nelder_mead);
            let polished = bfgs_refine(objective, &nm.x, cfg.bfgs_iter, 1e-7);
            if polished.f < nm.f {
                (i, polished.x, polished.f, nm.converged)
            } else {
                (i, nm.x, nm.f, nm.converged)
            }
        })
        .collect();

    let starts_converged = results.iter().filter(|r| r.3 && r.2.is_finite()).count();
    let best = results
        .iter()
        .filter(|r| r.2.is_finite())
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::NonConvergence("no start reached a finite likelihood".into()))?;
    if starts_converged == 0 {
        return Err(Error::NonConvergence(format!(
            "none of {} starts converged within {} iterations",
            results.len(),
            cfg.nelder_mead.max_iter
        )));
    }
    let dynamics = decode(&best.1);
    let loglik = partial_loglik(&dynamics, events)?;
    let lambda_path = filter_intensities(&dynamics, events.events(), &IntensityState::from_pair(0.0, dynamics.theta()), &[])?
        .at_events;
    Ok(MleResult {
        dynamics,
        nu_plus_hat: nu_plus,
        nu_minus_hat: nu_minus,
        eta_plus_hat: eta_plus,
        eta_minus_hat: eta_minus,
        loglik,
        horizon,
        lambda_path,
        starts_converged,
    })
}
