//! Goodness of fit by random time change, cost of carry, and OLS with
//! Newey-West standard errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::model::{IntensityDynamics, IntensityState, Side};
use crate::sim::EventSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    /// Compensator increment between this event and the previous one on the
    /// same side.
    pub sample: f64,
    /// Time of the event closing the interval.
    pub t: f64,
    pub in_sample: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqSide {
    pub side: Side,
    /// Points in event order.
    pub points: Vec<QqPoint>,
    /// Sorted samples.
    pub empirical: Vec<f64>,
    /// Unit-exponential quantiles at plotting positions `(i - 1/2)/n`.
    pub theoretical: Vec<f64>,
    pub mean: f64,
    pub ks_statistic: f64,
    pub ks_critical_1pct: f64,
}

impl QqSide {
    pub fn passes_ks_1pct(&self) -> bool {
        self.ks_statistic < self.ks_critical_1pct
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqData {
    pub plus: QqSide,
    pub minus: QqSide,
}

/// Kolmogorov-Smirnov distance between a sample and the unit exponential law.
pub fn ks_exponential(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = -(-x).exp_m1();
            (((i + 1) as f64) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

fn qq_side(side: Side, points: Vec<QqPoint>) -> QqSide {
    let mut empirical: Vec<f64> = points.iter().map(|p| p.sample).collect();
    empirical.sort_by(f64::total_cmp);
    let n = empirical.len();
    let theoretical = (1..=n).map(|i| -(1.0 - (i as f64 - 0.5) / n as f64).ln()).collect();
    let mean = if n > 0 { empirical.iter().sum::<f64>() / n as f64 } else { f64::NAN };
    let ks_statistic = if n > 0 { ks_exponential(&empirical) } else { f64::NAN };
    QqSide { side, points, empirical, theoretical, mean, ks_statistic, ks_critical_1pct: ks_critical_1pct(n.max(1)) }
}

/// Compensator increments of each side between its consecutive events,
/// starting from `from` (or the long-run levels at time zero). Intervals
/// closing at or before `split` are flagged in-sample.
pub fn time_change_residuals(
    dynamics: &IntensityDynamics,
    events: &EventSeries,
    from: Option<IntensityState>,
    split: Option<f64>,
) -> QqData {
    let start = from.unwrap_or_else(|| IntensityState::from_pair(0.0, dynamics.theta()));
    let mut lambda = start.lambda();
    let mut t = start.t;
    let mut acc = [0.0; 2];
    let mut points: [Vec<QqPoint>; 2] = [Vec::new(), Vec::new()];
    for e in events.events().iter().filter(|e| e.t > start.t) {
        let integral = dynamics.integrate(lambda, e.t - t);
        acc[0] += integral[0];
        acc[1] += integral[1];
        lambda = dynamics.decay(lambda, e.t - t);
        let i = e.sign.index();
        points[i].push(QqPoint { sample: acc[i], t: e.t, in_sample: split.is_none_or(|s| e.t <= s) });
        acc[i] = 0.0;
        lambda = dynamics.excite(lambda, e.sign, e.size);
        t = e.t;
    }
    let [plus, minus] = points;
    QqData { plus: qq_side(Side::Positive, plus), minus: qq_side(Side::Negative, minus) }
}

/// Annualized log basis `ln(F/S)/tau`; inputs must be positive.
pub fn cost_of_carry(futures: f64, spot: f64, tau: f64) -> f64 {
    (futures / spot).ln() / tau
}

pub fn first_difference(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// `floor(4 (n/100)^(2/9))`.
pub fn default_lag(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub coefficients: Vec<f64>,
    pub hac_std_errors: Vec<f64>,
    pub hac_t_stats: Vec<f64>,
    pub ols_std_errors: Vec<f64>,
    pub r_squared: f64,
    /// Centered when an intercept is included, uncentered otherwise.
    pub adj_r_squared: f64,
    pub lag: usize,
    pub n: usize,
    pub intercept: bool,
}

/// OLS of `y` on the given regressor columns (plus a leading constant when
/// `intercept`), with Bartlett-kernel Newey-West standard errors at `lag`
/// (default `default_lag(n)`). No small-sample scaling is applied, so lag 0
/// gives White's HC0 errors.
pub fn hac_regression(y: &[f64], columns: &[Vec<f64>], intercept: bool, lag: Option<usize>) -> Result<RegressionReport> {
    let n = y.len();
    let mut x_cols: Vec<&[f64]> = Vec::new();
    let ones = vec![1.0; n];
    if intercept {
        x_cols.push(&ones);
    }
    x_cols.extend(columns.iter().map(|c| c.as_slice()));
    let p = x_cols.len();
    if p == 0 {
        return Err(Error::invalid("regression needs at least one regressor"));
    }
    if x_cols.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("regressor length differs from the response"));
    }
    if n <= p + 2 {
        return Err(Error::invalid(format!("{n} observations are too few for {p} regressors")));
    }
    if y.iter().chain(x_cols.iter().flat_map(|c| c.iter())).any(|v| !v.is_finite()) {
        return Err(Error::invalid("regression data must be finite"));
    }
    let lag = lag.unwrap_or_else(|| default_lag(n));
    let row = |t: usize| -> Vec<f64> { x_cols.iter().map(|c| c[t]).collect() };

    let mut xtx = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    for t in 0..n {
        let xt = row(t);
        for i in 0..p {
            xty[i] += xt[i] * y[t];
            for j in 0..p {
                xtx[i * p + j] += xt[i] * xt[j];
            }
        }
    }
    let lu = Lu::factor(&xtx, p).map_err(|_| Error::RankDeficient)?;
    let beta = lu.solve(&xty);
    let bread = lu.inverse();

    let resid: Vec<f64> = (0..n).map(|t| y[t] - row(t).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()).collect();
    let ssr: f64 = resid.iter().map(|e| e * e).sum();
    let tss: f64 = if intercept {
        let m = y.iter().sum::<f64>() / n as f64;
        y.iter().map(|v| (v - m) * (v - m)).sum()
    } else {
        y.iter().map(|v| v * v).sum()
    };
    let r_squared = 1.0 - ssr / tss;
    let dof = (n - p) as f64;
    let adj_r_squared = if intercept {
        1.0 - (1.0 - r_squared) * (n as f64 - 1.0) / dof
    } else {
        1.0 - (1.0 - r_squared) * n as f64 / dof
    };

    // meat: sum_l w_l sum_t u_t u_{t-l} (x_t x_{t-l}' + x_{t-l} x_t')
    let scores: Vec<Vec<f64>> = (0..n).map(|t| row(t).iter().map(|v| v * resid[t]).collect()).collect();
    let mut meat = vec![0.0; p * p];
    for l in 0..=lag.min(n - 1) {
        let w = if l == 0 { 1.0 } else { 1.0 - l as f64 / (lag as f64 + 1.0) };
        for t in l..n {
            let (a, b) = (&scores[t], &scores[t - l]);
            for i in 0..p {
                for j in 0..p {
                    let v = if l == 0 { a[i] * a[j] } else { a[i] * b[j] + b[i] * a[j] };
                    meat[i * p + j] += w * v;
                }
            }
        }
    }
    let mut cov = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..p {
                for m in 0..p {
                    s += bread[i * p + k] * meat[k * p + m] * bread[m * p + j];
                }
            }
            cov[i * p + j] = s;
        }
    }
    let s2 = ssr / dof;
    let hac_std_errors: Vec<f64> = (0..p).map(|i| cov[i * p + i].sqrt()).collect();
    let ols_std_errors: Vec<f64> = (0..p).map(|i| (s2 * bread[i * p + i]).sqrt()).collect();
    let hac_t_stats = beta.iter().zip(&hac_std_errors).map(|(b, s)| b / s).collect();
    Ok(RegressionReport {
        coefficients: beta,
        hac_std_errors,
        hac_t_stats,
        ols_std_errors,
        r_squared,
        adj_r_squared,
        lag,
        n,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::JumpEvent;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unit_intensity_gives_unit_residuals() {
        let d = IntensityDynamics { kappa_plus: 1.0, kappa_minus: 1.0, theta_plus: 1.0, theta_minus: 1.0, beta: [[0.0; 2]; 2] };
        let events: Vec<JumpEvent> = (1..=5).map(|i| JumpEvent { t: i as f64, size: 0.05, sign: Side::Positive }).collect();
        let qq = time_change_residuals(&d, &EventSeries::new(events, 6.0).unwrap(), None, None);
        for p in &qq.plus.points {
            assert_abs_diff_eq!(p.sample, 1.0, epsilon = 1e-15);
        }
        assert!(qq.minus.points.is_empty());
    }

    #[test]
    fn carry_identities() {
        assert_eq!(cost_of_carry(100.0, 100.0, 0.5), 0.0);
        assert_abs_diff_eq!(cost_of_carry(105.0, 100.0, 1.0), 1.05_f64.ln(), epsilon = 1e-16);
        assert_abs_diff_eq!(cost_of_carry(100.0 * (0.3_f64 * 0.25).exp(), 100.0, 0.25), 0.3, epsilon = 1e-14);
    }

    #[test]
    fn exact_fit_without_intercept() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r = hac_regression(&y, &[x], false, Some(2)).unwrap();
        assert_abs_diff_eq!(r.coefficients[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.adj_r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn collinear_regressors_are_rank_deficient() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let x2: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let y = x.clone();
        assert!(matches!(hac_regression(&y, &[x, x2], true, Some(1)), Err(Error::RankDeficient)));
    }

    #[test]
    fn default_lag_formula() {
        assert_eq!(default_lag(100), 4);
        assert_eq!(default_lag(500), (4.0 * 5.0_f64.powf(2.0 / 9.0)).floor() as usize);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let xs: Vec<f64> = (1..=n).map(|i| -(1.0 - (i as f64 - 0.5) / n as f64).ln()).collect();
        assert!(ks_exponential(&xs) <= 0.5 / n as f64 + 1e-12);
    }
}
