//! Exponential-affine moment generating function of `(X_T, lambda+_T, lambda-_T)`.
//!
//! `E[exp(w X_T + w+ lambda+_T + w- lambda-_T) | X_t = x, lambda_t]
//!  = exp(A(tau) + w x + C(tau) lambda+ + D(tau) lambda-)` with, in
//! time-to-maturity `tau`,
//!
//! ```text
//! A' = mu w + sigma^2/2 (w^2 - w) + kappa+ theta+ C + kappa- theta- D
//! C' = L+(-w - beta11 C - beta21 D) - 1 - kappa+ C - w E(e^J+ - 1)
//! D' = L-(-w - beta12 C - beta22 D) - 1 - kappa- D - w E(e^J- - 1)
//! ```
//!
//! and `A(0) = 0, C(0) = w+, D(0) = w-`. Risk-neutral coefficients come from
//! the same system applied to the transformed parameters.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdeConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-11, min_step: 1e-14, max_steps: 200_000 }
    }
}

/// `(A, C, D)` at one time-to-maturity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCoefficients {
    pub tau: f64,
    pub a: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl AffineCoefficients {
    /// `exp(A + w x + C l+ + D l-)`.
    pub fn evaluate(&self, omega: Complex64, x: f64, lambda: [f64; 2]) -> Complex64 {
        (self.a + omega * x + self.c * lambda[0] + self.d * lambda[1]).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub omega: Complex64,
    pub omega_plus: Complex64,
    pub omega_minus: Complex64,
    /// One entry per requested maturity, in request order.
    pub points: Vec<AffineCoefficients>,
}

type State = [Complex64; 3];

struct Rhs<'a> {
    model: &'a ModelParams,
    omega: Complex64,
    drift_term: Complex64,
    comp_term: [Complex64; 2],
}

impl<'a> Rhs<'a> {
    fn new(model: &'a ModelParams, omega: Complex64) -> Result<Self> {
        // same evaluation path as `eval`, so the right-hand side vanishes
        // exactly at the martingale point
        let one = Complex64::new(-1.0, 0.0);
        let comp = [model.law_plus.laplace(one)? - 1.0, model.law_minus.laplace(one)? - 1.0];
        let s2 = model.sigma * model.sigma;
        Ok(Self {
            model,
            omega,
            drift_term: model.mu * omega + 0.5 * s2 * (omega * omega - omega),
            comp_term: [omega * comp[0], omega * comp[1]],
        })
    }

    fn eval(&self, y: &State) -> Result<State> {
        let d = &self.model.dynamics;
        let b = d.beta;
        let (c, dd) = (y[1], y[2]);
        let arg_plus = -self.omega - b[0][0] * c - b[1][0] * dd;
        let arg_minus = -self.omega - b[0][1] * c - b[1][1] * dd;
        let lp = self.model.law_plus.laplace(arg_plus)?;
        let lm = self.model.law_minus.laplace(arg_minus)?;
        Ok([
            self.drift_term + d.kappa_plus * d.theta_plus * c + d.kappa_minus * d.theta_minus * dd,
            lp - 1.0 - d.kappa_plus * c - self.comp_term[0],
            lm - 1.0 - d.kappa_minus * dd - self.comp_term[1],
        ])
    }
}

// Dormand-Prince 5(4) tableau; the system is autonomous so stage times are unused
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 - -92097.0 / 339200.0;
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &State, terms: &[(f64, &State)], h: f64) -> State {
    let mut out = *y;
    for (coef, k) in terms {
        for i in 0..3 {
            out[i] += h * coef * k[i];
        }
    }
    out
}

/// One Dormand-Prince step. Returns the 5th-order state, the error estimate
/// and the derivative at the new point (FSAL).
fn dopri_step(rhs: &Rhs<'_>, y: &State, k1: &State, h: f64) -> Result<(State, State, State)> {
    let k2 = rhs.eval(&axpy(y, &[(A21, k1)], h))?;
    let k3 = rhs.eval(&axpy(y, &[(A31, k1), (A32, &k2)], h))?;
    let k4 = rhs.eval(&axpy(y, &[(A41, k1), (A42, &k2), (A43, &k3)], h))?;
    let k5 = rhs.eval(&axpy(y, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)], h))?;
    let k6 = rhs.eval(&axpy(y, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h))?;
    let y_new = axpy(y, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
    let k7 = rhs.eval(&y_new)?;
    let mut err = [Complex64::new(0.0, 0.0); 3];
    for i in 0..3 {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok((y_new, err, k7))
}

/// Integrates the affine ODE system and reports `(A, C, D)` at each `tau` in
/// `taus` (any order, all `>= 0`).
pub fn solve_mgf_odes(
    model: &ModelParams,
    omega: Complex64,
    omega_plus: Complex64,
    omega_minus: Complex64,
    taus: &[f64],
    cfg: &OdeConfig,
) -> Result<OdeSolution> {
    if taus.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::invalid("maturities must be finite and non-negative"));
    }
    let rhs = Rhs::new(model, omega)?;
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&a, &b| taus[a].total_cmp(&taus[b]));

    let zero = Complex64::new(0.0, 0.0);
    let mut y: State = [zero, omega_plus, omega_minus];
    let mut t = 0.0;
    let mut points = vec![AffineCoefficients { tau: 0.0, a: zero, c: zero, d: zero }; taus.len()];
    let mut k1 = rhs.eval(&y).map_err(|_| Error::StripViolation { tau: 0.0 })?;
    let t_max = taus.iter().cloned().fold(0.0, f64::max);
    let mut h = (0.01 * t_max).clamp(1e-6, 0.05);
    let mut steps = 0usize;

    for &idx in &order {
        let target = taus[idx];
        while t < target {
            steps += 1;
            if steps > cfg.max_steps {
                return Err(Error::StepFailure { tau: t });
            }
            let remaining = target - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            match dopri_step(&rhs, &y, &k1, step) {
                Ok((y_new, err, k7)) => {
                    let mut norm: f64 = 0.0;
                    for i in 0..3 {
                        let scale = cfg.abs_tol + cfg.rel_tol * y[i].norm().max(y_new[i].norm());
                        norm = norm.max(err[i].norm() / scale);
                    }
                    if norm <= 1.0 {
                        t = if last { target } else { t + step };
                        y = y_new;
                        k1 = k7;
                        let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                        if !last || factor < 1.0 {
                            h = step * factor;
                        }
                    } else {
                        h = step * (0.9 * norm.powf(-0.2)).clamp(0.1, 0.9);
                    }
                }
                Err(Error::Domain(_)) => {
                    h = 0.25 * step;
                    if h < cfg.min_step {
                        return Err(Error::StripViolation { tau: t });
                    }
                    continue;
                }
                Err(e) => return Err(e),
            }
            if h < cfg.min_step {
                return Err(Error::StepFailure { tau: t });
            }
        }
        points[idx] = AffineCoefficients { tau: target, a: y[0], c: y[1], d: y[2] };
    }
    Ok(OdeSolution { omega, omega_plus, omega_minus, points })
}

/// Moment generating function at state `(x, lambda)` and horizon `tau`.
///
/// For risk-neutral valuation pass the transformed model together with the
/// transformed intensities.
#[allow(clippy::too_many_arguments)]
pub fn mgf(
    model: &ModelParams,
    lambda: [f64; 2],
    x: f64,
    omega: Complex64,
    omega_plus: Complex64,
    omega_minus: Complex64,
    tau: f64,
    cfg: &OdeConfig,
) -> Result<Complex64> {
    let sol = solve_mgf_odes(model, omega, omega_plus, omega_minus, &[tau], cfg)?;
    Ok(sol.points[0].evaluate(omega, x, lambda))
}
