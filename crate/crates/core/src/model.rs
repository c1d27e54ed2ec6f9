//! Parameter and state types for the bivariate Hawkes clustered-jump model.
//!
//! Log-price dynamics under the statistical measure:
//!
//! ```text
//! dX = (mu - sigma^2/2) dt + sigma dW
//!      + J+ dN1 - lambda+ E(e^J+ - 1) dt
//!      + J- dN2 - lambda- E(e^J- - 1) dt
//! d(lambda+, lambda-)' = (kappa+(theta+ - lambda+), kappa-(theta- - lambda-))' dt
//!                        + beta (J+ dN1, J- dN2)'
//! ```
//!
//! Jump sizes follow shifted exponential laws: `J+ = nu+ + eta+ * E` and
//! `J- = nu- - eta- * E` with `E ~ Exp(1)`. All rates are annualized; one
//! calendar day is [`DAYS_PER_YEAR`]⁻¹ years.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Calendar days per year. Crypto markets trade every day.
pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Positive => 0,
            Side::Negative => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Positive => "positive",
            Side::Negative => "negative",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" | "1" => Ok(Side::Positive),
            "negative" | "neg" | "-" | "-1" => Ok(Side::Negative),
            other => Err(Error::invalid(format!("unknown jump sign '{other}'"))),
        }
    }
}

/// Shifted exponential jump-size law for one side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpLaw {
    side: Side,
    nu: f64,
    eta: f64,
}

impl JumpLaw {
    pub fn new(side: Side, nu: f64, eta: f64) -> Result<Self> {
        if !nu.is_finite() || !eta.is_finite() {
            return Err(Error::domain("jump law parameters must be finite"));
        }
        if eta <= 0.0 {
            return Err(Error::domain(format!("jump scale must be positive, got {eta}")));
        }
        match side {
            Side::Positive => {
                if nu <= 0.0 {
                    return Err(Error::domain(format!("positive shift must be > 0, got {nu}")));
                }
                if eta >= 1.0 {
                    return Err(Error::domain(format!(
                        "positive jump scale must be < 1 for a finite compensator, got {eta}"
                    )));
                }
            }
            Side::Negative => {
                if nu >= 0.0 {
                    return Err(Error::domain(format!("negative shift must be < 0, got {nu}")));
                }
            }
        }
        Ok(Self { side, nu, eta })
    }

    pub fn positive(nu: f64, eta: f64) -> Result<Self> {
        Self::new(Side::Positive, nu, eta)
    }

    pub fn negative(nu: f64, eta: f64) -> Result<Self> {
        Self::new(Side::Negative, nu, eta)
    }

    /// Builds a law without checking the shift sign or the compensator bound.
    /// Used for transform identities at degenerate shifts such as `nu = 0`.
    pub fn new_unchecked(side: Side, nu: f64, eta: f64) -> Self {
        Self { side, nu, eta }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn density(&self, j: f64) -> f64 {
        match self.side {
            Side::Positive if j > self.nu => (-(j - self.nu) / self.eta).exp() / self.eta,
            Side::Negative if j < self.nu => ((j - self.nu) / self.eta).exp() / self.eta,
            _ => 0.0,
        }
    }

    /// Laplace transform `E[exp(-omega J)]`.
    pub fn laplace(&self, omega: Complex64) -> Result<Complex64> {
        let denom = match self.side {
            Side::Positive => {
                if (1.0 / self.eta + omega.re) <= 0.0 {
                    return Err(Error::domain(format!(
                        "positive Laplace transform undefined at {omega}"
                    )));
                }
                1.0 + self.eta * omega
            }
            Side::Negative => {
                if omega.re >= 1.0 / self.eta {
                    return Err(Error::domain(format!(
                        "negative Laplace transform undefined at {omega}"
                    )));
                }
                1.0 - self.eta * omega
            }
        };
        Ok((-self.nu * omega).exp() / denom)
    }

    pub fn laplace_real(&self, omega: f64) -> Result<f64> {
        self.laplace(Complex64::new(omega, 0.0)).map(|z| z.re)
    }

    /// `E[e^J - 1]`.
    pub fn compensator(&self) -> Result<f64> {
        match self.side {
            Side::Positive => {
                if self.eta >= 1.0 {
                    return Err(Error::domain(format!(
                        "positive compensator infinite for eta={}",
                        self.eta
                    )));
                }
                Ok(self.nu.exp() / (1.0 - self.eta) - 1.0)
            }
            Side::Negative => Ok(self.nu.exp() / (1.0 + self.eta) - 1.0),
        }
    }

    pub fn mean(&self) -> f64 {
        match self.side {
            Side::Positive => self.nu + self.eta,
            Side::Negative => self.nu - self.eta,
        }
    }

    /// Exponentially tilted law with density proportional to `e^{chi j} w(j)`.
    ///
    /// The shift is unchanged; the scale becomes `eta / (1 - eta chi)` on the
    /// positive side and `eta / (1 + eta chi)` on the negative side.
    pub fn esscher(&self, chi: f64) -> Result<JumpLaw> {
        let factor = match self.side {
            Side::Positive => 1.0 - self.eta * chi,
            Side::Negative => 1.0 + self.eta * chi,
        };
        if !(factor > 0.0) {
            return Err(Error::domain(format!(
                "tilt chi={chi} outside the admissible region for eta={}",
                self.eta
            )));
        }
        let eta = self.eta / factor;
        if self.side == Side::Positive && eta >= 1.0 {
            return Err(Error::domain(format!(
                "tilt chi={chi} makes the positive compensator infinite (eta={eta})"
            )));
        }
        Ok(JumpLaw { side: self.side, nu: self.nu, eta })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(Exp1);
        match self.side {
            Side::Positive => self.nu + self.eta * e,
            Side::Negative => self.nu - self.eta * e,
        }
    }
}

/// Mean reversion and excitation of the intensity pair.
///
/// `beta[i][j]` is the response of intensity `i` (0 = positive, 1 = negative)
/// to a jump of side `j`, per unit jump size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityDynamics {
    pub kappa_plus: f64,
    pub kappa_minus: f64,
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub beta: [[f64; 2]; 2],
}

impl IntensityDynamics {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.kappa_plus,
            self.kappa_minus,
            self.theta_plus,
            self.theta_minus,
            self.beta[0][0],
            self.beta[0][1],
            self.beta[1][0],
            self.beta[1][1],
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("intensity parameters must be finite"));
        }
        if self.kappa_plus <= 0.0 || self.kappa_minus <= 0.0 {
            return Err(Error::domain("mean-reversion rates must be positive"));
        }
        if self.theta_plus <= 0.0 || self.theta_minus <= 0.0 {
            return Err(Error::domain("long-run intensities must be positive"));
        }
        self.check_sign_pattern()
    }

    /// Positive jumps must excite (beta_11, beta_21 >= 0) and negative jumps
    /// must excite through non-positive loadings (beta_12, beta_22 <= 0).
    pub fn check_sign_pattern(&self) -> Result<()> {
        if self.beta[0][0] < 0.0 || self.beta[1][0] < 0.0 {
            return Err(Error::domain("beta_11 and beta_21 must be non-negative"));
        }
        if self.beta[0][1] > 0.0 || self.beta[1][1] > 0.0 {
            return Err(Error::domain("beta_12 and beta_22 must be non-positive"));
        }
        Ok(())
    }

    pub fn kappa(&self) -> [f64; 2] {
        [self.kappa_plus, self.kappa_minus]
    }

    pub fn theta(&self) -> [f64; 2] {
        [self.theta_plus, self.theta_minus]
    }

    /// Deterministic relaxation towards theta over `dt` with no events.
    pub fn decay(&self, lambda: [f64; 2], dt: f64) -> [f64; 2] {
        let k = self.kappa();
        let th = self.theta();
        [
            th[0] + (-k[0] * dt).exp() * (lambda[0] - th[0]),
            th[1] + (-k[1] * dt).exp() * (lambda[1] - th[1]),
        ]
    }

    /// Closed-form integral of each intensity over `[0, dt]` starting from
    /// `lambda` with no events in between.
    pub fn integrate(&self, lambda: [f64; 2], dt: f64) -> [f64; 2] {
        let k = self.kappa();
        let th = self.theta();
        let piece = |i: usize| th[i] * dt + (lambda[i] - th[i]) * (-(-k[i] * dt).exp_m1()) / k[i];
        [piece(0), piece(1)]
    }

    /// Post-event intensities after a jump of `size` on `side`.
    pub fn excite(&self, lambda: [f64; 2], side: Side, size: f64) -> [f64; 2] {
        let col = side.index();
        [
            lambda[0] + self.beta[0][col] * size,
            lambda[1] + self.beta[1][col] * size,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityState {
    pub t: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
}

impl IntensityState {
    pub fn new(t: f64, lambda_plus: f64, lambda_minus: f64) -> Self {
        Self { t, lambda_plus, lambda_minus }
    }

    pub fn lambda(&self) -> [f64; 2] {
        [self.lambda_plus, self.lambda_minus]
    }

    pub fn from_pair(t: f64, lambda: [f64; 2]) -> Self {
        Self::new(t, lambda[0], lambda[1])
    }
}

/// Full parameter record under the statistical measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlatModelParams", into = "FlatModelParams")]
pub struct ModelParams {
    pub mu: f64,
    pub sigma: f64,
    pub dynamics: IntensityDynamics,
    pub law_plus: JumpLaw,
    pub law_minus: JumpLaw,
    pub lambda0_plus: f64,
    pub lambda0_minus: f64,
}

impl ModelParams {
    /// Validated constructor: field invariants plus the sufficient
    /// finite-mean-intensity condition.
    pub fn new(
        mu: f64,
        sigma: f64,
        dynamics: IntensityDynamics,
        law_plus: JumpLaw,
        law_minus: JumpLaw,
        lambda0: [f64; 2],
    ) -> Result<Self> {
        let params = Self::new_unchecked(mu, sigma, dynamics, law_plus, law_minus, lambda0);
        params.validate()?;
        let report = stationarity_check(&params)?;
        if !report.sufficient_ok {
            return Err(Error::domain(
                "mean-reversion rates do not dominate expected excitation",
            ));
        }
        Ok(params)
    }

    /// No invariant checks; for stress tests and degenerate reductions such
    /// as zero long-run intensity.
    pub fn new_unchecked(
        mu: f64,
        sigma: f64,
        dynamics: IntensityDynamics,
        law_plus: JumpLaw,
        law_minus: JumpLaw,
        lambda0: [f64; 2],
    ) -> Self {
        Self {
            mu,
            sigma,
            dynamics,
            law_plus,
            law_minus,
            lambda0_plus: lambda0[0],
            lambda0_minus: lambda0[1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.mu.is_finite() || !self.sigma.is_finite() {
            return Err(Error::domain("sigma must be positive and mu finite"));
        }
        if !(self.lambda0_plus >= 0.0) || !(self.lambda0_minus >= 0.0) {
            return Err(Error::domain("initial intensities must be non-negative"));
        }
        if self.law_plus.side() != Side::Positive || self.law_minus.side() != Side::Negative {
            return Err(Error::domain("jump laws attached to the wrong side"));
        }
        self.dynamics.validate()
    }

    pub fn lambda0(&self) -> [f64; 2] {
        [self.lambda0_plus, self.lambda0_minus]
    }

    pub fn law(&self, side: Side) -> &JumpLaw {
        match side {
            Side::Positive => &self.law_plus,
            Side::Negative => &self.law_minus,
        }
    }

    pub fn initial_state(&self) -> IntensityState {
        IntensityState::new(0.0, self.lambda0_plus, self.lambda0_minus)
    }

    pub fn with_state(mut self, state: &IntensityState) -> Self {
        self.lambda0_plus = state.lambda_plus;
        self.lambda0_minus = state.lambda_minus;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Jump compensators `(E(e^J+ - 1), E(e^J- - 1))`.
    pub fn compensators(&self) -> Result<[f64; 2]> {
        Ok([self.law_plus.compensator()?, self.law_minus.compensator()?])
    }
}

/// Flat JSON representation of [`ModelParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FlatModelParams {
    mu: f64,
    sigma: f64,
    kappa_plus: f64,
    kappa_minus: f64,
    theta_plus: f64,
    theta_minus: f64,
    beta_11: f64,
    beta_12: f64,
    beta_21: f64,
    beta_22: f64,
    nu_plus: f64,
    eta_plus: f64,
    nu_minus: f64,
    eta_minus: f64,
    lambda0_plus: f64,
    lambda0_minus: f64,
}

impl TryFrom<FlatModelParams> for ModelParams {
    type Error = Error;

    fn try_from(f: FlatModelParams) -> Result<Self> {
        let dynamics = IntensityDynamics {
            kappa_plus: f.kappa_plus,
            kappa_minus: f.kappa_minus,
            theta_plus: f.theta_plus,
            theta_minus: f.theta_minus,
            beta: [[f.beta_11, f.beta_12], [f.beta_21, f.beta_22]],
        };
        Ok(ModelParams::new_unchecked(
            f.mu,
            f.sigma,
            dynamics,
            JumpLaw::positive(f.nu_plus, f.eta_plus)?,
            JumpLaw::negative(f.nu_minus, f.eta_minus)?,
            [f.lambda0_plus, f.lambda0_minus],
        ))
    }
}

impl From<ModelParams> for FlatModelParams {
    fn from(p: ModelParams) -> Self {
        let d = p.dynamics;
        FlatModelParams {
            mu: p.mu,
            sigma: p.sigma,
            kappa_plus: d.kappa_plus,
            kappa_minus: d.kappa_minus,
            theta_plus: d.theta_plus,
            theta_minus: d.theta_minus,
            beta_11: d.beta[0][0],
            beta_12: d.beta[0][1],
            beta_21: d.beta[1][0],
            beta_22: d.beta[1][1],
            nu_plus: p.law_plus.nu(),
            eta_plus: p.law_plus.eta(),
            nu_minus: p.law_minus.nu(),
            eta_minus: p.law_minus.eta(),
            lambda0_plus: p.lambda0_plus,
            lambda0_minus: p.lambda0_minus,
        }
    }
}

/// Result of the finite-expected-intensity analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    /// Diagonal-dominance condition on the mean-intensity drift matrix.
    pub sufficient_ok: bool,
    pub eigenvalues: [Complex64; 2],
    /// `-Phi^{-1} C`, present only when both eigenvalues have negative real part.
    pub asymptotic_mean: Option<[f64; 2]>,
}

/// Drift matrix `Phi` and constant `C` of the mean-intensity ODE
/// `d E[lambda] / dt = Phi E[lambda] + C`.
pub fn mean_intensity_system(params: &ModelParams) -> ([[f64; 2]; 2], [f64; 2]) {
    let d = &params.dynamics;
    let ej_plus = params.law_plus.mean();
    let ej_minus = params.law_minus.mean();
    let phi = [
        [-d.kappa_plus + d.beta[0][0] * ej_plus, d.beta[0][1] * ej_minus],
        [d.beta[1][0] * ej_plus, -d.kappa_minus + d.beta[1][1] * ej_minus],
    ];
    let c = [d.kappa_plus * d.theta_plus, d.kappa_minus * d.theta_minus];
    (phi, c)
}

fn eigenvalues_2x2(m: &[[f64; 2]; 2]) -> [Complex64; 2] {
    let half_trace = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let q = Complex64::new(half_trace * half_trace - det, 0.0).sqrt();
    let s = Complex64::new(half_trace, 0.0);
    [s + q, s - q]
}

pub fn stationarity_check(params: &ModelParams) -> Result<StationarityReport> {
    let (phi, c) = mean_intensity_system(params);
    let d = &params.dynamics;
    let ej = [params.law_plus.mean(), params.law_minus.mean()];
    let sufficient_ok = d.kappa_plus >= d.beta[0][0] * ej[0] + d.beta[0][1] * ej[1]
        && d.kappa_minus >= d.beta[1][0] * ej[0] + d.beta[1][1] * ej[1];

    let det = phi[0][0] * phi[1][1] - phi[0][1] * phi[1][0];
    let scale = phi.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    if det.abs() <= 1e-14 * scale * scale {
        return Err(Error::SingularMatrix(format!("mean-intensity drift matrix has det={det}")));
    }
    let eigenvalues = eigenvalues_2x2(&phi);
    let asymptotic_mean = if eigenvalues.iter().all(|z| z.re < 0.0) {
        let inv = [[phi[1][1] / det, -phi[0][1] / det], [-phi[1][0] / det, phi[0][0] / det]];
        Some([
            -(inv[0][0] * c[0] + inv[0][1] * c[1]),
            -(inv[1][0] * c[0] + inv[1][1] * c[1]),
        ])
    } else {
        None
    };
    Ok(StationarityReport { sufficient_ok, eigenvalues, asymptotic_mean })
}

/// `exp(Phi t)` for a real 2x2 matrix via Cayley-Hamilton.
fn expm_2x2(m: &[[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let s = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let q = Complex64::new(s * s - det, 0.0).sqrt();
    let qt = q * t;
    let cosh = qt.cosh().re;
    // sinh(qt)/q, continuous at q = 0
    let sinhc = if qt.norm() < 1e-8 {
        t * (1.0 + (qt * qt).re / 6.0)
    } else {
        (qt.sinh() / q).re
    };
    let e = (s * t).exp();
    [
        [e * (cosh + sinhc * (m[0][0] - s)), e * sinhc * m[0][1]],
        [e * sinhc * m[1][0], e * (cosh + sinhc * (m[1][1] - s))],
    ]
}

/// Conditional mean of the intensity pair `t` years after `state`.
pub fn expected_intensity(params: &ModelParams, from: [f64; 2], t: f64) -> Result<[f64; 2]> {
    let (phi, c) = mean_intensity_system(params);
    let det = phi[0][0] * phi[1][1] - phi[0][1] * phi[1][0];
    if det.abs() < 1e-300 {
        return Err(Error::SingularMatrix("mean-intensity drift matrix".into()));
    }
    let e = expm_2x2(&phi, t);
    let inv = [[phi[1][1] / det, -phi[0][1] / det], [-phi[1][0] / det, phi[0][0] / det]];
    let em_i_c = [
        (e[0][0] - 1.0) * c[0] + e[0][1] * c[1],
        e[1][0] * c[0] + (e[1][1] - 1.0) * c[1],
    ];
    Ok([
        e[0][0] * from[0] + e[0][1] * from[1] + inv[0][0] * em_i_c[0] + inv[0][1] * em_i_c[1],
        e[1][0] * from[0] + e[1][1] * from[1] + inv[1][0] * em_i_c[0] + inv[1][1] * em_i_c[1],
    ])
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    pub(crate) fn sample_params() -> ModelParams {
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
}
