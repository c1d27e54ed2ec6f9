//! Change of measure from the statistical to the risk-neutral dynamics.
//!
//! Two external parameters `chi+`, `chi-` pin down the Radon-Nikodym density.
//! Intensities are scaled by `L(+)(-chi+)` and `L(-)(-chi-)`, jump laws are
//! exponentially tilted, and the internal parameters of the density process
//! solve a 5x5 linear system whose coefficient matrix has unit determinant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::model::{IntensityDynamics, IntensityState, JumpLaw, ModelParams};

/// Margin kept from the boundary of the admissible tilt region.
pub const CHI_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskPremiumParams {
    pub chi_plus: f64,
    pub chi_minus: f64,
}

impl RiskPremiumParams {
    pub fn new(chi_plus: f64, chi_minus: f64) -> Self {
        Self { chi_plus, chi_minus }
    }

    /// Admissible interval `(lower, upper)` for each tilt given the laws.
    ///
    /// The upper bound on `chi+` also keeps the tilted positive scale below
    /// one, so the risk-neutral compensator stays finite.
    pub fn admissible_region(law_plus: &JumpLaw, law_minus: &JumpLaw) -> [(f64, f64); 2] {
        let ep = law_plus.eta();
        let em = law_minus.eta();
        let upper_plus = (1.0 / ep).min((1.0 - ep) / ep) - CHI_MARGIN;
        let lower_minus = -1.0 / em + CHI_MARGIN;
        [(f64::NEG_INFINITY, upper_plus), (lower_minus, f64::INFINITY)]
    }

    pub fn validate(&self, law_plus: &JumpLaw, law_minus: &JumpLaw) -> Result<()> {
        if !self.chi_plus.is_finite() || !self.chi_minus.is_finite() {
            return Err(Error::domain("risk-premium parameters must be finite"));
        }
        let [(_, up), (lo, _)] = Self::admissible_region(law_plus, law_minus);
        if self.chi_plus >= up {
            return Err(Error::domain(format!(
                "chi+ = {} must be below {up}",
                self.chi_plus
            )));
        }
        if self.chi_minus <= lo {
            return Err(Error::domain(format!(
                "chi- = {} must be above {lo}",
                self.chi_minus
            )));
        }
        Ok(())
    }
}

/// Internal parameters of the density process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureChangeSolution {
    pub xi_plus: f64,
    pub xi_minus: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub c: f64,
    /// Determinant of the coefficient matrix (one in exact arithmetic).
    pub determinant: f64,
    /// Max-norm residual of the solved system.
    pub residual: f64,
}

/// Risk-neutral parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QParams {
    pub r: f64,
    pub sigma: f64,
    pub dynamics: IntensityDynamics,
    pub law_plus: JumpLaw,
    pub law_minus: JumpLaw,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub chi: RiskPremiumParams,
    /// Intensity multipliers `(L(+)(-chi+), L(-)(-chi-))`.
    pub multipliers: [f64; 2],
}

impl QParams {
    /// The risk-neutral model expressed as a parameter record with drift `r`.
    pub fn as_model(&self) -> ModelParams {
        ModelParams::new_unchecked(
            self.r,
            self.sigma,
            self.dynamics,
            self.law_plus,
            self.law_minus,
            [self.lambda_plus, self.lambda_minus],
        )
    }

    pub fn lambda(&self) -> [f64; 2] {
        [self.lambda_plus, self.lambda_minus]
    }

    /// Same parameters with the risk-neutral state taken from a statistical
    /// intensity state.
    pub fn with_physical_state(mut self, state: &IntensityState) -> Self {
        self.lambda_plus = self.multipliers[0] * state.lambda_plus;
        self.lambda_minus = self.multipliers[1] * state.lambda_minus;
        self
    }
}

fn multipliers(params: &ModelParams, chi: &RiskPremiumParams) -> Result<[f64; 2]> {
    Ok([
        params.law_plus.laplace_real(-chi.chi_plus)?,
        params.law_minus.laplace_real(-chi.chi_minus)?,
    ])
}

/// Coefficient matrix (row-major) of the internal-parameter system.
pub fn coefficient_matrix(params: &ModelParams) -> [f64; 25] {
    let d = &params.dynamics;
    let b = d.beta;
    let kt_p = d.kappa_plus * d.theta_plus;
    let kt_m = d.kappa_minus * d.theta_minus;
    [
        1.0 + b[0][0], b[1][0], b[0][0], b[1][0], 0.0,
        b[0][1], 1.0 + b[1][1], b[0][1], b[1][1], 0.0,
        kt_p, kt_m, kt_p, kt_m, 1.0,
        1.0, 0.0, 1.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 1.0, 0.0,
    ]
}

pub fn solve_internal(params: &ModelParams, chi: &RiskPremiumParams) -> Result<MeasureChangeSolution> {
    chi.validate(&params.law_plus, &params.law_minus)?;
    let m = multipliers(params, chi)?;
    let d = &params.dynamics;
    let a = coefficient_matrix(params);
    let rhs = [
        chi.chi_plus,
        chi.chi_minus,
        0.0,
        (m[0] - 1.0) / d.kappa_plus,
        (m[1] - 1.0) / d.kappa_minus,
    ];
    let lu = Lu::factor(&a, 5)?;
    let x = lu.solve(&rhs);
    let residual = crate::linalg::mat_vec(&a, &x)
        .iter()
        .zip(&rhs)
        .fold(0.0_f64, |acc, (l, r)| acc.max((l - r).abs()));
    Ok(MeasureChangeSolution {
        xi_plus: x[0],
        xi_minus: x[1],
        c_plus: x[2],
        c_minus: x[3],
        c: x[4],
        determinant: lu.determinant(),
        residual,
    })
}

/// Residuals of the martingale conditions and of the tilt definitions at a
/// solved internal parameter set, in the order
/// `[drift, positive compensator, negative compensator, chi+, chi-]`.
///
/// The linear risk-premium functions are `q1± = c± + xi±` and the
/// time-drift coefficient is `c`.
pub fn martingale_residuals(
    params: &ModelParams,
    chi: &RiskPremiumParams,
    sol: &MeasureChangeSolution,
) -> Result<[f64; 5]> {
    let d = &params.dynamics;
    let m = multipliers(params, chi)?;
    let q1p = sol.c_plus + sol.xi_plus;
    let q1m = sol.c_minus + sol.xi_minus;
    let q2 = sol.c;
    let b = d.beta;
    Ok([
        q1p * d.kappa_plus * d.theta_plus + q1m * d.kappa_minus * d.theta_minus + q2,
        m[0] - 1.0 - q1p * d.kappa_plus,
        m[1] - 1.0 - q1m * d.kappa_minus,
        q1p * b[0][0] + q1m * b[1][0] + sol.xi_plus - chi.chi_plus,
        q1p * b[0][1] + q1m * b[1][1] + sol.xi_minus - chi.chi_minus,
    ])
}

/// Risk-neutral parameters at the statistical intensity `state`.
pub fn to_q_params(
    params: &ModelParams,
    chi: &RiskPremiumParams,
    r: f64,
    state: &IntensityState,
) -> Result<QParams> {
    chi.validate(&params.law_plus, &params.law_minus)?;
    let m = multipliers(params, chi)?;
    let d = &params.dynamics;
    let dynamics = IntensityDynamics {
        kappa_plus: d.kappa_plus,
        kappa_minus: d.kappa_minus,
        theta_plus: m[0] * d.theta_plus,
        theta_minus: m[1] * d.theta_minus,
        beta: [
            [m[0] * d.beta[0][0], m[0] * d.beta[0][1]],
            [m[1] * d.beta[1][0], m[1] * d.beta[1][1]],
        ],
    };
    Ok(QParams {
        r,
        sigma: params.sigma,
        dynamics,
        law_plus: params.law_plus.esscher(chi.chi_plus)?,
        law_minus: params.law_minus.esscher(chi.chi_minus)?,
        lambda_plus: m[0] * state.lambda_plus,
        lambda_minus: m[1] * state.lambda_minus,
        chi: *chi,
        multipliers: m,
    })
}

/// Market price of diffusion risk at `state`.
pub fn phi_process(
    params: &ModelParams,
    chi: &RiskPremiumParams,
    r: f64,
    state: &IntensityState,
) -> Result<f64> {
    if !(params.sigma > 0.0) {
        return Err(Error::domain("sigma must be positive"));
    }
    let (gp, gm) = jump_risk_premia(params, chi, state)?;
    // each bracket is minus the corresponding premium
    Ok((params.mu - r) / params.sigma + gp / params.sigma + gm / params.sigma)
}

/// Jump risk premia `(gamma+, gamma-)`: risk-neutral minus statistical jump
/// compensators, annualized.
pub fn jump_risk_premia(
    params: &ModelParams,
    chi: &RiskPremiumParams,
    state: &IntensityState,
) -> Result<(f64, f64)> {
    let q = to_q_params(params, chi, 0.0, state)?;
    let comp_p = params.compensators()?;
    let comp_q = [q.law_plus.compensator()?, q.law_minus.compensator()?];
    Ok((
        q.lambda_plus * comp_q[0] - state.lambda_plus * comp_p[0],
        q.lambda_minus * comp_q[1] - state.lambda_minus * comp_p[1],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PremiaPoint {
    pub t: f64,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

pub fn premia_series(
    params: &ModelParams,
    chi: &RiskPremiumParams,
    states: &[IntensityState],
) -> Result<Vec<PremiaPoint>> {
    states
        .iter()
        .map(|s| {
            let (gamma_plus, gamma_minus) = jump_risk_premia(params, chi, s)?;
            Ok(PremiaPoint {
                t: s.t,
                lambda_plus: s.lambda_plus,
                lambda_minus: s.lambda_minus,
                gamma_plus,
                gamma_minus,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests_support::sample_params;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_tilt_gives_zero_solution_and_identity_map() {
        let p = sample_params();
        let chi = RiskPremiumParams::default();
        let sol = solve_internal(&p, &chi).unwrap();
        for v in [sol.xi_plus, sol.xi_minus, sol.c_plus, sol.c_minus, sol.c] {
            assert_eq!(v, 0.0);
        }
        let state = IntensityState::new(0.0, 14.0, 9.0);
        let q = to_q_params(&p, &chi, 0.03, &state).unwrap();
        let expected = ModelParams { mu: 0.03, ..p.with_state(&state) };
        assert_eq!(q.as_model(), expected);
        assert_eq!(jump_risk_premia(&p, &chi, &state).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn esscher_example_values() {
        let mut p = sample_params();
        p.law_plus = JumpLaw::positive(0.03, 0.02).unwrap();
        let chi = RiskPremiumParams::new(10.0, 0.0);
        let q = to_q_params(&p, &chi, 0.0, &p.initial_state()).unwrap();
        assert_abs_diff_eq!(q.law_plus.eta(), 0.025, epsilon = 1e-15);
        assert_abs_diff_eq!(q.multipliers[0], 0.3_f64.exp() / 0.8, epsilon = 1e-13);
    }

    #[test]
    fn phi_reduces_to_sharpe_ratio_without_tilt() {
        let mut p = sample_params();
        let chi = RiskPremiumParams::default();
        let s = p.initial_state();
        p.mu = 0.05;
        assert_abs_diff_eq!(phi_process(&p, &chi, 0.05, &s).unwrap(), 0.0, epsilon = 1e-15);
        p.mu = 0.1;
        p.sigma = 0.5;
        assert_abs_diff_eq!(phi_process(&p, &chi, 0.0, &s).unwrap(), 0.2, epsilon = 1e-15);
    }

    #[test]
    fn premium_closed_form_chain() {
        let mut p = sample_params();
        p.law_plus = JumpLaw::new_unchecked(crate::model::Side::Positive, 0.0, 0.1);
        let state = IntensityState::new(0.0, 2.0, 3.0);
        let (gp, gm) = jump_risk_premia(&p, &RiskPremiumParams::new(2.0, 0.0), &state).unwrap();
        let expected = 2.0 * 1.25 * (1.0 / 0.875 - 1.0) - 2.0 * (1.0 / 0.9 - 1.0);
        assert_abs_diff_eq!(gp, expected, epsilon = 1e-14);
        assert_eq!(gm, 0.0);
        assert!(gp > 0.0);
    }

    #[test]
    fn tilt_outside_region_is_rejected() {
        let p = sample_params();
        assert!(solve_internal(&p, &RiskPremiumParams::new(1.0 / 0.02, 0.0)).is_err());
        assert!(solve_internal(&p, &RiskPremiumParams::new(0.0, -1.0 / 0.025)).is_err());
        assert!(to_q_params(&p, &RiskPremiumParams::new(f64::NAN, 0.0), 0.0, &p.initial_state()).is_err());
    }
}
