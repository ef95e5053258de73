//! Prior densities and unconstrained-coordinate transforms for the GPD
//! parameters and the process hyperparameters.
//!
//! The tail index is parameterized as `alpha = alpha_min + (2 - alpha_min)
//! e^{zeta/1.5}` with standard-logistic `zeta`; the scale gets a half-Cauchy
//! prior and is proposed on the log scale. The process variance never appears
//! as a sampled parameter: it is marginalized into the Student-t prior on the
//! knot field and exists only through `(a_kappa, b_kappa)` here.

use crate::error::{Error, Result};
use crate::gpd::ThetaParam;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PriorConfig {
    pub alpha_min: f64,
    pub a_kappa: f64,
    pub b_kappa: f64,
    pub a_lambda: f64,
    pub b_lambda: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self { alpha_min: 0.5, a_kappa: 1.5, b_kappa: 1.5, a_lambda: 16.0, b_lambda: 2.2 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_min > 0.0 && self.alpha_min < 2.0) {
            return Err(Error::InvalidInput(format!(
                "alpha_min must lie in (0, 2), got {}",
                self.alpha_min
            )));
        }
        for (name, v) in [
            ("a_kappa", self.a_kappa),
            ("b_kappa", self.b_kappa),
            ("a_lambda", self.a_lambda),
            ("b_lambda", self.b_lambda),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `alpha = alpha_min + (2 - alpha_min) e^{zeta/1.5}`.
    pub fn alpha_transform(&self, zeta: f64) -> f64 {
        self.alpha_min + (2.0 - self.alpha_min) * (zeta / 1.5).exp()
    }

    /// Inverse of [`Self::alpha_transform`].
    pub fn alpha_untransform(&self, alpha: f64) -> Result<f64> {
        if alpha <= self.alpha_min {
            return Err(Error::Domain(format!(
                "alpha must exceed alpha_min = {}, got {alpha}",
                self.alpha_min
            )));
        }
        Ok(1.5 * ((alpha - self.alpha_min) / (2.0 - self.alpha_min)).ln())
    }

    /// Map unconstrained coordinates `(zeta, tau = log sigma)` to `theta`.
    pub fn theta_from_unconstrained(&self, zeta: f64, tau: f64) -> ThetaParam {
        ThetaParam { alpha: self.alpha_transform(zeta), sigma: tau.exp() }
    }

    /// Log prior of `(zeta, tau)`: standard-logistic density at `zeta` plus
    /// half-Cauchy density at `sigma = e^tau` with the log-Jacobian of the
    /// log transform.
    pub fn log_prior_theta(&self, zeta: f64, tau: f64) -> f64 {
        let logistic = -zeta - 2.0 * (-zeta).exp().ln_1p();
        let sigma = tau.exp();
        let half_cauchy = (2.0 / std::f64::consts::PI).ln() - (sigma * sigma).ln_1p();
        logistic + half_cauchy + tau
    }
}
