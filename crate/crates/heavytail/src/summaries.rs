//! Posterior summaries: tail index estimates and intervals, high tail
//! quantiles, density curves and return periods.
//!
//! Tail quantiles use the composition `F(y) = Psi(G_theta(y))`, so
//! `Qbar(p) = G_theta^{-1}(Psi^{-1}(1 - p)) + a` where `a` is the support
//! shift recorded with the dataset.

use crate::error::{Error, Result};
use crate::gpd::{self, ThetaParam};
use crate::grid_density::GridDensity;
use crate::model::ChainState;
use crate::parallel::maybe_par_map;
use crate::sampler::PosteriorDraws;
use crate::{lowrank::LambdaGrid, priors::PriorConfig};

/// Point estimate and equal-tailed 95% interval for one exceedance level.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct QuantileReport {
    pub p: f64,
    pub estimate: f64,
    pub lower95: f64,
    pub upper95: f64,
}

/// Point estimate and equal-tailed 95% interval for a return level.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReturnPeriodReport {
    pub level: f64,
    pub years: f64,
    pub lower95: f64,
    pub upper95: f64,
}

/// Per-draw density components derived from the chain state.
#[derive(Debug, Clone)]
pub struct DrawDensity {
    pub theta: ThetaParam,
    pub psi: GridDensity,
}

impl DrawDensity {
    pub fn from_state(
        state: &ChainState,
        lambda_grid: &LambdaGrid,
        grid: &crate::grid_density::Grid,
        prior: &PriorConfig,
    ) -> Result<Self> {
        let omega_t =
            lambda_grid.predictive_project(&state.omega_s, prior.a_kappa, prior.b_kappa)?;
        let psi = GridDensity::logistic_transform(&omega_t, grid)?;
        Ok(Self { theta: state.theta(prior), psi })
    }

    /// Upper tail quantile at exceedance probability `p`, shifted back to the
    /// original support.
    pub fn tail_quantile(&self, p: f64, support_shift: f64) -> Result<f64> {
        if !(0.0 < p && p < 1.0) {
            return Err(Error::Domain(format!("tail_quantile requires p in (0,1), got {p}")));
        }
        let u = self.psi.quantile(1.0 - p)?;
        if u >= 1.0 {
            return Err(Error::Numerical(format!("p = {p} underflows the grid resolution")));
        }
        Ok(gpd::gpd_quantile(self.theta, u)? + support_shift)
    }

    /// Model survival function at a level on the original support.
    pub fn survival(&self, y: f64, support_shift: f64) -> Result<f64> {
        let z = y - support_shift;
        if z <= 0.0 {
            return Err(Error::Domain(format!("level {y} is below the support shift")));
        }
        Ok(1.0 - self.psi.cdf(gpd::gpd_cdf(self.theta, z)?)?)
    }

    /// Model density at a level on the original support.
    pub fn density(&self, y: f64, support_shift: f64) -> Result<f64> {
        let z = y - support_shift;
        if z < 0.0 {
            return Ok(0.0);
        }
        Ok(gpd::gpd_pdf(self.theta, z)? * self.psi.eval(gpd::gpd_cdf(self.theta, z)?)?)
    }
}

/// Materialize density components for every retained draw.
pub fn draw_densities(
    draws: &PosteriorDraws,
    lambda_grid: &LambdaGrid,
    grid: &crate::grid_density::Grid,
    prior: &PriorConfig,
) -> Result<Vec<DrawDensity>> {
    maybe_par_map(&draws.states, |s| DrawDensity::from_state(s, lambda_grid, grid, prior))
        .into_iter()
        .collect()
}

/// Empirical quantile of a sample (linear interpolation on sorted order).
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Posterior mean and equal-tailed 95% interval.
pub fn mean_and_interval(xs: &[f64]) -> (f64, f64, f64) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let s = sorted_copy(xs);
    (mean, empirical_quantile(&s, 0.025), empirical_quantile(&s, 0.975))
}

/// Posterior median and equal-tailed 95% interval.
pub fn median_and_interval(xs: &[f64]) -> (f64, f64, f64) {
    let s = sorted_copy(xs);
    (
        empirical_quantile(&s, 0.5),
        empirical_quantile(&s, 0.025),
        empirical_quantile(&s, 0.975),
    )
}

/// Posterior mean of `xi` with its equal-tailed 95% interval.
pub fn xi_summary(draws: &PosteriorDraws) -> (f64, f64, f64) {
    mean_and_interval(&draws.xi)
}

/// Per-level tail quantile reports (posterior median point estimates).
pub fn quantile_report(
    densities: &[DrawDensity],
    p_list: &[f64],
    support_shift: f64,
) -> Result<Vec<QuantileReport>> {
    p_list
        .iter()
        .map(|&p| {
            let per_draw: Result<Vec<f64>> =
                densities.iter().map(|d| d.tail_quantile(p, support_shift)).collect();
            let per_draw = per_draw?;
            let (estimate, lower95, upper95) = median_and_interval(&per_draw);
            Ok(QuantileReport { p, estimate, lower95, upper95 })
        })
        .collect()
}

/// Pointwise posterior mean and 95% band of the fitted density over `ys`.
pub fn density_curve(
    densities: &[DrawDensity],
    ys: &[f64],
    support_shift: f64,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    ys.iter()
        .map(|&y| {
            let per_draw: Result<Vec<f64>> =
                densities.iter().map(|d| d.density(y, support_shift)).collect();
            let per_draw = per_draw?;
            let (mean, lo, hi) = mean_and_interval(&per_draw);
            Ok((y, mean, lo, hi))
        })
        .collect()
}

/// Return period in years of exceeding `level`.
///
/// `inclusion_fraction` is the fraction `n/N` of original records retained by
/// preprocessing; per draw the return period is
/// `1 / (records_per_year * inclusion_fraction * survival(level))`.
pub fn return_period(
    densities: &[DrawDensity],
    level: f64,
    records_per_year: f64,
    inclusion_fraction: f64,
    support_shift: f64,
) -> Result<ReturnPeriodReport> {
    if !(inclusion_fraction > 0.0 && inclusion_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "inclusion fraction must lie in (0,1], got {inclusion_fraction}"
        )));
    }
    let per_draw: Result<Vec<f64>> = densities
        .iter()
        .map(|d| {
            let sf = d.survival(level, support_shift)?;
            Ok(1.0 / (records_per_year * inclusion_fraction * sf))
        })
        .collect();
    let per_draw = per_draw?;
    let (years, lower95, upper95) = median_and_interval(&per_draw);
    Ok(ReturnPeriodReport { level, years, lower95, upper95 })
}
