//! Peaks-over-threshold comparator: Bayesian GPD fit to exceedances at a
//! user-specified threshold or threshold grid, with extrapolated tail
//! quantiles.

use crate::error::{Error, Result};
use crate::model::{Dataset, GpdOnlyTarget};
use crate::parallel::maybe_par_map;
use crate::priors::PriorConfig;
use crate::sampler::{run_adaptive_metropolis, SamplerConfig};
use crate::summaries::median_and_interval;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Minimum exceedance count accepted by default; below it the fit would be
/// prior-dominated and is refused.
pub const DEFAULT_EXCEEDANCE_FLOOR: usize = 30;

/// Posterior fit of a GPD to excesses over a threshold.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PotFit {
    pub threshold: f64,
    /// Number of exceedances.
    pub count: usize,
    /// Exceedance fraction `k/n`.
    pub fraction: f64,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
    pub xi: Vec<f64>,
    pub accept_rate: f64,
}

impl PotFit {
    pub fn xi_summary(&self) -> (f64, f64, f64) {
        let mean = self.xi.iter().sum::<f64>() / self.xi.len() as f64;
        let (_, lo, hi) = median_and_interval(&self.xi);
        (mean, lo, hi)
    }
}

/// Fit a GPD to the excesses `y_i - threshold`, sampled under the same theta
/// prior and adaptive Metropolis machinery as the semiparametric model but
/// restricted to the two-parameter block.
pub fn fit_pot(
    data: &Dataset,
    threshold: f64,
    prior: &PriorConfig,
    config: &SamplerConfig,
    floor: usize,
) -> Result<PotFit> {
    let excesses: Vec<f64> =
        data.values().iter().filter(|&&y| y > threshold).map(|y| y - threshold).collect();
    let count = excesses.len();
    if count < floor {
        return Err(Error::TooFewExceedances { count, threshold, floor });
    }
    let fraction = count as f64 / data.len() as f64;
    let excess_data = Dataset::new(
        excesses,
        crate::model::Provenance { original_count: data.len(), ..Default::default() },
    )?;
    let target = GpdOnlyTarget::new(&excess_data, prior);
    let init = vec![0.0, excess_data.median().ln()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let raw = run_adaptive_metropolis(
        |x| target.log_posterior_flat(x),
        &init,
        &[vec![0, 1]],
        config,
        &mut rng,
    )?;
    let alpha: Vec<f64> = raw.draws.iter().map(|d| prior.alpha_transform(d[0])).collect();
    let sigma: Vec<f64> = raw.draws.iter().map(|d| d[1].exp()).collect();
    let xi: Vec<f64> = alpha.iter().map(|a| 1.0 / a).collect();
    Ok(PotFit { threshold, count, fraction, alpha, sigma, xi, accept_rate: raw.accept_rates[0] })
}

/// One point of the threshold-sweep curve.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct XiCurvePoint {
    pub threshold: f64,
    pub count: usize,
    pub xi_mean: f64,
    pub lower95: f64,
    pub upper95: f64,
}

/// Map [`fit_pot`] over a threshold grid. Thresholds with too few exceedances
/// are skipped and reported in the gap list.
pub fn pot_xi_curve(
    data: &Dataset,
    thresholds: &[f64],
    prior: &PriorConfig,
    config: &SamplerConfig,
    floor: usize,
) -> (Vec<XiCurvePoint>, Vec<f64>) {
    let results = maybe_par_map(thresholds, |&t| {
        let cfg = SamplerConfig {
            seed: config.seed.wrapping_add((t * 1e6) as u64),
            ..config.clone()
        };
        (t, fit_pot(data, t, prior, &cfg, floor))
    });
    let mut points = Vec::new();
    let mut gaps = Vec::new();
    for (t, res) in results {
        match res {
            Ok(fit) => {
                let (xi_mean, lower95, upper95) = fit.xi_summary();
                points.push(XiCurvePoint { threshold: t, count: fit.count, xi_mean, lower95, upper95 });
            }
            Err(_) => gaps.push(t),
        }
    }
    (points, gaps)
}

/// Default threshold grid of the precipitation analysis: 0.005 to 3.0 in
/// steps of 0.025.
pub fn default_threshold_grid() -> Vec<f64> {
    let mut grid = Vec::new();
    let mut t: f64 = 0.005;
    while t <= 3.0 + 1e-9 {
        grid.push(t);
        t += 0.025;
    }
    grid
}

/// Per-draw POT tail quantile extrapolation
/// `Qbar(p) = t + alpha sigma {(p / fraction)^{-1/alpha} - 1}`, requiring
/// `p <= fraction`.
pub fn pot_tail_quantile(fit: &PotFit, p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p <= fit.fraction) {
        return Err(Error::Domain(format!(
            "pot_tail_quantile requires 0 < p <= exceedance fraction {}, got {p}",
            fit.fraction
        )));
    }
    Ok(fit
        .alpha
        .iter()
        .zip(&fit.sigma)
        .map(|(&a, &s)| fit.threshold + a * s * ((p / fit.fraction).powf(-1.0 / a) - 1.0))
        .collect())
}
