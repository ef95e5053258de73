//! Log posterior assembly for the semiparametric model and for the
//! two-parameter GPD-only reduction used by the thresholding baseline and by
//! quadrature oracles.

use crate::error::{Error, Result};
use crate::gpd::{self, ThetaParam};
use crate::grid_density::{Grid, GridDensity};
use crate::lowrank::LambdaGrid;
use crate::priors::PriorConfig;
use std::cell::{Cell, RefCell};

/// Transformed data values are clamped into this closed interval before
/// density evaluation; a counter records every clamp.
pub const U_CLAMP: f64 = 1e-12;

/// Sampler state in unconstrained coordinates: `(zeta, tau, omega_S)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChainState {
    pub zeta: f64,
    pub tau: f64,
    pub omega_s: Vec<f64>,
}

impl ChainState {
    pub fn dim(&self) -> usize {
        self.omega_s.len() + 2
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.zeta);
        v.push(self.tau);
        v.extend_from_slice(&self.omega_s);
        v
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() < 3 {
            return Err(Error::InvalidInput("state needs at least 3 coordinates".into()));
        }
        Ok(Self { zeta: x[0], tau: x[1], omega_s: x[2..].to_vec() })
    }

    pub fn theta(&self, prior: &PriorConfig) -> ThetaParam {
        prior.theta_from_unconstrained(self.zeta, self.tau)
    }
}

/// Preprocessing provenance carried with every dataset.
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub truncate_below: f64,
    pub jitter_half_width: f64,
    pub support_shift: f64,
    pub seed: u64,
    /// Record count before truncation.
    pub original_count: usize,
}

/// Positive observations after preprocessing, with a cached sorted copy.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Dataset {
    y: Vec<f64>,
    sorted: Vec<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(y: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        if let Some(bad) = y.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("observations must be positive and finite, got {bad}")));
        }
        let mut sorted = y.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { y, sorted, provenance })
    }

    pub fn from_values(y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, Provenance { original_count: n, ..Default::default() })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn median(&self) -> f64 {
        self.sorted[self.sorted.len() / 2]
    }
}

struct ThetaCache {
    zeta: f64,
    tau: f64,
    /// `u_i = G_theta(y_i)` over the sorted data, clamped.
    u: Vec<f64>,
    sum_log_gpd: f64,
    clamped: u64,
}

struct FieldCache {
    omega_s: Vec<f64>,
    density: GridDensity,
    log_prior: f64,
}

/// Semiparametric log-posterior evaluator over flattened states.
///
/// The GPD-transformed data depend only on `theta` and the grid density only
/// on the knot field, so both sides carry a two-entry cache: a blocked
/// sampler alternates between the current state and a proposal that differs
/// in one block, and either entry can be the next hit.
pub struct ModelTarget<'a> {
    pub data: &'a Dataset,
    pub lambda_grid: &'a LambdaGrid,
    pub grid: &'a Grid,
    pub prior: &'a PriorConfig,
    theta_cache: RefCell<Vec<ThetaCache>>,
    field_cache: RefCell<Vec<FieldCache>>,
    clamp_count: Cell<u64>,
}

impl<'a> ModelTarget<'a> {
    pub fn new(
        data: &'a Dataset,
        lambda_grid: &'a LambdaGrid,
        grid: &'a Grid,
        prior: &'a PriorConfig,
    ) -> Self {
        Self {
            data,
            lambda_grid,
            grid,
            prior,
            theta_cache: RefCell::new(Vec::new()),
            field_cache: RefCell::new(Vec::new()),
            clamp_count: Cell::new(0),
        }
    }

    /// Total number of clamped transformed observations across all
    /// evaluations; must stay 0 on routine runs.
    pub fn clamp_count(&self) -> u64 {
        self.clamp_count.get()
    }

    /// Move the `(zeta, tau)` transform to the cache front, computing it on a
    /// miss.
    fn ensure_theta(&self, zeta: f64, tau: f64) -> Result<()> {
        let mut cache = self.theta_cache.borrow_mut();
        if let Some(pos) = cache.iter().position(|c| c.zeta == zeta && c.tau == tau) {
            let hit = cache.remove(pos);
            cache.insert(0, hit);
            return Ok(());
        }
        let theta = self.prior.theta_from_unconstrained(zeta, tau);
        let mut u = Vec::with_capacity(self.data.len());
        let mut sum_log_gpd = 0.0;
        let mut clamped = 0u64;
        for (i, &y) in self.data.sorted().iter().enumerate() {
            sum_log_gpd += gpd::gpd_log_pdf(theta, y)
                .map_err(|_| Error::NonFiniteLikelihood { index: i })?;
            let mut ui = gpd::gpd_cdf(theta, y).map_err(|_| Error::NonFiniteLikelihood { index: i })?;
            // the counter records genuine precision loss (the transform
            // rounded all the way to an endpoint), not the guard band itself
            if ui <= 0.0 || ui >= 1.0 {
                clamped += 1;
            }
            ui = ui.clamp(U_CLAMP, 1.0 - U_CLAMP);
            u.push(ui);
        }
        cache.insert(0, ThetaCache { zeta, tau, u, sum_log_gpd, clamped });
        cache.truncate(2);
        Ok(())
    }

    /// Move the knot-field projection to the cache front, computing it on a
    /// miss.
    fn ensure_field(&self, omega_s: &[f64]) -> Result<()> {
        let mut cache = self.field_cache.borrow_mut();
        if let Some(pos) = cache.iter().position(|c| c.omega_s == omega_s) {
            let hit = cache.remove(pos);
            cache.insert(0, hit);
            return Ok(());
        }
        let (omega_t, log_prior) =
            self.lambda_grid.project_with_prior(omega_s, self.prior.a_kappa, self.prior.b_kappa)?;
        let density = GridDensity::logistic_transform(&omega_t, self.grid)?;
        cache.insert(0, FieldCache { omega_s: omega_s.to_vec(), density, log_prior });
        cache.truncate(2);
        Ok(())
    }

    /// Log likelihood of the semiparametric model at `state`.
    pub fn log_likelihood(&self, state: &ChainState) -> Result<f64> {
        self.ensure_theta(state.zeta, state.tau)?;
        self.ensure_field(&state.omega_s)?;
        let theta_cache = self.theta_cache.borrow();
        let transform = &theta_cache[0];
        let field_cache = self.field_cache.borrow();
        let sum_log_psi = field_cache[0].density.sum_log_eval_sorted(&transform.u)?;
        let value = transform.sum_log_gpd + sum_log_psi;
        self.clamp_count.set(self.clamp_count.get() + transform.clamped);
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite log likelihood {value}")));
        }
        Ok(value)
    }

    /// Full log posterior: likelihood + theta prior + marginal knot-field
    /// prior.
    pub fn log_posterior(&self, state: &ChainState) -> Result<f64> {
        let ll = self.log_likelihood(state)?;
        let lp_theta = self.prior.log_prior_theta(state.zeta, state.tau);
        // log_likelihood leaves this state's field entry at the front
        let lp_omega = self.field_cache.borrow()[0].log_prior;
        Ok(ll + lp_theta + lp_omega)
    }

    /// Flattened-state interface for the sampler; non-finite values map to
    /// negative infinity so proposals outside the support are rejected.
    pub fn log_posterior_flat(&self, x: &[f64]) -> f64 {
        match ChainState::from_slice(x).and_then(|s| self.log_posterior(&s)) {
            Ok(v) => v,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Per-draw density components for post-processing.
    pub fn density_of(&self, state: &ChainState) -> Result<(ThetaParam, GridDensity)> {
        self.ensure_field(&state.omega_s)?;
        let gd = self.field_cache.borrow()[0].density.clone();
        Ok((state.theta(self.prior), gd))
    }
}

/// Two-parameter GPD posterior over `(zeta, tau)` under the same theta prior;
/// used by the thresholding baseline and the quadrature oracle.
pub struct GpdOnlyTarget<'a> {
    pub data: &'a Dataset,
    pub prior: &'a PriorConfig,
}

impl<'a> GpdOnlyTarget<'a> {
    pub fn new(data: &'a Dataset, prior: &'a PriorConfig) -> Self {
        Self { data, prior }
    }

    pub fn log_posterior(&self, zeta: f64, tau: f64) -> Result<f64> {
        let theta = self.prior.theta_from_unconstrained(zeta, tau);
        let mut ll = 0.0;
        for (i, &y) in self.data.values().iter().enumerate() {
            ll += gpd::gpd_log_pdf(theta, y).map_err(|_| Error::NonFiniteLikelihood { index: i })?;
        }
        Ok(ll + self.prior.log_prior_theta(zeta, tau))
    }

    pub fn log_posterior_flat(&self, x: &[f64]) -> f64 {
        if x.len() != 2 {
            return f64::NEG_INFINITY;
        }
        self.log_posterior(x[0], x[1]).unwrap_or(f64::NEG_INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_density::Grid;
    use crate::lowrank::{KnotSet, LambdaGrid, LambdaGridConfig};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (LambdaGrid, Grid, PriorConfig) {
        let knots = KnotSet::uniform(11).unwrap();
        let grid = Grid::uniform(101).unwrap();
        let lg = LambdaGrid::build(&knots, &grid, &LambdaGridConfig::default()).unwrap();
        (lg, grid, PriorConfig::default())
    }

    #[test]
    fn zero_field_reduces_to_gpd() {
        let (lg, grid, prior) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let theta = ThetaParam::new(2.0, 1.0).unwrap();
        let data = Dataset::from_values(gpd::sample_gpd(theta, 200, &mut rng)).unwrap();
        let target = ModelTarget::new(&data, &lg, &grid, &prior);
        let state = ChainState { zeta: 0.3, tau: -0.2, omega_s: vec![0.0; 11] };
        let th = state.theta(&prior);
        let direct: f64 = data
            .values()
            .iter()
            .map(|&y| gpd::gpd_log_pdf(th, y).unwrap())
            .sum();
        assert_relative_eq!(target.log_likelihood(&state).unwrap(), direct, max_relative = 1e-12);
        assert_eq!(target.clamp_count(), 0);
    }

    #[test]
    fn single_point_spot_value() {
        let (lg, grid, prior) = setup();
        let data = Dataset::from_values(vec![2.0]).unwrap();
        let target = ModelTarget::new(&data, &lg, &grid, &prior);
        // zeta = 0 -> alpha = 2, tau = 0 -> sigma = 1; psi == 1
        let state = ChainState { zeta: 0.0, tau: 0.0, omega_s: vec![0.0; 11] };
        assert_relative_eq!(
            target.log_likelihood(&state).unwrap(),
            0.125_f64.ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn likelihood_matches_quadrature_renormalization() {
        // brute-force oracle: renormalize exp(omega_tilde) by dense quadrature
        let (lg, grid, prior) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let theta = ThetaParam::new(2.0, 1.0).unwrap();
        let data = Dataset::from_values(gpd::sample_gpd(theta, 50, &mut rng)).unwrap();
        let target = ModelTarget::new(&data, &lg, &grid, &prior);
        let omega_s: Vec<f64> = (0..11).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let state = ChainState { zeta: 0.1, tau: 0.05, omega_s };
        let got = target.log_likelihood(&state).unwrap();

        let th = state.theta(&prior);
        let omega_t = lg.predictive_project(&state.omega_s, 1.5, 1.5).unwrap();
        // linear interpolation of omega-exp over a 1e5-point quadrature
        let pts = grid.points();
        let interp = |u: f64| -> f64 {
            let cell = ((u * 100.0).floor() as usize).min(99);
            let t = (u - pts[cell]) / (pts[cell + 1] - pts[cell]);
            omega_t[cell].exp() * (1.0 - t) + omega_t[cell + 1].exp() * t
        };
        let m = 100_000;
        let mut norm = 0.0;
        for i in 0..m {
            let a = i as f64 / m as f64;
            let b = (i + 1) as f64 / m as f64;
            norm += 0.5 * (interp(a) + interp(b)) * (b - a);
        }
        let mut brute = 0.0;
        for &y in data.values() {
            let u = gpd::gpd_cdf(th, y).unwrap();
            brute += gpd::gpd_log_pdf(th, y).unwrap() + (interp(u) / norm).ln();
        }
        assert!((got - brute).abs() < 1e-3, "got {got} brute {brute}");
    }

    #[test]
    fn posterior_decomposes_and_is_exchangeable() {
        let (lg, grid, prior) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let theta = ThetaParam::new(2.0, 1.0).unwrap();
        let mut y = gpd::sample_gpd(theta, 60, &mut rng);
        let data = Dataset::from_values(y.clone()).unwrap();
        let target = ModelTarget::new(&data, &lg, &grid, &prior);
        let omega_s: Vec<f64> = (0..11).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let state = ChainState { zeta: -0.1, tau: 0.2, omega_s };

        let ll = target.log_likelihood(&state).unwrap();
        let lp = target.log_posterior(&state).unwrap();
        let parts = ll
            + prior.log_prior_theta(state.zeta, state.tau)
            + lg.marginal_log_prior(&state.omega_s, 1.5, 1.5).unwrap();
        assert_relative_eq!(lp, parts, max_relative = 1e-12);

        // permuting the data leaves the posterior unchanged
        y.reverse();
        y.swap(3, 40);
        let data2 = Dataset::from_values(y).unwrap();
        let target2 = ModelTarget::new(&data2, &lg, &grid, &prior);
        assert_relative_eq!(target2.log_posterior(&state).unwrap(), lp, max_relative = 1e-12);
    }

    #[test]
    fn gpd_only_matches_zero_field_reduction() {
        // independent two-parameter implementation vs the full model with
        // omega_S = 0 and the marginal prior term dropped
        let (lg, grid, prior) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let theta = ThetaParam::new(1.5, 0.8).unwrap();
        let data = Dataset::from_values(gpd::sample_gpd(theta, 80, &mut rng)).unwrap();
        let target = ModelTarget::new(&data, &lg, &grid, &prior);
        let gpd_only = GpdOnlyTarget::new(&data, &prior);
        for _ in 0..100 {
            let zeta = rng.gen_range(-2.0..2.0);
            let tau = rng.gen_range(-1.5..1.5);
            let state = ChainState { zeta, tau, omega_s: vec![0.0; 11] };
            let reduced = target.log_posterior(&state).unwrap()
                - lg.marginal_log_prior(&state.omega_s, 1.5, 1.5).unwrap();
            let direct = gpd_only.log_posterior(zeta, tau).unwrap();
            assert_relative_eq!(reduced, direct, max_relative = 1e-10, epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_degenerate_data() {
        assert!(Dataset::from_values(vec![]).is_err());
        assert!(Dataset::from_values(vec![1.0, -2.0]).is_err());
        assert!(Dataset::from_values(vec![1.0, 0.0]).is_err());
        assert!(Dataset::from_values(vec![1.0, f64::NAN]).is_err());
    }
}
