//! Squared-exponential kernel machinery and the low-rank, hyper-parameter
//! marginalized representation of the Gaussian process prior.
//!
//! The inverse length-scale prior is discretized onto a grid of support
//! points chosen by Kullback-Leibler stepping; for each support point the
//! projection matrix, Cholesky factor and log-determinant are precomputed so
//! that posterior evaluations perform no decompositions.

use crate::error::{Error, Result};
use crate::grid_density::Grid;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::distribution::{ContinuousCDF, Gamma};
use statrs::function::gamma::ln_gamma;

/// Diagonal jitter added before Cholesky; near-singular covariances arise at
/// small lambda with close knots.
pub const KERNEL_JITTER: f64 = 1e-8;

/// Squared-exponential correlation `c_lambda(u, v) = exp{-lambda^2 (u-v)^2}`.
pub fn kernel(lambda: f64, u: f64, v: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("kernel requires lambda > 0, got {lambda}")));
    }
    let d = u - v;
    Ok((-lambda * lambda * d * d).exp())
}

/// Kernel matrix over `points`, with diagonal jitter.
pub fn cov_matrix(lambda: f64, points: &[f64]) -> Result<DMatrix<f64>> {
    let m = points.len();
    let mut c = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            c[(i, j)] = kernel(lambda, points[i], points[j])?;
        }
        c[(i, i)] += KERNEL_JITTER;
    }
    Ok(c)
}

/// Cross-kernel matrix `c_lambda(t, s)` for `t` in `rows`, `s` in `cols`.
pub fn cross_matrix(lambda: f64, rows: &[f64], cols: &[f64]) -> Result<DMatrix<f64>> {
    let mut c = DMatrix::zeros(rows.len(), cols.len());
    for i in 0..rows.len() {
        for j in 0..cols.len() {
            c[(i, j)] = kernel(lambda, rows[i], cols[j])?;
        }
    }
    Ok(c)
}

fn chol(c: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    c.clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

fn chol_log_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// KL divergence between zero-mean Gaussians,
/// `0.5 [tr(C1^{-1} C0) - m + ln(|C1|/|C0|)]`.
pub fn gauss_kl(c0: &DMatrix<f64>, c1: &DMatrix<f64>) -> Result<f64> {
    if c0.nrows() != c1.nrows() || !c0.is_square() || !c1.is_square() {
        return Err(Error::InvalidInput("gauss_kl needs square matrices of equal size".into()));
    }
    let m = c0.nrows() as f64;
    let ch0 = chol(c0, "C0")?;
    let ch1 = chol(c1, "C1")?;
    let trace = ch1.solve(c0).trace();
    Ok(0.5 * (trace - m + chol_log_det(&ch1) - chol_log_det(&ch0)))
}

/// Set of `m` knots in [0,1], sorted, distinct, including both endpoints.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KnotSet {
    points: Vec<f64>,
}

impl KnotSet {
    pub fn uniform(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!("need >= 2 knots, got {m}")));
        }
        let step = 1.0 / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|i| i as f64 * step).collect();
        points[m - 1] = 1.0;
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

/// Precomputed per-support-point matrices.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LambdaSupport {
    pub lambda: f64,
    /// `c_lambda(0, 0.1)`, the correlation anchor used for grid termination.
    pub rho: f64,
    pub log_weight: f64,
    /// `A_g = C_{TS} C_S^{-1}`, an L x m projection.
    pub projection: DMatrix<f64>,
    /// Lower Cholesky factor of `C_S(lambda)`.
    pub chol_lower: DMatrix<f64>,
    pub log_det: f64,
}

/// Discretized inverse length-scale prior with precomputed projections.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LambdaGrid {
    knots: KnotSet,
    grid_len: usize,
    supports: Vec<LambdaSupport>,
    a_lambda: f64,
    b_lambda: f64,
    /// All projections stacked into one `(G L) x m` matrix so the hot path
    /// runs a single matrix-vector product; rebuilt lazily after
    /// deserialization.
    #[serde(skip)]
    stacked: std::sync::OnceLock<DMatrix<f64>>,
}

/// Construction parameters; defaults match the recommended configuration.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LambdaGridConfig {
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub rho_start: f64,
    pub rho_stop: f64,
    pub kl_step: f64,
}

impl Default for LambdaGridConfig {
    fn default() -> Self {
        Self { a_lambda: 16.0, b_lambda: 2.2, rho_start: 0.95, rho_stop: 0.2, kl_step: 0.5 }
    }
}

const KL_BISECT_TOL: f64 = 1e-8;

fn rho_at(lambda: f64) -> f64 {
    (-lambda * lambda * 0.01).exp()
}

/// Solve `gauss_kl(C_S(prev), C_S(lambda)) = kl_step` for `lambda > prev`.
fn next_lambda(knots: &[f64], prev: f64, kl_step: f64) -> Result<f64> {
    let c_prev = cov_matrix(prev, knots)?;
    let kl_of = |lam: f64| -> Result<f64> { gauss_kl(&c_prev, &cov_matrix(lam, knots)?) };
    let mut lo = prev;
    let mut hi = prev * 8.0;
    let mut tries = 0;
    while kl_of(hi)? < kl_step {
        lo = hi;
        hi *= 8.0;
        tries += 1;
        if tries > 20 {
            return Err(Error::BracketFailure(format!(
                "KL never reached {kl_step} from lambda {prev} up to {hi}"
            )));
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let kl = kl_of(mid)?;
        if (kl - kl_step).abs() < KL_BISECT_TOL || (hi - lo) < 1e-12 * prev {
            return Ok(mid);
        }
        if kl < kl_step {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

impl LambdaGrid {
    /// Build the support grid: `lambda_1` anchored at `rho_start`, successive
    /// points KL-stepped, terminated once the next solved point would have
    /// `rho < rho_stop`. Prior weights are Gamma-CDF masses of Voronoi cells
    /// around each support point (geometric midpoints, end cells to 0 and
    /// infinity).
    pub fn build(knots: &KnotSet, grid: &Grid, config: &LambdaGridConfig) -> Result<Self> {
        if !(config.a_lambda > 0.0 && config.b_lambda > 0.0) {
            return Err(Error::InvalidInput("gamma prior parameters must be positive".into()));
        }
        // closed form: rho_start = exp(-lambda^2 * 0.01)
        let lambda1 = 10.0 * (1.0 / config.rho_start).ln().sqrt();
        let mut lambdas = vec![lambda1];
        loop {
            // past the stop region the KL to any larger bandwidth saturates
            // below the step size; that plateau also terminates the grid
            let next = match next_lambda(knots.points(), *lambdas.last().unwrap(), config.kl_step) {
                Ok(next) => next,
                Err(Error::BracketFailure(_)) => break,
                Err(e) => return Err(e),
            };
            if rho_at(next) < config.rho_stop {
                break;
            }
            lambdas.push(next);
        }

        let gamma = Gamma::new(config.a_lambda, config.b_lambda)
            .map_err(|e| Error::InvalidInput(format!("gamma prior: {e}")))?;
        let g = lambdas.len();
        let mut edges = Vec::with_capacity(g + 1);
        edges.push(0.0);
        for i in 0..g - 1 {
            edges.push((lambdas[i] * lambdas[i + 1]).sqrt());
        }
        edges.push(f64::INFINITY);
        let weights: Vec<f64> = (0..g)
            .map(|i| {
                let hi = if edges[i + 1].is_finite() { gamma.cdf(edges[i + 1]) } else { 1.0 };
                hi - gamma.cdf(edges[i])
            })
            .collect();
        let total: f64 = weights.iter().sum();

        let mut supports = Vec::with_capacity(g);
        for (i, &lambda) in lambdas.iter().enumerate() {
            let c_s = cov_matrix(lambda, knots.points())?;
            let ch = chol(&c_s, "C_S")?;
            let log_det = chol_log_det(&ch);
            let c_ts = cross_matrix(lambda, grid.points(), knots.points())?;
            // A_g = C_TS C_S^{-1} = (C_S^{-1} C_ST)^T
            let mut projection = ch.solve(&c_ts.transpose()).transpose();
            // where a grid point coincides with a knot the exact conditional
            // mean is the knot value itself; pin those rows so the diagonal
            // jitter cannot perturb the interpolation property
            for (j, &s) in knots.points().iter().enumerate() {
                if let Some(t_idx) =
                    grid.points().iter().position(|&t| (t - s).abs() < 1e-12)
                {
                    for k in 0..knots.len() {
                        projection[(t_idx, k)] = if k == j { 1.0 } else { 0.0 };
                    }
                }
            }
            supports.push(LambdaSupport {
                lambda,
                rho: rho_at(lambda),
                log_weight: (weights[i] / total).ln(),
                projection,
                chol_lower: ch.l(),
                log_det,
            });
        }
        Ok(Self {
            knots: knots.clone(),
            grid_len: grid.len(),
            supports,
            a_lambda: config.a_lambda,
            b_lambda: config.b_lambda,
            stacked: std::sync::OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    pub fn knots(&self) -> &KnotSet {
        &self.knots
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn supports(&self) -> &[LambdaSupport] {
        &self.supports
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.supports.iter().map(|s| s.lambda).collect()
    }

    /// Cache key fields `(m, a_lambda, b_lambda, L)`.
    pub fn cache_key(&self) -> (usize, f64, f64, usize) {
        (self.knots.len(), self.a_lambda, self.b_lambda, self.grid_len)
    }

    /// Per-support log of `pi_g * t(omega_S; 2 a_kappa, (b_kappa/a_kappa) C_S)`.
    fn log_terms(&self, omega_s: &DVector<f64>, a_kappa: f64, b_kappa: f64) -> Vec<f64> {
        let m = self.knots.len() as f64;
        let const_term = ln_gamma(a_kappa + 0.5 * m)
            - ln_gamma(a_kappa)
            - 0.5 * m * (2.0 * b_kappa * std::f64::consts::PI).ln();
        self.supports
            .iter()
            .map(|s| {
                // quad = omega^T C^{-1} omega via one triangular solve
                let z = s
                    .chol_lower
                    .solve_lower_triangular(omega_s)
                    .expect("stored Cholesky factor is nonsingular");
                let quad = z.dot(&z);
                s.log_weight + const_term - 0.5 * s.log_det
                    - (a_kappa + 0.5 * m) * (quad / (2.0 * b_kappa)).ln_1p()
            })
            .collect()
    }

    /// Log marginal prior of the knot field: mixture over support points of
    /// multivariate-t densities with the variance parameter integrated out.
    pub fn marginal_log_prior(&self, omega_s: &[f64], a_kappa: f64, b_kappa: f64) -> Result<f64> {
        if omega_s.len() != self.knots.len() {
            return Err(Error::InvalidInput("omega_s length must match knot count".into()));
        }
        let v = DVector::from_column_slice(omega_s);
        let terms = self.log_terms(&v, a_kappa, b_kappa);
        Ok(log_sum_exp(&terms))
    }

    /// Posterior mixture weights over the support points given the knot field.
    pub fn mixture_weights(&self, omega_s: &[f64], a_kappa: f64, b_kappa: f64) -> Result<Vec<f64>> {
        if omega_s.len() != self.knots.len() {
            return Err(Error::InvalidInput("omega_s length must match knot count".into()));
        }
        let v = DVector::from_column_slice(omega_s);
        let terms = self.log_terms(&v, a_kappa, b_kappa);
        let lse = log_sum_exp(&terms);
        Ok(terms.iter().map(|t| (t - lse).exp()).collect())
    }

    /// Weighted predictive-process projection of the knot field onto the
    /// evaluation grid.
    pub fn predictive_project(
        &self,
        omega_s: &[f64],
        a_kappa: f64,
        b_kappa: f64,
    ) -> Result<Vec<f64>> {
        Ok(self.project_with_prior(omega_s, a_kappa, b_kappa)?.0)
    }

    /// Projection and marginal log prior in one pass; the per-support terms
    /// are shared, which matters in the likelihood hot path.
    pub fn project_with_prior(
        &self,
        omega_s: &[f64],
        a_kappa: f64,
        b_kappa: f64,
    ) -> Result<(Vec<f64>, f64)> {
        if omega_s.len() != self.knots.len() {
            return Err(Error::InvalidInput("omega_s length must match knot count".into()));
        }
        let v = DVector::from_column_slice(omega_s);
        let terms = self.log_terms(&v, a_kappa, b_kappa);
        let lse = log_sum_exp(&terms);
        let l = self.grid_len;
        let stacked = self.stacked.get_or_init(|| {
            let mut s = DMatrix::zeros(l * self.supports.len(), self.knots.len());
            for (g, sup) in self.supports.iter().enumerate() {
                s.view_mut((g * l, 0), (l, self.knots.len())).copy_from(&sup.projection);
            }
            s
        });
        let per_support = stacked * &v;
        let mut out = vec![0.0; l];
        for (g, &t) in terms.iter().enumerate() {
            let w = (t - lse).exp();
            if w > 0.0 {
                let seg = &per_support.as_slice()[g * l..(g + 1) * l];
                for (o, &p) in out.iter_mut().zip(seg) {
                    *o += w * p;
                }
            }
        }
        Ok((out, lse))
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let hi = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + terms.iter().map(|t| (t - hi).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_spot_values() {
        assert_relative_eq!(kernel(10.0, 0.0, 0.1).unwrap(), (-1.0_f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(kernel(3.0, 0.4, 0.4).unwrap(), 1.0);
        // lambda solving c(0, 0.1) = 0.95
        let lam = 10.0 * (1.0_f64 / 0.95).ln().sqrt();
        assert_relative_eq!(lam, 2.26480, max_relative = 1e-5);
        assert_relative_eq!(kernel(lam, 0.0, 0.1).unwrap(), 0.95, max_relative = 1e-12);
        assert!(kernel(-1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn kl_spot_values() {
        let c = cov_matrix(3.0, &[0.0, 0.5, 1.0]).unwrap();
        assert_relative_eq!(gauss_kl(&c, &c).unwrap(), 0.0, epsilon = 1e-12);
        // 1x1: C0 = [1], C1 = [e] -> 0.5 e^{-1}
        let c0 = DMatrix::from_element(1, 1, 1.0);
        let c1 = DMatrix::from_element(1, 1, std::f64::consts::E);
        assert_relative_eq!(gauss_kl(&c0, &c1).unwrap(), 0.5 / std::f64::consts::E, max_relative = 1e-12);
        assert!(gauss_kl(&c0, &c).is_err());
    }

    #[test]
    fn kl_matches_monte_carlo() {
        // 2x2 SPD pair: compare with a Monte Carlo estimate of E_0[log p0 - log p1]
        let c0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
        let c1 = DMatrix::from_row_slice(2, 2, &[1.5, -0.2, -0.2, 1.1]);
        let analytic = gauss_kl(&c0, &c1).unwrap();
        let ch0 = c0.clone().cholesky().unwrap();
        let ch1 = c1.clone().cholesky().unwrap();
        let ld0 = 2.0 * ch0.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let ld1 = 2.0 * ch1.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let x = ch0.l_dirty().lower_triangle() * z;
            let q0 = ch0.solve(&x).dot(&x);
            let q1 = ch1.solve(&x).dot(&x);
            let term = 0.5 * (q1 - q0 + ld1 - ld0);
            sum += term;
            sumsq += term * term;
        }
        let mc = sum / n as f64;
        let se = ((sumsq / n as f64 - mc * mc) / n as f64).sqrt();
        assert!(
            (analytic - mc).abs() < 3.0 * se,
            "analytic {analytic} vs MC {mc} +- {se}"
        );
    }

    fn default_grid(m: usize) -> LambdaGrid {
        let knots = KnotSet::uniform(m).unwrap();
        let grid = Grid::uniform(101).unwrap();
        LambdaGrid::build(&knots, &grid, &LambdaGridConfig::default()).unwrap()
    }

    #[test]
    fn grid_cardinality_is_stable() {
        // frozen counts for the forward-KL stepping construction: KL steps of
        // 0.5 from rho = 0.95 down to rho = 0.2
        assert_eq!(default_grid(11).len(), 21);
        assert_eq!(default_grid(21).len(), 50);
    }

    #[test]
    fn grid_monotone_and_terminated() {
        let lg = default_grid(11);
        let lambdas = lg.lambdas();
        assert!(lambdas.windows(2).all(|w| w[1] > w[0]));
        let rhos: Vec<f64> = lg.supports().iter().map(|s| s.rho).collect();
        assert!(rhos.windows(2).all(|w| w[1] < w[0]));
        assert_relative_eq!(rhos[0], 0.95, max_relative = 1e-10);
        assert!(*rhos.last().unwrap() >= 0.2);
        // the next solved point either falls below the stop threshold or the
        // KL step is unreachable (past the stop region the divergence to any
        // larger bandwidth plateaus below the step)
        match next_lambda(lg.knots().points(), *lambdas.last().unwrap(), 0.5) {
            Ok(next) => assert!(rho_at(next) < 0.2),
            Err(Error::BracketFailure(_)) => {}
            Err(e) => panic!("unexpected error: {e}"),
        }
        // weights sum to 1
        let total: f64 = lg.supports().iter().map(|s| s.log_weight.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12, "weights sum {total}");
    }

    #[test]
    fn cholesky_reproduces_covariance() {
        let lg = default_grid(11);
        for s in lg.supports() {
            let c = cov_matrix(s.lambda, lg.knots().points()).unwrap();
            let rebuilt = &s.chol_lower * s.chol_lower.transpose();
            assert!((&c - &rebuilt).abs().max() < 1e-8);
        }
    }

    #[test]
    fn marginal_prior_1d_integrates_to_one() {
        // m = 1 knot set cannot include both endpoints; build a single-support
        // one-dimensional analogue directly.
        let knots = KnotSet { points: vec![0.5] };
        let grid = Grid::uniform(3).unwrap();
        let c = cov_matrix(3.0, &[0.5]).unwrap();
        let ch = c.clone().cholesky().unwrap();
        let lg = LambdaGrid {
            knots,
            grid_len: grid.len(),
            supports: vec![LambdaSupport {
                lambda: 3.0,
                rho: rho_at(3.0),
                log_weight: 0.0,
                projection: cross_matrix(3.0, grid.points(), &[0.5]).unwrap(),
                chol_lower: ch.l(),
                log_det: 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            }],
            a_lambda: 16.0,
            b_lambda: 2.2,
            stacked: Default::default(),
        };
        // trapezoid quadrature of the 1-D marginal density
        let mut integral = 0.0;
        let half_width = 400.0;
        let steps = 400_000;
        let h = 2.0 * half_width / steps as f64;
        for i in 0..=steps {
            let x = -half_width + i as f64 * h;
            let d = lg.marginal_log_prior(&[x], 1.5, 1.5).unwrap().exp();
            integral += if i == 0 || i == steps { 0.5 * d } else { d };
        }
        integral *= h;
        assert!((integral - 1.0).abs() < 1e-6, "integral {integral}");
    }

    #[test]
    fn marginal_prior_symmetry() {
        let lg = default_grid(11);
        let omega: Vec<f64> = (0..11).map(|i| ((i as f64) * 0.4).sin()).collect();
        let neg: Vec<f64> = omega.iter().map(|v| -v).collect();
        assert_relative_eq!(
            lg.marginal_log_prior(&omega, 1.5, 1.5).unwrap(),
            lg.marginal_log_prior(&neg, 1.5, 1.5).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn single_support_matches_reference_t_density() {
        // independent direct-inverse multivariate-t evaluation
        let knots = KnotSet::uniform(5).unwrap();
        let grid = Grid::uniform(11).unwrap();
        let full = LambdaGrid::build(&knots, &grid, &LambdaGridConfig::default()).unwrap();
        let s0 = full.supports().last().unwrap().clone();
        let single = LambdaGrid {
            knots: knots.clone(),
            grid_len: grid.len(),
            supports: vec![LambdaSupport { log_weight: 0.0, ..s0.clone() }],
            a_lambda: 16.0,
            b_lambda: 2.2,
            stacked: Default::default(),
        };
        let (a_k, b_k) = (1.5, 1.5);
        let m = 5.0;
        let nu = 2.0 * a_k;
        let c = cov_matrix(s0.lambda, knots.points()).unwrap();
        let sigma = &c * (b_k / a_k);
        let sigma_inv = sigma.clone().try_inverse().unwrap();
        let log_det_sigma = sigma.determinant().ln();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let omega: Vec<f64> = (0..5).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let x = DVector::from_column_slice(&omega);
            let q = (&sigma_inv * &x).dot(&x);
            let reference = ln_gamma(0.5 * (nu + m))
                - ln_gamma(0.5 * nu)
                - 0.5 * m * (nu * std::f64::consts::PI).ln()
                - 0.5 * log_det_sigma
                - 0.5 * (nu + m) * (q / nu).ln_1p();
            let got = single.marginal_log_prior(&omega, a_k, b_k).unwrap();
            assert_relative_eq!(got, reference, max_relative = 1e-10);
        }
    }

    #[test]
    fn mixture_weight_properties() {
        let lg = default_grid(11);
        let omega: Vec<f64> = (0..11).map(|i| ((i as f64) * 0.3).cos()).collect();
        let w = lg.mixture_weights(&omega, 1.5, 1.5).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // at the origin the likelihood part reduces to pi_g / |C|^{1/2}
        let w0 = lg.mixture_weights(&vec![0.0; 11], 1.5, 1.5).unwrap();
        let direct: Vec<f64> = lg
            .supports()
            .iter()
            .map(|s| s.log_weight.exp() / (0.5 * s.log_det).exp())
            .collect();
        let total: f64 = direct.iter().sum();
        for (a, b) in w0.iter().zip(&direct) {
            assert_relative_eq!(*a, b / total, max_relative = 1e-10);
        }
    }

    #[test]
    fn projection_interpolates_at_knots() {
        // knots lie on the grid when L-1 is a multiple of m-1
        let knots = KnotSet::uniform(11).unwrap();
        let grid = Grid::uniform(101).unwrap();
        let lg = LambdaGrid::build(&knots, &grid, &LambdaGridConfig::default()).unwrap();
        let omega: Vec<f64> = (0..11).map(|i| ((i as f64) * 0.5).sin()).collect();
        let proj = lg.predictive_project(&omega, 1.5, 1.5).unwrap();
        for (k, &s) in knots.points().iter().enumerate() {
            let gi = (s * 100.0).round() as usize;
            assert!((proj[gi] - omega[k]).abs() < 1e-12, "knot {k}: {} vs {}", proj[gi], omega[k]);
        }
        // zero field projects to zero
        let z = lg.predictive_project(&vec![0.0; 11], 1.5, 1.5).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_support_projection_is_conditional_mean() {
        let knots = KnotSet::uniform(7).unwrap();
        let grid = Grid::uniform(29).unwrap();
        let full = LambdaGrid::build(&knots, &grid, &LambdaGridConfig::default()).unwrap();
        let s0 = full.supports().last().unwrap().clone();
        let single = LambdaGrid {
            knots: knots.clone(),
            grid_len: grid.len(),
            supports: vec![LambdaSupport { log_weight: 0.0, ..s0.clone() }],
            a_lambda: 16.0,
            b_lambda: 2.2,
            stacked: Default::default(),
        };
        let omega: Vec<f64> = (0..7).map(|i| 0.3 * i as f64 - 1.0).collect();
        let proj = single.predictive_project(&omega, 1.5, 1.5).unwrap();
        // closed-form conditional mean E[omega_T | omega_S] by a direct solve
        let c_s = cov_matrix(s0.lambda, knots.points()).unwrap();
        let c_ts = cross_matrix(s0.lambda, grid.points(), knots.points()).unwrap();
        let direct = &c_ts * (c_s.try_inverse().unwrap() * DVector::from_column_slice(&omega));
        for (i, (a, b)) in proj.iter().zip(direct.iter()).enumerate() {
            // grid points that coincide with a knot are pinned to the exact
            // knot value and covered by the interpolation test
            let t = grid.points()[i];
            if knots.points().iter().any(|&s| (t - s).abs() < 1e-12) {
                continue;
            }
            assert!((a - b).abs() < 1e-8);
        }
    }
}
