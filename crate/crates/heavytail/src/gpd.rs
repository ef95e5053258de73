//! Closed-form generalized Pareto mathematics and the synthetic heavy-tailed
//! families used by the simulation harness.
//!
//! The GPD here has location 0, scale `sigma` and shape `1/alpha`, so its
//! survival function decays like `y^{-alpha}`: `alpha` is the tail index and
//! `xi = 1/alpha` the extreme value index.

use crate::error::{Error, Result};
use rand::Rng;
use statrs::function::gamma::ln_gamma;

/// Quantile arguments are clamped to at most `1 - QUANTILE_CLAMP` to avoid
/// overflow in `(1-q)^{-1/alpha}`.
pub const QUANTILE_CLAMP: f64 = 1e-12;

/// GPD shape/scale pair `(alpha, sigma)` with `alpha > 0`, `sigma > 0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ThetaParam {
    pub alpha: f64,
    pub sigma: f64,
}

impl ThetaParam {
    pub fn new(alpha: f64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { alpha, sigma })
    }

    /// Extreme value index `xi = 1/alpha`.
    pub fn xi(&self) -> f64 {
        1.0 / self.alpha
    }
}

/// GPD density `g_theta(y) = sigma^{-1} {1 + y/(alpha sigma)}^{-(alpha+1)}`.
pub fn gpd_pdf(theta: ThetaParam, y: f64) -> Result<f64> {
    Ok(gpd_log_pdf(theta, y)?.exp())
}

/// Log of [`gpd_pdf`]; preferred inside likelihoods.
pub fn gpd_log_pdf(theta: ThetaParam, y: f64) -> Result<f64> {
    if y < 0.0 {
        return Err(Error::Domain(format!("gpd_pdf requires y >= 0, got {y}")));
    }
    Ok(-theta.sigma.ln() - (theta.alpha + 1.0) * (y / (theta.alpha * theta.sigma)).ln_1p())
}

/// GPD distribution function `G_theta(y) = 1 - {1 + y/(alpha sigma)}^{-alpha}`.
pub fn gpd_cdf(theta: ThetaParam, y: f64) -> Result<f64> {
    Ok(1.0 - gpd_sf(theta, y)?)
}

/// GPD survival function `1 - G_theta(y)`, computed without cancellation.
pub fn gpd_sf(theta: ThetaParam, y: f64) -> Result<f64> {
    if y < 0.0 {
        return Err(Error::Domain(format!("gpd_cdf requires y >= 0, got {y}")));
    }
    Ok((-theta.alpha * (y / (theta.alpha * theta.sigma)).ln_1p()).exp())
}

/// GPD quantile `G_theta^{-1}(q) = alpha sigma {(1-q)^{-1/alpha} - 1}`.
///
/// `q` is clamped to `1 - 1e-12` from above to avoid overflow.
pub fn gpd_quantile(theta: ThetaParam, q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Domain(format!("gpd_quantile requires q in [0,1), got {q}")));
    }
    let q = q.min(1.0 - QUANTILE_CLAMP);
    Ok(theta.alpha * theta.sigma * ((1.0 - q).powf(-1.0 / theta.alpha) - 1.0))
}

/// Transform a density `f` on `(0, inf)` into its bulk representation
/// `psi(u) = f(G_theta^{-1}(u)) / g_theta(G_theta^{-1}(u))` on `(0,1)`.
///
/// When `f = g_theta` this is identically 1.
pub fn psi_from_density<F>(f: F, theta: ThetaParam, u: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(0.0 < u && u < 1.0) {
        return Err(Error::Domain(format!("psi_from_density requires u in (0,1), got {u}")));
    }
    let y = gpd_quantile(theta, u)?;
    Ok(f(y) / gpd_pdf(theta, y)?)
}

/// Draw `n` GPD variates by inverse-CDF sampling.
pub fn sample_gpd<R: Rng + ?Sized>(theta: ThetaParam, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let q: f64 = rng.gen();
            gpd_quantile(theta, q).expect("q in [0,1)")
        })
        .collect()
}

/// Draw `n` variates with density `4 g_{(alpha,1)} G_{(alpha,1)}^3`, i.e. the
/// maximum of 4 independent GPD(alpha, 1) draws.
pub fn sample_gpd4<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let theta = ThetaParam { alpha, sigma: 1.0 };
    (0..n)
        .map(|_| {
            let mut best = f64::NEG_INFINITY;
            for _ in 0..4 {
                let q: f64 = rng.gen();
                best = best.max(gpd_quantile(theta, q).expect("q in [0,1)"));
            }
            best
        })
        .collect()
}

/// Draw `n` half-t variates `|t_alpha|` with `alpha` degrees of freedom.
pub fn sample_halft<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let t = rand_distr::StudentT::new(alpha).expect("alpha > 0");
    (0..n).map(|_| rng.sample::<f64, _>(t).abs()).collect()
}

/// Half-t density `2 c(alpha) (1 + y^2/alpha)^{-(alpha+1)/2}` with
/// `c(alpha) = Gamma((alpha+1)/2) / {sqrt(alpha pi) Gamma(alpha/2)}`.
///
/// This is the standard half-t with `alpha` degrees of freedom, which is
/// regularly varying with tail index `alpha`.
pub fn halft_pdf(alpha: f64, y: f64) -> f64 {
    let log_c = ln_gamma((alpha + 1.0) / 2.0)
        - 0.5 * (alpha * std::f64::consts::PI).ln()
        - ln_gamma(alpha / 2.0);
    (std::f64::consts::LN_2 + log_c - 0.5 * (alpha + 1.0) * (y * y / alpha).ln_1p()).exp()
}

/// Continued fraction for the regularized incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`, accurate for tiny `x`.
///
/// `ln_1mx` is `ln(1 - x)` supplied by the caller so that `1 - x` values
/// close to 1 keep full precision.
fn inc_beta_reg(a: f64, b: f64, x: f64, ln_1mx: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_bt = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * ln_1mx;
    let bt = ln_bt.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * beta_cf(a, b, x) / a
    } else {
        1.0 - bt * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Half-t survival function `2 (1 - T_alpha(y)) = I_x(alpha/2, 1/2)` with
/// `x = alpha / (alpha + y^2)`; the incomplete-beta route stays accurate deep
/// in the tail.
pub fn halft_sf(alpha: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    let x = alpha / (alpha + y * y);
    // ln(1 - x) = ln(y^2 / (alpha + y^2)), cancellation-free
    let ln_1mx = (y * y).ln() - (alpha + y * y).ln();
    inc_beta_reg(alpha / 2.0, 0.5, x, ln_1mx)
}

/// Invert the half-t survival function to 1e-10 relative accuracy.
pub fn halft_quantile_sf(alpha: f64, p: f64) -> Result<f64> {
    if !(0.0 < p && p < 1.0) {
        return Err(Error::Domain(format!("halft_quantile_sf requires p in (0,1), got {p}")));
    }
    // Bracket the root, then bisect. Survival is strictly decreasing.
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while halft_sf(alpha, hi) > p {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numerical("halft quantile bracket overflow".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if halft_sf(alpha, mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Synthetic data-generating families of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FamilyKind {
    Gpd,
    Gpd4,
    HalfT,
}

/// A synthetic family together with its tail index.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticFamily {
    pub kind: FamilyKind,
    pub alpha: f64,
}

impl SyntheticFamily {
    pub fn new(kind: FamilyKind, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { kind, alpha })
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let theta = ThetaParam { alpha: self.alpha, sigma: 1.0 };
        match self.kind {
            FamilyKind::Gpd => sample_gpd(theta, n, rng),
            FamilyKind::Gpd4 => sample_gpd4(self.alpha, n, rng),
            FamilyKind::HalfT => sample_halft(self.alpha, n, rng),
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let theta = ThetaParam { alpha: self.alpha, sigma: 1.0 };
        match self.kind {
            FamilyKind::Gpd => gpd_pdf(theta, y).unwrap_or(0.0),
            FamilyKind::Gpd4 => {
                let g = gpd_pdf(theta, y).unwrap_or(0.0);
                let cdf = gpd_cdf(theta, y).unwrap_or(0.0);
                4.0 * g * cdf.powi(3)
            }
            FamilyKind::HalfT => halft_pdf(self.alpha, y),
        }
    }

    /// True upper tail quantile: the `y` with survival probability `p`.
    pub fn tail_quantile(&self, p: f64) -> Result<f64> {
        let theta = ThetaParam { alpha: self.alpha, sigma: 1.0 };
        match self.kind {
            FamilyKind::Gpd => gpd_quantile(theta, 1.0 - p),
            // CDF is G^4, so G(y) = (1-p)^{1/4}.
            FamilyKind::Gpd4 => gpd_quantile(theta, (1.0 - p).powf(0.25)),
            FamilyKind::HalfT => halft_quantile_sf(self.alpha, p),
        }
    }
}
