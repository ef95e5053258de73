//! Grid-based representation of the nonparametric density on (0,1).
//!
//! A log-field `omega` evaluated on a fixed grid is turned into a density by
//! exponentiating, linearly interpolating and normalizing with the exact
//! trapezoid integral of the interpolant. The CDF of the interpolant is
//! piecewise quadratic and is inverted in closed form.

use crate::error::{Error, Result};

/// Evaluation grid `0 = t_1 < ... < t_L = 1`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    /// Equally spaced grid with `len` points including both endpoints.
    pub fn uniform(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidInput(format!("grid needs >= 2 points, got {len}")));
        }
        let step = 1.0 / (len - 1) as f64;
        let mut points: Vec<f64> = (0..len).map(|i| i as f64 * step).collect();
        points[len - 1] = 1.0;
        Ok(Self { points })
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return Err(Error::InvalidInput("grid must start at 0 and end at 1".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("grid must be strictly increasing".into()));
        }
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

/// A density on (0,1) given by positive values on a [`Grid`], interpreted as a
/// piecewise-linear interpolant normalized by its exact trapezoid integral.
#[derive(Debug, Clone)]
pub struct GridDensity {
    grid: Grid,
    /// Unnormalized values `exp(omega - shift)`.
    h: Vec<f64>,
    /// `omega - shift`, kept for underflow-safe log evaluation.
    log_h: Vec<f64>,
    /// Trapezoid integral of the interpolant of `h`.
    norm: f64,
    log_norm: f64,
    /// Cumulative unnormalized mass up to each grid point.
    cum: Vec<f64>,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl GridDensity {
    /// Logistic transform of a log-field: `psi = exp(omega) / integral`.
    ///
    /// Shift-invariant: adding a constant to all of `omega` yields the same
    /// density, so values are centered at their maximum before exponentiating.
    pub fn logistic_transform(omega: &[f64], grid: &Grid) -> Result<Self> {
        if omega.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "omega length {} does not match grid length {}",
                omega.len(),
                grid.len()
            )));
        }
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite omega value".into()));
        }
        let shift = omega.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_h: Vec<f64> = omega.iter().map(|&w| w - shift).collect();
        let h: Vec<f64> = log_h.iter().map(|&w| w.exp()).collect();
        let pts = grid.points();
        let mut cum = Vec::with_capacity(grid.len());
        cum.push(0.0);
        let mut acc = 0.0;
        for l in 0..grid.len() - 1 {
            acc += 0.5 * (h[l] + h[l + 1]) * (pts[l + 1] - pts[l]);
            cum.push(acc);
        }
        let norm = acc;
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numerical(format!("degenerate normalization {norm}")));
        }
        // the shift pins max(h) to 1, so norm is at least half the widest
        // cell and the plain logarithm is safe
        let log_norm = norm.ln();
        Ok(Self { grid: grid.clone(), h, log_h, norm, log_norm, cum })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Normalized density values at the grid points.
    pub fn values(&self) -> Vec<f64> {
        self.h.iter().map(|&v| v / self.norm).collect()
    }

    /// Trapezoid integral of the unnormalized interpolant, in the shifted
    /// representation.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    fn cell_of(&self, u: f64) -> usize {
        let pts = self.grid.points();
        // rightmost cell index l with pts[l] <= u, capped at L-2
        match pts.binary_search_by(|p| p.partial_cmp(&u).unwrap()) {
            Ok(l) => l.min(pts.len() - 2),
            Err(ins) => ins - 1,
        }
    }

    /// Density value at `u` by linear interpolation.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("eval requires u in [0,1], got {u}")));
        }
        let l = self.cell_of(u);
        let pts = self.grid.points();
        let t = (u - pts[l]) / (pts[l + 1] - pts[l]);
        Ok((self.h[l] + (self.h[l + 1] - self.h[l]) * t) / self.norm)
    }

    /// Log-density at `u`, stable when the interpolated value underflows.
    pub fn log_eval(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("log_eval requires u in [0,1], got {u}")));
        }
        let l = self.cell_of(u);
        let pts = self.grid.points();
        let t = (u - pts[l]) / (pts[l + 1] - pts[l]);
        let v = if t <= 0.0 {
            self.log_h[l]
        } else if t >= 1.0 {
            self.log_h[l + 1]
        } else {
            log_add_exp(self.log_h[l] + (1.0 - t).ln(), self.log_h[l + 1] + t.ln())
        };
        Ok(v - self.log_norm)
    }

    /// Sum of log-density values at pre-sorted points, via a single forward
    /// merge pass over the grid.
    pub fn sum_log_eval_sorted(&self, us: &[f64]) -> Result<f64> {
        let pts = self.grid.points();
        let mut l = 0usize;
        let mut total = 0.0;
        for &u in us {
            if !(0.0..=1.0).contains(&u) {
                return Err(Error::Domain(format!("sorted eval requires u in [0,1], got {u}")));
            }
            while l + 2 < pts.len() && pts[l + 1] <= u {
                l += 1;
            }
            let t = (u - pts[l]) / (pts[l + 1] - pts[l]);
            let v = if t <= 0.0 {
                self.log_h[l]
            } else if t >= 1.0 {
                self.log_h[l + 1]
            } else {
                log_add_exp(self.log_h[l] + (1.0 - t).ln(), self.log_h[l + 1] + t.ln())
            };
            total += v - self.log_norm;
        }
        Ok(total)
    }

    /// Distribution function: exact integral of the normalized interpolant.
    pub fn cdf(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("cdf requires u in [0,1], got {u}")));
        }
        let l = self.cell_of(u);
        let pts = self.grid.points();
        let w = pts[l + 1] - pts[l];
        let d = u - pts[l];
        let slope = (self.h[l + 1] - self.h[l]) / w;
        Ok((self.cum[l] + self.h[l] * d + 0.5 * slope * d * d) / self.norm)
    }

    /// Quantile function: inverts [`Self::cdf`] by solving the quadratic
    /// within the bracketing cell.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!("quantile requires q in [0,1], got {q}")));
        }
        let target = q * self.norm;
        let pts = self.grid.points();
        // bracketing cell: largest l with cum[l] <= target
        let l = match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&target).unwrap())
        {
            Ok(l) => l.min(pts.len() - 2),
            Err(ins) => ins - 1,
        };
        let w = pts[l + 1] - pts[l];
        let mass = target - self.cum[l];
        let slope = (self.h[l + 1] - self.h[l]) / w;
        let cell_mass = 0.5 * (self.h[l] + self.h[l + 1]) * w;
        // Solve h_l d + slope d^2 / 2 = mass. Near-linear cells fall back to
        // linear inversion; otherwise use the cancellation-free root form.
        let d = if slope.abs() * w * w < 1e-14 * cell_mass.max(f64::MIN_POSITIVE) {
            mass / self.h[l]
        } else {
            let disc = self.h[l] * self.h[l] + 2.0 * slope * mass;
            2.0 * mass / (self.h[l] + disc.max(0.0).sqrt())
        };
        Ok((pts[l] + d.clamp(0.0, w)).min(1.0))
    }
}
