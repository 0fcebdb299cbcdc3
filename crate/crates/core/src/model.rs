//! Click-probability model of a threshold single-photon detector probed with
//! coherent states.
//!
//! A detector is described by an external quantum efficiency `eta` (probability
//! that an incident photon is absorbed in the active area) and internal quantum
//! efficiencies `p_1..p_n_max` (probability that absorbing `i` photons produces
//! an electronic click). For a coherent input with mean photon number `n` per
//! pulse, the absorbed photon number is Poisson distributed with mean
//! `mu = eta * n`, and the click probability is
//!
//! ```text
//! P_click(n) = 1 - exp(-mu) * sum_{i=0}^{n_max} (1 - p_i) * mu^i / i!
//! ```
//!
//! with `p_0 = 0` (dark counts are filtered out upstream, in the events module)
//! and `p_i = 1` for every `i > n_max`.

use crate::error::{Error, Result};

/// Poisson weights are accumulated with the multiplicative recurrence in linear
/// space up to this mean; beyond it the no-click sum is evaluated in log space.
const MU_LINEAR_MAX: f64 = 700.0;

/// Absolute tolerance, in probability, for the numerical inverse of the click
/// curve.
pub const INVERSE_PROBABILITY_TOL: f64 = 1e-12;

/// Relative tolerance on the bracket width when inverting the click curve.
const INVERSE_RELATIVE_TOL: f64 = 1e-13;

/// A coherent probe state, identified by its mean photon number per pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentInput {
    mean_photons: f64,
}

impl CoherentInput {
    pub fn new(mean_photons: f64) -> Result<Self> {
        if !mean_photons.is_finite() || mean_photons < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "mean photon number must be finite and nonnegative, got {mean_photons}"
            )));
        }
        Ok(Self { mean_photons })
    }

    pub fn mean_photons(&self) -> f64 {
        self.mean_photons
    }
}

/// Detector parameterization: external efficiency plus the truncated list of
/// internal efficiencies `p_1..p_n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    eta: f64,
    p: Vec<f64>,
}

impl DetectorModel {
    /// Builds a model from `eta` in (0, 1] and internal efficiencies
    /// `p = [p_1, ..., p_n_max]`, each in [0, 1]. The list must be non-empty.
    ///
    /// Monotone ordering `p_1 <= ... <= p_n_max` is not enforced here; it is a
    /// prior constraint checked by [`DetectorModel::is_monotone`] and required
    /// by the inverse.
    pub fn new(eta: f64, p: Vec<f64>) -> Result<Self> {
        if !eta.is_finite() || eta <= 0.0 || eta > 1.0 {
            return Err(Error::InvalidModel(format!(
                "eta must lie in (0, 1], got {eta}"
            )));
        }
        if p.is_empty() {
            return Err(Error::InvalidModel(
                "at least one internal efficiency p_1 is required (n_max >= 1)".into(),
            ));
        }
        for (i, &pi) in p.iter().enumerate() {
            if !pi.is_finite() || !(0.0..=1.0).contains(&pi) {
                return Err(Error::InvalidModel(format!(
                    "p_{} must lie in [0, 1], got {pi}",
                    i + 1
                )));
            }
        }
        Ok(Self { eta, p })
    }

    /// Ideal threshold detector: every absorbed photon clicks (`p_1 = 1`).
    pub fn ideal(eta: f64) -> Result<Self> {
        Self::new(eta, vec![1.0])
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Internal efficiencies `p_1..p_n_max`.
    pub fn internal_efficiencies(&self) -> &[f64] {
        &self.p
    }

    pub fn n_max(&self) -> usize {
        self.p.len()
    }

    /// Whether the stored efficiencies satisfy `p_1 <= p_2 <= ... <= 1`, the
    /// ordering that guarantees a strictly increasing click curve.
    pub fn is_monotone(&self) -> bool {
        self.p.windows(2).all(|w| w[0] <= w[1])
    }

    /// Mean absorbed photon number `mu = eta * <n>`.
    pub fn effective_photon_number(&self, input: CoherentInput) -> f64 {
        self.eta * input.mean_photons
    }

    /// Probability of an `i`-photon detection event:
    /// `p_i * exp(-mu) * mu^i / i!`, with `p_0 = 0` and `p_i = 1` above the
    /// truncation order.
    pub fn i_photon_click_probability(&self, input: CoherentInput, i: usize) -> f64 {
        let p_i = if i == 0 {
            0.0
        } else if i <= self.p.len() {
            self.p[i - 1]
        } else {
            1.0
        };
        if p_i == 0.0 {
            return 0.0;
        }
        p_i * poisson_pmf(i, self.effective_photon_number(input))
    }

    /// Total click probability for the given coherent input.
    pub fn click_probability(&self, input: CoherentInput) -> f64 {
        self.click_probability_mu(self.effective_photon_number(input))
    }

    /// Click probability as a function of the effective photon number.
    ///
    /// When the no-click probability is large (small click probability) the
    /// complement form `1 - noclick` would cancel, so the result is assembled
    /// from the all-positive sum `exp(-mu) * (sum_i p_i mu^i/i! + tail)`
    /// instead, which keeps the relative error near machine precision even for
    /// click probabilities of order 1e-300.
    pub(crate) fn click_probability_mu(&self, mu: f64) -> f64 {
        if mu <= 0.0 {
            return 0.0;
        }
        if mu > MU_LINEAR_MAX {
            return self.click_probability_mu_log(mu);
        }

        let mut term = 1.0; // mu^i / i!, starting at i = 0
        let mut noclick_sum = 1.0; // i = 0 contributes (1 - p_0) = 1
        for (j, &p) in self.p.iter().enumerate() {
            term *= mu / (j as f64 + 1.0);
            noclick_sum += (1.0 - p) * term;
        }
        let noclick = (-mu).exp() * noclick_sum;
        if noclick <= 0.5 {
            return 1.0 - noclick;
        }

        // Small-probability regime.
        let mut term = 1.0;
        let mut sum = 0.0;
        for (j, &p) in self.p.iter().enumerate() {
            term *= mu / (j as f64 + 1.0);
            sum += p * term;
        }
        // Tail sum_{i > n_max} mu^i / i!; all terms positive, converges because
        // noclick > 0.5 bounds mu to order n_max.
        let mut i = self.p.len() as f64;
        loop {
            i += 1.0;
            term *= mu / i;
            sum += term;
            if term < sum * 1e-18 || i > 1e6 {
                break;
            }
        }
        (-mu).exp() * sum
    }

    fn click_probability_mu_log(&self, mu: f64) -> f64 {
        // ln(noclick) = -mu + logsumexp_i [ ln(1 - p_i) + i ln(mu) - ln(i!) ]
        let ln_mu = mu.ln();
        let mut ln_terms = vec![0.0]; // i = 0 term
        let mut ln_fact = 0.0;
        for (j, &p) in self.p.iter().enumerate() {
            let i = (j + 1) as f64;
            ln_fact += i.ln();
            if p < 1.0 {
                ln_terms.push((1.0 - p).ln() + i * ln_mu - ln_fact);
            }
        }
        let m = ln_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + ln_terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln();
        1.0 - (lse - mu).exp()
    }

    /// Slope of the click curve at zero flux, `dP/d<n> = eta * p_1`.
    pub fn low_flux_slope(&self) -> f64 {
        self.eta * self.p[0]
    }

    /// Inverts the click curve: mean photon number at which the model reaches
    /// `target`, to [`INVERSE_PROBABILITY_TOL`] in probability and
    /// `1e-13` relative in the abscissa.
    ///
    /// Requires a monotone model (strictly increasing curve). Targets outside
    /// `[0, 1)` are out of the invertible domain because the curve approaches 1
    /// only asymptotically.
    pub fn inverse_click_probability(&self, target: f64) -> Result<f64> {
        if !target.is_finite() || !(0.0..1.0).contains(&target) {
            return Err(Error::OutOfDomain(target));
        }
        if !self.is_monotone() {
            return Err(Error::NonInvertible(
                "internal efficiencies violate the monotone ordering p_1 <= ... <= p_n_max".into(),
            ));
        }
        if target == 0.0 {
            return Ok(0.0);
        }
        Ok(self.invert_mu(target) / self.eta)
    }

    /// Bracketed root finding in the effective-photon-number domain: geometric
    /// bracket expansion from the ideal-detector lower bound, then Illinois
    /// false-position steps (secant with a guaranteed shrinking bracket).
    fn invert_mu(&self, target: f64) -> f64 {
        // The model never exceeds the ideal curve 1 - exp(-mu), so the ideal
        // inverse is a lower bound for the root.
        let mut lo = -(-target).ln_1p();
        let mut f_lo = self.click_probability_mu(lo) - target;
        if f_lo == 0.0 {
            return lo;
        }

        // Low-flux linearization P ~ p_1 * mu as the first upper guess.
        let p1 = self.p[0];
        let mut hi = if p1 > 0.0 {
            (target / p1).max(lo * 2.0).max(1e-300)
        } else {
            (lo * 2.0).max(1.0)
        };
        let mut f_hi = self.click_probability_mu(hi) - target;
        while f_hi < 0.0 {
            lo = hi;
            f_lo = f_hi;
            hi *= 2.0;
            f_hi = self.click_probability_mu(hi) - target;
        }
        if f_hi == 0.0 {
            return hi;
        }

        let mut last_side = 0i8;
        for _ in 0..500 {
            let denom = f_hi - f_lo;
            let mut mid = if denom != 0.0 {
                hi - f_hi * (hi - lo) / denom
            } else {
                0.5 * (lo + hi)
            };
            if !mid.is_finite() || mid <= lo || mid >= hi {
                mid = 0.5 * (lo + hi);
            }
            let f_mid = self.click_probability_mu(mid) - target;
            if f_mid == 0.0 {
                return mid;
            }
            if f_mid < 0.0 {
                lo = mid;
                f_lo = f_mid;
                if last_side == -1 {
                    f_hi *= 0.5; // Illinois weighting
                }
                last_side = -1;
            } else {
                hi = mid;
                f_hi = f_mid;
                if last_side == 1 {
                    f_lo *= 0.5;
                }
                last_side = 1;
            }
            if f_mid.abs() <= INVERSE_PROBABILITY_TOL && (hi - lo) <= INVERSE_RELATIVE_TOL * mid {
                return mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Poisson probability mass `exp(-mu) mu^i / i!`.
fn poisson_pmf(i: usize, mu: f64) -> f64 {
    if mu <= 0.0 {
        return if i == 0 { 1.0 } else { 0.0 };
    }
    if mu <= MU_LINEAR_MAX && i <= 1000 {
        let mut t = (-mu).exp();
        for k in 1..=i {
            t *= mu / k as f64;
        }
        t
    } else {
        (i as f64 * mu.ln() - mu - ln_factorial(i)).exp()
    }
}

fn ln_factorial(i: usize) -> f64 {
    if i <= 1000 {
        (2..=i).map(|k| (k as f64).ln()).sum()
    } else {
        // Stirling with the leading correction; plenty for tail weights.
        let n = i as f64;
        n * n.ln() - n + 0.5 * (2.0 * std::f64::consts::PI * n).ln() + 1.0 / (12.0 * n)
    }
}
