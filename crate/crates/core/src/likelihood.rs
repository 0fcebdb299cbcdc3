//! Orthogonal-distance chi-square and log likelihood.
//!
//! Each data point contributes a normalized orthogonal distance between the
//! point and the model curve, combining the vertical residual
//! `delta_p = P_click(<n>_j) - P_j` and the horizontal residual
//! `delta_n = P_click^{-1}(P_j) - <n>_j`:
//!
//! ```text
//! chi2_j = [ (sigma_P / delta_p)^2 + (sigma_n / delta_n)^2 ]^{-1}
//! ```
//!
//! evaluated in the algebraically equivalent singularity-free form
//! `(delta_p^2 delta_n^2) / (sigma_P^2 delta_n^2 + sigma_n^2 delta_p^2)`, so a
//! point lying exactly on the curve contributes zero instead of dividing by
//! zero. The log likelihood is `-chi2 / 2`.
//!
//! Saturated points (`P_j = 1`, where the curve has no inverse) fall back to
//! the vertical-only term and are flagged.

use crate::data::{DataPoint, Dataset};
use crate::error::{Error, Result};
use crate::model::{CoherentInput, DetectorModel};

/// One data point's contribution to the chi-square, with its residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareTerm {
    /// The chi-square contribution.
    pub value: f64,
    /// Vertical residual `P_click(<n>_j) - P_j`.
    pub delta_p: f64,
    /// Horizontal residual `P^{-1}(P_j) - <n>_j`; absent for saturated points.
    pub delta_n: Option<f64>,
    /// True when the inverse was undefined and the vertical-only term was used.
    pub saturated: bool,
}

/// Harmonic combination of a vertical and a horizontal residual.
///
/// Equals `[ (sigma_p/delta_p)^2 + (sigma_n/delta_n)^2 ]^{-1}` wherever that
/// expression is defined, and extends it by continuity to zero residuals.
pub fn harmonic_orthogonal_term(delta_p: f64, delta_n: f64, sigma_p: f64, sigma_n: f64) -> f64 {
    let num = (delta_p * delta_p) * (delta_n * delta_n);
    if num == 0.0 {
        return 0.0;
    }
    num / (sigma_p * sigma_p * delta_n * delta_n + sigma_n * sigma_n * delta_p * delta_p)
}

/// Chi-square contribution of one point under a monotone model.
pub fn orthogonal_chi_square_term(model: &DetectorModel, point: &DataPoint) -> Result<ChiSquareTerm> {
    if !model.is_monotone() {
        return Err(Error::NonInvertible(
            "orthogonal distance requires a monotone model".into(),
        ));
    }
    Ok(term_for_monotone(model, point))
}

fn term_for_monotone(model: &DetectorModel, point: &DataPoint) -> ChiSquareTerm {
    let input = CoherentInput::new(point.mean_photons).expect("validated data point");
    let delta_p = model.click_probability(input) - point.p_click;
    match model.inverse_click_probability(point.p_click) {
        Ok(n_inv) => {
            let delta_n = n_inv - point.mean_photons;
            ChiSquareTerm {
                value: harmonic_orthogonal_term(
                    delta_p,
                    delta_n,
                    point.sigma_p_click,
                    point.sigma_mean_photons,
                ),
                delta_p,
                delta_n: Some(delta_n),
                saturated: false,
            }
        }
        // P_j = 1 exactly: the curve approaches 1 only asymptotically, so the
        // horizontal residual is undefined and the vertical term is kept.
        Err(Error::OutOfDomain(_)) => vertical_term(delta_p, point),
        Err(_) => unreachable!("monotone model checked above"),
    }
}

fn vertical_term(delta_p: f64, point: &DataPoint) -> ChiSquareTerm {
    let r = delta_p / point.sigma_p_click;
    ChiSquareTerm {
        value: r * r,
        delta_p,
        delta_n: None,
        saturated: true,
    }
}

/// Per-point chi-square terms for a whole dataset.
///
/// Non-monotone models (possible only when the ordering prior is relaxed) have
/// no usable inverse; every point then falls back to the flagged vertical-only
/// term.
pub fn residual_terms(model: &DetectorModel, data: &Dataset) -> Vec<ChiSquareTerm> {
    if model.is_monotone() {
        data.points
            .iter()
            .map(|p| term_for_monotone(model, p))
            .collect()
    } else {
        data.points
            .iter()
            .map(|p| {
                let input = CoherentInput::new(p.mean_photons).expect("validated data point");
                vertical_term(model.click_probability(input) - p.p_click, p)
            })
            .collect()
    }
}

/// Total chi-square of the dataset under the model.
pub fn chi_square(model: &DetectorModel, data: &Dataset) -> f64 {
    residual_terms(model, data).iter().map(|t| t.value).sum()
}

/// Log likelihood `-chi2 / 2` under the orthogonal-distance error model.
pub fn log_likelihood(model: &DetectorModel, data: &Dataset) -> Result<f64> {
    if !model.is_monotone() {
        return Err(Error::NonInvertible(
            "log likelihood requires a monotone model".into(),
        ));
    }
    Ok(-0.5 * chi_square(model, data))
}

/// Flat prior bounds on the sampling parameterization `[log10(eta), p_1, ...]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub log10_eta_min: f64,
    pub log10_eta_max: f64,
    /// Enforce `p_1 <= p_2 <= ...` (the default; guarantees invertibility).
    pub monotone: bool,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            log10_eta_min: -12.0,
            log10_eta_max: 0.0,
            monotone: true,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.log10_eta_min.is_finite()
            && self.log10_eta_max.is_finite()
            && self.log10_eta_min < self.log10_eta_max)
        {
            return Err(Error::InvalidArgument(format!(
                "log10(eta) prior bounds [{}, {}] are not an interval",
                self.log10_eta_min, self.log10_eta_max
            )));
        }
        Ok(())
    }

    /// Log prior density up to a constant: 0 inside support, -inf outside.
    pub fn log_density(&self, params: &[f64]) -> f64 {
        if params.is_empty() {
            return f64::NEG_INFINITY;
        }
        let log10_eta = params[0];
        if !log10_eta.is_finite()
            || log10_eta < self.log10_eta_min
            || log10_eta > self.log10_eta_max
        {
            return f64::NEG_INFINITY;
        }
        let p = &params[1..];
        for &pi in p {
            if !pi.is_finite() || !(0.0..=1.0).contains(&pi) {
                return f64::NEG_INFINITY;
            }
        }
        if self.monotone && p.windows(2).any(|w| w[0] > w[1]) {
            return f64::NEG_INFINITY;
        }
        0.0
    }
}

/// Which model family is being fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    /// Truncation order of the click model.
    pub n_max: usize,
    /// Ideal threshold detector: fit `eta` only, all `p_i` pinned to 1.
    pub ideal: bool,
}

impl ModelSpec {
    pub fn fitted(n_max: usize) -> Self {
        Self { n_max, ideal: false }
    }

    pub fn ideal_threshold() -> Self {
        Self { n_max: 1, ideal: true }
    }

    /// Dimension of the sampling parameter vector.
    pub fn dim(&self) -> usize {
        if self.ideal {
            1
        } else {
            1 + self.n_max
        }
    }

    /// Number of free parameters `k` for information criteria.
    pub fn k_params(&self) -> usize {
        self.dim()
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec!["log10_eta".to_string()];
        if !self.ideal {
            for i in 1..=self.n_max {
                names.push(format!("p{i}"));
            }
        }
        names
    }

    /// Builds the detector model from a parameter vector inside the prior
    /// support.
    pub fn build_model(&self, params: &[f64]) -> Result<DetectorModel> {
        if params.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "parameter vector has length {}, expected {}",
                params.len(),
                self.dim()
            )));
        }
        let eta = 10f64.powf(params[0]);
        if self.ideal {
            DetectorModel::ideal(eta)
        } else {
            DetectorModel::new(eta, params[1..].to_vec())
        }
    }
}

/// The MCMC target density: log likelihood plus flat prior.
///
/// Evaluations are pure and reentrant, so walker proposals can be scored
/// concurrently.
pub struct PosteriorTarget<'a> {
    data: &'a Dataset,
    spec: ModelSpec,
    prior: PriorSpec,
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(data: &'a Dataset, spec: ModelSpec, prior: PriorSpec) -> Self {
        Self { data, spec, prior }
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    /// Log posterior density up to a constant; -inf outside the prior support.
    pub fn log_prob(&self, params: &[f64]) -> f64 {
        if self.prior.log_density(params) == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let model = match self.spec.build_model(params) {
            Ok(m) => m,
            Err(_) => return f64::NEG_INFINITY,
        };
        -0.5 * chi_square(&model, self.data)
    }

    /// Chi-square at a parameter vector; +inf outside the support. Used by the
    /// deterministic polish of the maximum-posterior point.
    pub fn chi_square_at(&self, params: &[f64]) -> f64 {
        let lp = self.log_prob(params);
        if lp == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            -2.0 * lp
        }
    }
}

/// Log posterior for the standard parameter vector `[log10(eta), p_1..p_n_max]`.
pub fn log_posterior(params: &[f64], data: &Dataset, prior: &PriorSpec) -> f64 {
    if params.len() < 2 {
        return f64::NEG_INFINITY;
    }
    PosteriorTarget::new(data, ModelSpec::fitted(params.len() - 1), *prior).log_prob(params)
}

/// Reduced chi-square `chi2 / (n_points - k_params)`.
pub fn reduced_chi_square(chi2: f64, n_points: usize, k_params: usize) -> Result<f64> {
    if n_points <= k_params {
        return Err(Error::DegenerateFit(format!(
            "{n_points} points cannot constrain {k_params} parameters (DOF < 1)"
        )));
    }
    Ok(chi2 / (n_points - k_params) as f64)
}

/// Akaike information criterion `2k + chi2` (for a Gaussian likelihood with
/// `l = -chi2/2`).
pub fn aic(chi2: f64, k_params: usize) -> f64 {
    debug_assert!(k_params >= 1);
    2.0 * k_params as f64 + chi2
}

/// Total error on the fitted efficiency: posterior width combined in
/// quadrature with the relative systematic of the power meter.
pub fn eta_total_error(eta_hat: f64, sigma_stat: f64, relative_systematic: f64) -> f64 {
    let sys = relative_systematic * eta_hat;
    (sigma_stat * sigma_stat + sys * sys).sqrt()
}
