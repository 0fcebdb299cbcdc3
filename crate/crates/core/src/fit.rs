//! Fit driver: sample the posterior, summarize it, polish the best point into
//! a stable chi-square minimum, and scan candidate model orders for selection
//! by AIC.

use crate::chain::{Chain, PosteriorSummary};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::likelihood::{
    aic, eta_total_error, reduced_chi_square, residual_terms, ChiSquareTerm, ModelSpec,
    PosteriorTarget, PriorSpec,
};
use crate::model::DetectorModel;
use crate::sampler::{run_sampler, ConvergenceWarning, InitDiagnostics, SamplerSettings};
use crate::simplex::nelder_mead;

/// Fit configuration: prior bounds plus sampler settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub prior: PriorSpec,
    pub settings: SamplerSettings,
    /// Refine the sampled maximum-posterior point with a deterministic simplex
    /// search before computing chi-square and AIC (default on).
    pub polish: bool,
}

impl FitOptions {
    pub fn new(settings: SamplerSettings) -> Self {
        Self {
            prior: PriorSpec::default(),
            settings,
            polish: true,
        }
    }
}

/// Complete result of one model fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub chain: Chain,
    pub summary: PosteriorSummary,
    /// Best parameters in the sampling parameterization.
    pub map_params: Vec<f64>,
    pub map_model: DetectorModel,
    pub chi2: f64,
    pub dof: usize,
    pub chi2_reduced: f64,
    pub aic: f64,
    /// Per-point residuals at the best parameters.
    pub terms: Vec<ChiSquareTerm>,
    pub acceptance_fraction: f64,
    pub tau: Option<Vec<f64>>,
    pub warnings: Vec<ConvergenceWarning>,
    pub init: InitDiagnostics,
    /// Posterior width of eta combined with the power-meter systematic.
    pub eta_sigma_stat: f64,
    pub eta_sigma_total: f64,
}

impl FitResult {
    pub fn k_params(&self) -> usize {
        self.spec.k_params()
    }
}

/// Fits `spec` to `data`. Deterministic given options and seed.
pub fn fit(data: &Dataset, spec: ModelSpec, opts: &FitOptions) -> Result<FitResult> {
    let k = spec.k_params();
    if data.len() <= k {
        return Err(Error::DegenerateFit(format!(
            "{} points cannot constrain {k} parameters (DOF < 1)",
            data.len()
        )));
    }

    let run = run_sampler(data, spec, &opts.prior, &opts.settings)?;
    let summary = run.chain.summarize()?;

    let target = PosteriorTarget::new(data, spec, opts.prior);
    let (sampled_map, _) = run
        .chain
        .max_posterior_sample()
        .ok_or_else(|| Error::DegenerateFit("empty chain".into()))?;

    let (map_params, chi2) = if opts.polish {
        let step: Vec<f64> = sampled_map
            .iter()
            .map(|&x| (1e-2 * x.abs()).max(1e-4))
            .collect();
        let (polished, chi2) = nelder_mead(
            |p| target.chi_square_at(p),
            &sampled_map,
            &step,
            2000,
            1e-12,
        );
        let sampled_chi2 = target.chi_square_at(&sampled_map);
        if chi2 <= sampled_chi2 {
            (polished, chi2)
        } else {
            (sampled_map, sampled_chi2)
        }
    } else {
        let chi2 = target.chi_square_at(&sampled_map);
        (sampled_map, chi2)
    };

    let map_model = spec.build_model(&map_params)?;
    let terms = residual_terms(&map_model, data);
    let dof = data.len() - k;
    let chi2_reduced = reduced_chi_square(chi2, data.len(), k)?;
    let aic_value = aic(chi2, k);

    let eta = &summary.params[0];
    let eta_sigma_stat = eta.half_width();
    let eta_sigma_total = eta_total_error(
        eta.median,
        eta_sigma_stat,
        data.meta.power_meter_relative_error,
    );

    let acceptance_fraction = run.chain.acceptance_fraction();
    Ok(FitResult {
        spec,
        chain: run.chain,
        summary,
        map_params,
        map_model,
        chi2,
        dof,
        chi2_reduced,
        aic: aic_value,
        terms,
        acceptance_fraction,
        tau: run.tau,
        warnings: run.warnings,
        init: run.init,
        eta_sigma_stat,
        eta_sigma_total,
    })
}

/// One row of a model-selection scan.
#[derive(Debug, Clone)]
pub struct SelectionRow {
    pub spec: ModelSpec,
    pub k: usize,
    pub outcome: std::result::Result<SelectionScore, String>,
    pub best: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SelectionScore {
    pub chi2: f64,
    pub chi2_reduced: f64,
    pub aic: f64,
    /// AIC distance from the best candidate.
    pub delta_aic: f64,
}

/// Fits the ideal threshold detector (k = 1) and every truncation order up to
/// `max_n_max`, ranking candidates by AIC. Individual fit failures are
/// recorded without aborting the scan.
pub fn select_models(data: &Dataset, max_n_max: usize, opts: &FitOptions) -> Result<Vec<SelectionRow>> {
    if max_n_max < 1 {
        return Err(Error::InvalidArgument("max_n_max must be >= 1".into()));
    }
    let mut specs = vec![ModelSpec::ideal_threshold()];
    specs.extend((1..=max_n_max).map(ModelSpec::fitted));

    let mut rows: Vec<SelectionRow> = specs
        .into_iter()
        .map(|spec| {
            let outcome = fit(data, spec, opts)
                .map(|f| SelectionScore {
                    chi2: f.chi2,
                    chi2_reduced: f.chi2_reduced,
                    aic: f.aic,
                    delta_aic: 0.0,
                })
                .map_err(|e| e.to_string());
            SelectionRow {
                spec,
                k: spec.k_params(),
                outcome,
                best: false,
            }
        })
        .collect();

    let min_aic = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok().map(|s| s.aic))
        .fold(f64::INFINITY, f64::min);
    if min_aic.is_finite() {
        for row in &mut rows {
            if let Ok(score) = &mut row.outcome {
                score.delta_aic = score.aic - min_aic;
                row.best = score.delta_aic == 0.0;
            }
        }
        // Break exact ties deterministically: keep only the first mark.
        let mut seen = false;
        for row in &mut rows {
            if row.best {
                if seen {
                    row.best = false;
                } else {
                    seen = true;
                }
            }
        }
    }
    Ok(rows)
}
