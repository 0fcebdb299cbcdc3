//! Affine-invariant ensemble sampler (stretch moves).
//!
//! An ensemble of `W` walkers explores the target density. At every step each
//! walker in one half of the ensemble proposes a move along the line through a
//! randomly chosen walker of the other half,
//!
//! ```text
//! X' = X_c + z (X - X_c),   z ~ g(z) ∝ 1/sqrt(z) on [1/a, a]
//! ```
//!
//! accepted with probability `min(1, z^{d-1} exp(l' - l))`. The two
//! half-ensembles are updated alternately, so all proposals within a half are
//! independent and can be evaluated concurrently.
//!
//! Every random draw comes from a counter-based stream keyed on
//! `(seed, step, walker)`, making runs bitwise reproducible regardless of how
//! proposals are scheduled across threads.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::chain::{Chain, ChainMeta};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::likelihood::{ModelSpec, PosteriorTarget, PriorSpec};

/// Default walker count.
pub const DEFAULT_WALKERS: usize = 32;
/// Default stretch-move scale parameter.
pub const DEFAULT_STRETCH_SCALE: f64 = 2.0;

/// Counter-based pseudo-random stream (SplitMix64).
#[derive(Debug, Clone, Copy)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }

    /// Uniform draw in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in [0, n).
    pub fn next_index(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}

fn mix64(z: u64) -> u64 {
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The random stream feeding one walker's proposal at one step.
fn proposal_stream(seed: u64, step: u64, walker: u64) -> SplitMix64 {
    let h = mix64(step.wrapping_mul(0xA076_1D64_78BD_642F) ^ walker.wrapping_mul(0xE703_7ED1_A0B4_28DB));
    SplitMix64::new(mix64(seed ^ h))
}

/// Stretch factor `z = ((a-1) u + 1)^2 / a`, distributed as 1/sqrt(z) on
/// [1/a, a] for uniform `u`.
pub fn sample_stretch_factor(a: f64, u: f64) -> f64 {
    let s = (a - 1.0) * u + 1.0;
    s * s / a
}

/// Current positions and log densities of the walker ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    walkers: usize,
    dim: usize,
    /// Row-major `walkers x dim`.
    params: Vec<f64>,
    log_probs: Vec<f64>,
    rng_seed: u64,
    step_index: u64,
}

impl EnsembleState {
    /// Builds a state from explicit positions, evaluating the target at each.
    /// Requires an even walker count of at least `2 * dim`, and every walker
    /// inside the support (finite log density).
    pub fn from_positions<F>(positions: Vec<Vec<f64>>, target: &F, seed: u64) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let walkers = positions.len();
        if walkers < 2 || !walkers.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "walker count must be even and >= 2, got {walkers}"
            )));
        }
        let dim = positions[0].len();
        if dim == 0 || positions.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument(
                "walker positions must share a nonzero dimension".into(),
            ));
        }
        if walkers < 2 * dim {
            return Err(Error::InvalidArgument(format!(
                "need at least {} walkers for dimension {dim}, got {walkers}",
                2 * dim
            )));
        }
        let log_probs: Vec<f64> = positions.par_iter().map(|p| target(p)).collect();
        if let Some(i) = log_probs.iter().position(|lp| !lp.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "walker {i} starts outside the prior support (log prob {})",
                log_probs[i]
            )));
        }
        Ok(Self {
            walkers,
            dim,
            params: positions.into_iter().flatten().collect(),
            log_probs,
            rng_seed: seed,
            step_index: 0,
        })
    }

    /// State for resuming a run: same as [`EnsembleState::from_positions`] but
    /// continuing the per-step random streams from `step_index`. Resuming from
    /// a chain's final positions at its total step count reproduces exactly
    /// the samples a longer run would have drawn.
    pub fn resumed<F>(
        positions: Vec<Vec<f64>>,
        target: &F,
        seed: u64,
        step_index: u64,
    ) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let mut state = Self::from_positions(positions, target, seed)?;
        state.step_index = step_index;
        Ok(state)
    }

    pub fn walkers(&self) -> usize {
        self.walkers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn walker(&self, w: usize) -> &[f64] {
        &self.params[w * self.dim..(w + 1) * self.dim]
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }
}

/// Advances the ensemble by one stretch-move step (both half-ensembles).
/// Returns the number of accepted proposals.
pub fn stretch_step<F>(state: &mut EnsembleState, target: &F, a: f64) -> usize
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert!(a > 1.0, "stretch scale must exceed 1");
    let half = state.walkers / 2;
    let dim = state.dim;
    let mut accepted = 0;

    for half_idx in 0..2 {
        let (active_start, other_start) = if half_idx == 0 { (0, half) } else { (half, 0) };

        // The complementary half is frozen during this update, so proposals
        // are independent; evaluate them in parallel and merge in walker order.
        let state_ref = &*state;
        let updates: Vec<Option<(Vec<f64>, f64)>> = (0..half)
            .into_par_iter()
            .map(|i| {
                let w = active_start + i;
                let mut rng =
                    proposal_stream(state_ref.rng_seed, state_ref.step_index, w as u64);
                let z = sample_stretch_factor(a, rng.next_f64());
                let partner = other_start + rng.next_index(half);
                let x = state_ref.walker(w);
                let c = state_ref.walker(partner);
                let proposal: Vec<f64> =
                    (0..dim).map(|k| c[k] + z * (x[k] - c[k])).collect();
                let lp = target(&proposal);
                let lp = if lp.is_nan() { f64::NEG_INFINITY } else { lp };
                let ln_accept =
                    (dim as f64 - 1.0) * z.ln() + lp - state_ref.log_probs[w];
                if ln_accept > rng.next_f64().ln() {
                    Some((proposal, lp))
                } else {
                    None
                }
            })
            .collect();

        for (i, update) in updates.into_iter().enumerate() {
            if let Some((proposal, lp)) = update {
                let w = active_start + i;
                state.params[w * dim..(w + 1) * dim].copy_from_slice(&proposal);
                state.log_probs[w] = lp;
                accepted += 1;
            }
        }
    }

    state.step_index += 1;
    accepted
}

/// Runs `steps` stretch moves from `state`, recording the ensemble after every
/// step into a raw (unthinned) chain.
pub fn sample_target<F>(
    target: &F,
    mut state: EnsembleState,
    steps: usize,
    a: f64,
    param_names: Vec<String>,
) -> Chain
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let walkers = state.walkers;
    let dim = state.dim;
    let mut samples = Vec::with_capacity(steps * walkers * dim);
    let mut log_probs = Vec::with_capacity(steps * walkers);
    let mut step_indices = Vec::with_capacity(steps);
    let mut accepted = 0u64;

    for _ in 0..steps {
        accepted += stretch_step(&mut state, target, a) as u64;
        step_indices.push(state.step_index - 1);
        samples.extend_from_slice(&state.params);
        log_probs.extend_from_slice(&state.log_probs);
    }

    Chain::from_parts(
        ChainMeta {
            walkers,
            dim,
            stretch_scale: a,
            seed: state.rng_seed,
            total_steps: steps as u64,
            burn_in: 0,
            thin: 1,
        },
        param_names,
        step_indices,
        samples,
        log_probs,
        accepted,
        (steps * walkers) as u64,
    )
}

/// Sampler configuration. `burn_in`/`thin` of `None` select the
/// autocorrelation-driven defaults `max(1000, 10 tau)` and `ceil(tau / 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerSettings {
    pub walkers: usize,
    pub steps: usize,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub stretch_scale: f64,
    pub seed: u64,
}

impl SamplerSettings {
    pub fn new(steps: usize, seed: u64) -> Self {
        Self {
            walkers: DEFAULT_WALKERS,
            steps,
            burn_in: None,
            thin: None,
            stretch_scale: DEFAULT_STRETCH_SCALE,
            seed,
        }
    }
}

/// Non-fatal diagnostics raised by a sampler run.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvergenceWarning {
    /// Mean acceptance fraction outside [0.1, 0.9].
    AcceptanceFraction(f64),
    /// Total steps below 50x the estimated integrated autocorrelation time.
    ShortRun { steps: usize, tau: f64 },
    /// The windowed autocorrelation estimator did not converge.
    AutocorrelationUnreliable(String),
}

impl std::fmt::Display for ConvergenceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::AcceptanceFraction(a) => {
                write!(f, "acceptance fraction {a:.3} outside [0.1, 0.9]")
            }
            Self::ShortRun { steps, tau } => write!(
                f,
                "run of {steps} steps is shorter than 50 x tau ({tau:.1})"
            ),
            Self::AutocorrelationUnreliable(m) => {
                write!(f, "autocorrelation estimate unreliable: {m}")
            }
        }
    }
}

/// How the start point for the walker ball was chosen.
#[derive(Debug, Clone, PartialEq)]
pub struct InitDiagnostics {
    /// Least-squares low-flux slope estimate of `eta * p_1`.
    pub slope_estimate: f64,
    /// True when fewer than two points had `P < 0.1` and the slope fell back
    /// to a fit through all points.
    pub used_global_slope: bool,
}

/// Seeds walker positions in a tight ball around a heuristic start:
/// `log10(eta p_1)` from the low-flux slope of the data, internal efficiencies
/// at `0.9 i / n_max`. Deterministic for a fixed seed, and every walker
/// satisfies the monotone ordering by construction.
pub fn initialize_positions(
    data: &Dataset,
    spec: ModelSpec,
    prior: &PriorSpec,
    walkers: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, InitDiagnostics)> {
    let dim = spec.dim();
    if walkers < 2 * dim || !walkers.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "walker count must be even and >= {}, got {walkers}",
            2 * dim
        )));
    }

    let low_flux: Vec<&crate::data::DataPoint> =
        data.points.iter().filter(|p| p.p_click < 0.1).collect();
    let used_global_slope = low_flux.len() < 2;
    let slope_points: Vec<&crate::data::DataPoint> = if used_global_slope {
        data.points.iter().collect()
    } else {
        low_flux
    };
    // Least squares through the origin: P ~ s n.
    let num: f64 = slope_points
        .iter()
        .map(|p| p.mean_photons * p.p_click)
        .sum();
    let den: f64 = slope_points
        .iter()
        .map(|p| p.mean_photons * p.mean_photons)
        .sum();
    let slope = (num / den).max(1e-300);

    let p_start: Vec<f64> = if spec.ideal {
        Vec::new()
    } else {
        (1..=spec.n_max)
            .map(|i| 0.9 * i as f64 / spec.n_max as f64)
            .collect()
    };
    let p1_start = if spec.ideal { 1.0 } else { p_start[0] };
    let margin = 1e-6 * (prior.log10_eta_max - prior.log10_eta_min);
    let log10_eta = (slope / p1_start).log10().clamp(
        prior.log10_eta_min + margin,
        prior.log10_eta_max - margin,
    );

    let mut center = vec![log10_eta];
    center.extend_from_slice(&p_start);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(walkers);
    for _ in 0..walkers {
        let mut w: Vec<f64> = center
            .iter()
            .map(|&c| {
                let g: f64 = rng.sample(StandardNormal);
                c * (1.0 + 1e-3 * g)
            })
            .collect();
        w[0] = w[0].clamp(
            prior.log10_eta_min + margin,
            prior.log10_eta_max - margin,
        );
        for pk in w[1..].iter_mut() {
            *pk = pk.clamp(1e-9, 1.0 - 1e-9);
        }
        // Sorting restores the ordering constraint after perturbation.
        w[1..].sort_by(|a, b| a.partial_cmp(b).unwrap());
        positions.push(w);
    }

    Ok((
        positions,
        InitDiagnostics {
            slope_estimate: slope,
            used_global_slope,
        },
    ))
}

/// Spec-signature wrapper: initialized ensemble for an `n_max`-parameter fit
/// under the default prior.
pub fn initialize_ensemble(
    data: &Dataset,
    n_max: usize,
    walkers: usize,
    seed: u64,
) -> Result<(EnsembleState, InitDiagnostics)> {
    let spec = ModelSpec::fitted(n_max);
    let prior = PriorSpec::default();
    let (positions, diag) = initialize_positions(data, spec, &prior, walkers, seed)?;
    let target = PosteriorTarget::new(data, spec, prior);
    let state = EnsembleState::from_positions(positions, &|p: &[f64]| target.log_prob(p), seed)?;
    Ok((state, diag))
}

/// Result of a posterior sampling run.
#[derive(Debug, Clone)]
pub struct SamplerRun {
    /// Post-burn-in, thinned chain.
    pub chain: Chain,
    pub warnings: Vec<ConvergenceWarning>,
    pub init: InitDiagnostics,
    /// Per-parameter integrated autocorrelation times, when estimable.
    pub tau: Option<Vec<f64>>,
}

/// Samples the posterior of `spec` given `data`, returning the thinned chain
/// with convergence diagnostics. Deterministic for fixed settings and seed,
/// independent of worker-thread count.
pub fn run_sampler(
    data: &Dataset,
    spec: ModelSpec,
    prior: &PriorSpec,
    settings: &SamplerSettings,
) -> Result<SamplerRun> {
    if settings.steps == 0 {
        return Err(Error::InvalidArgument("step count must be positive".into()));
    }
    if !(settings.stretch_scale.is_finite() && settings.stretch_scale > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "stretch scale must exceed 1, got {}",
            settings.stretch_scale
        )));
    }
    prior.validate()?;
    let (positions, init) =
        initialize_positions(data, spec, prior, settings.walkers, settings.seed)?;
    let target = PosteriorTarget::new(data, spec, *prior);
    let log_prob = |p: &[f64]| target.log_prob(p);
    let state = EnsembleState::from_positions(positions, &log_prob, settings.seed)?;

    let raw = sample_target(
        &log_prob,
        state,
        settings.steps,
        settings.stretch_scale,
        spec.param_names(),
    );

    let mut warnings = Vec::new();
    let acceptance = raw.acceptance_fraction();
    if !(0.1..=0.9).contains(&acceptance) {
        warnings.push(ConvergenceWarning::AcceptanceFraction(acceptance));
    }

    let tau = match raw.autocorrelation_time() {
        Ok(taus) => Some(taus),
        Err(e) => {
            warnings.push(ConvergenceWarning::AutocorrelationUnreliable(e.to_string()));
            None
        }
    };
    let tau_max = tau
        .as_ref()
        .map(|t| t.iter().cloned().fold(1.0f64, f64::max))
        .unwrap_or(settings.steps as f64 / 10.0);
    if (settings.steps as f64) < 50.0 * tau_max {
        warnings.push(ConvergenceWarning::ShortRun {
            steps: settings.steps,
            tau: tau_max,
        });
    }

    let burn_in = settings
        .burn_in
        .unwrap_or_else(|| (10.0 * tau_max).ceil().max(1000.0) as usize)
        .min(settings.steps - 1);
    let thin = settings
        .thin
        .unwrap_or_else(|| (tau_max / 2.0).ceil().max(1.0) as usize)
        .max(1);

    Ok(SamplerRun {
        chain: raw.burn_and_thin(burn_in, thin),
        warnings,
        init,
        tau,
    })
}
