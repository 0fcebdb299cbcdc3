//! Detector tomography for single-photon threshold detectors probed with
//! coherent states.
//!
//! The crate estimates a detector's external quantum efficiency and its
//! per-photon-number internal quantum efficiencies from click statistics
//! measured over a range of laser powers:
//!
//! - [`model`]: the truncated click-probability curve, its numerical inverse
//!   and its low-flux limit.
//! - [`likelihood`]: the orthogonal-distance (errors-in-variables) chi-square,
//!   flat priors, reduced chi-square and AIC.
//! - [`sampler`] / [`chain`]: affine-invariant ensemble MCMC with
//!   reproducible counter-based randomness, convergence diagnostics, posterior
//!   summaries, chain persistence and corner-histogram export.
//! - [`events`]: time-tag streams, coincidence-window classification, Jeffreys
//!   click-probability estimation, power-to-photon-number conversion and the
//!   dead-time overlap estimate.
//! - [`synth`]: seeded synthetic experiments and the geometric taper model for
//!   the effective single-photon efficiency.
//! - [`mod@fit`]: the end-to-end fit driver and AIC model selection.

pub mod chain;
pub mod data;
pub mod error;
pub mod events;
pub mod fit;
pub mod likelihood;
pub mod model;
pub mod sampler;
pub mod simplex;
pub mod synth;

pub use chain::{Chain, ChainMeta, CornerExport, ParamSummary, PosteriorSummary};
pub use data::{DataPoint, Dataset, ExperimentMeta};
pub use error::{Error, Result};
pub use events::{
    apply_dead_time_correction, build_dataset, classify_events, dead_time_overlap_rate,
    estimate_click_probability, power_to_mean_photons, PowerReading, RawTag, TagStream,
    TimeTagRecord, WindowConfig, WindowPlacement,
};
pub use fit::{fit, select_models, FitOptions, FitResult, SelectionRow};
pub use likelihood::{
    aic, eta_total_error, log_likelihood, log_posterior, orthogonal_chi_square_term,
    reduced_chi_square, ChiSquareTerm, ModelSpec, PosteriorTarget, PriorSpec,
};
pub use model::{CoherentInput, DetectorModel};
pub use sampler::{
    initialize_ensemble, run_sampler, sample_target, stretch_step, ConvergenceWarning,
    EnsembleState, SamplerRun, SamplerSettings,
};
pub use synth::{
    generate_dataset, generate_with_tags, log_spaced_powers, long_wire_p2_bound,
    taper_effective_p1, taper_length_for_p1, BridgeGeometry, GroundTruth,
};
