//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use dtomo::likelihood::ModelSpec;
use dtomo::{
    apply_dead_time_correction, build_dataset, dead_time_overlap_rate, fit, generate_dataset,
    generate_with_tags, log_spaced_powers, select_models, CoherentInput, Dataset, DetectorModel,
    ExperimentMeta, FitOptions, GroundTruth, PowerReading, PriorSpec, SamplerSettings, TagStream,
    WindowConfig, WindowPlacement,
};

use crate::report::FitReport;

/// Environment variable overriding the default output directory.
pub const OUT_DIR_ENV: &str = "DTOMO_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "dtomo",
    about = "Detector tomography from coherent-state click statistics",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (and optionally tag streams) from known
    /// ground truth.
    Simulate(SimulateArgs),
    /// Build a dataset from recorded time-tag streams.
    Events(EventsArgs),
    /// Fit a detector model by ensemble MCMC.
    Fit(FitArgs),
    /// Scan model orders and rank them by AIC.
    Select(SelectArgs),
    /// Emit plot-ready tables from a fit report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// True external quantum efficiency.
    #[arg(long)]
    pub eta: f64,
    /// True internal efficiencies p1[,p2,...], ordered.
    #[arg(long, value_delimiter = ',', required = true)]
    pub p: Vec<f64>,
    /// Power grid as start:stop:COUNTlog or start:stop:COUNTlin (watts).
    #[arg(long)]
    pub powers: String,
    /// Laser pulses per power setting.
    #[arg(long, default_value_t = 300_000)]
    pub trials: u64,
    /// Relative power-meter noise.
    #[arg(long, default_value_t = 0.03)]
    pub noise: f64,
    /// Dark events per second (only affects emitted tag streams).
    #[arg(long, default_value_t = 0.0)]
    pub dark_rate: f64,
    /// RNG seed (mandatory: runs must be reproducible).
    #[arg(long)]
    pub seed: u64,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one tag-stream file per setting into this directory.
    #[arg(long)]
    pub tags_dir: Option<PathBuf>,
    /// Coincidence window start used for emitted tag streams (seconds).
    #[arg(long, default_value_t = 5e-8)]
    pub window_start: f64,
    /// Coincidence window width (seconds).
    #[arg(long, default_value_t = dtomo::events::DEFAULT_WINDOW_WIDTH)]
    pub window: f64,
    #[command(flatten)]
    pub meta: MetaArgs,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct MetaArgs {
    /// Laser wavelength (meters).
    #[arg(long, default_value_t = 850e-9)]
    pub wavelength: f64,
    /// Pulse repetition rate (hertz).
    #[arg(long, default_value_t = 5e6)]
    pub rep_rate: f64,
    /// Relative power-meter error recorded in the dataset.
    #[arg(long, default_value_t = 0.03)]
    pub power_error: f64,
    /// Splitter calibration factor (monitored -> incident power).
    #[arg(long, default_value_t = 1.0)]
    pub splitter: f64,
}

#[derive(Debug, Args)]
pub struct EventsArgs {
    /// Tag-stream files, one per power setting.
    #[arg(required = true)]
    pub tags: Vec<PathBuf>,
    /// Output dataset file.
    #[arg(long)]
    pub out: PathBuf,
    /// Coincidence window width (seconds).
    #[arg(long, default_value_t = dtomo::events::DEFAULT_WINDOW_WIDTH)]
    pub window: f64,
    /// Fixed window start (seconds); auto-placed on the delay histogram when
    /// omitted.
    #[arg(long)]
    pub window_start: Option<f64>,
    /// Measured powers (watts), one per file, overriding the file headers.
    #[arg(long, value_delimiter = ',')]
    pub power: Option<Vec<f64>>,
    /// Detector recovery (1/e) time for the dead-time estimate (seconds).
    #[arg(long)]
    pub recovery_time: Option<f64>,
    /// Apply the dead-time correction to the click probabilities.
    #[arg(long)]
    pub apply_dead_time: bool,
    #[command(flatten)]
    pub meta: MetaArgs,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SamplerArgs {
    /// Ensemble walker count (even, at least twice the parameter count).
    #[arg(long, default_value_t = 32)]
    pub walkers: usize,
    /// Total MCMC steps.
    #[arg(long, default_value_t = 4000)]
    pub steps: usize,
    /// Burn-in steps; autocorrelation-driven when omitted.
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Thinning interval; autocorrelation-driven when omitted.
    #[arg(long)]
    pub thin: Option<usize>,
    /// Stretch-move scale parameter a.
    #[arg(long, default_value_t = 2.0)]
    pub stretch: f64,
    /// RNG seed (mandatory: runs must be reproducible).
    #[arg(long)]
    pub seed: u64,
    /// Flat prior bounds on log10(eta).
    #[arg(long, default_value_t = -12.0)]
    pub log10_eta_min: f64,
    #[arg(long, default_value_t = 0.0)]
    pub log10_eta_max: f64,
    /// Drop the monotone ordering constraint on p1 <= p2 <= ...
    #[arg(long)]
    pub relax_ordering: bool,
}

impl SamplerArgs {
    fn validate(&self, dim: usize) -> Result<(), CmdError> {
        if self.steps == 0 {
            return Err(CmdError::Usage("--steps must be positive".into()));
        }
        if !self.walkers.is_multiple_of(2) || self.walkers < 2 * dim {
            return Err(CmdError::Usage(format!(
                "--walkers must be even and at least {} for {dim} parameters",
                2 * dim
            )));
        }
        if !(self.stretch.is_finite() && self.stretch > 1.0) {
            return Err(CmdError::Usage("--stretch must exceed 1".into()));
        }
        if self.log10_eta_min >= self.log10_eta_max {
            return Err(CmdError::Usage(
                "--log10-eta-min must be below --log10-eta-max".into(),
            ));
        }
        Ok(())
    }

    fn settings(&self) -> SamplerSettings {
        SamplerSettings {
            walkers: self.walkers,
            steps: self.steps,
            burn_in: self.burn_in,
            thin: self.thin,
            stretch_scale: self.stretch,
            seed: self.seed,
        }
    }

    fn prior(&self) -> PriorSpec {
        PriorSpec {
            log10_eta_min: self.log10_eta_min,
            log10_eta_max: self.log10_eta_max,
            monotone: !self.relax_ordering,
        }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            prior: self.prior(),
            settings: self.settings(),
            polish: true,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input dataset file.
    #[arg(long)]
    pub data: PathBuf,
    /// Truncation order of the click model.
    #[arg(long, default_value_t = 1)]
    pub n_max: usize,
    /// Fit the ideal threshold detector (eta only, all p_i = 1).
    #[arg(long)]
    pub ideal: bool,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Histogram bins for the corner export.
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Output directory for report.txt, chain.csv and corner files.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Input dataset file.
    #[arg(long)]
    pub data: PathBuf,
    /// Largest truncation order to scan (the ideal detector is always
    /// included as the one-parameter baseline).
    #[arg(long, default_value_t = 3)]
    pub max_n_max: usize,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Also write the comparison table to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Fit report produced by `dtomo fit`.
    #[arg(long)]
    pub report: PathBuf,
    /// Dataset the report was fit to.
    #[arg(long)]
    pub data: PathBuf,
    /// Chain dump, for corner histograms.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Points on the best-fit curve's log grid.
    #[arg(long, default_value_t = 200)]
    pub curve_points: usize,
    /// Histogram bins for the corner export.
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Output directory for the plot tables.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

/// Whether a successful command should flag convergence trouble via its exit
/// status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    ConvergenceWarned,
}

/// Command failures, split by exit code.
#[derive(Debug)]
pub enum CmdError {
    /// Exit code 1: bad flags or flag combinations.
    Usage(String),
    /// Exit code 2: bad or missing data.
    Data(String),
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Usage(m) => write!(f, "usage error: {m}"),
            CmdError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

pub type CmdResult = Result<Outcome, CmdError>;

fn data_err(e: impl std::fmt::Display) -> CmdError {
    CmdError::Data(e.to_string())
}

/// Joins a relative path onto `DTOMO_OUT_DIR` when the variable is set.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn guard_overwrite(path: &Path, force: bool) -> Result<(), CmdError> {
    if path.exists() && !force {
        return Err(CmdError::Data(format!(
            "refusing to overwrite {}; pass --force",
            path.display()
        )));
    }
    Ok(())
}

fn experiment_meta(meta: &MetaArgs) -> Result<ExperimentMeta, CmdError> {
    ExperimentMeta::new(meta.wavelength, meta.rep_rate)
        .and_then(|m| m.with_power_error(meta.power_error))
        .and_then(|m| m.with_splitter_calibration(meta.splitter))
        .map_err(|e| CmdError::Usage(e.to_string()))
}

/// Parses `start:stop:COUNTlog` / `start:stop:COUNTlin` power grids.
pub fn parse_power_grid(spec: &str) -> Result<Vec<f64>, CmdError> {
    let usage = || {
        CmdError::Usage(format!(
            "bad power grid {spec:?}; expected start:stop:COUNTlog or start:stop:COUNTlin"
        ))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(usage());
    }
    let start: f64 = parts[0].parse().map_err(|_| usage())?;
    let stop: f64 = parts[1].parse().map_err(|_| usage())?;
    let (count_str, log) = if let Some(c) = parts[2].strip_suffix("log") {
        (c, true)
    } else if let Some(c) = parts[2].strip_suffix("lin") {
        (c, false)
    } else {
        return Err(usage());
    };
    let count: usize = count_str.parse().map_err(|_| usage())?;
    if count < 2 || !(start > 0.0 && stop > start) {
        return Err(usage());
    }
    if log {
        log_spaced_powers(start, stop, count).map_err(|e| CmdError::Usage(e.to_string()))
    } else {
        Ok((0..count)
            .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
            .collect())
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> CmdResult {
    let out = resolve_out(&args.out);
    guard_overwrite(&out, args.force)?;

    let meta = experiment_meta(&args.meta)?;
    let model = DetectorModel::new(args.eta, args.p.clone())
        .map_err(|e| CmdError::Usage(e.to_string()))?;
    let truth = GroundTruth {
        model,
        power_settings: parse_power_grid(&args.powers)?,
        trials_per_setting: args.trials,
        power_noise_relative: args.noise,
        dark_rate: args.dark_rate,
        seed: args.seed,
    };

    let dataset = if let Some(tags_dir) = &args.tags_dir {
        let tags_dir = resolve_out(tags_dir);
        let period = 1.0 / meta.rep_rate;
        let window = WindowConfig::new(args.window_start, args.window, period)
            .map_err(|e| CmdError::Usage(e.to_string()))?;
        let (dataset, streams) =
            generate_with_tags(&truth, &meta, &window).map_err(data_err)?;
        std::fs::create_dir_all(&tags_dir).map_err(data_err)?;
        for (i, stream) in streams.iter().enumerate() {
            let path = tags_dir.join(format!("tags_{i:03}.csv"));
            guard_overwrite(&path, args.force)?;
            stream.write_to(&path).map_err(data_err)?;
        }
        println!("wrote {} tag streams to {}", streams.len(), tags_dir.display());
        dataset
    } else {
        generate_dataset(&truth, &meta).map_err(data_err)?
    };

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(data_err)?;
        }
    }
    dataset.write_to(&out).map_err(data_err)?;
    println!("wrote {} settings to {}", dataset.len(), out.display());
    Ok(Outcome::Clean)
}

pub fn cmd_events(args: &EventsArgs) -> CmdResult {
    let out = resolve_out(&args.out);
    guard_overwrite(&out, args.force)?;
    let meta = experiment_meta(&args.meta)?;

    if let Some(powers) = &args.power {
        if powers.len() != args.tags.len() {
            return Err(CmdError::Usage(format!(
                "{} --power values for {} tag files",
                powers.len(),
                args.tags.len()
            )));
        }
    }

    let mut settings: Vec<(TagStream, PowerReading)> = Vec::with_capacity(args.tags.len());
    for (i, path) in args.tags.iter().enumerate() {
        let stream = TagStream::read_from(path)
            .map_err(|e| CmdError::Data(format!("{}: {e}", path.display())))?;
        if stream.pulse_count() == 0 {
            return Err(CmdError::Data(format!(
                "empty setting: {} contains zero laser pulses",
                path.display()
            )));
        }
        let power = args
            .power
            .as_ref()
            .map(|p| p[i])
            .or(stream.power)
            .ok_or_else(|| {
                CmdError::Data(format!(
                    "{}: no # power= header and no --power override",
                    path.display()
                ))
            })?;
        let reading = PowerReading::new(power)
            .and_then(|r| {
                r.with_relative_error(stream.relative_error.unwrap_or(args.meta.power_error))
            })
            .and_then(|r| {
                r.with_splitter_calibration(
                    stream.splitter_calibration.unwrap_or(args.meta.splitter),
                )
            })
            .map_err(data_err)?;
        settings.push((stream, reading));
    }

    let placement = match args.window_start {
        Some(start) => WindowPlacement::Fixed {
            start,
            width: args.window,
        },
        None => WindowPlacement::Auto { width: args.window },
    };
    let (mut dataset, tallies) = build_dataset(&settings, placement, &meta).map_err(data_err)?;

    let mut total_light = 0u64;
    let mut total_dark = 0u64;
    let mut total_dupes = 0u64;
    let mut total_time = 0.0f64;
    for (i, t) in tallies.iter().enumerate() {
        println!(
            "setting {i}: light={} dark={} duplicates={} trials={} window_start={:.3e}",
            t.light, t.dark, t.duplicates, t.trials, t.window.window_start
        );
        total_light += t.light;
        total_dark += t.dark;
        total_dupes += t.duplicates;
        total_time += t.trials as f64 * t.window.pulse_period;
    }
    let dark_rate = total_dark as f64 / total_time;
    println!(
        "totals: light={total_light} dark={total_dark} duplicates={total_dupes} dark_rate={dark_rate:.3} /s"
    );

    if let Some(recovery) = args.recovery_time {
        let (events_per_s, correction) =
            dead_time_overlap_rate(dark_rate, recovery, meta.rep_rate).map_err(data_err)?;
        println!(
            "dead-time overlap: {events_per_s:.2} events/s, correction {correction:.3e} of P_click"
        );
        if args.apply_dead_time {
            apply_dead_time_correction(&mut dataset, correction).map_err(data_err)?;
            println!("applied dead-time correction");
        }
    } else if args.apply_dead_time {
        return Err(CmdError::Usage(
            "--apply-dead-time requires --recovery-time".into(),
        ));
    }

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(data_err)?;
        }
    }
    dataset.write_to(&out).map_err(data_err)?;
    println!("wrote {} settings to {}", dataset.len(), out.display());
    Ok(Outcome::Clean)
}

pub fn cmd_fit(args: &FitArgs) -> CmdResult {
    let out_dir = resolve_out(&args.out_dir);
    let report_path = out_dir.join("report.txt");
    let chain_path = out_dir.join("chain.csv");
    guard_overwrite(&report_path, args.force)?;
    guard_overwrite(&chain_path, args.force)?;

    let spec = if args.ideal {
        ModelSpec::ideal_threshold()
    } else {
        ModelSpec::fitted(args.n_max)
    };
    if args.n_max == 0 && !args.ideal {
        return Err(CmdError::Usage("--n-max must be at least 1".into()));
    }
    if args.bins < 10 {
        return Err(CmdError::Usage("--bins must be at least 10".into()));
    }
    args.sampler.validate(spec.dim())?;

    let data = Dataset::read_from(&args.data).map_err(data_err)?;
    let opts = args.sampler.fit_options();
    let result = fit(&data, spec, &opts).map_err(data_err)?;

    std::fs::create_dir_all(&out_dir).map_err(data_err)?;
    let report = FitReport::from_fit(&result, &data, &args.data.to_string_lossy())
        .with_prior(&opts.prior);
    report.write_to(&report_path).map_err(data_err)?;
    result.chain.write_to(&chain_path).map_err(data_err)?;
    let corner = result.chain.corner(args.bins).map_err(data_err)?;
    corner.write_dir(&out_dir).map_err(data_err)?;

    for p in &result.summary.params {
        println!(
            "{}: median={} (p16={}, p84={}) map={}",
            p.name, p.median, p.p16, p.p84, p.map
        );
    }
    println!(
        "chi2={} dof={} chi2_r={} aic={} acceptance={:.3}",
        result.chi2, result.dof, result.chi2_reduced, result.aic, result.acceptance_fraction
    );
    println!("report: {}", report_path.display());

    if result.warnings.is_empty() {
        Ok(Outcome::Clean)
    } else {
        for w in &result.warnings {
            eprintln!("warning: {w}");
        }
        Ok(Outcome::ConvergenceWarned)
    }
}

pub fn cmd_select(args: &SelectArgs) -> CmdResult {
    if args.max_n_max == 0 {
        return Err(CmdError::Usage("--max-n-max must be at least 1".into()));
    }
    args.sampler.validate(1 + args.max_n_max)?;
    let data = Dataset::read_from(&args.data).map_err(data_err)?;
    let opts = args.sampler.fit_options();
    let rows = select_models(&data, args.max_n_max, &opts).map_err(data_err)?;

    let mut table = String::new();
    let _ = writeln!(table, "model,k,chi2,chi2_r,aic,delta_aic,best,error");
    for row in &rows {
        let label = if row.spec.ideal {
            "ideal".to_string()
        } else {
            format!("n_max={}", row.spec.n_max)
        };
        match &row.outcome {
            Ok(s) => {
                let _ = writeln!(
                    table,
                    "{label},{},{},{},{},{},{},",
                    row.k, s.chi2, s.chi2_reduced, s.aic, s.delta_aic, row.best
                );
            }
            Err(e) => {
                let _ = writeln!(table, "{label},{},,,,,false,{e}", row.k);
            }
        }
    }
    print!("{table}");

    if let Some(out) = &args.out {
        let out = resolve_out(out);
        guard_overwrite(&out, args.force)?;
        if let Some(parent) = out.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(data_err)?;
            }
        }
        std::fs::write(&out, &table).map_err(data_err)?;
        println!("wrote {}", out.display());
    }
    Ok(Outcome::Clean)
}

pub fn cmd_report(args: &ReportArgs) -> CmdResult {
    if args.bins < 10 {
        return Err(CmdError::Usage("--bins must be at least 10".into()));
    }
    let out_dir = resolve_out(&args.out_dir);
    let report = FitReport::read_from(&args.report).map_err(data_err)?;
    let data = Dataset::read_from(&args.data).map_err(data_err)?;
    let model = report.map_model().map_err(data_err)?;

    let files = [
        "data_with_errors.csv",
        "best_fit_curve.csv",
        "ideal_curve.csv",
        "residuals.csv",
    ];
    for f in files {
        guard_overwrite(&out_dir.join(f), args.force)?;
    }
    std::fs::create_dir_all(&out_dir).map_err(data_err)?;

    let mut table = String::new();
    let _ = writeln!(table, "mean_photons,sigma_mean_photons,p_click,sigma_p_click");
    for p in &data.points {
        let _ = writeln!(
            table,
            "{},{},{},{}",
            p.mean_photons, p.sigma_mean_photons, p.p_click, p.sigma_p_click
        );
    }
    std::fs::write(out_dir.join("data_with_errors.csv"), table).map_err(data_err)?;

    // Log grid spanning [min/3, max*3], merged with the data abscissae so the
    // curve file contains the model value at every measured point.
    if args.curve_points < 2 {
        return Err(CmdError::Usage("--curve-points must be at least 2".into()));
    }
    let n_min = data.points.iter().map(|p| p.mean_photons).fold(f64::INFINITY, f64::min);
    let n_max = data
        .points
        .iter()
        .map(|p| p.mean_photons)
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = ((n_min / 3.0).ln(), (n_max * 3.0).ln());
    let mut grid: Vec<f64> = (0..args.curve_points)
        .map(|k| (lo + (hi - lo) * k as f64 / (args.curve_points - 1) as f64).exp())
        .collect();
    grid.extend(data.points.iter().map(|p| p.mean_photons));
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();

    let curve = |m: &DetectorModel| -> String {
        let mut out = String::from("mean_photons,p_click\n");
        for &n in &grid {
            let p = m.click_probability(CoherentInput::new(n).expect("positive grid"));
            let _ = writeln!(out, "{n},{p}");
        }
        out
    };
    std::fs::write(out_dir.join("best_fit_curve.csv"), curve(&model)).map_err(data_err)?;

    // Dashed-line comparison: ideal threshold detector with the same low-flux
    // slope, eta_ideal = eta_hat * p1_hat.
    let eta_hat = report
        .estimate("eta")
        .ok_or_else(|| CmdError::Data("report lacks an eta estimate".into()))?
        .median;
    let p1_hat = report.estimate("p1").map(|e| e.median).unwrap_or(1.0);
    let ideal = DetectorModel::ideal(eta_hat * p1_hat).map_err(data_err)?;
    std::fs::write(out_dir.join("ideal_curve.csv"), curve(&ideal)).map_err(data_err)?;

    let mut residuals = String::from("mean_photons,p_click,model_p,delta_p,delta_n,chi2_term,saturated\n");
    for r in &report.residuals {
        let delta_n = r.delta_n.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            residuals,
            "{},{},{},{},{delta_n},{},{}",
            r.mean_photons, r.p_click, r.model_p, r.delta_p, r.chi2_term, r.saturated
        );
    }
    std::fs::write(out_dir.join("residuals.csv"), residuals).map_err(data_err)?;

    if let Some(chain_path) = &args.chain {
        let chain = dtomo::Chain::read_from(chain_path).map_err(data_err)?;
        let corner = chain.corner(args.bins).map_err(data_err)?;
        corner.write_dir(&out_dir).map_err(data_err)?;
    }

    println!("wrote plot tables to {}", out_dir.display());
    Ok(Outcome::Clean)
}

pub fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Events(args) => cmd_events(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Select(args) => cmd_select(args),
        Command::Report(args) => cmd_report(args),
    }
}
