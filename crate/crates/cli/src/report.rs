//! Structured-text fit report: human-readable `key = value` lines plus a
//! residual table, machine-parseable and loss-free for floats.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use dtomo::likelihood::ModelSpec;
use dtomo::{ChiSquareTerm, Error, FitResult, Result};

/// Per-parameter estimates in the reporting parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEstimate {
    pub name: String,
    pub median: f64,
    pub p16: f64,
    pub p84: f64,
    pub map: f64,
}

/// One data point's residual entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub mean_photons: f64,
    pub p_click: f64,
    pub model_p: f64,
    pub delta_p: f64,
    pub delta_n: Option<f64>,
    pub chi2_term: f64,
    pub saturated: bool,
}

/// Everything a fit produced, in a form that round-trips through text.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub data_path: String,
    pub n_points: usize,
    pub ideal: bool,
    pub n_max: usize,
    pub k_params: usize,
    pub prior_log10_eta_min: f64,
    pub prior_log10_eta_max: f64,
    pub prior_monotone: bool,
    pub walkers: usize,
    pub steps: u64,
    pub stretch_scale: f64,
    pub seed: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub acceptance_fraction: f64,
    pub autocorr_time: Option<Vec<f64>>,
    pub estimates: Vec<ParamEstimate>,
    pub eta_sigma_stat: f64,
    pub eta_sigma_total: f64,
    /// Best parameters in the sampling parameterization, for reconstruction.
    pub map_params: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub chi2_reduced: f64,
    pub aic: f64,
    /// Row-major correlation matrix over the reported parameters.
    pub correlation: Vec<f64>,
    pub residuals: Vec<ResidualRow>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn from_fit(result: &FitResult, data: &dtomo::Dataset, data_path: &str) -> Self {
        let meta = result.chain.meta();
        let estimates = result
            .summary
            .params
            .iter()
            .map(|p| ParamEstimate {
                name: p.name.clone(),
                median: p.median,
                p16: p.p16,
                p84: p.p84,
                map: p.map,
            })
            .collect();
        let residuals = data
            .points
            .iter()
            .zip(&result.terms)
            .map(|(point, term)| residual_row(point, term, &result.map_model))
            .collect();
        Self {
            data_path: data_path.to_string(),
            n_points: data.len(),
            ideal: result.spec.ideal,
            n_max: result.spec.n_max,
            k_params: result.k_params(),
            prior_log10_eta_min: f64::NAN, // filled by caller via with_prior
            prior_log10_eta_max: f64::NAN,
            prior_monotone: true,
            walkers: meta.walkers,
            steps: meta.total_steps,
            stretch_scale: meta.stretch_scale,
            seed: meta.seed,
            burn_in: meta.burn_in,
            thin: meta.thin,
            acceptance_fraction: result.acceptance_fraction,
            autocorr_time: result.tau.clone(),
            estimates,
            eta_sigma_stat: result.eta_sigma_stat,
            eta_sigma_total: result.eta_sigma_total,
            map_params: result.map_params.clone(),
            chi2: result.chi2,
            dof: result.dof,
            chi2_reduced: result.chi2_reduced,
            aic: result.aic,
            correlation: result.summary.correlation.clone(),
            residuals,
            warnings: result.warnings.iter().map(|w| w.to_string()).collect(),
        }
    }

    pub fn with_prior(mut self, prior: &dtomo::PriorSpec) -> Self {
        self.prior_log10_eta_min = prior.log10_eta_min;
        self.prior_log10_eta_max = prior.log10_eta_max;
        self.prior_monotone = prior.monotone;
        self
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            n_max: self.n_max,
            ideal: self.ideal,
        }
    }

    /// Best-fit detector model reconstructed from the stored parameters.
    pub fn map_model(&self) -> Result<dtomo::DetectorModel> {
        self.spec().build_model(&self.map_params)
    }

    pub fn estimate(&self, name: &str) -> Option<&ParamEstimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "# detector tomography fit report");
        let _ = writeln!(w, "# intervals are 16/84 percentiles of the flattened chain");
        let _ = writeln!(w, "data.path = {}", self.data_path);
        let _ = writeln!(w, "data.n_points = {}", self.n_points);
        let _ = writeln!(w, "model.ideal = {}", self.ideal);
        let _ = writeln!(w, "model.n_max = {}", self.n_max);
        let _ = writeln!(w, "model.k_params = {}", self.k_params);
        let _ = writeln!(w, "prior.log10_eta_min = {}", self.prior_log10_eta_min);
        let _ = writeln!(w, "prior.log10_eta_max = {}", self.prior_log10_eta_max);
        let _ = writeln!(w, "prior.monotone = {}", self.prior_monotone);
        let _ = writeln!(w, "sampler.walkers = {}", self.walkers);
        let _ = writeln!(w, "sampler.steps = {}", self.steps);
        let _ = writeln!(w, "sampler.stretch_scale = {}", self.stretch_scale);
        let _ = writeln!(w, "sampler.seed = {}", self.seed);
        let _ = writeln!(w, "sampler.burn_in = {}", self.burn_in);
        let _ = writeln!(w, "sampler.thin = {}", self.thin);
        let _ = writeln!(w, "sampler.acceptance_fraction = {}", self.acceptance_fraction);
        if let Some(tau) = &self.autocorr_time {
            let _ = writeln!(w, "sampler.autocorr_time = {}", join_f64(tau));
        }
        for e in &self.estimates {
            let _ = writeln!(w, "estimate.{}.median = {}", e.name, e.median);
            let _ = writeln!(w, "estimate.{}.p16 = {}", e.name, e.p16);
            let _ = writeln!(w, "estimate.{}.p84 = {}", e.name, e.p84);
            let _ = writeln!(w, "estimate.{}.map = {}", e.name, e.map);
        }
        let _ = writeln!(w, "estimate.eta.sigma_stat = {}", self.eta_sigma_stat);
        let _ = writeln!(w, "estimate.eta.sigma_total = {}", self.eta_sigma_total);
        let _ = writeln!(w, "map.params = {}", join_f64(&self.map_params));
        let _ = writeln!(w, "gof.chi2 = {}", self.chi2);
        let _ = writeln!(w, "gof.dof = {}", self.dof);
        let _ = writeln!(w, "gof.chi2_reduced = {}", self.chi2_reduced);
        let _ = writeln!(w, "gof.aic = {}", self.aic);
        let names: Vec<&str> = self.estimates.iter().map(|e| e.name.as_str()).collect();
        let _ = writeln!(w, "corr.params = {}", names.join(","));
        let d = self.estimates.len();
        for i in 0..d {
            let _ = writeln!(
                w,
                "corr.row{} = {}",
                i,
                join_f64(&self.correlation[i * d..(i + 1) * d])
            );
        }
        for (i, warning) in self.warnings.iter().enumerate() {
            let _ = writeln!(w, "warning.{i} = {warning}");
        }
        let _ = writeln!(w, "[residuals]");
        let _ = writeln!(w, "mean_photons,p_click,model_p,delta_p,delta_n,chi2_term,saturated");
        for r in &self.residuals {
            let delta_n = r.delta_n.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                w,
                "{},{},{},{},{delta_n},{},{}",
                r.mean_photons, r.p_click, r.model_p, r.delta_p, r.chi2_term, r.saturated
            );
        }
        out
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let reader = BufReader::new(reader);
        let mut keys: std::collections::HashMap<String, String> = Default::default();
        let mut residuals = Vec::new();
        let mut in_residuals = false;
        let mut saw_table_header = false;

        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[residuals]" {
                in_residuals = true;
                continue;
            }
            if in_residuals {
                if !saw_table_header {
                    saw_table_header = true;
                    continue;
                }
                residuals.push(parse_residual(line)?);
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                keys.insert(k.trim().to_string(), v.trim().to_string());
            }
        }

        let get = |k: &str| -> Result<&String> {
            keys.get(k)
                .ok_or_else(|| Error::Parse(format!("fit report missing key {k}")))
        };
        let f = |k: &str| -> Result<f64> { parse_f64(get(k)?) };
        let u = |k: &str| -> Result<u64> {
            get(k)?
                .parse::<u64>()
                .map_err(|_| Error::Parse(format!("bad integer for {k}")))
        };
        let b = |k: &str| -> Result<bool> {
            get(k)?
                .parse::<bool>()
                .map_err(|_| Error::Parse(format!("bad bool for {k}")))
        };

        let corr_names: Vec<String> = get("corr.params")?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut estimates = Vec::new();
        for name in &corr_names {
            estimates.push(ParamEstimate {
                name: name.clone(),
                median: f(&format!("estimate.{name}.median"))?,
                p16: f(&format!("estimate.{name}.p16"))?,
                p84: f(&format!("estimate.{name}.p84"))?,
                map: f(&format!("estimate.{name}.map"))?,
            });
        }
        let d = corr_names.len();
        let mut correlation = Vec::with_capacity(d * d);
        for i in 0..d {
            correlation.extend(parse_f64_list(get(&format!("corr.row{i}"))?)?);
        }
        if correlation.len() != d * d {
            return Err(Error::Parse("correlation matrix shape mismatch".into()));
        }
        let mut warnings = Vec::new();
        for i in 0.. {
            match keys.get(&format!("warning.{i}")) {
                Some(text) => warnings.push(text.clone()),
                None => break,
            }
        }

        Ok(Self {
            data_path: get("data.path")?.clone(),
            n_points: u("data.n_points")? as usize,
            ideal: b("model.ideal")?,
            n_max: u("model.n_max")? as usize,
            k_params: u("model.k_params")? as usize,
            prior_log10_eta_min: f("prior.log10_eta_min")?,
            prior_log10_eta_max: f("prior.log10_eta_max")?,
            prior_monotone: b("prior.monotone")?,
            walkers: u("sampler.walkers")? as usize,
            steps: u("sampler.steps")?,
            stretch_scale: f("sampler.stretch_scale")?,
            seed: u("sampler.seed")?,
            burn_in: u("sampler.burn_in")?,
            thin: u("sampler.thin")?,
            acceptance_fraction: f("sampler.acceptance_fraction")?,
            autocorr_time: keys
                .get("sampler.autocorr_time")
                .map(|v| parse_f64_list(v))
                .transpose()?,
            estimates,
            eta_sigma_stat: f("estimate.eta.sigma_stat")?,
            eta_sigma_total: f("estimate.eta.sigma_total")?,
            map_params: parse_f64_list(get("map.params")?)?,
            chi2: f("gof.chi2")?,
            dof: u("gof.dof")? as usize,
            chi2_reduced: f("gof.chi2_reduced")?,
            aic: f("gof.aic")?,
            correlation,
            residuals,
            warnings,
        })
    }
}

fn residual_row(
    point: &dtomo::DataPoint,
    term: &ChiSquareTerm,
    model: &dtomo::DetectorModel,
) -> ResidualRow {
    let input = dtomo::CoherentInput::new(point.mean_photons).expect("validated data point");
    ResidualRow {
        mean_photons: point.mean_photons,
        p_click: point.p_click,
        model_p: model.click_probability(input),
        delta_p: term.delta_p,
        delta_n: term.delta_n,
        chi2_term: term.value,
        saturated: term.saturated,
    }
}

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("invalid number {s:?}")))
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_f64).collect()
}

fn parse_residual(line: &str) -> Result<ResidualRow> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 7 {
        return Err(Error::Parse(format!("bad residual row: {line:?}")));
    }
    Ok(ResidualRow {
        mean_photons: parse_f64(fields[0])?,
        p_click: parse_f64(fields[1])?,
        model_p: parse_f64(fields[2])?,
        delta_p: parse_f64(fields[3])?,
        delta_n: if fields[4].is_empty() {
            None
        } else {
            Some(parse_f64(fields[4])?)
        },
        chi2_term: parse_f64(fields[5])?,
        saturated: fields[6]
            .parse::<bool>()
            .map_err(|_| Error::Parse("bad saturated flag".into()))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> FitReport {
        FitReport {
            data_path: "data.csv".into(),
            n_points: 3,
            ideal: false,
            n_max: 1,
            k_params: 2,
            prior_log10_eta_min: -12.0,
            prior_log10_eta_max: 0.0,
            prior_monotone: true,
            walkers: 32,
            steps: 4000,
            stretch_scale: 2.0,
            seed: 42,
            burn_in: 1000,
            thin: 3,
            acceptance_fraction: 0.43125,
            autocorr_time: Some(vec![7.25, 5.5]),
            estimates: vec![
                ParamEstimate {
                    name: "eta".into(),
                    median: 1.59e-6,
                    p16: 1.52e-6,
                    p84: 1.67e-6,
                    map: 1.6e-6,
                },
                ParamEstimate {
                    name: "p1".into(),
                    median: 0.57,
                    p16: 0.56,
                    p84: 0.58,
                    map: 0.568,
                },
            ],
            eta_sigma_stat: 7.5e-8,
            eta_sigma_total: 8.9e-8,
            map_params: vec![-5.795880017344075, 0.568],
            chi2: 23.75,
            dof: 1,
            chi2_reduced: 23.75,
            aic: 27.75,
            correlation: vec![1.0, -0.91, -0.91, 1.0],
            residuals: vec![
                ResidualRow {
                    mean_photons: 4279.0,
                    p_click: 0.0062,
                    model_p: 0.0061,
                    delta_p: -1e-4,
                    delta_n: Some(70.3),
                    chi2_term: 0.55,
                    saturated: false,
                },
                ResidualRow {
                    mean_photons: 6e6,
                    p_click: 1.0,
                    model_p: 0.99971,
                    delta_p: -2.9e-4,
                    delta_n: None,
                    chi2_term: 0.02,
                    saturated: true,
                },
            ],
            warnings: vec!["acceptance fraction 0.95 outside [0.1, 0.9]".into()],
        }
    }

    #[test]
    fn report_round_trips() {
        let report = sample_report();
        let back = FitReport::from_reader(report.to_text().as_bytes()).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn identities_survive_round_trip() {
        let report = sample_report();
        let back = FitReport::from_reader(report.to_text().as_bytes()).unwrap();
        assert_eq!(back.chi2_reduced * back.dof as f64, back.chi2);
        assert_eq!(back.aic, 2.0 * back.k_params as f64 + back.chi2);
    }

    #[test]
    fn map_model_reconstructs() {
        let report = sample_report();
        let model = report.map_model().unwrap();
        assert!((model.eta() - 1.6e-6).abs() < 1e-9);
        assert_eq!(model.internal_efficiencies(), &[0.568]);
    }
}
