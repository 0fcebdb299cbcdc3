//! Stored MCMC chains: persistence, convergence diagnostics, posterior
//! summaries and histogram export.
//!
//! The on-disk dump is comma-delimited text with `# key=value` metadata and the
//! column order `step,walker,<parameters...>,log_prob`. Floats use shortest
//! round-trip formatting, so a dump reloads bit-for-bit and a run can be
//! resumed from its final stored ensemble.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Sampler settings recorded with a chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainMeta {
    pub walkers: usize,
    pub dim: usize,
    pub stretch_scale: f64,
    pub seed: u64,
    /// Steps executed by the run that produced this chain (pre-thinning).
    pub total_steps: u64,
    pub burn_in: u64,
    pub thin: u64,
}

/// Ensemble samples from a sampler run.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    meta: ChainMeta,
    param_names: Vec<String>,
    /// Original step index of each stored ensemble snapshot.
    step_indices: Vec<u64>,
    /// Row-major `stored_steps x walkers x dim`.
    samples: Vec<f64>,
    /// `stored_steps x walkers`.
    log_probs: Vec<f64>,
    accepted: u64,
    proposals: u64,
}

impl Chain {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        meta: ChainMeta,
        param_names: Vec<String>,
        step_indices: Vec<u64>,
        samples: Vec<f64>,
        log_probs: Vec<f64>,
        accepted: u64,
        proposals: u64,
    ) -> Self {
        assert_eq!(param_names.len(), meta.dim);
        assert_eq!(samples.len(), step_indices.len() * meta.walkers * meta.dim);
        assert_eq!(log_probs.len(), step_indices.len() * meta.walkers);
        Self {
            meta,
            param_names,
            step_indices,
            samples,
            log_probs,
            accepted,
            proposals,
        }
    }

    pub fn meta(&self) -> ChainMeta {
        self.meta
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn stored_steps(&self) -> usize {
        self.step_indices.len()
    }

    pub fn walkers(&self) -> usize {
        self.meta.walkers
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    /// Number of flattened samples (stored steps times walkers).
    pub fn n_samples(&self) -> usize {
        self.stored_steps() * self.meta.walkers
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn acceptance_fraction(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    /// Parameter vector of walker `w` at stored step `s`.
    pub fn sample(&self, s: usize, w: usize) -> &[f64] {
        let d = self.meta.dim;
        let base = (s * self.meta.walkers + w) * d;
        &self.samples[base..base + d]
    }

    /// Iterates over all stored samples in (step, walker) order.
    pub fn iter_flat(&self) -> impl Iterator<Item = (usize, &[f64])> {
        let w = self.meta.walkers;
        (0..self.n_samples()).map(move |i| (i % w, self.sample(i / w, i % w)))
    }

    /// Values of one parameter for one walker across stored steps.
    fn series(&self, walker: usize, param: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.stored_steps()).map(move |s| self.sample(s, walker)[param])
    }

    /// Drops the first `burn_in` original steps and keeps every `thin`-th of
    /// the rest. Acceptance statistics of the full run are carried along.
    pub fn burn_and_thin(&self, burn_in: usize, thin: usize) -> Chain {
        let thin = thin.max(1) as u64;
        let burn_in = burn_in as u64;
        let keep: Vec<usize> = self
            .step_indices
            .iter()
            .enumerate()
            .filter(|(_, &orig)| orig >= burn_in && (orig - burn_in).is_multiple_of(thin))
            .map(|(i, _)| i)
            .collect();

        let d = self.meta.dim;
        let w = self.meta.walkers;
        let mut samples = Vec::with_capacity(keep.len() * w * d);
        let mut log_probs = Vec::with_capacity(keep.len() * w);
        let mut step_indices = Vec::with_capacity(keep.len());
        for &s in &keep {
            step_indices.push(self.step_indices[s]);
            samples.extend_from_slice(&self.samples[s * w * d..(s + 1) * w * d]);
            log_probs.extend_from_slice(&self.log_probs[s * w..(s + 1) * w]);
        }
        Chain {
            meta: ChainMeta {
                burn_in,
                thin,
                ..self.meta
            },
            param_names: self.param_names.clone(),
            step_indices,
            samples,
            log_probs,
            accepted: self.accepted,
            proposals: self.proposals,
        }
    }

    /// Final stored ensemble positions, one vector per walker. A run can be
    /// resumed from these.
    pub fn final_positions(&self) -> Option<Vec<Vec<f64>>> {
        let s = self.stored_steps().checked_sub(1)?;
        Some((0..self.meta.walkers).map(|w| self.sample(s, w).to_vec()).collect())
    }

    /// Integrated autocorrelation time per parameter, from the windowed
    /// estimator with window `M` chosen as the smallest value satisfying
    /// `M >= 5 tau(M)`.
    pub fn autocorrelation_time(&self) -> Result<Vec<f64>> {
        let s = self.stored_steps();
        if s < 100 {
            return Err(Error::ChainTooShort(format!(
                "need at least 100 stored steps, have {s}"
            )));
        }
        let mut taus = Vec::with_capacity(self.meta.dim);
        for param in 0..self.meta.dim {
            taus.push(self.autocorrelation_time_for(param)?);
        }
        Ok(taus)
    }

    fn autocorrelation_time_for(&self, param: usize) -> Result<f64> {
        let s = self.stored_steps();
        let max_lag = s / 2;

        // Per-walker normalized autocorrelation, averaged across walkers.
        let mut series: Vec<Vec<f64>> = Vec::new();
        for w in 0..self.meta.walkers {
            let x: Vec<f64> = self.series(w, param).collect();
            let mean = x.iter().sum::<f64>() / s as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / s as f64;
            if var > 0.0 {
                series.push(x.iter().map(|v| v - mean).collect());
            }
        }
        if series.is_empty() {
            return Err(Error::DegenerateChain(format!(
                "parameter {} has zero variance",
                self.param_names[param]
            )));
        }

        let rho = |lag: usize| -> f64 {
            let mut total = 0.0;
            for x in &series {
                let c0: f64 = x.iter().map(|v| v * v).sum::<f64>() / s as f64;
                let c: f64 = (0..s - lag).map(|i| x[i] * x[i + lag]).sum::<f64>() / (s - lag) as f64;
                total += c / c0;
            }
            total / series.len() as f64
        };

        let mut tau = 1.0;
        for m in 1..=max_lag {
            tau += 2.0 * rho(m);
            if (m as f64) >= 5.0 * tau {
                return Ok(tau.max(1.0));
            }
        }
        Err(Error::ChainTooShort(format!(
            "windowed autocorrelation for {} did not satisfy M >= 5 tau within {max_lag} lags",
            self.param_names[param]
        )))
    }

    /// Reporting parameterization: `log10_eta` is mapped back to linear `eta`,
    /// everything else passes through.
    fn transformed(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let names: Vec<String> = self
            .param_names
            .iter()
            .map(|n| if n == "log10_eta" { "eta".to_string() } else { n.clone() })
            .collect();
        let columns: Vec<Vec<f64>> = (0..self.meta.dim)
            .map(|k| {
                let transform = self.param_names[k] == "log10_eta";
                self.iter_flat()
                    .map(|(_, x)| if transform { 10f64.powf(x[k]) } else { x[k] })
                    .collect()
            })
            .collect();
        (names, columns)
    }

    /// Posterior summary: per-parameter median and 16/84 percentiles, the
    /// maximum-posterior sample, and the sample covariance and correlation in
    /// the reporting parameterization.
    pub fn summarize(&self) -> Result<PosteriorSummary> {
        if self.n_samples() == 0 {
            return Err(Error::InvalidArgument("cannot summarize an empty chain".into()));
        }
        let (names, columns) = self.transformed();
        let d = self.meta.dim;
        let n = self.n_samples();

        let map_index = self
            .log_probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();

        let mut params = Vec::with_capacity(d);
        for k in 0..d {
            let mut sorted = columns[k].clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            params.push(ParamSummary {
                name: names[k].clone(),
                median: percentile(&sorted, 50.0),
                p16: percentile(&sorted, 16.0),
                p84: percentile(&sorted, 84.0),
                map: columns[k][map_index],
            });
        }

        let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
        let mut covariance = vec![0.0; d * d];
        if n >= 2 {
            for i in 0..d {
                for j in i..d {
                    let c: f64 = (0..n)
                        .map(|s| (columns[i][s] - means[i]) * (columns[j][s] - means[j]))
                        .sum::<f64>()
                        / (n - 1) as f64;
                    covariance[i * d + j] = c;
                    covariance[j * d + i] = c;
                }
            }
        }
        let mut correlation = vec![0.0; d * d];
        let mut degenerate = vec![false; d];
        for i in 0..d {
            if covariance[i * d + i] <= 0.0 {
                degenerate[i] = true;
            }
        }
        for i in 0..d {
            for j in 0..d {
                correlation[i * d + j] = if degenerate[i] || degenerate[j] {
                    0.0
                } else if i == j {
                    1.0
                } else {
                    (covariance[i * d + j]
                        / (covariance[i * d + i] * covariance[j * d + j]).sqrt())
                    .clamp(-1.0, 1.0)
                };
            }
        }

        Ok(PosteriorSummary {
            params,
            covariance,
            correlation,
            degenerate,
            map_log_prob: self.log_probs[map_index],
        })
    }

    /// Maximum-posterior sample in the sampling parameterization.
    pub fn max_posterior_sample(&self) -> Option<(Vec<f64>, f64)> {
        let (i, &lp) = self
            .log_probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
        let w = self.meta.walkers;
        Some((self.sample(i / w, i % w).to_vec(), lp))
    }

    /// 1D marginal and 2D joint histograms over the reporting
    /// parameterization, for external corner plotting.
    pub fn corner(&self, bins: usize) -> Result<CornerExport> {
        if bins < 10 {
            return Err(Error::InvalidArgument(format!(
                "corner export needs at least 10 bins, got {bins}"
            )));
        }
        if self.n_samples() == 0 {
            return Err(Error::InvalidArgument("cannot histogram an empty chain".into()));
        }
        let (names, columns) = self.transformed();
        let d = self.meta.dim;

        let mut edges = Vec::with_capacity(d);
        for c in &columns {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in c {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if lo == hi {
                // Degenerate marginal: widen so every sample lands in one bin.
                let pad = if lo == 0.0 { 0.5 } else { lo.abs() * 1e-6 };
                lo -= pad;
                hi += pad;
            }
            edges.push((0..=bins).map(|b| lo + (hi - lo) * b as f64 / bins as f64).collect());
        }

        let bin_of = |k: usize, v: f64| -> usize {
            let e: &Vec<f64> = &edges[k];
            let lo = e[0];
            let hi = e[bins];
            let idx = ((v - lo) / (hi - lo) * bins as f64).floor() as isize;
            idx.clamp(0, bins as isize - 1) as usize
        };

        let n = self.n_samples();
        let mut hist1d = vec![vec![0u64; bins]; d];
        let mut hist2d = Vec::new();
        for i in 0..d {
            for s in 0..n {
                hist1d[i][bin_of(i, columns[i][s])] += 1;
            }
            for j in (i + 1)..d {
                let mut h = vec![0u64; bins * bins];
                for s in 0..n {
                    h[bin_of(i, columns[i][s]) * bins + bin_of(j, columns[j][s])] += 1;
                }
                hist2d.push(JointHistogram { i, j, counts: h });
            }
        }

        Ok(CornerExport {
            param_names: names,
            bins,
            edges,
            hist1d,
            hist2d,
        })
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let m = &self.meta;
        let mut out = String::new();
        let _ = writeln!(out, "# walkers={}", m.walkers);
        let _ = writeln!(out, "# dim={}", m.dim);
        let _ = writeln!(out, "# stretch_scale={}", m.stretch_scale);
        let _ = writeln!(out, "# seed={}", m.seed);
        let _ = writeln!(out, "# total_steps={}", m.total_steps);
        let _ = writeln!(out, "# burn_in={}", m.burn_in);
        let _ = writeln!(out, "# thin={}", m.thin);
        let _ = writeln!(out, "# accepted={}", self.accepted);
        let _ = writeln!(out, "# proposals={}", self.proposals);
        let _ = writeln!(out, "# params={}", self.param_names.join(","));
        let _ = writeln!(out, "step,walker,{},log_prob", self.param_names.join(","));
        for (s, &orig_step) in self.step_indices.iter().enumerate() {
            for w in 0..m.walkers {
                let _ = write!(out, "{orig_step},{w}");
                for v in self.sample(s, w) {
                    let _ = write!(out, ",{v}");
                }
                let _ = writeln!(out, ",{}", self.log_probs[s * m.walkers + w]);
            }
        }
        out
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let reader = BufReader::new(reader);
        let mut header: std::collections::HashMap<String, String> = Default::default();
        let mut rows: Vec<(u64, Vec<f64>, f64)> = Vec::new();
        let mut saw_columns = false;

        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    header.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !saw_columns {
                saw_columns = true; // column header line
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 4 {
                return Err(Error::Parse(format!("short chain row: {line:?}")));
            }
            let step: u64 = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad step index {:?}", fields[0])))?;
            let values: Vec<f64> = fields[2..fields.len() - 1]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::Parse(format!("bad value {f:?}"))))
                .collect::<Result<_>>()?;
            let lp: f64 = fields[fields.len() - 1]
                .parse()
                .map_err(|_| Error::Parse("bad log_prob".into()))?;
            rows.push((step, values, lp));
        }

        let get = |k: &str| -> Result<&String> {
            header.get(k).ok_or_else(|| Error::Parse(format!("missing chain header {k}")))
        };
        let walkers: usize = get("walkers")?.parse().map_err(|_| Error::Parse("bad walkers".into()))?;
        let dim: usize = get("dim")?.parse().map_err(|_| Error::Parse("bad dim".into()))?;
        let meta = ChainMeta {
            walkers,
            dim,
            stretch_scale: get("stretch_scale")?.parse().map_err(|_| Error::Parse("bad stretch_scale".into()))?,
            seed: get("seed")?.parse().map_err(|_| Error::Parse("bad seed".into()))?,
            total_steps: get("total_steps")?.parse().map_err(|_| Error::Parse("bad total_steps".into()))?,
            burn_in: get("burn_in")?.parse().map_err(|_| Error::Parse("bad burn_in".into()))?,
            thin: get("thin")?.parse().map_err(|_| Error::Parse("bad thin".into()))?,
        };
        let accepted: u64 = get("accepted")?.parse().map_err(|_| Error::Parse("bad accepted".into()))?;
        let proposals: u64 = get("proposals")?.parse().map_err(|_| Error::Parse("bad proposals".into()))?;
        let param_names: Vec<String> = get("params")?.split(',').map(|s| s.to_string()).collect();
        if param_names.len() != dim {
            return Err(Error::Parse("param name count does not match dim".into()));
        }
        if walkers == 0 || !rows.len().is_multiple_of(walkers) {
            return Err(Error::Parse(format!(
                "row count {} is not a multiple of walkers {walkers}",
                rows.len()
            )));
        }

        let stored = rows.len() / walkers;
        let mut step_indices = Vec::with_capacity(stored);
        let mut samples = Vec::with_capacity(rows.len() * dim);
        let mut log_probs = Vec::with_capacity(rows.len());
        for (i, (step, values, lp)) in rows.into_iter().enumerate() {
            if values.len() != dim {
                return Err(Error::Parse(format!(
                    "row {i} has {} parameters, expected {dim}",
                    values.len()
                )));
            }
            if i % walkers == 0 {
                step_indices.push(step);
            }
            samples.extend_from_slice(&values);
            log_probs.push(lp);
        }

        Ok(Self {
            meta,
            param_names,
            step_indices,
            samples,
            log_probs,
            accepted,
            proposals,
        })
    }
}

/// Per-parameter posterior statistics (reporting parameterization).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub median: f64,
    pub p16: f64,
    pub p84: f64,
    /// Value at the maximum-posterior sample.
    pub map: f64,
}

impl ParamSummary {
    /// Symmetric half-width of the central 68% interval.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.p84 - self.p16)
    }
}

/// Posterior summary of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
    /// Row-major `d x d` sample covariance.
    pub covariance: Vec<f64>,
    /// Row-major `d x d` Pearson correlation; 0 where a marginal is
    /// degenerate.
    pub correlation: Vec<f64>,
    /// Marks parameters whose marginal has zero variance.
    pub degenerate: Vec<bool>,
    pub map_log_prob: f64,
}

impl PosteriorSummary {
    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn correlation_between(&self, i: usize, j: usize) -> f64 {
        self.correlation[i * self.dim() + j]
    }
}

/// Linear-interpolation percentile of an already sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

/// 2D joint histogram between parameters `i` and `j` (row index `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    pub i: usize,
    pub j: usize,
    /// Row-major `bins x bins` counts.
    pub counts: Vec<u64>,
}

/// Marginal and joint histograms of a chain, ready for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerExport {
    pub param_names: Vec<String>,
    pub bins: usize,
    /// Per-parameter bin edges, `bins + 1` each.
    pub edges: Vec<Vec<f64>>,
    pub hist1d: Vec<Vec<u64>>,
    pub hist2d: Vec<JointHistogram>,
}

impl CornerExport {
    /// Writes `corner_1d_<param>.csv` and `corner_2d_<pi>_<pj>.csv` files into
    /// `dir`. Returns the written paths.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();

        for (k, name) in self.param_names.iter().enumerate() {
            let path = dir.join(format!("corner_1d_{name}.csv"));
            let mut out = String::new();
            let _ = writeln!(out, "bin_lo,bin_hi,count");
            for b in 0..self.bins {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    self.edges[k][b],
                    self.edges[k][b + 1],
                    self.hist1d[k][b]
                );
            }
            std::fs::write(&path, out)?;
            written.push(path);
        }

        for joint in &self.hist2d {
            let (i, j) = (joint.i, joint.j);
            let path = dir.join(format!(
                "corner_2d_{}_{}.csv",
                self.param_names[i], self.param_names[j]
            ));
            let mut out = String::new();
            let _ = writeln!(out, "x_lo,x_hi,y_lo,y_hi,count");
            for bi in 0..self.bins {
                for bj in 0..self.bins {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        self.edges[i][bi],
                        self.edges[i][bi + 1],
                        self.edges[j][bj],
                        self.edges[j][bj + 1],
                        joint.counts[bi * self.bins + bj]
                    );
                }
            }
            std::fs::write(&path, out)?;
            written.push(path);
        }
        Ok(written)
    }
}
