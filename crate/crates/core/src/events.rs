//! Time-tag stream processing: light/dark classification against the
//! coincidence window, click-probability estimation, photon-number conversion
//! and the dead-time overlap estimate.
//!
//! Tag streams are comma-delimited text, one detection event per line as
//! `pulse_index,delay_seconds`, with `# key=value` headers. `# period=` is
//! required; `# pulses=` (total laser pulses), `# power=` (measured watts),
//! `# splitter_calibration=` and `# relative_error=` are optional and let a
//! file carry its own power reading.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::data::{DataPoint, Dataset, ExperimentMeta};
use crate::error::{Error, Result};

pub const PLANCK: f64 = 6.62607015e-34;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default coincidence window width: 2 ns.
pub const DEFAULT_WINDOW_WIDTH: f64 = 2e-9;

/// Coincidence window for light/dark classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub window_start: f64,
    pub window_width: f64,
    pub pulse_period: f64,
}

impl WindowConfig {
    pub fn new(window_start: f64, window_width: f64, pulse_period: f64) -> Result<Self> {
        if !(pulse_period.is_finite() && pulse_period > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "pulse period must be positive, got {pulse_period}"
            )));
        }
        if !(window_width.is_finite() && window_width > 0.0 && window_width < pulse_period) {
            return Err(Error::InvalidArgument(format!(
                "window width must lie in (0, period), got {window_width}"
            )));
        }
        if !window_start.is_finite()
            || window_start < 0.0
            || window_start + window_width > pulse_period
        {
            return Err(Error::InvalidArgument(format!(
                "window [{window_start}, {}] does not fit inside one period",
                window_start + window_width
            )));
        }
        Ok(Self {
            window_start,
            window_width,
            pulse_period,
        })
    }

    /// Places the window where it covers the most events, approximating the
    /// "full width of the delay histogram" placement used when the light
    /// arrival time is known only from the data itself. Ties resolve to the
    /// earliest position.
    pub fn auto(delays: &[f64], window_width: f64, pulse_period: f64) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::InsufficientData(
                "cannot auto-place a window without events".into(),
            ));
        }
        let mut sorted: Vec<f64> = delays.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Sweep candidate starts anchored at each event; two-pointer count of
        // events inside [start, start + width].
        let mut best_start = sorted[0];
        let mut best_count = 0usize;
        let mut hi = 0usize;
        for lo in 0..sorted.len() {
            while hi < sorted.len() && sorted[hi] <= sorted[lo] + window_width {
                hi += 1;
            }
            if hi - lo > best_count {
                best_count = hi - lo;
                best_start = sorted[lo];
            }
        }
        let start = best_start.clamp(0.0, pulse_period - window_width);
        Self::new(start, window_width, pulse_period)
    }

    pub fn contains(&self, delay: f64) -> bool {
        delay >= self.window_start && delay <= self.window_start + self.window_width
    }
}

/// A raw detection event: laser pulse ordinal and delay to the sync edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawTag {
    pub pulse_index: u64,
    pub delay: f64,
}

/// Classification of a detection event against the coincidence window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Light,
    Dark,
    /// In-window event on a pulse that already produced a light event; a pulse
    /// either clicked or it did not.
    Unclassified,
}

/// A classified detection event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeTagRecord {
    pub pulse_index: u64,
    pub delay: f64,
    pub classification: Classification,
}

/// Result of classifying a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedStream {
    pub records: Vec<TimeTagRecord>,
    pub light_count: u64,
    pub dark_count: u64,
    pub duplicate_count: u64,
}

/// Classifies events: light iff the delay falls inside the window, at most one
/// light event per pulse. Pulse indices must be non-decreasing and delays must
/// lie within one pulse period.
pub fn classify_events(tags: &[RawTag], cfg: &WindowConfig) -> Result<ClassifiedStream> {
    let mut records = Vec::with_capacity(tags.len());
    let mut light = 0u64;
    let mut dark = 0u64;
    let mut duplicates = 0u64;
    let mut prev_index: Option<u64> = None;
    let mut pulse_has_light = false;

    for (i, tag) in tags.iter().enumerate() {
        if let Some(prev) = prev_index {
            if tag.pulse_index < prev {
                return Err(Error::MalformedStream(format!(
                    "event {i}: pulse index {} after {prev}",
                    tag.pulse_index
                )));
            }
            if tag.pulse_index != prev {
                pulse_has_light = false;
            }
        }
        if !tag.delay.is_finite() || tag.delay < 0.0 || tag.delay > cfg.pulse_period {
            return Err(Error::MalformedStream(format!(
                "event {i}: delay {} outside one pulse period",
                tag.delay
            )));
        }
        prev_index = Some(tag.pulse_index);

        let classification = if cfg.contains(tag.delay) {
            if pulse_has_light {
                duplicates += 1;
                Classification::Unclassified
            } else {
                pulse_has_light = true;
                light += 1;
                Classification::Light
            }
        } else {
            dark += 1;
            Classification::Dark
        };
        records.push(TimeTagRecord {
            pulse_index: tag.pulse_index,
            delay: tag.delay,
            classification,
        });
    }

    Ok(ClassifiedStream {
        records,
        light_count: light,
        dark_count: dark,
        duplicate_count: duplicates,
    })
}

/// Binomial proportion under the Jeffreys prior: posterior mean
/// `(k + 1/2) / (N + 1)` and standard deviation `sqrt(p(1-p)/(N+2))`.
/// Strictly positive spread even at `k = 0` or `k = N`, which keeps saturated
/// points usable in the orthogonal-distance likelihood.
pub fn estimate_click_probability(light_count: u64, pulse_count: u64) -> Result<(f64, f64)> {
    if pulse_count == 0 {
        return Err(Error::InvalidArgument("pulse count must be positive".into()));
    }
    if light_count > pulse_count {
        return Err(Error::InvalidArgument(format!(
            "light count {light_count} exceeds pulse count {pulse_count}"
        )));
    }
    let p = (light_count as f64 + 0.5) / (pulse_count as f64 + 1.0);
    let sigma = (p * (1.0 - p) / (pulse_count as f64 + 2.0)).sqrt();
    Ok((p, sigma))
}

/// A monitored optical power reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerReading {
    /// Average power at the monitor, in watts.
    pub average_power: f64,
    /// Relative measurement error (default 0.03).
    pub relative_error: f64,
    /// Factor mapping monitored power to detector-incident power.
    pub splitter_calibration: f64,
}

impl PowerReading {
    pub fn new(average_power: f64) -> Result<Self> {
        if !(average_power.is_finite() && average_power >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "average power must be nonnegative, got {average_power}"
            )));
        }
        Ok(Self {
            average_power,
            relative_error: 0.03,
            splitter_calibration: 1.0,
        })
    }

    pub fn with_relative_error(mut self, rel: f64) -> Result<Self> {
        if !(rel.is_finite() && rel >= 0.0) {
            return Err(Error::InvalidArgument("relative error must be nonnegative".into()));
        }
        self.relative_error = rel;
        Ok(self)
    }

    pub fn with_splitter_calibration(mut self, cal: f64) -> Result<Self> {
        if !(cal.is_finite() && cal > 0.0) {
            return Err(Error::InvalidArgument("splitter calibration must be positive".into()));
        }
        self.splitter_calibration = cal;
        Ok(self)
    }
}

/// Converts an average power into mean photons per pulse:
/// `<n> = P_incident / (f_rep * h c / lambda)`, with
/// `sigma = relative_error * <n>`.
pub fn power_to_mean_photons(reading: &PowerReading, meta: &ExperimentMeta) -> (f64, f64) {
    let photon_energy = PLANCK * SPEED_OF_LIGHT / meta.wavelength;
    let pulse_energy = reading.average_power * reading.splitter_calibration / meta.rep_rate;
    let n = pulse_energy / photon_energy;
    (n, reading.relative_error * n)
}

/// Rate at which dark-count recovery windows overlap light pulses, and the
/// corresponding fraction of pulses lost:
/// `events/s = dark_rate * recovery_time * rep_rate`,
/// `correction = dark_rate * recovery_time`.
///
/// Reported only; the correction is not applied to measured probabilities
/// unless explicitly requested via [`apply_dead_time_correction`].
pub fn dead_time_overlap_rate(
    dark_rate: f64,
    recovery_time: f64,
    rep_rate: f64,
) -> Result<(f64, f64)> {
    for (name, v) in [
        ("dark_rate", dark_rate),
        ("recovery_time", recovery_time),
        ("rep_rate", rep_rate),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be nonnegative, got {v}"
            )));
        }
    }
    let correction = dark_rate * recovery_time;
    Ok((correction * rep_rate, correction))
}

/// Scales every click probability by `1 / (1 - correction)` to undo pulses
/// lost to dead time. Off by default in the pipeline.
pub fn apply_dead_time_correction(data: &mut Dataset, correction: f64) -> Result<()> {
    if !(correction.is_finite() && (0.0..1.0).contains(&correction)) {
        return Err(Error::InvalidArgument(format!(
            "dead-time correction must lie in [0, 1), got {correction}"
        )));
    }
    let scale = 1.0 / (1.0 - correction);
    for p in &mut data.points {
        p.p_click = (p.p_click * scale).min(1.0);
        p.sigma_p_click *= scale;
    }
    Ok(())
}

/// A parsed tag-stream file.
#[derive(Debug, Clone, PartialEq)]
pub struct TagStream {
    pub period: f64,
    /// Total laser pulses in the acquisition; inferred from the largest pulse
    /// index when absent.
    pub pulses: Option<u64>,
    /// Measured power at the monitor, when the file carries one.
    pub power: Option<f64>,
    pub splitter_calibration: Option<f64>,
    pub relative_error: Option<f64>,
    pub events: Vec<RawTag>,
}

impl TagStream {
    /// Number of laser pulses this stream represents.
    pub fn pulse_count(&self) -> u64 {
        self.pulses
            .unwrap_or_else(|| self.events.iter().map(|e| e.pulse_index + 1).max().unwrap_or(0))
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# period={}", self.period);
        if let Some(p) = self.pulses {
            let _ = writeln!(out, "# pulses={p}");
        }
        if let Some(p) = self.power {
            let _ = writeln!(out, "# power={p}");
        }
        if let Some(c) = self.splitter_calibration {
            let _ = writeln!(out, "# splitter_calibration={c}");
        }
        if let Some(r) = self.relative_error {
            let _ = writeln!(out, "# relative_error={r}");
        }
        let _ = writeln!(out, "pulse_index,delay_seconds");
        for e in &self.events {
            let _ = writeln!(out, "{},{}", e.pulse_index, e.delay);
        }
        out
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let reader = BufReader::new(reader);
        let mut period = None;
        let mut pulses = None;
        let mut power = None;
        let mut splitter = None;
        let mut rel = None;
        let mut events = Vec::new();

        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    let v = v.trim();
                    match k.trim() {
                        "period" => period = Some(parse_f64(v)?),
                        "pulses" => {
                            pulses = Some(v.parse::<u64>().map_err(|_| {
                                Error::Parse(format!("invalid pulses count {v:?}"))
                            })?)
                        }
                        "power" => power = Some(parse_f64(v)?),
                        "splitter_calibration" => splitter = Some(parse_f64(v)?),
                        "relative_error" => rel = Some(parse_f64(v)?),
                        _ => {}
                    }
                }
                continue;
            }
            if line.starts_with(|c: char| c.is_ascii_alphabetic()) {
                continue; // column header
            }
            let (idx, delay) = line.split_once(',').ok_or_else(|| {
                Error::MalformedStream(format!("line {}: expected pulse_index,delay", lineno + 1))
            })?;
            events.push(RawTag {
                pulse_index: idx.trim().parse().map_err(|_| {
                    Error::MalformedStream(format!("line {}: bad pulse index {idx:?}", lineno + 1))
                })?,
                delay: parse_f64(delay)?,
            });
        }

        Ok(Self {
            period: period.ok_or_else(|| Error::Parse("missing # period= header".into()))?,
            pulses,
            power,
            splitter_calibration: splitter,
            relative_error: rel,
            events,
        })
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("invalid number {s:?}")))
}

/// How the coincidence window is placed per stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowPlacement {
    /// Center a window of the given width on the delay-histogram mode.
    Auto { width: f64 },
    /// Use the given start and width for every stream.
    Fixed { start: f64, width: f64 },
}

/// Per-setting tallies produced while building a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingTally {
    pub light: u64,
    pub dark: u64,
    pub duplicates: u64,
    pub trials: u64,
    /// Dark events per second of acquisition time.
    pub dark_rate: f64,
    pub window: WindowConfig,
}

/// Builds a dataset from per-setting tag streams and power readings. Settings
/// are ordered by ascending mean photon number.
pub fn build_dataset(
    settings: &[(TagStream, PowerReading)],
    placement: WindowPlacement,
    meta: &ExperimentMeta,
) -> Result<(Dataset, Vec<SettingTally>)> {
    if settings.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 power settings, got {}",
            settings.len()
        )));
    }

    let mut rows: Vec<(DataPoint, SettingTally)> = Vec::with_capacity(settings.len());
    for (i, (stream, reading)) in settings.iter().enumerate() {
        let trials = stream.pulse_count();
        if trials == 0 {
            return Err(Error::EmptySetting(format!(
                "setting {i} has zero laser pulses"
            )));
        }
        let window = match placement {
            WindowPlacement::Fixed { start, width } => {
                WindowConfig::new(start, width, stream.period)?
            }
            WindowPlacement::Auto { width } => {
                if stream.events.is_empty() {
                    // No events at all: any placement gives zero light counts.
                    WindowConfig::new(0.0, width, stream.period)?
                } else {
                    let delays: Vec<f64> = stream.events.iter().map(|e| e.delay).collect();
                    WindowConfig::auto(&delays, width, stream.period)?
                }
            }
        };
        let classified = classify_events(&stream.events, &window)?;
        let (p_click, sigma_p) = estimate_click_probability(classified.light_count, trials)?;
        let (n, sigma_n) = power_to_mean_photons(reading, meta);
        let point = DataPoint::new(n, sigma_n, p_click, sigma_p, classified.light_count, trials)?;
        let dark_rate = classified.dark_count as f64 / (trials as f64 * stream.period);
        rows.push((
            point,
            SettingTally {
                light: classified.light_count,
                dark: classified.dark_count,
                duplicates: classified.duplicate_count,
                trials,
                dark_rate,
                window,
            },
        ));
    }

    rows.sort_by(|a, b| a.0.mean_photons.partial_cmp(&b.0.mean_photons).unwrap());
    let (points, tallies): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok((Dataset::new(points, meta.clone())?, tallies))
}
