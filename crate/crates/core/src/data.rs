//! Measured click-probability data and its on-disk text format.
//!
//! A dataset is one row per power setting: mean photon number with its
//! uncertainty, click probability with its uncertainty, and the raw
//! click/pulse counts behind the estimate. Files are comma-delimited with
//! `# key=value` metadata comments and a named column header:
//!
//! ```text
//! # wavelength=8.5e-7
//! # rep_rate=5000000
//! # power_meter_relative_error=0.03
//! # splitter_calibration=1
//! mean_photons,sigma_mean_photons,clicks,trials,p_click,sigma_p_click
//! 4279.2,128.4,153,300000,0.000511,4.1e-5
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! write-then-read reproduces the in-memory values exactly.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Experiment-level metadata carried alongside the data points.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMeta {
    /// Laser wavelength in meters.
    pub wavelength: f64,
    /// Pulse repetition rate in hertz.
    pub rep_rate: f64,
    /// Relative error of the power meter (dimensionless, default 0.03).
    pub power_meter_relative_error: f64,
    /// Calibration factor mapping monitored power to detector-incident power.
    pub splitter_calibration: f64,
    /// Bath temperature in kelvin, when recorded.
    pub temperature: Option<f64>,
    /// Bias current in amperes, when recorded.
    pub bias_current: Option<f64>,
}

impl ExperimentMeta {
    pub fn new(wavelength: f64, rep_rate: f64) -> Result<Self> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if !(rep_rate.is_finite() && rep_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rep_rate must be positive, got {rep_rate}"
            )));
        }
        Ok(Self {
            wavelength,
            rep_rate,
            power_meter_relative_error: 0.03,
            splitter_calibration: 1.0,
            temperature: None,
            bias_current: None,
        })
    }

    pub fn with_power_error(mut self, rel: f64) -> Result<Self> {
        if !(rel.is_finite() && rel >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "power_meter_relative_error must be nonnegative, got {rel}"
            )));
        }
        self.power_meter_relative_error = rel;
        Ok(self)
    }

    pub fn with_splitter_calibration(mut self, cal: f64) -> Result<Self> {
        if !(cal.is_finite() && cal > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "splitter_calibration must be positive, got {cal}"
            )));
        }
        self.splitter_calibration = cal;
        Ok(self)
    }
}

/// One power setting's measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub mean_photons: f64,
    pub sigma_mean_photons: f64,
    pub p_click: f64,
    pub sigma_p_click: f64,
    pub clicks: u64,
    pub trials: u64,
}

impl DataPoint {
    pub fn new(
        mean_photons: f64,
        sigma_mean_photons: f64,
        p_click: f64,
        sigma_p_click: f64,
        clicks: u64,
        trials: u64,
    ) -> Result<Self> {
        if !(mean_photons.is_finite() && mean_photons > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mean_photons must be positive, got {mean_photons}"
            )));
        }
        if !(sigma_mean_photons.is_finite() && sigma_mean_photons > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma_mean_photons must be positive, got {sigma_mean_photons}"
            )));
        }
        if !(p_click.is_finite() && (0.0..=1.0).contains(&p_click)) {
            return Err(Error::InvalidArgument(format!(
                "p_click must lie in [0, 1], got {p_click}"
            )));
        }
        if !(sigma_p_click.is_finite() && sigma_p_click > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma_p_click must be positive, got {sigma_p_click}"
            )));
        }
        if trials == 0 {
            return Err(Error::InvalidArgument("trials must be positive".into()));
        }
        if clicks > trials {
            return Err(Error::InvalidArgument(format!(
                "clicks ({clicks}) exceed trials ({trials})"
            )));
        }
        Ok(Self {
            mean_photons,
            sigma_mean_photons,
            p_click,
            sigma_p_click,
            clicks,
            trials,
        })
    }
}

/// An ordered set of data points plus experiment metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<DataPoint>,
    pub meta: ExperimentMeta,
}

impl Dataset {
    pub fn new(points: Vec<DataPoint>, meta: ExperimentMeta) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument(
                "dataset must contain at least one point".into(),
            ));
        }
        if points.len() >= 2 {
            let first = points[0].mean_photons;
            if points.iter().all(|p| p.mean_photons == first) {
                return Err(Error::InvalidArgument(
                    "mean_photons values must not all be equal".into(),
                ));
            }
        }
        Ok(Self { points, meta })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let m = &self.meta;
        let _ = writeln!(out, "# wavelength={}", m.wavelength);
        let _ = writeln!(out, "# rep_rate={}", m.rep_rate);
        let _ = writeln!(
            out,
            "# power_meter_relative_error={}",
            m.power_meter_relative_error
        );
        let _ = writeln!(out, "# splitter_calibration={}", m.splitter_calibration);
        if let Some(t) = m.temperature {
            let _ = writeln!(out, "# temperature={t}");
        }
        if let Some(i) = m.bias_current {
            let _ = writeln!(out, "# bias_current={i}");
        }
        let _ = writeln!(
            out,
            "mean_photons,sigma_mean_photons,clicks,trials,p_click,sigma_p_click"
        );
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.mean_photons, p.sigma_mean_photons, p.clicks, p.trials, p.p_click, p.sigma_p_click
            );
        }
        out
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(&path)?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let reader = BufReader::new(reader);
        let mut header = MetaHeader::default();
        let mut columns: Option<Vec<String>> = None;
        let mut points = Vec::new();

        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                header.parse_line(rest)?;
                continue;
            }
            match &columns {
                None => {
                    columns = Some(line.split(',').map(|c| c.trim().to_string()).collect());
                }
                Some(cols) => {
                    points.push(parse_point(line, cols, lineno + 1)?);
                }
            }
        }

        let wavelength = header
            .wavelength
            .ok_or_else(|| Error::Parse("missing wavelength header".into()))?;
        let rep_rate = header
            .rep_rate
            .ok_or_else(|| Error::Parse("missing rep_rate header".into()))?;
        let mut meta = ExperimentMeta::new(wavelength, rep_rate)?;
        if let Some(rel) = header.power_error {
            meta = meta.with_power_error(rel)?;
        }
        if let Some(cal) = header.splitter {
            meta = meta.with_splitter_calibration(cal)?;
        }
        meta.temperature = header.temperature;
        meta.bias_current = header.bias_current;
        Dataset::new(points, meta)
    }
}

#[derive(Default)]
struct MetaHeader {
    wavelength: Option<f64>,
    rep_rate: Option<f64>,
    power_error: Option<f64>,
    splitter: Option<f64>,
    temperature: Option<f64>,
    bias_current: Option<f64>,
}

impl MetaHeader {
    fn parse_line(&mut self, rest: &str) -> Result<()> {
        let Some((key, value)) = rest.split_once('=') else {
            return Ok(()); // free-form comment
        };
        let value = value.trim();
        let slot = match key.trim() {
            "wavelength" => &mut self.wavelength,
            "rep_rate" => &mut self.rep_rate,
            "power_meter_relative_error" => &mut self.power_error,
            "splitter_calibration" => &mut self.splitter,
            "temperature" => &mut self.temperature,
            "bias_current" => &mut self.bias_current,
            _ => return Ok(()),
        };
        *slot = Some(parse_f64(value)?);
        Ok(())
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("invalid number {s:?}")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| Error::Parse(format!("invalid count {s:?}")))
}

fn parse_point(line: &str, columns: &[String], lineno: usize) -> Result<DataPoint> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != columns.len() {
        return Err(Error::Parse(format!(
            "line {lineno}: expected {} fields, got {}",
            columns.len(),
            fields.len()
        )));
    }
    let get = |name: &str| -> Result<&str> {
        columns
            .iter()
            .position(|c| c == name)
            .map(|i| fields[i])
            .ok_or_else(|| Error::Parse(format!("missing column {name}")))
    };
    let mean_photons = parse_f64(get("mean_photons")?)?;
    let sigma_mean_photons = parse_f64(get("sigma_mean_photons")?)?;
    let clicks = parse_u64(get("clicks")?)?;
    let trials = parse_u64(get("trials")?)?;
    let p_click = parse_f64(get("p_click")?)?;
    let sigma_p_click = parse_f64(get("sigma_p_click")?)?;
    DataPoint::new(
        mean_photons,
        sigma_mean_photons,
        p_click,
        sigma_p_click,
        clicks,
        trials,
    )
}
