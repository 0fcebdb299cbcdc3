//! Synthetic experiments from known ground truth, and the geometric taper
//! model relating the fitted single-photon efficiency to detector geometry.
//!
//! Generators are seed-deterministic. The measured photon number of each
//! setting carries multiplicative power-meter noise while clicks are drawn
//! from the true power, reproducing the errors-in-variables structure of the
//! real pipeline.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Poisson, StandardNormal};

use crate::data::{DataPoint, Dataset, ExperimentMeta};
use crate::error::{Error, Result};
use crate::events::{estimate_click_probability, power_to_mean_photons, PowerReading, RawTag,
    TagStream, WindowConfig};
use crate::model::{CoherentInput, DetectorModel};

/// Ground truth for a synthetic experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub model: DetectorModel,
    /// True incident average powers, watts.
    pub power_settings: Vec<f64>,
    pub trials_per_setting: u64,
    /// Relative scale of the multiplicative power-meter noise.
    pub power_noise_relative: f64,
    /// Dark events per second, uniform in arrival time.
    pub dark_rate: f64,
    pub seed: u64,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        if self.power_settings.is_empty() {
            return Err(Error::InvalidArgument("at least one power setting required".into()));
        }
        if self.power_settings.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
            return Err(Error::InvalidArgument("power settings must be strictly positive".into()));
        }
        if self.trials_per_setting == 0 {
            return Err(Error::InvalidArgument("trials_per_setting must be >= 1".into()));
        }
        if !(self.power_noise_relative.is_finite() && self.power_noise_relative >= 0.0) {
            return Err(Error::InvalidArgument("power noise must be nonnegative".into()));
        }
        if !(self.dark_rate.is_finite() && self.dark_rate >= 0.0) {
            return Err(Error::InvalidArgument("dark rate must be nonnegative".into()));
        }
        Ok(())
    }
}

fn mix64(z: u64) -> u64 {
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn setting_rng(seed: u64, setting: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(seed ^ (setting as u64).wrapping_mul(0xA076_1D64_78BD_642F)))
}

struct SettingDraw {
    measured_power: f64,
    true_p_click: f64,
}

fn draw_setting(truth: &GroundTruth, rng: &mut ChaCha8Rng, power: f64, meta: &ExperimentMeta) -> SettingDraw {
    let g: f64 = rng.sample(StandardNormal);
    let measured_power = (power * (1.0 + truth.power_noise_relative * g)).max(power * 1e-6);
    let true_reading = PowerReading::new(power).unwrap();
    let (n_true, _) = power_to_mean_photons(&true_reading, meta);
    let true_p_click = truth
        .model
        .click_probability(CoherentInput::new(n_true).unwrap());
    SettingDraw { measured_power, true_p_click }
}

fn data_point(
    truth: &GroundTruth,
    meta: &ExperimentMeta,
    measured_power: f64,
    clicks: u64,
) -> Result<DataPoint> {
    let reading = PowerReading::new(measured_power)?
        .with_relative_error(meta.power_meter_relative_error)?
        .with_splitter_calibration(meta.splitter_calibration)?;
    let (n_meas, sigma_n) = power_to_mean_photons(&reading, meta);
    let (p_hat, sigma_p) = estimate_click_probability(clicks, truth.trials_per_setting)?;
    DataPoint::new(n_meas, sigma_n, p_hat, sigma_p, clicks, truth.trials_per_setting)
}

/// Generates a dataset without raw tag streams: clicks are drawn as a single
/// binomial per setting.
pub fn generate_dataset(truth: &GroundTruth, meta: &ExperimentMeta) -> Result<Dataset> {
    truth.validate()?;
    let mut rows = Vec::with_capacity(truth.power_settings.len());
    for (idx, &power) in truth.power_settings.iter().enumerate() {
        let mut rng = setting_rng(truth.seed, idx);
        let draw = draw_setting(truth, &mut rng, power, meta);
        let clicks = Binomial::new(truth.trials_per_setting, draw.true_p_click)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(&mut rng);
        rows.push(data_point(truth, meta, draw.measured_power, clicks)?);
    }
    rows.sort_by(|a, b| a.mean_photons.partial_cmp(&b.mean_photons).unwrap());
    Dataset::new(rows, meta.clone())
}

/// Generates a dataset together with per-setting tag streams: light events are
/// realized pulse by pulse inside the window, dark events arrive uniformly at
/// `dark_rate`. The dataset's clicks are the generator's light pulses, before
/// any window leakage the classifier may see.
pub fn generate_with_tags(
    truth: &GroundTruth,
    meta: &ExperimentMeta,
    window: &WindowConfig,
) -> Result<(Dataset, Vec<TagStream>)> {
    truth.validate()?;
    let period = window.pulse_period;
    let mut rows: Vec<(DataPoint, TagStream)> = Vec::with_capacity(truth.power_settings.len());
    for (idx, &power) in truth.power_settings.iter().enumerate() {
        let mut rng = setting_rng(truth.seed, idx);
        let draw = draw_setting(truth, &mut rng, power, meta);

        let darks_per_pulse = truth.dark_rate * period;
        let mut events = Vec::new();
        let mut clicks = 0u64;
        for pulse in 0..truth.trials_per_setting {
            if rng.gen::<f64>() < draw.true_p_click {
                clicks += 1;
                events.push(RawTag {
                    pulse_index: pulse,
                    delay: window.window_start + rng.gen::<f64>() * window.window_width,
                });
            }
            if darks_per_pulse > 0.0 {
                let n_dark = Poisson::new(darks_per_pulse)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?
                    .sample(&mut rng) as u64;
                for _ in 0..n_dark {
                    events.push(RawTag {
                        pulse_index: pulse,
                        delay: rng.gen::<f64>() * period,
                    });
                }
            }
        }

        let stream = TagStream {
            period,
            pulses: Some(truth.trials_per_setting),
            power: Some(draw.measured_power),
            splitter_calibration: Some(meta.splitter_calibration),
            relative_error: Some(meta.power_meter_relative_error),
            events,
        };
        rows.push((data_point(truth, meta, draw.measured_power, clicks)?, stream));
    }
    rows.sort_by(|a, b| a.0.mean_photons.partial_cmp(&b.0.mean_photons).unwrap());
    let (points, streams): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok((Dataset::new(points, meta.clone())?, streams))
}

/// Log-spaced power grid, inclusive of both ends.
pub fn log_spaced_powers(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && min > 0.0 && max > min) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < min < max, got [{min}, {max}]"
        )));
    }
    if count < 2 {
        return Err(Error::InvalidArgument("need at least 2 grid points".into()));
    }
    let (lo, hi) = (min.ln(), max.ln());
    Ok((0..count)
        .map(|k| (lo + (hi - lo) * k as f64 / (count - 1) as f64).exp())
        .collect())
}

/// Bowtie geometry of a nanobridge detector: a fully efficient bridge flanked
/// by two tapers that widen toward the leads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeGeometry {
    pub bridge_length: f64,
    pub bridge_width: f64,
    /// Photosensitive taper length on each side of the bridge.
    pub taper_length: f64,
    /// Half-opening angle of the taper (default 45 degrees).
    pub taper_half_angle: f64,
    pub lead_width: f64,
}

impl BridgeGeometry {
    pub fn new(
        bridge_length: f64,
        bridge_width: f64,
        taper_length: f64,
        taper_half_angle: f64,
        lead_width: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("bridge_length", bridge_length),
            ("bridge_width", bridge_width),
            ("lead_width", lead_width),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGeometry(format!("{name} must be positive, got {v}")));
            }
        }
        if !(taper_length.is_finite() && taper_length >= 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "taper_length must be nonnegative, got {taper_length}"
            )));
        }
        if bridge_width >= lead_width {
            return Err(Error::InvalidGeometry(format!(
                "bridge width {bridge_width} must be narrower than the lead width {lead_width}"
            )));
        }
        if !(taper_half_angle > 0.0 && taper_half_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidGeometry(format!(
                "taper half-angle must lie in (0, pi/2), got {taper_half_angle}"
            )));
        }
        Ok(Self {
            bridge_length,
            bridge_width,
            taper_length,
            taper_half_angle,
            lead_width,
        })
    }

    /// Standard 45-degree taper.
    pub fn with_default_angle(
        bridge_length: f64,
        bridge_width: f64,
        taper_length: f64,
        lead_width: f64,
    ) -> Result<Self> {
        Self::new(
            bridge_length,
            bridge_width,
            taper_length,
            std::f64::consts::FRAC_PI_4,
            lead_width,
        )
    }

    /// Wire width at distance `x` from the bridge end:
    /// `w(x) = bridge_width + 2 x tan(half_angle)`, capped at the lead width.
    pub fn width_at(&self, x: f64) -> f64 {
        (self.bridge_width + 2.0 * x * self.taper_half_angle.tan()).min(self.lead_width)
    }

    /// Photosensitive area of one taper over its first `taper_length`:
    /// a closed-form trapezoid, split into taper plus constant-width segment
    /// where the profile reaches the lead width.
    pub fn taper_active_area(&self) -> f64 {
        let tan = self.taper_half_angle.tan();
        let x_cap = (self.lead_width - self.bridge_width) / (2.0 * tan);
        let l = self.taper_length;
        if l <= x_cap {
            self.bridge_width * l + tan * l * l
        } else {
            self.bridge_width * x_cap + tan * x_cap * x_cap + self.lead_width * (l - x_cap)
        }
    }
}

/// Area-weighted single-photon efficiency of the bowtie under uniform
/// illumination: the bridge clicks on every absorbed photon while the taper
/// region needs two or more, so
/// `p_1 = A_bridge / (A_bridge + 2 A_taper)`.
pub fn taper_effective_p1(geometry: &BridgeGeometry) -> f64 {
    let bridge = geometry.bridge_length * geometry.bridge_width;
    bridge / (bridge + 2.0 * geometry.taper_active_area())
}

/// Taper length that reproduces a target `p_1`, by bisection on
/// [`taper_effective_p1`] (monotone decreasing in the length).
pub fn taper_length_for_p1(template: &BridgeGeometry, target_p1: f64) -> Result<f64> {
    if !(target_p1.is_finite() && target_p1 > 0.0 && target_p1 <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target p1 must lie in (0, 1], got {target_p1}"
        )));
    }
    if target_p1 == 1.0 {
        return Ok(0.0);
    }
    let p1_of = |l: f64| {
        taper_effective_p1(&BridgeGeometry {
            taper_length: l,
            ..*template
        })
    };
    let mut hi = template.bridge_length.max(template.taper_length).max(1e-12);
    while p1_of(hi) > target_p1 {
        hi *= 2.0;
        if hi > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "no taper length below 1 m reaches p1 = {target_p1}"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p1_of(mid) > target_p1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Lower bound on the two-photon efficiency of a long wire where absorptions
/// are independent: `p_2 >= 1 - (1 - p_1)^2`.
pub fn long_wire_p2_bound(p1: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p1));
    1.0 - (1.0 - p1) * (1.0 - p1)
}
