//! Transmit pulse model and range-bin bookkeeping.
//!
//! The transmitted waveform is a Gaussian-windowed carrier
//! `s(t) = exp(-t^2 / (2 tau0^2)) * cos(2 pi f_c t)`. A received range bin at
//! radius `R` corresponds to the two-way delay `2R / c`.

use std::f64::consts::PI;

use crate::error::{ensure_arg, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Center of the 3.1 to 4.8 GHz UWB band.
pub const DEFAULT_CENTER_FREQUENCY: f64 = 4.3e9;

/// One-sided offset from the center frequency at which the default pulse
/// spectrum is 10 dB below its peak (half of the 1.7 GHz band).
pub const DEFAULT_HALF_BANDWIDTH: f64 = 0.85e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseParams {
    /// Carrier (center) frequency, Hz.
    pub center_frequency: f64,
    /// Standard deviation of the Gaussian envelope, seconds.
    pub tau0: f64,
}

impl PulseParams {
    pub fn new(center_frequency: f64, tau0: f64) -> Result<Self> {
        ensure_arg!(
            center_frequency.is_finite() && center_frequency > 0.0,
            "center frequency must be positive, got {center_frequency}"
        );
        ensure_arg!(tau0.is_finite() && tau0 > 0.0, "tau0 must be positive, got {tau0}");
        Ok(Self { center_frequency, tau0 })
    }

    /// Envelope standard deviation that places the -10 dB points of the
    /// spectral magnitude at `center_frequency +/- half_bandwidth`.
    ///
    /// The envelope's Fourier transform is proportional to
    /// `exp(-2 pi^2 f^2 tau0^2)`; setting that to `10^(-10/20)` gives
    /// `tau0 = sqrt(ln 10) / (2 pi half_bandwidth)`.
    pub fn tau0_for_bandwidth(half_bandwidth: f64) -> f64 {
        10f64.ln().sqrt() / (2.0 * PI * half_bandwidth)
    }

    /// Evaluate the envelope alone.
    #[inline]
    pub fn envelope(&self, t: f64) -> f64 {
        (-t * t / (2.0 * self.tau0 * self.tau0)).exp()
    }
}

impl Default for PulseParams {
    fn default() -> Self {
        default_pulse()
    }
}

/// The P440-like default: 4.3 GHz carrier, 1.7 GHz -10 dB bandwidth.
pub fn default_pulse() -> PulseParams {
    PulseParams {
        center_frequency: DEFAULT_CENTER_FREQUENCY,
        tau0: PulseParams::tau0_for_bandwidth(DEFAULT_HALF_BANDWIDTH),
    }
}

/// Transmitted UWB waveform at time `t` (seconds).
#[inline]
pub fn pulse(t: f64, p: &PulseParams) -> f64 {
    p.envelope(t) * (2.0 * PI * p.center_frequency * t).cos()
}

/// Two-way time of flight to range `range` (meters).
pub fn range_to_delay(range: f64) -> Result<f64> {
    ensure_arg!(range.is_finite() && range >= 0.0, "range must be non-negative, got {range}");
    Ok(2.0 * range / SPEED_OF_LIGHT)
}

/// Pulse response as a function of range offset rather than time.
#[inline]
pub(crate) fn pulse_at_range_offset(dr: f64, p: &PulseParams) -> f64 {
    pulse(2.0 * dr / SPEED_OF_LIGHT, p)
}

/// Uniformly spaced radial range bins `r_i = r_min + i * (r_max - r_min) / (n_bins - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeAxis {
    r_min: f64,
    r_max: f64,
    n_bins: usize,
}

impl RangeAxis {
    pub fn new(r_min: f64, r_max: f64, n_bins: usize) -> Result<Self> {
        ensure_arg!(
            r_min.is_finite() && r_max.is_finite() && 0.0 < r_min && r_min < r_max,
            "range axis needs 0 < r_min < r_max, got [{r_min}, {r_max}]"
        );
        ensure_arg!(n_bins >= 2, "range axis needs at least 2 bins, got {n_bins}");
        Ok(Self { r_min, r_max, n_bins })
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Bin spacing in meters.
    pub fn spacing(&self) -> f64 {
        (self.r_max - self.r_min) / (self.n_bins - 1) as f64
    }

    #[inline]
    pub fn radius(&self, i: usize) -> f64 {
        if i + 1 == self.n_bins {
            self.r_max
        } else {
            self.r_min + i as f64 * self.spacing()
        }
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.n_bins).map(|i| self.radius(i)).collect()
    }

    /// Fractional bin index of `range`, or `None` outside `[r_min, r_max]`.
    #[inline]
    pub fn fractional_index(&self, range: f64) -> Option<f64> {
        if range < self.r_min || range > self.r_max {
            return None;
        }
        Some((range - self.r_min) / self.spacing())
    }
}
