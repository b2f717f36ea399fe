//! Sampled signals and the synthesis chain for simulated reflections.
//!
//! A reflection is modelled as a unit impulse that is delayed by a Thiran
//! all-pass fractional delay, optionally band limited with a linear-phase FIR,
//! and corrupted with white Gaussian noise.

mod fir;
mod noise;
mod synth;
mod thiran;

pub(crate) use fir::convolve;
pub use fir::{bandlimit, design_lowpass, LinearPhaseFir, KAISER_BETA, LOWPASS_ORDER};
pub use noise::{add_noise, gaussian_noise, noise_std, reference_power};
pub use synth::{add_pulse, ideal_reflection, synth_reflection, PulseSpec};
pub use thiran::{
    apply_fractional_delay, delayed_impulse, tail_allowance, thiran_coeffs, AllpassFilter,
    ThiranSpec, DEFAULT_THIRAN_ORDER, DEGENERACY_TOLERANCE,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("signal contains a non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("signal is empty")]
    Empty,
    #[error("Thiran order must be at least 1")]
    InvalidOrder,
    #[error("delay must be finite and non-negative, got {0}")]
    InvalidDelay(f64),
    #[error("degenerate Thiran design: order {order}, delay {delay} hits a zero denominator")]
    DegenerateDelay { order: usize, delay: f64 },
    #[error("cutoff {cutoff_hz} Hz outside (0, {nyquist_hz}] Hz")]
    InvalidCutoff { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("signal has zero energy; SNR is undefined")]
    ZeroSignal,
    #[error("pulse at {delay_samples} samples plus a {tail}-sample tail does not fit in {length} samples")]
    PulseOutOfRange {
        delay_samples: f64,
        tail: usize,
        length: usize,
    },
}

/// Uniformly sampled real-valued sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    samples: Vec<f64>,
    rate_hz: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, rate_hz: f64) -> Result<Self, SignalError> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(SignalError::InvalidRate(rate_hz));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(SignalError::NonFinite(i));
        }
        Ok(Self { samples, rate_hz })
    }

    pub fn zeros(len: usize, rate_hz: f64) -> Result<Self, SignalError> {
        Self::new(vec![0.0; len], rate_hz)
    }

    /// Unit impulse of length `len` at `index`.
    pub fn impulse(len: usize, index: usize, rate_hz: f64) -> Result<Self, SignalError> {
        let mut samples = vec![0.0; len];
        if let Some(s) = samples.get_mut(index) {
            *s = 1.0;
        }
        Self::new(samples, rate_hz)
    }

    // Callers guarantee the invariants (rate already validated, finite samples).
    pub(crate) fn from_parts(samples: Vec<f64>, rate_hz: f64) -> Self {
        debug_assert!(rate_hz > 0.0);
        debug_assert!(samples.iter().all(|x| x.is_finite()));
        Self { samples, rate_hz }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    /// Index of the largest absolute sample (first one on ties).
    pub fn abs_argmax(&self) -> Option<usize> {
        abs_argmax(&self.samples)
    }
}

pub(crate) fn abs_argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        let a = v.abs();
        match best {
            Some((_, b)) if a <= b => {}
            _ => best = Some((i, a)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rate_and_samples() {
        assert_eq!(
            SampledSignal::new(vec![0.0], 0.0),
            Err(SignalError::InvalidRate(0.0))
        );
        assert_eq!(
            SampledSignal::new(vec![0.0, f64::NAN], 8000.0),
            Err(SignalError::NonFinite(1))
        );
    }

    #[test]
    fn abs_argmax_prefers_first_on_ties() {
        assert_eq!(abs_argmax(&[0.0, -2.0, 2.0, 1.0]), Some(1));
        assert_eq!(abs_argmax(&[]), None);
    }
}
