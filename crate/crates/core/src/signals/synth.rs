use super::{bandlimit, delayed_impulse, tail_allowance, SampledSignal, SignalError, ThiranSpec};

/// One reflection: arrival time, amplitude and bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub toa_seconds: f64,
    pub amplitude: f64,
    /// `rate / 2` means critically sampled.
    pub bandlimit_hz: f64,
}

/// Adds `amplitude` times a unit impulse delayed by `delay_samples` (Thiran
/// realisation) into `buffer`. Parts falling outside the buffer are dropped.
pub fn add_pulse(
    buffer: &mut [f64],
    delay_samples: f64,
    amplitude: f64,
    thiran_order: usize,
) -> Result<(), SignalError> {
    let spec = ThiranSpec::new(thiran_order, delay_samples)?;
    let (start, taps) = delayed_impulse(&spec)?;
    for (j, v) in taps.iter().enumerate() {
        let idx = start + j as i64;
        if idx >= 0 {
            if let Some(slot) = buffer.get_mut(idx as usize) {
                *slot += amplitude * v;
            }
        }
    }
    Ok(())
}

/// Band-limited Dirac pulse at `spec.toa_seconds` in a `length`-sample record.
///
/// The fractional delay comes from a Thiran all-pass of order `thiran_order`.
/// Reflections are not scaled by distance.
pub fn synth_reflection(
    spec: &PulseSpec,
    rate_hz: f64,
    length: usize,
    thiran_order: usize,
) -> Result<SampledSignal, SignalError> {
    let mut signal = SampledSignal::zeros(length, rate_hz)?;
    let delay = spec.toa_seconds * rate_hz;
    let tail = tail_allowance(thiran_order);
    if delay.is_nan() || delay < 0.0 || delay.ceil() as usize + tail >= length {
        return Err(SignalError::PulseOutOfRange {
            delay_samples: delay,
            tail,
            length,
        });
    }
    add_pulse(&mut signal.samples, delay, spec.amplitude, thiran_order)?;
    bandlimit(&signal, spec.bandlimit_hz)
}

/// Directly sampled `amplitude * (2B / f_s) * sinc(2B (t - t0))`.
pub fn ideal_reflection(spec: &PulseSpec, rate_hz: f64, length: usize) -> Result<SampledSignal, SignalError> {
    let nyquist_hz = rate_hz / 2.0;
    if !(spec.bandlimit_hz > 0.0 && spec.bandlimit_hz <= nyquist_hz) {
        return Err(SignalError::InvalidCutoff {
            cutoff_hz: spec.bandlimit_hz,
            nyquist_hz,
        });
    }
    let b2 = 2.0 * spec.bandlimit_hz;
    let samples = (0..length)
        .map(|k| {
            let t = k as f64 / rate_hz;
            spec.amplitude * b2 / rate_hz * crate::sinc(b2 * (t - spec.toa_seconds))
        })
        .collect();
    SampledSignal::new(samples, rate_hz)
}
