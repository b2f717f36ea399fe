use std::f64::consts::PI;

use rustfft::num_complex::Complex;

use super::{SampledSignal, SignalError};

/// Order of the band-limiting low-pass (129 taps, 64 samples of group delay).
pub const LOWPASS_ORDER: usize = 128;

/// Kaiser window shape; gives roughly 80 dB of stop-band attenuation.
pub const KAISER_BETA: f64 = 8.0;

// Above this many multiply-adds the FFT path is used.
const DIRECT_WORK_LIMIT: usize = 1 << 22;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let m = (len - 1) as f64;
    let norm = bessel_i0(beta);
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm
        })
        .collect()
}

/// Symmetric FIR with an even order, applied with its `order / 2` group delay
/// removed.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPhaseFir {
    taps: Vec<f64>,
}

impl LinearPhaseFir {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn group_delay(&self) -> usize {
        self.order() / 2
    }

    /// `y[n] = sum_j h[j] x[n + M/2 - j]`, same length as `x`, zero outside.
    pub fn filter_centered(&self, x: &[f64]) -> Vec<f64> {
        let full = convolve(x, &self.taps);
        let d = self.group_delay();
        full[d..d + x.len()].to_vec()
    }

    /// Magnitude response at normalized frequency `f` (cycles/sample).
    pub fn magnitude(&self, f: f64) -> f64 {
        let w = 2.0 * PI * f;
        let z: Complex<f64> = self
            .taps
            .iter()
            .enumerate()
            .map(|(n, h)| Complex::from_polar(*h, -w * n as f64))
            .sum();
        z.norm()
    }
}

/// Kaiser-windowed sinc low-pass with unit DC gain.
///
/// `cutoff` is in cycles/sample, `0 < cutoff < 0.5`; `order` must be even.
pub fn design_lowpass(cutoff: f64, order: usize) -> LinearPhaseFir {
    assert!(cutoff > 0.0 && cutoff < 0.5, "cutoff must be in (0, 1/2)");
    assert!(order.is_multiple_of(2), "order must be even");
    let window = kaiser(order + 1, KAISER_BETA);
    let mid = (order / 2) as f64;
    let mut taps: Vec<f64> = window
        .iter()
        .enumerate()
        .map(|(n, w)| w * 2.0 * cutoff * crate::sinc(2.0 * cutoff * (n as f64 - mid)))
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    LinearPhaseFir { taps }
}

/// Band limits `signal` to `cutoff_hz` without shifting its timing.
///
/// `cutoff_hz == rate / 2` is the critically sampled case and returns the
/// input unchanged.
pub fn bandlimit(signal: &SampledSignal, cutoff_hz: f64) -> Result<SampledSignal, SignalError> {
    let nyquist_hz = signal.rate_hz() / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz <= nyquist_hz) {
        return Err(SignalError::InvalidCutoff {
            cutoff_hz,
            nyquist_hz,
        });
    }
    if cutoff_hz == nyquist_hz {
        return Ok(signal.clone());
    }
    let fir = design_lowpass(cutoff_hz / signal.rate_hz(), LOWPASS_ORDER);
    Ok(SampledSignal::from_parts(
        fir.filter_centered(signal.samples()),
        signal.rate_hz(),
    ))
}

/// Full linear convolution, `len = x.len() + h.len() - 1`.
pub(crate) fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let n = x.len() + h.len() - 1;
    if x.len() * h.len() <= DIRECT_WORK_LIMIT {
        let mut y = vec![0.0; n];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            for (j, hj) in h.iter().enumerate() {
                y[i + j] += xi * hj;
            }
        }
        return y;
    }
    let size = n.next_power_of_two();
    let mut a = crate::fft::lift(x, size);
    let mut b = crate::fft::lift(h, size);
    crate::fft::forward(&mut a);
    crate::fft::forward(&mut b);
    a.iter_mut().zip(&b).for_each(|(p, q)| *p *= q);
    crate::fft::inverse(&mut a);
    a[..n].iter().map(|c| c.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bessel_matches_reference() {
        // I0(1) and I0(8) from tables
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-14);
        assert!((bessel_i0(8.0) - 427.564_115_721_804_74).abs() < 1e-9);
    }

    #[test]
    fn nyquist_cutoff_is_identity() {
        let s = SampledSignal::new(vec![0.1, -0.4, 2.0, 0.3], 8000.0).unwrap();
        assert_eq!(bandlimit(&s, 4000.0).unwrap(), s);
    }

    #[test]
    fn rejects_out_of_range_cutoff() {
        let s = SampledSignal::zeros(8, 8000.0).unwrap();
        assert!(matches!(
            bandlimit(&s, 4000.1),
            Err(SignalError::InvalidCutoff { .. })
        ));
        assert!(bandlimit(&s, 0.0).is_err());
    }

    #[test]
    fn stopband_attenuation() {
        let fir = design_lowpass(0.4, LOWPASS_ORDER);
        assert!((fir.magnitude(0.0) - 1.0).abs() < 1e-12);
        for i in 0..=50 {
            let f = 0.45 + 0.05 * i as f64 / 50.0;
            assert!(fir.magnitude(f) < 1e-3, "f = {f}");
        }
        for i in 0..=70 {
            let f = 0.35 * i as f64 / 70.0;
            assert!((fir.magnitude(f) - 1.0).abs() < 1e-3, "f = {f}");
        }
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        let x: Vec<f64> = (0..5000).map(|i| ((i * 7919) % 113) as f64 - 56.0).collect();
        let h: Vec<f64> = (0..1000).map(|i| ((i * 31) % 17) as f64 / 17.0).collect();
        let fast = convolve(&x, &h);
        let mut slow = vec![0.0; x.len() + h.len() - 1];
        for (i, a) in x.iter().enumerate() {
            for (j, b) in h.iter().enumerate() {
                slow[i + j] += a * b;
            }
        }
        let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10 * scale);
        }
    }

    proptest! {
        #[test]
        fn time_invariant(shift in 0usize..40, seed in any::<u64>()) {
            let x: Vec<f64> = (0..200)
                .map(|i| ((seed.wrapping_mul(6364136223846793005).wrapping_add(i)) % 1000) as f64 / 500.0 - 1.0)
                .collect();
            let mut delayed = vec![0.0; shift];
            delayed.extend_from_slice(&x);
            delayed.resize(x.len() + 80, 0.0);
            let mut padded = x.clone();
            padded.resize(x.len() + 80, 0.0);
            let a = bandlimit(&SampledSignal::new(delayed, 8000.0).unwrap(), 3200.0).unwrap();
            let b = bandlimit(&SampledSignal::new(padded, 8000.0).unwrap(), 3200.0).unwrap();
            for n in shift..a.len() {
                prop_assert!((a.samples()[n] - b.samples()[n - shift]).abs() < 1e-12);
            }
        }
    }
}
