use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{abs_argmax, SampledSignal, SignalError};

/// `len` samples of zero-mean white Gaussian noise with standard deviation `std`.
pub fn gaussian_noise(len: usize, std: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Noise standard deviation giving `snr_db` against a signal of power `power`.
pub fn noise_std(power: f64, snr_db: f64) -> f64 {
    (power / 10f64.powf(snr_db / 10.0)).sqrt()
}

/// Mean-square power over `window` samples centred on the absolute peak, or
/// over the whole signal when `window` is `None`.
pub fn reference_power(samples: &[f64], window: Option<usize>) -> f64 {
    let Some(peak) = abs_argmax(samples) else {
        return 0.0;
    };
    let (lo, hi) = match window {
        None => (0, samples.len()),
        Some(w) => {
            let w = w.clamp(1, samples.len());
            let lo = peak.saturating_sub(w / 2).min(samples.len() - w);
            (lo, lo + w)
        }
    };
    samples[lo..hi].iter().map(|x| x * x).sum::<f64>() / (hi - lo) as f64
}

/// Adds white Gaussian noise so the signal-to-noise ratio is `snr_db`.
///
/// Signal power is measured with [`reference_power`]. An infinite `snr_db`
/// returns the input unchanged.
pub fn add_noise(
    signal: &SampledSignal,
    snr_db: f64,
    seed: u64,
    reference_window: Option<usize>,
) -> Result<SampledSignal, SignalError> {
    if signal.energy() == 0.0 {
        return Err(SignalError::ZeroSignal);
    }
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    let std = noise_std(reference_power(signal.samples(), reference_window), snr_db);
    let noise = gaussian_noise(signal.len(), std, seed);
    let samples = signal.samples().iter().zip(noise).map(|(s, n)| s + n).collect();
    SampledSignal::new(samples, signal.rate_hz())
}
