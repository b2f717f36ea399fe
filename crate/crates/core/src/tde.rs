//! Windowing, matched filtering, cross-correlation and TOA/TDOA estimation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{refine, Flags, InterpConfig, InterpError, Method, PeakNeighborhood};
use crate::signals::{convolve, SampledSignal, SignalError};

/// Lengths up to this use the time-domain correlation.
pub const DIRECT_XCORR_MAX_LEN: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TdeError {
    #[error("matched-filter kernel is empty")]
    EmptyKernel,
    #[error("kernel of {kernel} samples is longer than the {measured}-sample signal")]
    KernelTooLong { kernel: usize, measured: usize },
    #[error("frames differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("sample rates differ ({0} Hz vs {1} Hz)")]
    RateMismatch(f64, f64),
    #[error("window length must be positive")]
    EmptyWindow,
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowShape {
    #[default]
    Rectangular,
    /// Periodic Hann, equal to 1 at index `L / 2`.
    Hann,
}

impl WindowShape {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowShape::Rectangular => vec![1.0; len],
            WindowShape::Hann => (0..len)
                .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / len as f64).cos())
                .collect(),
        }
    }
}

/// One windowed segment `h~[k, v] = h[v - L/2 + k] * g[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub signal: SampledSignal,
    pub window_index: usize,
    /// Part of the window fell outside the signal and was zero-filled.
    pub padded: bool,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }

    pub fn rate_hz(&self) -> f64 {
        self.signal.rate_hz()
    }
}

/// Cuts an `len`-sample window centred on sample `v`.
pub fn sliding_window(h: &SampledSignal, v: usize, len: usize, shape: WindowShape) -> Frame {
    let start = v as i64 - (len / 2) as i64;
    let gamma = shape.coefficients(len);
    let mut padded = false;
    let samples = (0..len)
        .map(|k| {
            let idx = start + k as i64;
            match (idx >= 0).then(|| h.samples().get(idx as usize)).flatten() {
                Some(x) => x * gamma[k],
                None => {
                    padded = true;
                    0.0
                }
            }
        })
        .collect();
    Frame {
        signal: SampledSignal::from_parts(samples, h.rate_hz()),
        window_index: v,
        padded,
    }
}

/// Frames from every sensor at one window position.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub window_index: usize,
    pub length: usize,
    pub shape: WindowShape,
    pub frames: Vec<Frame>,
}

impl FrameSet {
    pub fn extract(
        signals: &[SampledSignal],
        v: usize,
        len: usize,
        shape: WindowShape,
    ) -> Result<Self, TdeError> {
        if len == 0 {
            return Err(TdeError::EmptyWindow);
        }
        if let Some(first) = signals.first() {
            if let Some(bad) = signals.iter().find(|s| s.rate_hz() != first.rate_hz()) {
                return Err(TdeError::RateMismatch(first.rate_hz(), bad.rate_hz()));
            }
        }
        Ok(Self {
            window_index: v,
            length: len,
            shape,
            frames: signals.iter().map(|s| sliding_window(s, v, len, shape)).collect(),
        })
    }

    pub fn any_padded(&self) -> bool {
        self.frames.iter().any(|f| f.padded)
    }
}

/// `h[k] = sum_i measured[k + i] * kernel[i]`, same length as `measured`.
///
/// An event shaped like the kernel that starts at sample `k` peaks at `k`.
pub fn matched_filter(measured: &SampledSignal, kernel: &SampledSignal) -> Result<SampledSignal, TdeError> {
    if kernel.is_empty() {
        return Err(TdeError::EmptyKernel);
    }
    if kernel.len() > measured.len() {
        return Err(TdeError::KernelTooLong {
            kernel: kernel.len(),
            measured: measured.len(),
        });
    }
    let reversed: Vec<f64> = kernel.samples().iter().rev().copied().collect();
    let full = convolve(measured.samples(), &reversed);
    let offset = kernel.len() - 1;
    Ok(SampledSignal::from_parts(
        full[offset..offset + measured.len()].to_vec(),
        measured.rate_hz(),
    ))
}

/// `r[l] = sum_n a[n] b[n + l]` for `l` in `-(L-1)..=L-1`, stored at `l + L - 1`.
pub fn xcorr_values(a: &[f64], b: &[f64]) -> Result<Vec<f64>, TdeError> {
    if a.len() != b.len() {
        return Err(TdeError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(TdeError::EmptyWindow);
    }
    Ok(if a.len() <= DIRECT_XCORR_MAX_LEN {
        xcorr_direct(a, b)
    } else {
        xcorr_fft(a, b)
    })
}

pub fn xcorr_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len() as i64;
    (-(len - 1)..len)
        .map(|lag| {
            let lo = 0.max(-lag);
            let hi = len.min(len - lag);
            (lo..hi).map(|n| a[n as usize] * b[(n + lag) as usize]).sum()
        })
        .collect()
}

/// Zero-padded frequency-domain version of [`xcorr_direct`].
pub fn xcorr_fft(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out = 2 * a.len() - 1;
    let size = out.next_power_of_two();
    let mut fa = crate::fft::lift(a, size);
    let mut fb = crate::fft::lift(b, size);
    crate::fft::forward(&mut fa);
    crate::fft::forward(&mut fb);
    fa.iter_mut().zip(&fb).for_each(|(x, y)| *x = x.conj() * y);
    crate::fft::inverse(&mut fa);
    // negative lags wrap to the end of the buffer
    let len = a.len();
    (0..out)
        .map(|i| {
            let lag = i as i64 - (len as i64 - 1);
            fa[lag.rem_euclid(size as i64) as usize].re
        })
        .collect()
}

/// Cross-correlation of two equal-length frames as a peak neighbourhood.
pub fn xcorr(a: &Frame, b: &Frame) -> Result<PeakNeighborhood, TdeError> {
    if a.rate_hz() != b.rate_hz() {
        return Err(TdeError::RateMismatch(a.rate_hz(), b.rate_hz()));
    }
    let r = xcorr_values(a.signal.samples(), b.signal.samples())?;
    Ok(PeakNeighborhood::new(r, a.rate_hz())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Toa { sensor: usize },
    Tdoa { m: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdeEstimate {
    pub kind: EstimateKind,
    pub seconds: f64,
    pub method: Method,
    pub flags: Flags,
}

/// Windowed TOA: `(v - L/2 + refined peak) / f_s`.
pub fn estimate_toa(frame: &Frame, sensor: usize, cfg: &InterpConfig) -> Result<TdeEstimate, TdeError> {
    let n = PeakNeighborhood::new(frame.signal.samples().to_vec(), frame.rate_hz())?;
    let r = refine(&n, cfg)?;
    let start = frame.window_index as f64 - (frame.len() / 2) as f64;
    Ok(TdeEstimate {
        kind: EstimateKind::Toa { sensor },
        seconds: (start + n.peak_index() as f64 + r.offset) / frame.rate_hz(),
        method: cfg.method,
        flags: r.flags,
    })
}

/// TDOA `t_n - t_m` from the refined peak lag of `xcorr(frame_m, frame_n)`.
pub fn estimate_tdoa(
    frame_m: &Frame,
    frame_n: &Frame,
    pair: (usize, usize),
    cfg: &InterpConfig,
) -> Result<TdeEstimate, TdeError> {
    let n = xcorr(frame_m, frame_n)?;
    let r = refine(&n, cfg)?;
    let lag = n.peak_index() as f64 + r.offset - (frame_m.len() - 1) as f64;
    Ok(TdeEstimate {
        kind: EstimateKind::Tdoa {
            m: pair.0,
            n: pair.1,
        },
        seconds: lag / frame_m.rate_hz(),
        method: cfg.method,
        flags: r.flags,
    })
}
