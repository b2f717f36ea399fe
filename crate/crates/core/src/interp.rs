//! Subsample refinement of the integer peak of a discrete TDE function.
//!
//! Every method takes a [`PeakNeighborhood`] and returns an offset in samples
//! relative to its peak index `k0`. Grid methods (sinc, Whittaker-Shannon)
//! search offsets `j / factor` for `|j| < factor`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signals::abs_argmax;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterpError {
    #[error("peak at index {index} has no neighbour on both sides (length {len})")]
    EdgePeak { index: usize, len: usize },
    #[error("spectrum carries no usable weight")]
    DegenerateSpectrum,
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid interpolation config: {0}")]
    InvalidConfig(String),
    #[error("neighbourhood values must be finite")]
    NonFinite,
}

/// A discrete TDE function `f[k]` and its peak index `k0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakNeighborhood {
    values: Vec<f64>,
    peak_index: usize,
    rate_hz: f64,
}

impl PeakNeighborhood {
    /// Peak index is the argmax of `|f|` (first one on ties).
    pub fn new(values: Vec<f64>, rate_hz: f64) -> Result<Self, InterpError> {
        let peak = abs_argmax(&values).ok_or(InterpError::TooShort { needed: 1, got: 0 })?;
        Self::with_peak_index(values, peak, rate_hz)
    }

    /// Uses a caller-chosen peak index.
    pub fn with_peak_index(values: Vec<f64>, peak_index: usize, rate_hz: f64) -> Result<Self, InterpError> {
        if peak_index >= values.len() {
            return Err(InterpError::TooShort {
                needed: peak_index + 1,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(InterpError::NonFinite);
        }
        Ok(Self {
            values,
            peak_index,
            rate_hz,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn peak_index(&self) -> usize {
        self.peak_index
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn peak_value(&self) -> f64 {
        self.values[self.peak_index]
    }

    fn triple(&self) -> Result<[f64; 3], InterpError> {
        let k = self.peak_index;
        if k == 0 || k + 1 >= self.values.len() {
            return Err(InterpError::EdgePeak {
                index: k,
                len: self.values.len(),
            });
        }
        Ok([self.values[k - 1], self.values[k], self.values[k + 1]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    None,
    Parabolic,
    Gaussian,
    WeightedFrequency,
    Sinc,
    WhittakerShannon,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::None,
        Method::Parabolic,
        Method::Gaussian,
        Method::WeightedFrequency,
        Method::Sinc,
        Method::WhittakerShannon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Parabolic => "parabolic",
            Method::Gaussian => "gaussian",
            Method::WeightedFrequency => "weighted_frequency",
            Method::Sinc => "sinc",
            Method::WhittakerShannon => "whittaker_shannon",
        }
    }

    /// Whether the method uses `half_width` and `factor`.
    pub fn is_grid_search(self) -> bool {
        matches!(self, Method::Sinc | Method::WhittakerShannon)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = InterpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| InterpError::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Method plus grid parameters: `half_width` is S, `factor` is `i = T / T_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpConfig {
    pub method: Method,
    pub half_width: usize,
    pub factor: usize,
}

impl InterpConfig {
    pub fn new(method: Method, half_width: usize, factor: usize) -> Result<Self, InterpError> {
        let cfg = Self {
            method,
            half_width,
            factor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), InterpError> {
        if self.factor < 1 {
            return Err(InterpError::InvalidConfig("factor must be at least 1".into()));
        }
        if self.method.is_grid_search() && self.half_width < 1 {
            return Err(InterpError::InvalidConfig(format!(
                "{} needs S >= 1",
                self.method
            )));
        }
        Ok(())
    }
}

/// Diagnostic flags attached to a refinement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    /// Gaussian inputs were shifted to make them positive.
    pub shifted: bool,
    /// A grid sum was truncated at the frame edge, or an offset was clipped to ±1.
    pub clamped: bool,
    /// The three-point fit had no curvature.
    pub flat: bool,
    /// The grid optimum landed on the outermost grid point.
    pub saturated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub offset: f64,
    pub flags: Flags,
}

impl Refinement {
    fn plain(offset: f64) -> Self {
        Self {
            offset,
            flags: Flags::default(),
        }
    }
}

fn vertex(m: f64, z: f64, p: f64) -> Refinement {
    let den = 2.0 * (m - 2.0 * z + p);
    if den == 0.0 {
        return Refinement {
            offset: 0.0,
            flags: Flags {
                flat: true,
                ..Flags::default()
            },
        };
    }
    let raw = (m - p) / den;
    let offset = raw.clamp(-1.0, 1.0);
    Refinement {
        offset,
        flags: Flags {
            clamped: offset != raw,
            ..Flags::default()
        },
    }
}

/// Vertex of the parabola through `f[k0-1], f[k0], f[k0+1]`.
pub fn interp_parabolic(n: &PeakNeighborhood) -> Result<Refinement, InterpError> {
    let [m, z, p] = n.triple()?;
    Ok(vertex(m, z, p))
}

/// Parabolic vertex of the log-magnitudes.
///
/// The triple is first multiplied by the sign of `f[k0]`. If any value is
/// still non-positive, all three are shifted by `|min| + 0.1 |f[k0]|`.
pub fn interp_gaussian(n: &PeakNeighborhood) -> Result<Refinement, InterpError> {
    let mut t = n.triple()?;
    if t[1] < 0.0 {
        t.iter_mut().for_each(|v| *v = -*v);
    }
    let min = t.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted = min <= 0.0;
    if shifted {
        let c = min.abs() + 0.1 * t[1].abs();
        t.iter_mut().for_each(|v| *v += c);
    }
    if t.iter().any(|v| *v <= 0.0) {
        return Ok(vertex(0.0, 0.0, 0.0));
    }
    let mut r = vertex(t[0].ln(), t[1].ln(), t[2].ln());
    r.flags.shifted = shifted;
    Ok(r)
}

/// Minimum frame length for the weighted-frequency fit.
pub const WEIGHTED_FREQUENCY_MIN_LEN: usize = 8;

/// Slope of the phase of the DFT of the peak-centred frame.
///
/// The frame is circularly shifted so `k0` sits at index 0, then the phase
/// `phi(w)` of the positive-frequency bins (DC and Nyquist excluded) is fitted
/// by `alpha * w` with weights `|F|^4`. A pulse at `+d` has phase `-w d`, so
/// the offset is `-alpha`.
pub fn interp_weighted_freq(n: &PeakNeighborhood) -> Result<Refinement, InterpError> {
    let f = n.values();
    let len = f.len();
    if len < WEIGHTED_FREQUENCY_MIN_LEN {
        return Err(InterpError::TooShort {
            needed: WEIGHTED_FREQUENCY_MIN_LEN,
            got: len,
        });
    }
    let energy: f64 = f.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(InterpError::DegenerateSpectrum);
    }
    let k0 = n.peak_index();
    let rotated: Vec<f64> = (0..len).map(|i| f[(i + k0) % len]).collect();
    let mut spec = crate::fft::lift(&rotated, len);
    crate::fft::forward(&mut spec);

    let mut total = 0.0;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, c) in spec.iter().enumerate().take(len.div_ceil(2)).skip(1) {
        let w_k = 2.0 * PI * k as f64 / len as f64;
        let weight = (c.norm_sqr() / energy).powi(2);
        total += weight;
        num += weight * c.arg() * w_k;
        den += weight * w_k * w_k;
    }
    if total < 1e-12 || den == 0.0 {
        return Err(InterpError::DegenerateSpectrum);
    }
    let raw = -num / den;
    let offset = raw.clamp(-1.0, 1.0);
    Ok(Refinement {
        offset,
        flags: Flags {
            clamped: offset != raw,
            ..Flags::default()
        },
    })
}

// Offsets 0, -1/i, +1/i, -2/i, ... with a strict-improvement rule gives the
// smallest |offset| on ties and negative before positive.
fn grid_search<F>(factor: usize, mut score: F) -> (f64, bool)
where
    F: FnMut(f64) -> f64,
{
    let i = factor as i64;
    let mut best_j = 0i64;
    let mut best = score(0.0);
    for step in 1..i {
        for j in [-step, step] {
            let s = score(j as f64 / factor as f64);
            if s > best {
                best = s;
                best_j = j;
            }
        }
    }
    (best_j as f64 / factor as f64, i > 1 && best_j.abs() == i - 1)
}

// Window [k0 - S, k0 + S] clipped to the frame, as offsets m relative to k0.
fn support(n: &PeakNeighborhood, half_width: usize) -> (std::ops::RangeInclusive<i64>, bool) {
    let k0 = n.peak_index() as i64;
    let s = half_width as i64;
    let lo = (k0 - s).max(0);
    let hi = (k0 + s).min(n.values().len() as i64 - 1);
    (lo - k0..=hi - k0, lo != k0 - s || hi != k0 + s)
}

// sinc(m - d) for integer m, with sin(pi d) precomputed.
#[inline]
fn shifted_sinc(m: i64, d: f64, sin_pi_d: f64) -> f64 {
    let x = m as f64 - d;
    if x == 0.0 {
        return 1.0;
    }
    let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
    sign * sin_pi_d / (PI * x)
}

/// Least-squares fit of a critically sampled sinc to `f / f[k0]` over
/// `k0 - S ..= k0 + S`.
pub fn interp_sinc(n: &PeakNeighborhood, half_width: usize, factor: usize) -> Result<Refinement, InterpError> {
    InterpConfig::new(Method::Sinc, half_width, factor)?;
    let (range, clamped) = support(n, half_width);
    let k0 = n.peak_index() as i64;
    let f0 = n.peak_value();
    if f0 == 0.0 {
        return Ok(Refinement::plain(0.0));
    }
    let target: Vec<(i64, f64)> = range
        .map(|m| (m, n.values()[(k0 + m) as usize] / f0))
        .collect();
    let (offset, saturated) = grid_search(factor, |d| {
        let sp = (PI * d).sin();
        -target
            .iter()
            .map(|&(m, y)| (shifted_sinc(m, d, sp) - y).powi(2))
            .sum::<f64>()
    });
    Ok(Refinement {
        offset,
        flags: Flags {
            clamped,
            saturated,
            ..Flags::default()
        },
    })
}

/// Argmax of the truncated Whittaker-Shannon reconstruction
/// `sign(f[k0]) * sum_m f[k0 + m] sinc(d - m)`, `|m| <= S`.
pub fn interp_whittaker_shannon(
    n: &PeakNeighborhood,
    half_width: usize,
    factor: usize,
) -> Result<Refinement, InterpError> {
    InterpConfig::new(Method::WhittakerShannon, half_width, factor)?;
    let (range, clamped) = support(n, half_width);
    let k0 = n.peak_index() as i64;
    let sign = if n.peak_value() < 0.0 { -1.0 } else { 1.0 };
    let taps: Vec<(i64, f64)> = range
        .map(|m| (m, sign * n.values()[(k0 + m) as usize]))
        .collect();
    let (offset, saturated) = grid_search(factor, |d| {
        let sp = (PI * d).sin();
        taps.iter().map(|&(m, v)| v * shifted_sinc(m, d, sp)).sum()
    });
    Ok(Refinement {
        offset,
        flags: Flags {
            clamped,
            saturated,
            ..Flags::default()
        },
    })
}

/// Plain convolution form `sum_k f[k] sinc(t - k)` over the whole frame.
pub fn ws_reconstruct(values: &[f64], t: f64) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(k, v)| v * crate::sinc(t - k as f64))
        .sum()
}

/// Offset and flags for `cfg.method`; `Method::None` gives offset 0.
pub fn refine(n: &PeakNeighborhood, cfg: &InterpConfig) -> Result<Refinement, InterpError> {
    cfg.validate()?;
    match cfg.method {
        Method::None => Ok(Refinement::plain(0.0)),
        Method::Parabolic => interp_parabolic(n),
        Method::Gaussian => interp_gaussian(n),
        Method::WeightedFrequency => interp_weighted_freq(n),
        Method::Sinc => interp_sinc(n, cfg.half_width, cfg.factor),
        Method::WhittakerShannon => interp_whittaker_shannon(n, cfg.half_width, cfg.factor),
    }
}

/// Refined peak position `k0 + offset` in samples.
pub fn refine_peak(n: &PeakNeighborhood, cfg: &InterpConfig) -> Result<f64, InterpError> {
    Ok(n.peak_index() as f64 + refine(n, cfg)?.offset)
}
