//! Measured multichannel RIRs: loading, direct-path matched filtering, event
//! picking, decimation and the full-rate reference used to score the
//! interpolators.
//!
//! Audio is a multichannel RIFF/WAVE file (16/24-bit PCM or 32-bit float). The
//! geometry sidecar is JSON:
//!
//! ```json
//! { "sensors": [[x, y, z], ...], "source_label": "SL1", "rate_hz": 48000 }
//! ```

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{InterpConfig, InterpError, Method};
use crate::locate::{
    center_toa, estimate_position, sensor_pairs, ArrayGeometry, LocateError, SlownessEstimator,
};
use crate::signals::{design_lowpass, SampledSignal, SignalError};
use crate::tde::{estimate_tdoa, estimate_toa, matched_filter, FrameSet, TdeError, WindowShape};
use crate::Execution;

/// The full-rate reference is itself sample-quantized; attach this to any
/// table derived from it.
pub const GROUND_TRUTH_CAVEAT: &str = "reference TOA/TDOA/positions come from the full-rate signal without interpolation and are quantized to one full-rate sample; treat errors below that resolution with caution";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("audio has {channels} channels but the geometry lists {sensors} sensors")]
    GeometryMismatch { channels: usize, sensors: usize },
    #[error("signal has no peak")]
    NoPeak,
    #[error("found {found} peaks, wanted {wanted}")]
    InsufficientPeaks { found: usize, wanted: usize },
    #[error("decimation factor must be at least 1")]
    InvalidFactor,
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Locate(#[from] LocateError),
    #[error(transparent)]
    Tde(#[from] TdeError),
    #[error(transparent)]
    Interp(#[from] InterpError),
}

/// Geometry sidecar contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySidecar {
    pub sensors: Vec<Vec<f64>>,
    pub source_label: String,
    pub rate_hz: f64,
}

/// All RIRs from one source position.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub rirs: Vec<SampledSignal>,
    pub geometry: ArrayGeometry,
    pub source_label: String,
    pub rate_hz: f64,
}

impl MeasurementSet {
    pub fn new(
        rirs: Vec<SampledSignal>,
        geometry: ArrayGeometry,
        source_label: impl Into<String>,
    ) -> Result<Self, IngestError> {
        let first = rirs.first().ok_or_else(|| IngestError::Format("no channels".into()))?;
        if rirs.len() != geometry.len() {
            return Err(IngestError::GeometryMismatch {
                channels: rirs.len(),
                sensors: geometry.len(),
            });
        }
        let (len, rate_hz) = (first.len(), first.rate_hz());
        if len == 0 {
            return Err(IngestError::Format("audio has no samples".into()));
        }
        if rirs.iter().any(|r| r.len() != len || r.rate_hz() != rate_hz) {
            return Err(IngestError::Format("channels differ in length or rate".into()));
        }
        Ok(Self {
            rirs,
            geometry,
            source_label: source_label.into(),
            rate_hz,
        })
    }
}

fn io_error(path: &Path, e: impl ToString) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn read_wav(path: &Path) -> Result<(Vec<Vec<f64>>, f64), IngestError> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = hound::WavReader::new(BufReader::new(file))
        .map_err(|e| IngestError::Format(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let fmt = |e: hound::Error| IngestError::Format(e.to_string());
    let flat: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(fmt)?,
        (hound::SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(fmt)?
        }
        (f, b) => {
            return Err(IngestError::Format(format!(
                "unsupported sample format {f:?} with {b} bits"
            )))
        }
    };
    if flat.is_empty() || channels == 0 {
        return Err(IngestError::Format(format!("{} has no samples", path.display())));
    }
    let mut out = vec![Vec::with_capacity(flat.len() / channels); channels];
    for (i, v) in flat.into_iter().enumerate() {
        out[i % channels].push(v);
    }
    Ok((out, spec.sample_rate as f64))
}

/// Reads a WAVE file plus its geometry sidecar.
pub fn load_measurement(audio_path: &Path, geometry_path: &Path) -> Result<MeasurementSet, IngestError> {
    let text = std::fs::read_to_string(geometry_path).map_err(|e| io_error(geometry_path, e))?;
    let sidecar: GeometrySidecar = serde_json::from_str(&text)
        .map_err(|e| IngestError::Format(format!("{}: {e}", geometry_path.display())))?;
    let (channels, rate_hz) = read_wav(audio_path)?;
    if (rate_hz - sidecar.rate_hz).abs() > 0.5 {
        return Err(IngestError::Format(format!(
            "audio is at {rate_hz} Hz but the sidecar says {} Hz",
            sidecar.rate_hz
        )));
    }
    if channels.len() != sidecar.sensors.len() {
        return Err(IngestError::GeometryMismatch {
            channels: channels.len(),
            sensors: sidecar.sensors.len(),
        });
    }
    let geometry = ArrayGeometry::new(&sidecar.sensors)?;
    let rirs = channels
        .into_iter()
        .map(|c| SampledSignal::new(c, rate_hz))
        .collect::<Result<Vec<_>, _>>()?;
    MeasurementSet::new(rirs, geometry, sidecar.source_label)
}

/// Writes `set` as a 32-bit float WAVE file and a JSON sidecar.
pub fn save_measurement(set: &MeasurementSet, audio_path: &Path, geometry_path: &Path) -> Result<(), IngestError> {
    let spec = hound::WavSpec {
        channels: set.rirs.len() as u16,
        sample_rate: set.rate_hz.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(audio_path, spec).map_err(|e| io_error(audio_path, e))?;
    for i in 0..set.rirs[0].len() {
        for r in &set.rirs {
            w.write_sample(r.samples()[i] as f32)
                .map_err(|e| io_error(audio_path, e))?;
        }
    }
    w.finalize().map_err(|e| io_error(audio_path, e))?;
    let sidecar = GeometrySidecar {
        sensors: (0..set.geometry.len())
            .map(|i| set.geometry.position(i).iter().copied().collect())
            .collect(),
        source_label: set.source_label.clone(),
        rate_hz: set.rate_hz,
    };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| IngestError::Format(e.to_string()))?;
    std::fs::write(geometry_path, text).map_err(|e| io_error(geometry_path, e))
}

/// Direct-path kernel: unit energy, with `center` the index of the direct-path
/// peak inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedFilter {
    pub kernel: SampledSignal,
    pub center: usize,
    /// Direct-path peak in the source RIR.
    pub peak_index: usize,
}

fn tukey(len: usize, alpha: f64) -> Vec<f64> {
    if len < 2 {
        return vec![1.0; len];
    }
    let m = (len - 1) as f64;
    let taper = alpha * m / 2.0;
    (0..len)
        .map(|n| {
            let x = n as f64;
            let edge = x.min(m - x);
            if edge >= taper {
                1.0
            } else {
                0.5 * (1.0 - (std::f64::consts::PI * edge / taper).cos())
            }
        })
        .collect()
}

/// Cuts `window` samples around the global absolute peak, tapers them with a
/// Tukey(0.25) window and scales to unit energy.
pub fn estimate_matched_filter(rir: &SampledSignal, window: usize) -> Result<MatchedFilter, IngestError> {
    let peak = rir.abs_argmax().ok_or(IngestError::NoPeak)?;
    if rir.samples()[peak] == 0.0 || window == 0 {
        return Err(IngestError::NoPeak);
    }
    let start = peak.saturating_sub(window / 2);
    let end = (start + window).min(rir.len());
    let taper = tukey(end - start, 0.25);
    let mut k: Vec<f64> = rir.samples()[start..end]
        .iter()
        .zip(&taper)
        .map(|(x, w)| x * w)
        .collect();
    let e = k.iter().map(|x| x * x).sum::<f64>().sqrt();
    k.iter_mut().for_each(|x| *x /= e);
    Ok(MatchedFilter {
        kernel: SampledSignal::new(k, rir.rate_hz())?,
        center: peak - start,
        peak_index: peak,
    })
}

/// Matched-filters `rir` and re-aligns so events keep their sample positions.
pub fn compensate(rir: &SampledSignal, filter: &MatchedFilter) -> Result<SampledSignal, IngestError> {
    let h = matched_filter(rir, &filter.kernel)?;
    let mut out = vec![0.0; h.len()];
    out[filter.center..].copy_from_slice(&h.samples()[..h.len() - filter.center]);
    Ok(SampledSignal::new(out, rir.rate_hz())?)
}

/// The `count` largest local maxima of `|x|` at least `min_separation` apart,
/// in time order.
///
/// Candidates are taken by decreasing magnitude, ties by index, so the result
/// does not depend on evaluation order.
pub fn pick_peaks(signal: &[f64], count: usize, min_separation: usize) -> Result<Vec<usize>, IngestError> {
    let a: Vec<f64> = signal.iter().map(|x| x.abs()).collect();
    let mut candidates: Vec<usize> = (0..a.len())
        .filter(|&i| {
            a[i] > 0.0
                && (i == 0 || a[i] > a[i - 1])
                && (i + 1 == a.len() || a[i] >= a[i + 1])
        })
        .collect();
    candidates.sort_by(|&i, &j| a[j].total_cmp(&a[i]).then(i.cmp(&j)));
    let mut picked: Vec<usize> = Vec::with_capacity(count);
    for c in candidates {
        if picked.len() == count {
            break;
        }
        if picked.iter().all(|&p| p.abs_diff(c) >= min_separation) {
            picked.push(c);
        }
    }
    if picked.len() < count {
        return Err(IngestError::InsufficientPeaks {
            found: picked.len(),
            wanted: count,
        });
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Anti-alias low-pass at `0.45 f_s / factor` (order `128 factor`, delay
/// compensated), then every `factor`-th sample starting at 0.
pub fn downsample(signal: &SampledSignal, factor: usize) -> Result<SampledSignal, IngestError> {
    match factor {
        0 => Err(IngestError::InvalidFactor),
        1 => Ok(signal.clone()),
        _ => {
            let fir = design_lowpass(0.45 / factor as f64, 128 * factor);
            let y = fir.filter_centered(signal.samples());
            Ok(SampledSignal::new(
                y.into_iter().step_by(factor).collect(),
                signal.rate_hz() / factor as f64,
            )?)
        }
    }
}

/// Protocol parameters for measured data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Event and direct-path window length.
    pub window_ms: f64,
    /// Direct path plus reflections.
    pub events: usize,
    pub downsample_factor: usize,
    pub factor: usize,
    pub sinc_half_width: usize,
    pub ws_half_width: usize,
    pub speed_of_sound: f64,
    pub methods: Vec<Method>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            window_ms: 2.0,
            events: 4,
            downsample_factor: 6,
            factor: 500,
            sinc_half_width: 3,
            ws_half_width: 13,
            speed_of_sound: 343.0,
            methods: Method::ALL.to_vec(),
        }
    }
}

impl IngestConfig {
    pub fn window_samples(&self, rate_hz: f64) -> usize {
        (self.window_ms * rate_hz / 1000.0).round() as usize
    }

    pub fn interp_config(&self, method: Method) -> InterpConfig {
        let half_width = match method {
            Method::Sinc => self.sinc_half_width,
            Method::WhittakerShannon => self.ws_half_width,
            _ => 1,
        };
        InterpConfig {
            method,
            half_width,
            factor: self.factor,
        }
    }
}

/// Estimates for one event window.
#[derive(Debug, Clone, PartialEq)]
pub struct EventEstimate {
    /// Window centre at the rate the estimate was made.
    pub window_index: usize,
    pub toas: Vec<f64>,
    /// Over [`sensor_pairs`].
    pub tdoas: Vec<f64>,
    pub position: Option<Vec<f64>>,
}

/// Full-rate reference for one measurement set.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub compensated: Vec<SampledSignal>,
    /// Event window centres at the full rate.
    pub events: Vec<usize>,
    pub window_samples: usize,
    pub reference: Vec<EventEstimate>,
}

fn estimate_event(
    frames: &FrameSet,
    geometry: &ArrayGeometry,
    estimator: &SlownessEstimator,
    cfg: &InterpConfig,
    c: f64,
) -> Result<EventEstimate, IngestError> {
    let toas = frames
        .frames
        .iter()
        .enumerate()
        .map(|(n, f)| Ok(estimate_toa(f, n, cfg)?.seconds))
        .collect::<Result<Vec<_>, IngestError>>()?;
    let tdoas = sensor_pairs(frames.frames.len())
        .into_iter()
        .map(|(m, n)| Ok(estimate_tdoa(&frames.frames[m], &frames.frames[n], (m, n), cfg)?.seconds))
        .collect::<Result<Vec<_>, IngestError>>()?;
    let s = estimator.estimate(&tdoas)?;
    let position = estimate_position(&s, center_toa(&toas)?, geometry, c)
        .ok()
        .map(|p| p.iter().copied().collect());
    Ok(EventEstimate {
        window_index: frames.window_index,
        toas,
        tdoas,
        position,
    })
}

/// Energy over all channels inside the `len`-sample window centred on each
/// sample, with the same alignment as [`FrameSet::extract`].
pub fn window_energy(signals: &[SampledSignal], len: usize) -> Vec<f64> {
    let n = signals.first().map_or(0, |s| s.len());
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + signals.iter().map(|s| s.samples()[i].powi(2)).sum::<f64>();
    }
    (0..n)
        .map(|v| {
            let lo = v.saturating_sub(len / 2);
            let hi = (v + len - len / 2).min(n);
            prefix[hi] - prefix[lo]
        })
        .collect()
}

/// Matched filter per channel, pick `events` peaks of the windowed energy of
/// the compensated channels, and estimate everything at full rate without
/// interpolation.
pub fn ground_truth_pipeline(set: &MeasurementSet, cfg: &IngestConfig) -> Result<GroundTruth, IngestError> {
    let window = cfg.window_samples(set.rate_hz);
    let compensated = set
        .rirs
        .iter()
        .map(|r| compensate(r, &estimate_matched_filter(r, window)?))
        .collect::<Result<Vec<_>, _>>()?;
    let events = pick_peaks(&window_energy(&compensated, window), cfg.events, window)?;
    let estimator = SlownessEstimator::min_norm(&set.geometry)?;
    let none = InterpConfig {
        method: Method::None,
        half_width: 1,
        factor: 1,
    };
    let reference = events
        .iter()
        .map(|&v| {
            let frames = FrameSet::extract(&compensated, v, window, WindowShape::Rectangular)?;
            estimate_event(&frames, &set.geometry, &estimator, &none, cfg.speed_of_sound)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GroundTruth {
        compensated,
        events,
        window_samples: window,
        reference,
    })
}

/// Errors of one method on one event, against the full-rate reference.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestRecord {
    pub event: usize,
    pub method: Method,
    /// `|tau_hat - tau_ref|` over [`sensor_pairs`], seconds.
    pub tdoa_errors: Vec<f64>,
    /// `|x_hat - x_ref|`, meters.
    pub position_error: Option<f64>,
    pub failure: Option<String>,
}

/// Decimates the compensated channels, windows each event at
/// `round(v / factor)` with `L / factor` samples, and scores every method.
pub fn evaluate_downsampled(
    set: &MeasurementSet,
    truth: &GroundTruth,
    cfg: &IngestConfig,
    exec: Execution,
) -> Result<Vec<IngestRecord>, IngestError> {
    let d = cfg.downsample_factor;
    let low = exec
        .map_slice(&truth.compensated, |c| downsample(c, d))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let window = (truth.window_samples as f64 / d as f64).round() as usize;
    let estimator = SlownessEstimator::min_norm(&set.geometry)?;
    let per_event = exec.map_range(truth.events.len(), |e| {
        let v = (truth.events[e] as f64 / d as f64).round() as usize;
        let reference = &truth.reference[e];
        let frames = FrameSet::extract(&low, v, window, WindowShape::Rectangular);
        cfg.methods
            .iter()
            .map(|&method| {
                let est = frames.as_ref().map_err(|e| IngestError::from(e.clone())).and_then(|f| {
                    estimate_event(f, &set.geometry, &estimator, &cfg.interp_config(method), cfg.speed_of_sound)
                });
                match est {
                    Ok(est) => IngestRecord {
                        event: e,
                        method,
                        tdoa_errors: est
                            .tdoas
                            .iter()
                            .zip(&reference.tdoas)
                            .map(|(a, b)| (a - b).abs())
                            .collect(),
                        position_error: match (&est.position, &reference.position) {
                            (Some(a), Some(b)) => Some(
                                a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt(),
                            ),
                            _ => None,
                        },
                        failure: None,
                    },
                    Err(err) => IngestRecord {
                        event: e,
                        method,
                        tdoa_errors: Vec::new(),
                        position_error: None,
                        failure: Some(err.to_string()),
                    },
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(per_event.into_iter().flatten().collect())
}
