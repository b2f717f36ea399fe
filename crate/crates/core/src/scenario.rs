//! The 2-D simulation world: image sources on a spiral of equal arrival
//! spacing around a circular array, per-source trials and parameter sweeps.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interp::{InterpConfig, InterpError, Method};
use crate::locate::{
    center_toa, estimate_position, localization_error, min_window_length, sensor_pairs,
    ArrayGeometry, LocateError, SlownessEstimator,
};
use crate::signals::{add_pulse, bandlimit, gaussian_noise, noise_std, SampledSignal, SignalError};
use crate::tde::{estimate_tdoa, estimate_toa, FrameSet, TdeError, WindowShape};
use crate::Execution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("statistics of an empty set")]
    EmptySet,
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Locate(#[from] LocateError),
    #[error(transparent)]
    Tde(#[from] TdeError),
    #[error(transparent)]
    Interp(#[from] InterpError),
}

/// Which estimate an interpolation setting is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateTarget {
    Toa,
    Tdoa,
}

/// Full parameterization of the simulated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub rate_hz: f64,
    pub speed_of_sound: f64,
    /// `inf` disables noise.
    pub snr_db: f64,
    pub window_samples: usize,
    pub num_sources: usize,
    /// `B / f_s`; 0.5 is critically sampled.
    pub bandwidth_ratio: f64,
    pub array_radius: f64,
    pub array_sensors: usize,
    pub factor: usize,
    pub sinc_half_width: Option<usize>,
    pub ws_half_width: Option<usize>,
    pub thiran_order: usize,
    pub window_shape: WindowShape,
    pub methods: Vec<Method>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            rate_hz: 8000.0,
            speed_of_sound: 343.0,
            snr_db: 40.0,
            window_samples: 32,
            num_sources: 200,
            bandwidth_ratio: 0.5,
            array_radius: 0.05,
            array_sensors: 6,
            factor: 200,
            sinc_half_width: None,
            ws_half_width: None,
            thiran_order: crate::signals::DEFAULT_THIRAN_ORDER,
            window_shape: WindowShape::Rectangular,
            methods: Method::ALL.to_vec(),
            seed: 1,
        }
    }
}

/// Band-limited ratio used for the `B = 2 f_s / 5` condition.
pub const BANDLIMITED_RATIO: f64 = 0.4;

impl ScenarioConfig {
    pub fn bandlimit_hz(&self) -> f64 {
        self.bandwidth_ratio * self.rate_hz
    }

    pub fn is_critically_sampled(&self) -> bool {
        self.bandwidth_ratio >= 0.5
    }

    pub fn window_ms(&self) -> f64 {
        self.window_samples as f64 * 1000.0 / self.rate_hz
    }

    pub fn geometry(&self) -> Result<ArrayGeometry, ScenarioError> {
        Ok(ArrayGeometry::circular(self.array_radius, self.array_sensors)?)
    }

    /// S for a method and estimate: sinc uses 1 when critically sampled and
    /// otherwise `L` (TDOA) or `L / 2` (TOA); Whittaker-Shannon uses 9.
    pub fn half_width(&self, method: Method, target: EstimateTarget) -> usize {
        match method {
            Method::Sinc => self.sinc_half_width.unwrap_or(if self.is_critically_sampled() {
                1
            } else {
                match target {
                    EstimateTarget::Tdoa => self.window_samples,
                    EstimateTarget::Toa => (self.window_samples / 2).max(1),
                }
            }),
            Method::WhittakerShannon => self.ws_half_width.unwrap_or(9),
            _ => 1,
        }
    }

    pub fn interp_config(&self, method: Method, target: EstimateTarget) -> InterpConfig {
        InterpConfig {
            method,
            half_width: self.half_width(method, target),
            factor: self.factor,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidConfig(m));
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return bad(format!("rate_hz must be positive, got {}", self.rate_hz));
        }
        if !(self.speed_of_sound.is_finite() && self.speed_of_sound > 0.0) {
            return bad("speed_of_sound must be positive".into());
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return bad("snr_db must be a number or inf".into());
        }
        if self.num_sources < 1 {
            return bad("num_sources must be at least 1".into());
        }
        if !(self.bandwidth_ratio > 0.0 && self.bandwidth_ratio <= 0.5) {
            return bad(format!("bandwidth_ratio must be in (0, 0.5], got {}", self.bandwidth_ratio));
        }
        if self.array_sensors < 2 || self.array_radius.is_nan() || self.array_radius <= 0.0 {
            return bad("array needs at least 2 sensors and a positive radius".into());
        }
        if self.factor < 1 || self.thiran_order < 1 {
            return bad("factor and thiran_order must be at least 1".into());
        }
        if self.sinc_half_width == Some(0) || self.ws_half_width == Some(0) {
            return bad("S must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods list is empty".into());
        }
        let min = min_window_length(&self.geometry()?, self.rate_hz, self.speed_of_sound);
        if self.window_samples <= min {
            return bad(format!(
                "window_samples {} must exceed the array transit time of {min} samples",
                self.window_samples
            ));
        }
        Ok(())
    }
}

/// Mixes tags into a base seed (splitmix64 finalizer), so every random stream
/// depends only on what it is for, not on execution order.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(base), |acc, t| mix(acc ^ mix(*t)))
}

const TAG_ANGLE: u64 = 1;
const TAG_NOISE: u64 = 2;
const TAG_SWEEP: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSource {
    /// 1-based index `k`; arrival at the array centre is `k L / f_s`.
    pub index: usize,
    pub angle: f64,
    pub position: DVector<f64>,
}

impl ImageSource {
    /// Window centre in samples, `k L`.
    pub fn window_center(&self, cfg: &ScenarioConfig) -> usize {
        self.index * cfg.window_samples
    }
}

/// `x_k = r_c + (cos th_k, sin th_k) k c L / f_s`, `th_k ~ U[0, 2 pi)`.
pub fn place_image_sources(cfg: &ScenarioConfig) -> Result<Vec<ImageSource>, ScenarioError> {
    let center = cfg.geometry()?.center();
    let spacing = cfg.speed_of_sound * cfg.window_samples as f64 / cfg.rate_hz;
    Ok((1..=cfg.num_sources)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[TAG_ANGLE, k as u64]));
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let dir = DVector::from_vec(vec![angle.cos(), angle.sin()]);
            ImageSource {
                index: k,
                angle,
                position: &center + dir * (k as f64 * spacing),
            }
        })
        .collect())
}

/// True TOA of `source` at sensor `n`, seconds.
pub fn true_toa(g: &ArrayGeometry, n: usize, source: &ImageSource, c: f64) -> f64 {
    (g.position(n) - &source.position).norm() / c
}

/// One record of `(K + 2) L` samples per sensor holding every reflection.
///
/// Pulses are unit-amplitude Thiran-delayed impulses, band limited to `B`.
/// Noise is scaled per `L`-sample segment around each arrival so every
/// reflection sees the same SNR.
pub fn synth_sensor_signals(
    cfg: &ScenarioConfig,
    sources: &[ImageSource],
) -> Result<Vec<SampledSignal>, ScenarioError> {
    let g = cfg.geometry()?;
    let len = (cfg.num_sources + 2) * cfg.window_samples;
    let fs = cfg.rate_hz;
    (0..g.len())
        .map(|n| {
            let mut buf = vec![0.0; len];
            for s in sources {
                let delay = true_toa(&g, n, s, cfg.speed_of_sound) * fs;
                add_pulse(&mut buf, delay, 1.0, cfg.thiran_order)?;
            }
            let clean = bandlimit(&SampledSignal::new(buf, fs)?, cfg.bandlimit_hz())?;
            if cfg.snr_db == f64::INFINITY {
                return Ok(clean);
            }
            let mut out = clean.samples().to_vec();
            let l = cfg.window_samples;
            let half = l / 2;
            for s in sources {
                let k = s.index;
                let center = s.window_center(cfg);
                let lo = if k == 1 { 0 } else { center - half };
                let hi = if k == sources.len() { len } else { center - half + l };
                let seg = &clean.samples()[center - half..center - half + l];
                let power = seg.iter().map(|x| x * x).sum::<f64>() / l as f64;
                let noise = gaussian_noise(
                    hi - lo,
                    noise_std(power, cfg.snr_db),
                    derive_seed(cfg.seed, &[TAG_NOISE, k as u64, n as u64]),
                );
                out[lo..hi].iter_mut().zip(noise).for_each(|(x, e)| *x += e);
            }
            Ok(SampledSignal::new(out, fs)?)
        })
        .collect()
}

/// Errors of one method on one image source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRecord {
    pub source: usize,
    pub method: Method,
    /// `|t_hat - t|` per sensor, seconds.
    pub toa_errors: Vec<f64>,
    /// `|tau_hat - tau|` per sensor pair, seconds.
    pub tdoa_errors: Vec<f64>,
    pub eps_pos: Option<f64>,
    pub failure: Option<String>,
}

impl SourceRecord {
    pub fn mean_toa_error(&self) -> Option<f64> {
        mean(&self.toa_errors)
    }

    pub fn mean_tdoa_error(&self) -> Option<f64> {
        mean(&self.tdoa_errors)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Raw results of one simulation run, ordered by source then method.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub config: ScenarioConfig,
    pub records: Vec<SourceRecord>,
}

impl TrialResult {
    pub fn for_method(&self, method: Method) -> impl Iterator<Item = &SourceRecord> {
        self.records.iter().filter(move |r| r.method == method)
    }

    /// Pooled TOA, TDOA and position errors of one method.
    pub fn pooled(&self, method: Method) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut toa = Vec::new();
        let mut tdoa = Vec::new();
        let mut pos = Vec::new();
        for r in self.for_method(method) {
            toa.extend_from_slice(&r.toa_errors);
            tdoa.extend_from_slice(&r.tdoa_errors);
            pos.extend(r.eps_pos);
        }
        (toa, tdoa, pos)
    }

    pub fn failures(&self, method: Method) -> usize {
        self.for_method(method).filter(|r| r.failure.is_some()).count()
    }
}

fn evaluate_source(
    cfg: &ScenarioConfig,
    g: &ArrayGeometry,
    estimator: &SlownessEstimator,
    signals: &[SampledSignal],
    source: &ImageSource,
) -> Vec<SourceRecord> {
    let c = cfg.speed_of_sound;
    let truth: Vec<f64> = (0..g.len()).map(|n| true_toa(g, n, source, c)).collect();
    let pairs = sensor_pairs(g.len());
    let frames = FrameSet::extract(
        signals,
        source.window_center(cfg),
        cfg.window_samples,
        cfg.window_shape,
    );
    cfg.methods
        .iter()
        .map(|&method| {
            let mut rec = SourceRecord {
                source: source.index,
                method,
                toa_errors: Vec::new(),
                tdoa_errors: Vec::new(),
                eps_pos: None,
                failure: None,
            };
            let run = |rec: &mut SourceRecord| -> Result<(), ScenarioError> {
                let frames = frames.as_ref().map_err(Clone::clone)?;
                let toa_cfg = cfg.interp_config(method, EstimateTarget::Toa);
                let tdoa_cfg = cfg.interp_config(method, EstimateTarget::Tdoa);
                let toas = frames
                    .frames
                    .iter()
                    .enumerate()
                    .map(|(n, f)| Ok(estimate_toa(f, n, &toa_cfg)?.seconds))
                    .collect::<Result<Vec<f64>, ScenarioError>>()?;
                rec.toa_errors = toas.iter().zip(&truth).map(|(a, b)| (a - b).abs()).collect();
                let tdoas = pairs
                    .iter()
                    .map(|&(m, n)| {
                        Ok(estimate_tdoa(&frames.frames[m], &frames.frames[n], (m, n), &tdoa_cfg)?.seconds)
                    })
                    .collect::<Result<Vec<f64>, ScenarioError>>()?;
                rec.tdoa_errors = pairs
                    .iter()
                    .zip(&tdoas)
                    .map(|(&(m, n), t)| (t - (truth[n] - truth[m])).abs())
                    .collect();
                let s = estimator.estimate(&tdoas)?;
                let x = estimate_position(&s, center_toa(&toas)?, g, c)?;
                rec.eps_pos = Some(localization_error(&x, &source.position, &g.center()));
                Ok(())
            };
            if let Err(e) = run(&mut rec) {
                rec.failure = Some(e.to_string());
            }
            rec
        })
        .collect()
}

/// Windows every sensor at each arrival, estimates TOAs and TDOAs with every
/// configured method, localizes, and records the errors.
///
/// Per-window failures are stored in the records instead of aborting.
pub fn run_trial(cfg: &ScenarioConfig, exec: Execution) -> Result<TrialResult, ScenarioError> {
    cfg.validate()?;
    let g = cfg.geometry()?;
    let estimator = SlownessEstimator::new(&g)?;
    let sources = place_image_sources(cfg)?;
    let signals = synth_sensor_signals(cfg, &sources)?;
    let records = exec
        .map_slice(&sources, |s| evaluate_source(cfg, &g, &estimator, &signals, s))
        .into_iter()
        .flatten()
        .collect();
    Ok(TrialResult {
        config: cfg.clone(),
        records,
    })
}

/// Mean, lower median and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub count: usize,
}

/// Summary statistics; the median of an even-sized set is the lower middle.
pub fn aggregate(values: &[f64]) -> Result<Stats, ScenarioError> {
    if values.is_empty() {
        return Err(ScenarioError::EmptySet);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Stats {
        mean,
        median: sorted[(sorted.len() - 1) / 2],
        std: var.sqrt(),
        count: values.len(),
    })
}

/// Standard deviation of the bootstrap distribution of `mean(a) - mean(b)`,
/// resampling paired entries.
pub fn paired_bootstrap_std(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n == 0 || resamples < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diffs: Vec<f64> = (0..resamples)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let i = rng.random_range(0..n);
                    a[i] - b[i]
                })
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let m = diffs.iter().sum::<f64>() / resamples as f64;
    (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}

/// Standard deviation of the bootstrap distribution of the mean.
pub fn bootstrap_std(values: &[f64], resamples: usize, seed: u64) -> f64 {
    paired_bootstrap_std(values, &vec![0.0; values.len()], resamples, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    RateHz,
    Factor,
    SnrDb,
    WindowMs,
    S,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::RateHz => "rate_hz",
            SweepParameter::Factor => "factor",
            SweepParameter::SnrDb => "snr_db",
            SweepParameter::WindowMs => "window_ms",
            SweepParameter::S => "s",
        }
    }

    fn tag(self) -> u64 {
        self as u64 + 1
    }
}

/// One parameter varied over `values`, everything else from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub base: ScenarioConfig,
}

impl SweepSpec {
    fn check(&self, v: f64) -> Result<(), ScenarioError> {
        let (lo, hi, integral) = match self.parameter {
            SweepParameter::RateHz => (2000.0, 48000.0, false),
            SweepParameter::Factor => (1.0, 200.0, true),
            SweepParameter::SnrDb => (-10.0, 60.0, false),
            SweepParameter::WindowMs => (1.0, 16.0, false),
            SweepParameter::S => (1.0, self.base.window_samples as f64, true),
        };
        if !(v >= lo && v <= hi) || (integral && v.fract() != 0.0) {
            return Err(ScenarioError::InvalidConfig(format!(
                "{} value {v} outside [{lo}, {hi}]{}",
                self.parameter.name(),
                if integral { " or not an integer" } else { "" }
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.values.is_empty() {
            return Err(ScenarioError::InvalidConfig("sweep grid is empty".into()));
        }
        self.values.iter().try_for_each(|&v| self.check(v))?;
        self.base.validate()
    }

    /// Scenario for one grid value with its own derived seed. Changing the
    /// rate keeps the window duration fixed.
    pub fn cell(&self, value: f64) -> ScenarioConfig {
        let mut cfg = self.base.clone();
        match self.parameter {
            SweepParameter::RateHz => {
                let ms = self.base.window_ms();
                cfg.rate_hz = value;
                cfg.window_samples = (ms * value / 1000.0).round() as usize;
            }
            SweepParameter::Factor => cfg.factor = value as usize,
            SweepParameter::SnrDb => cfg.snr_db = value,
            SweepParameter::WindowMs => {
                cfg.window_samples = (value * cfg.rate_hz / 1000.0).round() as usize;
            }
            SweepParameter::S => {
                cfg.sinc_half_width = Some(value as usize);
                cfg.ws_half_width = Some(value as usize);
            }
        }
        cfg.seed = derive_seed(self.base.seed, &[TAG_SWEEP, self.parameter.tag(), value.to_bits()]);
        cfg
    }
}

/// Aggregated statistics for one (grid value, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub parameter: Option<SweepParameter>,
    pub value: f64,
    pub rate_hz: f64,
    pub window_samples: usize,
    pub factor: usize,
    pub snr_db: f64,
    /// S used for TDOA estimates by this method.
    pub s: usize,
    pub method: Method,
    pub toa: Option<Stats>,
    pub tdoa: Option<Stats>,
    pub eps_pos: Option<Stats>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn row(&self, value: f64, method: Method) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.value == value && r.method == method)
    }

    /// Rows summarizing one trial.
    pub fn from_trial(trial: &TrialResult, parameter: Option<SweepParameter>, value: f64) -> Self {
        let cfg = &trial.config;
        let rows = cfg
            .methods
            .iter()
            .map(|&method| {
                let (toa, tdoa, pos) = trial.pooled(method);
                ErrorRow {
                    parameter,
                    value,
                    rate_hz: cfg.rate_hz,
                    window_samples: cfg.window_samples,
                    factor: cfg.factor,
                    snr_db: cfg.snr_db,
                    s: cfg.half_width(method, EstimateTarget::Tdoa),
                    method,
                    toa: aggregate(&toa).ok(),
                    tdoa: aggregate(&tdoa).ok(),
                    eps_pos: aggregate(&pos).ok(),
                    failures: trial.failures(method),
                }
            })
            .collect();
        Self { rows }
    }
}

/// Output of [`run_sweep`]: the table and the raw trial behind each value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub table: ErrorTable,
    pub trials: Vec<(f64, TrialResult)>,
}

/// One trial per grid value, aggregated in grid order.
pub fn run_sweep(spec: &SweepSpec, exec: Execution) -> Result<SweepResult, ScenarioError> {
    spec.validate()?;
    let trials = exec
        .map_slice(&spec.values, |&v| run_trial(&spec.cell(v), exec).map(|t| (v, t)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = ErrorTable::default();
    for (v, t) in &trials {
        table
            .rows
            .extend(ErrorTable::from_trial(t, Some(spec.parameter), *v).rows);
    }
    Ok(SweepResult { table, trials })
}
