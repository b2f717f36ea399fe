//! Subsample time-delay estimation for windowed acoustic reflections.
//!
//! The crate is organised bottom-up:
//!
//! - [`signals`]: sampled signals, Thiran fractional delays, band limiting and noise.
//! - [`interp`]: subsample refinement of a discrete peak (parabolic, Gaussian,
//!   weighted-frequency, sinc and Whittaker-Shannon).
//! - [`tde`]: windowing, matched filtering, cross-correlation and TOA/TDOA estimates.
//! - [`locate`]: far-field image-source localization from slowness vectors.
//! - [`scenario`]: the 2-D simulation world and parameter sweeps.
//! - [`ingest`]: measured multichannel RIRs, matched-filter estimation and the
//!   full-rate reference pipeline.
//!
//! Batch workloads (sources in a trial, cells in a sweep) run through
//! [`Execution`], which uses rayon when the `parallel` feature is enabled and
//! falls back to a plain sequential loop otherwise. Results never depend on the
//! execution mode.

mod fft;
pub mod ingest;
pub mod interp;
pub mod locate;
mod parallel;
pub mod scenario;
pub mod signals;
pub mod tde;

pub use interp::{InterpConfig, Method, PeakNeighborhood};
pub use locate::ArrayGeometry;
pub use parallel::Execution;
pub use scenario::{ErrorTable, ScenarioConfig};
pub use signals::SampledSignal;

/// Normalized sinc, `sin(pi x) / (pi x)`.
#[inline]
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}
