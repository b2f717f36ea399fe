use std::cell::RefCell;

use rustfft::{num_complex::Complex, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT (unnormalized).
pub(crate) fn forward(buf: &mut [Complex<f64>]) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

/// In-place inverse DFT, scaled by `1 / len`.
pub(crate) fn inverse(buf: &mut [Complex<f64>]) {
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
}

pub(crate) fn lift(values: &[f64], len: usize) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&r| Complex::new(r, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    buf
}
