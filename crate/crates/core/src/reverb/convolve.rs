use num_complex::Complex64;
use rustfft::FftPlanner;

use super::rir::Rir;
use crate::dsp::Waveform;

/// Linear convolution of `x` with `h`, truncated to `x.len()`, computed with FFTs.
pub fn fft_convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    let full = x.len() + h.len() - 1;
    let n = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut a: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    a.resize(n, Complex64::new(0.0, 0.0));
    let mut b: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    b.resize(n, Complex64::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[..x.len()].iter().map(|c| c.re * scale).collect()
}

/// Reverberant version of `clean`; the direct path at lag 0 keeps it
/// sample-aligned with the clean reference.
///
/// The lag-0 tap is applied directly and only the remaining taps go through
/// the FFT, so a unit-impulse response reproduces the input exactly.
pub fn convolve_rir(clean: &Waveform, rir: &Rir) -> Waveform {
    let x = &clean.samples;
    let Some((&h0, tail)) = rir.samples.split_first() else {
        return Waveform::new(vec![0.0; x.len()], clean.sample_rate);
    };
    let mut y: Vec<f64> = x.iter().map(|&v| h0 * v).collect();
    if x.len() > 1 && tail.iter().any(|&v| v != 0.0) {
        let late = fft_convolve_truncated(&x[..x.len() - 1], tail);
        for (out, l) in y[1..].iter_mut().zip(late) {
            *out += l;
        }
    }
    Waveform::new(y, clean.sample_rate)
}
