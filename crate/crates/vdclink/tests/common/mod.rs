//! Shared helpers for the integration suites: an FFT oracle for switching
//! patterns that is independent of the closed-form Fourier expression.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use vdclink::opp::SwitchingPattern;

/// Exact per-bin averages of the pattern waveform over `n` uniform bins of one
/// period. The waveform is piecewise constant between toggles, so every bin
/// average is a finite sum of segment overlaps — no sampling error.
pub fn bin_averaged_waveform(pattern: &SwitchingPattern, n: usize) -> Vec<f64> {
    let toggles = pattern.toggle_angles();
    // segment levels: level just after angle 0 is -1, flipping at each toggle
    let mut edges = toggles.clone();
    edges.push(2.0 * PI);
    let width = 2.0 * PI / n as f64;
    let mut avg = vec![0.0; n];
    let mut level = -1.0;
    let mut seg = 0usize;
    for (b, out) in avg.iter_mut().enumerate() {
        let lo = b as f64 * width;
        let hi = lo + width;
        let mut acc = 0.0;
        let mut pos = lo;
        // walk segments overlapping [lo, hi)
        let mut lvl = level;
        let mut s = seg;
        while s + 1 < edges.len() && edges[s + 1] <= lo {
            s += 1;
            lvl = -lvl;
        }
        loop {
            let seg_end = if s + 1 < edges.len() { edges[s + 1] } else { 2.0 * PI };
            let end = seg_end.min(hi);
            acc += lvl * (end - pos);
            if seg_end >= hi {
                break;
            }
            pos = seg_end;
            s += 1;
            lvl = -lvl;
        }
        *out = acc / width;
        // advance persistent cursor to the segment containing hi
        while seg + 1 < edges.len() && edges[seg + 1] <= hi {
            seg += 1;
            level = -level;
        }
    }
    avg
}

/// Harmonic amplitudes (orders 1..=n_max) of the pattern via FFT of the
/// bin-averaged waveform, corrected for the bin-averaging sinc attenuation.
/// Independent oracle for `evaluate_harmonic`: a defect in the closed-form
/// cosine sum would not reproduce here.
pub fn fft_oracle_amplitudes(pattern: &SwitchingPattern, bins: usize, n_max: u32) -> Vec<f64> {
    let avg = bin_averaged_waveform(pattern, bins);
    let mut buf: Vec<Complex64> = avg.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(bins).process(&mut buf);
    (1..=n_max)
        .map(|k| {
            let amp = 2.0 * buf[k as usize].norm() / bins as f64;
            // sinc(k/bins) correction for the rectangular bin average
            let x = PI * f64::from(k) / bins as f64;
            let sinc = if x.abs() < 1e-12 { 1.0 } else { x.sin() / x };
            amp / sinc
        })
        .collect()
}
