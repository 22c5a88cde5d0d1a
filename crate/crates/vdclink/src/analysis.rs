//! Spectral analysis of recorded waveforms: integer-period FFT spectra,
//! fundamental phasor extraction and harmonic-energy bookkeeping.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// One spectral line of a harmonic table.
#[derive(Debug, Clone, Copy)]
pub struct HarmonicLine {
    /// Harmonic order (0 = dc).
    pub order: u32,
    /// Peak amplitude in the unit of the input samples.
    pub amplitude: f64,
    /// Phase in radians (cosine reference), meaningless for order 0.
    pub phase: f64,
}

/// Harmonic content of a uniformly sampled trace spanning whole fundamental periods.
#[derive(Debug, Clone)]
pub struct HarmonicTable {
    pub f1_hz: f64,
    pub lines: Vec<HarmonicLine>,
}

impl HarmonicTable {
    pub fn amplitude(&self, order: u32) -> f64 {
        self.lines.get(order as usize).map_or(0.0, |l| l.amplitude)
    }
}

/// Checks that `len` samples of spacing `dt` span an integer number of periods of
/// `f1`, returning that period count.
pub fn integer_periods(len: usize, dt: f64, f1: f64) -> Result<usize> {
    if !(f1 > 0.0) || !(dt > 0.0) || len == 0 {
        return Err(Error::Window("need positive f1, dt and a non-empty trace".into()));
    }
    let periods = len as f64 * dt * f1;
    let rounded = periods.round();
    if rounded < 1.0 || (periods - rounded).abs() > 1e-6 * rounded.max(1.0) {
        return Err(Error::Window(format!(
            "trace spans {periods:.6} periods of {f1} Hz; need an integer count"
        )));
    }
    Ok(rounded as usize)
}

/// FFT-based harmonic table of a trace spanning whole periods of `f1`.
///
/// Returns amplitude and phase for each integer harmonic order up to a quarter of
/// the sampling rate (half the Nyquist frequency), where switched waveforms are
/// still well resolved.
pub fn fft_spectrum(samples: &[f64], dt: f64, f1: f64) -> Result<HarmonicTable> {
    let periods = integer_periods(samples.len(), dt, f1)?;
    let n = samples.len();

    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let max_order = ((0.25 / (dt * f1)) as usize).min((n / 2) / periods.max(1));
    let mut lines = Vec::with_capacity(max_order + 1);
    lines.push(HarmonicLine { order: 0, amplitude: buf[0].re / n as f64, phase: 0.0 });
    for order in 1..=max_order {
        let bin = order * periods;
        let c = buf[bin];
        // X[k] of cos(k w t + phi) has value (N/2) e^{i phi}
        let amplitude = 2.0 * c.norm() / n as f64;
        let phase = c.im.atan2(c.re);
        lines.push(HarmonicLine { order: order as u32, amplitude, phase });
    }
    Ok(HarmonicTable { f1_hz: f1, lines })
}

/// Complex fundamental phasor (cosine reference) via single-bin correlation.
/// Exact for traces spanning whole periods.
pub fn fundamental_phasor(samples: &[f64], dt: f64, f1: f64) -> Result<Complex64> {
    integer_periods(samples.len(), dt, f1)?;
    let n = samples.len();
    let w = 2.0 * PI * f1 * dt;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, &x) in samples.iter().enumerate() {
        let ph = w * k as f64;
        acc += Complex64::new(x * ph.cos(), -x * ph.sin());
    }
    Ok(acc * 2.0 / n as f64)
}

pub fn rms(samples: &[f64]) -> f64 {
    (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt()
}

fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Total energy of all non-fundamental, non-dc content expressed as a sum of
/// squared peak amplitudes: `sum_{n>1} U_n^2 = 2*(rms^2 - dc^2) - U_1^2`.
/// Parseval makes this exact without resolving individual lines, which matters
/// for carrier sidebands that fall between integer harmonic orders.
pub fn harmonic_energy_amp2(samples: &[f64], dt: f64, f1: f64) -> Result<f64> {
    let fund = fundamental_phasor(samples, dt, f1)?.norm();
    let total = rms(samples);
    let dc = mean(samples);
    Ok((2.0 * (total * total - dc * dc) - fund * fund).max(0.0))
}

/// Fundamental electrical quantities of a three-phase recording.
#[derive(Debug, Clone, Copy)]
pub struct FundamentalPower {
    /// Per-phase fundamental voltage, rms V.
    pub u_1rms: f64,
    /// Per-phase fundamental current, rms A.
    pub i_1rms: f64,
    /// Displacement factor between fundamental voltage and current.
    pub cos_phi: f64,
    /// Three-phase fundamental active power `3*U*I*cos(phi)`, W.
    pub p_f1: f64,
}

/// Extracts fundamental rms voltage/current, displacement factor and fundamental
/// power from three-phase traces spanning whole fundamental periods.
pub fn fundamental_electrical_power(
    voltages: &[Vec<f64>; 3],
    currents: &[Vec<f64>; 3],
    dt: f64,
    f1: f64,
) -> Result<FundamentalPower> {
    let mut u_sum = 0.0;
    let mut i_sum = 0.0;
    let mut p_sum = 0.0;
    for ph in 0..3 {
        let v1 = fundamental_phasor(&voltages[ph], dt, f1)?;
        let i1 = fundamental_phasor(&currents[ph], dt, f1)?;
        u_sum += v1.norm();
        i_sum += i1.norm();
        p_sum += 0.5 * (v1 * i1.conj()).re;
    }
    let u_1rms = u_sum / 3.0 / std::f64::consts::SQRT_2;
    let i_1rms = i_sum / 3.0 / std::f64::consts::SQRT_2;
    let denom = 3.0 * u_1rms * i_1rms;
    let cos_phi = if denom > 0.0 { (p_sum / denom).clamp(-1.0, 1.0) } else { 0.0 };
    Ok(FundamentalPower { u_1rms, i_1rms, cos_phi, p_f1: p_sum })
}
