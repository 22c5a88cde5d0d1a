//! Modulation back-ends (PWM, OPWM, OPP) and the dc-link voltage law.
//!
//! All three methods drive the same two-level three-phase inverter; they differ in
//! how the dc link is chosen and how pole states are generated:
//!
//! - `PWM`  — conventional sine-triangle PWM on the maximum dc link (all cells in).
//! - `OPWM` — the same carrier comparison, but the dc link follows the voltage
//!   command so the modulation index stays at a fixed utilization ratio (0.9 here).
//! - `OPP`  — a precomputed harmonic-elimination pattern indexed by the voltage
//!   angle; the dc link follows the command with the pattern's `u1_gen` as ratio.
//!
//! The dc-link law is `U'_dc = 2 * U_1 / u_r`, and the cell count follows by
//! dividing by the average cell terminal voltage.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::opp::SwitchingPattern;

/// Stator voltage command in the rotor frame plus derived polar quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageCommand {
    /// d-axis voltage, V.
    pub u_d: f64,
    /// q-axis voltage, V.
    pub u_q: f64,
    /// Fundamental phase-voltage amplitude `sqrt(u_d^2 + u_q^2)`, V.
    pub u_1: f64,
    /// Angle of the voltage vector relative to the d-axis, rad.
    pub theta: f64,
    /// Angle of the voltage vector in the stationary frame (`theta + gamma`), rad.
    pub alpha: f64,
}

impl VoltageCommand {
    /// Builds a command from dq voltages and the rotor d-axis electrical angle.
    pub fn new(u_d: f64, u_q: f64, gamma: f64) -> Self {
        let u_1 = u_d.hypot(u_q);
        let theta = u_q.atan2(u_d);
        Self { u_d, u_q, u_1, theta, alpha: theta + gamma }
    }
}

/// Modulation method with its back-end parameters.
#[derive(Debug, Clone)]
pub enum Method {
    /// Conventional carrier PWM on a fixed maximum dc link (modulation index free).
    Pwm { carrier_hz: f64 },
    /// Carrier PWM with the dc link tracking the command at a fixed utilization.
    Opwm { carrier_hz: f64, utilization: f64 },
    /// Optimal pulse pattern with the dc link tracking the command.
    Opp { pattern: SwitchingPattern },
}

impl Method {
    /// The dc-link voltage utilization ratio `u_r` used by the dc-link law.
    ///
    /// PWM runs with the dc link maxed out, so for sizing purposes its usable
    /// ratio is the full modulation range (`m_a` up to 1).
    pub fn utilization_ratio(&self) -> f64 {
        match self {
            Method::Pwm { .. } => 1.0,
            Method::Opwm { utilization, .. } => *utilization,
            Method::Opp { pattern } => pattern.u1_gen(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Pwm { .. } => "PWM",
            Method::Opwm { .. } => "OPWM",
            Method::Opp { .. } => "OPP",
        }
    }

    /// Whether the dc link should track the voltage command (false pins N at max).
    pub fn variable_dc_link(&self) -> bool {
        !matches!(self, Method::Pwm { .. })
    }
}

/// Applies the dc-link voltage law: returns `(U_1, theta, U'_dc)` for a dq voltage
/// command under utilization ratio `u_r`.
pub fn required_dc_voltage(u_d: f64, u_q: f64, u_r: f64) -> Result<(f64, f64, f64)> {
    if !(u_r > 0.0) {
        return Err(Error::Domain(format!("utilization ratio must be positive, got {u_r}")));
    }
    let u_1 = u_d.hypot(u_q);
    let theta = u_q.atan2(u_d);
    Ok((u_1, theta, 2.0 * u_1 / u_r))
}

/// Number of series cells needed to synthesize `u_dc_required`, clamped to `n_max`.
pub fn cells_required(u_dc_required: f64, v_cell_avg: f64, n_max: usize) -> Result<usize> {
    if u_dc_required < 0.0 {
        return Err(Error::Domain(format!("required dc voltage is negative: {u_dc_required}")));
    }
    if !(v_cell_avg > 0.0) {
        return Err(Error::Domain(format!(
            "average cell voltage must be positive, got {v_cell_avg}"
        )));
    }
    let n = (u_dc_required / v_cell_avg).ceil() as usize;
    Ok(n.min(n_max))
}

/// Symmetric triangular carrier with period `1/carrier_hz`, range [-1, 1],
/// starting at -1 and peaking at half period.
pub fn triangular_carrier(carrier_hz: f64, t: f64) -> f64 {
    let u = (t * carrier_hz).rem_euclid(1.0);
    if u < 0.5 {
        4.0 * u - 1.0
    } else {
        3.0 - 4.0 * u
    }
}

/// Sine-triangle comparison for all three phases.
///
/// References have amplitude `m_a = 2*U_1/U_dc` and phases `alpha`, `alpha - 2pi/3`,
/// `alpha + 2pi/3`; each is compared against the shared triangular carrier. The
/// caller is responsible for sample-and-holding the command at carrier half-period
/// boundaries when regular-sampled operation is wanted (the simulation engine does).
pub fn carrier_pwm_states(
    command: &VoltageCommand,
    u_dc: f64,
    carrier_hz: f64,
    t: f64,
) -> Result<[f64; 3]> {
    if !(u_dc > 0.0) {
        return Err(Error::Domain(format!("dc-link voltage must be positive, got {u_dc}")));
    }
    let m_a = 2.0 * command.u_1 / u_dc;
    if m_a > 1.0 {
        return Err(Error::Overmodulation { m_a });
    }
    let carrier = triangular_carrier(carrier_hz, t);
    let phase_shift = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];
    Ok(phase_shift.map(|shift| {
        let reference = m_a * (command.alpha + shift).cos();
        if reference >= carrier {
            1.0
        } else {
            -1.0
        }
    }))
}

/// Pole states for the OPP back-end at stationary-frame voltage angle `alpha`.
///
/// The pattern waveform is a sine series, so phase a is evaluated at
/// `alpha + pi/2` to put its fundamental peak at the commanded angle; phases b
/// and c are shifted by -2pi/3 and -4pi/3.
pub fn opp_states(pattern: &SwitchingPattern, alpha: f64) -> [f64; 3] {
    let base = alpha + PI / 2.0;
    [
        pattern.level_at(base),
        pattern.level_at(base - 2.0 * PI / 3.0),
        pattern.level_at(base - 4.0 * PI / 3.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opp::{nine_pulse_orders, solve_angles};

    fn nine_pulse() -> SwitchingPattern {
        solve_angles(&nine_pulse_orders()).unwrap()
    }

    #[test]
    fn dc_link_law_three_four_five() {
        let (u1, theta, udc) = required_dc_voltage(60.0, 80.0, 0.9).unwrap();
        assert!((u1 - 100.0).abs() < 1e-12);
        assert!((theta - 0.92730).abs() < 1e-5);
        assert!((udc - 222.2222222).abs() < 1e-6);
    }

    #[test]
    fn dc_link_law_opp_ratio() {
        let (_, _, udc) = required_dc_voltage(60.0, 80.0, 1.1597).unwrap();
        assert!((udc - 172.458).abs() < 5e-3, "got {udc}");
    }

    #[test]
    fn dc_link_law_axis_aligned() {
        let (u1, theta, udc) = required_dc_voltage(42.0, 0.0, 0.9).unwrap();
        assert_eq!(theta, 0.0);
        assert!((u1 - 42.0).abs() < 1e-12);
        assert!((udc - 2.0 * 42.0 / 0.9).abs() < 1e-9);
    }

    #[test]
    fn dc_link_law_rejects_bad_ratio() {
        assert!(matches!(required_dc_voltage(1.0, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(required_dc_voltage(1.0, 0.0, -0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn cell_count_rounds_up_and_clamps() {
        assert_eq!(cells_required(222.22, 3.6, 90).unwrap(), 62);
        assert_eq!(cells_required(400.0, 3.6, 90).unwrap(), 90);
        assert_eq!(cells_required(0.0, 3.6, 90).unwrap(), 0);
        assert!(matches!(cells_required(-1.0, 3.6, 90), Err(Error::Domain(_))));
    }

    #[test]
    fn pwm_zero_command_is_half_duty() {
        let cmd = VoltageCommand::new(0.0, 0.0, 0.0);
        let f_c = 10_000.0;
        let dt = 1e-7;
        let n = (1.0 / f_c / dt) as usize;
        let mut avg = [0.0; 3];
        for i in 0..n {
            let s = carrier_pwm_states(&cmd, 300.0, f_c, i as f64 * dt).unwrap();
            for (acc, v) in avg.iter_mut().zip(s) {
                *acc += v;
            }
        }
        for acc in avg {
            assert!(
                (acc / n as f64).abs() < 0.01,
                "zero command should average to zero pole voltage, got {}",
                acc / n as f64
            );
        }
    }

    #[test]
    fn pwm_overmodulation_rejected() {
        let u_dc = 200.0;
        let cmd = VoltageCommand::new(0.0, 1.01 * u_dc / 2.0, 0.0);
        assert!(matches!(
            carrier_pwm_states(&cmd, u_dc, 10_000.0, 0.0),
            Err(Error::Overmodulation { .. })
        ));
    }

    /// Correlates a sampled waveform with cos/sin at `f1` and returns the amplitude.
    fn fundamental_amplitude(samples: &[f64], dt: f64, f1: f64) -> f64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, &v) in samples.iter().enumerate() {
            let w = 2.0 * PI * f1 * i as f64 * dt;
            re += v * w.cos();
            im += v * w.sin();
        }
        2.0 * re.hypot(im) / samples.len() as f64
    }

    #[test]
    fn pwm_fundamental_tracks_command() {
        // m_a = 0.9 at 50 Hz, 10 kHz carrier: fundamental of the pole voltage
        // should equal 0.9 * U_dc / 2 within 1%.
        let u_dc = 300.0;
        let f1 = 50.0;
        let m_a = 0.9;
        let u1 = m_a * u_dc / 2.0;
        let dt: f64 = 1e-6;
        let n = (1.0 / f1 / dt).round() as usize;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                let cmd = VoltageCommand::new(u1, 0.0, 2.0 * PI * f1 * t);
                carrier_pwm_states(&cmd, u_dc, 10_000.0, t).unwrap()[0] * u_dc / 2.0
            })
            .collect();
        let amp = fundamental_amplitude(&samples, dt, f1);
        assert!(
            (amp - u1).abs() / u1 < 0.01,
            "fundamental {amp:.2} V vs commanded {u1:.2} V"
        );
    }

    #[test]
    fn opp_fundamental_amplitude() {
        let pattern = nine_pulse();
        let u1_gen = pattern.u1_gen();
        let u_dc = 200.0;
        let n = 200_000;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let alpha = 2.0 * PI * i as f64 / n as f64;
                opp_states(&pattern, alpha)[0] * u_dc / 2.0
            })
            .collect();
        let amp = fundamental_amplitude(&samples, 1.0 / n as f64, 1.0);
        let expect = u1_gen * u_dc / 2.0;
        assert!(
            (amp - expect).abs() / expect < 1e-3,
            "fundamental {amp:.3} vs {expect:.3}"
        );
    }

    #[test]
    fn opp_toggle_count_per_period() {
        // A 9-angle quarter-wave pattern toggles 4*9 + 2 = 38 times per electrical
        // period (the +2 are the half-wave seams at 0 and pi), i.e. 19 device
        // switchings per fundamental period per leg transistor.
        let pattern = nine_pulse();
        let n = 4_000_000;
        let mut toggles = 0;
        let mut prev = opp_states(&pattern, 2.0 * PI * (n - 1) as f64 / n as f64)[0];
        for i in 0..n {
            let s = opp_states(&pattern, 2.0 * PI * i as f64 / n as f64)[0];
            if s != prev {
                toggles += 1;
            }
            prev = s;
        }
        assert_eq!(toggles, 38);
    }

    #[test]
    fn opp_half_wave_antisymmetry() {
        let pattern = nine_pulse();
        for i in 0..1000 {
            let alpha = 2.0 * PI * i as f64 / 1000.0 + 0.0005;
            let s = opp_states(&pattern, alpha);
            let s_shift = opp_states(&pattern, alpha + PI);
            for (a, b) in s.iter().zip(s_shift) {
                assert_eq!(*a, -b, "states at alpha and alpha+pi must be opposite");
            }
        }
    }

    #[test]
    fn udc_ordering_across_methods() {
        // Higher utilization means a lower required dc link for the same command.
        let pattern = nine_pulse();
        let (_, _, udc_opp) = required_dc_voltage(60.0, 80.0, pattern.u1_gen()).unwrap();
        let (_, _, udc_opwm) = required_dc_voltage(60.0, 80.0, 0.9).unwrap();
        assert!(udc_opp < udc_opwm);
    }
}
