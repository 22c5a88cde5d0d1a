//! Field-oriented control: speed loop, current loops with cross-coupling
//! feedforward, dc-link cell-count command and field weakening.
//!
//! For normal operation the flux reference is zero (maximum torque per ampere on
//! the nonsalient machine). Once the commanded dc-link voltage exceeds what the
//! full string of cells can supply, a voltage-margin PI drives the flux reference
//! negative; the cell-count target is pinned at its maximum for as long as the
//! weakening current is nonzero, and a hysteresis band keeps the transition from
//! chattering.

use crate::machine::MachineParams;
use crate::modulation::cells_required;

/// How the dc-link demand is quantized into a cell-count target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellQuantizer {
    /// Round up, step down only when the demand clearly leaves the rung. Used
    /// with carrier methods, whose modulation index absorbs the quantization.
    CeilWithHysteresis,
    /// First-order sigma-delta on the rung error. Pulse-pattern operation has
    /// no amplitude freedom inside a rung, so the count dithers by one step at
    /// the control rate and the accumulated fractional error sets the duty,
    /// delivering the demanded voltage on average.
    SigmaDelta,
}

/// PI gains and limits for all control loops.
#[derive(Debug, Clone, Copy)]
pub struct ControllerGains {
    pub kp_current: f64,
    pub ki_current: f64,
    pub kp_speed: f64,
    pub ki_speed: f64,
    pub kp_fw: f64,
    pub ki_fw: f64,
}

impl ControllerGains {
    /// Pole placement from machine constants: the current loops get first-order
    /// closed-loop dynamics at `current_bw_hz`, the speed loop at `speed_bw_hz`
    /// with its integrator a decade below.
    pub fn derive(machine: &MachineParams, current_bw_hz: f64, speed_bw_hz: f64) -> Self {
        let wc = 2.0 * std::f64::consts::PI * current_bw_hz;
        let ws = 2.0 * std::f64::consts::PI * speed_bw_hz;
        let kp_speed = machine.inertia * ws / machine.torque_constant();
        Self {
            kp_current: machine.l_d * wc,
            ki_current: machine.r_s * wc,
            kp_speed,
            ki_speed: kp_speed * ws / 10.0,
            kp_fw: 0.05,
            ki_fw: 20.0,
        }
    }
}

/// Controller state: references, integrators and the cell-count target.
#[derive(Debug, Clone)]
pub struct Controller {
    pub gains: ControllerGains,
    /// Torque-current clamp (peak amps).
    pub i_q_max: f64,
    /// Most negative allowed flux current, A (< 0).
    pub i_d_min: f64,
    /// Relative hysteresis on the field-weakening exit threshold.
    pub fw_hysteresis: f64,

    pub i_d_ref: f64,
    pub i_q_ref: f64,
    pub n_target: usize,
    pub quantizer: CellQuantizer,

    int_speed: f64,
    int_id: f64,
    int_iq: f64,
    int_fw: f64,
    fw_active: bool,
    sd_acc: f64,
    int_angle: f64,
    eq_filt: f64,
    ed_filt: f64,
    /// dc-link demand correction from the flux-current trim, V.
    pub amp_trim: f64,
}

impl Controller {
    pub fn new(gains: ControllerGains, i_q_max: f64, i_d_min: f64, fw_hysteresis: f64) -> Self {
        Self {
            gains,
            i_q_max,
            i_d_min,
            fw_hysteresis,
            i_d_ref: 0.0,
            i_q_ref: 0.0,
            n_target: 0,
            quantizer: CellQuantizer::CeilWithHysteresis,
            int_speed: 0.0,
            int_id: 0.0,
            int_iq: 0.0,
            int_fw: 0.0,
            fw_active: false,
            sd_acc: 0.0,
            int_angle: 0.0,
            eq_filt: 0.0,
            ed_filt: 0.0,
            amp_trim: 0.0,
        }
    }

    pub fn field_weakening_active(&self) -> bool {
        self.fw_active
    }

    /// Preloads the loop integrators for a warm start at a known steady state.
    pub fn preload(&mut self, i_q: f64, int_id: f64, int_iq: f64, n_target: usize) {
        self.i_q_ref = i_q;
        self.int_speed = i_q;
        self.int_id = int_id;
        self.int_iq = int_iq;
        self.n_target = n_target;
        self.sd_acc = 0.0;
        self.int_angle = 0.0;
        self.eq_filt = 0.0;
        self.ed_filt = 0.0;
        self.amp_trim = 0.0;
    }

    /// Speed loop: PI on the speed error producing the torque-current reference.
    pub fn speed_step(&mut self, omega_ref: f64, omega_m: f64, dt: f64) {
        let err = omega_ref - omega_m;
        let unsat = self.gains.kp_speed * err + self.int_speed;
        let sat = unsat.clamp(-self.i_q_max, self.i_q_max);
        // integrate only while not pushing further into the clamp
        if (unsat - sat).abs() < f64::EPSILON || (unsat > sat) == (err < 0.0) {
            self.int_speed += self.gains.ki_speed * err * dt;
        }
        self.i_q_ref = sat;
    }

    /// Current loops with back-EMF and cross-coupling feedforward. The output
    /// voltage vector is clamped to `u_1_limit` (what the dc link plus modulator
    /// can realize), with conditional anti-windup.
    pub fn current_step(
        &mut self,
        machine: &MachineParams,
        i_d: f64,
        i_q: f64,
        omega_e: f64,
        u_1_limit: f64,
        dt: f64,
    ) -> (f64, f64) {
        let e_d = self.i_d_ref - i_d;
        let e_q = self.i_q_ref - i_q;
        let v_d_raw = self.gains.kp_current * e_d + self.int_id - omega_e * machine.l_q * i_q;
        let v_q_raw = self.gains.kp_current * e_q
            + self.int_iq
            + omega_e * (machine.l_d * i_d + machine.psi_pm);

        let mag = v_d_raw.hypot(v_q_raw);
        if mag <= u_1_limit || mag == 0.0 {
            self.int_id += self.gains.ki_current * e_d * dt;
            self.int_iq += self.gains.ki_current * e_q * dt;
            (v_d_raw, v_q_raw)
        } else {
            // voltage limit: shrink the vector, freeze the integrators
            let scale = u_1_limit / mag;
            (v_d_raw * scale, v_q_raw * scale)
        }
    }

    /// Current control for amplitude-pinned (pulse-pattern) operation.
    ///
    /// The pattern delivers a fixed amplitude of `u1_gen * U_dc / 2`, so the
    /// continuous actuators are the vector angle (immediate) and the dc-link
    /// demand (through the cell-count loop). The command is the steady-state
    /// model vector at the references plus integral corrections in polar
    /// coordinates. Both current errors act through the inverse of the exact
    /// steady-state Jacobian `d(i_d,i_q)/d(|V|,theta)`: near the usual operating
    /// points the polar axes are strongly cross-coupled (amplitude moves mostly
    /// the torque current, angle mostly the flux current), and two naively
    /// paired single-axis integrators would oscillate against each other.
    ///
    /// Switched currents carry amps of ripple, so the errors are low-passed and
    /// the corrections are integral-only; proportional terms would rail on
    /// ripple alone. The amplitude correction is published in [`Controller::amp_trim`]
    /// (volts of fundamental amplitude) and picked up by the dc-link demand; it
    /// absorbs what the voltage law cannot see, notably the conduction-correlated
    /// resistive sag of the loaded string.
    pub fn opp_current_step(
        &mut self,
        machine: &MachineParams,
        i_d: f64,
        i_q: f64,
        omega_e: f64,
        dt: f64,
    ) -> (f64, f64) {
        let v_ff_d = machine.r_s * self.i_d_ref - omega_e * machine.l_q * self.i_q_ref;
        let v_ff_q = machine.r_s * self.i_q_ref
            + omega_e * (machine.l_d * self.i_d_ref + machine.psi_pm);
        let v_mag = v_ff_d.hypot(v_ff_q).max(1e-6);

        const TRIM_CROSSOVER: f64 = 15.0; // rad/s, below the amplitude-path lag
        const TRIM_FILTER_S: f64 = 3e-3;
        const ANGLE_LIMIT: f64 = 0.2; // rad

        self.eq_filt += ((self.i_q_ref - i_q) - self.eq_filt) * (dt / TRIM_FILTER_S).min(1.0);
        self.ed_filt += ((self.i_d_ref - i_d) - self.ed_filt) * (dt / TRIM_FILTER_S).min(1.0);

        // steady-state current sensitivities to amplitude and angle
        let r = machine.r_s;
        let xl = omega_e * machine.l_q;
        let z2 = r * r + xl * xl;
        let cos_t = v_ff_d / v_mag;
        let sin_t = v_ff_q / v_mag;
        let j11 = (r * cos_t + xl * sin_t) / z2; // di_d / d|V|
        let j12 = (xl * v_ff_d - r * v_ff_q) / z2; // di_d / dtheta
        let j21 = (r * sin_t - xl * cos_t) / z2; // di_q / d|V|
        let j22 = (r * v_ff_d + xl * v_ff_q) / z2; // di_q / dtheta
        let det = j11 * j22 - j12 * j21;

        if det.abs() > 1e-6 {
            let dv = (j22 * self.ed_filt - j12 * self.eq_filt) / det;
            let dtheta_rate = (-j21 * self.ed_filt + j11 * self.eq_filt) / det;
            let amp_limit = 0.15 * v_mag;
            self.amp_trim =
                (self.amp_trim + TRIM_CROSSOVER * dv * dt).clamp(-amp_limit, amp_limit);
            self.int_angle = (self.int_angle + TRIM_CROSSOVER * dtheta_rate * dt)
                .clamp(-ANGLE_LIMIT, ANGLE_LIMIT);
        }

        let (sin_d, cos_d) = self.int_angle.sin_cos();
        (v_ff_d * cos_d - v_ff_q * sin_d, v_ff_d * sin_d + v_ff_q * cos_d)
    }

    /// dc-link loop: converts the commanded dc voltage into a cell-count target
    /// and runs the field-weakening PI on the voltage excess.
    ///
    /// `u_dc_actual` is the measured link voltage; the sigma-delta quantizer
    /// integrates the real voltage error so resistive sag of the loaded string
    /// cannot leave a systematic deficit for the outer loops to fight over.
    ///
    /// While the weakening current is negative, the target stays pinned at
    /// `n_max` (the flux-reference sign rule). The controller exits weakening
    /// when the demand falls below the available voltage by the hysteresis
    /// margin and the PI has unwound to zero.
    pub fn dc_link_step(
        &mut self,
        u_dc_required: f64,
        v_cell_avg: f64,
        u_dc_actual: f64,
        n_max: usize,
        dt: f64,
    ) {
        let available = n_max as f64 * v_cell_avg;
        let excess = u_dc_required - available;

        if !self.fw_active {
            match self.quantizer {
                CellQuantizer::CeilWithHysteresis => {
                    let n_needed = cells_required(u_dc_required.max(0.0), v_cell_avg, n_max)
                        .expect("non-negative demand and positive cell voltage");
                    if n_needed > self.n_target {
                        self.n_target = n_needed;
                    } else {
                        // step down only when a 2%-inflated demand still needs
                        // fewer cells, so command ripple near a cell boundary
                        // cannot make the count hunt at the control rate
                        let n_margin =
                            cells_required((u_dc_required * 1.02).max(0.0), v_cell_avg, n_max)
                                .expect("non-negative demand and positive cell voltage");
                        if n_margin < self.n_target {
                            self.n_target = n_needed;
                        }
                    }
                }
                CellQuantizer::SigmaDelta => {
                    let capped = u_dc_required.max(0.0).min(1.05 * n_max as f64 * v_cell_avg);
                    let err_rungs = (capped - u_dc_actual) / v_cell_avg;
                    self.sd_acc = (self.sd_acc + err_rungs).clamp(-2.0, 2.0);
                    if self.sd_acc >= 0.5 && self.n_target < n_max {
                        self.n_target += 1;
                        self.sd_acc -= 1.0;
                    } else if self.sd_acc <= -0.5 && self.n_target > 0 {
                        self.n_target -= 1;
                        self.sd_acc += 1.0;
                    }
                }
            }
            if self.n_target == n_max && excess > 0.0 {
                self.fw_active = true;
            }
        }

        if self.fw_active {
            self.n_target = n_max;
            // PI on the excess; positive excess drives i_d_ref negative.
            let unwinding = u_dc_required < (1.0 - self.fw_hysteresis) * available;
            let raw = self.gains.kp_fw * excess + self.int_fw;
            let out = raw.clamp(0.0, -self.i_d_min);
            if (raw >= 0.0 && raw <= -self.i_d_min) || (raw > -self.i_d_min) == (excess < 0.0) {
                self.int_fw += self.gains.ki_fw * excess * dt;
            }
            self.i_d_ref = -out;
            if unwinding && out == 0.0 {
                self.fw_active = false;
                self.int_fw = 0.0;
                self.i_d_ref = 0.0;
            }
        } else {
            self.i_d_ref = 0.0;
            self.int_fw = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn machine() -> MachineParams {
        MachineParams {
            r_s: 0.8,
            l_d: 0.0035,
            l_q: 0.0035,
            psi_pm: 0.4235,
            pole_pairs: 2,
            inertia: 0.05,
            k_friction: 2.026424e-3,
            k_windage: 8.212786e-8,
            rated_current_rms: 9.0,
        }
    }

    fn controller() -> Controller {
        let m = machine();
        let g = ControllerGains::derive(&m, 500.0, 20.0);
        Controller::new(g, 2.0_f64.sqrt() * m.rated_current_rms, -12.7, 0.05)
    }

    #[test]
    fn equilibrium_outputs_back_emf_feedforward() {
        let m = machine();
        let mut c = controller();
        let omega_m = 100.0;
        let omega_e = 2.0 * omega_m;
        c.speed_step(omega_m, omega_m, 1e-3); // zero error
        let (v_d, v_q) = c.current_step(&m, 0.0, 0.0, omega_e, 1e9, 1e-4);
        assert_eq!(v_d, 0.0);
        assert!((v_q - omega_e * m.psi_pm).abs() < 1e-9, "v_q = {v_q}");
    }

    #[test]
    fn torque_current_clamps_at_rated_peak() {
        let mut c = controller();
        c.speed_step(1000.0, 0.0, 1e-3); // huge error
        assert!((c.i_q_ref - 2.0_f64.sqrt() * 9.0).abs() < 1e-12);
        // and the clamp holds under repeated saturation (no windup blowout)
        for _ in 0..10_000 {
            c.speed_step(1000.0, 0.0, 1e-3);
        }
        assert!((c.i_q_ref - 2.0_f64.sqrt() * 9.0).abs() < 1e-12);
    }

    #[test]
    fn no_weakening_below_available_voltage() {
        let mut c = controller();
        for _ in 0..100 {
            c.dc_link_step(200.0, 3.6, c.n_target as f64 * 3.6, 90, 2e-4);
        }
        assert_eq!(c.i_d_ref, 0.0);
        assert!(!c.field_weakening_active());
        assert_eq!(c.n_target, 56); // ceil(200/3.6)
    }

    #[test]
    fn weakening_activates_on_excess_and_pins_n() {
        let mut c = controller();
        // demand well above 90 * 3.6 = 324 V
        let mut prev = 0.0;
        for _ in 0..2000 {
            c.dc_link_step(400.0, 3.6, c.n_target as f64 * 3.6, 90, 2e-4);
            assert!(c.i_d_ref <= prev + 1e-12, "i_d_ref must fall monotonically");
            prev = c.i_d_ref;
            if c.i_d_ref < 0.0 {
                assert_eq!(c.n_target, 90, "negative flux reference requires max cells");
            }
        }
        assert!(c.field_weakening_active());
        assert!(c.i_d_ref < 0.0);
        assert!(c.i_d_ref >= -12.7, "bounded by configured minimum");
    }

    #[test]
    fn weakening_exits_with_hysteresis_and_resets() {
        let mut c = controller();
        for _ in 0..2000 {
            c.dc_link_step(400.0, 3.6, c.n_target as f64 * 3.6, 90, 2e-4);
        }
        assert!(c.field_weakening_active());
        // drop demand just below the available voltage but inside the band: stays on
        for _ in 0..500 {
            c.dc_link_step(322.0, 3.6, c.n_target as f64 * 3.6, 90, 2e-4);
        }
        assert!(c.field_weakening_active(), "inside hysteresis band weakening persists");
        // drop demand clearly below (1 - 0.05) * 324 = 307.8: unwinds and exits
        for _ in 0..200_000 {
            c.dc_link_step(250.0, 3.6, c.n_target as f64 * 3.6, 90, 2e-4);
        }
        assert!(!c.field_weakening_active());
        assert_eq!(c.i_d_ref, 0.0);
        assert_eq!(c.n_target, 70); // ceil(250/3.6)
    }

    #[test]
    fn flux_reference_never_positive() {
        let mut c = controller();
        for k in 0..5000 {
            let demand = 200.0 + 250.0 * ((k as f64 * 0.01).sin().abs());
            c.dc_link_step(demand, 3.6, c.n_target as f64 * 3.6, 90, 2e-4);
            assert!(c.i_d_ref <= 0.0);
            if c.i_d_ref < 0.0 {
                assert_eq!(c.n_target, 90);
            }
        }
    }
}
