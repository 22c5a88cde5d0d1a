//! PMSM plant model in the rotor dq frame plus the mechanical subsystem.
//!
//! The electrical model is the standard nonsalient dq machine (iron treated as
//! loss-less; all iron-related losses are accounted post hoc by [`crate::losses`]).
//! The mechanical load torque is exogenous; friction torque grows linearly with
//! speed and windage torque with its cube.
//!
//! Transforms are amplitude-invariant, so `P = 1.5 * (v_d*i_d + v_q*i_q)`.

use std::f64::consts::PI;

/// Electrical and mechanical constants of the test machine.
#[derive(Debug, Clone, Copy)]
pub struct MachineParams {
    /// Stator resistance, ohm.
    pub r_s: f64,
    /// d-axis inductance, H.
    pub l_d: f64,
    /// q-axis inductance, H.
    pub l_q: f64,
    /// Permanent-magnet flux linkage, Wb.
    pub psi_pm: f64,
    /// Pole pairs.
    pub pole_pairs: u32,
    /// Rotor inertia, kg m^2.
    pub inertia: f64,
    /// Friction coefficient, N m s/rad (torque k_f * omega).
    pub k_friction: f64,
    /// Windage coefficient, N m s^3/rad^3 (torque k_w * omega^3).
    pub k_windage: f64,
    /// Rated phase current (rms), A.
    pub rated_current_rms: f64,
}

impl MachineParams {
    /// Torque constant `1.5 * p * psi_pm` for the nonsalient machine, N m / A.
    pub fn torque_constant(&self) -> f64 {
        1.5 * f64::from(self.pole_pairs) * self.psi_pm
    }

    /// Friction plus windage torque at mechanical speed `omega_m`, N m.
    pub fn drag_torque(&self, omega_m: f64) -> f64 {
        self.k_friction * omega_m + self.k_windage * omega_m.powi(3)
    }
}

/// Instantaneous machine state.
#[derive(Debug, Clone, Copy, Default)]
pub struct MachineState {
    /// d-axis stator current, A.
    pub i_d: f64,
    /// q-axis stator current, A.
    pub i_q: f64,
    /// Electrical angle of the rotor d-axis, rad, wrapped to [0, 2pi).
    pub gamma: f64,
    /// Mechanical speed, rad/s.
    pub omega_m: f64,
    /// Exogenous load torque at the shaft, N m.
    pub load_torque: f64,
}

/// Time derivatives of the integrable state variables.
#[derive(Debug, Clone, Copy)]
pub struct Derivatives {
    pub di_d: f64,
    pub di_q: f64,
    pub dgamma: f64,
    pub domega_m: f64,
}

/// Electromagnetic torque `1.5 * p * (psi_pm * i_q + (L_d - L_q) * i_d * i_q)`.
pub fn electromagnetic_torque(state: &MachineState, params: &MachineParams) -> f64 {
    1.5 * f64::from(params.pole_pairs)
        * (params.psi_pm * state.i_q + (params.l_d - params.l_q) * state.i_d * state.i_q)
}

/// dq-frame machine equations with applied dq voltages.
pub fn machine_derivatives(
    state: &MachineState,
    params: &MachineParams,
    v_d: f64,
    v_q: f64,
) -> Derivatives {
    let p = f64::from(params.pole_pairs);
    let omega_e = p * state.omega_m;
    let di_d = (v_d - params.r_s * state.i_d + omega_e * params.l_q * state.i_q) / params.l_d;
    let di_q =
        (v_q - params.r_s * state.i_q - omega_e * (params.l_d * state.i_d + params.psi_pm))
            / params.l_q;
    let t_e = electromagnetic_torque(state, params);
    let domega_m =
        (t_e - state.load_torque - params.drag_torque(state.omega_m)) / params.inertia;
    Derivatives { di_d, di_q, dgamma: omega_e, domega_m }
}

/// Amplitude-invariant Park transform from phase quantities at rotor angle `gamma`.
/// Zero-sequence content is rejected.
pub fn abc_to_dq(v_a: f64, v_b: f64, v_c: f64, gamma: f64) -> (f64, f64) {
    let b = gamma - 2.0 * PI / 3.0;
    let c = gamma + 2.0 * PI / 3.0;
    let d = 2.0 / 3.0 * (v_a * gamma.cos() + v_b * b.cos() + v_c * c.cos());
    let q = -2.0 / 3.0 * (v_a * gamma.sin() + v_b * b.sin() + v_c * c.sin());
    (d, q)
}

/// Inverse of [`abc_to_dq`] for balanced sets.
pub fn dq_to_abc(v_d: f64, v_q: f64, gamma: f64) -> (f64, f64, f64) {
    let b = gamma - 2.0 * PI / 3.0;
    let c = gamma + 2.0 * PI / 3.0;
    (
        v_d * gamma.cos() - v_q * gamma.sin(),
        v_d * b.cos() - v_q * b.sin(),
        v_d * c.cos() - v_q * c.sin(),
    )
}

/// One fixed-step RK4 step under zero-order-hold phase voltages.
///
/// The Park transform is re-evaluated at each stage's rotor angle, so the held
/// quantity is the abc pole excitation, not its dq image.
pub fn step_rk4(
    state: &MachineState,
    params: &MachineParams,
    v_abc: [f64; 3],
    dt: f64,
) -> MachineState {
    let eval = |s: &MachineState| {
        let (v_d, v_q) = abc_to_dq(v_abc[0], v_abc[1], v_abc[2], s.gamma);
        machine_derivatives(s, params, v_d, v_q)
    };
    let advance = |s: &MachineState, k: &Derivatives, h: f64| MachineState {
        i_d: s.i_d + h * k.di_d,
        i_q: s.i_q + h * k.di_q,
        gamma: s.gamma + h * k.dgamma,
        omega_m: s.omega_m + h * k.domega_m,
        load_torque: s.load_torque,
    };

    let k1 = eval(state);
    let s2 = advance(state, &k1, dt / 2.0);
    let k2 = eval(&s2);
    let s3 = advance(state, &k2, dt / 2.0);
    let k3 = eval(&s3);
    let s4 = advance(state, &k3, dt);
    let k4 = eval(&s4);

    let mut next = MachineState {
        i_d: state.i_d + dt / 6.0 * (k1.di_d + 2.0 * k2.di_d + 2.0 * k3.di_d + k4.di_d),
        i_q: state.i_q + dt / 6.0 * (k1.di_q + 2.0 * k2.di_q + 2.0 * k3.di_q + k4.di_q),
        gamma: state.gamma
            + dt / 6.0 * (k1.dgamma + 2.0 * k2.dgamma + 2.0 * k3.dgamma + k4.dgamma),
        omega_m: state.omega_m
            + dt / 6.0 * (k1.domega_m + 2.0 * k2.domega_m + 2.0 * k3.domega_m + k4.domega_m),
        load_torque: state.load_torque,
    };
    next.gamma = next.gamma.rem_euclid(2.0 * PI);
    next
}
