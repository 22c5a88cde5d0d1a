//! Flat, line-oriented key=value configuration with section prefixes.
//!
//! Every key is listed in [`Config::KEYS`] with its unit and default; unknown keys
//! are rejected. `dump` emits the full effective configuration in schema order, so
//! dump-then-load reproduces the configuration exactly. The same format is used by
//! `--set key=value` command-line overrides.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::cmc::{CellParams, MosfetParams, OcvCurve};
use crate::control::{Controller, ControllerGains};
use crate::error::{Error, Result};
use crate::losses::IgbtParams;
use crate::machine::MachineParams;

/// Complete simulator configuration. Field names mirror the config keys.
#[derive(Debug, Clone)]
pub struct Config {
    // sim
    pub sim_dt_s: f64,
    pub sim_window_periods: usize,
    pub sim_max_settle_periods: usize,
    pub sim_seed: u64,
    // machine
    pub machine_rs_ohm: f64,
    pub machine_ld_h: f64,
    pub machine_lq_h: f64,
    pub machine_psi_pm_wb: f64,
    pub machine_pole_pairs: u32,
    pub machine_inertia_kgm2: f64,
    pub machine_k_friction: f64,
    pub machine_k_windage: f64,
    pub machine_rated_current_arms: f64,
    // cmc
    pub cmc_units: usize,
    pub cmc_n_max: usize,
    pub cmc_n_parallel: u32,
    pub cmc_cell_capacity_ah: f64,
    pub cmc_cell_r_dc_ohm: f64,
    pub cmc_initial_soc: f64,
    pub cmc_balance_deadband_v: f64,
    // mosfet
    pub mosfet_r_on_ohm: f64,
    pub mosfet_t_switch_s: f64,
    pub mosfet_v_cell_v: f64,
    // control
    pub control_current_bw_hz: f64,
    pub control_speed_bw_hz: f64,
    pub control_fw_kp: f64,
    pub control_fw_ki: f64,
    pub control_fw_hysteresis: f64,
    pub control_id_min_a: f64,
    pub control_vbar_filter_s: f64,
    pub control_udc_demand_filter_s: f64,
    // modulation
    pub modulation_carrier_hz: f64,
    pub modulation_opwm_utilization: f64,
    pub modulation_opp_orders: String,
    // igbt
    pub igbt_vce0_v: f64,
    pub igbt_rce_ohm: f64,
    pub igbt_vf0_v: f64,
    pub igbt_rf_ohm: f64,
    pub igbt_esw_j: f64,
    pub igbt_i_ref_a: f64,
    pub igbt_u_ref_v: f64,
    // losses
    pub losses_k_e: Option<f64>,
    // operating-point sweep
    pub op_torque_nm: f64,
    // drive scenario
    pub drive_n_max: usize,
    pub drive_speed_final_rpm: f64,
    pub drive_ramp_s: f64,
    pub drive_load_torque_nm: f64,
    pub drive_initial_soc: f64,
    pub drive_duration_s: f64,
    // balancing scenario
    pub balance_current_a: f64,
    pub balance_minutes: f64,
    pub balance_n_active: usize,
    pub balance_n_max: usize,
    pub balance_initial_spread_mv: f64,
    pub balance_mean_soc: f64,
    pub balance_dt_s: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            sim_dt_s: 1e-6,
            sim_window_periods: 5,
            sim_max_settle_periods: 60,
            sim_seed: 0,
            machine_rs_ohm: 0.8,
            machine_ld_h: 0.0035,
            machine_lq_h: 0.0035,
            machine_psi_pm_wb: 0.4235,
            machine_pole_pairs: 2,
            machine_inertia_kgm2: 0.05,
            machine_k_friction: 2.026424e-3,
            machine_k_windage: 8.212786e-8,
            machine_rated_current_arms: 9.0,
            cmc_units: 100,
            cmc_n_max: 90,
            cmc_n_parallel: 2,
            cmc_cell_capacity_ah: 5.2,
            cmc_cell_r_dc_ohm: 0.040,
            cmc_initial_soc: 0.6,
            cmc_balance_deadband_v: 0.002,
            mosfet_r_on_ohm: 0.85e-3,
            mosfet_t_switch_s: 100e-9,
            mosfet_v_cell_v: 3.6,
            control_current_bw_hz: 500.0,
            control_speed_bw_hz: 20.0,
            control_fw_kp: 0.05,
            control_fw_ki: 20.0,
            control_fw_hysteresis: 0.05,
            control_id_min_a: -12.7279,
            control_vbar_filter_s: 0.010,
            control_udc_demand_filter_s: 0.005,
            modulation_carrier_hz: 10_000.0,
            modulation_opwm_utilization: 0.9,
            modulation_opp_orders: "5,7,11,13,17,19,23,25,29".into(),
            igbt_vce0_v: 0.9,
            igbt_rce_ohm: 0.018,
            igbt_vf0_v: 1.0,
            igbt_rf_ohm: 0.015,
            igbt_esw_j: 7e-3,
            igbt_i_ref_a: 50.0,
            igbt_u_ref_v: 300.0,
            losses_k_e: None,
            op_torque_nm: 11.5,
            drive_n_max: 50,
            drive_speed_final_rpm: 1400.0,
            drive_ramp_s: 2.0,
            drive_load_torque_nm: 2.0,
            drive_initial_soc: 0.8,
            drive_duration_s: 2.6,
            balance_current_a: 4.2,
            balance_minutes: 50.0,
            balance_n_active: 60,
            balance_n_max: 90,
            balance_initial_spread_mv: 130.0,
            balance_mean_soc: 0.65,
            balance_dt_s: 0.01,
        }
    }
}

macro_rules! config_keys {
    ($($key:literal => $field:ident : $kind:tt),+ $(,)?) => {
        impl Config {
            /// Every recognized key, in canonical dump order.
            pub const KEYS: &'static [&'static str] = &[$($key),+];

            /// Sets one key from its textual value.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => config_keys!(@parse self, $field, $kind, key, value)),+,
                    _ => Err(Error::Config(format!("unknown config key '{key}'"))),
                }
            }

            /// Textual value of one key.
            pub fn get(&self, key: &str) -> Result<String> {
                match key {
                    $($key => Ok(config_keys!(@print self, $field, $kind))),+,
                    _ => Err(Error::Config(format!("unknown config key '{key}'"))),
                }
            }
        }
    };
    (@parse $self:ident, $field:ident, f64, $key:ident, $value:ident) => {{
        $self.$field = $value.parse::<f64>().map_err(|_| {
            Error::Config(format!("key '{}': expected a number, got '{}'", $key, $value))
        })?;
        Ok(())
    }};
    (@parse $self:ident, $field:ident, usize, $key:ident, $value:ident) => {{
        $self.$field = $value.parse::<usize>().map_err(|_| {
            Error::Config(format!("key '{}': expected an integer, got '{}'", $key, $value))
        })?;
        Ok(())
    }};
    (@parse $self:ident, $field:ident, u32, $key:ident, $value:ident) => {{
        $self.$field = $value.parse::<u32>().map_err(|_| {
            Error::Config(format!("key '{}': expected an integer, got '{}'", $key, $value))
        })?;
        Ok(())
    }};
    (@parse $self:ident, $field:ident, u64, $key:ident, $value:ident) => {{
        $self.$field = $value.parse::<u64>().map_err(|_| {
            Error::Config(format!("key '{}': expected an integer, got '{}'", $key, $value))
        })?;
        Ok(())
    }};
    (@parse $self:ident, $field:ident, string, $key:ident, $value:ident) => {{
        $self.$field = $value.to_string();
        Ok(())
    }};
    (@parse $self:ident, $field:ident, opt_f64, $key:ident, $value:ident) => {{
        if $value == "auto" {
            $self.$field = None;
        } else {
            $self.$field = Some($value.parse::<f64>().map_err(|_| {
                Error::Config(format!("key '{}': expected a number or 'auto', got '{}'", $key, $value))
            })?);
        }
        Ok(())
    }};
    (@print $self:ident, $field:ident, string) => { $self.$field.clone() };
    (@print $self:ident, $field:ident, opt_f64) => {
        match $self.$field {
            Some(v) => format!("{v}"),
            None => "auto".to_string(),
        }
    };
    (@print $self:ident, $field:ident, $kind:tt) => { format!("{}", $self.$field) };
}

config_keys! {
    "sim.dt_s" => sim_dt_s: f64,
    "sim.window_periods" => sim_window_periods: usize,
    "sim.max_settle_periods" => sim_max_settle_periods: usize,
    "sim.seed" => sim_seed: u64,
    "machine.rs_ohm" => machine_rs_ohm: f64,
    "machine.ld_h" => machine_ld_h: f64,
    "machine.lq_h" => machine_lq_h: f64,
    "machine.psi_pm_wb" => machine_psi_pm_wb: f64,
    "machine.pole_pairs" => machine_pole_pairs: u32,
    "machine.inertia_kgm2" => machine_inertia_kgm2: f64,
    "machine.k_friction" => machine_k_friction: f64,
    "machine.k_windage" => machine_k_windage: f64,
    "machine.rated_current_arms" => machine_rated_current_arms: f64,
    "cmc.units" => cmc_units: usize,
    "cmc.n_max" => cmc_n_max: usize,
    "cmc.n_parallel" => cmc_n_parallel: u32,
    "cmc.cell_capacity_ah" => cmc_cell_capacity_ah: f64,
    "cmc.cell_r_dc_ohm" => cmc_cell_r_dc_ohm: f64,
    "cmc.initial_soc" => cmc_initial_soc: f64,
    "cmc.balance_deadband_v" => cmc_balance_deadband_v: f64,
    "mosfet.r_on_ohm" => mosfet_r_on_ohm: f64,
    "mosfet.t_switch_s" => mosfet_t_switch_s: f64,
    "mosfet.v_cell_v" => mosfet_v_cell_v: f64,
    "control.current_bw_hz" => control_current_bw_hz: f64,
    "control.speed_bw_hz" => control_speed_bw_hz: f64,
    "control.fw_kp" => control_fw_kp: f64,
    "control.fw_ki" => control_fw_ki: f64,
    "control.fw_hysteresis" => control_fw_hysteresis: f64,
    "control.id_min_a" => control_id_min_a: f64,
    "control.vbar_filter_s" => control_vbar_filter_s: f64,
    "control.udc_demand_filter_s" => control_udc_demand_filter_s: f64,
    "modulation.carrier_hz" => modulation_carrier_hz: f64,
    "modulation.opwm_utilization" => modulation_opwm_utilization: f64,
    "modulation.opp_orders" => modulation_opp_orders: string,
    "igbt.vce0_v" => igbt_vce0_v: f64,
    "igbt.rce_ohm" => igbt_rce_ohm: f64,
    "igbt.vf0_v" => igbt_vf0_v: f64,
    "igbt.rf_ohm" => igbt_rf_ohm: f64,
    "igbt.esw_j" => igbt_esw_j: f64,
    "igbt.i_ref_a" => igbt_i_ref_a: f64,
    "igbt.u_ref_v" => igbt_u_ref_v: f64,
    "losses.k_e" => losses_k_e: opt_f64,
    "op.torque_nm" => op_torque_nm: f64,
    "drive.n_max" => drive_n_max: usize,
    "drive.speed_final_rpm" => drive_speed_final_rpm: f64,
    "drive.ramp_s" => drive_ramp_s: f64,
    "drive.load_torque_nm" => drive_load_torque_nm: f64,
    "drive.initial_soc" => drive_initial_soc: f64,
    "drive.duration_s" => drive_duration_s: f64,
    "balance.current_a" => balance_current_a: f64,
    "balance.minutes" => balance_minutes: f64,
    "balance.n_active" => balance_n_active: usize,
    "balance.n_max" => balance_n_max: usize,
    "balance.initial_spread_mv" => balance_initial_spread_mv: f64,
    "balance.mean_soc" => balance_mean_soc: f64,
    "balance.dt_s" => balance_dt_s: f64,
}

impl Config {
    /// Parses a config file body (any number of `key = value` lines, `#` comments).
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            self.set(key, value.trim())?;
        }
        Ok(())
    }

    /// Applies one `key=value` override (the `--set` form).
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let Some((key, value)) = spec.split_once('=') else {
            return Err(Error::Config(format!("override '{spec}' is not of the form key=value")));
        };
        self.set(key.trim(), value.trim())
    }

    /// Emits the complete effective configuration in canonical order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let value = self.get(key).expect("every schema key is gettable");
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    pub fn machine_params(&self) -> MachineParams {
        MachineParams {
            r_s: self.machine_rs_ohm,
            l_d: self.machine_ld_h,
            l_q: self.machine_lq_h,
            psi_pm: self.machine_psi_pm_wb,
            pole_pairs: self.machine_pole_pairs,
            inertia: self.machine_inertia_kgm2,
            k_friction: self.machine_k_friction,
            k_windage: self.machine_k_windage,
            rated_current_rms: self.machine_rated_current_arms,
        }
    }

    pub fn cell_params(&self) -> CellParams {
        CellParams {
            capacity_ah: self.cmc_cell_capacity_ah * f64::from(self.cmc_n_parallel),
            r_dc: self.cmc_cell_r_dc_ohm / f64::from(self.cmc_n_parallel),
            ocv: OcvCurve::default_nmc(),
        }
    }

    pub fn mosfet_params(&self) -> MosfetParams {
        MosfetParams {
            r_on: self.mosfet_r_on_ohm,
            t_switch: self.mosfet_t_switch_s,
            v_cell: self.mosfet_v_cell_v,
            devices_conducting: self.cmc_units,
        }
    }

    pub fn igbt_params(&self) -> IgbtParams {
        IgbtParams {
            v_ce0: self.igbt_vce0_v,
            r_ce: self.igbt_rce_ohm,
            v_f0: self.igbt_vf0_v,
            r_f: self.igbt_rf_ohm,
            e_switch: self.igbt_esw_j,
            i_ref: self.igbt_i_ref_a,
            u_ref: self.igbt_u_ref_v,
        }
    }

    pub fn controller(&self) -> Controller {
        let machine = self.machine_params();
        let mut gains =
            ControllerGains::derive(&machine, self.control_current_bw_hz, self.control_speed_bw_hz);
        gains.kp_fw = self.control_fw_kp;
        gains.ki_fw = self.control_fw_ki;
        Controller::new(
            gains,
            2.0_f64.sqrt() * machine.rated_current_rms,
            self.control_id_min_a,
            self.control_fw_hysteresis,
        )
    }

    /// Harmonic orders for the OPP pattern from the configured list.
    pub fn opp_orders(&self) -> Result<BTreeSet<u32>> {
        let mut orders = BTreeSet::new();
        for tok in self.modulation_opp_orders.split(',') {
            let tok = tok.trim();
            if tok.is_empty() {
                continue;
            }
            let n: u32 = tok.parse().map_err(|_| {
                Error::Config(format!("modulation.opp_orders: '{tok}' is not an integer"))
            })?;
            orders.insert(n);
        }
        if orders.is_empty() {
            return Err(Error::Config("modulation.opp_orders is empty".into()));
        }
        Ok(orders)
    }
}
