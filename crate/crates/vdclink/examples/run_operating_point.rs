//! Drive the machine to one published operating point under a chosen modulation
//! method and print the full loss breakdown.
//!
//! ```bash
//! cargo run --release --example run_operating_point
//! ```

use vdclink::config::Config;
use vdclink::sim::{self, table2_operating_points, LossContext};

fn main() {
    let mut cfg = Config::default();
    // a fixed iron coefficient keeps this standalone example fast; `compare`
    // calibrates it against the measured OP1 gap instead
    cfg.losses_k_e = Some(2e-3);
    let k_e = cfg.losses_k_e.unwrap();

    let ops = table2_operating_points(cfg.op_torque_nm);
    let op = &ops[0];
    println!("operating point {}: {} rpm, {} N m", op.label, op.speed_rpm, op.torque_nm);

    for method in ["PWM", "OPWM", "OPP"] {
        let traces = sim::run_operating_point(&cfg, op, method).expect("steady state reached");
        let ctx = LossContext::from_config(&cfg, k_e);
        let b = sim::evaluate_losses(&traces, op, method, &ctx).expect("loss evaluation");

        println!("\n=== {method} ===");
        println!("  U_dc mean   {:>8.1} V   I_dc mean {:>6.2} A", b.u_dc_mean, b.i_dc_mean);
        println!("  U_1rms      {:>8.1} V   I_1rms    {:>6.2} A   cos_phi {:.4}", b.u_1rms, b.i_1rms, b.cos_phi);
        println!("  P_el_dc     {:>8.1} W", b.p_el_dc);
        println!("  P_el_ac     {:>8.1} W", b.p_el_ac);
        println!("  P_inv       {:>8.1} W", b.p_inv);
        println!("  P_mot_f1    {:>8.1} W", b.p_mot_f1);
        println!("  P_mot_fh    {:>8.1} W", b.p_mot_fh);
        println!("  P_mech      {:>8.1} W", b.p_mech);
        println!("  P_friction  {:>8.2} W   P_windage {:>6.2} W", b.p_friction, b.p_windage);
        println!("  P_mosfet    {:>8.2} W   P_bat     {:>6.2} W", b.p_mosfet, b.p_bat);
        println!("  closure ac/dc: {:.2e} / {:.2e}", b.closure_eq_ac, b.closure_eq_dc);
    }
}
