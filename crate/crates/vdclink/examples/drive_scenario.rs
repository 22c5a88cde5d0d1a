//! Acceleration run on a reduced 50-unit cell budget: the dc link tracks the
//! speed ramp until the string saturates, then field weakening takes over.
//! Writes the 5 kHz controller telemetry to `drive_scenario.csv`.
//!
//! ```bash
//! cargo run --release --example drive_scenario
//! ```

use std::fs;

use vdclink::config::Config;
use vdclink::sim::run_drive_scenario;

fn main() {
    let cfg = Config::default();
    let trace = run_drive_scenario(&cfg).expect("scenario runs");

    fs::write("drive_scenario.csv", trace.to_csv()).expect("write telemetry");

    // Where does the dc link saturate and weakening begin?
    let sat = trace.rows.iter().find(|r| r.n == cfg.drive_n_max);
    let fw = trace.rows.iter().find(|r| r.id_ref < 0.0);
    if let Some(r) = sat {
        println!("N reaches {} at t = {:.2} s, {:.0} rpm", r.n, r.t_s, r.omega_rpm);
    }
    if let Some(r) = fw {
        println!("field weakening engages at t = {:.2} s, {:.0} rpm", r.t_s, r.omega_rpm);
    }

    // A coarse look at the trajectory.
    println!("\n{:>6} {:>9} {:>4} {:>8} {:>8} {:>8}", "t[s]", "rpm", "N", "Udc[V]", "id[A]", "iq[A]");
    for r in trace.rows.iter().step_by(trace.rows.len() / 24) {
        println!(
            "{:>6.2} {:>9.0} {:>4} {:>8.1} {:>8.2} {:>8.2}",
            r.t_s, r.omega_rpm, r.n, r.udc_v, r.id_a, r.iq_a
        );
    }
    let last = trace.rows.last().unwrap();
    println!(
        "\nfinal: {:.0} rpm at U_dc {:.1} V with N = {} (telemetry in drive_scenario.csv)",
        last.omega_rpm, last.udc_v, last.n
    );
}
