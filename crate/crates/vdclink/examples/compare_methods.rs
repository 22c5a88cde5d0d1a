//! The full study: all six operating points under PWM, OPWM and OPP, with the
//! iron-harmonic coefficient calibrated once at OP1, then efficiency deltas at
//! four accumulation levels. Writes `loss_report.csv` and `delta_eta.csv`.
//!
//! Takes on the order of half a minute; the 18 runs execute in parallel.
//!
//! ```bash
//! cargo run --release --example compare_methods
//! ```

use std::fs;
use std::time::Instant;

use vdclink::config::Config;
use vdclink::sim::compare_methods;

fn main() {
    let cfg = Config::default();
    let t0 = Instant::now();
    let report = compare_methods(&cfg).expect("sweep converges");
    println!("18 runs in {:.1?}\n", t0.elapsed());

    print!("{}", report.report_text());

    fs::write("loss_report.csv", report.loss_report_csv()).expect("write loss report");
    fs::write("delta_eta.csv", report.delta_eta_csv()).expect("write delta table");
    println!("\nwrote loss_report.csv and delta_eta.csv");
}
