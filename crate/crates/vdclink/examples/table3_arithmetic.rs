//! Pure arithmetic on the embedded measurement table: derive the efficiency
//! deltas of the variable-dc-link methods against constant-dc-link PWM, with
//! no simulation involved.
//!
//! ```bash
//! cargo run --example table3_arithmetic
//! ```

use vdclink::losses::reference::{delta_eta_rows, MEASURED, METHODS};

fn main() {
    println!("embedded measurements (dc-link voltage / dc power / ac power):");
    for op in &MEASURED {
        print!("{}:", op.label);
        for m in 0..3 {
            print!(
                "  {} {:.0}V {:.0}W {:.0}W",
                METHODS[m], op.u_dc[m], op.p_el_dc[m], op.p_el_ac[m]
            );
        }
        println!();
    }

    println!("\nderived efficiency deltas vs PWM:");
    println!("{:<5} {:<5} {:>12} {:>16}", "op", "meth", "motor-only", "motor+inverter");
    for r in delta_eta_rows() {
        println!(
            "{:<5} {:<5} {:>11.2}% {:>15.2}%",
            r.op_label,
            r.method,
            100.0 * r.motor_only,
            100.0 * r.motor_inverter
        );
    }
}
