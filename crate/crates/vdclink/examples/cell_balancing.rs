//! Cell balancing under constant-current discharge: the strongest units carry
//! the load while the weakest rest, so the voltage spread collapses. A control
//! run with a frozen selection shows no convergence.
//!
//! ```bash
//! cargo run --release --example cell_balancing
//! ```

use vdclink::config::Config;
use vdclink::sim::run_balancing_scenario;

fn main() {
    let cfg = Config::default();
    println!(
        "{} units, {} inserted, {:.1} A discharge, initial spread {:.0} mV",
        cfg.cmc_units, cfg.balance_n_active, cfg.balance_current_a, cfg.balance_initial_spread_mv
    );

    let balanced = run_balancing_scenario(&cfg, true).expect("balancing run");
    let frozen = run_balancing_scenario(&cfg, false).expect("control run");

    println!("\n{:>7} {:>14} {:>14}", "t[min]", "balanced[mV]", "frozen[mV]");
    for (b, f) in balanced.rows.iter().zip(&frozen.rows).step_by(5) {
        println!("{:>7.0} {:>14.1} {:>14.1}", b.t_s / 60.0, b.spread_mv, f.spread_mv);
    }

    println!(
        "\nbalanced: {:.1} -> {:.1} mV (loaded: {:.1} mV at the end)",
        balanced.initial_spread_mv(),
        balanced.final_spread_mv(),
        balanced.rows.last().unwrap().spread_loaded_mv
    );
    println!(
        "frozen selection: {:.1} -> {:.1} mV",
        frozen.initial_spread_mv(),
        frozen.final_spread_mv()
    );
    let (lo, hi) = (balanced.rows.last().unwrap().soc_min, balanced.rows.last().unwrap().soc_max);
    println!("balanced pack SoC window at the end: {lo:.3} .. {hi:.3}");
}
