//! Command-line front end: configuration loading, scenario dispatch, CSV emission.
//!
//! Exit codes: 0 on success, 1 for argument/configuration problems, 2 when a
//! solver or scenario fails to converge.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::error::Error;
use crate::losses::reference;
use crate::opp::{solve_angles, solve_angles_all};
use crate::sim;

#[derive(Parser)]
#[command(
    name = "vdclink",
    about = "Traction-drive simulator with a cascaded-multilevel-converter dc link",
    version
)]
struct Cli {
    /// Configuration file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Random seed override (equivalent to --set sim.seed=...).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Configuration overrides, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a switching pattern: writes angles.csv and spectrum.csv.
    SolveAngles {
        /// Pulse count (number of switching angles per quarter period).
        k: usize,
        /// Comma-separated odd harmonic orders to eliminate.
        orders: String,
        /// Also print every distinct solution branch found.
        #[arg(long)]
        all_roots: bool,
    },
    /// Run one operating point under one method and report its loss breakdown.
    RunOp {
        /// Operating point index, 1..=6.
        #[arg(long, default_value_t = 1)]
        op: usize,
        /// Modulation method: PWM, OPWM or OPP.
        #[arg(long, default_value = "OPWM")]
        method: String,
    },
    /// Run the reduced-cell-budget acceleration scenario (OPWM).
    RunScenario,
    /// Run the constant-current balancing scenario.
    Balance {
        /// Also run the control experiment with balancing disabled.
        #[arg(long)]
        control: bool,
    },
    /// Full 6-operating-point, 3-method loss comparison.
    Compare,
    /// Reproduce the efficiency-delta points from the embedded measurement table.
    Table3,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };

    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::SolverFailure { .. } | Error::Scenario(_) | Error::CellDepleted { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn load_config(cli: &Cli) -> crate::Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            Config::parse(&text)?
        }
        None => Config::default(),
    };
    for spec in &cli.overrides {
        cfg.apply_override(spec)?;
    }
    if let Some(seed) = cli.seed {
        cfg.sim_seed = seed;
    }
    Ok(cfg)
}

fn write_out(dir: &Path, name: &str, content: &str) -> crate::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}

fn run(cli: Cli) -> crate::Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::SolveAngles { k, orders, all_roots } => {
            cmd_solve_angles(&cli.out, *k, orders, *all_roots)
        }
        Command::RunOp { op, method } => cmd_run_op(&cli.out, &cfg, *op, method),
        Command::RunScenario => cmd_run_scenario(&cli.out, &cfg),
        Command::Balance { control } => cmd_balance(&cli.out, &cfg, *control),
        Command::Compare => cmd_compare(&cli.out, &cfg),
        Command::Table3 => cmd_table3(),
    }
}

fn cmd_solve_angles(out: &Path, k: usize, orders: &str, all_roots: bool) -> crate::Result<()> {
    let mut set = BTreeSet::new();
    for tok in orders.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let n: u32 = tok
            .parse()
            .map_err(|_| Error::Domain(format!("order '{tok}' is not an integer")))?;
        if !set.insert(n) {
            return Err(Error::Domain(format!("duplicate order {n}")));
        }
    }
    if set.len() != k {
        return Err(Error::Domain(format!(
            "pulse count {k} does not match {} distinct orders",
            set.len()
        )));
    }

    let pattern = solve_angles(&set)?;
    let mut angles_csv = Vec::new();
    pattern.write_angles_csv(&mut angles_csv)?;
    write_out(out, "angles.csv", std::str::from_utf8(&angles_csv).expect("ascii csv"))?;

    let n_max = set.iter().max().copied().unwrap_or(1) + 20;
    let mut spectrum_csv = Vec::new();
    pattern.write_spectrum_csv(&mut spectrum_csv, n_max)?;
    write_out(out, "spectrum.csv", std::str::from_utf8(&spectrum_csv).expect("ascii csv"))?;

    println!("u1_gen = {:.6}", pattern.u1_gen());
    println!("angles_rad = {:?}", pattern.angles());
    println!("worst residual = {:.3e}", pattern.worst_residual());

    if all_roots {
        for (i, root) in solve_angles_all(&set)?.iter().enumerate() {
            println!(
                "root {}: u1_gen {:.6}, angle sum {:.4}, angles {:?}",
                i,
                root.u1_gen(),
                root.angles().iter().sum::<f64>(),
                root.angles()
            );
        }
    }

    if pattern.worst_residual() >= 1e-10 {
        return Err(Error::SolverFailure { restarts: 0, best_residual: pattern.worst_residual() });
    }
    Ok(())
}

fn cmd_run_op(out: &Path, cfg: &Config, op_index: usize, method: &str) -> crate::Result<()> {
    let ops = sim::table2_operating_points(cfg.op_torque_nm);
    let op = ops
        .get(op_index.wrapping_sub(1))
        .ok_or_else(|| Error::Domain(format!("operating point {op_index} out of 1..=6")))?;
    let method = method.to_uppercase();

    // a fixed iron coefficient is required for a standalone breakdown; calibrate
    // against the measured OP1 gap when the config leaves it on auto
    let k_e = match cfg.losses_k_e {
        Some(k) => k,
        None => {
            let (pwm, opwm) = rayon::join(
                || sim::run_operating_point(cfg, &ops[0], "PWM"),
                || sim::run_operating_point(cfg, &ops[0], "OPWM"),
            );
            sim::calibrate_k_e(&pwm?, &opwm?, &cfg.machine_params(), 15.0)?
        }
    };
    let ctx = sim::LossContext::from_config(cfg, k_e);
    let tr = sim::run_operating_point(cfg, op, &method)?;
    let b = sim::evaluate_losses(&tr, op, &method, &ctx)?;

    let mut csv = String::from(crate::losses::LossBreakdown::CSV_HEADER);
    csv.push('\n');
    csv.push_str(&b.csv_row(0.0, 0.0, 0.0));
    csv.push('\n');
    let name = format!("op{}_{}.csv", op_index, method.to_lowercase());
    let path = write_out(out, &name, &csv)?;

    println!("{} {}: P_el_dc {:.1} W, P_el_ac {:.1} W, P_inv {:.1} W, P_mot_fh {:.1} W", op.label, method, b.p_el_dc, b.p_el_ac, b.p_inv, b.p_mot_fh);
    println!("U_1rms {:.1} V, I_1rms {:.2} A, cos_phi {:.4}, U_dc {:.1} V, I_dc {:.2} A", b.u_1rms, b.i_1rms, b.cos_phi, b.u_dc_mean, b.i_dc_mean);
    println!("k_e = {k_e:.6e} W/V^2");
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_run_scenario(out: &Path, cfg: &Config) -> crate::Result<()> {
    let tr = sim::run_drive_scenario(cfg)?;
    let path = write_out(out, "drive_scenario.csv", &tr.to_csv())?;
    let last = tr.rows.last().expect("non-empty scenario");
    let n_max_seen = tr.rows.iter().map(|r| r.n).max().unwrap_or(0);
    println!(
        "drive scenario: {:.2} s, final speed {:.0} rpm, max N {}, final U_dc {:.1} V",
        last.t_s, last.omega_rpm, n_max_seen, last.udc_v
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_balance(out: &Path, cfg: &Config, control: bool) -> crate::Result<()> {
    let tr = sim::run_balancing_scenario(cfg, true)?;
    let path = write_out(out, "balance.csv", &tr.to_csv())?;
    println!(
        "balancing: spread {:.1} -> {:.1} mV over {:.0} min (loaded final {:.1} mV)",
        tr.initial_spread_mv(),
        tr.final_spread_mv(),
        cfg.balance_minutes,
        tr.rows.last().map_or(0.0, |r| r.spread_loaded_mv)
    );
    println!("wrote {}", path.display());
    if control {
        let ctrl_tr = sim::run_balancing_scenario(cfg, false)?;
        let path = write_out(out, "balance_control.csv", &ctrl_tr.to_csv())?;
        println!(
            "control run (balancing disabled): spread {:.1} -> {:.1} mV",
            ctrl_tr.initial_spread_mv(),
            ctrl_tr.final_spread_mv()
        );
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_compare(out: &Path, cfg: &Config) -> crate::Result<()> {
    let report = sim::compare_methods(cfg)?;
    write_out(out, "loss_report.csv", &report.loss_report_csv())?;
    write_out(out, "delta_eta.csv", &report.delta_eta_csv())?;
    write_out(out, "report.txt", &report.report_text())?;
    print!("{}", report.report_text());
    println!("wrote loss_report.csv, delta_eta.csv, report.txt in {}", out.display());
    Ok(())
}

fn cmd_table3() -> crate::Result<()> {
    println!("efficiency deltas derived from the embedded measurement table:");
    println!("{:<5} {:<5} {:>12} {:>14}", "op", "meth", "motor-only", "motor+inverter");
    for r in reference::delta_eta_rows() {
        println!(
            "{:<5} {:<5} {:>11.2}% {:>13.2}%",
            r.op_label,
            r.method,
            100.0 * r.motor_only,
            100.0 * r.motor_inverter
        );
    }
    Ok(())
}
