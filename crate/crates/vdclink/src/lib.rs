//! Simulation library for a battery-electric traction drive whose dc link is
//! synthesized by a 100-unit cascaded multilevel converter (CMC).
//!
//! The crate models the full chain needed to compare traction losses between a
//! conventional constant-dc-link PWM drive and two variable-dc-link methods:
//!
//! - [`opp`] — selective-harmonic-elimination switching patterns (Newton solver,
//!   waveform synthesis, analytic spectra)
//! - [`modulation`] — PWM / OPWM / OPP inverter back-ends and the dc-link voltage law
//! - [`machine`] — PMSM plant in the rotor dq frame plus the mechanical subsystem
//! - [`cmc`] — per-cell converter model: series selection, balancing, MOSFET and
//!   battery losses
//! - [`control`] — field-oriented control with cell-count command and field weakening
//! - [`losses`] — post-hoc loss decomposition and efficiency-delta arithmetic
//! - [`analysis`] — integer-period FFT spectra of recorded traces
//! - [`sim`] — fixed-step time-domain engine and the scenario library
//! - [`config`] — flat key=value configuration with a documented schema
//!
//! The `examples/` directory contains one runnable example per capability; the
//! `vdclink` binary exposes the same scenarios as subcommands.

pub mod analysis;
pub mod cli;
pub mod cmc;
pub mod config;
pub mod control;
pub mod error;
pub mod losses;
pub mod machine;
pub mod modulation;
pub mod opp;
pub mod sim;

pub use error::{Error, Result};
