//! Cascaded multilevel converter: 100 switchable battery units in series.
//!
//! Each unit holds a parallel pair of cells behind a half-bridge, so the unit is
//! either inserted into the dc link or bypassed. The dc-link voltage is the sum of
//! the inserted units' terminal voltages. Selecting which units are inserted is
//! also the cell-balancing actuator: while fewer than the maximum number of units
//! is needed, the weakest cells can rest.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Open-circuit voltage as a monotone piecewise-linear function of state of charge.
#[derive(Debug, Clone)]
pub struct OcvCurve {
    points: Vec<(f64, f64)>,
}

impl OcvCurve {
    /// Typical NMC-shaped default: 3.0 V empty, 3.6 V at half, 4.2 V full.
    pub fn default_nmc() -> Self {
        Self { points: vec![(0.0, 3.0), (0.5, 3.6), (1.0, 4.2)] }
    }

    pub fn from_table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("OCV table needs at least two points".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 || w[1].1 <= w[0].1 {
                return Err(Error::Domain("OCV table must be strictly increasing".into()));
            }
        }
        Ok(Self { points })
    }

    /// Linear interpolation, clamped at the table ends.
    pub fn voltage(&self, soc: f64) -> f64 {
        let pts = &self.points;
        if soc <= pts[0].0 {
            return pts[0].1;
        }
        if soc >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        for w in pts.windows(2) {
            if soc <= w[1].0 {
                let f = (soc - w[0].0) / (w[1].0 - w[0].0);
                return w[0].1 + f * (w[1].1 - w[0].1);
            }
        }
        unreachable!("soc bracketed above");
    }
}

/// Per-unit electrical constants shared by all units of the converter.
#[derive(Debug, Clone)]
pub struct CellParams {
    /// Capacity of one unit (parallel cells combined), Ah.
    pub capacity_ah: f64,
    /// Equivalent dc resistance of one unit (cell resistance / parallel count), ohm.
    pub r_dc: f64,
    pub ocv: OcvCurve,
}

impl CellParams {
    /// Prototype unit: two 5.2 Ah cells of 40 mOhm in parallel.
    pub fn prototype() -> Self {
        Self { capacity_ah: 10.4, r_dc: 0.020, ocv: OcvCurve::default_nmc() }
    }
}

/// MOSFET constants of the half-bridge switches.
#[derive(Debug, Clone, Copy)]
pub struct MosfetParams {
    /// On-state resistance per device, ohm.
    pub r_on: f64,
    /// Combined rise plus fall time, s.
    pub t_switch: f64,
    /// Switching voltage (one cell terminal), V.
    pub v_cell: f64,
    /// Devices in conduction regardless of how many units are inserted.
    pub devices_conducting: usize,
}

impl Default for MosfetParams {
    fn default() -> Self {
        Self { r_on: 0.85e-3, t_switch: 100e-9, v_cell: 3.6, devices_conducting: 100 }
    }
}

/// One switchable battery unit.
#[derive(Debug, Clone, Copy)]
pub struct CellUnit {
    /// State of charge, fraction of capacity.
    pub soc: f64,
    pub connected: bool,
    /// Coulombs removed so far, Ah (bookkeeping for conservation checks).
    pub ah_removed: f64,
}

/// The converter: unit states plus the dc-side operating point.
#[derive(Debug, Clone)]
pub struct Cmc {
    pub units: Vec<CellUnit>,
    pub n_max: usize,
    pub params: CellParams,
    /// dc-link current used for the resistive terminal-voltage drop, A.
    pub i_dc: f64,
    /// Cumulative charge drawn through the dc link, Ah (sum over inserted units).
    pub ah_drawn_total: f64,
    /// Connect/disconnect toggles since construction (MOSFET switching events).
    pub switch_events: u64,
}

impl Cmc {
    pub fn new(unit_count: usize, n_max: usize, initial_soc: f64, params: CellParams) -> Self {
        assert!(n_max <= unit_count);
        Self {
            units: vec![CellUnit { soc: initial_soc, connected: false, ah_removed: 0.0 }; unit_count],
            n_max,
            params,
            i_dc: 0.0,
            ah_drawn_total: 0.0,
            switch_events: 0,
        }
    }

    /// Spreads the initial SoCs so the open-circuit voltage spread equals
    /// `spread_mv` exactly (sample standard deviation, mV). Deterministic in `seed`.
    pub fn set_soc_spread(&mut self, mean_soc: f64, spread_mv: f64, seed: u64) {
        let n = self.units.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Truncated standard normals via Box-Muller, bounded to keep SoC in range.
        let mut z: Vec<f64> = Vec::with_capacity(n);
        while z.len() < n {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let v = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            if v.abs() <= 2.5 {
                z.push(v);
            }
        }
        let mean = z.iter().sum::<f64>() / n as f64;
        for v in &mut z {
            *v -= mean;
        }
        // Iteratively rescale in OCV space; exact after one pass for a linear
        // curve, a couple more cover kinked tables.
        let mut scale = 0.08;
        for _ in 0..4 {
            for (u, &zi) in self.units.iter_mut().zip(&z) {
                u.soc = (mean_soc + scale * zi).clamp(0.0, 1.0);
            }
            let got = self.relaxed_spread_mv();
            if got > 0.0 {
                scale *= spread_mv / got;
            }
        }
        for (u, &zi) in self.units.iter_mut().zip(&z) {
            u.soc = (mean_soc + scale * zi).clamp(0.0, 1.0);
        }
    }

    /// Terminal voltage of one unit under the present dc current.
    pub fn unit_terminal_voltage(&self, idx: usize) -> f64 {
        let u = &self.units[idx];
        let ocv = self.params.ocv.voltage(u.soc);
        if u.connected {
            ocv - self.i_dc * self.params.r_dc
        } else {
            ocv
        }
    }

    /// dc-link terminal voltage: sum over inserted units.
    pub fn u_dc(&self) -> f64 {
        self.units
            .iter()
            .enumerate()
            .filter(|(_, u)| u.connected)
            .map(|(i, _)| self.unit_terminal_voltage(i))
            .sum()
    }

    pub fn active_count(&self) -> usize {
        self.units.iter().filter(|u| u.connected).count()
    }

    /// Average unit terminal voltage over the whole string (for the cell-count law).
    pub fn mean_terminal_voltage(&self) -> f64 {
        let n = self.units.len();
        (0..n).map(|i| self.unit_terminal_voltage(i)).sum::<f64>() / n as f64
    }

    /// Applies a selection (list of unit indices to connect), counting toggles.
    pub fn apply_selection(&mut self, selected: &[usize]) {
        let mut want = vec![false; self.units.len()];
        for &i in selected {
            want[i] = true;
        }
        for (u, w) in self.units.iter_mut().zip(&want) {
            if u.connected != *w {
                self.switch_events += 1;
                u.connected = *w;
            }
        }
    }

    /// Spec selection: with balancing active and spare units, connect the `n`
    /// units with the highest terminal voltage (ties broken by lowest index);
    /// otherwise connect deterministically by index.
    pub fn select_units(&self, n: usize, balancing_enabled: bool) -> Vec<usize> {
        assert!(n <= self.n_max, "selection beyond n_max");
        if balancing_enabled && n < self.n_max {
            let mut idx: Vec<usize> = (0..self.units.len()).collect();
            let v: Vec<f64> = (0..self.units.len())
                .map(|i| self.params.ocv.voltage(self.units[i].soc))
                .collect();
            idx.sort_by(|&a, &b| {
                v[b].partial_cmp(&v[a]).expect("finite voltages").then(a.cmp(&b))
            });
            idx.truncate(n);
            idx
        } else {
            (0..n).collect()
        }
    }

    /// Balancing reselection with a voltage dead band: an inserted unit is only
    /// swapped for a resting one when the challenger's open-circuit voltage
    /// exceeds the incumbent's by more than `deadband_v`. This keeps equal-voltage
    /// strings from churning the switches every control period while preserving
    /// convergence for genuine imbalance.
    pub fn reselect_balanced(&mut self, n: usize, deadband_v: f64) {
        let count = self.active_count();
        let ocv =
            |u: &CellUnit| self.params.ocv.voltage(u.soc);

        // Adjust the member count first (rate limiting is the caller's job).
        let mut connected: Vec<usize> = (0..self.units.len())
            .filter(|&i| self.units[i].connected)
            .collect();
        let mut resting: Vec<usize> = (0..self.units.len())
            .filter(|&i| !self.units[i].connected)
            .collect();

        if n > count {
            // connect the strongest resting units
            resting.sort_by(|&a, &b| {
                ocv(&self.units[b])
                    .partial_cmp(&ocv(&self.units[a]))
                    .expect("finite")
                    .then(a.cmp(&b))
            });
            for _ in 0..(n - count) {
                if let Some(i) = resting.first().copied() {
                    resting.remove(0);
                    connected.push(i);
                }
            }
        } else if n < count {
            // rest the weakest connected units
            connected.sort_by(|&a, &b| {
                ocv(&self.units[a])
                    .partial_cmp(&ocv(&self.units[b]))
                    .expect("finite")
                    .then(a.cmp(&b))
            });
            for _ in 0..(count - n) {
                if let Some(i) = connected.first().copied() {
                    connected.remove(0);
                    resting.push(i);
                }
            }
        }

        // Swap weakest incumbents for strongest challengers beyond the dead band.
        connected.sort_by(|&a, &b| {
            ocv(&self.units[a]).partial_cmp(&ocv(&self.units[b])).expect("finite").then(b.cmp(&a))
        });
        resting.sort_by(|&a, &b| {
            ocv(&self.units[b]).partial_cmp(&ocv(&self.units[a])).expect("finite").then(a.cmp(&b))
        });
        let mut swaps: Vec<(usize, usize)> = Vec::new();
        for (k, &out_idx) in connected.iter().enumerate() {
            if k >= resting.len() {
                break;
            }
            let in_idx = resting[k];
            if ocv(&self.units[in_idx]) > ocv(&self.units[out_idx]) + deadband_v {
                swaps.push((out_idx, in_idx));
            } else {
                break;
            }
        }
        let mut selected: Vec<usize> = connected;
        for (out_idx, in_idx) in swaps {
            let pos = selected.iter().position(|&i| i == out_idx).expect("member");
            selected[pos] = in_idx;
        }
        self.apply_selection(&selected);
    }

    /// Coulomb counting over one time step: every inserted unit carries `i_dc`.
    pub fn step_cells(&mut self, i_dc: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        let dah = i_dc * dt / 3600.0;
        let dsoc_per_ah = 1.0 / self.params.capacity_ah;
        let mut drawn = 0.0;
        for (idx, u) in self.units.iter_mut().enumerate() {
            if !u.connected {
                continue;
            }
            let soc_next = u.soc - dah * dsoc_per_ah;
            if soc_next < 0.0 {
                return Err(Error::CellDepleted { unit: idx });
            }
            u.soc = soc_next;
            u.ah_removed += dah;
            drawn += dah;
        }
        self.ah_drawn_total += drawn;
        self.i_dc = i_dc;
        Ok(())
    }

    /// Sample standard deviation of the unit terminal voltages, in mV.
    pub fn voltage_spread_mv(&self) -> f64 {
        let v: Vec<f64> = (0..self.units.len()).map(|i| self.unit_terminal_voltage(i)).collect();
        sample_std(&v) * 1e3
    }

    /// Spread of the open-circuit (relaxed) voltages, in mV.
    pub fn relaxed_spread_mv(&self) -> f64 {
        let v: Vec<f64> =
            self.units.iter().map(|u| self.params.ocv.voltage(u.soc)).collect();
        sample_std(&v) * 1e3
    }

    pub fn soc_min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for u in &self.units {
            lo = lo.min(u.soc);
            hi = hi.max(u.soc);
        }
        (lo, hi)
    }
}

fn sample_std(v: &[f64]) -> f64 {
    assert!(v.len() >= 2, "spread needs at least two units");
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    var.sqrt()
}

/// One-step-per-control-period slew limit on the inserted-unit count.
pub fn rate_limit_n(n_current: usize, n_target: usize) -> usize {
    if n_target > n_current {
        n_current + 1
    } else if n_target < n_current {
        n_current - 1
    } else {
        n_current
    }
}

/// MOSFET stack losses: conduction through the always-on devices plus hard
/// switching of one cell voltage per insertion/bypass event.
pub fn mosfet_losses(
    params: &MosfetParams,
    i_dc: f64,
    switch_event_count: u64,
    window_s: f64,
) -> f64 {
    let conduction = params.devices_conducting as f64 * i_dc * i_dc * params.r_on;
    let e_sw = 0.5 * params.v_cell * i_dc.abs() * params.t_switch;
    conduction + e_sw * switch_event_count as f64 / window_s
}

/// Battery ohmic losses `N * I_dc^2 * r_cell / N_p` (dc component only).
pub fn battery_losses(n: usize, i_dc: f64, cell_r_dc: f64, n_parallel: u32) -> f64 {
    n as f64 * i_dc * i_dc * cell_r_dc / f64::from(n_parallel)
}
