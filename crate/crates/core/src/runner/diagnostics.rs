//! Post-run checks of the observer energy bound and the closed-loop growth
//! envelope.

use crate::error::{Error, Result};
use crate::gains::g_ceil;
use crate::observer::{energy_bound_check, omega, EnergyReport, ObserverGains};
use crate::runner::log::SimulationLog;
use crate::runner::scenario::{GainSpec, Scenario};

/// Energy bound for the high-gain observer; `None` for loops without one.
pub fn scenario_energy_check(
    scenario: &Scenario,
    log: &SimulationLog,
) -> Result<Option<EnergyReport>> {
    let (Ok(plant), Some(obs)) = (scenario.strict_plant(), scenario.observer.as_ref()) else {
        return Ok(None);
    };
    let GainSpec::Vector(p) = &obs.p else {
        return Ok(None);
    };
    let w = omega(plant.lipschitz, &ObserverGains::new(obs.theta, p.clone())?);
    energy_bound_check(&log.energy_samples(), w, scenario.t1, log.b_sup).map(Some)
}

/// Constants of the growth envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthConstants {
    pub big_gamma: f64,
    pub beta: f64,
    pub omega: f64,
    pub t1: f64,
    pub t2: f64,
    pub b_sup: f64,
    /// `|z0| + |w0| + ||x0||_r + ||u0||_{r+tau}`
    pub initial: f64,
    /// `sup |xi| + G sup |d|` over the run.
    pub exogenous: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthReport {
    pub holds: bool,
    pub worst_log_margin: f64,
    pub worst_time: f64,
}

/// Checks `sup(|z| + |w|) + sup|x| + sup_{s<t}|u| <= F^{g(t / T2)} (initial + exogenous)`
/// with `F = 7 (1 + Gamma) e^{beta T2} / sqrt(1 - exp(-2 omega T1 e^{-sup b}))`,
/// on logarithms.
pub fn growth_bound_check(log: &SimulationLog, c: &GrowthConstants) -> Result<GrowthReport> {
    if !(c.big_gamma >= 0.0
        && c.omega > 0.0
        && c.t1 > 0.0
        && c.t2 > 0.0
        && c.initial >= 0.0
        && c.exogenous >= 0.0)
    {
        return Err(Error::InvalidParameter(
            "growth constants out of range".into(),
        ));
    }
    let denom = -(-2.0 * c.omega * c.t1 * (-c.b_sup).exp()).exp_m1();
    let log_f = (7.0 * (1.0 + c.big_gamma)).ln() + c.beta * c.t2 - 0.5 * denom.ln();
    let base = (c.initial + c.exogenous).ln();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut report = GrowthReport {
        holds: true,
        worst_log_margin: f64::INFINITY,
        worst_time: 0.0,
    };
    let (mut zw, mut x, mut u_before, mut pending) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    let mut last_t = f64::NEG_INFINITY;
    for row in &log.rows {
        if row.t > last_t {
            u_before = u_before.max(pending);
            last_t = row.t;
        }
        zw = zw.max(norm(&row.z) + row.w.abs());
        x = x.max(norm(&row.x));
        pending = pending.max(row.u.abs());
        let lhs = zw + x + u_before;
        if lhs == 0.0 {
            continue;
        }
        let margin = g_ceil(row.t / c.t2) as f64 * log_f + base - lhs.ln();
        if !(margin >= report.worst_log_margin) {
            report.worst_log_margin = margin;
            report.worst_time = row.t;
        }
    }
    report.holds = !(report.worst_log_margin < 0.0);
    Ok(report)
}
