//! Event-aligned hybrid integration of plant, observer and sampled controller.
//!
//! Between consecutive event instants the joint state `(x, z, w)` is advanced
//! with RK4. Every discontinuity of the right-hand side (input switches seen
//! through the delays, step disturbances) is an event instant, so no step
//! straddles one. At an instant, samples are processed before holds. Instants closer than
//! 1e-9 (relative) are merged onto the hold grid or the horizon when one of
//! them lies there.

use crate::error::{Error, Result};
use crate::observer::{ObserverBlock, ObserverState};
use crate::plants::{FeedforwardPlant, LtiPlant, StrictFeedbackPlant};
use crate::runner::exogenous::Exogenous;
use crate::runner::integrate::{rk4_step, step_count, Rk4Scratch};
use crate::runner::log::{EventFlags, HoldRecord, LogRow, SampleRecord, SimulationLog};
use crate::signals::{PiecewiseConstantSignal, SamplingSchedule};

/// Continuous-time plant seen by the engine.
pub trait PlantModel {
    fn dim(&self) -> usize;
    fn rhs(&self, x: &[f64], u_delayed: f64, d: &[f64], out: &mut [f64]);
    fn output(&self, x: &[f64]) -> Vec<f64>;
    /// `(r, tau)`
    fn delays(&self) -> (f64, f64);
}

impl PlantModel for StrictFeedbackPlant {
    fn dim(&self) -> usize {
        StrictFeedbackPlant::dim(self)
    }
    fn rhs(&self, x: &[f64], u: f64, d: &[f64], out: &mut [f64]) {
        self.rhs_into(x, u, d, out)
    }
    fn output(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0]]
    }
    fn delays(&self) -> (f64, f64) {
        (self.r, self.tau)
    }
}

impl PlantModel for FeedforwardPlant {
    fn dim(&self) -> usize {
        3
    }
    fn rhs(&self, x: &[f64], u: f64, _d: &[f64], out: &mut [f64]) {
        out[0] = u;
        out[1] = x[0] + x[0] * u;
        out[2] = x[1] + x[0] * x[0];
    }
    fn output(&self, x: &[f64]) -> Vec<f64> {
        self.output_map(x)
    }
    fn delays(&self) -> (f64, f64) {
        (self.r, self.tau)
    }
}

impl PlantModel for LtiPlant {
    fn dim(&self) -> usize {
        LtiPlant::dim(self)
    }
    fn rhs(&self, x: &[f64], u: f64, d: &[f64], out: &mut [f64]) {
        self.rhs_into(x, u, d, out)
    }
    fn output(&self, x: &[f64]) -> Vec<f64> {
        vec![self.c.iter().zip(x).map(|(c, v)| c * v).sum()]
    }
    fn delays(&self) -> (f64, f64) {
        (self.r, self.tau)
    }
}

/// Everything a controller may read at holding instant `index`.
pub struct HoldContext<'a> {
    pub index: usize,
    pub time: f64,
    pub observer: Option<&'a ObserverState>,
    /// Input history including the initial segment; ends at `time`.
    pub input: &'a PiecewiseConstantSignal,
    /// Inputs computed at earlier holds, `u_0 .. u_{index-1}`.
    pub computed: &'a [f64],
    pub sample_times: &'a [f64],
    /// Measurements `h(x(tau_i - r)) + xi(tau_i)` received so far.
    pub samples: &'a [Vec<f64>],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HoldDecision {
    pub input: f64,
    /// State estimate the controller used, if any.
    pub estimate: Option<Vec<f64>>,
    /// Predicted future state, if any.
    pub prediction: Option<Vec<f64>>,
}

pub trait Controller {
    fn hold(&mut self, ctx: &HoldContext<'_>) -> Result<HoldDecision>;
}

pub struct EngineConfig {
    pub t2: f64,
    pub horizon: f64,
    pub step: f64,
    pub schedule: SamplingSchedule,
    /// Constant initial state on `[-r, 0]`.
    pub x_history: Vec<f64>,
    /// Initial input on `[-L, 0)`; must cover `r + tau` when an observer is present.
    pub u_history: PiecewiseConstantSignal,
    pub observer_init: Option<ObserverState>,
    /// One signal per disturbance channel.
    pub disturbance: Vec<Exogenous>,
    pub noise: Exogenous,
    /// Log every integrator step, not just the event instants.
    pub log_steps: bool,
}

/// Dense plant path: per-step cubic Hermite data.
struct DensePath {
    n: usize,
    t0: Vec<f64>,
    t1: Vec<f64>,
    x0: Vec<f64>,
    x1: Vec<f64>,
    f0: Vec<f64>,
    f1: Vec<f64>,
    history: Vec<f64>,
}

impl DensePath {
    fn new(history: Vec<f64>) -> Self {
        Self {
            n: history.len(),
            t0: Vec::new(),
            t1: Vec::new(),
            x0: Vec::new(),
            x1: Vec::new(),
            f0: Vec::new(),
            f1: Vec::new(),
            history,
        }
    }

    fn push(&mut self, t0: f64, t1: f64, x0: &[f64], x1: &[f64], f0: &[f64], f1: &[f64]) {
        self.t0.push(t0);
        self.t1.push(t1);
        self.x0.extend_from_slice(x0);
        self.x1.extend_from_slice(x1);
        self.f0.extend_from_slice(f0);
        self.f1.extend_from_slice(f1);
    }

    fn eval(&self, s: f64, out: &mut [f64]) -> Result<()> {
        if s <= 0.0 || self.t0.is_empty() {
            if s > 1e-12 {
                return Err(Error::InsufficientHistory(format!(
                    "plant path not yet available at {s}"
                )));
            }
            out.copy_from_slice(&self.history);
            return Ok(());
        }
        let last = *self.t1.last().unwrap();
        if s > last + 1e-12 * last.max(1.0) {
            return Err(Error::InsufficientHistory(format!(
                "plant path ends at {last}, read at {s}"
            )));
        }
        let k = self.t1.partition_point(|&e| e < s).min(self.t0.len() - 1);
        let (a, b) = (self.t0[k], self.t1[k]);
        let h = b - a;
        let th = ((s - a) / h).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th),
            th * (1.0 - th) * (1.0 - th),
            th * th * (3.0 - 2.0 * th),
            th * th * (th - 1.0),
        );
        let n = self.n;
        for i in 0..n {
            let j = k * n + i;
            out[i] =
                h00 * self.x0[j] + h10 * h * self.f0[j] + h01 * self.x1[j] + h11 * h * self.f1[j];
        }
        Ok(())
    }
}

struct Instant {
    t: f64,
    samples: Vec<usize>,
    holds: Vec<usize>,
}

fn build_instants(
    cfg: &EngineConfig,
    r: f64,
    tau: f64,
    with_observer: bool,
    extra_breaks: &[f64],
) -> (Vec<Instant>, Vec<f64>) {
    let horizon = cfg.horizon;
    let eps = 1e-12 * horizon.max(1.0);
    // kind: 0 sample, 1 hold, 2 plain breakpoint, 3 horizon
    let mut raw: Vec<(f64, u8, usize)> = Vec::new();
    let sample_times: Vec<f64> = cfg
        .schedule
        .times
        .iter()
        .copied()
        .filter(|t| *t <= horizon + eps)
        .collect();
    for (i, &t) in sample_times.iter().enumerate() {
        raw.push((t, 0, i));
        if t - r > 0.0 {
            raw.push((t - r, 2, 0));
        }
    }
    let holds = (horizon / cfg.t2 + 1e-9).floor() as usize;
    for j in 0..=holds {
        let t = j as f64 * cfg.t2;
        raw.push((t, 1, j));
        raw.push((t + tau, 2, 0));
        if with_observer {
            raw.push((t + r + tau, 2, 0));
        }
    }
    for &b in cfg.u_history.breakpoints().iter().skip(1) {
        raw.push((b + tau, 2, 0));
        if with_observer {
            raw.push((b + r + tau, 2, 0));
        }
    }
    for sig in &cfg.disturbance {
        raw.extend(sig.breakpoints(horizon).into_iter().map(|t| (t, 2, 0)));
    }
    raw.extend(extra_breaks.iter().map(|&t| (t, 2, 0)));
    raw.push((horizon, 3, 0));
    raw.retain(|(t, _, _)| *t >= 0.0 && *t <= horizon + eps);
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut out: Vec<Instant> = Vec::new();
    for (t, kind, idx) in raw {
        let merge = out
            .last()
            .is_some_and(|last| t - last.t <= 1e-9 * t.abs().max(1.0));
        if !merge {
            out.push(Instant {
                t,
                samples: Vec::new(),
                holds: Vec::new(),
            });
        }
        let cur = out.last_mut().unwrap();
        // grid instants win over nearby sample times
        if kind == 1 || kind == 3 {
            cur.t = t;
        }
        match kind {
            0 => cur.samples.push(idx),
            1 => cur.holds.push(idx),
            _ => {}
        }
    }
    (out, sample_times)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Runs the hybrid closed loop up to `cfg.horizon`.
pub fn simulate(
    plant: &dyn PlantModel,
    observer: Option<&dyn ObserverBlock>,
    controller: &mut dyn Controller,
    cfg: &EngineConfig,
) -> Result<SimulationLog> {
    simulate_with_breaks(plant, observer, controller, cfg, &[])
}

/// As [`simulate`], with additional instants at which integration steps end
/// and rows are logged.
pub fn simulate_with_breaks(
    plant: &dyn PlantModel,
    observer: Option<&dyn ObserverBlock>,
    controller: &mut dyn Controller,
    cfg: &EngineConfig,
    extra_breaks: &[f64],
) -> Result<SimulationLog> {
    let n = plant.dim();
    let (r, tau) = plant.delays();
    if !(cfg.t2 > 0.0 && cfg.horizon > 0.0 && cfg.step > 0.0) {
        return Err(Error::InvalidParameter(
            "T2, horizon and step must be positive".into(),
        ));
    }
    if cfg.x_history.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: cfg.x_history.len(),
        });
    }
    if cfg.disturbance.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: cfg.disturbance.len(),
        });
    }
    let tol = 1e-12;
    if cfg.u_history.domain_end().abs() > tol {
        return Err(Error::InvalidParameter(
            "initial input history must end at t = 0".into(),
        ));
    }
    let needed = if observer.is_some() { r + tau } else { tau };
    if cfg.u_history.domain_start() > -needed + tol {
        return Err(Error::InsufficientHistory(format!(
            "initial input history covers {} s, at least {needed} s are read",
            -cfg.u_history.domain_start()
        )));
    }
    let obs_state0 = match (observer, &cfg.observer_init) {
        (Some(o), Some(s)) => {
            if s.z.len() != o.dim() || o.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.z.len(),
                });
            }
            Some(s.clone())
        }
        (Some(_), None) => Some(ObserverState::zero(n)),
        (None, _) => None,
    };
    let m = if observer.is_some() { 2 * n + 1 } else { n };

    let (instants, sample_times) = build_instants(cfg, r, tau, observer.is_some(), extra_breaks);
    let mut input = cfg.u_history.clone();
    let mut computed: Vec<f64> = Vec::new();
    let mut samples: Vec<Vec<f64>> = Vec::new();
    let mut received_times: Vec<f64> = Vec::new();
    let mut log = SimulationLog {
        n,
        b_sup: cfg
            .schedule
            .perturbation
            .iter()
            .copied()
            .fold(0.0, f64::max),
        ..Default::default()
    };
    let mut path = DensePath::new(cfg.x_history.clone());

    let mut state = vec![0.0; m];
    state[..n].copy_from_slice(&cfg.x_history);
    if let Some(s) = &obs_state0 {
        state[n..2 * n].copy_from_slice(&s.z);
        state[2 * n] = s.w;
    }
    let mut obs_view = obs_state0.clone();
    let mut last_estimate: Option<Vec<f64>> = None;
    let mut scratch = Rk4Scratch::new(m);
    let mut d_buf = vec![0.0; n];
    let mut f_end = vec![0.0; n];
    let mut xd = vec![0.0; n];
    let mut t = 0.0_f64;

    let eval_d = |time: f64, out: &mut [f64]| {
        for (o, s) in out.iter_mut().zip(&cfg.disturbance) {
            *o = s.eval(time);
        }
    };
    let all_piecewise = cfg.disturbance.iter().all(Exogenous::is_piecewise);

    for (k, inst) in instants.iter().enumerate() {
        let te = inst.t;
        if k > 0 || te > 0.0 {
            if !(te > t) {
                return Err(Error::Invariant(format!(
                    "event instants not increasing at {te}"
                )));
            }
            let steps = step_count(t, te, cfg.step);
            let dt = (te - t) / steps as f64;
            for s in 0..steps {
                let a = t + s as f64 * dt;
                let b = if s + 1 == steps {
                    te
                } else {
                    t + (s + 1) as f64 * dt
                };
                let mid = 0.5 * (a + b);
                let u_p = input.eval(mid - tau)?;
                let u_o = if observer.is_some() {
                    input.eval(mid - r - tau)?
                } else {
                    0.0
                };
                let mut d_mid = vec![0.0; n];
                eval_d(mid, &mut d_mid);
                let mut field = |time: f64, y: &[f64], out: &mut [f64]| {
                    let mut d_loc = [0.0; 16];
                    let d: &[f64] = if all_piecewise || n > 16 {
                        &d_mid
                    } else {
                        eval_d(time, &mut d_loc[..n]);
                        &d_loc[..n]
                    };
                    plant.rhs(&y[..n], u_p, d, &mut out[..n]);
                    if let Some(o) = observer {
                        o.flow(&y[n..2 * n], y[2 * n], u_o, &mut out[n..]);
                    }
                };
                let x_start: Vec<f64> = state[..n].to_vec();
                rk4_step(&mut field, a, &mut state, b - a, &mut scratch);
                if state.iter().any(|v| !v.is_finite()) || norm(&state) > 1e150 {
                    return Err(Error::BlowUp { t: b });
                }
                let f0: Vec<f64> = scratch.initial_slope()[..n].to_vec();
                if all_piecewise || n > 16 {
                    d_buf.copy_from_slice(&d_mid);
                } else {
                    eval_d(b, &mut d_buf);
                }
                plant.rhs(&state[..n], u_p, &d_buf, &mut f_end);
                path.push(a, b, &x_start, &state[..n], &f0, &f_end);
                if cfg.log_steps && s + 1 < steps {
                    if let Some(o) = obs_view.as_mut() {
                        o.z.copy_from_slice(&state[n..2 * n]);
                        o.w = state[2 * n];
                    }
                    let row = make_row(
                        b,
                        &state,
                        n,
                        &obs_view,
                        &last_estimate,
                        &samples,
                        &input,
                        &path,
                        cfg,
                        r,
                        tau,
                        EventFlags::default(),
                        &mut xd,
                    )?;
                    log.rows.push(row);
                }
            }
            t = te;
        }
        if let Some(o) = obs_view.as_mut() {
            o.z.copy_from_slice(&state[n..2 * n]);
            o.w = state[2 * n];
        }

        let mut flags = EventFlags::default();
        for &i in &inst.samples {
            flags.sample = true;
            path.eval(sample_times[i] - r, &mut xd)?;
            let xi = cfg.noise.eval(sample_times[i]);
            let y: Vec<f64> = plant.output(&xd).into_iter().map(|v| v + xi).collect();
            if let (Some(o), Some(view)) = (observer, obs_view.as_mut()) {
                o.jump(view, y[0]);
                state[2 * n] = view.w;
            }
            log.samples.push(SampleRecord {
                t: te,
                y: y.clone(),
            });
            samples.push(y);
            received_times.push(sample_times[i]);
        }
        for &j in &inst.holds {
            flags.hold = true;
            if j != computed.len() {
                return Err(Error::Invariant(format!("hold {j} processed out of order")));
            }
            let hold_time = j as f64 * cfg.t2;
            let ctx = HoldContext {
                index: j,
                time: hold_time,
                observer: obs_view.as_ref(),
                input: &input,
                computed: &computed,
                sample_times: &received_times,
                samples: &samples,
            };
            let dec = controller.hold(&ctx)?;
            if !dec.input.is_finite() {
                return Err(Error::NonFinite(format!("control input at hold {j}")));
            }
            if (input.domain_end() - hold_time).abs() > 1e-9 * hold_time.abs().max(1.0) {
                return Err(Error::Invariant(format!(
                    "input history ends at {} but hold {j} is at {hold_time}",
                    input.domain_end()
                )));
            }
            input.zoh_extend(dec.input, cfg.t2)?;
            computed.push(dec.input);
            if dec.estimate.is_some() {
                last_estimate = dec.estimate.clone();
            }
            log.holds.push(HoldRecord {
                index: j,
                t: te,
                input: dec.input,
                estimate: dec.estimate,
                prediction: dec.prediction,
            });
        }
        let row = make_row(
            te,
            &state,
            n,
            &obs_view,
            &last_estimate,
            &samples,
            &input,
            &path,
            cfg,
            r,
            tau,
            flags,
            &mut xd,
        )?;
        log.rows.push(row);
    }
    Ok(log)
}

#[allow(clippy::too_many_arguments)]
fn make_row(
    t: f64,
    state: &[f64],
    n: usize,
    obs: &Option<ObserverState>,
    estimate: &Option<Vec<f64>>,
    samples: &[Vec<f64>],
    input: &PiecewiseConstantSignal,
    path: &DensePath,
    cfg: &EngineConfig,
    r: f64,
    tau: f64,
    event: EventFlags,
    xd: &mut [f64],
) -> Result<LogRow> {
    let (z, w) = match obs {
        Some(o) => (o.z.clone(), o.w),
        None => (
            estimate.clone().unwrap_or_else(|| vec![0.0; n]),
            samples.last().map_or(0.0, |y| y[0]),
        ),
    };
    path.eval(t - r, xd)?;
    let u_obs = t - r - tau;
    Ok(LogRow {
        t,
        x: state[..n].to_vec(),
        z,
        w,
        u: if t < input.domain_end() {
            input.eval(t)?
        } else {
            input.eval(input.domain_end() - cfg.t2 * 0.5)?
        },
        d: cfg.disturbance.iter().map(|s| s.eval(t)).collect(),
        xi: cfg.noise.eval(t),
        event,
        x_delayed: xd.to_vec(),
        u_observer: if u_obs >= input.domain_start() {
            input.eval(u_obs)?
        } else {
            0.0
        },
    })
}
