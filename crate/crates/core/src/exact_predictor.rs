//! Exact sampled-data predictor for the three-state feedforward example:
//! closed-form flow, one-period transition map, reconstruction from past
//! outputs, prediction over `r + tau`, and the bounded nominal feedback.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plants::{sat, FeedforwardPlant, OutputCase};
use crate::signals::PiecewiseConstantSignal;

/// Flow of the feedforward plant for duration `s` under a constant input `v`.
fn flow_constant(x: [f64; 3], v: f64, s: f64) -> [f64; 3] {
    let [x1, x2, x3] = x;
    let (s2, s3) = (s * s, s * s * s);
    [
        x1 + v * s,
        x2 + (1.0 + v) * (x1 * s + v * s2 / 2.0),
        x3 + x2 * s
            + (1.0 + v) * (x1 * s2 / 2.0 + v * s3 / 6.0)
            + x1 * x1 * s
            + x1 * v * s2
            + v * v * s3 / 3.0,
    ]
}

/// `phi(t, x; u)`: the state reached after time `t` when the delayed input
/// equals `u` on `[u.start, u.start + t)`. Exact for piecewise-constant `u`.
pub fn solution_map(t: f64, x: [f64; 3], u: &PiecewiseConstantSignal) -> Result<[f64; 3]> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "flow time must be nonnegative, got {t}"
        )));
    }
    let start = u.domain_start();
    let stop = start + t;
    let tol = 1e-12 * stop.abs().max(1.0);
    if t > 0.0 && stop > u.domain_end() + tol {
        return Err(Error::OutOfDomain {
            t: stop,
            start,
            end: u.domain_end(),
        });
    }
    let mut state = x;
    for (s, e, v) in u.segments() {
        if s >= stop {
            break;
        }
        let len = e.min(stop) - s;
        if len > 0.0 {
            state = flow_constant(state, v, len);
        }
    }
    Ok(state)
}

/// The input over one period when it switches from `u1` to `u2` after `delta`.
pub fn hold_pair(period: f64, delta: f64, u1: f64, u2: f64) -> Result<PiecewiseConstantSignal> {
    PiecewiseConstantSignal::new(vec![0.0, delta], vec![u1, u2], period)
}

fn check_timing(period: f64, delta: f64) -> Result<()> {
    if !(period > 0.0 && delta > 0.0 && delta < period) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < delta < T, got delta = {delta}, T = {period}"
        )));
    }
    Ok(())
}

/// Input-dependent coefficients of the one-period transition map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionCoeffs {
    pub q1: f64,
    pub q2: f64,
    pub g2: f64,
    pub g3: f64,
    pub b: f64,
    pub c: f64,
}

impl TransitionCoeffs {
    pub fn new(period: f64, delta: f64, u1: f64, u2: f64) -> Self {
        let t = period;
        let d = delta;
        let e = t - d;
        let q1 = d * u1 + e * u2;
        let q2 = d * d / 2.0 * u1 + d * e * u1 + e * e / 2.0 * u2;
        let g2 = q2 + d * d / 2.0 * u1 * u1 + d * e * u1 * u2 + e * e / 2.0 * u2 * u2;
        let g3 = d / 2.0 * (t * t - t * d + d * d / 3.0) * u1
            + u2 * e * e * e / 6.0
            + 1.5 * d * d * (t - 2.0 * d / 3.0) * u1 * u1
            + 1.5 * u1 * u2 * d * e * e
            + u2 * u2 * e * e * e / 2.0;
        Self {
            q1,
            q2,
            g2,
            g3,
            b: -3.0 * q2 / t + q1 + t / 2.0,
            c: g2 - g3 / t,
        }
    }
}

/// Input-only part of the second difference of `x3` over two consecutive
/// periods driven by `(u1, u2)` then `(v1, v2)`.
pub fn second_difference_offset(period: f64, delta: f64, u: (f64, f64), v: (f64, f64)) -> f64 {
    let cu = TransitionCoeffs::new(period, delta, u.0, u.1);
    let cv = TransitionCoeffs::new(period, delta, v.0, v.1);
    let t = period;
    cv.g3 - cu.g3 + t * cu.g2 + 0.5 * (t * t + 6.0 * cv.q2) * cu.q1 + t * cu.q1 * cu.q1
}

/// Coefficient of the earlier `x1` in the same second difference.
pub fn second_difference_gain(period: f64, delta: f64, u: (f64, f64), v: (f64, f64)) -> f64 {
    let cu = TransitionCoeffs::new(period, delta, u.0, u.1);
    let cv = TransitionCoeffs::new(period, delta, v.0, v.1);
    period * period + 3.0 * period * cu.q1 + 3.0 * cv.q2 - 3.0 * cu.q2
}

/// `F(x, u1, u2) = phi(T, x; u1 on [0, delta), u2 on [delta, T))` in closed form.
pub fn transition_f(x: [f64; 3], u1: f64, u2: f64, period: f64, delta: f64) -> Result<[f64; 3]> {
    check_timing(period, delta)?;
    let k = TransitionCoeffs::new(period, delta, u1, u2);
    let t = period;
    let [x1, x2, x3] = x;
    Ok([
        x1 + k.q1,
        x2 + t * x1 + x1 * k.q1 + k.g2,
        x3 + t * (x2 + x1 * x1) + t * t / 2.0 * x1 + 3.0 * x1 * k.q2 + k.g3,
    ])
}

/// State `x(iT - r)` from `y(i-1), y(i)` with `y = (x1, x3)` and the inputs
/// `(u_{i-2}, u_{i-1})` acting over the last period.
pub fn reconstruct_two_output(
    y_prev: [f64; 2],
    y_now: [f64; 2],
    u: (f64, f64),
    period: f64,
    delta: f64,
) -> Result<[f64; 3]> {
    check_timing(period, delta)?;
    let k = TransitionCoeffs::new(period, delta, u.0, u.1);
    let x1 = y_prev[0];
    Ok([
        y_now[0],
        (y_now[1] - y_prev[1]) / period - x1 * x1 + x1 * k.b + k.c,
        y_now[1],
    ])
}

/// State `x(iT - r)` from `(y_{i-2}, y_{i-1}, y_i)` with `y = x3` and inputs
/// `(u_{i-3}, u_{i-2}, u_{i-1})`, all of which must lie in `[-eps, eps]`.
pub fn reconstruct_one_output(
    y: [f64; 3],
    u: [f64; 3],
    period: f64,
    delta: f64,
    epsilon: f64,
) -> Result<[f64; 3]> {
    check_timing(period, delta)?;
    if !(epsilon > 0.0 && epsilon < 1.0 / 6.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < eps < 1/6, got {epsilon}"
        )));
    }
    if let Some(&bad) = u.iter().find(|v| !(v.abs() <= epsilon)) {
        return Err(Error::InputOutOfBounds {
            value: bad,
            bound: epsilon,
        });
    }
    let first = (u[0], u[1]);
    let last = (u[1], u[2]);
    let cf = TransitionCoeffs::new(period, delta, first.0, first.1);
    let cl = TransitionCoeffs::new(period, delta, last.0, last.1);
    let den = second_difference_gain(period, delta, first, last);
    let m = (y[2] - 2.0 * y[1] + y[0] - second_difference_offset(period, delta, first, last)) / den
        + cf.q1;
    Ok([
        m + cl.q1,
        (y[2] - y[1]) / period - m * m + m * cl.b + cl.c,
        y[2],
    ])
}

/// `x(iT + tau)` from `x(iT - r)` when the last held input `u_prev` covers the
/// whole prediction horizon `delta = r + tau < T`.
pub fn predict_ff(x: [f64; 3], u_prev: f64, delta: f64) -> [f64; 3] {
    let [x1, x2, x3] = x;
    let u = u_prev;
    let (d2, d3) = (delta * delta, delta * delta * delta);
    [
        x1 + delta * u,
        x2 + delta * x1 + d2 / 2.0 * (1.0 + u) * u + delta * x1 * u,
        x3 + delta * (x2 + x1 * x1)
            + d2 / 2.0 * x1
            + d3 / 6.0 * u
            + 1.5 * d2 * x1 * u
            + d3 / 2.0 * u * u,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardGains {
    pub k0: f64,
    pub k1: f64,
    pub k2: f64,
    pub r1: f64,
    pub r2: f64,
}

impl FeedforwardGains {
    pub fn validate(&self) -> Result<()> {
        if [self.k0, self.k1, self.k2, self.r1, self.r2]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "feedforward gains must be positive".into(),
            ))
        }
    }

    /// Uniform bound on `|k(x)|`.
    pub fn bound(&self) -> f64 {
        self.k0.max(self.r1 + self.k1).max(2.0 * self.r2 + self.k2)
    }

    /// Gains whose feedback stays inside `[-eps, eps]`, scaled from a fixed shape.
    pub fn within(epsilon: f64) -> Self {
        Self {
            k0: epsilon,
            k1: 0.5 * epsilon,
            k2: 0.5 * epsilon,
            r1: 0.5 * epsilon,
            r2: 0.25 * epsilon,
        }
    }
}

/// Tuned for the two-output case at `T = 0.5`; from initial states in the
/// unit ball the state falls below `1e-7` of its peak within `50 T`.
impl Default for FeedforwardGains {
    fn default() -> Self {
        Self {
            k0: 2.0,
            k1: 1.0,
            k2: 2.0,
            r1: 1.0,
            r2: 1.0,
        }
    }
}

/// Three-region saturated feedback for the feedforward chain.
pub fn nominal_feedback(x: [f64; 3], gains: &FeedforwardGains) -> f64 {
    let [x1, x2, x3] = x;
    let norm = (x2 * x2 + (x1 + x2) * (x1 + x2)).sqrt();
    if norm >= gains.r2 {
        if x1.abs() >= gains.r1 {
            -gains.k0 * sat(x1)
        } else {
            -x1 - gains.k1 * sat(x2 + x1)
        }
    } else {
        -2.0 * (x1 + x2) - gains.k2 * sat(x3 + x2 + 0.5 * x1)
    }
}

/// Output-feedback law `u_i = k(Phi(R(...), u_{i-1}))` with common period `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardController {
    pub plant: FeedforwardPlant,
    pub gains: FeedforwardGains,
    /// Input applied while fewer than `p + 1` samples are available;
    /// `None` makes that an error.
    pub warmup: Option<f64>,
}

/// Result of one controller evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutcome {
    pub input: f64,
    /// Reconstructed `x(iT - r)` once warm-up is over.
    pub reconstructed: Option<[f64; 3]>,
    /// Predicted `x(iT + tau)` once warm-up is over.
    pub predicted: Option<[f64; 3]>,
}

impl FeedforwardController {
    pub fn new(plant: FeedforwardPlant, gains: FeedforwardGains) -> Result<Self> {
        gains.validate()?;
        if plant.output == OutputCase::OneOutput && gains.bound() > plant.epsilon {
            return Err(Error::InvalidParameter(format!(
                "feedback bound {} exceeds eps = {}",
                gains.bound(),
                plant.epsilon
            )));
        }
        Ok(Self {
            plant,
            gains,
            warmup: Some(0.0),
        })
    }

    /// Number of samples `p + 1` consumed per reconstruction, also the first
    /// index at which the controller leaves warm-up.
    pub fn first_active_index(&self) -> usize {
        self.plant.output.horizon() + 1
    }

    /// `x(iT - r)` from the sample list `y[0..=i]` and computed inputs `u[0..i]`.
    pub fn reconstruct(&self, i: usize, y: &[Vec<f64>], u: &[f64]) -> Result<[f64; 3]> {
        let (t, d) = (self.plant.period, self.plant.delta());
        if i < self.first_active_index() || y.len() <= i || u.len() < i {
            return Err(Error::InsufficientHistory(format!(
                "reconstruction at index {i} needs samples 0..={i} and inputs 0..{i}"
            )));
        }
        match self.plant.output {
            OutputCase::TwoOutput => {
                let (yp, yn) = (&y[i - 1], &y[i]);
                check_output_len(yp, 2)?;
                check_output_len(yn, 2)?;
                reconstruct_two_output([yp[0], yp[1]], [yn[0], yn[1]], (u[i - 2], u[i - 1]), t, d)
            }
            OutputCase::OneOutput => {
                for s in &y[i - 2..=i] {
                    check_output_len(s, 1)?;
                }
                reconstruct_one_output(
                    [y[i - 2][0], y[i - 1][0], y[i][0]],
                    [u[i - 3], u[i - 2], u[i - 1]],
                    t,
                    d,
                    self.plant.epsilon,
                )
            }
        }
    }

    pub fn control_step(&self, i: usize, y: &[Vec<f64>], u: &[f64]) -> Result<ControlOutcome> {
        if i < self.first_active_index() {
            return match self.warmup {
                Some(input) => Ok(ControlOutcome {
                    input,
                    reconstructed: None,
                    predicted: None,
                }),
                None => Err(Error::InsufficientHistory(format!(
                    "index {i} precedes the first reconstructable sample and no warm-up input is set"
                ))),
            };
        }
        let x = self.reconstruct(i, y, u)?;
        let pred = predict_ff(x, u[i - 1], self.plant.delta());
        Ok(ControlOutcome {
            input: nominal_feedback(pred, &self.gains),
            reconstructed: Some(x),
            predicted: Some(pred),
        })
    }
}

fn check_output_len(y: &[f64], n: usize) -> Result<()> {
    if y.len() == n {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        })
    }
}
