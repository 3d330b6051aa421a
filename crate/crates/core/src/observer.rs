//! Sampled-data high-gain observers with an inter-sample output predictor.
//!
//! `z` estimates `x(t - r)`; `w` tracks `x_1(t - r)` between samples and is
//! reset to the measurement at every sampling instant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plants::{check_dim, StrictFeedbackPlant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverState {
    pub z: Vec<f64>,
    pub w: f64,
}

impl ObserverState {
    pub fn zero(n: usize) -> Self {
        Self {
            z: vec![0.0; n],
            w: 0.0,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.z.iter().map(|v| v * v).sum::<f64>() + self.w * self.w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverGains {
    pub theta: f64,
    pub p: Vec<f64>,
}

impl ObserverGains {
    pub fn new(theta: f64, p: Vec<f64>) -> Result<Self> {
        if !(theta >= 1.0) || !theta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "observer gain theta must be >= 1, got {theta}"
            )));
        }
        if p.is_empty() || p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "observer vector p must be finite and nonempty".into(),
            ));
        }
        Ok(Self { theta, p })
    }

    /// `theta = 1`, `p = (-3, -3)`.
    pub fn two_state_default() -> Self {
        Self {
            theta: 1.0,
            p: vec![-3.0, -3.0],
        }
    }

    /// Effective injection gains `theta^i p_i`.
    pub fn scaled(&self) -> Vec<f64> {
        self.p
            .iter()
            .enumerate()
            .map(|(i, pi)| self.theta.powi(i as i32 + 1) * pi)
            .collect()
    }
}

/// Growth rate `omega = max(L(n+1) + 2 + 2n max_i theta^{2i} p_i^2, 1 + L^2) / 2`.
pub fn omega(lipschitz: f64, gains: &ObserverGains) -> f64 {
    let n = gains.p.len() as f64;
    let peak = gains.scaled().iter().map(|g| g * g).fold(0.0, f64::max);
    0.5 * (lipschitz * (n + 1.0) + 2.0 + 2.0 * n * peak).max(1.0 + lipschitz * lipschitz)
}

/// Derivatives `(z', w')` of the nonlinear observer.
pub fn observer_flow(
    state: &ObserverState,
    u_delayed: f64,
    plant: &StrictFeedbackPlant,
    gains: &ObserverGains,
) -> Result<Vec<f64>> {
    let n = plant.dim();
    check_dim(n, state.z.len())?;
    check_dim(n, gains.p.len())?;
    let mut out = vec![0.0; n + 1];
    high_gain_flow_into(
        plant,
        &gains.scaled(),
        &state.z,
        state.w,
        u_delayed,
        &mut out,
    );
    Ok(out)
}

fn high_gain_flow_into(
    plant: &StrictFeedbackPlant,
    scaled: &[f64],
    z: &[f64],
    w: f64,
    u: f64,
    out: &mut [f64],
) {
    let n = z.len();
    let innovation = z[0] - w;
    for i in 0..n {
        let chain = if i + 1 < n { z[i + 1] } else { u };
        out[i] = plant.drift_row(z, i) + chain + scaled[i] * innovation;
    }
    out[n] = plant.drift_row(z, 0) + if n > 1 { z[1] } else { u };
}

/// `w <- y`, `z` unchanged.
pub fn observer_jump(state: &ObserverState, y_sample: f64) -> ObserverState {
    ObserverState {
        z: state.z.clone(),
        w: y_sample,
    }
}

/// Derivatives of the LTI observer
/// `z' = A z + B u + p (c'z - w)`, `w' = c'A z + c'B u`.
pub fn lti_observer_flow(
    z: &DVector<f64>,
    w: f64,
    u_delayed: f64,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let n = a.nrows();
    check_dim(n, a.ncols())?;
    for len in [z.len(), b.len(), c.len(), p.len()] {
        check_dim(n, len)?;
    }
    let open = a * z + b * u_delayed;
    let dz = &open + p * (c.dot(z) - w);
    Ok((dz, c.dot(&open)))
}

/// Continuous part and reset map of an observer, as used by the simulation engine.
pub trait ObserverBlock {
    fn dim(&self) -> usize;
    /// Writes `(z', w')` into `out` (length `dim() + 1`).
    fn flow(&self, z: &[f64], w: f64, u_delayed: f64, out: &mut [f64]);
    fn jump(&self, state: &mut ObserverState, y: f64) {
        state.w = y;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighGainObserver {
    pub plant: StrictFeedbackPlant,
    pub gains: ObserverGains,
    scaled: Vec<f64>,
}

impl HighGainObserver {
    pub fn new(plant: StrictFeedbackPlant, gains: ObserverGains) -> Result<Self> {
        check_dim(plant.dim(), gains.p.len())?;
        let scaled = gains.scaled();
        Ok(Self {
            plant,
            gains,
            scaled,
        })
    }
}

impl ObserverBlock for HighGainObserver {
    fn dim(&self) -> usize {
        self.plant.dim()
    }

    fn flow(&self, z: &[f64], w: f64, u_delayed: f64, out: &mut [f64]) {
        high_gain_flow_into(&self.plant, &self.scaled, z, w, u_delayed, out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtiObserver {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub p: DVector<f64>,
}

impl LtiObserver {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>, p: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        check_dim(n, a.ncols())?;
        for len in [b.len(), c.len(), p.len()] {
            check_dim(n, len)?;
        }
        Ok(Self { a, b, c, p })
    }
}

impl ObserverBlock for LtiObserver {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn flow(&self, z: &[f64], w: f64, u_delayed: f64, out: &mut [f64]) {
        let n = z.len();
        let innovation: f64 = self.c.iter().zip(z).map(|(c, v)| c * v).sum::<f64>() - w;
        let mut cw = 0.0;
        for i in 0..n {
            let mut open = self.b[i] * u_delayed;
            for j in 0..n {
                open += self.a[(i, j)] * z[j];
            }
            out[i] = open + self.p[i] * innovation;
            cw += self.c[i] * open;
        }
        out[n] = cw;
    }
}

/// One logged instant for the observer energy check.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    pub z: Vec<f64>,
    pub w: f64,
    /// `|x(t - r)|`
    pub x_delayed: f64,
    /// `|xi(t)|`
    pub xi: f64,
    /// `|u(t - r - tau)|`
    pub u_delayed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub holds: bool,
    /// Smallest `ln(rhs) - ln(lhs)` over the trace; `+inf` when every left side vanishes.
    pub worst_log_margin: f64,
    pub worst_time: f64,
}

/// Checks `|z|^2 + w^2 <= exp(2 omega t) (|z0|^2 + w0^2
///   + (sup|x(s-r)| + sup|xi|)^2 / (1 - exp(-2 omega T1 exp(-sup b)))
///   + sup_{s<t} |u(s-r-tau)|^2 / (2 omega))` along a trace starting at `t = 0`.
///
/// Comparison is done on logarithms since `exp(2 omega t)` overflows quickly.
pub fn energy_bound_check(
    samples: &[EnergySample],
    omega: f64,
    t1: f64,
    b_sup: f64,
) -> Result<EnergyReport> {
    if !(omega > 0.0 && t1 > 0.0 && b_sup >= 0.0) {
        return Err(Error::InvalidParameter(
            "omega, T1 must be positive and sup b nonnegative".into(),
        ));
    }
    let mut report = EnergyReport {
        holds: true,
        worst_log_margin: f64::INFINITY,
        worst_time: 0.0,
    };
    let Some(first) = samples.first() else {
        return Ok(report);
    };
    let init = first.z.iter().map(|v| v * v).sum::<f64>() + first.w * first.w;
    let denom = -(-2.0 * omega * t1 * (-b_sup).exp()).exp_m1();
    let (mut x_sup, mut xi_sup, mut u_sup_before) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut pending_u = 0.0_f64;
    let mut last_t = f64::NEG_INFINITY;
    for s in samples {
        if s.t > last_t {
            u_sup_before = u_sup_before.max(pending_u);
            last_t = s.t;
        }
        x_sup = x_sup.max(s.x_delayed);
        xi_sup = xi_sup.max(s.xi);
        pending_u = pending_u.max(s.u_delayed);
        let lhs = s.z.iter().map(|v| v * v).sum::<f64>() + s.w * s.w;
        if lhs == 0.0 {
            continue;
        }
        let bracket =
            init + (x_sup + xi_sup).powi(2) / denom + u_sup_before * u_sup_before / (2.0 * omega);
        let margin = 2.0 * omega * s.t + bracket.ln() - lhs.ln();
        if !(margin >= report.worst_log_margin) {
            report.worst_log_margin = margin;
            report.worst_time = s.t;
        }
    }
    report.holds = !(report.worst_log_margin < 0.0);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::signed_quadratic;

    fn plant() -> StrictFeedbackPlant {
        StrictFeedbackPlant::two_state_example(0.25, 0.25).unwrap()
    }

    #[test]
    fn flow_examples() {
        let g = ObserverGains::two_state_default();
        let zero = ObserverState::zero(2);
        assert_eq!(
            observer_flow(&zero, 0.0, &plant(), &g).unwrap(),
            vec![0.0; 3]
        );
        let s = ObserverState {
            z: vec![1.0, 0.0],
            w: 1.0,
        };
        let d = observer_flow(&s, 0.0, &plant(), &g).unwrap();
        let f1 = 1.0 / 2f64.sqrt();
        assert!((d[0] - f1).abs() < 1e-15 && d[1] == 0.0 && (d[2] - f1).abs() < 1e-15);
        assert!(observer_flow(&ObserverState::zero(3), 0.0, &plant(), &g).is_err());
    }

    #[test]
    fn flow_matches_two_state_instance() {
        // z1' = f(z1) + z2 - 3 theta (z1 - w), z2' = -3 theta^2 (z1 - w) + u
        let theta = 1.7;
        let g = ObserverGains::new(theta, vec![-3.0, -3.0]).unwrap();
        let s = ObserverState {
            z: vec![0.4, -1.3],
            w: 0.9,
        };
        let u = 0.6;
        let d = observer_flow(&s, u, &plant(), &g).unwrap();
        let e = s.z[0] - s.w;
        assert!((d[0] - (signed_quadratic(0.4) - 1.3 - 3.0 * theta * e)).abs() < 1e-14);
        assert!((d[1] - (-3.0 * theta * theta * e + u)).abs() < 1e-14);
        assert!((d[2] - (signed_quadratic(0.4) - 1.3)).abs() < 1e-15);
        let block = HighGainObserver::new(plant(), g).unwrap();
        let mut out = [0.0; 3];
        block.flow(&s.z, s.w, u, &mut out);
        assert_eq!(out.to_vec(), d);
    }

    #[test]
    fn jump_examples() {
        let s = ObserverState {
            z: vec![0.0, 0.0],
            w: 5.0,
        };
        assert_eq!(observer_jump(&s, 0.0), ObserverState::zero(2));
        assert_eq!(observer_jump(&s, 5.0), s);
        let t = ObserverState {
            z: vec![1.5, -2.0],
            w: 0.1,
        };
        assert_eq!(
            observer_jump(&t, 3.0),
            ObserverState {
                z: vec![1.5, -2.0],
                w: 3.0
            }
        );
    }

    #[test]
    fn lti_flow_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let c = DVector::from_vec(vec![1.0, 0.0]);
        let p = DVector::from_vec(vec![-2.0, -1.0]);
        let (dz, dw) =
            lti_observer_flow(&DVector::from_vec(vec![1.0, 0.0]), 0.0, 0.0, &a, &b, &c, &p)
                .unwrap();
        assert_eq!(dz.as_slice(), &[-2.0, -1.0]);
        assert_eq!(dw, 0.0);
        let (dz, dw) = lti_observer_flow(&DVector::zeros(2), 0.0, 0.0, &a, &b, &c, &p).unwrap();
        assert!(dz.iter().all(|v| *v == 0.0) && dw == 0.0);
        // zero innovation reduces to the plant copy
        let z = DVector::from_vec(vec![0.7, -0.2]);
        let (dz, dw) = lti_observer_flow(&z, 0.7, 1.1, &a, &b, &c, &p).unwrap();
        assert_eq!(dz, &a * &z + &b * 1.1);
        assert_eq!(dw, c.dot(&(&a * &z + &b * 1.1)));
        let block = LtiObserver::new(a, b, c, p).unwrap();
        let mut out = [0.0; 3];
        block.flow(z.as_slice(), 0.7, 1.1, &mut out);
        assert_eq!(&out[..2], dz.as_slice());
        assert_eq!(out[2], dw);
    }

    #[test]
    fn omega_for_two_state_defaults() {
        let l = crate::plants::signed_quadratic_lipschitz();
        let w = omega(l, &ObserverGains::two_state_default());
        assert!((w - (3.0 * l + 38.0) / 2.0).abs() < 1e-12);
        assert!(ObserverGains::new(0.5, vec![-1.0]).is_err());
    }

    #[test]
    fn energy_check_zero_and_corrupt() {
        let zero: Vec<EnergySample> = (0..10)
            .map(|k| EnergySample {
                t: k as f64 * 0.1,
                z: vec![0.0, 0.0],
                w: 0.0,
                x_delayed: 0.0,
                xi: 0.0,
                u_delayed: 0.0,
            })
            .collect();
        let r = energy_bound_check(&zero, 2.0, 0.1, 0.0).unwrap();
        assert!(r.holds && r.worst_log_margin.is_infinite());

        // a contracting estimate satisfies the bound, a blown-up copy does not
        let good: Vec<EnergySample> = (0..50)
            .map(|k| {
                let t = k as f64 * 0.1;
                EnergySample {
                    t,
                    z: vec![(-t).exp(), 0.0],
                    w: 0.5 * (-t).exp(),
                    x_delayed: 1.0,
                    xi: 0.0,
                    u_delayed: 0.0,
                }
            })
            .collect();
        assert!(energy_bound_check(&good, 2.0, 0.1, 0.0).unwrap().holds);
        let mut bad = good.clone();
        for s in bad.iter_mut().skip(1) {
            s.z[0] *= 1e6;
        }
        let r = energy_bound_check(&bad, 2.0, 0.1, 0.0).unwrap();
        assert!(!r.holds);
        assert!(r.worst_time > 0.0);
    }
}
