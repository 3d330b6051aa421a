//! Exact predictor for LTI plants, ZOH discretization, and pole placement.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::plants::check_dim;
use crate::signals::PiecewiseConstantSignal;

/// `exp(A t)`; exactly the identity at `t = 0`.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    check_dim(a.nrows(), a.ncols())?;
    if !t.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix exponential argument".into()));
    }
    if t == 0.0 {
        return Ok(DMatrix::identity(a.nrows(), a.nrows()));
    }
    Ok((a * t).exp())
}

/// `(exp(A h), int_0^h exp(A s) ds B)` from one augmented exponential.
pub fn zoh_pair(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    h: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = a.nrows();
    check_dim(n, a.ncols())?;
    check_dim(n, b.len())?;
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, 1)).copy_from(b);
    let e = matrix_exponential(&aug, h)?;
    Ok((
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, 1)).column(0).into_owned(),
    ))
}

/// ZOH discretization with period `T`: `(A_d, B_d)`.
pub fn discretize(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    period: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(period > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "period must be positive, got {period}"
        )));
    }
    zoh_pair(a, b, period)
}

/// `exp(A (r+tau)) z + int_{-r-tau}^0 exp(-A s) B u(s) ds` with the history
/// given on `[0, r + tau)`; exact for piecewise-constant inputs.
pub fn lti_predict(
    z: &DVector<f64>,
    u_window: &PiecewiseConstantSignal,
    horizon: f64,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim(a.nrows(), z.len())?;
    let tol = 1e-9 * horizon.max(1.0);
    if u_window.domain_start().abs() > tol || (u_window.domain_end() - horizon).abs() > tol {
        return Err(Error::InvalidParameter(format!(
            "input window [{}, {}) does not match the horizon {horizon}",
            u_window.domain_start(),
            u_window.domain_end()
        )));
    }
    let mut x = z.clone();
    for (s, e, v) in u_window.segments() {
        let (ad, bd) = zoh_pair(a, b, e - s)?;
        x = ad * x + bd * v;
    }
    Ok(x)
}

/// `k' Phi(z, u)`.
pub fn lti_control(
    z: &DVector<f64>,
    u_window: &PiecewiseConstantSignal,
    horizon: f64,
    k: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<f64> {
    check_dim(a.nrows(), k.len())?;
    Ok(k.dot(&lti_predict(z, u_window, horizon, a, b)?))
}

/// Monic characteristic coefficients `[c_0, ..., c_{n-1}]` of `prod (s - root)`.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= r * ci;
        }
        c = next;
    }
    c.pop();
    c
}

/// Gain `k` such that `A + B k'` has the characteristic polynomial with the
/// given real roots (Ackermann).
pub fn ackermann(a: &DMatrix<f64>, b: &DVector<f64>, roots: &[f64]) -> Result<DVector<f64>> {
    let n = a.nrows();
    check_dim(n, a.ncols())?;
    check_dim(n, b.len())?;
    check_dim(n, roots.len())?;
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.clone();
    for j in 0..n {
        ctrb.set_column(j, &col);
        col = a * col;
    }
    let inv = ctrb.try_inverse().ok_or(Error::Degenerate)?;
    let coeffs = poly_from_roots(roots);
    // p(A) = A^n + sum c_i A^i
    let mut pa = DMatrix::zeros(n, n);
    let mut power = DMatrix::identity(n, n);
    for c in &coeffs {
        pa += &power * *c;
        power = &power * a;
    }
    pa += power;
    let last = inv.row(n - 1).into_owned();
    Ok(-(last * pa).transpose())
}

/// Observer vector `p` such that `A + p c'` has the given real roots.
pub fn observer_gain(a: &DMatrix<f64>, c: &DVector<f64>, roots: &[f64]) -> Result<DVector<f64>> {
    ackermann(&a.transpose(), c, roots)
}

/// Exact output-feedback law for LTI plants with common sample/hold period
/// `T > r + tau`: the state `x(iT - r)` is recovered from the last `n`
/// scalar samples and the inputs acting between them, predicted to
/// `iT + tau`, and fed to a sampled gain.
#[derive(Debug, Clone)]
pub struct LtiReconstructor {
    pub k: DVector<f64>,
    pub warmup: f64,
    ad: DMatrix<f64>,
    /// Contribution of the earlier held value over one period.
    e1: DVector<f64>,
    /// Contribution of the later held value over one period.
    e2: DVector<f64>,
    pred_a: DMatrix<f64>,
    pred_b: DVector<f64>,
    c: DVector<f64>,
    obs: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl LtiReconstructor {
    pub fn new(
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
        k: DVector<f64>,
        period: f64,
        delta: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        check_dim(n, k.len())?;
        check_dim(n, c.len())?;
        if !(delta > 0.0 && delta < period) {
            return Err(Error::InvalidParameter(format!(
                "reconstruction needs 0 < r + tau < T, got {delta} and T = {period}"
            )));
        }
        let (ad, _) = discretize(a, b, period)?;
        let (head_a, head_b) = zoh_pair(a, b, delta)?;
        let (tail_a, tail_b) = zoh_pair(a, b, period - delta)?;
        let e1 = &tail_a * head_b.clone();
        let mut obs = DMatrix::zeros(n, n);
        let mut row = c.transpose();
        for i in 0..n {
            obs.set_row(i, &row);
            row = &row * &ad;
        }
        if obs.clone().try_inverse().is_none() {
            return Err(Error::Degenerate);
        }
        Ok(Self {
            k,
            warmup: 0.0,
            ad,
            e1,
            e2: tail_b,
            pred_a: head_a,
            pred_b: head_b,
            c: c.clone(),
            obs: obs.lu(),
        })
    }

    /// Steps of output history beyond the current sample.
    pub fn horizon(&self) -> usize {
        self.k.len() - 1
    }

    /// `x(iT - r)` from scalar samples `y[0..=i]` and computed inputs `u[0..i]`.
    pub fn reconstruct(&self, i: usize, y: &[f64], u: &[f64]) -> Result<DVector<f64>> {
        let p = self.horizon();
        if i < p + 1 || y.len() <= i || u.len() < i {
            return Err(Error::InsufficientHistory(format!(
                "index {i} needs {} earlier samples",
                p + 1
            )));
        }
        let n = p + 1;
        let base = i - p;
        let mut forced = DVector::zeros(n);
        let mut rhs = DVector::zeros(n);
        for j in 0..n {
            rhs[j] = y[base + j] - self.c.dot(&forced);
            if j + 1 < n {
                forced = &self.ad * forced + &self.e1 * u[base + j - 1] + &self.e2 * u[base + j];
            }
        }
        let x0 = self.obs.solve(&rhs).ok_or(Error::Degenerate)?;
        let mut pow = DMatrix::identity(n, n);
        for _ in 0..p {
            pow = &self.ad * pow;
        }
        Ok(pow * x0 + forced)
    }

    /// `(u_i, x(iT - r), x(iT + tau))`, or the warm-up input while `i <= p`.
    pub fn control(
        &self,
        i: usize,
        y: &[f64],
        u: &[f64],
    ) -> Result<(f64, Option<(DVector<f64>, DVector<f64>)>)> {
        if i < self.horizon() + 1 {
            return Ok((self.warmup, None));
        }
        let x = self.reconstruct(i, y, u)?;
        let pred = &self.pred_a * &x + &self.pred_b * u[i - 1];
        Ok((self.k.dot(&pred), Some((x, pred))))
    }
}

/// Outcome of [`deadbeat_demo`].
#[derive(Debug, Clone)]
pub struct DeadbeatDemo {
    /// `(p + 1 + n) T + tau`, when the state should vanish.
    pub predicted_time: f64,
    /// `sup |x(t)|` over `t >= predicted_time`.
    pub residual: f64,
    pub gain: DVector<f64>,
    pub log: crate::runner::log::SimulationLog,
}

/// Double integrator with `T = 0.5`, `r = 0.1`, `tau = 0.15` under the
/// reconstruction controller with the dead-beat gain times `gain_scale`.
pub fn deadbeat_demo(gain_scale: f64) -> Result<DeadbeatDemo> {
    use crate::runner::scenario::{
        run_closed_loop, ControllerSpec, GainSpec, InitialData, PlantSpec, Scenario,
    };

    let (period, r, tau) = (0.5, 0.1, 0.15);
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DVector::from_vec(vec![0.0, 1.0]);
    let (ad, bd) = discretize(&a, &b, period)?;
    let gain = ackermann(&ad, &bd, &[0.0, 0.0])? * gain_scale;
    let scenario = Scenario {
        plant: PlantSpec::Lti {
            a: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            b: vec![0.0, 1.0],
            g: None,
            c: vec![1.0, 0.0],
        },
        controller: ControllerSpec::LtiReconstruction {
            k: GainSpec::Vector(gain.as_slice().to_vec()),
            warmup: 0.0,
        },
        observer: None,
        r,
        tau,
        t1: period,
        t2: period,
        perturbation: Default::default(),
        disturbance: Default::default(),
        noise: Default::default(),
        initial: InitialData {
            x: vec![1.0, -0.5],
            u: 0.2,
            u_length: None,
            z: None,
            w: 0.0,
        },
        horizon: 6.0,
        step: None,
        seed: 0,
        log_steps: true,
    };
    let log = run_closed_loop(&scenario)?;
    let n = a.nrows();
    let predicted_time = (n + n) as f64 * period + tau;
    let residual = log
        .rows_between(predicted_time - 1e-9, f64::INFINITY)
        .map(|row| row.x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    Ok(DeadbeatDemo {
        predicted_time,
        residual,
        gain,
        log,
    })
}
