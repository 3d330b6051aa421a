//! Successive-approximation predictor for strict-feedback plants.
//!
//! The horizon `r + tau` is split into `m` subintervals; on each one the
//! integral operator `x(0) + int_0^t (f(x) + A x + b u)` is applied `l` times
//! to a constant initial guess and the end value is carried forward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plants::StrictFeedbackPlant;
use crate::runner::integrate::{rk4_step, step_count, Rk4Scratch};
use crate::signals::{HistoryWindow, PiecewiseConstantSignal};

/// Vector-valued samples on `N + 1` equally spaced nodes of `[0, span]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    span: f64,
    dim: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(span: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if !(span > 0.0) || dim == 0 {
            return Err(Error::InvalidParameter(
                "grid span and dimension must be positive".into(),
            ));
        }
        if !values.len().is_multiple_of(dim) || values.len() / dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form at least two nodes of dimension {dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid function values".into()));
        }
        Ok(Self { span, dim, values })
    }

    /// The constant function `x0` on `intervals + 1` nodes.
    pub fn constant(x0: &[f64], span: f64, intervals: usize) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidParameter(
                "grid needs at least one interval".into(),
            ));
        }
        Self::new(span, x0.len(), x0.repeat(intervals + 1))
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn intervals(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    pub fn spacing(&self) -> f64 {
        self.span / self.intervals() as f64
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.intervals())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// Picard iterations per subinterval.
    pub l: usize,
    /// Number of subintervals.
    pub m: usize,
    /// Quadrature intervals per subinterval.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Prediction horizon `r + tau`.
    pub horizon: f64,
}

fn default_nodes() -> usize {
    64
}

impl PredictorConfig {
    pub fn new(l: usize, m: usize, horizon: f64) -> Result<Self> {
        let cfg = Self {
            l,
            m,
            nodes: default_nodes(),
            horizon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.m == 0 || self.nodes == 0 || !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(
                "predictor needs l, m, nodes >= 1 and a positive horizon".into(),
            ));
        }
        Ok(())
    }

    pub fn sub_length(&self) -> f64 {
        self.horizon / self.m as f64
    }

    /// `rho = (n L + 1) T_sub`.
    pub fn contraction(&self, plant: &StrictFeedbackPlant) -> f64 {
        (plant.dim() as f64 * plant.lipschitz + 1.0) * self.sub_length()
    }

    /// `rho` when it is below one, the vacuous-bound error otherwise.
    pub fn checked_contraction(&self, plant: &StrictFeedbackPlant) -> Result<f64> {
        let rho = self.contraction(plant);
        if rho < 1.0 {
            Ok(rho)
        } else {
            Err(Error::VacuousBound { rho })
        }
    }
}

/// `f(x) + A x` with `A` the upper shift.
fn chain_field(plant: &StrictFeedbackPlant, x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for i in 0..n {
        out[i] = plant.drift_row(x, i) + if i + 1 < n { x[i + 1] } else { 0.0 };
    }
}

fn check_span(u: &PiecewiseConstantSignal, span: f64) -> Result<()> {
    let tol = 1e-9 * span.max(1.0);
    if (u.domain_start()).abs() > tol || (u.domain_end() - span).abs() > tol {
        return Err(Error::InvalidParameter(format!(
            "input window [{}, {}) does not match [0, {span})",
            u.domain_start(),
            u.domain_end()
        )));
    }
    Ok(())
}

/// `int_0^{t_k} u` at every node `t_k = k span / N`.
fn cumulative_input(u: &PiecewiseConstantSignal, span: f64, intervals: usize) -> Vec<f64> {
    let segs: Vec<(f64, f64, f64)> = u.segments().collect();
    let mut out = vec![0.0; intervals + 1];
    let mut j = 0;
    let mut acc = 0.0;
    let h = span / intervals as f64;
    for k in 1..=intervals {
        let (a, b) = (
            (k - 1) as f64 * h,
            if k == intervals { span } else { k as f64 * h },
        );
        while j < segs.len() && segs[j].1 <= a {
            j += 1;
        }
        let mut i = j;
        while i < segs.len() && segs[i].0 < b {
            let overlap = segs[i].1.min(b) - segs[i].0.max(a);
            if overlap > 0.0 {
                acc += segs[i].2 * overlap;
            }
            i += 1;
        }
        out[k] = acc;
    }
    out
}

/// One application of the integral operator on `[0, span]`.
///
/// Composite trapezoid for `f(x) + A x`; exact integration of the held input.
pub fn picard_step(
    x: &GridFunction,
    u: &PiecewiseConstantSignal,
    plant: &StrictFeedbackPlant,
) -> Result<GridFunction> {
    let n = plant.dim();
    if x.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.dim(),
        });
    }
    check_span(u, x.span())?;
    let cum_u = cumulative_input(u, x.span(), x.intervals());
    Ok(picard_step_with(x, &cum_u, plant))
}

fn picard_step_with(x: &GridFunction, cum_u: &[f64], plant: &StrictFeedbackPlant) -> GridFunction {
    let n = x.dim();
    let nodes = x.intervals();
    let h = x.spacing();
    let x0 = x.node(0).to_vec();
    let mut values = Vec::with_capacity((nodes + 1) * n);
    values.extend_from_slice(&x0);
    let mut prev = vec![0.0; n];
    let mut cur = vec![0.0; n];
    let mut acc = vec![0.0; n];
    chain_field(plant, x.node(0), &mut prev);
    for k in 1..=nodes {
        chain_field(plant, x.node(k), &mut cur);
        for i in 0..n {
            acc[i] += 0.5 * h * (prev[i] + cur[i]);
            let input = if i + 1 == n { cum_u[k] } else { 0.0 };
            values.push(x0[i] + acc[i] + input);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    GridFunction {
        span: x.span,
        dim: n,
        values,
    }
}

/// `Q^l x0`: `l` Picard steps from the constant guess, evaluated at the end.
pub fn q_operator(
    x0: &[f64],
    u: &PiecewiseConstantSignal,
    l: usize,
    nodes: usize,
    plant: &StrictFeedbackPlant,
) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::InvalidParameter(
            "need at least one Picard iteration".into(),
        ));
    }
    if x0.len() != plant.dim() {
        return Err(Error::DimensionMismatch {
            expected: plant.dim(),
            found: x0.len(),
        });
    }
    let span = u.domain_end() - u.domain_start();
    check_span(u, span)?;
    let cum_u = cumulative_input(u, span, nodes);
    let mut g = GridFunction::constant(x0, span, nodes)?;
    for _ in 0..l {
        g = picard_step_with(&g, &cum_u, plant);
    }
    if g.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Picard iterate".into()));
    }
    Ok(g.last().to_vec())
}

/// Approximate flow over `[0, r + tau]` from `x` under the input window `u`.
pub fn predict_lm(
    x: &[f64],
    u_window: &PiecewiseConstantSignal,
    cfg: &PredictorConfig,
    plant: &StrictFeedbackPlant,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_span(u_window, cfg.horizon)?;
    let t = cfg.sub_length();
    let mut state = x.to_vec();
    for i in 0..cfg.m {
        let b = if i + 1 == cfg.m {
            cfg.horizon
        } else {
            (i + 1) as f64 * t
        };
        let sub = u_window.window_rebased(i as f64 * t, b)?;
        state = q_operator(&state, &sub, cfg.l, cfg.nodes, plant)?;
    }
    Ok(state)
}

/// Predictor applied to the input history `[t - r - tau, t)`.
pub fn phi_lm(
    z: &[f64],
    history: &HistoryWindow<'_>,
    cfg: &PredictorConfig,
    plant: &StrictFeedbackPlant,
) -> Result<Vec<f64>> {
    if (history.length - cfg.horizon).abs() > 1e-9 * cfg.horizon.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "history length {} differs from the horizon {}",
            history.length, cfg.horizon
        )));
    }
    predict_lm(z, &history.rebased()?, cfg, plant)
}

/// `K rho^{l+1} / (1 - rho) (|x| + sup|u|)`.
pub fn error_bound(
    cfg: &PredictorConfig,
    plant: &StrictFeedbackPlant,
    k: f64,
    x_norm: f64,
    u_sup: f64,
) -> Result<f64> {
    let rho = cfg.checked_contraction(plant)?;
    if !(k >= 0.0 && x_norm >= 0.0 && u_sup >= 0.0) {
        return Err(Error::InvalidParameter(
            "K and norms must be nonnegative".into(),
        ));
    }
    Ok(k * rho.powi(cfg.l as i32 + 1) / (1.0 - rho) * (x_norm + u_sup))
}

/// Linear-growth constant of the predictor:
/// `K rho^{l+1} / (1 - rho) + exp(((n+1) L + 3)(r + tau) / 2)`.
pub fn gamma_bound(cfg: &PredictorConfig, plant: &StrictFeedbackPlant, k: f64) -> Result<f64> {
    let rho = cfg.checked_contraction(plant)?;
    let rate = (plant.dim() as f64 + 1.0) * plant.lipschitz + 3.0;
    Ok(k * rho.powi(cfg.l as i32 + 1) / (1.0 - rho) + (rate * cfg.horizon / 2.0).exp())
}

/// Fine RK4 flow of `x' = f(x) + A x + b u` over the domain of `u`, with
/// steps of at most `h` aligned to the input switches.
pub fn reference_flow(
    plant: &StrictFeedbackPlant,
    x: &[f64],
    u: &PiecewiseConstantSignal,
    h: f64,
) -> Result<Vec<f64>> {
    let n = plant.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    let mut state = x.to_vec();
    let mut scratch = Rk4Scratch::new(n);
    for (s, e, v) in u.segments() {
        let steps = step_count(s, e, h);
        let dt = (e - s) / steps as f64;
        let mut field = |_: f64, z: &[f64], out: &mut [f64]| {
            chain_field(plant, z, out);
            out[n - 1] += v;
        };
        for k in 0..steps {
            rk4_step(&mut field, s + k as f64 * dt, &mut state, dt, &mut scratch);
        }
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reference flow".into()));
    }
    Ok(state)
}

/// Empirical estimate of the constant in the approximation bound: the
/// largest observed `|error| (1 - rho) / (rho^{l+1} (|x| + sup|u|))` over
/// seeded random probes drawn at several scales.
pub fn calibrate_k(
    cfg: &PredictorConfig,
    plant: &StrictFeedbackPlant,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let rho = cfg.checked_contraction(plant)?;
    let n = plant.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pieces = 4 * cfg.m;
    let h = cfg.sub_length() / 2000.0;
    let mut worst = 0.0_f64;
    for k in 0..samples {
        let scale = 10f64.powi((k % 4) as i32 - 2);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        let vals: Vec<f64> = (0..pieces)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        let u = PiecewiseConstantSignal::uniform(&vals, 0.0, cfg.horizon)?;
        let approx = predict_lm(&x, &u, cfg, plant)?;
        let exact = reference_flow(plant, &x, &u, h)?;
        let err = approx
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let size = x.iter().map(|v| v * v).sum::<f64>().sqrt() + u.sup_abs();
        if size > 0.0 {
            worst = worst.max(err * (1.0 - rho) / (rho.powi(cfg.l as i32 + 1) * size));
        }
    }
    Ok(worst)
}
