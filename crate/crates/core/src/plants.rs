//! Plant families: globally Lipschitz strict-feedback chains, the
//! three-state feedforward example, and LTI plants.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounded saturation `x / max(1, |x|)`.
pub fn saturation(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("saturation argument".into()));
    }
    Ok(x / x.abs().max(1.0))
}

pub(crate) fn sat(x: f64) -> f64 {
    x / x.abs().max(1.0)
}

/// `sgn(x) x^2 / sqrt(1 + x^2)`, the drift of the two-state example.
pub fn signed_quadratic(x: f64) -> f64 {
    x * x.abs() / (1.0 + x * x).sqrt()
}

/// Global Lipschitz constant of [`signed_quadratic`], `4 sqrt(2) / (3 sqrt(3))`.
pub fn signed_quadratic_lipschitz() -> f64 {
    4.0 * 2f64.sqrt() / (3.0 * 3f64.sqrt())
}

/// Drift term `f_i(x_1, ..., x_i)` of one strict-feedback row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Drift {
    Zero,
    /// `sgn(x_i) x_i^2 / sqrt(1 + x_i^2)`
    SignedQuadratic,
    /// `amplitude * sin(x_i)`
    Sine {
        amplitude: f64,
    },
    /// `sum_j coeffs[j] x_{j+1}` over the first `i` states.
    Linear {
        coeffs: Vec<f64>,
    },
}

impl Drift {
    /// Evaluates on the leading block `x[..=row]`.
    pub fn eval(&self, x: &[f64], row: usize) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::SignedQuadratic => signed_quadratic(x[row]),
            Drift::Sine { amplitude } => amplitude * x[row].sin(),
            Drift::Linear { coeffs } => coeffs.iter().zip(&x[..=row]).map(|(c, v)| c * v).sum(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::SignedQuadratic => signed_quadratic_lipschitz(),
            Drift::Sine { amplitude } => amplitude.abs(),
            Drift::Linear { coeffs } => coeffs.iter().map(|c| c * c).sum::<f64>().sqrt(),
        }
    }
}

/// Disturbance gain `g_i(x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceGain {
    Constant {
        value: f64,
    },
    /// `amplitude * cos(x_1)`
    CosFirstState {
        amplitude: f64,
    },
}

impl Default for DisturbanceGain {
    fn default() -> Self {
        DisturbanceGain::Constant { value: 1.0 }
    }
}

impl DisturbanceGain {
    pub fn eval(&self, x: &[f64], _u: f64) -> f64 {
        match self {
            DisturbanceGain::Constant { value } => *value,
            DisturbanceGain::CosFirstState { amplitude } => amplitude * x[0].cos(),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            DisturbanceGain::Constant { value } => value.abs(),
            DisturbanceGain::CosFirstState { amplitude } => amplitude.abs(),
        }
    }
}

/// `x_i' = f_i(x_1..x_i) + x_{i+1} + g_i d_i`, `x_n' = f_n(x) + g_n d_n + u(t - tau)`,
/// measured output `x_1(t - r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrictFeedbackPlant {
    pub drifts: Vec<Drift>,
    pub gains: Vec<DisturbanceGain>,
    /// Declared Lipschitz constant `L` shared by every `f_i`.
    pub lipschitz: f64,
    /// Declared disturbance-gain bound `G`.
    pub gain_bound: f64,
    pub r: f64,
    pub tau: f64,
}

impl StrictFeedbackPlant {
    /// Plant with unit disturbance gains; `L` and `G` derived from the rows.
    pub fn new(drifts: Vec<Drift>, r: f64, tau: f64) -> Result<Self> {
        let n = drifts.len();
        let lipschitz = drifts.iter().map(Drift::lipschitz).fold(0.0, f64::max);
        Self::with_constants(
            drifts,
            vec![DisturbanceGain::default(); n],
            lipschitz,
            1.0,
            r,
            tau,
        )
    }

    pub fn with_constants(
        drifts: Vec<Drift>,
        gains: Vec<DisturbanceGain>,
        lipschitz: f64,
        gain_bound: f64,
        r: f64,
        tau: f64,
    ) -> Result<Self> {
        if drifts.is_empty() {
            return Err(Error::InvalidParameter(
                "strict-feedback plant needs n >= 1".into(),
            ));
        }
        if gains.len() != drifts.len() {
            return Err(Error::DimensionMismatch {
                expected: drifts.len(),
                found: gains.len(),
            });
        }
        for (i, d) in drifts.iter().enumerate() {
            if let Drift::Linear { coeffs } = d {
                if coeffs.len() != i + 1 {
                    return Err(Error::DimensionMismatch {
                        expected: i + 1,
                        found: coeffs.len(),
                    });
                }
            }
        }
        if !(lipschitz >= 0.0 && gain_bound >= 0.0 && r >= 0.0 && tau >= 0.0) || r + tau <= 0.0 {
            return Err(Error::InvalidParameter(
                "L, G, r, tau must be nonnegative with r + tau > 0".into(),
            ));
        }
        Ok(Self {
            drifts,
            gains,
            lipschitz,
            gain_bound,
            r,
            tau,
        })
    }

    /// `x1' = f(x1) + x2`, `x2' = u(t - tau)` with `f = signed_quadratic`.
    pub fn two_state_example(r: f64, tau: f64) -> Result<Self> {
        let mut plant = Self::new(vec![Drift::SignedQuadratic, Drift::Zero], r, tau)?;
        plant.lipschitz = signed_quadratic_lipschitz();
        Ok(plant)
    }

    pub fn dim(&self) -> usize {
        self.drifts.len()
    }

    /// `f(x) = (f_1(x_1), ..., f_n(x))`.
    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        self.drifts
            .iter()
            .enumerate()
            .map(|(i, d)| d.eval(x, i))
            .collect()
    }

    /// Drift of row `i` only.
    pub fn drift_row(&self, x: &[f64], row: usize) -> f64 {
        self.drifts[row].eval(x, row)
    }

    pub fn rhs(&self, x: &[f64], u_delayed: f64, d: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        check_dim(n, x.len())?;
        check_dim(n, d.len())?;
        let mut out = vec![0.0; n];
        self.rhs_into(x, u_delayed, d, &mut out);
        Ok(out)
    }

    /// Unchecked right-hand side; `u_delayed` is also passed to `g_i`.
    pub fn rhs_into(&self, x: &[f64], u_delayed: f64, d: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let chain = if i + 1 < n { x[i + 1] } else { u_delayed };
            out[i] = self.drift_row(x, i) + chain + self.gains[i].eval(x, u_delayed) * d[i];
        }
    }

    /// Randomized check of the declared `L` and `G`; returns the worst observed
    /// ratios `(max |f_i(x) - f_i(z)| / |x - z|, max |g_i|)`.
    pub fn probe_constants(&self, probes: usize, seed: u64) -> (f64, f64) {
        let n = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst_l = 0.0_f64;
        let mut worst_g = 0.0_f64;
        for k in 0..probes {
            let scale = 10f64.powi((k % 5) as i32 - 2);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
            let u = rng.random_range(-scale..scale);
            for i in 0..n {
                let dist = x[..=i]
                    .iter()
                    .zip(&z[..=i])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dist > 0.0 {
                    let diff = (self.drift_row(&x, i) - self.drift_row(&z, i)).abs();
                    worst_l = worst_l.max(diff / dist);
                }
                worst_g = worst_g.max(self.gains[i].eval(&x, u).abs());
            }
        }
        (worst_l, worst_g)
    }
}

/// Growth ceiling for strict-feedback trajectories:
/// `(|x0| + (G d + u) / sqrt((n+1)L + 3)) * exp(((n+1)L + 3) t / 2)`.
pub fn growth_envelope(
    plant: &StrictFeedbackPlant,
    x0_norm: f64,
    d_sup: f64,
    u_sup: f64,
    t: f64,
) -> Result<f64> {
    if [x0_norm, d_sup, u_sup, t].iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParameter(
            "growth envelope inputs must be nonnegative".into(),
        ));
    }
    let rate = (plant.dim() as f64 + 1.0) * plant.lipschitz + 3.0;
    Ok((x0_norm + (plant.gain_bound * d_sup + u_sup) / rate.sqrt()) * (rate * t / 2.0).exp())
}

/// Output map of the feedforward example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputCase {
    /// `y = (x1, x3)`
    TwoOutput,
    /// `y = x3`, inputs restricted to `[-eps, eps]`
    OneOutput,
}

impl OutputCase {
    /// Number of past output samples the reconstruction needs beyond the current one.
    pub fn horizon(self) -> usize {
        match self {
            OutputCase::TwoOutput => 1,
            OutputCase::OneOutput => 2,
        }
    }
}

/// `x1' = u(t - tau)`, `x2' = x1 + x1 u(t - tau)`, `x3' = x2 + x1^2`,
/// sampled and held with common period `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardPlant {
    pub r: f64,
    pub tau: f64,
    pub period: f64,
    pub epsilon: f64,
    pub output: OutputCase,
}

impl FeedforwardPlant {
    pub fn new(r: f64, tau: f64, period: f64, epsilon: f64, output: OutputCase) -> Result<Self> {
        if !(period > 0.0) || !(r >= 0.0) || !(tau >= 0.0) {
            return Err(Error::InvalidParameter(
                "period must be positive, delays nonnegative".into(),
            ));
        }
        let delta = r + tau;
        if !(delta > 0.0 && delta < period) {
            return Err(Error::InvalidParameter(format!(
                "only 0 < r + tau < T is supported, got r + tau = {delta}, T = {period}"
            )));
        }
        if output == OutputCase::OneOutput && !(epsilon > 0.0 && epsilon < 1.0 / 6.0) {
            return Err(Error::InvalidParameter(format!(
                "one-output reconstruction needs 0 < eps < 1/6, got {epsilon}"
            )));
        }
        Ok(Self {
            r,
            tau,
            period,
            epsilon,
            output,
        })
    }

    /// Fractional delay `delta = r + tau` (the integer part `l` is zero here).
    pub fn delta(&self) -> f64 {
        self.r + self.tau
    }

    pub fn output_map(&self, x: &[f64]) -> Vec<f64> {
        match self.output {
            OutputCase::TwoOutput => vec![x[0], x[2]],
            OutputCase::OneOutput => vec![x[2]],
        }
    }
}

/// `(u, x1 + x1 u, x2 + x1^2)`
pub fn feedforward_rhs(x: &[f64; 3], u_delayed: f64) -> [f64; 3] {
    [u_delayed, x[0] + x[0] * u_delayed, x[1] + x[0] * x[0]]
}

/// `x' = A x + B u(t - tau) + G d`, output `c' x(t - r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiPlant {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub c: DVector<f64>,
    pub r: f64,
    pub tau: f64,
}

impl LtiPlant {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        g: DMatrix<f64>,
        c: DVector<f64>,
        r: f64,
        tau: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        check_dim(n, a.ncols())?;
        check_dim(n, b.len())?;
        check_dim(n, g.nrows())?;
        check_dim(n, g.ncols())?;
        check_dim(n, c.len())?;
        if !(r >= 0.0 && tau >= 0.0) {
            return Err(Error::InvalidParameter("delays must be nonnegative".into()));
        }
        if a.iter()
            .chain(b.iter())
            .chain(g.iter())
            .chain(c.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("LTI plant matrices".into()));
        }
        Ok(Self { a, b, g, c, r, tau })
    }

    /// `x1' = x2`, `x2' = u(t - tau)` measured through `x1`.
    pub fn double_integrator(r: f64, tau: f64) -> Self {
        Self {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: DVector::from_vec(vec![0.0, 1.0]),
            g: DMatrix::identity(2, 2),
            c: DVector::from_vec(vec![1.0, 0.0]),
            r,
            tau,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn rhs(&self, x: &[f64], u_delayed: f64, d: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        check_dim(n, x.len())?;
        check_dim(n, d.len())?;
        let mut out = vec![0.0; n];
        self.rhs_into(x, u_delayed, d, &mut out);
        Ok(out)
    }

    pub fn rhs_into(&self, x: &[f64], u_delayed: f64, d: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.b[i] * u_delayed;
            for j in 0..n {
                acc += self.a[(i, j)] * x[j] + self.g[(i, j)] * d[j];
            }
            out[i] = acc;
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
