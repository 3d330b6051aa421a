//! Scenario configuration and assembly of the closed loops.
//!
//! A scenario is a JSON document; sample files live in `crates/cli/configs`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::approx_predictor::{phi_lm, PredictorConfig};
use crate::error::{Error, Result};
use crate::exact_predictor::{solution_map, FeedforwardController, FeedforwardGains};
use crate::lti::{ackermann, discretize, lti_predict, observer_gain, LtiReconstructor};
use crate::observer::{HighGainObserver, LtiObserver, ObserverBlock, ObserverGains, ObserverState};
use crate::plants::{
    DisturbanceGain, Drift, FeedforwardPlant, LtiPlant, OutputCase, StrictFeedbackPlant,
};
use crate::runner::controllers::{
    ApproxController, LtiPredictorController, ReconstructionController,
};
use crate::runner::engine::{simulate, Controller, EngineConfig, PlantModel};
use crate::runner::exogenous::{Exogenous, SignalSpec};
use crate::runner::log::SimulationLog;
use crate::signals::{generate_schedule, HistoryWindow, PiecewiseConstantSignal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantSpec {
    StrictFeedback {
        drifts: Vec<Drift>,
        #[serde(default)]
        gains: Option<Vec<DisturbanceGain>>,
        /// Overrides the Lipschitz constant derived from the drifts.
        #[serde(default)]
        lipschitz: Option<f64>,
        #[serde(default)]
        gain_bound: Option<f64>,
    },
    /// `x1' = f(x1) + x2`, `x2' = u(t - tau)`, `f(x) = x|x| / (1 + x^2)`.
    TwoState,
    Feedforward {
        epsilon: f64,
        output: OutputCase,
    },
    /// Row-major `a` and `g`; `g` defaults to the identity.
    Lti {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        #[serde(default)]
        g: Option<Vec<Vec<f64>>>,
        c: Vec<f64>,
    },
}

/// Either an explicit gain vector or real closed-loop poles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Vector(Vec<f64>),
    Poles { poles: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    ExactFf {
        #[serde(default)]
        gains: FeedforwardGains,
        #[serde(default)]
        warmup: f64,
    },
    ApproxLipschitz {
        k: Vec<f64>,
        l: usize,
        m: usize,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
    LtiExact {
        k: GainSpec,
    },
    /// Sample-based reconstruction with a discrete gain; poles are
    /// placed for the sampled model, so zeros give dead-beat.
    LtiReconstruction {
        k: GainSpec,
        #[serde(default)]
        warmup: f64,
    },
}

fn default_nodes() -> usize {
    64
}

fn default_theta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverSpec {
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub p: GainSpec,
}

/// One signal for every channel, or one per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Each(Vec<SignalSpec>),
    All(SignalSpec),
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec::All(SignalSpec::Zero)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    /// Constant state on `[-r, 0]`.
    pub x: Vec<f64>,
    /// Constant input on `[-u_length, 0)`.
    #[serde(default)]
    pub u: f64,
    #[serde(default)]
    pub u_length: Option<f64>,
    #[serde(default)]
    pub z: Option<Vec<f64>>,
    #[serde(default)]
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub plant: PlantSpec,
    pub controller: ControllerSpec,
    #[serde(default)]
    pub observer: Option<ObserverSpec>,
    pub r: f64,
    pub tau: f64,
    pub t1: f64,
    pub t2: f64,
    /// `b` in `tau_{i+1} = tau_i + T1 exp(-b(tau_i))`.
    #[serde(default)]
    pub perturbation: SignalSpec,
    #[serde(default)]
    pub disturbance: ChannelSpec,
    #[serde(default)]
    pub noise: SignalSpec,
    pub initial: InitialData,
    pub horizon: f64,
    /// Defaults to `min(T1, T2) / 20`.
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Log every integration step as well as the events.
    #[serde(default = "default_true")]
    pub log_steps: bool,
}

fn default_true() -> bool {
    true
}

/// A scenario turned into engine parts.
pub struct Assembled {
    pub plant: Box<dyn PlantModel>,
    pub observer: Option<Box<dyn ObserverBlock>>,
    pub controller: Box<dyn Controller>,
    pub engine: EngineConfig,
    /// Present for strict-feedback plants.
    pub strict: Option<StrictFeedbackPlant>,
}

fn matrix(rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParameter(format!(
            "expected a {n}x{n} matrix"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl Scenario {
    /// The two-state loop with the predictor at `l = m = 1`.
    pub fn reference() -> Self {
        Self {
            plant: PlantSpec::TwoState,
            controller: ControllerSpec::ApproxLipschitz {
                k: vec![-15.0, -9.0],
                l: 1,
                m: 1,
                nodes: default_nodes(),
            },
            observer: Some(ObserverSpec {
                theta: 1.0,
                p: GainSpec::Vector(vec![-3.0, -3.0]),
            }),
            r: 0.25,
            tau: 0.25,
            t1: 0.03,
            t2: 0.01,
            perturbation: SignalSpec::Zero,
            disturbance: ChannelSpec::default(),
            noise: SignalSpec::Zero,
            initial: InitialData {
                x: vec![1.0, 1.0],
                u: -2.0,
                u_length: Some(0.5),
                z: Some(vec![0.0, 0.0]),
                w: 0.0,
            },
            horizon: 20.0,
            step: None,
            seed: 0,
            log_steps: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("scenario: {e}")))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn step(&self) -> f64 {
        self.step.unwrap_or(self.t1.min(self.t2) / 20.0)
    }

    pub fn delta(&self) -> f64 {
        self.r + self.tau
    }

    pub fn strict_plant(&self) -> Result<StrictFeedbackPlant> {
        match &self.plant {
            PlantSpec::TwoState => StrictFeedbackPlant::two_state_example(self.r, self.tau),
            PlantSpec::StrictFeedback {
                drifts,
                gains,
                lipschitz,
                gain_bound,
            } => {
                let base = StrictFeedbackPlant::new(drifts.clone(), self.r, self.tau)?;
                StrictFeedbackPlant::with_constants(
                    drifts.clone(),
                    gains.clone().unwrap_or(base.gains),
                    lipschitz.unwrap_or(base.lipschitz),
                    gain_bound.unwrap_or(base.gain_bound),
                    self.r,
                    self.tau,
                )
            }
            _ => Err(Error::InvalidParameter(
                "scenario plant is not in strict-feedback form".into(),
            )),
        }
    }

    pub fn lti_plant(&self) -> Result<LtiPlant> {
        match &self.plant {
            PlantSpec::Lti { a, b, g, c } => {
                let n = b.len();
                let g = match g {
                    Some(g) => matrix(g, n)?,
                    None => DMatrix::identity(n, n),
                };
                LtiPlant::new(
                    matrix(a, n)?,
                    DVector::from_vec(b.clone()),
                    g,
                    DVector::from_vec(c.clone()),
                    self.r,
                    self.tau,
                )
            }
            _ => Err(Error::InvalidParameter(
                "scenario plant is not linear".into(),
            )),
        }
    }

    pub fn predictor_config(&self) -> Result<PredictorConfig> {
        match &self.controller {
            ControllerSpec::ApproxLipschitz { l, m, nodes, .. } => {
                let cfg = PredictorConfig {
                    l: *l,
                    m: *m,
                    nodes: *nodes,
                    horizon: self.delta(),
                };
                cfg.validate()?;
                Ok(cfg)
            }
            _ => Err(Error::InvalidParameter(
                "controller has no Picard predictor".into(),
            )),
        }
    }

    fn dim(&self) -> usize {
        match &self.plant {
            PlantSpec::StrictFeedback { drifts, .. } => drifts.len(),
            PlantSpec::TwoState => 2,
            PlantSpec::Feedforward { .. } => 3,
            PlantSpec::Lti { b, .. } => b.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (v, what) in [
            (self.t1, "T1"),
            (self.t2, "T2"),
            (self.horizon, "horizon"),
            (self.step(), "step"),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{what} must be positive, got {v}"
                )));
            }
        }
        if !(self.r >= 0.0 && self.tau >= 0.0) {
            return Err(Error::InvalidParameter("delays must be nonnegative".into()));
        }
        if self.initial.x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: self.initial.x.len(),
            });
        }
        Ok(())
    }

    fn sampled_with_holds(&self) -> Result<()> {
        if self.t1 != self.t2 || self.perturbation != SignalSpec::Zero {
            return Err(Error::InvalidParameter(
                "sample-based reconstruction needs T1 = T2 and an unperturbed schedule".into(),
            ));
        }
        Ok(())
    }

    fn default_u_length(&self) -> f64 {
        match &self.controller {
            ControllerSpec::ExactFf { .. } => {
                let p = match &self.plant {
                    PlantSpec::Feedforward { output, .. } => output.horizon(),
                    _ => 1,
                };
                (p as f64 + 2.0) * self.t2
            }
            ControllerSpec::LtiReconstruction { .. } => (self.dim() as f64 + 1.0) * self.t2,
            _ => self.delta(),
        }
    }

    fn resolve_gain(
        &self,
        spec: &GainSpec,
        a: &DMatrix<f64>,
        b: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        match spec {
            GainSpec::Vector(v) => Ok(DVector::from_vec(v.clone())),
            GainSpec::Poles { poles } => ackermann(a, b, poles),
        }
    }

    pub fn assemble(&self) -> Result<Assembled> {
        self.validate()?;
        let n = self.dim();
        let b_sig = self.perturbation.resolve(self.horizon, self.seed)?;
        let schedule = generate_schedule(self.t1, |t| b_sig.eval(t), self.horizon)?;
        let disturbance: Vec<Exogenous> = match &self.disturbance {
            ChannelSpec::All(s) => (0..n)
                .map(|i| s.resolve(self.horizon, self.seed + 1 + i as u64))
                .collect::<Result<_>>()?,
            ChannelSpec::Each(v) => {
                if v.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: v.len(),
                    });
                }
                v.iter()
                    .enumerate()
                    .map(|(i, s)| s.resolve(self.horizon, self.seed + 1 + i as u64))
                    .collect::<Result<_>>()?
            }
        };
        let noise = self.noise.resolve(self.horizon, self.seed + 2)?;
        let u_length = self
            .initial
            .u_length
            .unwrap_or_else(|| self.default_u_length());
        let u_history = PiecewiseConstantSignal::constant(self.initial.u, -u_length, 0.0)?;

        let mut strict = None;
        let (plant, observer, controller): (
            Box<dyn PlantModel>,
            Option<Box<dyn ObserverBlock>>,
            Box<dyn Controller>,
        ) = match &self.controller {
            ControllerSpec::ApproxLipschitz { k, .. } => {
                let plant = self.strict_plant()?;
                let obs = self.observer.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("approx_lipschitz needs an observer".into())
                })?;
                let p = match &obs.p {
                    GainSpec::Vector(p) => p.clone(),
                    GainSpec::Poles { .. } => {
                        return Err(Error::InvalidParameter(
                            "high-gain observer needs an explicit p".into(),
                        ))
                    }
                };
                let observer =
                    HighGainObserver::new(plant.clone(), ObserverGains::new(obs.theta, p)?)?;
                let ctrl =
                    ApproxController::new(plant.clone(), self.predictor_config()?, k.clone())?;
                strict = Some(plant.clone());
                (Box::new(plant), Some(Box::new(observer)), Box::new(ctrl))
            }
            ControllerSpec::ExactFf { gains, warmup } => {
                let PlantSpec::Feedforward { epsilon, output } = &self.plant else {
                    return Err(Error::InvalidParameter(
                        "exact_ff needs the feedforward plant".into(),
                    ));
                };
                self.sampled_with_holds()?;
                let plant = FeedforwardPlant::new(self.r, self.tau, self.t2, *epsilon, *output)?;
                let mut ctrl = FeedforwardController::new(plant.clone(), *gains)?;
                ctrl.warmup = Some(*warmup);
                (Box::new(plant), None, Box::new(ctrl))
            }
            ControllerSpec::LtiExact { k } => {
                let plant = self.lti_plant()?;
                let obs = self
                    .observer
                    .as_ref()
                    .ok_or_else(|| Error::InvalidParameter("lti_exact needs an observer".into()))?;
                let p = match &obs.p {
                    GainSpec::Vector(p) => DVector::from_vec(p.clone()),
                    GainSpec::Poles { poles } => observer_gain(&plant.a, &plant.c, poles)?,
                };
                let k = self.resolve_gain(k, &plant.a, &plant.b)?;
                let observer =
                    LtiObserver::new(plant.a.clone(), plant.b.clone(), plant.c.clone(), p)?;
                let ctrl = LtiPredictorController {
                    a: plant.a.clone(),
                    b: plant.b.clone(),
                    k,
                    horizon: self.delta(),
                };
                (Box::new(plant), Some(Box::new(observer)), Box::new(ctrl))
            }
            ControllerSpec::LtiReconstruction { k, warmup } => {
                self.sampled_with_holds()?;
                let plant = self.lti_plant()?;
                let k = match k {
                    GainSpec::Vector(v) => DVector::from_vec(v.clone()),
                    GainSpec::Poles { poles } => {
                        let (ad, bd) = discretize(&plant.a, &plant.b, self.t2)?;
                        ackermann(&ad, &bd, poles)?
                    }
                };
                let mut inner =
                    LtiReconstructor::new(&plant.a, &plant.b, &plant.c, k, self.t2, self.delta())?;
                inner.warmup = *warmup;
                (
                    Box::new(plant),
                    None,
                    Box::new(ReconstructionController { inner }),
                )
            }
        };
        let observer_init = observer.as_ref().map(|o| ObserverState {
            z: self.initial.z.clone().unwrap_or_else(|| vec![0.0; o.dim()]),
            w: self.initial.w,
        });
        Ok(Assembled {
            plant,
            observer,
            controller,
            engine: EngineConfig {
                t2: self.t2,
                horizon: self.horizon,
                step: self.step(),
                schedule,
                x_history: self.initial.x.clone(),
                u_history,
                observer_init,
                disturbance,
                noise,
                log_steps: self.log_steps,
            },
            strict,
        })
    }

    /// One-shot predictor evaluation from `state` with the input history
    /// given as equal-length pieces over `[-(r + tau), 0)`.
    pub fn predict(&self, state: &[f64], history: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        let h = self.delta();
        if state.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: state.len(),
            });
        }
        let signal = PiecewiseConstantSignal::uniform(history, -h, 0.0)?;
        let window = HistoryWindow::open(&signal, h, 0.0);
        match &self.controller {
            ControllerSpec::ApproxLipschitz { .. } => phi_lm(
                state,
                &window,
                &self.predictor_config()?,
                &self.strict_plant()?,
            ),
            ControllerSpec::ExactFf { .. } => {
                let x = solution_map(h, [state[0], state[1], state[2]], &window.rebased()?)?;
                Ok(x.to_vec())
            }
            ControllerSpec::LtiExact { .. } | ControllerSpec::LtiReconstruction { .. } => {
                let plant = self.lti_plant()?;
                let z = DVector::from_column_slice(state);
                Ok(lti_predict(&z, &window.rebased()?, h, &plant.a, &plant.b)?
                    .as_slice()
                    .to_vec())
            }
        }
    }
}

/// Builds and simulates the scenario.
pub fn run_closed_loop(scenario: &Scenario) -> Result<SimulationLog> {
    let mut parts = scenario.assemble()?;
    simulate(
        parts.plant.as_ref(),
        parts.observer.as_deref(),
        parts.controller.as_mut(),
        &parts.engine,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_json_round_trip() {
        let s = Scenario::reference();
        let text = s.to_json().unwrap();
        assert_eq!(Scenario::from_json(&text).unwrap(), s);
        let minimal = r#"{
            "plant": {"kind": "two_state"},
            "controller": {"kind": "approx_lipschitz", "k": [-15, -9], "l": 1, "m": 1},
            "observer": {"p": [-3, -3]},
            "r": 0.25, "tau": 0.25, "t1": 0.03, "t2": 0.01,
            "initial": {"x": [1, 1], "u": -2, "u_length": 0.5, "z": [0, 0]},
            "horizon": 20
        }"#;
        assert_eq!(Scenario::from_json(minimal).unwrap(), s);
    }

    #[test]
    fn zero_initial_data_stays_zero() {
        let mut s = Scenario::reference();
        s.initial.x = vec![0.0, 0.0];
        s.initial.u = 0.0;
        s.horizon = 1.0;
        let log = run_closed_loop(&s).unwrap();
        assert!(log
            .rows
            .iter()
            .all(|r| r.x.iter().chain(&r.z).all(|v| *v == 0.0) && r.u == 0.0 && r.w == 0.0));
    }

    #[test]
    fn mismatched_configurations_are_rejected() {
        let mut s = Scenario::reference();
        s.controller = ControllerSpec::ExactFf {
            gains: FeedforwardGains::default(),
            warmup: 0.0,
        };
        assert!(s.assemble().is_err());
        let mut s = Scenario::reference();
        s.observer = None;
        assert!(s.assemble().is_err());
        let mut s = Scenario::reference();
        s.initial.u_length = Some(0.3);
        assert!(run_closed_loop(&s).is_err());
    }

    #[test]
    fn predict_matches_the_controller_family() {
        let s = Scenario::reference();
        // the x2 row integrates the input exactly: 1 + (-2)(1/2)
        let out = s.predict(&[1.0, 1.0], &[-2.0]).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[1].abs() < 1e-12);
        let lti = Scenario {
            plant: PlantSpec::Lti {
                a: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
                b: vec![0.0, 1.0],
                g: None,
                c: vec![1.0, 0.0],
            },
            controller: ControllerSpec::LtiExact {
                k: GainSpec::Vector(vec![-1.0, -2.0]),
            },
            ..s
        };
        // x1 = 1 + 2 h + u h^2 / 2 with h = 1/2, u = 1
        let out = lti.predict(&[1.0, 2.0], &[1.0, 1.0]).unwrap();
        assert!((out[0] - 2.125).abs() < 1e-14 && (out[1] - 2.5).abs() < 1e-14);
    }
}
