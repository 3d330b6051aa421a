//! Disturbance, noise and schedule-perturbation signals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude * sin(angular_frequency * t + phase)`
    Sinusoid {
        amplitude: f64,
        angular_frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Independent uniform draws in `[low, high]`, held for `period`.
    UniformSteps {
        low: f64,
        high: f64,
        period: f64,
    },
    /// A constant `value` switched on at `start`.
    Step {
        value: f64,
        start: f64,
    },
}

impl SignalSpec {
    pub fn resolve(&self, horizon: f64, seed: u64) -> Result<Exogenous> {
        let check = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::NonFinite(what.into()))
            }
        };
        Ok(match *self {
            SignalSpec::Zero => Exogenous::Zero,
            SignalSpec::Constant { value } => {
                check(value, "constant signal")?;
                Exogenous::Constant(value)
            }
            SignalSpec::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } => {
                check(amplitude + angular_frequency + phase, "sinusoid parameters")?;
                Exogenous::Sinusoid {
                    amplitude,
                    angular_frequency,
                    phase,
                }
            }
            SignalSpec::UniformSteps { low, high, period } => {
                if !(period > 0.0) || !(low <= high) || !low.is_finite() || !high.is_finite() {
                    return Err(Error::InvalidParameter(
                        "uniform steps need low <= high and period > 0".into(),
                    ));
                }
                let count = (horizon / period).ceil() as usize + 2;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let values = (0..count)
                    .map(|_| {
                        if low == high {
                            low
                        } else {
                            rng.random_range(low..=high)
                        }
                    })
                    .collect();
                Exogenous::Steps { period, values }
            }
            SignalSpec::Step { value, start } => {
                check(value + start, "step signal")?;
                Exogenous::Switch { value, start }
            }
        })
    }
}

/// A resolved scalar exogenous signal.
#[derive(Debug, Clone, PartialEq)]
pub enum Exogenous {
    Zero,
    Constant(f64),
    Sinusoid {
        amplitude: f64,
        angular_frequency: f64,
        phase: f64,
    },
    Steps {
        period: f64,
        values: Vec<f64>,
    },
    Switch {
        value: f64,
        start: f64,
    },
}

impl Exogenous {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Exogenous::Zero => 0.0,
            Exogenous::Constant(v) => *v,
            Exogenous::Sinusoid {
                amplitude,
                angular_frequency,
                phase,
            } => amplitude * (angular_frequency * t + phase).sin(),
            Exogenous::Steps { period, values } => {
                let k = (t.max(0.0) / period).floor() as usize;
                values[k.min(values.len() - 1)]
            }
            Exogenous::Switch { value, start } => {
                if t >= *start {
                    *value
                } else {
                    0.0
                }
            }
        }
    }

    /// Piecewise-constant signals are sampled once per integration step.
    pub fn is_piecewise(&self) -> bool {
        !matches!(self, Exogenous::Sinusoid { .. })
    }

    /// Discontinuities inside `(0, horizon)`.
    pub fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        match self {
            Exogenous::Steps { period, .. } => (1..)
                .map(|k| k as f64 * period)
                .take_while(|t| *t < horizon)
                .collect(),
            Exogenous::Switch { start, .. } if *start > 0.0 && *start < horizon => vec![*start],
            _ => Vec::new(),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            Exogenous::Zero => 0.0,
            Exogenous::Constant(v) => v.abs(),
            Exogenous::Sinusoid { amplitude, .. } => amplitude.abs(),
            Exogenous::Steps { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
            Exogenous::Switch { value, .. } => value.abs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_resolve_and_evaluate() {
        assert_eq!(SignalSpec::Zero.resolve(1.0, 0).unwrap().eval(0.3), 0.0);
        let s = SignalSpec::Sinusoid {
            amplitude: 2.0,
            angular_frequency: 1.0,
            phase: 0.0,
        }
        .resolve(1.0, 0)
        .unwrap();
        assert!((s.eval(std::f64::consts::FRAC_PI_2) - 2.0).abs() < 1e-15);
        assert!(!s.is_piecewise());
        let steps = SignalSpec::UniformSteps {
            low: 0.0,
            high: 1.0,
            period: 0.1,
        };
        let a = steps.resolve(1.0, 7).unwrap();
        let b = steps.resolve(1.0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.eval(0.15), a.eval(0.1));
        assert!((0.0..=1.0).contains(&a.eval(0.55)));
        assert_eq!(a.breakpoints(0.35).len(), 3);
        let sw = SignalSpec::Step {
            value: 0.4,
            start: 1.0,
        }
        .resolve(3.0, 0)
        .unwrap();
        assert_eq!((sw.eval(0.5), sw.eval(1.0)), (0.0, 0.4));
        assert!(SignalSpec::UniformSteps {
            low: 1.0,
            high: 0.0,
            period: 1.0
        }
        .resolve(1.0, 0)
        .is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SignalSpec::UniformSteps {
            low: 0.0,
            high: 1.0,
            period: 0.03,
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"kind\":\"uniform_steps\""));
        assert_eq!(serde_json::from_str::<SignalSpec>(&text).unwrap(), spec);
    }
}
