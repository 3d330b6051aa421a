//! Predictor-based output feedback for systems with input delay, measurement
//! delay, sampled outputs and zero-order-hold inputs.
//!
//! Three controller families are provided:
//!
//! - [`exact_predictor`]: exact reconstruction and prediction for a
//!   three-state feedforward plant with closed-form flows;
//! - [`approx_predictor`] + [`observer`]: successive-approximation
//!   predictors driven by a sampled high-gain observer for globally
//!   Lipschitz strict-feedback plants;
//! - [`lti`]: exact predictors, observers and dead-beat reconstruction for
//!   linear plants.
//!
//! [`runner`] simulates any of them as a hybrid closed loop and [`gains`]
//! evaluates the sufficient conditions on the tuning parameters.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod approx_predictor;
pub mod error;
pub mod exact_predictor;
pub mod gains;
pub mod lti;
pub mod observer;
pub mod plants;
pub mod runner;
pub mod signals;

pub use approx_predictor::{GridFunction, PredictorConfig};
pub use error::{Error, Result};
pub use exact_predictor::{FeedforwardController, FeedforwardGains};
pub use gains::{ConditionsReport, GainCertificate};
pub use observer::{ObserverGains, ObserverState};
pub use plants::{
    DisturbanceGain, Drift, FeedforwardPlant, LtiPlant, OutputCase, StrictFeedbackPlant,
};
pub use runner::log::SimulationLog;
pub use runner::scenario::{run_closed_loop, Scenario};
pub use signals::{HistoryWindow, PiecewiseConstantSignal, SamplingSchedule};
