//! Sampled controllers plugged into the engine.

use nalgebra::{DMatrix, DVector};

use crate::approx_predictor::{phi_lm, PredictorConfig};
use crate::error::{Error, Result};
use crate::exact_predictor::FeedforwardController;
use crate::lti::{lti_predict, LtiReconstructor};
use crate::plants::StrictFeedbackPlant;
use crate::runner::engine::{Controller, HoldContext, HoldDecision};
use crate::signals::HistoryWindow;

fn observer_z<'a>(ctx: &'a HoldContext<'_>) -> Result<&'a [f64]> {
    ctx.observer
        .map(|o| o.z.as_slice())
        .ok_or_else(|| Error::InvalidParameter("controller needs an observer".into()))
}

/// Checks that sample `i` was taken at the hold instant `i T`.
fn aligned_samples(ctx: &HoldContext<'_>) -> Result<()> {
    let i = ctx.index;
    match ctx.sample_times.get(i) {
        Some(&s)
            if ctx.sample_times.len() == i + 1
                && (s - ctx.time).abs() <= 1e-9 * ctx.time.abs().max(1.0) =>
        {
            Ok(())
        }
        _ => Err(Error::InvalidParameter(format!(
            "hold {i} at t = {} has {} samples; sampling must coincide with holding",
            ctx.time,
            ctx.sample_times.len()
        ))),
    }
}

impl Controller for FeedforwardController {
    fn hold(&mut self, ctx: &HoldContext<'_>) -> Result<HoldDecision> {
        aligned_samples(ctx)?;
        let out = self.control_step(ctx.index, ctx.samples, ctx.computed)?;
        Ok(HoldDecision {
            input: out.input,
            estimate: out.reconstructed.map(|x| x.to_vec()),
            prediction: out.predicted.map(|x| x.to_vec()),
        })
    }
}

/// `u_i = k' Phi_{l,m}(z(iT), u over [iT - r - tau, iT))`.
#[derive(Debug, Clone)]
pub struct ApproxController {
    pub plant: StrictFeedbackPlant,
    pub cfg: PredictorConfig,
    pub k: Vec<f64>,
}

impl ApproxController {
    pub fn new(plant: StrictFeedbackPlant, cfg: PredictorConfig, k: Vec<f64>) -> Result<Self> {
        if k.len() != plant.dim() {
            return Err(Error::DimensionMismatch {
                expected: plant.dim(),
                found: k.len(),
            });
        }
        cfg.validate()?;
        Ok(Self { plant, cfg, k })
    }
}

impl Controller for ApproxController {
    fn hold(&mut self, ctx: &HoldContext<'_>) -> Result<HoldDecision> {
        let z = observer_z(ctx)?;
        let window = HistoryWindow::open(ctx.input, self.cfg.horizon, ctx.time);
        let pred = phi_lm(z, &window, &self.cfg, &self.plant)?;
        Ok(HoldDecision {
            input: self.k.iter().zip(&pred).map(|(a, b)| a * b).sum(),
            estimate: Some(z.to_vec()),
            prediction: Some(pred),
        })
    }
}

/// Exact linear predictor fed by an observer of `x(t - r)`.
#[derive(Debug, Clone)]
pub struct LtiPredictorController {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub k: DVector<f64>,
    pub horizon: f64,
}

impl Controller for LtiPredictorController {
    fn hold(&mut self, ctx: &HoldContext<'_>) -> Result<HoldDecision> {
        let z = DVector::from_column_slice(observer_z(ctx)?);
        let window = HistoryWindow::open(ctx.input, self.horizon, ctx.time).rebased()?;
        let pred = lti_predict(&z, &window, self.horizon, &self.a, &self.b)?;
        Ok(HoldDecision {
            input: self.k.dot(&pred),
            estimate: Some(z.as_slice().to_vec()),
            prediction: Some(pred.as_slice().to_vec()),
        })
    }
}

/// Sample-based reconstruction for linear plants, no observer.
#[derive(Debug, Clone)]
pub struct ReconstructionController {
    pub inner: LtiReconstructor,
}

impl Controller for ReconstructionController {
    fn hold(&mut self, ctx: &HoldContext<'_>) -> Result<HoldDecision> {
        aligned_samples(ctx)?;
        let y: Vec<f64> = ctx.samples.iter().map(|s| s[0]).collect();
        let (input, est) = self.inner.control(ctx.index, &y, ctx.computed)?;
        let (estimate, prediction) = match est {
            Some((x, p)) => (Some(x.as_slice().to_vec()), Some(p.as_slice().to_vec())),
            None => (None, None),
        };
        Ok(HoldDecision {
            input,
            estimate,
            prediction,
        })
    }
}
