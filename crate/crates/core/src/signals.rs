//! Piecewise-constant signal histories, history windows and sampling schedules.
//!
//! Every input in the closed loops is applied through a zero-order hold, so the
//! only carrier needed for inputs is a right-continuous step function with
//! exact breakpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-continuous step function on `[domain_start, domain_end)`.
///
/// Segment `j` covers `[breakpoints[j], breakpoints[j + 1])`, the last one
/// ending at `domain_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantSignal {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    start: f64,
    end: f64,
}

impl PiecewiseConstantSignal {
    /// A signal with an empty domain `[start, start)`, ready to be extended.
    pub fn empty(start: f64) -> Self {
        Self {
            breakpoints: Vec::new(),
            values: Vec::new(),
            start,
            end: start,
        }
    }

    pub fn constant(value: f64, start: f64, end: f64) -> Result<Self> {
        Self::new(vec![start], vec![value], end)
    }

    /// Builds a signal from segment start times, values, and the domain end.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, end: f64) -> Result<Self> {
        if breakpoints.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: breakpoints.len(),
                found: values.len(),
            });
        }
        if breakpoints.is_empty() {
            return Err(Error::InvalidParameter(
                "signal needs at least one segment".into(),
            ));
        }
        if breakpoints
            .iter()
            .chain(values.iter())
            .any(|v| !v.is_finite())
            || !end.is_finite()
        {
            return Err(Error::NonFinite("signal breakpoints or values".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) || *breakpoints.last().unwrap() >= end {
            return Err(Error::InvalidParameter(
                "breakpoints must be strictly ascending and below the domain end".into(),
            ));
        }
        Ok(Self {
            start: breakpoints[0],
            breakpoints,
            values,
            end,
        })
    }

    /// `values.len()` equal-length segments covering `[start, end)`.
    pub fn uniform(values: &[f64], start: f64, end: f64) -> Result<Self> {
        if values.is_empty() || end <= start {
            return Err(Error::InvalidParameter(
                "uniform signal needs values and end > start".into(),
            ));
        }
        let width = (end - start) / values.len() as f64;
        let breakpoints = (0..values.len())
            .map(|j| start + j as f64 * width)
            .collect();
        Self::new(breakpoints, values.to_vec(), end)
    }

    pub fn domain_start(&self) -> f64 {
        self.start
    }

    pub fn domain_end(&self) -> f64 {
        self.end
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segment_count(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn segment_end(&self, j: usize) -> f64 {
        self.breakpoints.get(j + 1).copied().unwrap_or(self.end)
    }

    /// Iterates `(start, end, value)` over all segments.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.values.len())
            .map(move |j| (self.breakpoints[j], self.segment_end(j), self.values[j]))
    }

    fn segment_index(&self, t: f64) -> Result<usize> {
        if self.is_empty() || !(t >= self.start && t < self.end) {
            return Err(Error::OutOfDomain {
                t,
                start: self.start,
                end: self.end,
            });
        }
        // last breakpoint <= t
        Ok(self.breakpoints.partition_point(|&b| b <= t) - 1)
    }

    /// Value at `t`; right-continuous at breakpoints.
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.segment_index(t).map(|j| self.values[j])
    }

    /// Exact integral over `[a, b]` (within the domain).
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(Error::InvalidParameter(format!(
                "integral bounds reversed: {a} > {b}"
            )));
        }
        if a < self.start || b > self.end {
            return Err(Error::OutOfDomain {
                t: if a < self.start { a } else { b },
                start: self.start,
                end: self.end,
            });
        }
        Ok(self
            .segments()
            .map(|(s, e, v)| {
                let overlap = e.min(b) - s.max(a);
                if overlap > 0.0 {
                    v * overlap
                } else {
                    0.0
                }
            })
            .sum())
    }

    /// The delay-shift operator: the returned signal evaluates to `self(t - lag)`.
    pub fn shift_delay(&self, lag: f64) -> Result<Self> {
        if !(lag >= 0.0) || !lag.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lag must be nonnegative, got {lag}"
            )));
        }
        Ok(Self {
            breakpoints: self.breakpoints.iter().map(|b| b + lag).collect(),
            values: self.values.clone(),
            start: self.start + lag,
            end: self.end + lag,
        })
    }

    /// Appends a hold segment `[domain_end, domain_end + period)` with `value`.
    pub fn zoh_extend(&mut self, value: f64, period: f64) -> Result<()> {
        self.extend_segment(self.end, value, period)
    }

    /// Appends a segment starting at `start`, which must coincide with the
    /// current domain end.
    pub fn extend_segment(&mut self, start: f64, value: f64, period: f64) -> Result<()> {
        if !(period > 0.0) || !period.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "hold period must be positive, got {period}"
            )));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("held value".into()));
        }
        let tol = 1e-12 * self.end.abs().max(1.0);
        if (start - self.end).abs() > tol {
            return Err(Error::NotContiguous {
                start,
                end: self.end,
            });
        }
        let start = self.end;
        self.breakpoints.push(start);
        self.values.push(value);
        self.end = start + period;
        Ok(())
    }

    /// Restriction to `[a, b)` re-based so the result lives on `[0, b - a)`.
    ///
    /// Bounds are snapped to the domain when they miss it by rounding only.
    pub fn window_rebased(&self, a: f64, b: f64) -> Result<Self> {
        let tol = 1e-9 * self.start.abs().max(self.end.abs()).max(1.0);
        if b <= a || a < self.start - tol || b > self.end + tol {
            return Err(Error::OutOfDomain {
                t: if a < self.start - tol { a } else { b },
                start: self.start,
                end: self.end,
            });
        }
        let (lo, hi) = (a.max(self.start), b.min(self.end));
        let length = b - a;
        let mut breakpoints = Vec::new();
        let mut values = Vec::new();
        for (s, e, v) in self.segments() {
            // overlaps thinner than the tolerance are rounding slivers
            if e <= lo + tol || s >= hi - tol {
                continue;
            }
            breakpoints.push(if breakpoints.is_empty() { 0.0 } else { s - a });
            values.push(v);
        }
        Self::new(breakpoints, values, length)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// A closed `[t - length, t]` or half-open `[t - length, t)` view on a signal.
#[derive(Debug, Clone, Copy)]
pub struct HistoryWindow<'a> {
    pub signal: &'a PiecewiseConstantSignal,
    pub length: f64,
    pub anchor: f64,
    pub closed: bool,
}

impl<'a> HistoryWindow<'a> {
    pub fn closed(signal: &'a PiecewiseConstantSignal, length: f64, anchor: f64) -> Self {
        Self {
            signal,
            length,
            anchor,
            closed: true,
        }
    }

    pub fn open(signal: &'a PiecewiseConstantSignal, length: f64, anchor: f64) -> Self {
        Self {
            signal,
            length,
            anchor,
            closed: false,
        }
    }

    pub fn start(&self) -> f64 {
        self.anchor - self.length
    }

    /// Actual (not essential) supremum of `|u|` over the window.
    pub fn sup_norm(&self) -> Result<f64> {
        let sig = self.signal;
        let (a, t) = (self.start(), self.anchor);
        let tol = 1e-12 * sig.start.abs().max(sig.end.abs()).max(1.0);
        let inside = if self.closed {
            a >= sig.start - tol && t < sig.end
        } else {
            a >= sig.start - tol && t <= sig.end + tol
        };
        if !(self.length >= 0.0) || !inside {
            return Err(Error::OutOfDomain {
                t: if a < sig.start { a } else { t },
                start: sig.start,
                end: sig.end,
            });
        }
        Ok(sig
            .segments()
            .filter(|&(s, e, _)| {
                let reaches_right = if self.closed { s <= t } else { s < t };
                reaches_right && e > a
            })
            .fold(0.0_f64, |m, (_, _, v)| m.max(v.abs())))
    }

    /// The window content re-based onto `[0, length)`.
    pub fn rebased(&self) -> Result<PiecewiseConstantSignal> {
        self.signal.window_rebased(self.start(), self.anchor)
    }
}

/// Strictly increasing sampling instants generated by
/// `tau_{i+1} = tau_i + T1 * exp(-b(tau_i))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSchedule {
    pub times: Vec<f64>,
    pub nominal_period: f64,
    /// `b(tau_i)` for every generated gap.
    pub perturbation: Vec<f64>,
}

impl SamplingSchedule {
    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }
}

/// Generates the perturbed schedule until it covers `[0, horizon]`.
pub fn generate_schedule<B>(t1: f64, mut b: B, horizon: f64) -> Result<SamplingSchedule>
where
    B: FnMut(f64) -> f64,
{
    if !(t1 > 0.0) || !t1.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sampling period must be positive, got {t1}"
        )));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let mut times = vec![0.0];
    let mut perturbation = Vec::new();
    let mut t = 0.0;
    while t < horizon {
        let bi = b(t);
        if !bi.is_finite() || bi < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "schedule perturbation must be finite and nonnegative, got {bi} at t = {t}"
            )));
        }
        t += t1 * (-bi).exp();
        perturbation.push(bi);
        times.push(t);
    }
    Ok(SamplingSchedule {
        times,
        nominal_period: t1,
        perturbation,
    })
}
