//! Classical fixed-step RK4.

use crate::error::{Error, Result};

/// Scratch buffers for [`rk4_step`].
#[derive(Debug, Clone)]
pub struct Rk4Scratch {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    pub fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }

    /// Slope at the start of the last step.
    pub fn initial_slope(&self) -> &[f64] {
        &self.k[0]
    }
}

/// One RK4 step of size `h` in place.
pub fn rk4_step<F>(rhs: &mut F, t: f64, x: &mut [f64], h: f64, s: &mut Rk4Scratch)
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x.len();
    rhs(t, x, &mut s.k[0]);
    for (i, c) in [0.5, 0.5, 1.0].into_iter().enumerate() {
        for j in 0..n {
            s.tmp[j] = x[j] + c * h * s.k[i][j];
        }
        rhs(t + c * h, &s.tmp, &mut s.k[i + 1]);
    }
    for j in 0..n {
        x[j] += h / 6.0 * (s.k[0][j] + 2.0 * s.k[1][j] + 2.0 * s.k[2][j] + s.k[3][j]);
    }
}

/// Number of steps of size at most `h` covering `[t0, t1]`.
pub fn step_count(t0: f64, t1: f64, h: f64) -> usize {
    let raw = (t1 - t0) / h;
    // avoid an extra sliver step when the span is a multiple of h up to rounding
    let n = (raw - 1e-9).ceil();
    n.max(1.0) as usize
}

/// Integrates from `t0` to `t1` with steps of `h`, the last one shortened to
/// land on `t1`. Returns every step endpoint including the initial state.
pub fn integrate_segment<F>(
    mut rhs: F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    h: f64,
) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(t1 > t0) || !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need t1 > t0 and h > 0, got [{t0}, {t1}] with h = {h}"
        )));
    }
    let mut x = x0.to_vec();
    let mut s = Rk4Scratch::new(x.len());
    let mut path = vec![(t0, x.clone())];
    let mut t = t0;
    while t < t1 {
        let step = h.min(t1 - t);
        let next = if t1 - (t + step) <= 1e-12 * t1.abs().max(1.0) {
            t1
        } else {
            t + step
        };
        rk4_step(&mut rhs, t, &mut x, next - t, &mut s);
        t = next;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t });
        }
        path.push((t, x.clone()));
    }
    Ok(path)
}
