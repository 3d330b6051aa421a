//! Gain verification: Lyapunov solves, Hurwitz tests, randomized
//! certification of the closed-loop dissipation inequality, and the
//! sufficient conditions with their derived constants.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx_predictor::{gamma_bound, PredictorConfig};
use crate::error::{Error, Result};
use crate::observer::{omega, ObserverGains};
use crate::plants::{check_dim, StrictFeedbackPlant};

/// Upper shift matrix of the strict-feedback chain.
pub fn chain_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

pub fn unit(n: usize, i: usize) -> DVector<f64> {
    DVector::from_fn(n, |j, _| if j == i { 1.0 } else { 0.0 })
}

/// Characteristic polynomial coefficients `[1, a_1, ..., a_n]` of
/// `det(sI - M)` by Faddeev-LeVerrier.
pub fn characteristic_polynomial(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    check_dim(n, m.ncols())?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entries".into()));
    }
    let mut coeffs = vec![1.0];
    let mut mk = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        mk = m * &mk + DMatrix::identity(n, n) * coeffs[k - 1];
        let next = -(m * &mk).trace() / k as f64;
        coeffs.push(next);
    }
    Ok(coeffs)
}

/// Routh-Hurwitz test on the characteristic polynomial.
pub fn is_hurwitz(m: &DMatrix<f64>) -> Result<bool> {
    let poly = characteristic_polynomial(m)?;
    Ok(routh_stable(&poly))
}

fn routh_stable(poly: &[f64]) -> bool {
    if poly.iter().any(|c| !(*c > 0.0)) {
        return false;
    }
    let mut prev: Vec<f64> = poly.iter().step_by(2).copied().collect();
    let mut cur: Vec<f64> = poly.iter().skip(1).step_by(2).copied().collect();
    for _ in 0..poly.len().saturating_sub(2) {
        if !(cur.first().copied().unwrap_or(0.0) > 0.0) {
            return false;
        }
        let next: Vec<f64> = (0..prev.len().saturating_sub(1))
            .map(|i| {
                let c_next = cur.get(i + 1).copied().unwrap_or(0.0);
                (cur[0] * prev[i + 1] - prev[0] * c_next) / cur[0]
            })
            .collect();
        prev = cur;
        cur = next;
    }
    cur.first().is_none_or(|v| *v > 0.0)
}

/// Solves `X M + M' X = -W` by a Kronecker linear system.
pub fn lyapunov(m: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    check_dim(n, m.ncols())?;
    check_dim(n, w.nrows())?;
    let id = DMatrix::<f64>::identity(n, n);
    let mt = m.transpose();
    let op = id.kronecker(&mt) + mt.kronecker(&id);
    let rhs = DVector::from_column_slice(w.as_slice()) * -1.0;
    let sol = op.lu().solve(&rhs).ok_or(Error::Degenerate)?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

fn eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).min()
}

fn max_eig(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).max()
}

/// Spectral norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

/// `Q` with `Q(A + p c') + (A + p c')'Q + 2 q I <= 0`, obtained from the
/// equality with `q` inflated by a relative `1e-9` and then verified.
pub fn solve_observer_lyapunov(
    a: &DMatrix<f64>,
    p: &DVector<f64>,
    c: &DVector<f64>,
    q: f64,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    check_dim(n, p.len())?;
    check_dim(n, c.len())?;
    if !(q > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "q must be positive, got {q}"
        )));
    }
    let ao = a + p * c.transpose();
    if !is_hurwitz(&ao)? {
        return Err(Error::NotHurwitz);
    }
    let qq = lyapunov(&ao, &(DMatrix::identity(n, n) * (2.0 * q * (1.0 + 1e-9))))?;
    let residual = &qq * &ao + ao.transpose() * &qq + DMatrix::identity(n, n) * (2.0 * q);
    if !(min_eig(&qq) > 0.0) || max_eig(&residual) > 0.0 {
        return Err(Error::Invariant(
            "observer Lyapunov solution failed verification".into(),
        ));
    }
    Ok(qq)
}

/// Left side `x'P((A + b k')x + f(x) + diag(g) d)` of the dissipation inequality.
fn dissipation_lhs(
    p_mat: &DMatrix<f64>,
    a_cl: &DMatrix<f64>,
    plant: &StrictFeedbackPlant,
    x: &[f64],
    d: &[f64],
    u: f64,
) -> f64 {
    let n = x.len();
    let xv = DVector::from_column_slice(x);
    let mut v = a_cl * &xv;
    for i in 0..n {
        v[i] += plant.drift_row(x, i) + plant.gains[i].eval(x, u) * d[i];
    }
    xv.dot(&(p_mat * v))
}

fn closed_loop(n: usize, k: &DVector<f64>) -> DMatrix<f64> {
    chain_matrix(n) + unit(n, n - 1) * k.transpose()
}

/// Probe points: random directions at scales `1e-3 .. 1e3`.
fn probe_points(n: usize, probes: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..probes)
        .map(|k| {
            let scale = 10f64.powi((k % 7) as i32 - 3);
            let x: Vec<f64> = (0..n)
                .map(|_| rng.random_range(-1.0..1.0) * scale)
                .collect();
            let d: Vec<f64> = (0..n)
                .map(|_| rng.random_range(-1.0..1.0) * scale)
                .collect();
            (x, d, rng.random_range(-1.0..1.0) * scale)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationCertificate {
    pub p: DMatrix<f64>,
    pub mu: f64,
    pub gamma: f64,
    /// Weight of the Lyapunov right-hand side that produced `p`.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub pass: bool,
    /// Smallest `rhs - lhs` over the probes.
    pub worst_margin: f64,
    pub probes: usize,
}

/// Searches `(P, mu, gamma)` for a given feedback `k`: `P` solves the
/// Lyapunov equation of `A + b k'` with right-hand side `diag(w^i)`, `mu` is
/// taken from the worst probed decay and `gamma` from Young's inequality on
/// the disturbance term.
pub fn search_dissipation(
    plant: &StrictFeedbackPlant,
    k: &DVector<f64>,
    probes: usize,
    seed: u64,
) -> Result<DissipationCertificate> {
    let n = plant.dim();
    check_dim(n, k.len())?;
    let a_cl = closed_loop(n, k);
    if !is_hurwitz(&a_cl)? {
        return Err(Error::NotHurwitz);
    }
    let points = probe_points(n, probes, seed);
    let mut best: Option<DissipationCertificate> = None;
    for w in [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0] {
        let rhs = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| f64::powi(w, i as i32)));
        let p = lyapunov(&a_cl, &rhs)?;
        if !(min_eig(&p) > 0.0) {
            continue;
        }
        let zero_d = vec![0.0; n];
        let mut decay = f64::INFINITY;
        let mut rel = Vec::with_capacity(points.len());
        for (x, _, u) in &points {
            let xx: f64 = x.iter().map(|v| v * v).sum();
            if xx == 0.0 {
                continue;
            }
            let drop = -dissipation_lhs(&p, &a_cl, plant, x, &zero_d, *u);
            let xv = DVector::from_column_slice(x);
            let xpx = xv.dot(&(&p * &xv));
            decay = decay.min(drop / xx);
            rel.push((drop, xx, xpx));
        }
        if !(decay > 0.0) {
            continue;
        }
        let eta = 0.5 * decay;
        let mu = 0.9
            * rel
                .iter()
                .map(|(drop, xx, xpx)| (drop - eta * xx) / (2.0 * xpx))
                .fold(f64::INFINITY, f64::min);
        let gamma = (spectral_norm(&p) * plant.gain_bound).powi(2) / (4.0 * eta);
        if mu > 0.0 && best.as_ref().is_none_or(|b| mu > b.mu) {
            best = Some(DissipationCertificate {
                p,
                mu,
                gamma,
                weight: w,
            });
        }
    }
    best.ok_or_else(|| {
        Error::Invariant("no Lyapunov weight certifies the dissipation inequality".into())
    })
}

/// Randomized falsification test of
/// `x'P((A + b k')x + f(x) + diag(g) d) <= -2 mu x'Px + gamma |d|^2`.
pub fn certify_dissipation(
    p_mat: &DMatrix<f64>,
    k: &DVector<f64>,
    mu: f64,
    gamma: f64,
    plant: &StrictFeedbackPlant,
    probes: usize,
    seed: u64,
) -> Result<CertificationReport> {
    let n = plant.dim();
    check_dim(n, k.len())?;
    check_dim(n, p_mat.nrows())?;
    let a_cl = closed_loop(n, k);
    let mut worst = f64::INFINITY;
    for (x, d, u) in probe_points(n, probes, seed) {
        let xv = DVector::from_column_slice(&x);
        let lhs = dissipation_lhs(p_mat, &a_cl, plant, &x, &d, u);
        let rhs = -2.0 * mu * xv.dot(&(p_mat * &xv)) + gamma * d.iter().map(|v| v * v).sum::<f64>();
        worst = worst.min(rhs - lhs);
    }
    Ok(CertificationReport {
        pass: worst >= 0.0,
        worst_margin: worst,
        probes,
    })
}

/// `min{k in Z+ : t <= k}`; arguments within `1e-9` (relative) of an integer
/// are treated as that integer so that ratios like `0.25 / 0.01` land correctly.
pub fn g_ceil(t: f64) -> u64 {
    let r = t.round();
    if (t - r).abs() <= 1e-9 * t.abs().max(1.0) {
        r.max(0.0) as u64
    } else {
        t.ceil().max(0.0) as u64
    }
}

/// `min{j in Z+ : j T2 >= r + T1}`.
pub fn first_hold_after(r: f64, t1: f64, t2: f64) -> u64 {
    g_ceil((r + t1) / t2)
}

/// Every quantity the sufficient conditions refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    /// Lyapunov matrix of the observer error.
    pub q_mat: DMatrix<f64>,
    pub q: f64,
    /// `lambda_min(Q)`
    pub a: f64,
    /// Lyapunov matrix of the nominal closed loop.
    pub p_mat: DMatrix<f64>,
    pub mu: f64,
    pub gamma: f64,
    /// `lambda_min(P)`, `lambda_max(P)`
    pub k1: f64,
    pub k2: f64,
    pub k: DVector<f64>,
    pub p: DVector<f64>,
    pub theta: f64,
    pub t1: f64,
    pub t2: f64,
    pub predictor: PredictorConfig,
    /// Measured approximation constant (see `calibrate_k`).
    pub big_k: f64,
    pub r: f64,
    pub tau: f64,
    /// `sup b` used in `M(rho)`.
    pub b_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMargin {
    pub name: String,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub conditions: Vec<ConditionMargin>,
    pub rho: f64,
    pub omega: f64,
    pub beta: f64,
    /// `None` when `rho >= 1`.
    pub big_gamma: Option<f64>,
    pub j: u64,
    pub g_exponent: u64,
    /// `ln M(sup b)`; `None` when `Gamma` is undefined.
    pub log_m: Option<f64>,
    /// `K` here is measured, so the last condition is empirical.
    pub empirical_k: bool,
}

impl ConditionsReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn margin(&self, name: &str) -> Option<f64> {
        self.conditions
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.margin)
    }
}

/// Evaluates the sampling, observer-gain, and predictor-accuracy conditions
/// as margins (`rhs - lhs`, positive means satisfied) plus the constants
/// `omega`, `beta`, `Gamma`, `j`, `g` and `M`.
pub fn check_conditions(
    cert: &GainCertificate,
    plant: &StrictFeedbackPlant,
) -> Result<ConditionsReport> {
    let n = plant.dim();
    check_dim(n, cert.k.len())?;
    check_dim(n, cert.p.len())?;
    check_dim(n, cert.q_mat.nrows())?;
    check_dim(n, cert.p_mat.nrows())?;
    if !(cert.t1 > 0.0 && cert.t2 > 0.0 && cert.a > 0.0 && cert.k1 > 0.0 && cert.q > 0.0) {
        return Err(Error::InvalidParameter(
            "certificate has nonpositive entries".into(),
        ));
    }
    let l = plant.lipschitz;
    let nf = n as f64;
    let q_norm = spectral_norm(&cert.q_mat);
    let qp = (&cert.q_mat * &cert.p).norm();

    let m_sampling = cert.q - 4.0 * qp * (l + cert.theta) * cert.t1 * (q_norm / cert.a).sqrt();
    let m_observer = cert.theta - (1.0_f64).max(2.0 * q_norm * l * nf.sqrt() / cert.q);

    let rho = cert.predictor.contraction(plant);
    let k_norm = cert.k.norm();
    let bn = unit(n, n - 1);
    let bpb = bn.dot(&(&cert.p_mat * &bn));
    let m_predictor = if rho < 1.0 {
        let approx = cert.big_k * rho.powi(cert.predictor.l as i32 + 1) / (1.0 - rho);
        let lhs = ((nf * l + 1.0 + k_norm) * (bpb / (2.0 * cert.k1)).sqrt() + cert.mu)
            * k_norm
            * (cert.t2 + approx);
        cert.mu - lhs
    } else {
        f64::NEG_INFINITY
    };

    let gains = ObserverGains::new(cert.theta, cert.p.iter().copied().collect())?;
    let om = omega(l, &gains);
    let beta = om + ((nf + 1.0) * l + 3.0) / 2.0;
    let big_gamma = gamma_bound(&cert.predictor, plant, cert.big_k).ok();
    let j = first_hold_after(cert.r, cert.t1, cert.t2);
    let g_exponent = g_ceil(j as f64 + cert.tau / cert.t2);
    let log_m = big_gamma.map(|gm| {
        let denom = -(-2.0 * om * cert.t1 * (-cert.b_sup).exp()).exp_m1();
        g_exponent as f64 * ((7.0 * (1.0 + gm)).ln() + beta * cert.t2 - 0.5 * denom.ln())
    });

    let cond = |name: &str, margin: f64, strict: bool| ConditionMargin {
        name: name.into(),
        margin,
        pass: if strict { margin > 0.0 } else { margin >= 0.0 },
    };
    Ok(ConditionsReport {
        conditions: vec![
            cond("sampling", m_sampling, true),
            cond("observer_gain", m_observer, false),
            cond("predictor_accuracy", m_predictor, true),
        ],
        rho,
        omega: om,
        beta,
        big_gamma,
        j,
        g_exponent,
        log_m,
        empirical_k: true,
    })
}

/// Inputs for [`build_certificate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRequest {
    pub k: Vec<f64>,
    pub p: Vec<f64>,
    pub q: f64,
    /// `None` picks the smallest `theta` allowed by the observer-gain
    /// condition, inflated by 1%.
    pub theta: Option<f64>,
    pub t1: f64,
    pub t2: f64,
    pub predictor: PredictorConfig,
    pub big_k: f64,
    pub b_sup: f64,
    pub probes: usize,
    pub seed: u64,
}

/// Assembles a certificate: observer Lyapunov solve, dissipation search, eigenvalue bounds.
pub fn build_certificate(
    plant: &StrictFeedbackPlant,
    req: &CertificateRequest,
) -> Result<GainCertificate> {
    let n = plant.dim();
    check_dim(n, req.k.len())?;
    check_dim(n, req.p.len())?;
    let k = DVector::from_vec(req.k.clone());
    let p = DVector::from_vec(req.p.clone());
    let q_mat = solve_observer_lyapunov(&chain_matrix(n), &p, &unit(n, 0), req.q)?;
    let diss = search_dissipation(plant, &k, req.probes, req.seed)?;
    let theta = match req.theta {
        Some(t) => t,
        None => {
            1.01 * (1.0_f64)
                .max(2.0 * spectral_norm(&q_mat) * plant.lipschitz * (n as f64).sqrt() / req.q)
        }
    };
    Ok(GainCertificate {
        a: min_eig(&q_mat),
        q_mat,
        q: req.q,
        k1: min_eig(&diss.p),
        k2: max_eig(&diss.p),
        p_mat: diss.p,
        mu: diss.mu,
        gamma: diss.gamma,
        k,
        p,
        theta,
        t1: req.t1,
        t2: req.t2,
        predictor: req.predictor,
        big_k: req.big_k,
        r: plant.r,
        tau: plant.tau,
        b_sup: req.b_sup,
    })
}
