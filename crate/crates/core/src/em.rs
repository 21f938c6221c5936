//! EM fitting of the Dirichlet mixture on an extreme sub-sample.
//!
//! The E-step is Bayes' rule in log space. The M-step splits into a
//! closed-form update of the noise rates and a quasi-Newton solve for
//! `(rho, nu)`: every constrained column of `rho` is a scaled softmax over the
//! faces that contain the coordinate, and `nu = exp(tau)`, so every iterate is
//! feasible by construction.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

use crate::damex::SupportSet;
use crate::matrix::Matrix;
use crate::mixture::{
    self, log_sum_exp, project_rho, DensityCache, MixtureError, ThetaParams,
};
use crate::optim::{self, LbfgsConfig};
use crate::rng;

/// Components whose posterior mass falls below this are frozen.
pub const DEAD_MASS: f64 = 1e-10;

/// Below this posterior mass a face's concentration is held fixed: with a
/// single point the likelihood grows without bound as `nu` does.
pub const MIN_NU_MASS: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum EmError {
    #[error("row {row}: every component has zero density")]
    AllComponentsZero { row: usize },
    #[error("component {component} has no posterior mass")]
    DeadComponent { component: usize },
    #[error("optimizer found no improving feasible point: {0}")]
    OptimizerFailure(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
}

/// Soft assignment `gamma[i][k] = P(Z_ik = 1 | V_i, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix(Matrix);

impl PosteriorMatrix {
    /// Wraps a matrix, checking that rows are probability vectors.
    pub fn new(gamma: Matrix) -> Result<Self, EmError> {
        for (i, row) in gamma.rows_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&g| !(0.0..=1.0).contains(&g)) || (s - 1.0).abs() > 1e-9 {
                return Err(EmError::Shape(format!("row {i} is not a probability vector")));
            }
        }
        Ok(Self(gamma))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_components(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    /// Posterior mass `N_k = sum_i gamma_ik` per component.
    pub fn component_mass(&self) -> Vec<f64> {
        let mut n = vec![0.0; self.n_components()];
        for row in self.0.rows_iter() {
            for (acc, g) in n.iter_mut().zip(row) {
                *acc += g;
            }
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Stopping threshold on the increase of Q; `None` means `1e-6 * n0`.
    pub tol: Option<f64>,
    pub nu_init: f64,
    pub lambda_init: f64,
    pub seed: u64,
    /// Iteration budget of each `(rho, nu)` solve.
    pub inner_max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: None,
            nu_init: 20.0,
            lambda_init: 0.01,
            seed: 0,
            inner_max_iter: 100,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), EmError> {
        if self.max_iter == 0 || self.inner_max_iter == 0 {
            return Err(EmError::InvalidConfig("iteration budgets must be positive".into()));
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(EmError::InvalidConfig(format!("tol = {tol} must be positive")));
            }
        }
        for (name, x) in [("nu_init", self.nu_init), ("lambda_init", self.lambda_init)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(EmError::InvalidConfig(format!("{name} = {x} must be positive")));
            }
        }
        Ok(())
    }

    pub fn tol_for(&self, n0: usize) -> f64 {
        self.tol.unwrap_or(1e-6 * n0 as f64)
    }
}

/// One line of the fit trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub q: f64,
    pub loglik: f64,
    pub e_step_ms: f64,
    pub lambda_ms: f64,
    pub rho_nu_ms: f64,
    pub rho_nu_improved: bool,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: ThetaParams,
    pub gamma: PosteriorMatrix,
    /// `Q(theta_t, gamma_t)` for the initial point and every iteration.
    pub q_trace: Vec<f64>,
    /// Observed log-likelihood alongside `q_trace`.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Components whose parameters were frozen for lack of posterior mass.
    pub frozen: Vec<usize>,
    pub trace: Vec<IterationRecord>,
}

impl FitResult {
    /// Writes the trace as JSON lines.
    pub fn write_trace<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for rec in &self.trace {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn check_shapes(v: &Matrix, theta: &ThetaParams) -> Result<(), EmError> {
    if v.ncols() != theta.d() {
        return Err(EmError::Shape(format!(
            "data has {} columns, model has {}",
            v.ncols(),
            theta.d()
        )));
    }
    Ok(())
}

/// Log of `pi_k p(v_i | z_k = 1)` for every component of one row.
fn ln_joint_row(
    v: &[f64],
    theta: &ThetaParams,
    cache: &DensityCache,
) -> Result<Vec<f64>, MixtureError> {
    let k_all = cache.n_components();
    if v.iter().all(|&x| x >= 1.0) {
        let excess: f64 = v.iter().map(|x| x - 1.0).sum();
        (0..k_all)
            .map(|k| Ok(cache.ln_pi(k) + cache.ln_conditional(v, excess, k)?))
            .collect()
    } else {
        (0..k_all)
            .map(|k| Ok(cache.ln_pi(k) + mixture::ln_conditional(v, k, theta)?))
            .collect()
    }
}

/// E-step plus the observed log-likelihood `sum_i ln(r0 sum_k pi_k p_k(v_i))`.
pub fn e_step_with_loglik(
    v: &Matrix,
    theta: &ThetaParams,
) -> Result<(PosteriorMatrix, f64), EmError> {
    check_shapes(v, theta)?;
    let cache = DensityCache::new(theta);
    let k_all = cache.n_components();
    let rows: Vec<(Vec<f64>, f64)> = (0..v.nrows())
        .into_par_iter()
        .map(|i| {
            let lp = ln_joint_row(v.row(i), theta, &cache)?;
            let lse = log_sum_exp(&lp);
            if lse == f64::NEG_INFINITY {
                return Err(EmError::AllComponentsZero { row: i });
            }
            let mut g: Vec<f64> = lp.iter().map(|&x| (x - lse).exp()).collect();
            let s: f64 = g.iter().sum();
            g.iter_mut().for_each(|x| *x /= s);
            Ok((g, lse))
        })
        .collect::<Result<_, EmError>>()?;
    let mut data = Vec::with_capacity(v.nrows() * k_all);
    let mut loglik = v.nrows() as f64 * theta.r0().ln();
    for (g, lse) in rows {
        data.extend(g);
        loglik += lse;
    }
    Ok((PosteriorMatrix(Matrix::from_vec(v.nrows(), k_all, data)), loglik))
}

pub fn e_step(v: &Matrix, theta: &ThetaParams) -> Result<PosteriorMatrix, EmError> {
    e_step_with_loglik(v, theta).map(|(g, _)| g)
}

/// Sufficient statistics of the posterior for the M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    /// `N_k = sum_i gamma_ik` for every component.
    pub mass: Vec<f64>,
    /// `S_kj = sum_i gamma_ik ln w_ikj` per face, aligned with its members.
    pub log_w: Vec<Vec<f64>>,
    /// `sum_i gamma_ik sum_{l not in alpha_k} (v_il - 1)` for every component.
    pub noise_excess: Vec<f64>,
}

impl SufficientStats {
    pub fn compute(v: &Matrix, gamma: &PosteriorMatrix, support: &SupportSet) -> Result<Self, EmError> {
        if gamma.n() != v.nrows() || gamma.n_components() != support.n_components() {
            return Err(EmError::Shape(format!(
                "posterior is {} x {}, expected {} x {}",
                gamma.n(),
                gamma.n_components(),
                v.nrows(),
                support.n_components()
            )));
        }
        let k_all = support.n_components();
        let mut mass = vec![0.0; k_all];
        let mut noise_excess = vec![0.0; k_all];
        let mut log_w: Vec<Vec<f64>> = support.faces.iter().map(|f| vec![0.0; f.len()]).collect();
        for i in 0..v.nrows() {
            let row = v.row(i);
            let g = gamma.row(i);
            let excess: f64 = row.iter().map(|x| x - 1.0).sum();
            for k in 0..k_all {
                let gk = g[k];
                if gk == 0.0 {
                    continue;
                }
                let members = support.members(k);
                let r: f64 = members.iter().map(|&j| row[j]).sum();
                let inside: f64 = members.iter().map(|&j| row[j] - 1.0).sum();
                mass[k] += gk;
                noise_excess[k] += gk * (excess - inside);
                if k < support.n_faces() {
                    let ln_r = r.ln();
                    for (s, &j) in log_w[k].iter_mut().zip(members) {
                        *s += gk * (row[j].ln() - ln_r);
                    }
                }
            }
        }
        Ok(Self {
            mass,
            log_w,
            noise_excess,
        })
    }
}

/// Closed-form noise-rate update from sufficient statistics. Components with
/// no outside coordinates, no mass or no excess keep `previous`; the indices
/// of massless components are returned.
pub fn lambda_update(stats: &SufficientStats, support: &SupportSet, previous: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut dead = Vec::new();
    let lambda = (0..support.n_components())
        .map(|k| {
            let outside = (support.d - support.members(k).len()) as f64;
            if outside == 0.0 {
                return previous[k];
            }
            if stats.mass[k] < DEAD_MASS || !(stats.noise_excess[k] > 0.0) {
                dead.push(k);
                return previous[k];
            }
            outside * stats.mass[k] / stats.noise_excess[k]
        })
        .collect();
    (lambda, dead)
}

/// `lambda_k = |alpha_k^c| N_k / sum_i gamma_ik sum_{l not in alpha_k} (V_il - 1)`.
pub fn m_step_lambda(
    v: &Matrix,
    gamma: &PosteriorMatrix,
    support: &SupportSet,
    previous: &[f64],
) -> Result<Vec<f64>, EmError> {
    let stats = SufficientStats::compute(v, gamma, support)?;
    let (lambda, dead) = lambda_update(&stats, support, previous);
    match dead.first() {
        Some(&component) => Err(EmError::DeadComponent { component }),
        None => Ok(lambda),
    }
}

/// The `(rho, nu)` part of Q:
/// `sum_k N_k ln pi_k + N_k ln G(nu_k) - N_k sum_j ln G(nu_k m_kj) + sum_j (nu_k m_kj - 1) S_kj`.
pub fn q1_from_stats(stats: &SufficientStats, rho: &[Vec<f64>], nu: &[f64]) -> f64 {
    let mut q = 0.0;
    for (k, row) in rho.iter().enumerate() {
        let n_k = stats.mass[k];
        let pi: f64 = row.iter().sum();
        q += n_k * (pi.ln() + ln_gamma(nu[k]));
        for (&r, &s) in row.iter().zip(&stats.log_w[k]) {
            let a = nu[k] * r / pi;
            q += -n_k * ln_gamma(a) + (a - 1.0) * s;
        }
    }
    q
}

/// Gradient of [`q1_from_stats`] with respect to `rho` and `nu`.
fn q1_gradient(stats: &SufficientStats, rho: &[Vec<f64>], nu: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut d_rho = Vec::with_capacity(rho.len());
    let mut d_nu = Vec::with_capacity(rho.len());
    for (k, row) in rho.iter().enumerate() {
        let n_k = stats.mass[k];
        let pi: f64 = row.iter().sum();
        let m: Vec<f64> = row.iter().map(|r| r / pi).collect();
        // h_kl = -N_k psi(nu m_kl) + S_kl
        let h: Vec<f64> = m
            .iter()
            .zip(&stats.log_w[k])
            .map(|(&ml, &s)| -n_k * digamma(nu[k] * ml) + s)
            .collect();
        let hm: f64 = h.iter().zip(&m).map(|(a, b)| a * b).sum();
        d_rho.push(h.iter().map(|&hj| (n_k + nu[k] * (hj - hm)) / pi).collect());
        d_nu.push(n_k * digamma(nu[k]) + hm);
    }
    (d_rho, d_nu)
}

/// Softmax parametrization of the feasible `(rho, nu)` set.
struct Parametrization {
    d: usize,
    /// Offsets of each face's block in the parameter vector.
    offsets: Vec<usize>,
    /// For each covered coordinate, the `(face, slot)` pairs that contain it.
    columns: Vec<Vec<(usize, usize)>>,
    n_eta: usize,
    n_faces: usize,
}

impl Parametrization {
    fn new(support: &SupportSet) -> Self {
        let mut offsets = Vec::with_capacity(support.n_faces());
        let mut columns = vec![Vec::new(); support.d];
        let mut n_eta = 0;
        for (k, face) in support.faces.iter().enumerate() {
            offsets.push(n_eta);
            for (a, &j) in face.members().iter().enumerate() {
                columns[j].push((k, a));
            }
            n_eta += face.len();
        }
        columns.retain(|c| !c.is_empty());
        Self {
            d: support.d,
            offsets,
            columns,
            n_eta,
            n_faces: support.n_faces(),
        }
    }

    fn encode(&self, rho: &[Vec<f64>], nu: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = rho.iter().flatten().map(|r| (r * self.d as f64).ln()).collect();
        x.extend(nu.iter().map(|n| n.ln()));
        x
    }

    fn decode(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rho: Vec<Vec<f64>> = (0..self.n_faces)
            .map(|k| {
                let end = self.offsets.get(k + 1).copied().unwrap_or(self.n_eta);
                vec![0.0; end - self.offsets[k]]
            })
            .collect();
        let scale = 1.0 / self.d as f64;
        for col in &self.columns {
            let eta = |&(k, a): &(usize, usize)| x[self.offsets[k] + a];
            let max = col.iter().map(eta).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = col.iter().map(|e| (eta(e) - max).exp()).sum();
            for e @ &(k, a) in col {
                rho[k][a] = scale * (eta(e) - max).exp() / z;
            }
        }
        let nu = x[self.n_eta..].iter().map(|t| t.exp()).collect();
        (rho, nu)
    }

    /// Chain rule from `(rho, nu)` gradients to the free parameters.
    fn pull_back(&self, rho: &[Vec<f64>], nu: &[f64], d_rho: &[Vec<f64>], d_nu: &[f64], out: &mut [f64]) {
        for col in &self.columns {
            // d/d eta_lj = rho_lj (G_lj - sum_k s_kj G_kj), s_kj = d rho_kj
            let mean: f64 = col
                .iter()
                .map(|&(k, a)| self.d as f64 * rho[k][a] * d_rho[k][a])
                .sum();
            for &(k, a) in col {
                out[self.offsets[k] + a] = rho[k][a] * (d_rho[k][a] - mean);
            }
        }
        for (k, (&n, &g)) in nu.iter().zip(d_nu).enumerate() {
            out[self.n_eta + k] = n * g;
        }
    }
}

/// Outcome of one `(rho, nu)` solve.
#[derive(Debug, Clone)]
pub struct RhoNuUpdate {
    pub rho: Vec<Vec<f64>>,
    pub nu: Vec<f64>,
    pub q1_before: f64,
    pub q1_after: f64,
    pub iterations: usize,
}

/// Maximizes the `(rho, nu)` block of Q from sufficient statistics, starting
/// at the current values. Never returns a point with lower Q1.
pub fn optimize_rho_nu(
    stats: &SufficientStats,
    support: &SupportSet,
    rho: &[Vec<f64>],
    nu: &[f64],
    max_iter: usize,
) -> Result<RhoNuUpdate, EmError> {
    let q1_before = q1_from_stats(stats, rho, nu);
    if support.n_faces() == 0 {
        return Ok(RhoNuUpdate {
            rho: Vec::new(),
            nu: Vec::new(),
            q1_before,
            q1_after: q1_before,
            iterations: 0,
        });
    }
    let param = Parametrization::new(support);
    let x0 = param.encode(rho, nu);
    // scale the objective so tolerances do not depend on the sample size
    let total: f64 = stats.mass.iter().sum::<f64>().max(1.0);
    let objective = |x: &[f64], grad: &mut [f64]| -> f64 {
        let (r, n) = param.decode(x);
        let q = q1_from_stats(stats, &r, &n);
        if !q.is_finite() {
            return f64::NAN;
        }
        let (dr, mut dn) = q1_gradient(stats, &r, &n);
        for (g, &m) in dn.iter_mut().zip(&stats.mass) {
            if m < MIN_NU_MASS {
                *g = 0.0;
            }
        }
        param.pull_back(&r, &n, &dr, &dn, grad);
        grad.iter_mut().for_each(|g| *g = -*g / total);
        -q / total
    };
    let cfg = LbfgsConfig {
        max_iter,
        ..Default::default()
    };
    let min = optim::minimize(objective, x0, &cfg);
    let (rho_new, mut nu_new) = param.decode(&min.x);
    for (k, &m) in stats.mass.iter().take(nu.len()).enumerate() {
        if m < MIN_NU_MASS {
            nu_new[k] = nu[k];
        }
    }
    let q1_after = q1_from_stats(stats, &rho_new, &nu_new);
    if !q1_after.is_finite() || q1_after < q1_before - 1e-10 {
        return Err(EmError::OptimizerFailure(format!(
            "Q1 went from {q1_before} to {q1_after}"
        )));
    }
    Ok(RhoNuUpdate {
        rho: rho_new,
        nu: nu_new,
        q1_before,
        q1_after,
        iterations: min.iterations,
    })
}

/// Constrained maximization of the `(rho, nu)` block of Q.
pub fn m_step_rho_nu(
    v: &Matrix,
    gamma: &PosteriorMatrix,
    theta: &ThetaParams,
) -> Result<(Vec<Vec<f64>>, Vec<f64>), EmError> {
    check_shapes(v, theta)?;
    let stats = SufficientStats::compute(v, gamma, theta.support())?;
    let up = optimize_rho_nu(&stats, theta.support(), theta.rho(), theta.nu(), 100)?;
    Ok((up.rho, up.nu))
}

/// `Q = Q1 + Q2 + C`: the `(rho, nu)` block, the noise block and the terms
/// that depend on neither.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QSplit {
    pub q1: f64,
    pub q2: f64,
    pub c: f64,
}

impl QSplit {
    pub fn total(&self) -> f64 {
        self.q1 + self.q2 + self.c
    }
}

/// Evaluates each block of Q term by term.
pub fn q_split(v: &Matrix, gamma: &PosteriorMatrix, theta: &ThetaParams) -> Result<QSplit, EmError> {
    check_shapes(v, theta)?;
    let s = theta.support();
    let view = mixture::rho_to_view(theta);
    let mut out = QSplit {
        q1: 0.0,
        q2: 0.0,
        c: 0.0,
    };
    for i in 0..v.nrows() {
        let row = v.row(i);
        for k in 0..s.n_components() {
            let g = gamma.row(i)[k];
            if g == 0.0 {
                continue;
            }
            let members = s.members(k);
            let pd = mixture::polar(row, members).ok_or(MixtureError::DegeneratePolar(k))?;
            let noise: f64 = pd.noise_coords.iter().map(|&x| mixture::ln_noise(x, theta.lambda()[k])).sum();
            out.q2 += g * noise;
            if s.is_singleton(k) {
                out.c += g * (view.pi[k].ln() - 2.0 * pd.r.ln());
            } else {
                let alpha: Vec<f64> = view.m[k].iter().map(|m| theta.nu()[k] * m).collect();
                out.q1 += g * (view.pi[k].ln() + mixture::ln_dirichlet(&pd.w, &alpha)?);
                out.c -= g * (members.len() as f64 + 1.0) * pd.r.ln();
            }
        }
    }
    Ok(out)
}

/// `Q(theta, gamma) = sum_i sum_k gamma_ik (ln pi_k + ln p(V_i | z_k = 1))`.
pub fn q_value(v: &Matrix, gamma: &PosteriorMatrix, theta: &ThetaParams) -> Result<f64, EmError> {
    check_shapes(v, theta)?;
    let pi = theta.weights();
    let mut q = 0.0;
    for i in 0..v.nrows() {
        for (k, &g) in gamma.row(i).iter().enumerate() {
            if g > 0.0 {
                q += g * (pi[k].ln() + mixture::ln_conditional(v.row(i), k, theta)?);
            }
        }
    }
    Ok(q)
}

/// Random feasible starting point.
pub fn initial_theta(support: &SupportSet, r0: f64, config: &FitConfig) -> Result<ThetaParams, EmError> {
    let mut rng = rng::substream(config.seed, rng::INIT);
    let raw: Vec<Vec<f64>> = support
        .faces
        .iter()
        .map(|f| (0..f.len()).map(|_| 1.0 - rng.random::<f64>()).collect())
        .collect();
    let rho = project_rho(support, &raw)?;
    Ok(ThetaParams::new(
        support.clone(),
        rho,
        vec![config.nu_init; support.n_faces()],
        vec![config.lambda_init; support.n_components()],
        r0,
    )?)
}

/// Runs EM from a random feasible start.
pub fn fit(v: &Matrix, support: &SupportSet, r0: f64, config: &FitConfig) -> Result<FitResult, EmError> {
    config.validate()?;
    let theta = initial_theta(support, r0, config)?;
    fit_from(v, theta, config)
}

/// Runs EM from a given starting point.
pub fn fit_from(v: &Matrix, theta0: ThetaParams, config: &FitConfig) -> Result<FitResult, EmError> {
    config.validate()?;
    check_shapes(v, &theta0)?;
    let n0 = v.nrows();
    if n0 == 0 {
        return Err(EmError::Shape("no rows to fit".into()));
    }
    let support = theta0.support().clone();
    if n0 < support.n_components() {
        log::warn!(
            "{} rows for {} components; estimates will be poorly determined",
            n0,
            support.n_components()
        );
    }
    let tol = config.tol_for(n0);
    let mut theta = theta0;
    let t = Instant::now();
    let (mut gamma, mut loglik) = e_step_with_loglik(v, &theta)?;
    let mut q = q_value(v, &gamma, &theta)?;
    let mut trace = vec![IterationRecord {
        iteration: 0,
        q,
        loglik,
        e_step_ms: ms(t),
        lambda_ms: 0.0,
        rho_nu_ms: 0.0,
        rho_nu_improved: false,
    }];
    let mut frozen = std::collections::BTreeSet::new();
    let mut converged = false;
    let mut iterations = 0;
    for iteration in 1..=config.max_iter {
        iterations = iteration;
        let stats = SufficientStats::compute(v, &gamma, &support)?;

        let t = Instant::now();
        let (lambda, dead) = lambda_update(&stats, &support, theta.lambda());
        for &k in &dead {
            if frozen.insert(k) {
                log::warn!("component {k} has no posterior mass; freezing its parameters");
            }
        }
        let lambda_ms = ms(t);

        let t = Instant::now();
        let (rho, nu, improved) = match optimize_rho_nu(&stats, &support, theta.rho(), theta.nu(), config.inner_max_iter) {
            Ok(up) => (up.rho, up.nu, up.q1_after > up.q1_before),
            Err(EmError::OptimizerFailure(msg)) => {
                log::debug!("keeping previous (rho, nu): {msg}");
                (theta.rho().to_vec(), theta.nu().to_vec(), false)
            }
            Err(e) => return Err(e),
        };
        let rho_nu_ms = ms(t);
        theta = theta.with_lambda(lambda)?.with_rho_nu(rho, nu)?;

        let t = Instant::now();
        let (g, ll) = e_step_with_loglik(v, &theta)?;
        let e_step_ms = ms(t);
        gamma = g;
        loglik = ll;
        let q_new = q_value(v, &gamma, &theta)?;
        trace.push(IterationRecord {
            iteration,
            q: q_new,
            loglik,
            e_step_ms,
            lambda_ms,
            rho_nu_ms,
            rho_nu_improved: improved,
        });
        log::debug!("iteration {iteration}: Q = {q_new}, loglik = {loglik}");
        let gain = q_new - q;
        q = q_new;
        if gain < tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        q_trace: trace.iter().map(|r| r.q).collect(),
        loglik_trace: trace.iter().map(|r| r.loglik).collect(),
        theta,
        gamma,
        iterations,
        converged,
        frozen: frozen.into_iter().collect(),
        trace,
    })
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
