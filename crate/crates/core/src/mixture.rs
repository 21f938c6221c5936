//! The sub-asymptotic Dirichlet mixture for extremes.
//!
//! Conditionally on component `k` with face `alpha_k`, a standardized point
//! decomposes as `v = r_k w_k + noise`: `r_k` is the sum of the coordinates in
//! `alpha_k` (Pareto above `r0`), `w_k` is Dirichlet on the sub-simplex of
//! `alpha_k`, and every coordinate outside `alpha_k` is `1 + Exp(lambda_k)`.
//!
//! Weights and Dirichlet means are stored through the product parameter
//! `rho[k][j] = pi_k * m[k][j]`. The moment constraint then reads
//! `sum_{k : j in alpha_k} rho[k][j] = 1 / d` for every coordinate covered by
//! a face, and singleton components carry the fixed weight `1 / d`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::damex::{Face, SupportSet};
use crate::matrix::Matrix;

/// Tolerance on the column sums of `rho`.
pub const CONSTRAINT_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum MixtureError {
    #[error("coordinate {0} is neither a singleton nor covered by a face")]
    UncoveredCoordinate(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{name}[{index}] = {value} must be positive and finite")]
    NonPositive {
        name: &'static str,
        index: usize,
        value: f64,
    },
    #[error("column {column} of rho sums to {sum}, expected {expected}")]
    ColumnSum {
        column: usize,
        sum: f64,
        expected: f64,
    },
    #[error("weight of component {component} is {pi}, outside (0, 1]")]
    WeightRange { component: usize, pi: f64 },
    #[error("point lies on the boundary of the sub-simplex (coordinate {0} is zero)")]
    BoundaryPoint(usize),
    #[error("radius of component {0} is not positive")]
    DegeneratePolar(usize),
    #[error("support: {0}")]
    Support(#[from] crate::damex::DamexError),
    #[error("model file: {0}")]
    Format(String),
}

/// Parameter bundle `(rho, nu, lambda)` with its support and threshold.
///
/// `rho[k]` is aligned with `support.faces[k].members()`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaParams {
    support: SupportSet,
    rho: Vec<Vec<f64>>,
    nu: Vec<f64>,
    lambda: Vec<f64>,
    r0: f64,
}

impl ThetaParams {
    pub fn new(
        support: SupportSet,
        rho: Vec<Vec<f64>>,
        nu: Vec<f64>,
        lambda: Vec<f64>,
        r0: f64,
    ) -> Result<Self, MixtureError> {
        let theta = Self {
            support,
            rho,
            nu,
            lambda,
            r0,
        };
        theta.validate()?;
        Ok(theta)
    }

    /// Checks positivity, shapes and the moment constraint.
    pub fn validate(&self) -> Result<(), MixtureError> {
        let s = &self.support;
        s.validate()?;
        let (k_faces, n_comp) = (s.n_faces(), s.n_components());
        if self.rho.len() != k_faces || self.nu.len() != k_faces {
            return Err(MixtureError::Shape(format!(
                "{} faces but {} rho rows and {} concentrations",
                k_faces,
                self.rho.len(),
                self.nu.len()
            )));
        }
        if self.lambda.len() != n_comp {
            return Err(MixtureError::Shape(format!(
                "{} components but {} noise rates",
                n_comp,
                self.lambda.len()
            )));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(MixtureError::NonPositive {
                name: "r0",
                index: 0,
                value: self.r0,
            });
        }
        check_positive("nu", &self.nu)?;
        check_positive("lambda", &self.lambda)?;
        for (k, row) in self.rho.iter().enumerate() {
            if row.len() != s.faces[k].len() {
                return Err(MixtureError::Shape(format!(
                    "rho row {k} has {} entries for a face of size {}",
                    row.len(),
                    s.faces[k].len()
                )));
            }
            check_positive("rho", row)?;
        }
        let sums = column_sums(s, &self.rho)?;
        let target = 1.0 / s.d as f64;
        for (j, sum) in sums.into_iter().enumerate() {
            if let Some(sum) = sum {
                if (sum - target).abs() > CONSTRAINT_TOL {
                    return Err(MixtureError::ColumnSum {
                        column: j,
                        sum,
                        expected: target,
                    });
                }
            }
        }
        for (k, row) in self.rho.iter().enumerate() {
            let pi: f64 = row.iter().sum();
            if !(pi > 0.0 && pi <= 1.0 + CONSTRAINT_TOL) {
                return Err(MixtureError::WeightRange { component: k, pi });
            }
        }
        Ok(())
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn rho(&self) -> &[Vec<f64>] {
        &self.rho
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn d(&self) -> usize {
        self.support.d
    }

    /// `K x d` matrix with structural zeros outside each face.
    pub fn rho_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.support.n_faces(), self.d());
        for (k, row) in self.rho.iter().enumerate() {
            for (&j, &r) in self.support.faces[k].members().iter().zip(row) {
                m.set(k, j, r);
            }
        }
        m
    }

    /// Mixture weights for every component (faces, then singletons at `1/d`).
    pub fn weights(&self) -> Vec<f64> {
        let mut pi: Vec<f64> = self.rho.iter().map(|r| r.iter().sum()).collect();
        pi.extend(std::iter::repeat_n(
            1.0 / self.d() as f64,
            self.support.n_singletons(),
        ));
        pi
    }

    /// Replaces `lambda`, re-validating.
    pub fn with_lambda(mut self, lambda: Vec<f64>) -> Result<Self, MixtureError> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    /// Replaces `(rho, nu)`, re-validating.
    pub fn with_rho_nu(mut self, rho: Vec<Vec<f64>>, nu: Vec<f64>) -> Result<Self, MixtureError> {
        self.rho = rho;
        self.nu = nu;
        self.validate()?;
        Ok(self)
    }

    /// Same parameters with components re-ordered to match `target`, which
    /// must hold the same faces and singletons.
    pub fn reordered(&self, target: &SupportSet) -> Option<Self> {
        if target.d != self.d() || target.n_components() != self.support.n_components() {
            return None;
        }
        let mut rho = Vec::with_capacity(target.n_faces());
        let mut nu = Vec::with_capacity(target.n_faces());
        let mut lambda = Vec::with_capacity(target.n_components());
        for k in 0..target.n_components() {
            let src = self.support.position(&target.component_face(k))?;
            if k < target.n_faces() {
                rho.push(self.rho[src].clone());
                nu.push(self.nu[src]);
            }
            lambda.push(self.lambda[src]);
        }
        let mut support = target.clone();
        support.masses = if self.support.masses.is_empty() {
            Vec::new()
        } else {
            (0..target.n_components())
                .map(|k| self.support.masses[self.support.position(&target.component_face(k)).unwrap()])
                .collect()
        };
        Self::new(support, rho, nu, lambda, self.r0).ok()
    }
}

fn check_positive(name: &'static str, xs: &[f64]) -> Result<(), MixtureError> {
    match xs.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        Some(index) => Err(MixtureError::NonPositive {
            name,
            index,
            value: xs[index],
        }),
        None => Ok(()),
    }
}

/// Column sums of `rho` per coordinate; `None` for singleton coordinates.
fn column_sums(support: &SupportSet, rho: &[Vec<f64>]) -> Result<Vec<Option<f64>>, MixtureError> {
    let mut sums = vec![None; support.d];
    for (k, row) in rho.iter().enumerate() {
        for (&j, &r) in support.faces[k].members().iter().zip(row) {
            *sums[j].get_or_insert(0.0) += r;
        }
    }
    let mut singleton = vec![false; support.d];
    for &j in &support.singletons {
        singleton[j] = true;
    }
    for (j, sum) in sums.iter().enumerate() {
        if sum.is_none() && !singleton[j] {
            return Err(MixtureError::UncoveredCoordinate(j));
        }
    }
    Ok(sums)
}

/// Column normalization onto the moment constraint:
/// `rho[k][j] = raw[k][j] / (d * sum_l raw[l][j])`.
pub fn project_rho(support: &SupportSet, raw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, MixtureError> {
    if raw.len() != support.n_faces() {
        return Err(MixtureError::Shape(format!(
            "{} raw rows for {} faces",
            raw.len(),
            support.n_faces()
        )));
    }
    for (k, row) in raw.iter().enumerate() {
        if row.len() != support.faces[k].len() {
            return Err(MixtureError::Shape(format!("raw row {k} has wrong length")));
        }
        check_positive("raw rho", row)?;
    }
    let sums = column_sums(support, raw)?;
    let d = support.d as f64;
    Ok(raw
        .iter()
        .enumerate()
        .map(|(k, row)| {
            support.faces[k]
                .members()
                .iter()
                .zip(row)
                .map(|(&j, &r)| r / (d * sums[j].expect("covered column")))
                .collect()
        })
        .collect())
}

/// Weights and Dirichlet means derived from `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentView {
    /// One weight per component; singletons carry `1/d`.
    pub pi: Vec<f64>,
    /// `m[k]` aligned with the members of face `k`.
    pub m: Vec<Vec<f64>>,
}

pub fn rho_to_view(theta: &ThetaParams) -> ComponentView {
    let pi = theta.weights();
    let m = theta
        .rho
        .iter()
        .zip(&pi)
        .map(|(row, &p)| row.iter().map(|&r| r / p).collect())
        .collect();
    ComponentView { pi, m }
}

/// Inverse of [`rho_to_view`]: `rho[k][j] = pi_k * m[k][j]`.
pub fn view_to_rho(view: &ComponentView) -> Vec<Vec<f64>> {
    view.m
        .iter()
        .zip(&view.pi)
        .map(|(row, &p)| row.iter().map(|&m| p * m).collect())
        .collect()
}

/// Polar coordinates of `v` relative to a face.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarDecomposition {
    pub r: f64,
    pub w: Vec<f64>,
    pub noise_coords: Vec<f64>,
}

pub fn polar(v: &[f64], face: &[usize]) -> Option<PolarDecomposition> {
    let r: f64 = face.iter().map(|&j| v[j]).sum();
    if !(r > 0.0) {
        return None;
    }
    let w = face.iter().map(|&j| v[j] / r).collect();
    let noise_coords = (0..v.len())
        .filter(|j| face.binary_search(j).is_err())
        .map(|j| v[j])
        .collect();
    Some(PolarDecomposition { r, w, noise_coords })
}

/// Log Dirichlet density with parameters `alpha` at `w`.
pub fn ln_dirichlet(w: &[f64], alpha: &[f64]) -> Result<f64, MixtureError> {
    if let Some(j) = w.iter().position(|&x| !(x > 0.0)) {
        return Err(MixtureError::BoundaryPoint(j));
    }
    let a0: f64 = alpha.iter().sum();
    let mut out = ln_gamma(a0);
    for (&x, &a) in w.iter().zip(alpha) {
        out += (a - 1.0) * x.ln() - ln_gamma(a);
    }
    Ok(out)
}

/// Dirichlet density on the sub-simplex of face `k`, parameterized by the
/// face's `rho` row and concentration `nu`.
pub fn dirichlet_density(w: &[f64], rho_k: &[f64], nu_k: f64) -> Result<f64, MixtureError> {
    let pi: f64 = rho_k.iter().sum();
    let alpha: Vec<f64> = rho_k.iter().map(|&r| nu_k * r / pi).collect();
    ln_dirichlet(w, &alpha).map(f64::exp)
}

/// Log of the translated exponential density `lambda exp(-lambda (x - 1))`,
/// supported on `x >= 1`.
pub fn ln_noise(x: f64, lambda: f64) -> f64 {
    if x < 1.0 {
        f64::NEG_INFINITY
    } else {
        lambda.ln() - lambda * (x - 1.0)
    }
}

pub fn noise_density(x: f64, lambda: f64) -> f64 {
    ln_noise(x, lambda).exp()
}

/// Log conditional density `p(v | z_k = 1, theta)`, evaluated coordinate by
/// coordinate.
pub fn ln_conditional(v: &[f64], k: usize, theta: &ThetaParams) -> Result<f64, MixtureError> {
    let s = &theta.support;
    if v.len() != s.d {
        return Err(MixtureError::Shape(format!(
            "point has {} coordinates, model has {}",
            v.len(),
            s.d
        )));
    }
    if k >= s.n_components() {
        return Err(MixtureError::Shape(format!("component {k} out of range")));
    }
    let lambda = theta.lambda[k];
    let members = s.members(k);
    let pd = polar(v, members).ok_or(MixtureError::DegeneratePolar(k))?;
    let noise: f64 = pd.noise_coords.iter().map(|&x| ln_noise(x, lambda)).sum();
    if s.is_singleton(k) {
        return Ok(-2.0 * pd.r.ln() + noise);
    }
    let alpha: Vec<f64> = {
        let row = &theta.rho[k];
        let pi: f64 = row.iter().sum();
        row.iter().map(|&r| theta.nu[k] * r / pi).collect()
    };
    let radial = -(members.len() as f64 + 1.0) * pd.r.ln();
    Ok(radial + ln_dirichlet(&pd.w, &alpha)? + noise)
}

pub fn conditional_density(v: &[f64], k: usize, theta: &ThetaParams) -> Result<f64, MixtureError> {
    ln_conditional(v, k, theta).map(f64::exp)
}

/// Log of the full density `r0 * sum_k pi_k p(v | z_k = 1)`.
pub fn ln_mixture_density(v: &[f64], theta: &ThetaParams) -> Result<f64, MixtureError> {
    let pi = theta.weights();
    let terms = pi
        .iter()
        .enumerate()
        .map(|(k, &p)| Ok(p.ln() + ln_conditional(v, k, theta)?))
        .collect::<Result<Vec<f64>, MixtureError>>()?;
    Ok(theta.r0.ln() + log_sum_exp(&terms))
}

pub fn mixture_density(v: &[f64], theta: &ThetaParams) -> Result<f64, MixtureError> {
    ln_mixture_density(v, theta).map(f64::exp)
}

/// `ln sum exp(x)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Per-component constants for fast repeated evaluation over many rows.
#[derive(Debug, Clone)]
pub struct DensityCache {
    d: usize,
    members: Vec<Vec<usize>>,
    /// Dirichlet parameters `nu m` per face.
    alpha: Vec<Vec<f64>>,
    /// `ln Gamma(nu) - sum ln Gamma(nu m_j)` per face.
    ln_norm: Vec<f64>,
    lambda: Vec<f64>,
    ln_lambda: Vec<f64>,
    ln_pi: Vec<f64>,
}

impl DensityCache {
    pub fn new(theta: &ThetaParams) -> Self {
        let s = &theta.support;
        let view = rho_to_view(theta);
        let alpha: Vec<Vec<f64>> = view
            .m
            .iter()
            .zip(&theta.nu)
            .map(|(m, &nu)| m.iter().map(|&x| nu * x).collect())
            .collect();
        let ln_norm = alpha
            .iter()
            .zip(&theta.nu)
            .map(|(a, &nu)| ln_gamma(nu) - a.iter().map(|&x| ln_gamma(x)).sum::<f64>())
            .collect();
        Self {
            d: s.d,
            members: (0..s.n_components()).map(|k| s.members(k).to_vec()).collect(),
            alpha,
            ln_norm,
            lambda: theta.lambda.clone(),
            ln_lambda: theta.lambda.iter().map(|l| l.ln()).collect(),
            ln_pi: view.pi.iter().map(|p| p.ln()).collect(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.members.len()
    }

    pub fn ln_pi(&self, k: usize) -> f64 {
        self.ln_pi[k]
    }

    /// `ln p(v | z_k = 1)` given `excess = sum_j (v_j - 1)`. Requires every
    /// coordinate of `v` to be at least 1; see [`ln_conditional`] otherwise.
    pub fn ln_conditional(&self, v: &[f64], excess: f64, k: usize) -> Result<f64, MixtureError> {
        let members = &self.members[k];
        let mut r = 0.0;
        let mut inside_excess = 0.0;
        for &j in members {
            r += v[j];
            inside_excess += v[j] - 1.0;
        }
        if !(r > 0.0) {
            return Err(MixtureError::DegeneratePolar(k));
        }
        let n_noise = (self.d - members.len()) as f64;
        let noise = n_noise * self.ln_lambda[k] - self.lambda[k] * (excess - inside_excess);
        let ln_r = r.ln();
        if k >= self.alpha.len() {
            return Ok(-2.0 * ln_r + noise);
        }
        let mut dir = self.ln_norm[k];
        for (&j, &a) in members.iter().zip(&self.alpha[k]) {
            let w = v[j] / r;
            if !(w > 0.0) {
                return Err(MixtureError::BoundaryPoint(j));
            }
            dir += (a - 1.0) * (v[j].ln() - ln_r);
        }
        Ok(-(members.len() as f64 + 1.0) * ln_r + dir + noise)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    d: usize,
    r0: f64,
    faces: Vec<Face>,
    singletons: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    masses: Vec<f64>,
    /// Sparse `(k, j, value)` triplets.
    rho: Vec<(usize, usize, f64)>,
    nu: Vec<f64>,
    lambda: Vec<f64>,
}

impl ThetaParams {
    /// JSON model document; floats use shortest round-trip decimal strings.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            d: self.d(),
            r0: self.r0,
            faces: self.support.faces.clone(),
            singletons: self.support.singletons.clone(),
            masses: self.support.masses.clone(),
            rho: self
                .rho
                .iter()
                .enumerate()
                .flat_map(|(k, row)| {
                    self.support.faces[k]
                        .members()
                        .iter()
                        .zip(row)
                        .map(move |(&j, &r)| (k, j, r))
                })
                .collect(),
            nu: self.nu.clone(),
            lambda: self.lambda.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MixtureError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| MixtureError::Format(e.to_string()))?;
        let support = SupportSet::new(file.d, file.faces, file.singletons, file.masses)?;
        let mut rho: Vec<Vec<f64>> = support
            .faces
            .iter()
            .map(|f| vec![f64::NAN; f.len()])
            .collect();
        for (k, j, r) in file.rho {
            let slot = support
                .faces
                .get(k)
                .and_then(|f| f.members().binary_search(&j).ok())
                .ok_or_else(|| MixtureError::Format(format!("rho entry ({k}, {j}) outside support")))?;
            rho[k][slot] = r;
        }
        Self::new(support, rho, file.nu, file.lambda, file.r0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn face(m: &[usize]) -> Face {
        Face::new(m.iter().copied()).unwrap()
    }

    fn toy_theta() -> ThetaParams {
        // d = 4: faces {0,1}, {1,2}; singleton 3
        let support = SupportSet::new(4, vec![face(&[0, 1]), face(&[1, 2])], vec![3], vec![]).unwrap();
        let rho = project_rho(&support, &[vec![1.0, 2.0], vec![1.0, 3.0]]).unwrap();
        ThetaParams::new(support, rho, vec![5.0, 8.0], vec![0.7, 1.3, 2.0], 10.0).unwrap()
    }

    #[test]
    fn view_example() {
        let support = SupportSet::new(3, vec![face(&[0, 1, 2])], vec![], vec![]).unwrap();
        let theta = ThetaParams {
            support,
            rho: vec![vec![0.02, 0.03, 0.05]],
            nu: vec![1.0],
            lambda: vec![1.0],
            r0: 1.0,
        };
        let view = rho_to_view(&theta);
        assert!((view.pi[0] - 0.10).abs() < 1e-15);
        for (m, want) in view.m[0].iter().zip([0.2, 0.3, 0.5]) {
            assert!((m - want).abs() < 1e-14);
        }
    }

    #[test]
    fn weights_sum_to_one() {
        let theta = toy_theta();
        let pi = theta.weights();
        let faces: f64 = pi[..2].iter().sum();
        assert!((faces - (1.0 - 1.0 / 4.0)).abs() < 1e-12);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn view_round_trip() {
        let theta = toy_theta();
        let back = view_to_rho(&rho_to_view(&theta));
        for (a, b) in back.iter().flatten().zip(theta.rho().iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn project_two_faces() {
        let support = SupportSet::new(4, vec![face(&[0, 1]), face(&[0, 2, 3])], vec![], vec![]).unwrap();
        let rho = project_rho(&support, &[vec![1.0, 1.0], vec![1.0, 1.0, 1.0]]).unwrap();
        assert_eq!(rho[0][0], 1.0 / 8.0);
        assert_eq!(rho[1][0], 1.0 / 8.0);
        assert_eq!(rho[0][1], 1.0 / 4.0);
    }

    #[test]
    fn project_is_a_fixed_point() {
        let theta = toy_theta();
        let again = project_rho(theta.support(), theta.rho()).unwrap();
        for (a, b) in again.iter().flatten().zip(theta.rho().iter().flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn project_rejects_uncovered_coordinate() {
        let support = SupportSet::new(4, vec![face(&[0, 1])], vec![3], vec![]).unwrap();
        assert_eq!(
            project_rho(&support, &[vec![1.0, 1.0]]),
            Err(MixtureError::UncoveredCoordinate(2))
        );
    }

    #[test]
    fn project_random_large_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 100;
        let faces: Vec<Face> = (0..50).map(|k| face(&[2 * k, 2 * k + 1])).collect();
        let faces: Vec<Face> = faces
            .into_iter()
            .enumerate()
            .map(|(k, f)| {
                let mut m = f.members().to_vec();
                m.push((2 * k + 2) % d);
                face(&m)
            })
            .collect();
        let support = SupportSet::new(d, faces, vec![], vec![]).unwrap();
        let raw: Vec<Vec<f64>> = support
            .faces
            .iter()
            .map(|f| (0..f.len()).map(|_| rng.random::<f64>() + 1e-3).collect())
            .collect();
        let rho = project_rho(&support, &raw).unwrap();
        let sums = column_sums(&support, &rho).unwrap();
        for s in sums.into_iter().flatten() {
            assert!((s - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_catches_broken_constraint() {
        let theta = toy_theta();
        let mut rho = theta.rho().to_vec();
        rho[0][0] *= 1.01;
        let err = theta.clone().with_rho_nu(rho, theta.nu().to_vec()).unwrap_err();
        assert!(matches!(err, MixtureError::ColumnSum { column: 0, .. }));
        let err = theta.with_lambda(vec![1.0, 0.0, 1.0]).unwrap_err();
        assert!(matches!(err, MixtureError::NonPositive { name: "lambda", .. }));
    }

    #[test]
    fn uniform_dirichlet_is_two() {
        let rho = [0.1, 0.1, 0.1];
        let d = dirichlet_density(&[0.2, 0.5, 0.3], &rho, 3.0).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn beta_two_two_at_half() {
        // Beta(2,2) density 6 w (1 - w); independent check by trapezoid
        // integration of the density over [0, 1].
        let value = dirichlet_density(&[0.5, 0.5], &[0.2, 0.2], 4.0).unwrap();
        assert!((value - 1.5).abs() < 1e-12);
        let n = 20_000;
        let integral: f64 = (1..n)
            .map(|i| {
                let w = i as f64 / n as f64;
                dirichlet_density(&[w, 1.0 - w], &[0.2, 0.2], 4.0).unwrap()
            })
            .sum::<f64>()
            / n as f64;
        assert!((integral - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dirichlet_boundary_point() {
        assert_eq!(
            dirichlet_density(&[0.0, 1.0], &[0.1, 0.1], 2.0),
            Err(MixtureError::BoundaryPoint(0))
        );
    }

    #[test]
    fn noise_values() {
        assert_eq!(noise_density(1.0, 2.0), 2.0);
        assert!((noise_density(2.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(noise_density(0.5, 1.0), 0.0);
    }

    #[test]
    fn noise_integrates_to_one() {
        // Simpson on [1, 1 + 40 / lambda]; the tail beyond is < e^-40
        for lambda in [0.1, 1.0, 3.0] {
            let (a, b, n) = (1.0, 1.0 + 40.0 / lambda, 20_000);
            let h = (b - a) / n as f64;
            let mut s = noise_density(a, lambda) + noise_density(b, lambda);
            for i in 1..n {
                let x = a + i as f64 * h;
                s += noise_density(x, lambda) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            assert!((s * h / 3.0 - 1.0).abs() < 1e-6, "lambda {lambda}");
        }
    }

    #[test]
    fn singleton_conditional() {
        let support = SupportSet::new(2, vec![], vec![0, 1], vec![]).unwrap();
        let theta = ThetaParams::new(support, vec![], vec![], vec![1.0, 1.0], 1.0).unwrap();
        let p = conditional_density(&[4.0, 1.5], 0, &theta).unwrap();
        assert!((p - 4f64.powi(-2) * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn full_face_has_no_noise_term() {
        let support = SupportSet::new(3, vec![face(&[0, 1, 2])], vec![], vec![]).unwrap();
        let rho = project_rho(&support, &[vec![1.0, 1.0, 1.0]]).unwrap();
        let theta = ThetaParams::new(support, rho, vec![3.0], vec![0.5], 1.0).unwrap();
        let v = [2.0, 3.0, 5.0];
        let p = conditional_density(&v, 0, &theta).unwrap();
        // uniform Dirichlet density is 2, r = 10
        assert!((p - 10f64.powi(-4) * 2.0).abs() < 1e-15);
    }

    /// Straight-line evaluation of the conditional density for
    /// `d = 3, alpha = {0, 1}` in linear space.
    fn independent_conditional(v: [f64; 3], rho: [f64; 2], nu: f64, lambda: f64) -> f64 {
        let pi = rho[0] + rho[1];
        let (m0, m1) = (rho[0] / pi, rho[1] / pi);
        let r = v[0] + v[1];
        let (w0, w1) = (v[0] / r, v[1] / r);
        let gamma = |x: f64| statrs::function::gamma::gamma(x);
        let phi = gamma(nu) / (gamma(nu * m0) * gamma(nu * m1)) * w0.powf(nu * m0 - 1.0) * w1.powf(nu * m1 - 1.0);
        r.powi(-3) * phi * lambda * (-lambda * (v[2] - 1.0)).exp()
    }

    #[test]
    fn conditional_matches_independent_evaluation() {
        let support = SupportSet::new(3, vec![face(&[0, 1])], vec![2], vec![]).unwrap();
        let rho = project_rho(&support, &[vec![1.0, 1.0]]).unwrap();
        let theta = ThetaParams::new(support, rho.clone(), vec![6.5], vec![0.8, 1.1], 5.0).unwrap();
        for v in [[3.0, 7.0, 1.2], [10.0, 1.5, 2.5], [1.0, 4.0, 1.0]] {
            let got = conditional_density(&v, 0, &theta).unwrap();
            let want = independent_conditional(v, [rho[0][0], rho[0][1]], 6.5, 0.8);
            assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn single_component_mixture() {
        let support = SupportSet::new(3, vec![face(&[0, 1, 2])], vec![], vec![]).unwrap();
        let rho = project_rho(&support, &[vec![1.0, 2.0, 3.0]]).unwrap();
        let theta = ThetaParams::new(support, rho, vec![4.0], vec![1.0], 7.0).unwrap();
        let v = [3.0, 4.0, 5.0];
        let mix = mixture_density(&v, &theta).unwrap();
        let cond = conditional_density(&v, 0, &theta).unwrap();
        assert!(((mix - 7.0 * cond) / mix).abs() < 1e-12);
    }

    #[test]
    fn cache_agrees_with_direct_evaluation() {
        let theta = toy_theta();
        let cache = DensityCache::new(&theta);
        let v = [3.0, 2.5, 9.0, 1.25];
        let excess: f64 = v.iter().map(|x| x - 1.0).sum();
        for k in 0..3 {
            let a = ln_conditional(&v, k, &theta).unwrap();
            let b = cache.ln_conditional(&v, excess, k).unwrap();
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0), "{k}: {a} {b}");
        }
    }

    #[test]
    fn model_json_is_bit_exact() {
        let theta = toy_theta();
        let text = theta.to_json();
        let back = ThetaParams::from_json(&text).unwrap();
        assert_eq!(back, theta);
        for (a, b) in back.rho().iter().flatten().zip(theta.rho().iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn reorder_follows_target_support() {
        let theta = toy_theta();
        let target = SupportSet::new(4, vec![face(&[1, 2]), face(&[0, 1])], vec![3], vec![]).unwrap();
        let r = theta.reordered(&target).unwrap();
        assert_eq!(r.nu(), &[8.0, 5.0]);
        assert_eq!(r.lambda(), &[1.3, 0.7, 2.0]);
    }

    proptest! {
        #[test]
        fn log_space_matches_linear_space(
            v in prop::collection::vec(1.0f64..30.0, 4),
            nu in 0.5f64..30.0,
            lambda in 0.2f64..3.0,
        ) {
            let support = SupportSet::new(4, vec![face(&[0, 1]), face(&[1, 2])], vec![3], vec![]).unwrap();
            let rho = project_rho(&support, &[vec![1.0, 2.0], vec![1.0, 3.0]]).unwrap();
            let theta = ThetaParams::new(support, rho, vec![nu, nu + 1.0], vec![lambda; 3], 10.0).unwrap();
            let pi = theta.weights();
            let linear: f64 = (0..3)
                .map(|k| pi[k] * conditional_density(&v, k, &theta).unwrap())
                .sum::<f64>() * 10.0;
            let logged = mixture_density(&v, &theta).unwrap();
            if linear > 1e-280 {
                prop_assert!(((logged - linear) / linear).abs() < 1e-10);
            }
        }
    }
}
