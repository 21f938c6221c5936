//! Synthetic data drawn from the Dirichlet mixture, with ground-truth labels.
//!
//! A point from face component `k` is `R * W` on the face, with
//! `R = r0 / U` (Pareto truncated at `r0`) and `W ~ Dirichlet(nu_k m_k)`, and
//! `1 + Exp(lambda_k)` on every other coordinate. Singleton components put
//! `R` itself on their coordinate.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damex::{Face, SupportSet};
use crate::matrix::Matrix;
use crate::mixture::{self, project_rho, MixtureError, ThetaParams};
use crate::rng;

/// Noise rates of the benchmark sweep, from light to heavy noise.
pub const LAMBDA_SWEEP: [f64; 5] = [1.0, 0.75, 0.5, 0.25, 0.1];

#[derive(Debug, Error, PartialEq)]
pub enum SimulateError {
    #[error("cannot draw {k} distinct non-nested faces in dimension {d}")]
    InfeasibleK { d: usize, k: usize },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
}

/// A parameter given once for all components or per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerComponent {
    Scalar(f64),
    Each(Vec<f64>),
}

impl PerComponent {
    fn expand(&self, n: usize, name: &str) -> Result<Vec<f64>, SimulateError> {
        let out = match self {
            Self::Scalar(x) => vec![*x; n],
            Self::Each(xs) if xs.len() == n => xs.clone(),
            Self::Each(xs) => {
                return Err(SimulateError::InvalidSpec(format!(
                    "{name} has {} values for {n} components",
                    xs.len()
                )))
            }
        };
        if out.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(SimulateError::InvalidSpec(format!("{name} must be positive")));
        }
        Ok(out)
    }
}

impl From<f64> for PerComponent {
    fn from(x: f64) -> Self {
        Self::Scalar(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub d: usize,
    /// Number of faces with at least two coordinates.
    pub k_faces: usize,
    /// Concentration, scalar or one per face.
    pub nu: PerComponent,
    /// Noise rate, scalar or one per component (faces, then singletons).
    pub lambda: PerComponent,
    pub r0: f64,
    pub n0: usize,
    pub seed: u64,
    /// Largest face size; `None` draws faces uniformly among all subsets
    /// with at least two coordinates.
    pub max_face_size: Option<usize>,
    /// Raw `rho` entries are uniform on `(rho_floor, 1)` before projection.
    pub rho_floor: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            d: 100,
            k_faces: 50,
            nu: PerComponent::Scalar(20.0),
            lambda: PerComponent::Scalar(1.0),
            r0: 100.0,
            n0: 1000,
            seed: 0,
            max_face_size: Some(2),
            rho_floor: 0.5,
        }
    }
}

impl SyntheticSpec {
    /// The benchmark configuration at noise rate `lambda`.
    pub fn benchmark(lambda: f64, seed: u64) -> Self {
        Self {
            lambda: PerComponent::Scalar(lambda),
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        if self.d < 2 {
            return Err(SimulateError::InvalidSpec("d must be at least 2".into()));
        }
        if self.n0 == 0 {
            return Err(SimulateError::InvalidSpec("n0 must be positive".into()));
        }
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(SimulateError::InvalidSpec("r0 must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rho_floor) {
            return Err(SimulateError::InvalidSpec("rho_floor must lie in [0, 1)".into()));
        }
        if let Some(m) = self.max_face_size {
            if m < 2 || m > self.d {
                return Err(SimulateError::InvalidSpec(format!(
                    "max_face_size = {m} must lie in [2, d]"
                )));
            }
        }
        Ok(())
    }
}

/// Draws `k` distinct, non-nested faces; uncovered coordinates become
/// singletons.
pub fn random_support(
    d: usize,
    k: usize,
    max_face_size: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<SupportSet, SimulateError> {
    if d < 63 && (k as u128) > (1u128 << d) - d as u128 - 1 {
        return Err(SimulateError::InfeasibleK { d, k });
    }
    let mut faces: Vec<Face> = Vec::with_capacity(k);
    let max_attempts = 1000 * (k + 1);
    let mut attempts = 0;
    while faces.len() < k {
        attempts += 1;
        if attempts > max_attempts {
            return Err(SimulateError::InfeasibleK { d, k });
        }
        let members: Vec<usize> = match max_face_size {
            Some(m) => {
                let size = rng.random_range(2..=m);
                index::sample(rng, d, size).into_vec()
            }
            None => (0..d).filter(|_| rng.random::<bool>()).collect(),
        };
        if members.len() < 2 {
            continue;
        }
        let face = Face::new(members).expect("distinct indices");
        if faces.iter().any(|f| f.nested_with(&face)) {
            continue;
        }
        faces.push(face);
    }
    let mut covered = vec![false; d];
    for f in &faces {
        for &j in f.members() {
            covered[j] = true;
        }
    }
    let singletons = (0..d).filter(|&j| !covered[j]).collect();
    SupportSet::new(d, faces, singletons, Vec::new())
        .map_err(|e| SimulateError::InvalidSpec(e.to_string()))
}

/// Random feasible parameters on `support`.
pub fn random_theta(
    support: &SupportSet,
    nu: &PerComponent,
    lambda: &PerComponent,
    r0: f64,
    rho_floor: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ThetaParams, SimulateError> {
    let raw: Vec<Vec<f64>> = support
        .faces
        .iter()
        .map(|f| {
            (0..f.len())
                .map(|_| rho_floor + (1.0 - rho_floor) * (1.0 - rng.random::<f64>()))
                .collect()
        })
        .collect();
    let rho = project_rho(support, &raw)?;
    let nu = nu.expand(support.n_faces(), "nu")?;
    let lambda = lambda.expand(support.n_components(), "lambda")?;
    Ok(ThetaParams::new(support.clone(), rho, nu, lambda, r0)?)
}

/// Draws one point from component `k`.
pub fn sample_point(theta: &ThetaParams, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s = theta.support();
    let noise = Exp::new(theta.lambda()[k]).expect("positive rate");
    let mut v: Vec<f64> = (0..s.d).map(|_| 1.0 + noise.sample(rng)).collect();
    let r = theta.r0() / (1.0 - rng.random::<f64>());
    let members = s.members(k);
    if s.is_singleton(k) {
        v[members[0]] = r;
        return v;
    }
    let w = sample_dirichlet(&dirichlet_params(theta, k), rng);
    for (&j, wj) in members.iter().zip(w) {
        v[j] = r * wj;
    }
    v
}

fn dirichlet_params(theta: &ThetaParams, k: usize) -> Vec<f64> {
    let row = &theta.rho()[k];
    let pi: f64 = row.iter().sum();
    row.iter().map(|r| theta.nu()[k] * r / pi).collect()
}

/// Normalized Gamma draws. Exact zeros, possible for tiny parameters, are
/// lifted to the smallest positive double so the point stays in the interior.
pub fn sample_dirichlet(alpha: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng).max(f64::MIN_POSITIVE))
            .collect();
        let s: f64 = g.iter().sum();
        if s.is_finite() && s > 0.0 {
            return g.into_iter().map(|x| x / s).collect();
        }
    }
}

/// A synthetic sample with its generating parameters.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub v: Matrix,
    /// Generating component of each row, 0-based (faces, then singletons).
    pub labels: Vec<usize>,
    pub theta_true: ThetaParams,
}

/// Draws `n` points and their component labels from `theta`.
pub fn sample_from(theta: &ThetaParams, n: usize, rng: &mut ChaCha8Rng) -> (Matrix, Vec<usize>) {
    let pi = theta.weights();
    let cumulative: Vec<f64> = pi
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().expect("at least one component");
    let mut data = Vec::with_capacity(n * theta.d());
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        let k = cumulative.partition_point(|&c| c <= u).min(pi.len() - 1);
        data.extend(sample_point(theta, k, rng));
        labels.push(k);
    }
    (Matrix::from_vec(n, theta.d(), data), labels)
}

/// Draws support, parameters and sample from three independent sub-streams of
/// `spec.seed`.
pub fn sample_dataset(spec: &SyntheticSpec) -> Result<LabeledSample, SimulateError> {
    spec.validate()?;
    let mut rng_support = rng::substream(spec.seed, "simulate.support");
    let mut rng_theta = rng::substream(spec.seed, "simulate.theta");
    let mut rng_points = rng::substream(spec.seed, rng::SIMULATE);
    let support = random_support(spec.d, spec.k_faces, spec.max_face_size, &mut rng_support)?;
    let theta = random_theta(&support, &spec.nu, &spec.lambda, spec.r0, spec.rho_floor, &mut rng_theta)?;
    let (v, labels) = sample_from(&theta, spec.n0, &mut rng_points);
    Ok(LabeledSample {
        v,
        labels,
        theta_true: theta,
    })
}

/// Mean Dirichlet draw of face `k`; used to sanity-check the sampler.
pub fn mean_direction(theta: &ThetaParams, k: usize, draws: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let alpha = dirichlet_params(theta, k);
    let mut mean = vec![0.0; alpha.len()];
    for _ in 0..draws {
        for (m, w) in mean.iter_mut().zip(sample_dirichlet(&alpha, rng)) {
            *m += w / draws as f64;
        }
    }
    mean
}

/// Weights and means of the generating model, for reporting.
pub fn describe(theta: &ThetaParams) -> mixture::ComponentView {
    mixture::rho_to_view(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn small_support_from_power_set() {
        let s = random_support(3, 1, None, &mut rng(1)).unwrap();
        assert_eq!(s.n_faces(), 1);
        assert!(s.faces[0].len() >= 2);
        assert_eq!(s.n_singletons(), 3 - s.faces[0].len());
    }

    #[test]
    fn support_is_deterministic() {
        let a = random_support(20, 5, None, &mut rng(9)).unwrap();
        let b = random_support(20, 5, None, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_k() {
        // d = 3 has four subsets of size >= 2, and they are nested
        assert_eq!(
            random_support(3, 5, None, &mut rng(0)),
            Err(SimulateError::InfeasibleK { d: 3, k: 5 })
        );
        assert!(random_support(3, 4, None, &mut rng(0)).is_err());
    }

    #[test]
    fn benchmark_supports_are_valid() {
        for seed in 0..100 {
            for size in [Some(2), Some(4), None] {
                let s = random_support(100, 50, size, &mut rng(seed)).unwrap();
                s.validate().unwrap();
                assert_eq!(s.n_faces(), 50);
            }
        }
    }

    #[test]
    fn theta_satisfies_constraints() {
        let s = random_support(30, 10, Some(3), &mut rng(2)).unwrap();
        let a = random_theta(&s, &20.0.into(), &1.0.into(), 100.0, 0.0, &mut rng(3)).unwrap();
        let b = random_theta(&s, &20.0.into(), &1.0.into(), 100.0, 0.0, &mut rng(4)).unwrap();
        assert_ne!(a.rho(), b.rho());
        let dense = a.rho_dense();
        for j in 0..30 {
            let col: f64 = dense.column(j).iter().sum();
            if s.faces.iter().any(|f| f.contains(j)) {
                assert!((col - 1.0 / 30.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_rate_pins_noise_at_one() {
        let s = random_support(5, 1, Some(2), &mut rng(1)).unwrap();
        let theta = random_theta(&s, &20.0.into(), &1e9.into(), 10.0, 0.0, &mut rng(1)).unwrap();
        let v = sample_point(&theta, 0, &mut rng(2));
        let members = s.faces[0].members();
        for (j, x) in v.iter().enumerate() {
            if !members.contains(&j) {
                assert!((x - 1.0).abs() < 1e-6);
            }
        }
        let r: f64 = members.iter().map(|&j| v[j]).sum();
        assert!(r > 10.0);
    }

    #[test]
    fn dirichlet_mean_matches_m() {
        let s = random_support(6, 2, Some(3), &mut rng(5)).unwrap();
        let theta = random_theta(&s, &5.0.into(), &1.0.into(), 10.0, 0.0, &mut rng(6)).unwrap();
        let view = describe(&theta);
        for k in 0..2 {
            let mean = mean_direction(&theta, k, 100_000, &mut rng(7));
            let l1: f64 = mean.iter().zip(&view.m[k]).map(|(a, b)| (a - b).abs()).sum();
            assert!(l1 < 0.02, "{l1}");
        }
    }

    #[test]
    fn component_frequencies_match_weights() {
        let spec = SyntheticSpec {
            d: 10,
            k_faces: 3,
            n0: 100_000,
            r0: 10.0,
            seed: 8,
            max_face_size: Some(3),
            ..Default::default()
        };
        let sample = sample_dataset(&spec).unwrap();
        let pi = sample.theta_true.weights();
        let mut counts = vec![0usize; pi.len()];
        for &l in &sample.labels {
            counts[l] += 1;
        }
        let n = spec.n0 as f64;
        for (c, p) in counts.iter().zip(&pi) {
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((*c as f64 / n - p).abs() < 3.0 * se + 1e-12, "{c} vs {p}");
        }
    }

    #[test]
    fn pareto_survival_at_twice_threshold() {
        let spec = SyntheticSpec {
            d: 5,
            k_faces: 2,
            n0: 40_000,
            r0: 10.0,
            seed: 3,
            ..Default::default()
        };
        let sample = sample_dataset(&spec).unwrap();
        let s = sample.theta_true.support();
        let above = (0..spec.n0)
            .filter(|&i| {
                let r: f64 = s.members(sample.labels[i]).iter().map(|&j| sample.v.get(i, j)).sum();
                r > 20.0
            })
            .count() as f64
            / spec.n0 as f64;
        assert!((above - 0.5).abs() < 3.0 * (0.25f64 / spec.n0 as f64).sqrt());
    }

    #[test]
    fn dataset_invariants_and_reproducibility() {
        let spec = SyntheticSpec::benchmark(0.5, 11);
        let a = sample_dataset(&spec).unwrap();
        let b = sample_dataset(&spec).unwrap();
        assert_eq!(a.v, b.v);
        assert_eq!(a.labels, b.labels);
        let k_all = a.theta_true.support().n_components();
        for i in 0..spec.n0 {
            assert!(a.labels[i] < k_all);
            let norm: f64 = a.v.row(i).iter().sum();
            assert!(norm > spec.r0);
        }
    }

    #[test]
    fn no_singletons_means_face_labels_only() {
        let spec = SyntheticSpec {
            d: 4,
            k_faces: 2,
            n0: 500,
            r0: 5.0,
            seed: 1,
            max_face_size: Some(2),
            ..Default::default()
        };
        // retry seeds until the two faces cover all four coordinates
        let sample = (0..100)
            .map(|seed| sample_dataset(&SyntheticSpec { seed, ..spec.clone() }).unwrap())
            .find(|s| s.theta_true.support().n_singletons() == 0)
            .unwrap();
        assert!(sample.labels.iter().all(|&l| l < 2));
    }
}
