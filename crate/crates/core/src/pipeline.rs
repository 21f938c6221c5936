//! End-to-end runs: standardize, select extremes, recover the support with
//! DAMEX, fit the mixture, and score the result.

use serde::{Deserialize, Serialize};

use crate::damex::{self, SupportSet};
use crate::em::{self, FitConfig, FitResult};
use crate::eval::{self, ParamErrors};
use crate::graph::{self, ClusterAssignment, LayoutConfig, DEFAULT_EDGE_THRESHOLD};
use crate::ingest::{self, ExtremeSubset, RawDataset, StandardizedDataset, Threshold};
use crate::matrix::Matrix;
use crate::shuttle::ShuttleData;
use crate::simulate::{self, LabeledSample, SyntheticSpec};
use crate::Error;

/// How DAMEX picks its scale and thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DamexConfig {
    /// Rectangle thickness.
    pub eps: f64,
    /// Explicit scale `t`; takes precedence over everything else.
    pub scale: Option<f64>,
    /// Scale as a fraction of the extreme threshold `r0`; takes precedence
    /// over `k`.
    pub relative_scale: Option<f64>,
    /// Tail size, giving `t = n / k`; defaults to the number of extremes.
    pub k: Option<usize>,
    /// Mass threshold; defaults to `0.005 * total_mass / d`.
    pub mu_min: Option<f64>,
    /// Raise the scale until `eps * t` clears the noise floor (see
    /// [`noise_floor`]); only used with `relative_scale`.
    pub noise_adaptive: bool,
}

impl Default for DamexConfig {
    fn default() -> Self {
        Self {
            eps: 0.1,
            scale: None,
            relative_scale: None,
            k: None,
            mu_min: None,
            noise_adaptive: false,
        }
    }
}

impl DamexConfig {
    /// Preset for samples already on the unit-Pareto scale: thickness 0.5 and
    /// scale `0.75 r0`, raised when the noise floor is higher.
    pub fn pareto_scale() -> Self {
        Self {
            eps: 0.5,
            relative_scale: Some(0.75),
            noise_adaptive: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub edge_threshold: f64,
    /// Spectral cluster count; defaults to the number of components.
    pub n_clusters: Option<usize>,
    pub layout: LayoutConfig,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            n_clusters: None,
            layout: LayoutConfig::default(),
        }
    }
}

/// Level that about one of the `n * d` entries of `v` exceeds if all of them
/// were `1 + Exp(lambda)` noise, with `lambda` estimated from the median entry.
pub fn noise_floor(v: &Matrix) -> f64 {
    let mut all: Vec<f64> = v.as_slice().to_vec();
    if all.is_empty() {
        return 1.0;
    }
    let mid = all.len() / 2;
    let (_, median, _) = all.select_nth_unstable_by(mid, f64::total_cmp);
    let excess = (*median - 1.0).max(f64::MIN_POSITIVE);
    let rate = std::f64::consts::LN_2 / excess;
    1.0 + (all.len() as f64).ln() / rate
}

/// Runs DAMEX on `v` and completes the support with zero-mass singletons for
/// coordinates no surviving face covers.
pub fn recover_support(v: &Matrix, default_k: usize, r0: f64, cfg: &DamexConfig) -> Result<SupportSet, Error> {
    let mass = match (cfg.scale, cfg.relative_scale) {
        (Some(t), _) => damex::estimate_mass_at_scale(v, t, cfg.eps)?,
        (None, Some(f)) => {
            let mut t = f * r0;
            if cfg.noise_adaptive {
                let floor = noise_floor(v);
                if floor > cfg.eps * t {
                    log::info!("noise floor {floor:.1} raises the DAMEX scale from {t:.1} to {:.1}", floor / cfg.eps);
                    t = floor / cfg.eps;
                }
            }
            damex::estimate_mass_at_scale(v, t, cfg.eps)?
        }
        (None, None) => damex::estimate_mass(v, cfg.k.unwrap_or(default_k), cfg.eps)?,
    };
    let mu_min = cfg.mu_min.unwrap_or_else(|| mass.default_mu_min());
    let mut support = damex::recover_support(&mass, mu_min)?;
    let added = support.complete_with_singletons();
    if !added.is_empty() {
        log::info!("coordinates {added:?} are uncovered; added as singleton components");
    }
    log::info!(
        "support: {} faces, {} singletons",
        support.n_faces(),
        support.n_singletons()
    );
    Ok(support)
}

/// Outcome of a run on a synthetic sample.
#[derive(Debug, Clone)]
pub struct SyntheticOutcome {
    pub sample: LabeledSample,
    pub support: SupportSet,
    /// Faces and singletons equal the generating ones as sets.
    pub support_exact: bool,
    pub fit: FitResult,
    /// Hard assignment mapped to the generating component indices.
    pub predicted: Vec<usize>,
    pub labeling_errors: usize,
    /// Only defined when the support is recovered exactly.
    pub param_errors: Option<ParamErrors>,
}

pub fn same_support(a: &SupportSet, b: &SupportSet) -> bool {
    let mut fa = a.component_faces();
    let mut fb = b.component_faces();
    fa.sort();
    fb.sort();
    a.d == b.d && fa == fb
}

/// Simulates, recovers the support, fits and scores.
pub fn run_synthetic(spec: &SyntheticSpec, damex_cfg: &DamexConfig, fit_cfg: &FitConfig) -> Result<SyntheticOutcome, Error> {
    let sample = simulate::sample_dataset(spec)?;
    let truth = sample.theta_true.support().clone();
    let support = recover_support(&sample.v, sample.v.nrows(), spec.r0, damex_cfg)?;
    let support_exact = same_support(&support, &truth);
    let fit = em::fit(&sample.v, &support, spec.r0, fit_cfg)?;
    let hard = graph::hard_assign(&fit.gamma);
    let predicted = eval::relabel(&hard.labels, &support, &truth);
    let labeling_errors = eval::labeling_error(&predicted, &sample.labels)?;
    let param_errors = if support_exact {
        Some(eval::param_errors(&fit.theta, &sample.theta_true)?)
    } else {
        None
    };
    Ok(SyntheticOutcome {
        sample,
        support,
        support_exact,
        fit,
        predicted,
        labeling_errors,
        param_errors,
    })
}

/// Full configuration of a run on observed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Extreme selection rule; defaults to the quantile `1 - ceil(sqrt(n)) / n`.
    pub threshold: Option<Threshold>,
    pub damex: DamexConfig,
    pub fit: FitConfig,
    pub graph: GraphConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            threshold: None,
            damex: DamexConfig::default(),
            fit: FitConfig::default(),
            graph: GraphConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn threshold_for(&self, n: usize) -> Threshold {
        self.threshold
            .unwrap_or_else(|| Threshold::Quantile(ingest::default_extreme_quantile(n)))
    }
}

/// Outcome of a run on observed data.
#[derive(Debug, Clone)]
pub struct DataOutcome {
    pub standardized: StandardizedDataset,
    pub extremes: ExtremeSubset,
    pub support: SupportSet,
    pub fit: FitResult,
    pub hard: ClusterAssignment,
}

/// Rank-standardizes, selects extremes, recovers the support on the full
/// sample with `k` defaulting to the number of extremes, and fits on the
/// extremes.
pub fn run_data(raw: &RawDataset, cfg: &PipelineConfig) -> Result<DataOutcome, Error> {
    let standardized = ingest::empirical_pareto_transform(raw);
    run_standardized(standardized, cfg)
}

pub fn run_standardized(standardized: StandardizedDataset, cfg: &PipelineConfig) -> Result<DataOutcome, Error> {
    let extremes = ingest::select_extremes(&standardized, cfg.threshold_for(standardized.n()))?;
    let support = recover_support(&standardized.v, extremes.n0, extremes.r0, &cfg.damex)?;
    let v_ext = extremes.rows(&standardized);
    let fit = em::fit(&v_ext, &support, extremes.r0, &cfg.fit)?;
    let hard = graph::hard_assign(&fit.gamma);
    Ok(DataOutcome {
        standardized,
        extremes,
        support,
        fit,
        hard,
    })
}

/// One replicate of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub lambda: f64,
    pub seed: u64,
    pub support_exact: bool,
    pub faces_found: usize,
    pub labeling_errors: usize,
    pub param_errors: Option<ParamErrors>,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs the synthetic benchmark at noise rate `lambda` for each seed; the
/// same seed drives simulation and EM initialization.
pub fn benchmark(
    base: &SyntheticSpec,
    lambda: f64,
    seeds: &[u64],
    damex_cfg: &DamexConfig,
    fit_cfg: &FitConfig,
) -> Result<Vec<BenchmarkRow>, Error> {
    seeds
        .iter()
        .map(|&seed| {
            let spec = SyntheticSpec {
                lambda: lambda.into(),
                seed,
                ..base.clone()
            };
            let fit_cfg = FitConfig { seed, ..fit_cfg.clone() };
            let out = run_synthetic(&spec, damex_cfg, &fit_cfg)?;
            log::info!(
                "lambda {lambda}, seed {seed}: exact support {}, {} labeling errors",
                out.support_exact,
                out.labeling_errors
            );
            Ok(BenchmarkRow {
                lambda,
                seed,
                support_exact: out.support_exact,
                faces_found: out.support.n_faces(),
                labeling_errors: out.labeling_errors,
                param_errors: out.param_errors,
                iterations: out.fit.iterations,
                converged: out.fit.converged,
            })
        })
        .collect()
}

/// Purity of the mixture clustering on the `n0` most extreme shuttle rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurityRow {
    pub n0: usize,
    pub components: usize,
    pub purity_hard: f64,
    pub purity_spectral: f64,
}

pub fn shuttle_purity(data: &ShuttleData, n0: usize, cfg: &PipelineConfig) -> Result<PurityRow, Error> {
    let cfg = PipelineConfig {
        threshold: Some(Threshold::Top(n0)),
        ..cfg.clone()
    };
    let out = run_data(&data.raw, &cfg)?;
    let classes: Vec<&String> = out.extremes.indices.iter().map(|&i| &data.classes[i]).collect();
    let purity_hard = eval::purity(&out.hard.labels, &classes)?;
    let sim = graph::similarity_matrix(&out.fit.gamma);
    let k = cfg.graph.n_clusters.unwrap_or(out.support.n_components());
    let spectral = graph::spectral_clustering(&sim, k, cfg.fit.seed)?;
    let purity_spectral = eval::purity(&spectral.labels, &classes)?;
    Ok(PurityRow {
        n0,
        components: out.support.n_components(),
        purity_hard,
        purity_spectral,
    })
}
