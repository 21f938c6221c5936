//! Recovery metrics: parameter errors, labeling errors and cluster purity.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damex::SupportSet;
use crate::mixture::ThetaParams;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("estimated and true supports differ")]
    SupportMismatch,
    #[error("length mismatch: {0} predictions for {1} labels")]
    LengthMismatch(usize, usize),
    #[error("no labels to score")]
    Empty,
}

/// Mean absolute errors on `rho` (over all `K x d` entries, structural zeros
/// included), `nu` (over faces) and `lambda` (over all components).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub err_rho: f64,
    pub err_nu: f64,
    pub err_lambda: f64,
}

/// Compares two parameter sets on the same support. The estimate is first
/// re-ordered to the truth's component order, so only face identity matters.
pub fn param_errors(theta_hat: &ThetaParams, theta_true: &ThetaParams) -> Result<ParamErrors, EvalError> {
    let hat = theta_hat
        .reordered(theta_true.support())
        .ok_or(EvalError::SupportMismatch)?;
    let (a, b) = (hat.rho_dense(), theta_true.rho_dense());
    let mean_abs = |x: &[f64], y: &[f64]| {
        if x.is_empty() {
            0.0
        } else {
            x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum::<f64>() / x.len() as f64
        }
    };
    Ok(ParamErrors {
        err_rho: mean_abs(a.as_slice(), b.as_slice()),
        err_nu: mean_abs(hat.nu(), theta_true.nu()),
        err_lambda: mean_abs(hat.lambda(), theta_true.lambda()),
    })
}

/// Number of positions where the predicted component differs from the truth.
pub fn labeling_error(pred: &[usize], truth: &[usize]) -> Result<usize, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    Ok(pred.iter().zip(truth).filter(|(a, b)| a != b).count())
}

/// Maps component indices of `from` to those of `to` by face identity.
/// Components absent from `to` map to `to.n_components()`, which matches no
/// true label.
pub fn relabel(pred: &[usize], from: &SupportSet, to: &SupportSet) -> Vec<usize> {
    let map: Vec<usize> = (0..from.n_components())
        .map(|k| to.position(&from.component_face(k)).unwrap_or(to.n_components()))
        .collect();
    pred.iter().map(|&k| map.get(k).copied().unwrap_or(to.n_components())).collect()
}

/// `(1/n) sum_clusters max_class n_{cluster,class}`.
pub fn purity<C: std::hash::Hash + Eq>(clusters: &[usize], classes: &[C]) -> Result<f64, EvalError> {
    if clusters.len() != classes.len() {
        return Err(EvalError::LengthMismatch(clusters.len(), classes.len()));
    }
    if clusters.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut table: BTreeMap<usize, HashMap<&C, usize>> = BTreeMap::new();
    for (&k, c) in clusters.iter().zip(classes) {
        *table.entry(k).or_default().entry(c).or_default() += 1;
    }
    let hits: usize = table.values().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / clusters.len() as f64)
}
