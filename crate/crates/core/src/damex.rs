//! Sparse support recovery for the angular measure.
//!
//! Every standardized point above the scale `t` (in sup-norm) falls in exactly
//! one eps-thickened rectangle: the face `alpha = {j : v_j / t > eps}`. The mass
//! of a face is its rectangle count divided by the tail size `k = n / t`, and
//! faces whose mass exceeds `mu_min` form the support.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum DamexError {
    #[error("point is below the scale (sup-norm ratio {ratio})")]
    BelowScale { ratio: f64 },
    #[error("face must be nonempty")]
    EmptyFace,
    #[error("face lists index {0} twice")]
    DuplicateIndex(usize),
    #[error("face index {index} out of range for dimension {d}")]
    IndexOutOfRange { index: usize, d: usize },
    #[error("faces {0:?} and {1:?} are nested or equal")]
    Nested(Vec<usize>, Vec<usize>),
    #[error("support has {components} components but {masses} masses")]
    MassCount { components: usize, masses: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no face has mass above the threshold {mu_min}")]
    EmptySupport { mu_min: f64 },
}

/// A nonempty sorted set of feature indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Face(Vec<usize>);

impl Face {
    pub fn new(members: impl IntoIterator<Item = usize>) -> Result<Self, DamexError> {
        let mut m: Vec<usize> = members.into_iter().collect();
        if m.is_empty() {
            return Err(DamexError::EmptyFace);
        }
        m.sort_unstable();
        if let Some(w) = m.windows(2).find(|w| w[0] == w[1]) {
            return Err(DamexError::DuplicateIndex(w[0]));
        }
        Ok(Self(m))
    }

    pub fn singleton(j: usize) -> Self {
        Self(vec![j])
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn is_subset_of(&self, other: &Face) -> bool {
        self.0.iter().all(|&j| other.contains(j))
    }

    /// True when one face contains the other (equal faces included).
    pub fn nested_with(&self, other: &Face) -> bool {
        self.is_subset_of(other) || other.is_subset_of(self)
    }
}

impl TryFrom<Vec<usize>> for Face {
    type Error = DamexError;

    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Face::new(v)
    }
}

impl From<Face> for Vec<usize> {
    fn from(f: Face) -> Self {
        f.0
    }
}

/// Returns the face of the eps-thickened rectangle containing `v / t`.
pub fn assign_rectangle(v: &[f64], t: f64, eps: f64) -> Result<Face, DamexError> {
    let ratio = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x / t));
    if !(ratio >= 1.0) {
        return Err(DamexError::BelowScale { ratio });
    }
    Face::new(
        v.iter()
            .enumerate()
            .filter(|(_, &x)| x / t > eps)
            .map(|(j, _)| j),
    )
}

/// Rectangle counts over the points above the scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassTable {
    pub counts: BTreeMap<Face, usize>,
    /// Tail size used as the mass normalizer (`n / scale`).
    pub k: f64,
    pub eps: f64,
    pub scale: f64,
    pub d: usize,
}

impl MassTable {
    pub fn mass(&self, face: &Face) -> f64 {
        self.counts.get(face).map_or(0.0, |&c| c as f64 / self.k)
    }

    pub fn masses(&self) -> impl Iterator<Item = (&Face, f64)> + '_ {
        self.counts.iter().map(|(f, &c)| (f, c as f64 / self.k))
    }

    /// Number of points assigned to a rectangle.
    pub fn n_assigned(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.n_assigned() as f64 / self.k
    }

    /// Default negligibility threshold: `0.005 * total_mass / d`.
    pub fn default_mu_min(&self) -> f64 {
        0.005 * self.total_mass() / self.d as f64
    }
}

/// Face masses with `t = n / k`.
pub fn estimate_mass(v: &Matrix, k: usize, eps: f64) -> Result<MassTable, DamexError> {
    let n = v.nrows();
    if k == 0 || k > n {
        return Err(DamexError::InvalidParameter(format!(
            "tail size k = {k} must lie in [1, {n}]"
        )));
    }
    estimate_mass_at_scale(v, n as f64 / k as f64, eps)
}

/// Face masses at an explicit scale `t`; the normalizer is `k = n / t`.
pub fn estimate_mass_at_scale(v: &Matrix, scale: f64, eps: f64) -> Result<MassTable, DamexError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(DamexError::InvalidParameter(format!(
            "eps = {eps} must lie in (0, 1)"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DamexError::InvalidParameter(format!(
            "scale = {scale} must be positive"
        )));
    }
    let counts = (0..v.nrows())
        .into_par_iter()
        .fold(BTreeMap::new, |mut acc: BTreeMap<Face, usize>, i| {
            if let Ok(face) = assign_rectangle(v.row(i), scale, eps) {
                *acc.entry(face).or_default() += 1;
            }
            acc
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (f, c) in b {
                *a.entry(f).or_default() += c;
            }
            a
        });
    Ok(MassTable {
        counts,
        k: v.nrows() as f64 / scale,
        eps,
        scale,
        d: v.ncols(),
    })
}

/// Ordered support: faces with at least two members, then singletons.
///
/// Component `k < K` is `faces[k]`; component `K + s` is the singleton
/// `singletons[s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSet {
    pub d: usize,
    pub faces: Vec<Face>,
    pub singletons: Vec<usize>,
    /// Per-component mass, same order as the components; empty when unknown.
    #[serde(default)]
    pub masses: Vec<f64>,
}

impl SupportSet {
    /// Validates index ranges, face sizes and the non-nested assumption.
    pub fn new(
        d: usize,
        faces: Vec<Face>,
        singletons: Vec<usize>,
        masses: Vec<f64>,
    ) -> Result<Self, DamexError> {
        let s = Self {
            d,
            faces,
            singletons,
            masses,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DamexError> {
        if self.n_components() == 0 {
            return Err(DamexError::EmptySupport { mu_min: 0.0 });
        }
        if !self.masses.is_empty() && self.masses.len() != self.n_components() {
            return Err(DamexError::MassCount {
                components: self.n_components(),
                masses: self.masses.len(),
            });
        }
        let all: Vec<Face> = self.component_faces();
        for (a, face) in all.iter().enumerate() {
            if let Some(&j) = face.members().iter().find(|&&j| j >= self.d) {
                return Err(DamexError::IndexOutOfRange { index: j, d: self.d });
            }
            if a < self.faces.len() && face.len() < 2 {
                return Err(DamexError::InvalidParameter(format!(
                    "face {:?} listed among faces has fewer than two members",
                    face.members()
                )));
            }
            for other in &all[a + 1..] {
                if face.nested_with(other) {
                    return Err(DamexError::Nested(
                        face.members().to_vec(),
                        other.members().to_vec(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// K: number of faces with at least two members.
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    /// d_1: number of singleton components.
    pub fn n_singletons(&self) -> usize {
        self.singletons.len()
    }

    pub fn n_components(&self) -> usize {
        self.faces.len() + self.singletons.len()
    }

    pub fn is_singleton(&self, k: usize) -> bool {
        k >= self.faces.len()
    }

    /// Feature indices of component `k`.
    pub fn members(&self, k: usize) -> &[usize] {
        if k < self.faces.len() {
            self.faces[k].members()
        } else {
            std::slice::from_ref(&self.singletons[k - self.faces.len()])
        }
    }

    pub fn component_face(&self, k: usize) -> Face {
        if k < self.faces.len() {
            self.faces[k].clone()
        } else {
            Face::singleton(self.singletons[k - self.faces.len()])
        }
    }

    pub fn component_faces(&self) -> Vec<Face> {
        (0..self.n_components())
            .map(|k| self.component_face(k))
            .collect()
    }

    /// Index of the component whose face equals `face`.
    pub fn position(&self, face: &Face) -> Option<usize> {
        if face.len() == 1 {
            let j = face.members()[0];
            self.singletons
                .iter()
                .position(|&s| s == j)
                .map(|s| self.faces.len() + s)
        } else {
            self.faces.iter().position(|f| f == face)
        }
    }

    /// Coordinates that belong to no face and are not singletons.
    pub fn uncovered(&self) -> Vec<usize> {
        let mut covered = vec![false; self.d];
        for f in &self.faces {
            for &j in f.members() {
                covered[j] = true;
            }
        }
        for &j in &self.singletons {
            covered[j] = true;
        }
        (0..self.d).filter(|&j| !covered[j]).collect()
    }

    /// Adds every uncovered coordinate as a zero-mass singleton so that the
    /// moment constraint can hold. Returns the added indices.
    pub fn complete_with_singletons(&mut self) -> Vec<usize> {
        let added = self.uncovered();
        for &j in &added {
            self.singletons.push(j);
            if !self.masses.is_empty() {
                self.masses.push(0.0);
            }
        }
        added
    }
}

/// A face whose every member is seen alone at least this many times more
/// often than the face itself is treated as a chance meeting of singletons.
pub const SINGLETON_DOMINANCE: f64 = 2.0;

/// Keeps faces with mass above `mu_min`. Faces dominated by their singleton
/// rectangles (see [`SINGLETON_DOMINANCE`]) are dropped first. Nested faces
/// with two or more members are resolved in favour of the heavier one (ties:
/// lexicographically smaller face); a singleton survives only if no kept face
/// covers its coordinate, since such rectangles are then the thin edges of
/// that face.
pub fn recover_support(mass: &MassTable, mu_min: f64) -> Result<SupportSet, DamexError> {
    if !(mu_min >= 0.0) {
        return Err(DamexError::InvalidParameter(format!(
            "mu_min = {mu_min} must be nonnegative"
        )));
    }
    let mut survivors: Vec<(Face, f64)> = mass
        .masses()
        .filter(|(_, m)| *m > mu_min)
        .map(|(f, m)| (f.clone(), m))
        .collect();
    survivors.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut kept: Vec<(Face, f64)> = Vec::with_capacity(survivors.len());
    let alone = |j: usize| mass.mass(&Face::singleton(j));
    for (face, m) in survivors.iter().filter(|(f, _)| f.len() >= 2) {
        if face.members().iter().all(|&j| alone(j) >= SINGLETON_DOMINANCE * m) {
            log::debug!("dropping face {:?} (mass {m:.4}) dominated by its singletons", face.members());
            continue;
        }
        if let Some((heavier, hm)) = kept.iter().find(|(f, _)| f.nested_with(face)) {
            log::warn!(
                "dropping face {:?} (mass {m:.4}) nested with heavier face {:?} (mass {hm:.4})",
                face.members(),
                heavier.members()
            );
            continue;
        }
        kept.push((face.clone(), *m));
    }
    let n_multi = kept.len();
    for (face, m) in survivors.into_iter().filter(|(f, _)| f.len() == 1) {
        let j = face.members()[0];
        if kept[..n_multi].iter().any(|(f, _)| f.contains(j)) {
            log::debug!("singleton {j} (mass {m:.4}) is covered by a face");
            continue;
        }
        kept.push((face, m));
    }
    if kept.is_empty() {
        return Err(DamexError::EmptySupport { mu_min });
    }

    let (mut faces, mut face_mass) = (Vec::new(), Vec::new());
    let mut singles: Vec<(usize, f64)> = Vec::new();
    for (face, m) in kept {
        if face.len() >= 2 {
            faces.push(face);
            face_mass.push(m);
        } else {
            singles.push((face.members()[0], m));
        }
    }
    singles.sort_by_key(|&(j, _)| j);
    let mut masses = face_mass;
    masses.extend(singles.iter().map(|&(_, m)| m));
    SupportSet::new(
        mass.d,
        faces,
        singles.into_iter().map(|(j, _)| j).collect(),
        masses,
    )
}
