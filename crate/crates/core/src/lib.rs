//! Clustering and mapping of multivariate extremes.
//!
//! The workflow: put every margin on the unit-Pareto scale
//! ([`ingest`]), find the groups of coordinates that are jointly large
//! ([`damex`]), fit a Dirichlet mixture with one component per group by EM
//! ([`mixture`], [`em`]), then cluster and draw the extremes through their
//! posterior similarity ([`graph`]). [`simulate`] and [`eval`] generate and
//! score synthetic benchmarks; [`pipeline`] wires the steps together.

pub mod cli;
pub mod damex;
pub mod em;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod matrix;
pub mod mixture;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod shuttle;
pub mod simulate;

use thiserror::Error;

/// Any failure of the library, with a distinct process exit code per kind.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input: {0}")]
    Ingest(#[from] ingest::IngestError),
    #[error("support recovery: {0}")]
    Damex(#[from] damex::DamexError),
    #[error("model: {0}")]
    Mixture(#[from] mixture::MixtureError),
    #[error("fit: {0}")]
    Em(#[from] em::EmError),
    #[error("simulation: {0}")]
    Simulate(#[from] simulate::SimulateError),
    #[error("graph: {0}")]
    Graph(#[from] graph::GraphError),
    #[error("evaluation: {0}")]
    Eval(#[from] eval::EvalError),
    #[error("dataset: {0}")]
    Shuttle(#[from] shuttle::ShuttleError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("I/O on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } => 3,
            Error::Ingest(_) => 4,
            Error::Damex(_) => 5,
            Error::Mixture(_) => 6,
            Error::Em(_) => 7,
            Error::Simulate(_) => 8,
            Error::Graph(_) => 9,
            Error::Eval(_) => 10,
            Error::Shuttle(_) => 11,
        }
    }
}
