//! Numerical laboratory for message passing neural networks with mean
//! aggregation on random graph models.
//!
//! Graphs are sampled from a kernel `W` on a metric measure space: node
//! positions are drawn i.i.d. from the space's measure and edge weights are
//! exact kernel evaluations `w_ij = W(X_i, X_j)`. On top of that sit
//!
//! * a graph MPNN with degree-normalized mean aggregation ([`mpnn`]),
//! * its continuum counterpart evaluated by quadrature ([`cmpnn`]),
//! * explicit stability / convergence constants for Lipschitz kernels
//!   ([`bounds`]),
//! * the convergence, stability and generalization-gap experiment harness
//!   ([`experiments`]),
//! * a small command line front end ([`cli`]).
//!
//! The primary interface is the `examples/` directory; each file is runnable
//! on its own and demonstrates one capability:
//!
//! ```text
//! cargo run --release --example sample_graph         # kernel graph sampling + JSON output
//! cargo run --release --example kernel_degrees       # exact vs Monte-Carlo kernel degrees
//! cargo run --release --example forward_pass         # GraphSAGE forward on a sampled graph
//! cargo run --release --example continuous_reference # quadrature cMPNN vs large-graph proxy
//! cargo run --release --example bound_report         # full constant chain as JSON
//! cargo run --release --example convergence          # error-vs-size curves and fitted slopes
//! cargo run --release --example stability_pair       # two-graph output distance vs its bound
//! cargo run --release --example generalization_gap   # empirical vs statistical risk gaps
//! ```
//!
//! Everything is deterministic: all randomness flows from a single master
//! seed through the documented splitting scheme in [`rng`].

pub mod bounds;
pub mod cli;
pub mod cmpnn;
pub mod experiments;
pub mod graph;
pub mod kernel;
pub mod metrics;
pub mod mlp;
pub mod mpnn;
pub mod plot;
pub mod rng;
pub mod signal;
pub mod space;

/// Crate-wide error type.
///
/// Precondition violations surface as dedicated variants so the CLI can map
/// them onto its exit-code contract (config errors vs precondition errors).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("node {node} has zero aggregation degree (no incident weight)")]
    IsolatedNode { node: usize },
    #[error("aggregation degree vanished at evaluation point ({0}, {1})")]
    DegenerateDegree(f64, f64),
    #[error("signal is not pointwise evaluable: {0}")]
    UnsupportedSignal(String),
    #[error("kernel is not Lipschitz (lip_w = +inf); this bound needs a Lipschitz kernel")]
    NonLipschitzKernel,
    #[error("n = {n} is below the required minimum node count {min_n}")]
    BelowMinNodes { n: u64, min_n: u64 },
    #[error("class {class} weight gives a non-integral training count {expected}")]
    Representativeness { class: usize, expected: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
