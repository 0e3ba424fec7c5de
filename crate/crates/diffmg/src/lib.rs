//! Differentiable meta-graph search for heterogeneous graph neural networks.
//!
//! The crate builds a DAG search space over the edge types of a heterogeneous
//! information network, learns architecture weights for it with a sampled
//! single-path search, derives a discrete meta graph, and retrains that meta
//! graph from scratch for node classification or recommendation.
//!
//! Modules, bottom-up:
//!
//! * [`linalg`]: dense and CSR kernels with hand-written adjoints.
//! * [`hin`]: typed graphs, features, tasks, file formats and a planted generator.
//! * [`space`]: candidate sets, cardinality, enumeration, meta-graph JSON and DOT.
//! * [`model`]: the heterogeneous message-passing model, losses, gradients and Adam.
//! * [`search`]: architecture weights, ε-greedy path sampling and the search loop.
//! * [`evaluate`]: retraining a derived meta graph and the macro-F1 / AUC metrics.
//! * [`oracle`]: brute-force enumeration, finite differences and the
//!   temperature-softmax check of the argmax gradient.
//! * [`cli`]: the `diffmg` command line.

pub mod cli;
pub mod evaluate;
pub mod hin;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod search;
pub mod space;
mod workers;

pub use workers::thread_count;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/search_space.md")]
    mod search_space {}
    #[doc = include_str!("../../../book/src/message_passing.md")]
    mod message_passing {}
    #[doc = include_str!("../../../book/src/argmax_gradient.md")]
    mod argmax_gradient {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/data_formats.md")]
    mod data_formats {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

