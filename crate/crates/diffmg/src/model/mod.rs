//! Heterogeneous message passing with hand-derived reverse-mode gradients.
//!
//! Node features are projected per type into a shared hidden space,
//! `H0 = relu(X_t W_t + b_t) Θ`, then pushed through a DAG of propagation
//! steps:
//!
//! ```text
//! Hk = Σ_{i<k} Σ_branches coefficient · f(Hi; choice)
//! Z  = relu(HK)
//! ```
//!
//! A branch is an edge-type propagation `Â_r Hi`, the identity, or the empty
//! operand. Sampled and derived architectures have one branch per link; the
//! full-mixture reference has one per candidate.

mod adam;
mod dag;
mod loss;
mod network;
mod params;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use dag::{dag_backward, dag_forward, Branch, DagAssignment, DagTrace};
pub use loss::{loss_nodeclass, loss_rec, NodeClassLoss, RecLoss};
pub use network::{
    project, project_backward, sample_dropout_mask, ForwardTrace, Gradients, Model, ProjectionCache, Split, TaskOutputs,
};
pub use params::{ModelParams, ParamGrads};

use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("unknown edge type `{0}` in assignment")]
    UnknownEdgeType(String),
    #[error("assignment does not cover the DAG: {0}")]
    Assignment(String),
    #[error("trace is stale: parameters changed since the forward pass")]
    StaleTrace,
    #[error("empty node set")]
    EmptyNodeSet,
    #[error("empty pair set")]
    EmptyPairSet,
    #[error("pair ({src}, {dst}) does not connect `{source_type}` to `{target_type}`")]
    PairType {
        src: usize,
        dst: usize,
        source_type: String,
        target_type: String,
    },
    #[error("missing projection for node type {0}")]
    MissingProjection(usize),
    #[error("{0}")]
    Task(String),
}

/// Hyperparameters for training ω.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub lr_omega: f64,
    pub weight_decay: f64,
    pub lr_lambda: f64,
    pub epochs: usize,
    /// Early-stopping patience on validation loss (classification only).
    pub patience: usize,
    pub seed: u64,
    /// Dropout rate on `H0` during training steps.
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            lr_omega: 0.005,
            weight_decay: 0.001,
            lr_lambda: 3e-4,
            epochs: 100,
            patience: 10,
            seed: 0,
            dropout: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.hidden == 0 {
            return Err("hidden dimension must be ≥ 1".into());
        }
        if !(self.lr_omega > 0.0 && self.lr_lambda > 0.0) {
            return Err("learning rates must be positive".into());
        }
        if !(self.weight_decay >= 0.0) {
            return Err("weight decay must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err("dropout must be in [0, 1)".into());
        }
        Ok(())
    }
}
