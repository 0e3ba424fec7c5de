//! Heterogeneous information networks: typed nodes, typed directed edges,
//! node features and task labels.

mod graph;
mod io;
mod synth;

pub use graph::{
    EdgeType, EdgeTypeRegistry, FeatureSet, HinGraph, NodeClassData, Pair, RecData, TaskData,
    TaskKind,
};
pub use io::{load_hin, write_hin};
pub use synth::{synth_planted, EdgeSpec, NodeTypeSpec, SynthConfig, SynthTask};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HinError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown node type `{0}`")]
    UnknownNodeType(String),
    #[error("unknown edge type `{0}`")]
    UnknownEdgeType(String),
    #[error("task error: {0}")]
    Task(String),
    #[error("generator config error: {0}")]
    Config(String),
}

impl HinError {
    pub(crate) fn parse(file: &str, line: usize, message: impl Into<String>) -> Self {
        HinError::Parse {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }
}
