//! Retraining a derived meta graph from scratch and scoring it.

mod metrics;

pub use metrics::{auc, macro_f1, MetricError};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hin::TaskData;
use crate::model::{
    adam_step, sample_dropout_mask, DagAssignment, Model, ModelError, Split, TaskOutputs,
    TrainConfig,
};
use crate::space::{build_space, MetaGraph, MetaGraphFile, SpaceError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("meta graph does not match the data: {0}")]
    Mismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Task metric on `split`: macro F1 for classification, AUC for recommendation.
pub fn task_metric(model: &Model<'_>, outputs: &TaskOutputs, split: Split) -> Result<f64, MetricError> {
    match model.task {
        TaskData::NodeClass(d) => {
            let nodes = model.split_nodes(split);
            let predictions = outputs.predict_classes(&nodes);
            let gold: Vec<usize> = nodes.iter().map(|v| d.labels[v]).collect();
            macro_f1(&predictions, &gold, d.n_classes)
        }
        TaskData::Rec(_) => {
            let pairs = model.split_pairs(split);
            let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
            auc(&outputs.pair_scores(&pairs), &labels)
        }
    }
}

/// Checks that `meta_graphs` holds one valid meta graph per target type of
/// the task, in order.
pub fn check_meta_graphs(model: &Model<'_>, meta_graphs: &[MetaGraph]) -> Result<(), EvalError> {
    let targets = model.task.target_types();
    if meta_graphs.len() != targets.len() {
        return Err(EvalError::Mismatch(format!(
            "task needs {} meta graph(s), got {}",
            targets.len(),
            meta_graphs.len()
        )));
    }
    for (mg, target) in meta_graphs.iter().zip(&targets) {
        if mg.target_type() != target {
            return Err(EvalError::Mismatch(format!(
                "meta graph targets `{}`, task needs `{target}`",
                mg.target_type()
            )));
        }
        let spec = build_space(model.graph, target, mg.k_states())?;
        spec.indices_of(mg)
            .map_err(|e| EvalError::Mismatch(e.to_string()))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
    pub test_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub seed: u64,
    pub epochs: Vec<EvalEpoch>,
    /// Epoch whose checkpoint supplies the reported metrics.
    pub best_epoch: usize,
    pub val_metric: f64,
    pub test_metric: f64,
    pub final_test_metric: f64,
    pub meta_graphs: Vec<MetaGraphFile>,
    /// Wall-clock seconds per epoch; excluded from the JSON so reports stay
    /// reproducible.
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
}

impl EvalReport {
    pub fn summary_line(&self) -> String {
        format!(
            "task={} seed={} val={:.6} test={:.6}",
            self.task, self.seed, self.val_metric, self.test_metric
        )
    }
}

/// Trains a fresh model on fixed meta graphs (every selected step has
/// coefficient 1) and reports the test metric at the best validation
/// checkpoint.
///
/// Classification stops early once validation loss has not improved for
/// `config.patience` epochs and reports the best-loss epoch. Recommendation
/// runs all epochs and reports the epoch of best validation AUC.
pub fn train_eval(
    model: &Model<'_>,
    meta_graphs: &[MetaGraph],
    config: &TrainConfig,
) -> Result<EvalReport, EvalError> {
    config.validate().map_err(EvalError::Config)?;
    check_meta_graphs(model, meta_graphs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = model.init_params(config.hidden, &mut rng);
    let dags: Vec<DagAssignment> = meta_graphs
        .iter()
        .map(|mg| DagAssignment::from_meta_graph(mg, 1.0))
        .collect();
    let classification = matches!(model.task, TaskData::NodeClass(_));
    let n = model.graph.n_nodes();

    let mut epochs: Vec<EvalEpoch> = Vec::with_capacity(config.epochs);
    let mut epoch_seconds = Vec::with_capacity(config.epochs);
    let mut best: Option<usize> = None;
    let mut since_best = 0;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mask = (config.dropout > 0.0)
            .then(|| sample_dropout_mask(n, config.hidden, config.dropout, &mut rng));
        let trace = model.forward(&params, &dags, Split::Train, mask.as_ref())?;
        let grads = model.backward(&params, &trace)?;
        adam_step(&mut params, &grads.params, config.lr_omega, config.weight_decay);

        let eval = model.forward(&params, &dags, Split::Val, None)?;
        let record = EvalEpoch {
            epoch,
            train_loss: trace.loss,
            val_loss: eval.loss,
            val_metric: task_metric(model, &eval.outputs, Split::Val)?,
            test_metric: task_metric(model, &eval.outputs, Split::Test)?,
        };
        epoch_seconds.push(started.elapsed().as_secs_f64());
        let improved = match best {
            None => true,
            Some(b) if classification => record.val_loss < epochs[b].val_loss,
            Some(b) => record.val_metric > epochs[b].val_metric,
        };
        epochs.push(record);
        if improved {
            best = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if classification && since_best >= config.patience {
                break;
            }
        }
    }
    let best_epoch = best.ok_or_else(|| EvalError::Config("epochs must be ≥ 1".into()))?;
    let b: &EvalEpoch = &epochs[best_epoch];
    Ok(EvalReport {
        task: model.task.kind().to_string(),
        seed: config.seed,
        best_epoch,
        val_metric: b.val_metric,
        test_metric: b.test_metric,
        final_test_metric: epochs.last().expect("≥ 1 epoch").test_metric,
        meta_graphs: meta_graphs.iter().map(MetaGraph::to_file).collect(),
        epochs,
        epoch_seconds,
    })
}

/// Mean and population standard deviation over several runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub task: String,
    pub seeds: Vec<u64>,
    pub test_mean: f64,
    pub test_std: f64,
    pub val_mean: f64,
    pub val_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate(reports: &[EvalReport]) -> Option<EvalSummary> {
    let first = reports.first()?;
    let (test_mean, test_std) = mean_std(&reports.iter().map(|r| r.test_metric).collect::<Vec<_>>());
    let (val_mean, val_std) = mean_std(&reports.iter().map(|r| r.val_metric).collect::<Vec<_>>());
    Some(EvalSummary {
        task: first.task.clone(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        test_mean,
        test_std,
        val_mean,
        val_std,
    })
}
