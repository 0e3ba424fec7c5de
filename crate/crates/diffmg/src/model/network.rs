use rand::Rng;

use super::{dag_backward, dag_forward, loss_nodeclass, loss_rec, DagAssignment, DagTrace};
use super::{ModelError, ModelParams, ParamGrads};
use crate::hin::{FeatureSet, HinGraph, Pair, TaskData};
use crate::linalg::DenseMatrix;

/// Which labeled subset a loss is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
    /// Union of train and validation, used by single-level search.
    TrainVal,
}

/// Values kept from the projection for its backward pass.
#[derive(Debug, Clone)]
pub struct ProjectionCache {
    pre: Vec<DenseMatrix>,
    activated: DenseMatrix,
    mask: Option<DenseMatrix>,
}

/// Inverted-dropout mask: entries are `0` with probability `rate`, else `1 / (1 - rate)`.
pub fn sample_dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> DenseMatrix {
    let keep = 1.0 - rate;
    let values = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    DenseMatrix::from_vec(rows, cols, values).expect("finite mask")
}

/// `H0 = (relu(X_t W_t + b_t) Θ) ⊙ mask`, rows in global node order.
pub fn project(
    features: &FeatureSet,
    params: &ModelParams,
    mask: Option<&DenseMatrix>,
) -> Result<(DenseMatrix, ProjectionCache), ModelError> {
    let d = params.hidden();
    let n: usize = (0..features.n_types()).map(|t| features.members(t).len()).sum();
    let mut activated = DenseMatrix::zeros(n, d);
    let mut pre = Vec::with_capacity(features.n_types());
    for t in 0..features.n_types() {
        if t >= params.n_types() {
            return Err(ModelError::MissingProjection(t));
        }
        let mut z = features.block(t).matmul(params.proj_weight(t))?;
        let bias = params.proj_bias(t).row(0);
        for r in 0..z.n_rows() {
            for (x, b) in z.row_mut(r).iter_mut().zip(bias) {
                *x += b;
            }
        }
        for (r, &v) in features.members(t).iter().enumerate() {
            for (dst, &x) in activated.row_mut(v).iter_mut().zip(z.row(r)) {
                *dst = x.max(0.0);
            }
        }
        pre.push(z);
    }
    let mut h0 = activated.matmul(params.theta())?;
    if let Some(m) = mask {
        h0 = h0.hadamard(m)?;
    }
    Ok((
        h0,
        ProjectionCache {
            pre,
            activated,
            mask: mask.cloned(),
        },
    ))
}

/// Gradients of the projection: `(∂W_t, ∂b_t, ∂Θ)`.
pub fn project_backward(
    features: &FeatureSet,
    params: &ModelParams,
    cache: &ProjectionCache,
    d_h0: &DenseMatrix,
) -> Result<(Vec<DenseMatrix>, Vec<DenseMatrix>, DenseMatrix), ModelError> {
    let d_pre_theta = match &cache.mask {
        Some(m) => d_h0.hadamard(m)?,
        None => d_h0.clone(),
    };
    let d_theta = cache.activated.t_matmul(&d_pre_theta)?;
    let d_activated = d_pre_theta.matmul_t(params.theta())?;
    let mut d_weights = Vec::with_capacity(features.n_types());
    let mut d_biases = Vec::with_capacity(features.n_types());
    for t in 0..features.n_types() {
        let pre = &cache.pre[t];
        let mut d_pre = DenseMatrix::zeros(pre.n_rows(), pre.n_cols());
        for (r, &v) in features.members(t).iter().enumerate() {
            for ((g, &p), &up) in d_pre.row_mut(r).iter_mut().zip(pre.row(r)).zip(d_activated.row(v)) {
                *g = if p > 0.0 { up } else { 0.0 };
            }
        }
        d_weights.push(features.block(t).t_matmul(&d_pre)?);
        d_biases.push(DenseMatrix::from_vec(1, pre.n_cols(), d_pre.column_sums())?);
    }
    Ok((d_weights, d_biases, d_theta))
}

/// Task-level outputs of a forward pass, for every node.
#[derive(Debug, Clone)]
pub enum TaskOutputs {
    NodeClass { logits: DenseMatrix },
    Rec { z_src: DenseMatrix, z_dst: DenseMatrix },
}

impl TaskOutputs {
    /// Argmax class per node (first index on ties).
    pub fn predict_classes(&self, nodes: &[usize]) -> Vec<usize> {
        let TaskOutputs::NodeClass { logits } = self else {
            panic!("predict_classes on recommendation outputs");
        };
        nodes
            .iter()
            .map(|&v| {
                let row = logits.row(v);
                let mut best = 0;
                for (c, &x) in row.iter().enumerate() {
                    if x > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    /// `z_uᵀ z_v` per pair.
    pub fn pair_scores(&self, pairs: &[Pair]) -> Vec<f64> {
        let TaskOutputs::Rec { z_src, z_dst } = self else {
            panic!("pair_scores on classification outputs");
        };
        pairs
            .iter()
            .map(|p| z_src.row(p.src).iter().zip(z_dst.row(p.dst)).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    generation: u64,
    pub h0: DenseMatrix,
    projection: ProjectionCache,
    pub dags: Vec<DagAssignment>,
    pub dag_traces: Vec<DagTrace>,
    pub loss: f64,
    pub outputs: TaskOutputs,
    d_outputs: Vec<DenseMatrix>,
    d_head: Option<DenseMatrix>,
}

impl ForwardTrace {
    /// Sign pattern of every relu input of the pass: the projection
    /// pre-activations, then `HK` of each DAG.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let proj = self.projection.pre.iter().flat_map(|m| m.values().iter());
        let outputs = self
            .dag_traces
            .iter()
            .flat_map(|t| t.states.last().expect("K ≥ 1").values().iter());
        proj.chain(outputs).map(|&x| x > 0.0).collect()
    }
}

/// Gradients of one loss: every ω tensor, plus `∂L/∂coefficient` for every
/// branch of every link of every DAG.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParamGrads,
    pub links: Vec<Vec<Vec<f64>>>,
}

/// A model bound to one dataset.
#[derive(Debug, Clone, Copy)]
pub struct Model<'a> {
    pub graph: &'a HinGraph,
    pub features: &'a FeatureSet,
    pub task: &'a TaskData,
}

impl<'a> Model<'a> {
    pub fn new(graph: &'a HinGraph, features: &'a FeatureSet, task: &'a TaskData) -> Self {
        Self {
            graph,
            features,
            task,
        }
    }

    /// Number of DAGs the task needs: one per target node type.
    pub fn n_dags(&self) -> usize {
        self.task.target_types().len()
    }

    pub fn init_params(&self, hidden: usize, rng: &mut impl Rng) -> ModelParams {
        let n_classes = match self.task {
            TaskData::NodeClass(d) => Some(d.n_classes),
            TaskData::Rec(_) => None,
        };
        ModelParams::init(&self.features.dims(), hidden, n_classes, rng)
    }

    pub fn split_nodes(&self, split: Split) -> Vec<usize> {
        let TaskData::NodeClass(d) = self.task else {
            unreachable!()
        };
        match split {
            Split::Train => d.train.clone(),
            Split::Val => d.val.clone(),
            Split::Test => d.test.clone(),
            Split::TrainVal => d.train.iter().chain(&d.val).copied().collect(),
        }
    }

    pub fn split_pairs(&self, split: Split) -> Vec<Pair> {
        let TaskData::Rec(d) = self.task else {
            unreachable!()
        };
        match split {
            Split::Train => d.train.clone(),
            Split::Val => d.val.clone(),
            Split::Test => d.test.clone(),
            Split::TrainVal => d.train.iter().chain(&d.val).copied().collect(),
        }
    }

    /// Full forward pass and loss on `split`. `mask` is an optional dropout
    /// mask on `H0`.
    pub fn forward(
        &self,
        params: &ModelParams,
        dags: &[DagAssignment],
        split: Split,
        mask: Option<&DenseMatrix>,
    ) -> Result<ForwardTrace, ModelError> {
        if dags.len() != self.n_dags() {
            return Err(ModelError::Assignment(format!(
                "task needs {} DAG(s), got {}",
                self.n_dags(),
                dags.len()
            )));
        }
        let (h0, projection) = project(self.features, params, mask)?;
        let dag_traces = dags
            .iter()
            .map(|a| dag_forward(&h0, a, self.graph))
            .collect::<Result<Vec<_>, _>>()?;
        let (loss, outputs, d_outputs, d_head) = match self.task {
            TaskData::NodeClass(d) => {
                let head = params
                    .head()
                    .ok_or_else(|| ModelError::Task("classification needs an output head".into()))?;
                let l = loss_nodeclass(&dag_traces[0].output, head, &d.labels, &self.split_nodes(split))?;
                (
                    l.loss,
                    TaskOutputs::NodeClass { logits: l.logits },
                    vec![l.d_output],
                    Some(l.d_head),
                )
            }
            TaskData::Rec(d) => {
                let pairs = self.split_pairs(split);
                let (src_t, dst_t) = (
                    self.graph.type_index(&d.source_type),
                    self.graph.type_index(&d.target_type),
                );
                for p in &pairs {
                    let ok = p.src < self.graph.n_nodes()
                        && p.dst < self.graph.n_nodes()
                        && Some(self.graph.node_types()[p.src]) == src_t
                        && Some(self.graph.node_types()[p.dst]) == dst_t;
                    if !ok {
                        return Err(ModelError::PairType {
                            src: p.src,
                            dst: p.dst,
                            source_type: d.source_type.clone(),
                            target_type: d.target_type.clone(),
                        });
                    }
                }
                let z_src = &dag_traces[0].output;
                let z_dst = &dag_traces[1].output;
                let l = loss_rec(z_src, z_dst, &pairs)?;
                (
                    l.loss,
                    TaskOutputs::Rec {
                        z_src: z_src.clone(),
                        z_dst: z_dst.clone(),
                    },
                    vec![l.d_src, l.d_dst],
                    None,
                )
            }
        };
        Ok(ForwardTrace {
            generation: params.generation(),
            h0,
            projection,
            dags: dags.to_vec(),
            dag_traces,
            loss,
            outputs,
            d_outputs,
            d_head,
        })
    }

    /// Reverse pass for a trace produced by [`forward`](Self::forward) with
    /// the same, unmodified parameters.
    pub fn backward(
        &self,
        params: &ModelParams,
        trace: &ForwardTrace,
    ) -> Result<Gradients, ModelError> {
        if trace.generation != params.generation() {
            return Err(ModelError::StaleTrace);
        }
        let mut d_h0 = DenseMatrix::zeros(trace.h0.n_rows(), trace.h0.n_cols());
        let mut links = Vec::with_capacity(trace.dags.len());
        for ((assignment, dag_trace), d_out) in
            trace.dags.iter().zip(&trace.dag_traces).zip(&trace.d_outputs)
        {
            let (d, g) = dag_backward(dag_trace, assignment, self.graph, d_out)?;
            d_h0.add_scaled_assign(1.0, &d)?;
            links.push(g);
        }
        let (proj_weights, proj_biases, theta) =
            project_backward(self.features, params, &trace.projection, &d_h0)?;
        Ok(Gradients {
            params: ParamGrads {
                proj_weights,
                proj_biases,
                theta,
                head: trace.d_head.clone(),
            },
            links,
        })
    }

    /// Loss only; convenient for finite differences.
    pub fn loss(
        &self,
        params: &ModelParams,
        dags: &[DagAssignment],
        split: Split,
    ) -> Result<f64, ModelError> {
        Ok(self.forward(params, dags, split, None)?.loss)
    }
}
