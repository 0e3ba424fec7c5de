use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::arch::{derive, ArchParams};
use super::sample::{lambda_grad, mixture_lambda_grad, sample_path, SampledPath};
use crate::evaluate::{task_metric, MetricError};
use crate::linalg::{spmm_adjoint_calls, spmm_calls};
use crate::model::{
    adam_step, sample_dropout_mask, Branch, DagAssignment, Model, ModelError, ModelParams, Split,
    TrainConfig,
};
use crate::space::{build_space, MetaGraph, MetaGraphFile, SearchSpaceSpec, SpaceError};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SearchMode {
    /// One ε-greedy path per epoch.
    #[default]
    #[serde(rename = "sampled")]
    Sampled,
    /// Every candidate evaluated, weighted by α.
    #[serde(rename = "darts")]
    DartsReference,
    /// Sampled paths, with ω and λ both fitted on train ∪ validation.
    #[serde(rename = "single-level")]
    SingleLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    #[serde(rename = "K")]
    pub k_states: usize,
    pub epochs: usize,
    pub epsilon0: f64,
    pub decay: f64,
    pub restarts: usize,
    pub mode: SearchMode,
    pub train: TrainConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k_states: 4,
            epochs: 50,
            epsilon0: 0.0,
            decay: 0.9,
            restarts: 3,
            mode: SearchMode::Sampled,
            train: TrainConfig::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.k_states == 0 {
            return bad("K must be ≥ 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be ≥ 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be ≥ 1");
        }
        if !(0.0..1.0).contains(&self.epsilon0) {
            return bad("epsilon0 must be in [0, 1)");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must be in (0, 1]");
        }
        self.train.validate().map_err(SearchError::Config)
    }
}

/// `ε_i = ε₀ · decay^i`.
pub fn epsilon_at(epsilon0: f64, decay: f64, epoch: usize) -> f64 {
    epsilon0 * decay.powi(epoch as i32)
}

/// Full mixture over every candidate of every link, each weighted by its α.
pub fn mixture_assignment(arch: &ArchParams, spec: &SearchSpaceSpec) -> DagAssignment {
    let branches = arch
        .alphas()
        .into_iter()
        .enumerate()
        .map(|(l, alpha)| {
            spec.candidates(l)
                .iter()
                .zip(alpha)
                .map(|(choice, coefficient)| Branch {
                    choice: choice.clone(),
                    coefficient,
                })
                .collect()
        })
        .collect();
    DagAssignment::new(spec.k_states(), branches).expect("one λ vector per link")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
    pub epsilon: f64,
    /// spmm calls made by the ω and λ updates of this epoch.
    pub spmm_calls: u64,
    pub spmm_adjoint_calls: u64,
    /// Sampled candidate index per link, per DAG; empty in DARTS mode.
    pub sampled: Vec<Vec<usize>>,
}

/// One search restart: model weights, architecture weights, and its own
/// random stream.
pub struct SearchRun<'a> {
    model: Model<'a>,
    config: SearchConfig,
    specs: Vec<SearchSpaceSpec>,
    params: ModelParams,
    archs: Vec<ArchParams>,
    rng: ChaCha8Rng,
    history: Vec<EpochRecord>,
    last_paths: Vec<SampledPath>,
}

impl<'a> SearchRun<'a> {
    /// Fresh ω and λ. Restart `r` draws from stream `r` of the seed.
    pub fn new(model: Model<'a>, config: &SearchConfig, restart: u64) -> Result<Self, SearchError> {
        config.validate()?;
        let specs = model
            .task
            .target_types()
            .iter()
            .map(|t| build_space(model.graph, t, config.k_states))
            .collect::<Result<Vec<_>, _>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
        rng.set_stream(restart);
        let params = model.init_params(config.train.hidden, &mut rng);
        let archs = specs.iter().map(|s| ArchParams::init(s, &mut rng)).collect();
        Ok(Self {
            model,
            config: config.clone(),
            specs,
            params,
            archs,
            rng,
            history: Vec::new(),
            last_paths: Vec::new(),
        })
    }

    pub fn specs(&self) -> &[SearchSpaceSpec] {
        &self.specs
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn archs(&self) -> &[ArchParams] {
        &self.archs
    }

    pub fn archs_mut(&mut self) -> &mut [ArchParams] {
        &mut self.archs
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    /// Paths sampled in the most recent epoch (empty in DARTS mode).
    pub fn last_paths(&self) -> &[SampledPath] {
        &self.last_paths
    }

    /// One epoch: sample a path per DAG, step ω on the training loss, then
    /// step λ on the validation loss through the same path.
    pub fn search_epoch(&mut self) -> Result<&EpochRecord, SearchError> {
        let epoch = self.history.len();
        let epsilon = epsilon_at(self.config.epsilon0, self.config.decay, epoch);
        let (fit_split, arch_split) = match self.config.mode {
            SearchMode::SingleLevel => (Split::TrainVal, Split::TrainVal),
            _ => (Split::Train, Split::Val),
        };
        let spmm_before = (spmm_calls(), spmm_adjoint_calls());

        let alphas: Vec<Vec<Vec<f64>>> = self.archs.iter().map(ArchParams::alphas).collect();
        let (dags, paths) = match self.config.mode {
            SearchMode::DartsReference => (
                self.archs
                    .iter()
                    .zip(&self.specs)
                    .map(|(a, s)| mixture_assignment(a, s))
                    .collect::<Vec<_>>(),
                Vec::new(),
            ),
            _ => {
                let paths: Vec<SampledPath> = self
                    .archs
                    .iter()
                    .map(|a| sample_path(a, epsilon, &mut self.rng))
                    .collect();
                let dags = paths
                    .iter()
                    .zip(&self.specs)
                    .map(|(p, s)| p.to_assignment(s))
                    .collect();
                (dags, paths)
            }
        };

        let train = &self.config.train;
        let mask = (train.dropout > 0.0).then(|| {
            sample_dropout_mask(self.model.graph.n_nodes(), train.hidden, train.dropout, &mut self.rng)
        });
        let trace = self.model.forward(&self.params, &dags, fit_split, mask.as_ref())?;
        let grads = self.model.backward(&self.params, &trace)?;
        adam_step(&mut self.params, &grads.params, train.lr_omega, train.weight_decay);

        let val_trace = self.model.forward(&self.params, &dags, arch_split, None)?;
        let val_grads = self.model.backward(&self.params, &val_trace)?;
        for (d, arch) in self.archs.iter_mut().enumerate() {
            let link_grads: Vec<Vec<f64>> = (0..arch.n_links())
                .map(|l| {
                    let g = &val_grads.links[d][l];
                    match paths.get(d) {
                        Some(p) => lambda_grad(g[0], &alphas[d][l], p.links[l].index),
                        None => mixture_lambda_grad(g, &alphas[d][l]),
                    }
                })
                .collect();
            arch.apply_gradient(&link_grads, train.lr_lambda);
        }
        let spmm = (
            spmm_calls() - spmm_before.0,
            spmm_adjoint_calls() - spmm_before.1,
        );

        let (val_loss, val_metric) = if arch_split == Split::Val {
            (
                val_trace.loss,
                task_metric(&self.model, &val_trace.outputs, Split::Val)?,
            )
        } else {
            let v = self.model.forward(&self.params, &dags, Split::Val, None)?;
            (v.loss, task_metric(&self.model, &v.outputs, Split::Val)?)
        };
        log::debug!(
            "epoch {epoch}: train={:.4} val={val_loss:.4} metric={val_metric:.4} eps={epsilon:.4}",
            trace.loss
        );
        self.history.push(EpochRecord {
            epoch,
            train_loss: trace.loss,
            val_loss,
            val_metric,
            epsilon,
            spmm_calls: spmm.0,
            spmm_adjoint_calls: spmm.1,
            sampled: paths.iter().map(SampledPath::indices).collect(),
        });
        self.last_paths = paths;
        Ok(self.history.last().expect("just pushed"))
    }

    /// Per-link argmax of the current α, one meta graph per DAG.
    pub fn derive(&self) -> Vec<MetaGraph> {
        self.archs
            .iter()
            .zip(&self.specs)
            .map(|(a, s)| derive(a, s))
            .collect()
    }

    /// Runs the remaining epochs and summarizes.
    pub fn finish(mut self, restart: usize) -> Result<RestartReport, SearchError> {
        while self.history.len() < self.config.epochs {
            self.search_epoch()?;
        }
        let meta_graphs = self.derive();
        Ok(RestartReport {
            restart,
            final_val_metric: self.history.last().map_or(f64::NAN, |r| r.val_metric),
            final_lambdas: self.archs.iter().map(|a| a.lambdas().to_vec()).collect(),
            meta_graphs: meta_graphs.iter().map(MetaGraph::to_file).collect(),
            epochs: self.history,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    pub restart: usize,
    pub final_val_metric: f64,
    pub epochs: Vec<EpochRecord>,
    /// Final λ per DAG, per link.
    pub final_lambdas: Vec<Vec<Vec<f64>>>,
    pub meta_graphs: Vec<MetaGraphFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub task: String,
    pub config: SearchConfig,
    /// Restart with the best final validation metric (earliest on ties).
    pub best_restart: usize,
    pub meta_graphs: Vec<MetaGraphFile>,
    pub restarts: Vec<RestartReport>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// One derived meta graph per target type of the task.
    pub meta_graphs: Vec<MetaGraph>,
    pub report: SearchReport,
}

/// All restarts (in parallel, up to `threads` workers) and best-validation
/// selection among them.
pub fn run_search(
    model: Model<'_>,
    config: &SearchConfig,
    threads: usize,
) -> Result<SearchOutcome, SearchError> {
    config.validate()?;
    let results = crate::workers::run_indexed(config.restarts, threads, |r| {
        SearchRun::new(model, config, r as u64)?.finish(r)
    });
    let restarts = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut best = 0;
    for (r, report) in restarts.iter().enumerate() {
        if report.final_val_metric > restarts[best].final_val_metric {
            best = r;
        }
    }
    let meta_graphs = restarts[best]
        .meta_graphs
        .iter()
        .map(|f| {
            let spec = build_space(model.graph, &f.target_type, f.k)?;
            MetaGraph::from_file(f, &spec)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SearchOutcome {
        report: SearchReport {
            task: model.task.kind().to_string(),
            config: config.clone(),
            best_restart: best,
            meta_graphs: restarts[best].meta_graphs.clone(),
            restarts,
        },
        meta_graphs,
    })
}
