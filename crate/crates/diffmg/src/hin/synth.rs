//! Planted heterogeneous networks for desk-scale experiments.
//!
//! Nodes of "signal" types carry a latent class that shows up in their
//! features. Target labels are obtained by pushing those latent classes
//! through a planted meta graph, so aggregating along the planted meta graph
//! predicts the label while other edge-type combinations see only random
//! structure.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    EdgeType, EdgeTypeRegistry, FeatureSet, HinError, HinGraph, NodeClassData, Pair, RecData,
    TaskData,
};
use crate::linalg::{DenseMatrix, Propagator};
use crate::space::{build_space, Choice, MetaGraph, MetaGraphFile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTypeSpec {
    pub name: String,
    pub count: usize,
    pub feature_dim: usize,
    /// Whether nodes of this type carry a latent class in their features.
    #[serde(default)]
    pub signal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub name: String,
    pub src: String,
    pub dst: String,
    /// Sources drawn uniformly for every destination node.
    #[serde(default = "default_degree")]
    pub degree: usize,
    /// Mirror the edges of another edge type instead of sampling.
    #[serde(default)]
    pub reverse_of: Option<String>,
}

fn default_degree() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SynthTask {
    Nodeclass {
        planted: MetaGraphFile,
    },
    Rec {
        planted_src: MetaGraphFile,
        planted_dst: MetaGraphFile,
        n_pairs: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub node_types: Vec<NodeTypeSpec>,
    pub edge_types: Vec<EdgeSpec>,
    pub task: SynthTask,
    pub n_classes: usize,
    /// Probability that a label is replaced by a uniformly random one.
    pub noise: f64,
    #[serde(default = "default_signal")]
    pub signal_strength: f64,
    #[serde(default = "default_feature_noise")]
    pub feature_noise: f64,
    /// Train and validation fractions; the rest is test.
    #[serde(default = "default_split")]
    pub split: [f64; 2],
}

fn default_signal() -> f64 {
    1.0
}

fn default_feature_noise() -> f64 {
    0.5
}

fn default_split() -> [f64; 2] {
    [0.4, 0.3]
}

/// Generates a dataset from `config`. The output is a pure function of
/// `(config, seed)`.
pub fn synth_planted(
    config: &SynthConfig,
    seed: u64,
) -> Result<(HinGraph, FeatureSet, TaskData), HinError> {
    validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = config.n_classes;

    let mut type_names = Vec::new();
    let mut node_types = Vec::new();
    let mut members = Vec::new();
    for (t, nt) in config.node_types.iter().enumerate() {
        type_names.push(nt.name.clone());
        let start = node_types.len();
        node_types.extend(std::iter::repeat_n(t, nt.count));
        members.push((start..start + nt.count).collect::<Vec<_>>());
    }
    let n = node_types.len();

    let mut latent: Vec<Option<usize>> = vec![None; n];
    for (t, nt) in config.node_types.iter().enumerate() {
        if nt.signal {
            for &v in &members[t] {
                latent[v] = Some(rng.random_range(0..c));
            }
        }
    }

    let normal = Normal::new(0.0, config.feature_noise)
        .map_err(|e| HinError::Config(format!("feature_noise: {e}")))?;
    let mut blocks = Vec::new();
    for (t, nt) in config.node_types.iter().enumerate() {
        let mut block = DenseMatrix::zeros(nt.count, nt.feature_dim);
        for (r, &v) in members[t].iter().enumerate() {
            for x in block.row_mut(r) {
                *x = normal.sample(&mut rng);
            }
            if let Some(class) = latent[v] {
                block.row_mut(r)[class] += config.signal_strength;
            }
        }
        blocks.push(block);
    }

    let type_of = |name: &str| type_names.iter().position(|t| t == name).expect("validated");
    let mut edges_by_type: Vec<Vec<(usize, usize)>> = Vec::new();
    for spec in &config.edge_types {
        let edges = match &spec.reverse_of {
            Some(other) => {
                let r = config
                    .edge_types
                    .iter()
                    .position(|e| &e.name == other)
                    .expect("validated");
                edges_by_type[r].iter().map(|&(s, d)| (d, s)).collect()
            }
            None => {
                let srcs = &members[type_of(&spec.src)];
                let degree = spec.degree.min(srcs.len());
                let mut out = Vec::new();
                for &dst in &members[type_of(&spec.dst)] {
                    for &src in srcs.choose_multiple(&mut rng, degree) {
                        out.push((src, dst));
                    }
                }
                out
            }
        };
        edges_by_type.push(edges);
    }
    let registry = EdgeTypeRegistry::new(
        config
            .edge_types
            .iter()
            .map(|e| EdgeType {
                name: e.name.clone(),
                src_type: e.src.clone(),
                dst_type: e.dst.clone(),
            })
            .collect(),
    )?;
    let flat: Vec<(usize, usize, usize)> = edges_by_type
        .iter()
        .enumerate()
        .flat_map(|(r, es)| es.iter().map(move |&(s, d)| (s, d, r)))
        .collect();
    let graph = HinGraph::from_edges(type_names, node_types, registry, &flat)?;
    let features = FeatureSet::new(&graph, blocks, members)?;

    let mut class_signal = DenseMatrix::zeros(n, c);
    for (v, l) in latent.iter().enumerate() {
        if let Some(l) = l {
            class_signal.set(v, *l, 1.0);
        }
    }

    let task = match &config.task {
        SynthTask::Nodeclass { planted } => {
            let mg = planted_meta_graph(&graph, planted)?;
            let signal = propagate(&graph, &mg, &class_signal)?;
            let target = graph
                .type_index(mg.target_type())
                .ok_or_else(|| HinError::UnknownNodeType(mg.target_type().to_string()))?;
            let mut nodes = graph.nodes_of_type(target);
            let mut labels = BTreeMap::new();
            for &v in &nodes {
                let mut y = planted_class(signal.row(v), &mut rng);
                if rng.random::<f64>() < config.noise {
                    y = rng.random_range(0..c);
                }
                labels.insert(v, y);
            }
            // every class must occur for the ids to be dense
            let present: BTreeSet<usize> = labels.values().copied().collect();
            if present.len() != c {
                return Err(HinError::Config(format!(
                    "only {} of {c} classes occur among targets; increase the target count",
                    present.len()
                )));
            }
            nodes.shuffle(&mut rng);
            let (train, val, test) = split3(&nodes, config.split);
            TaskData::NodeClass(NodeClassData::from_parts(&graph, labels, train, val, test)?)
        }
        SynthTask::Rec {
            planted_src,
            planted_dst,
            n_pairs,
        } => {
            let mg_src = planted_meta_graph(&graph, planted_src)?;
            let mg_dst = planted_meta_graph(&graph, planted_dst)?;
            let sig_src = propagate(&graph, &mg_src, &class_signal)?;
            let sig_dst = propagate(&graph, &mg_dst, &class_signal)?;
            let src_nodes = graph.nodes_of_type(type_of_graph(&graph, mg_src.target_type())?);
            let dst_nodes = graph.nodes_of_type(type_of_graph(&graph, mg_dst.target_type())?);
            let class_src: BTreeMap<usize, usize> = src_nodes
                .iter()
                .map(|&v| (v, planted_class(sig_src.row(v), &mut rng)))
                .collect();
            let class_dst: BTreeMap<usize, usize> = dst_nodes
                .iter()
                .map(|&v| (v, planted_class(sig_dst.row(v), &mut rng)))
                .collect();
            let max_pairs = src_nodes.len() * dst_nodes.len();
            if *n_pairs > max_pairs / 2 {
                return Err(HinError::Config(format!(
                    "n_pairs = {n_pairs} is too dense for {max_pairs} possible pairs"
                )));
            }
            let mut seen = BTreeSet::new();
            let mut pairs = Vec::with_capacity(*n_pairs);
            while pairs.len() < *n_pairs {
                let u = *src_nodes.choose(&mut rng).expect("nonempty");
                let v = *dst_nodes.choose(&mut rng).expect("nonempty");
                if !seen.insert((u, v)) {
                    continue;
                }
                let mut label = class_src[&u] == class_dst[&v];
                if rng.random::<f64>() < config.noise {
                    label = rng.random::<bool>();
                }
                pairs.push(Pair { src: u, dst: v, label });
            }
            let (train, val, test) = split3(&pairs, config.split);
            let data = RecData {
                source_type: mg_src.target_type().to_string(),
                target_type: mg_dst.target_type().to_string(),
                train,
                val,
                test,
            };
            let task = TaskData::Rec(data);
            task.validate(&graph)?;
            task
        }
    };
    Ok((graph, features, task))
}

fn type_of_graph(graph: &HinGraph, name: &str) -> Result<usize, HinError> {
    graph
        .type_index(name)
        .ok_or_else(|| HinError::UnknownNodeType(name.to_string()))
}

fn validate(config: &SynthConfig) -> Result<(), HinError> {
    let err = |m: String| Err(HinError::Config(m));
    if config.n_classes < 2 {
        return err("n_classes must be at least 2".into());
    }
    if !(0.0..=1.0).contains(&config.noise) {
        return err(format!("noise must be in [0, 1], got {}", config.noise));
    }
    if config.split.iter().any(|f| *f <= 0.0) || config.split[0] + config.split[1] >= 1.0 {
        return err("split fractions must be positive and sum below 1".into());
    }
    for nt in &config.node_types {
        if nt.count == 0 || nt.feature_dim == 0 {
            return err(format!("node type `{}` needs count and feature_dim ≥ 1", nt.name));
        }
        if nt.signal && nt.feature_dim < config.n_classes {
            return err(format!(
                "signal type `{}` needs feature_dim ≥ n_classes",
                nt.name
            ));
        }
    }
    let type_known = |t: &str| config.node_types.iter().any(|n| n.name == t);
    for (idx, e) in config.edge_types.iter().enumerate() {
        if !type_known(&e.src) || !type_known(&e.dst) {
            return err(format!("edge type `{}` uses an undeclared node type", e.name));
        }
        if let Some(other) = &e.reverse_of {
            match config.edge_types[..idx].iter().find(|x| &x.name == other) {
                Some(o) if o.src == e.dst && o.dst == e.src => {}
                Some(_) => {
                    return err(format!("`{}` cannot reverse `{other}`: endpoint types differ", e.name))
                }
                None => {
                    return err(format!(
                        "`{}` reverses `{other}`, which must be declared before it",
                        e.name
                    ))
                }
            }
        }
    }
    Ok(())
}

fn planted_meta_graph(graph: &HinGraph, file: &MetaGraphFile) -> Result<MetaGraph, HinError> {
    for l in &file.links {
        if let Choice::EdgeType(name) = Choice::from_token(&l.choice) {
            if graph.registry().index_of(&name).is_none() {
                return Err(HinError::Config(format!(
                    "planted meta graph references unknown edge type `{name}`"
                )));
            }
        }
    }
    let spec = build_space(graph, &file.target_type, file.k)
        .map_err(|e| HinError::Config(format!("planted meta graph: {e}")))?;
    MetaGraph::from_file(file, &spec).map_err(|e| HinError::Config(format!("planted {e}")))
}

/// Linear propagation of `x` along a meta graph, every link with weight 1.
fn propagate(graph: &HinGraph, mg: &MetaGraph, x: &DenseMatrix) -> Result<DenseMatrix, HinError> {
    let mut states = vec![x.clone()];
    for k in 1..=mg.k_states() {
        let mut h = DenseMatrix::zeros(x.n_rows(), x.n_cols());
        for (l, c) in mg.links().iter().zip(mg.choices()) {
            if l.k != k {
                continue;
            }
            let op = match c {
                Choice::EdgeType(name) => Propagator::Sparse(
                    graph
                        .adjacency_by_name(name)
                        .ok_or_else(|| HinError::UnknownEdgeType(name.clone()))?,
                ),
                Choice::Identity => Propagator::Identity,
                Choice::Empty => Propagator::Empty,
            };
            let step = op
                .apply(&states[l.i])
                .map_err(|e| HinError::Config(e.to_string()))?;
            h.add_scaled_assign(1.0, &step)
                .map_err(|e| HinError::Config(e.to_string()))?;
        }
        states.push(h);
    }
    Ok(states.pop().expect("K ≥ 1"))
}

/// Argmax of the propagated class mass; ties and empty rows resolve at random.
fn planted_class(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best: Vec<usize> = (0..row.len())
        .filter(|&c| max > 0.0 && (row[c] - max).abs() <= 1e-12)
        .collect();
    if best.is_empty() {
        rng.random_range(0..row.len())
    } else {
        *best.choose(rng).expect("nonempty")
    }
}

fn split3<T: Clone>(items: &[T], fractions: [f64; 2]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = items.len();
    let n_train = ((n as f64) * fractions[0]).round().max(1.0) as usize;
    let n_val = ((n as f64) * fractions[1]).round().max(1.0) as usize;
    let n_train = n_train.min(n.saturating_sub(2));
    let n_val = n_val.min(n - n_train - 1);
    (
        items[..n_train].to_vec(),
        items[n_train..n_train + n_val].to_vec(),
        items[n_train + n_val..].to_vec(),
    )
}
