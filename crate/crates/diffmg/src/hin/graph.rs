use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;

use super::HinError;
use crate::linalg::{DenseMatrix, SparseMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeType {
    pub name: String,
    pub src_type: String,
    pub dst_type: String,
}

/// Ordered edge-type declarations. Order is significant: it fixes the
/// candidate order of every search-space link.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeTypeRegistry {
    entries: Vec<EdgeType>,
}

impl EdgeTypeRegistry {
    pub fn new(entries: Vec<EdgeType>) -> Result<Self, HinError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if e.name == "I" || e.name == "O" {
                return Err(HinError::Schema(format!(
                    "edge type name `{}` is reserved",
                    e.name
                )));
            }
            if !seen.insert(e.name.as_str()) {
                return Err(HinError::Schema(format!(
                    "duplicate edge type `{}`",
                    e.name
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[EdgeType] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&EdgeType> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// A typed directed graph over a single global node index `0..N`.
///
/// Each edge type owns one row-normalized `N × N` adjacency whose rows are
/// destination nodes and columns are source nodes, so multiplying it with a
/// node-state matrix aggregates messages into the destinations.
#[derive(Debug, Clone)]
pub struct HinGraph {
    type_names: Vec<String>,
    node_types: Vec<usize>,
    registry: EdgeTypeRegistry,
    adjacency: Vec<SparseMatrix>,
}

impl HinGraph {
    /// Builds a graph from `(src, dst, edge_type_index)` triples.
    ///
    /// `node_types[v]` indexes into `type_names`. Duplicate edges collapse to
    /// one with a warning.
    pub fn from_edges(
        type_names: Vec<String>,
        node_types: Vec<usize>,
        registry: EdgeTypeRegistry,
        edges: &[(usize, usize, usize)],
    ) -> Result<Self, HinError> {
        let n = node_types.len();
        if let Some(&t) = node_types.iter().find(|&&t| t >= type_names.len()) {
            return Err(HinError::Schema(format!("node type index {t} is undeclared")));
        }
        let type_index: HashMap<&str, usize> = type_names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut endpoint_types = Vec::with_capacity(registry.len());
        for e in registry.entries() {
            let src = *type_index
                .get(e.src_type.as_str())
                .ok_or_else(|| HinError::UnknownNodeType(e.src_type.clone()))?;
            let dst = *type_index
                .get(e.dst_type.as_str())
                .ok_or_else(|| HinError::UnknownNodeType(e.dst_type.clone()))?;
            endpoint_types.push((src, dst));
        }
        let mut per_type: Vec<BTreeSet<(usize, usize)>> = vec![BTreeSet::new(); registry.len()];
        let mut duplicates = 0usize;
        for &(src, dst, r) in edges {
            if r >= registry.len() {
                return Err(HinError::Schema(format!("edge type index {r} is undeclared")));
            }
            if src >= n || dst >= n {
                return Err(HinError::Schema(format!(
                    "edge {src}->{dst}: node id out of range (N = {n})"
                )));
            }
            let (st, dt) = endpoint_types[r];
            if node_types[src] != st || node_types[dst] != dt {
                let e = &registry.entries()[r];
                return Err(HinError::Schema(format!(
                    "edge {src}->{dst} of type `{}` connects {}->{} but the type requires {}->{}",
                    e.name,
                    type_names[node_types[src]],
                    type_names[node_types[dst]],
                    e.src_type,
                    e.dst_type
                )));
            }
            if !per_type[r].insert((dst, src)) {
                duplicates += 1;
            }
        }
        if duplicates > 0 {
            warn!("collapsed {duplicates} duplicate edge(s)");
        }
        let adjacency = per_type
            .iter()
            .map(|pairs| {
                let trips: Vec<_> = pairs.iter().map(|&(d, s)| (d, s, 1.0)).collect();
                SparseMatrix::from_triplets(n, n, &trips).map(|m| m.row_normalize())
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HinError::Schema(e.to_string()))?;
        if type_names.len() + registry.len() <= 2 {
            warn!(
                "network is not heterogeneous: {} node type(s) and {} edge type(s)",
                type_names.len(),
                registry.len()
            );
        }
        Ok(Self {
            type_names,
            node_types,
            registry,
            adjacency,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.type_names.iter().position(|t| t == name)
    }

    /// Type index of every node.
    pub fn node_types(&self) -> &[usize] {
        &self.node_types
    }

    pub fn node_type_name(&self, node: usize) -> &str {
        &self.type_names[self.node_types[node]]
    }

    pub fn nodes_of_type(&self, type_idx: usize) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&v| self.node_types[v] == type_idx)
            .collect()
    }

    pub fn registry(&self) -> &EdgeTypeRegistry {
        &self.registry
    }

    /// Row-normalized adjacency of the edge type at `idx` in registry order.
    pub fn adjacency(&self, idx: usize) -> &SparseMatrix {
        &self.adjacency[idx]
    }

    pub fn adjacency_by_name(&self, name: &str) -> Option<&SparseMatrix> {
        self.registry.index_of(name).map(|i| &self.adjacency[i])
    }

    /// All stored edges as `(src, dst, edge_type_index)`, sorted by type then destination.
    pub fn edges(&self) -> Vec<(usize, usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(r, a)| a.pattern().into_iter().map(move |(d, s)| (s, d, r)))
            .collect()
    }

    /// Edge types whose destination is `target_type`, in registry order.
    pub fn task_related_types(&self, target_type: &str) -> Result<Vec<String>, HinError> {
        if self.type_index(target_type).is_none() {
            return Err(HinError::UnknownNodeType(target_type.to_string()));
        }
        Ok(self
            .registry
            .entries()
            .iter()
            .filter(|e| e.dst_type == target_type)
            .map(|e| e.name.clone())
            .collect())
    }
}

/// Raw input features, one dense block per node type.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    blocks: Vec<DenseMatrix>,
    /// Global node id of every block row, per type.
    members: Vec<Vec<usize>>,
}

impl FeatureSet {
    pub fn new(
        graph: &HinGraph,
        blocks: Vec<DenseMatrix>,
        members: Vec<Vec<usize>>,
    ) -> Result<Self, HinError> {
        if blocks.len() != graph.type_names().len() || members.len() != blocks.len() {
            return Err(HinError::Schema(
                "need one feature block per node type".into(),
            ));
        }
        let mut covered = vec![false; graph.n_nodes()];
        for (t, (block, ids)) in blocks.iter().zip(&members).enumerate() {
            if block.n_rows() != ids.len() {
                return Err(HinError::Schema(format!(
                    "feature block of type `{}` has {} rows for {} nodes",
                    graph.type_names()[t],
                    block.n_rows(),
                    ids.len()
                )));
            }
            if block.n_cols() == 0 {
                return Err(HinError::Schema(format!(
                    "feature block of type `{}` has zero width",
                    graph.type_names()[t]
                )));
            }
            for &v in ids {
                if v >= graph.n_nodes() || graph.node_types()[v] != t || covered[v] {
                    return Err(HinError::Schema(format!(
                        "feature row for node {v} is misplaced or repeated"
                    )));
                }
                covered[v] = true;
            }
        }
        if let Some(v) = covered.iter().position(|c| !c) {
            return Err(HinError::Schema(format!("node {v} has no feature row")));
        }
        Ok(Self { blocks, members })
    }

    /// One-hot node IDs within each type.
    pub fn one_hot(graph: &HinGraph) -> Self {
        let members: Vec<Vec<usize>> = (0..graph.type_names().len())
            .map(|t| graph.nodes_of_type(t))
            .collect();
        let blocks = members
            .iter()
            .map(|ids| DenseMatrix::identity(ids.len().max(1)))
            .zip(&members)
            .map(|(m, ids)| {
                if ids.is_empty() {
                    DenseMatrix::zeros(0, 1)
                } else {
                    m
                }
            })
            .collect();
        Self { blocks, members }
    }

    pub fn n_types(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, type_idx: usize) -> &DenseMatrix {
        &self.blocks[type_idx]
    }

    pub fn members(&self, type_idx: usize) -> &[usize] {
        &self.members[type_idx]
    }

    /// Feature width `d_t` of each type.
    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(DenseMatrix::n_cols).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    NodeClass,
    Rec,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::NodeClass => "nodeclass",
            TaskKind::Rec => "rec",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeClassData {
    pub target_type: String,
    pub labels: BTreeMap<usize, usize>,
    pub n_classes: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    pub src: usize,
    pub dst: usize,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecData {
    pub source_type: String,
    pub target_type: String,
    pub train: Vec<Pair>,
    pub val: Vec<Pair>,
    pub test: Vec<Pair>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskData {
    NodeClass(NodeClassData),
    Rec(RecData),
}

impl TaskData {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskData::NodeClass(_) => TaskKind::NodeClass,
            TaskData::Rec(_) => TaskKind::Rec,
        }
    }

    /// Node types whose representations the task reads: one for node
    /// classification, the two endpoint types for recommendation.
    pub fn target_types(&self) -> Vec<String> {
        match self {
            TaskData::NodeClass(d) => vec![d.target_type.clone()],
            TaskData::Rec(d) => vec![d.source_type.clone(), d.target_type.clone()],
        }
    }

    pub fn validate(&self, graph: &HinGraph) -> Result<(), HinError> {
        match self {
            TaskData::NodeClass(d) => d.validate(graph),
            TaskData::Rec(d) => d.validate(graph),
        }
    }
}

impl NodeClassData {
    /// Checks split disjointness, label coverage, dense class ids, and that
    /// all labeled nodes share one node type, which it records as the target.
    pub fn from_parts(
        graph: &HinGraph,
        labels: BTreeMap<usize, usize>,
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self, HinError> {
        let first = labels
            .keys()
            .next()
            .ok_or_else(|| HinError::Task("no labeled nodes".into()))?;
        let target_type = graph.node_type_name(*first).to_string();
        let n_classes = labels.values().max().map_or(0, |m| m + 1);
        let d = Self {
            target_type,
            labels,
            n_classes,
            train,
            val,
            test,
        };
        d.validate(graph)?;
        Ok(d)
    }

    fn validate(&self, graph: &HinGraph) -> Result<(), HinError> {
        let target = graph
            .type_index(&self.target_type)
            .ok_or_else(|| HinError::UnknownNodeType(self.target_type.clone()))?;
        for &v in self.labels.keys() {
            if v >= graph.n_nodes() {
                return Err(HinError::Task(format!("labeled node {v} out of range")));
            }
            if graph.node_types()[v] != target {
                return Err(HinError::Task(format!(
                    "labeled node {v} has type `{}`, expected `{}`",
                    graph.node_type_name(v),
                    self.target_type
                )));
            }
        }
        let present: BTreeSet<usize> = self.labels.values().copied().collect();
        if present.len() != self.n_classes || self.n_classes < 2 {
            return Err(HinError::Task(format!(
                "class ids must be dense in [0, C) with C >= 2; found {present:?}"
            )));
        }
        let mut seen = BTreeSet::new();
        for (name, split) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if split.is_empty() {
                return Err(HinError::Task(format!("{name} split is empty")));
            }
            for &v in split {
                if !self.labels.contains_key(&v) {
                    return Err(HinError::Task(format!(
                        "{name} split node {v} has no label"
                    )));
                }
                if !seen.insert(v) {
                    return Err(HinError::Task(format!(
                        "node {v} appears in more than one split"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl RecData {
    fn validate(&self, graph: &HinGraph) -> Result<(), HinError> {
        let src = graph
            .type_index(&self.source_type)
            .ok_or_else(|| HinError::UnknownNodeType(self.source_type.clone()))?;
        let dst = graph
            .type_index(&self.target_type)
            .ok_or_else(|| HinError::UnknownNodeType(self.target_type.clone()))?;
        let mut seen = BTreeSet::new();
        for (name, split) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            if split.is_empty() {
                return Err(HinError::Task(format!("{name} pairs are empty")));
            }
            if !split.iter().any(|p| p.label) || split.iter().all(|p| p.label) {
                return Err(HinError::Task(format!(
                    "{name} pairs need both positive and negative labels"
                )));
            }
            for p in split {
                if p.src >= graph.n_nodes()
                    || p.dst >= graph.n_nodes()
                    || graph.node_types()[p.src] != src
                    || graph.node_types()[p.dst] != dst
                {
                    return Err(HinError::Task(format!(
                        "{name} pair ({}, {}) does not connect `{}` to `{}`",
                        p.src, p.dst, self.source_type, self.target_type
                    )));
                }
                if !seen.insert((p.src, p.dst)) {
                    return Err(HinError::Task(format!(
                        "pair ({}, {}) appears more than once",
                        p.src, p.dst
                    )));
                }
            }
        }
        Ok(())
    }
}
