//! The DAG search space over edge types, its size, its enumeration, and the
//! concrete meta graphs drawn from it.
//!
//! States `H0..HK` form a DAG in which every `Hk` receives one link from each
//! predecessor `Hi`, `i < k`. Each link chooses one propagation from its
//! candidate set:
//!
//! | link                 | candidates                         |
//! |----------------------|------------------------------------|
//! | `k < K`, `i = k - 1` | all edge types, `I`                |
//! | `k < K`, `i < k - 1` | all edge types, `I`, `O`           |
//! | `k = K`, `i = K - 1` | edge types into the target type    |
//! | `k = K`, `i < K - 1` | edge types into the target, `I`, `O` |
//!
//! Candidates are ordered registry order first, then `I`, then `O`; argmax
//! ties resolve to the earliest candidate.

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hin::{EdgeTypeRegistry, HinError, HinGraph};

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("K must be ≥ 1")]
    InvalidK,
    #[error("no edge type targets {0}")]
    NoTargetEdgeTypes(String),
    #[error(transparent)]
    Hin(#[from] HinError),
    #[error("search space has {cardinality} meta graphs, above the cap of {cap}")]
    CapExceeded { cardinality: BigUint, cap: u64 },
    #[error("meta graph: {0}")]
    Parse(String),
}

/// One candidate propagation on a link.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Choice {
    EdgeType(String),
    Identity,
    Empty,
}

impl Choice {
    /// Parses the JSON token: `"I"`, `"O"` or an edge-type name.
    pub fn from_token(token: &str) -> Self {
        match token {
            "I" => Choice::Identity,
            "O" => Choice::Empty,
            other => Choice::EdgeType(other.to_string()),
        }
    }

    pub fn is_edge_type(&self) -> bool {
        matches!(self, Choice::EdgeType(_))
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::EdgeType(name) => f.write_str(name),
            Choice::Identity => f.write_str("I"),
            Choice::Empty => f.write_str("O"),
        }
    }
}

/// A DAG link from state `i` into state `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub k: usize,
    pub i: usize,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k, self.i)
    }
}

/// Links into `H1..HK`, sorted by `(k, i)`.
pub fn dag_links(k_states: usize) -> Vec<Link> {
    (1..=k_states)
        .flat_map(|k| (0..k).map(move |i| Link { k, i }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpaceSpec {
    k_states: usize,
    target_type: String,
    links: Vec<Link>,
    candidates: Vec<Vec<Choice>>,
}

impl SearchSpaceSpec {
    /// Builds the candidate table from the full edge-type list and the
    /// task-related subset (edge types into the target type).
    pub fn new(
        all_types: &[String],
        related_types: &[String],
        target_type: &str,
        k_states: usize,
    ) -> Result<Self, SpaceError> {
        if k_states == 0 {
            return Err(SpaceError::InvalidK);
        }
        if related_types.is_empty() {
            return Err(SpaceError::NoTargetEdgeTypes(target_type.to_string()));
        }
        let as_choices =
            |names: &[String]| names.iter().cloned().map(Choice::EdgeType).collect::<Vec<_>>();
        let links = dag_links(k_states);
        let candidates = links
            .iter()
            .map(|l| {
                let last = l.k == k_states;
                let adjacent = l.i + 1 == l.k;
                let mut c = if last {
                    as_choices(related_types)
                } else {
                    as_choices(all_types)
                };
                if !(last && adjacent) {
                    c.push(Choice::Identity);
                }
                if !adjacent {
                    c.push(Choice::Empty);
                }
                c
            })
            .collect();
        Ok(Self {
            k_states,
            target_type: target_type.to_string(),
            links,
            candidates,
        })
    }

    pub fn k_states(&self) -> usize {
        self.k_states
    }

    pub fn target_type(&self) -> &str {
        &self.target_type
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_index(&self, link: Link) -> Option<usize> {
        self.links.binary_search(&link).ok()
    }

    /// Candidates of the link at `idx` (position in [`links`](Self::links)).
    pub fn candidates(&self, idx: usize) -> &[Choice] {
        &self.candidates[idx]
    }

    pub fn candidates_of(&self, link: Link) -> Option<&[Choice]> {
        self.link_index(link).map(|i| self.candidates(i))
    }

    pub fn candidate_sizes(&self) -> Vec<usize> {
        self.candidates.iter().map(Vec::len).collect()
    }

    /// Exact number of assignments: the product of candidate-set sizes.
    pub fn cardinality(&self) -> BigUint {
        self.candidates
            .iter()
            .fold(BigUint::from(1u32), |acc, c| acc * BigUint::from(c.len()))
    }

    /// Streams every meta graph exactly once in lexicographic candidate order
    /// (first link most significant), refusing spaces larger than `cap`.
    pub fn enumerate(&self, cap: u64) -> Result<Enumeration<'_>, SpaceError> {
        let cardinality = self.cardinality();
        if cardinality > BigUint::from(cap) {
            return Err(SpaceError::CapExceeded { cardinality, cap });
        }
        Ok(Enumeration {
            spec: self,
            next: Some(vec![0; self.links.len()]),
        })
    }

    pub fn meta_graph(&self, indices: &[usize]) -> Result<MetaGraph, SpaceError> {
        if indices.len() != self.links.len() {
            return Err(SpaceError::Parse(format!(
                "expected {} choices, got {}",
                self.links.len(),
                indices.len()
            )));
        }
        let choices = indices
            .iter()
            .enumerate()
            .map(|(l, &m)| {
                self.candidates[l].get(m).cloned().ok_or_else(|| {
                    SpaceError::Parse(format!(
                        "candidate index {m} out of range on link {}",
                        self.links[l]
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(MetaGraph {
            k_states: self.k_states,
            target_type: self.target_type.clone(),
            links: self.links.clone(),
            choices,
        })
    }

    /// Candidate index of every link's choice, or an error if a choice is not a
    /// candidate of its link.
    pub fn indices_of(&self, mg: &MetaGraph) -> Result<Vec<usize>, SpaceError> {
        if mg.k_states != self.k_states || mg.target_type != self.target_type {
            return Err(SpaceError::Parse(format!(
                "meta graph has K={} target `{}`; space has K={} target `{}`",
                mg.k_states, mg.target_type, self.k_states, self.target_type
            )));
        }
        mg.choices
            .iter()
            .zip(&self.links)
            .enumerate()
            .map(|(l, (c, link))| {
                self.candidates[l].iter().position(|x| x == c).ok_or_else(|| {
                    SpaceError::Parse(format!(
                        "choice `{c}` on link {link} is not a candidate of that link"
                    ))
                })
            })
            .collect()
    }
}

/// Closed form of [`SearchSpaceSpec::cardinality`] in terms of the number of
/// edge types, the number of task-related edge types and `K`.
pub fn cardinality_closed_form(n_all: u64, n_related: u64, k_states: u32) -> BigUint {
    let b = |x: u64| BigUint::from(x);
    let k = k_states;
    b(n_all + 1).pow(k - 1)
        * b(n_all + 2).pow((k - 1) * k.saturating_sub(2) / 2)
        * b(n_related)
        * b(n_related + 2).pow(k - 1)
}

/// Builds the search space for `target_type` over a graph's edge types.
pub fn build_space(
    graph: &HinGraph,
    target_type: &str,
    k_states: usize,
) -> Result<SearchSpaceSpec, SpaceError> {
    build_space_from_registry(graph.registry(), target_type, k_states)
}

/// Same as [`build_space`] but needs only the schema.
pub fn build_space_from_registry(
    registry: &EdgeTypeRegistry,
    target_type: &str,
    k_states: usize,
) -> Result<SearchSpaceSpec, SpaceError> {
    let all: Vec<String> = registry.entries().iter().map(|e| e.name.clone()).collect();
    let related: Vec<String> = registry
        .entries()
        .iter()
        .filter(|e| e.dst_type == target_type)
        .map(|e| e.name.clone())
        .collect();
    SearchSpaceSpec::new(&all, &related, target_type, k_states)
}

#[derive(Debug)]
pub struct Enumeration<'a> {
    spec: &'a SearchSpaceSpec,
    next: Option<Vec<usize>>,
}

impl Iterator for Enumeration<'_> {
    type Item = MetaGraph;

    fn next(&mut self) -> Option<MetaGraph> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carry = true;
        for l in (0..succ.len()).rev() {
            succ[l] += 1;
            if succ[l] < self.spec.candidates[l].len() {
                carry = false;
                break;
            }
            succ[l] = 0;
        }
        if !carry {
            self.next = Some(succ);
        }
        Some(self.spec.meta_graph(&current).expect("indices in range"))
    }
}

/// One choice per DAG link.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MetaGraph {
    k_states: usize,
    target_type: String,
    links: Vec<Link>,
    choices: Vec<Choice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaGraphFile {
    #[serde(rename = "K")]
    pub k: usize,
    pub target_type: String,
    pub links: Vec<LinkChoice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkChoice {
    pub k: usize,
    pub i: usize,
    pub choice: String,
}

impl MetaGraph {
    pub fn k_states(&self) -> usize {
        self.k_states
    }

    pub fn target_type(&self) -> &str {
        &self.target_type
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn choices(&self) -> &[Choice] {
        &self.choices
    }

    pub fn choice(&self, link: Link) -> Option<&Choice> {
        self.links
            .binary_search(&link)
            .ok()
            .map(|i| &self.choices[i])
    }

    /// Number of non-`O` links into `Hk`.
    pub fn in_degree(&self, k: usize) -> usize {
        self.links
            .iter()
            .zip(&self.choices)
            .filter(|(l, c)| l.k == k && **c != Choice::Empty)
            .count()
    }

    /// True when every state receives exactly one non-empty link.
    pub fn is_meta_path(&self) -> bool {
        (1..=self.k_states).all(|k| self.in_degree(k) == 1)
    }

    pub fn to_file(&self) -> MetaGraphFile {
        MetaGraphFile {
            k: self.k_states,
            target_type: self.target_type.clone(),
            links: self
                .links
                .iter()
                .zip(&self.choices)
                .map(|(l, c)| LinkChoice {
                    k: l.k,
                    i: l.i,
                    choice: c.to_string(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("meta graph serializes")
    }

    /// Validates a parsed file against `spec`: every link present exactly
    /// once, every choice a known edge type and a candidate of its link.
    pub fn from_file(file: &MetaGraphFile, spec: &SearchSpaceSpec) -> Result<Self, SpaceError> {
        if file.k != spec.k_states {
            return Err(SpaceError::Parse(format!(
                "K = {} but the search space has K = {}",
                file.k, spec.k_states
            )));
        }
        if file.target_type != spec.target_type {
            return Err(SpaceError::Parse(format!(
                "target type `{}` but the search space targets `{}`",
                file.target_type, spec.target_type
            )));
        }
        let known: HashSet<&Choice> = spec.candidates.iter().flatten().collect();
        let mut by_link: BTreeMap<Link, Choice> = BTreeMap::new();
        for lc in &file.links {
            let link = Link { k: lc.k, i: lc.i };
            if spec.link_index(link).is_none() {
                return Err(SpaceError::Parse(format!("link {link} is not in the DAG")));
            }
            let choice = Choice::from_token(&lc.choice);
            if choice.is_edge_type() && !known.contains(&choice) {
                return Err(SpaceError::Parse(format!(
                    "unknown edge type `{}` on link {link}",
                    lc.choice
                )));
            }
            if by_link.insert(link, choice).is_some() {
                return Err(SpaceError::Parse(format!("link {link} appears twice")));
            }
        }
        let mut choices = Vec::with_capacity(spec.links.len());
        for (l, link) in spec.links.iter().enumerate() {
            let choice = by_link
                .remove(link)
                .ok_or_else(|| SpaceError::Parse(format!("missing link {link}")))?;
            if !spec.candidates[l].contains(&choice) {
                return Err(SpaceError::Parse(format!(
                    "choice `{choice}` on link {link} is not a candidate of that link"
                )));
            }
            choices.push(choice);
        }
        Ok(Self {
            k_states: spec.k_states,
            target_type: spec.target_type.clone(),
            links: spec.links.clone(),
            choices,
        })
    }

    pub fn from_json(text: &str, spec: &SearchSpaceSpec) -> Result<Self, SpaceError> {
        let file: MetaGraphFile =
            serde_json::from_str(text).map_err(|e| SpaceError::Parse(e.to_string()))?;
        Self::from_file(&file, spec)
    }

    /// Graphviz rendering: nodes `H0..HK`, one edge per non-`O` link.
    pub fn to_dot(&self, registry: &EdgeTypeRegistry) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "digraph meta_graph {{");
        let _ = writeln!(s, "  rankdir=LR;");
        let _ = writeln!(s, "  node [shape=circle];");
        for k in 0..=self.k_states {
            if k == self.k_states {
                let _ = writeln!(
                    s,
                    "  H{k} [label=\"H{k}\", shape=doublecircle, xlabel=\"{}\"];",
                    escape(&self.target_type)
                );
            } else {
                let _ = writeln!(s, "  H{k} [label=\"H{k}\"];");
            }
        }
        for (l, c) in self.links.iter().zip(&self.choices) {
            match c {
                Choice::Empty => {}
                Choice::Identity => {
                    let _ = writeln!(s, "  H{} -> H{} [label=\"I\", style=dashed];", l.i, l.k);
                }
                Choice::EdgeType(name) => {
                    let tooltip = registry
                        .get(name)
                        .map(|e| format!(", tooltip=\"{}→{}\"", escape(&e.src_type), escape(&e.dst_type)))
                        .unwrap_or_default();
                    let _ = writeln!(
                        s,
                        "  H{} -> H{} [label=\"{}\"{tooltip}];",
                        l.i,
                        l.k,
                        escape(name)
                    );
                }
            }
        }
        let _ = writeln!(s, "}}");
        s
    }
}

/// Exports a meta graph as Graphviz DOT.
pub fn export_dot(mg: &MetaGraph, registry: &EdgeTypeRegistry) -> String {
    mg.to_dot(registry)
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
