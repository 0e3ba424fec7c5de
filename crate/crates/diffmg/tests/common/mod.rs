#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use diffmg::hin::{
    load_hin, EdgeType, EdgeTypeRegistry, FeatureSet, HinGraph, NodeClassData, Pair, RecData,
    TaskData,
};
use diffmg::linalg::DenseMatrix;
use diffmg::search::ArchParams;
use diffmg::space::SearchSpaceSpec;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub struct Instance {
    pub graph: HinGraph,
    pub features: FeatureSet,
    pub task: TaskData,
}

pub fn data_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

pub fn load(name: &str) -> Instance {
    let (graph, features, task) = load_hin(data_dir(name)).expect("shipped data loads");
    Instance {
        graph,
        features,
        task,
    }
}

fn edge(name: &str, src: &str, dst: &str) -> EdgeType {
    EdgeType {
        name: name.into(),
        src_type: src.into(),
        dst_type: dst.into(),
    }
}

/// A random typed graph with at most 18 nodes: target type `T`, neighbour
/// types `A` and `B`. Recommendation instances score `T`–`A` pairs.
pub fn random_instance(rng: &mut ChaCha8Rng, rec: bool) -> Instance {
    let counts = [rng.random_range(5..=8), rng.random_range(3..=6), rng.random_range(2..=4)];
    let type_names: Vec<String> = ["T", "A", "B"].map(String::from).to_vec();
    let node_types: Vec<usize> = (0..3).flat_map(|t| std::iter::repeat_n(t, counts[t])).collect();
    let registry = EdgeTypeRegistry::new(vec![
        edge("A-T", "A", "T"),
        edge("T-A", "T", "A"),
        edge("B-T", "B", "T"),
        edge("T-T", "T", "T"),
        edge("B-A", "B", "A"),
    ])
    .unwrap();
    let members: Vec<Vec<usize>> = (0..3)
        .map(|t| (0..node_types.len()).filter(|&v| node_types[v] == t).collect())
        .collect();
    let mut edges = Vec::new();
    for (r, e) in registry.entries().iter().enumerate() {
        let s = type_names.iter().position(|n| *n == e.src_type).unwrap();
        let d = type_names.iter().position(|n| *n == e.dst_type).unwrap();
        for &u in &members[s] {
            for &v in &members[d] {
                if u != v && rng.random::<f64>() < 0.4 {
                    edges.push((u, v, r));
                }
            }
        }
    }
    let graph = HinGraph::from_edges(type_names, node_types, registry, &edges).unwrap();
    let blocks = members
        .iter()
        .map(|ids| {
            let dim = rng.random_range(2..=4);
            let values = (0..ids.len() * dim)
                .map(|_| StandardNormal.sample(rng))
                .collect();
            DenseMatrix::from_vec(ids.len(), dim, values).unwrap()
        })
        .collect();
    let features = FeatureSet::new(&graph, blocks, members.clone()).unwrap();

    let task = if rec {
        let mut pairs: Vec<(usize, usize)> = members[0]
            .iter()
            .flat_map(|&u| members[1].iter().map(move |&v| (u, v)))
            .collect();
        pairs.shuffle(rng);
        let third = pairs.len() / 3;
        let mut split = |chunk: &[(usize, usize)]| -> Vec<Pair> {
            chunk
                .iter()
                .enumerate()
                .map(|(i, &(src, dst))| Pair {
                    src,
                    dst,
                    label: if i < 2 { i == 0 } else { rng.random() },
                })
                .collect()
        };
        TaskData::Rec(RecData {
            source_type: "T".into(),
            target_type: "A".into(),
            train: split(&pairs[..third]),
            val: split(&pairs[third..2 * third]),
            test: split(&pairs[2 * third..]),
        })
    } else {
        let c = rng.random_range(2..=3);
        let mut nodes = members[0].clone();
        nodes.shuffle(rng);
        let labels: BTreeMap<usize, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, if i < c { i } else { rng.random_range(0..c) }))
            .collect();
        let n = nodes.len();
        TaskData::NodeClass(
            NodeClassData::from_parts(
                &graph,
                labels,
                nodes[..n - 2].to_vec(),
                vec![nodes[n - 2]],
                vec![nodes[n - 1]],
            )
            .unwrap(),
        )
    };
    task.validate(&graph).unwrap();
    Instance {
        graph,
        features,
        task,
    }
}

/// λ whose entries are a shuffled ladder `0, step, 2·step, ...`, so every
/// link has a unique argmax well clear of the runner-up.
pub fn ladder_arch(spec: &SearchSpaceSpec, step: f64, rng: &mut ChaCha8Rng) -> ArchParams {
    ArchParams::from_lambdas(
        spec.candidate_sizes()
            .into_iter()
            .map(|n| {
                let mut l: Vec<f64> = (0..n).map(|m| step * m as f64).collect();
                l.shuffle(rng);
                l
            })
            .collect(),
    )
}

/// Uniformly random candidate index per link.
pub fn random_path(spec: &SearchSpaceSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
    spec.candidate_sizes()
        .into_iter()
        .map(|n| rng.random_range(0..n))
        .collect()
}
