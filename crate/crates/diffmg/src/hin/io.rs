use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;

use super::{
    EdgeType, EdgeTypeRegistry, FeatureSet, HinError, HinGraph, NodeClassData, Pair, RecData,
    TaskData,
};
use crate::linalg::DenseMatrix;

fn read(dir: &Path, name: &str) -> Result<String, HinError> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|source| HinError::Io { path, source })
}

fn read_optional(dir: &Path, name: &str) -> Result<Option<String>, HinError> {
    if dir.join(name).exists() {
        read(dir, name).map(Some)
    } else {
        Ok(None)
    }
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn fields<'a>(file: &str, line: usize, text: &'a str, n: usize) -> Result<Vec<&'a str>, HinError> {
    let parts: Vec<&str> = text.split('\t').collect();
    if parts.len() != n {
        return Err(HinError::parse(
            file,
            line,
            format!("expected {n} tab-separated fields, found {}", parts.len()),
        ));
    }
    Ok(parts)
}

fn node_id(file: &str, line: usize, text: &str, n: usize) -> Result<usize, HinError> {
    let id: usize = text
        .trim()
        .parse()
        .map_err(|_| HinError::parse(file, line, format!("invalid node id `{text}`")))?;
    if id >= n {
        return Err(HinError::parse(
            file,
            line,
            format!("node id out of range: {id} (N = {n})"),
        ));
    }
    Ok(id)
}

/// Loads a dataset directory. Adjacencies come back row-normalized; missing
/// features default to one-hot node IDs per type.
pub fn load_hin(dir: impl AsRef<Path>) -> Result<(HinGraph, FeatureSet, TaskData), HinError> {
    let dir = dir.as_ref();

    let text = read(dir, "node_types.tsv")?;
    let mut typed: Vec<(usize, usize, String)> = Vec::new();
    for (ln, l) in lines(&text) {
        let f = fields("node_types.tsv", ln, l, 2)?;
        let id: usize = f[0].trim().parse().map_err(|_| {
            HinError::parse("node_types.tsv", ln, format!("invalid node id `{}`", f[0]))
        })?;
        typed.push((id, ln, f[1].trim().to_string()));
    }
    typed.sort_by_key(|t| t.0);
    let n = typed.len();
    let mut type_names: Vec<String> = Vec::new();
    let mut node_types = Vec::with_capacity(n);
    for (expected, (id, ln, ty)) in typed.iter().enumerate() {
        if *id != expected {
            return Err(HinError::parse(
                "node_types.tsv",
                *ln,
                format!("node ids must be contiguous 0..N-1; found {id} where {expected} was expected"),
            ));
        }
        let t = match type_names.iter().position(|s| s == ty) {
            Some(t) => t,
            None => {
                type_names.push(ty.clone());
                type_names.len() - 1
            }
        };
        node_types.push(t);
    }

    let text = read(dir, "edge_types.tsv")?;
    let mut entries = Vec::new();
    for (ln, l) in lines(&text) {
        let f = fields("edge_types.tsv", ln, l, 3)?;
        for ty in [f[1], f[2]] {
            if !type_names.iter().any(|s| s == ty.trim()) {
                return Err(HinError::parse(
                    "edge_types.tsv",
                    ln,
                    format!("node type `{ty}` has no nodes"),
                ));
            }
        }
        entries.push(EdgeType {
            name: f[0].trim().to_string(),
            src_type: f[1].trim().to_string(),
            dst_type: f[2].trim().to_string(),
        });
    }
    let registry = EdgeTypeRegistry::new(entries)?;

    let text = read(dir, "edges.tsv")?;
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (ln, l) in lines(&text) {
        let f = fields("edges.tsv", ln, l, 3)?;
        let src = node_id("edges.tsv", ln, f[0], n)?;
        let dst = node_id("edges.tsv", ln, f[1], n)?;
        let r = registry.index_of(f[2].trim()).ok_or_else(|| {
            HinError::parse("edges.tsv", ln, format!("unknown edge type `{}`", f[2]))
        })?;
        let e = &registry.entries()[r];
        if type_names[node_types[src]] != e.src_type || type_names[node_types[dst]] != e.dst_type {
            return Err(HinError::Schema(format!(
                "edges.tsv:{ln}: edge {src}->{dst} of type `{}` connects {}->{} but the type requires {}->{}",
                e.name,
                type_names[node_types[src]],
                type_names[node_types[dst]],
                e.src_type,
                e.dst_type
            )));
        }
        if !seen.insert((src, dst, r)) {
            warn!("edges.tsv:{ln}: duplicate edge {src}->{dst} ({}) collapsed", e.name);
            continue;
        }
        edges.push((src, dst, r));
    }
    let graph = HinGraph::from_edges(type_names, node_types, registry, &edges)?;

    let features = match read_optional(dir, "features.tsv")? {
        Some(text) => parse_features(&graph, &text)?,
        None => FeatureSet::one_hot(&graph),
    };

    let task = if dir.join("labels.tsv").exists() {
        TaskData::NodeClass(load_nodeclass(dir, &graph)?)
    } else if dir.join("task.txt").exists() {
        TaskData::Rec(load_rec(dir, &graph)?)
    } else {
        return Err(HinError::Task(
            "directory has neither labels.tsv nor task.txt".into(),
        ));
    };
    Ok((graph, features, task))
}

fn parse_features(graph: &HinGraph, text: &str) -> Result<FeatureSet, HinError> {
    let n = graph.n_nodes();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    for (ln, l) in lines(text) {
        let f = fields("features.tsv", ln, l, 2)?;
        let v = node_id("features.tsv", ln, f[0], n)?;
        let values = f[1]
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| HinError::parse("features.tsv", ln, format!("invalid value `{s}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(HinError::parse("features.tsv", ln, "empty feature vector"));
        }
        if rows[v].replace(values).is_some() {
            return Err(HinError::parse(
                "features.tsv",
                ln,
                format!("node {v} has more than one feature row"),
            ));
        }
    }
    let mut blocks = Vec::new();
    let mut members = Vec::new();
    for (t, name) in graph.type_names().iter().enumerate() {
        let ids = graph.nodes_of_type(t);
        let present = ids.iter().filter(|&&v| rows[v].is_some()).count();
        if present == 0 {
            warn!("features.tsv has no rows for type `{name}`; using one-hot IDs");
            blocks.push(DenseMatrix::identity(ids.len()));
        } else if present < ids.len() {
            return Err(HinError::Schema(format!(
                "features.tsv covers {present} of {} nodes of type `{name}`",
                ids.len()
            )));
        } else {
            let dim = rows[ids[0]].as_ref().map_or(0, Vec::len);
            let mut flat = Vec::with_capacity(ids.len() * dim);
            for &v in &ids {
                let r = rows[v].as_ref().expect("checked above");
                if r.len() != dim {
                    return Err(HinError::Schema(format!(
                        "node {v} has {} features; type `{name}` uses {dim}",
                        r.len()
                    )));
                }
                flat.extend_from_slice(r);
            }
            blocks.push(
                DenseMatrix::from_vec(ids.len(), dim, flat)
                    .map_err(|e| HinError::Schema(e.to_string()))?,
            );
        }
        members.push(ids);
    }
    FeatureSet::new(graph, blocks, members)
}

fn load_split(dir: &Path, name: &str, n: usize) -> Result<Vec<usize>, HinError> {
    let text = read(dir, name)?;
    lines(&text)
        .map(|(ln, l)| node_id(name, ln, l, n))
        .collect()
}

fn load_nodeclass(dir: &Path, graph: &HinGraph) -> Result<NodeClassData, HinError> {
    let n = graph.n_nodes();
    let text = read(dir, "labels.tsv")?;
    let mut labels = BTreeMap::new();
    for (ln, l) in lines(&text) {
        let f = fields("labels.tsv", ln, l, 2)?;
        let v = node_id("labels.tsv", ln, f[0], n)?;
        let c: usize = f[1].trim().parse().map_err(|_| {
            HinError::parse("labels.tsv", ln, format!("invalid class id `{}`", f[1]))
        })?;
        if labels.insert(v, c).is_some() {
            return Err(HinError::parse("labels.tsv", ln, format!("node {v} labeled twice")));
        }
    }
    NodeClassData::from_parts(
        graph,
        labels,
        load_split(dir, "split_train.txt", n)?,
        load_split(dir, "split_val.txt", n)?,
        load_split(dir, "split_test.txt", n)?,
    )
}

fn load_pairs(dir: &Path, name: &str, n: usize) -> Result<Vec<Pair>, HinError> {
    let text = read(dir, name)?;
    lines(&text)
        .map(|(ln, l)| {
            let f = fields(name, ln, l, 3)?;
            let label = match f[2].trim() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(HinError::parse(name, ln, format!("label must be 0 or 1, got `{other}`")))
                }
            };
            Ok(Pair {
                src: node_id(name, ln, f[0], n)?,
                dst: node_id(name, ln, f[1], n)?,
                label,
            })
        })
        .collect()
}

fn load_rec(dir: &Path, graph: &HinGraph) -> Result<RecData, HinError> {
    let text = read(dir, "task.txt")?;
    let mut kv: HashMap<&str, &str> = HashMap::new();
    for (ln, l) in lines(&text) {
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| HinError::parse("task.txt", ln, "expected key=value"))?;
        kv.insert(k.trim(), v.trim());
    }
    let get = |k: &str| {
        kv.get(k)
            .map(|s| s.to_string())
            .ok_or_else(|| HinError::Task(format!("task.txt is missing `{k}`")))
    };
    let n = graph.n_nodes();
    let data = RecData {
        source_type: get("source_type")?,
        target_type: get("target_type")?,
        train: load_pairs(dir, "pairs_train.tsv", n)?,
        val: load_pairs(dir, "pairs_val.tsv", n)?,
        test: load_pairs(dir, "pairs_test.tsv", n)?,
    };
    TaskData::Rec(data.clone()).validate(graph)?;
    Ok(data)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), HinError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| HinError::Io { path, source })
}

/// Writes a dataset in the directory layout read by [`load_hin`]. Output is
/// a pure function of the inputs.
pub fn write_hin(
    dir: impl AsRef<Path>,
    graph: &HinGraph,
    features: Option<&FeatureSet>,
    task: &TaskData,
) -> Result<(), HinError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| HinError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut s = String::new();
    for v in 0..graph.n_nodes() {
        let _ = writeln!(s, "{v}\t{}", graph.node_type_name(v));
    }
    write(dir, "node_types.tsv", &s)?;

    s.clear();
    for e in graph.registry().entries() {
        let _ = writeln!(s, "{}\t{}\t{}", e.name, e.src_type, e.dst_type);
    }
    write(dir, "edge_types.tsv", &s)?;

    s.clear();
    for (src, dst, r) in graph.edges() {
        let _ = writeln!(s, "{src}\t{dst}\t{}", graph.registry().entries()[r].name);
    }
    write(dir, "edges.tsv", &s)?;

    if let Some(fs_) = features {
        let mut rows: Vec<Option<String>> = vec![None; graph.n_nodes()];
        for t in 0..fs_.n_types() {
            let block = fs_.block(t);
            for (r, &v) in fs_.members(t).iter().enumerate() {
                let vals: Vec<String> = block.row(r).iter().map(|x| format!("{x:?}")).collect();
                rows[v] = Some(vals.join(" "));
            }
        }
        s.clear();
        for (v, r) in rows.iter().enumerate() {
            if let Some(r) = r {
                let _ = writeln!(s, "{v}\t{r}");
            }
        }
        write(dir, "features.tsv", &s)?;
    }

    match task {
        TaskData::NodeClass(d) => {
            s.clear();
            for (v, c) in &d.labels {
                let _ = writeln!(s, "{v}\t{c}");
            }
            write(dir, "labels.tsv", &s)?;
            for (name, split) in [
                ("split_train.txt", &d.train),
                ("split_val.txt", &d.val),
                ("split_test.txt", &d.test),
            ] {
                s.clear();
                for v in split {
                    let _ = writeln!(s, "{v}");
                }
                write(dir, name, &s)?;
            }
        }
        TaskData::Rec(d) => {
            write(
                dir,
                "task.txt",
                &format!("source_type={}\ntarget_type={}\n", d.source_type, d.target_type),
            )?;
            for (name, split) in [
                ("pairs_train.tsv", &d.train),
                ("pairs_val.tsv", &d.val),
                ("pairs_test.tsv", &d.test),
            ] {
                s.clear();
                for p in split {
                    let _ = writeln!(s, "{}\t{}\t{}", p.src, p.dst, u8::from(p.label));
                }
                write(dir, name, &s)?;
            }
        }
    }
    Ok(())
}
