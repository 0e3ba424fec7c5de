use super::ModelError;
use crate::hin::HinGraph;
use crate::linalg::{DenseMatrix, Propagator};
use crate::space::{dag_links, Choice, Link, MetaGraph};

/// One weighted propagation on a link.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub choice: Choice,
    pub coefficient: f64,
}

/// Branches for every link of a `K`-state DAG, links sorted by `(k, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DagAssignment {
    k_states: usize,
    links: Vec<Link>,
    branches: Vec<Vec<Branch>>,
}

impl DagAssignment {
    pub fn new(k_states: usize, branches: Vec<Vec<Branch>>) -> Result<Self, ModelError> {
        let links = dag_links(k_states);
        if branches.len() != links.len() {
            return Err(ModelError::Assignment(format!(
                "{} links need branches, got {}",
                links.len(),
                branches.len()
            )));
        }
        if let Some(b) = branches.iter().flatten().find(|b| !b.coefficient.is_finite()) {
            return Err(ModelError::Assignment(format!(
                "non-finite coefficient on `{}`",
                b.choice
            )));
        }
        Ok(Self {
            k_states,
            links,
            branches,
        })
    }

    /// One branch per link, each with the same coefficient.
    pub fn from_meta_graph(mg: &MetaGraph, coefficient: f64) -> Self {
        let branches = mg
            .choices()
            .iter()
            .map(|c| {
                vec![Branch {
                    choice: c.clone(),
                    coefficient,
                }]
            })
            .collect();
        Self::new(mg.k_states(), branches).expect("meta graph covers its DAG")
    }

    pub fn k_states(&self) -> usize {
        self.k_states
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn branches(&self, link_idx: usize) -> &[Branch] {
        &self.branches[link_idx]
    }

    pub fn branches_mut(&mut self, link_idx: usize) -> &mut Vec<Branch> {
        &mut self.branches[link_idx]
    }

    /// Number of edge-type branches, i.e. spmm calls per forward pass.
    pub fn propagation_count(&self) -> usize {
        self.branches
            .iter()
            .flatten()
            .filter(|b| b.choice.is_edge_type())
            .count()
    }
}

/// Cached states of one DAG pass.
#[derive(Debug, Clone)]
pub struct DagTrace {
    /// `H0..HK`.
    pub states: Vec<DenseMatrix>,
    /// Step output of every branch of every link; `None` for `O`.
    pub steps: Vec<Vec<Option<DenseMatrix>>>,
    /// `relu(HK)`.
    pub output: DenseMatrix,
}

fn resolve<'g>(graph: &'g HinGraph, choice: &Choice) -> Result<Propagator<'g>, ModelError> {
    Ok(match choice {
        Choice::EdgeType(name) => Propagator::Sparse(
            graph
                .adjacency_by_name(name)
                .ok_or_else(|| ModelError::UnknownEdgeType(name.clone()))?,
        ),
        Choice::Identity => Propagator::Identity,
        Choice::Empty => Propagator::Empty,
    })
}

/// Runs the DAG. Only the listed branches are computed.
pub fn dag_forward(
    h0: &DenseMatrix,
    assignment: &DagAssignment,
    graph: &HinGraph,
) -> Result<DagTrace, ModelError> {
    let (n, d) = h0.shape();
    let mut states = vec![h0.clone()];
    let mut steps = Vec::with_capacity(assignment.links.len());
    let mut link_idx = 0;
    for k in 1..=assignment.k_states {
        let mut h = DenseMatrix::zeros(n, d);
        while link_idx < assignment.links.len() && assignment.links[link_idx].k == k {
            let i = assignment.links[link_idx].i;
            let mut link_steps = Vec::with_capacity(assignment.branches[link_idx].len());
            for b in &assignment.branches[link_idx] {
                match resolve(graph, &b.choice)? {
                    Propagator::Empty => link_steps.push(None),
                    op => {
                        let step = op.apply(&states[i])?;
                        h.add_scaled_assign(b.coefficient, &step)?;
                        link_steps.push(Some(step));
                    }
                }
            }
            steps.push(link_steps);
            link_idx += 1;
        }
        states.push(h);
    }
    let output = states.last().expect("K ≥ 1").relu();
    Ok(DagTrace {
        states,
        steps,
        output,
    })
}

/// Back-propagates `∂L/∂Z` through the DAG. Returns `∂L/∂H0` and, for every
/// branch, `∂L/∂coefficient = ⟨∂L/∂Hk, step⟩`.
pub fn dag_backward(
    trace: &DagTrace,
    assignment: &DagAssignment,
    graph: &HinGraph,
    d_output: &DenseMatrix,
) -> Result<(DenseMatrix, Vec<Vec<f64>>), ModelError> {
    let k_states = assignment.k_states;
    let (n, d) = trace.states[0].shape();
    let mut d_states: Vec<DenseMatrix> = (0..=k_states).map(|_| DenseMatrix::zeros(n, d)).collect();
    d_states[k_states] = DenseMatrix::relu_grad(&trace.states[k_states], d_output)?;
    let mut coeff_grads: Vec<Vec<f64>> = assignment
        .branches
        .iter()
        .map(|b| vec![0.0; b.len()])
        .collect();
    for link_idx in (0..assignment.links.len()).rev() {
        let Link { k, i } = assignment.links[link_idx];
        let (lower, upper) = d_states.split_at_mut(k);
        let d_k = &upper[0];
        for (b_idx, b) in assignment.branches[link_idx].iter().enumerate() {
            let Some(step) = &trace.steps[link_idx][b_idx] else {
                continue;
            };
            coeff_grads[link_idx][b_idx] = d_k.dot(step)?;
            if let Some(back) = resolve(graph, &b.choice)?.apply_adjoint(d_k)? {
                lower[i].add_scaled_assign(b.coefficient, &back)?;
            }
        }
    }
    Ok((d_states.swap_remove(0), coeff_grads))
}
