use rand::Rng;

use crate::model::AdamState;
use crate::space::{MetaGraph, SearchSpaceSpec};

/// Softmax of one link's architecture weights, with max subtraction.
pub fn compute_alpha(lambda: &[f64]) -> Vec<f64> {
    let mut a = lambda.to_vec();
    crate::linalg::dense::softmax_in_place(&mut a);
    a
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-link architecture weights `λ` and their optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchParams {
    lambdas: Vec<Vec<f64>>,
    optimizer: AdamState,
}

impl ArchParams {
    /// `λ = 0` plus uniform noise in `[-1e-3, 1e-3]`.
    pub fn init(spec: &SearchSpaceSpec, rng: &mut impl Rng) -> Self {
        let lambdas = spec
            .candidate_sizes()
            .into_iter()
            .map(|n| (0..n).map(|_| rng.random_range(-1e-3..=1e-3)).collect())
            .collect();
        Self::from_lambdas(lambdas)
    }

    pub fn zeros(spec: &SearchSpaceSpec) -> Self {
        Self::from_lambdas(
            spec.candidate_sizes()
                .into_iter()
                .map(|n| vec![0.0; n])
                .collect(),
        )
    }

    pub fn from_lambdas(lambdas: Vec<Vec<f64>>) -> Self {
        Self {
            lambdas,
            optimizer: AdamState::default(),
        }
    }

    pub fn n_links(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambda(&self, link: usize) -> &[f64] {
        &self.lambdas[link]
    }

    pub fn lambda_mut(&mut self, link: usize) -> &mut [f64] {
        &mut self.lambdas[link]
    }

    pub fn lambdas(&self) -> &[Vec<f64>] {
        &self.lambdas
    }

    pub fn alpha(&self, link: usize) -> Vec<f64> {
        compute_alpha(&self.lambdas[link])
    }

    pub fn alphas(&self) -> Vec<Vec<f64>> {
        self.lambdas.iter().map(|l| compute_alpha(l)).collect()
    }

    /// Adam step on λ without weight decay.
    pub fn apply_gradient(&mut self, grads: &[Vec<f64>], lr: f64) {
        let grad_bufs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        let mut bufs: Vec<&mut [f64]> = self.lambdas.iter_mut().map(Vec::as_mut_slice).collect();
        self.optimizer.update(&mut bufs, &grad_bufs, lr, 0.0);
    }
}

/// Per-link argmax of α; ties go to the earliest candidate.
pub fn derive(arch: &ArchParams, spec: &SearchSpaceSpec) -> MetaGraph {
    let indices: Vec<usize> = arch.alphas().iter().map(|a| argmax(a)).collect();
    spec.meta_graph(&indices).expect("one λ vector per link")
}
