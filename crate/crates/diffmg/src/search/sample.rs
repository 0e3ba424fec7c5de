use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::{argmax, ArchParams};
use crate::model::{Branch, DagAssignment};
use crate::space::SearchSpaceSpec;

/// The branch picked on one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledLink {
    pub index: usize,
    /// `α` of the selected candidate; the forward pass scales the step by it.
    pub coefficient: f64,
    /// True when the pick came from uniform exploration rather than argmax.
    pub explored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    pub links: Vec<SampledLink>,
}

impl SampledPath {
    pub fn indices(&self) -> Vec<usize> {
        self.links.iter().map(|l| l.index).collect()
    }

    /// Single-branch assignment for the model.
    pub fn to_assignment(&self, spec: &SearchSpaceSpec) -> DagAssignment {
        let branches = self
            .links
            .iter()
            .enumerate()
            .map(|(l, s)| {
                vec![Branch {
                    choice: spec.candidates(l)[s.index].clone(),
                    coefficient: s.coefficient,
                }]
            })
            .collect();
        DagAssignment::new(spec.k_states(), branches).expect("path covers the DAG")
    }
}

/// ε-greedy pick per link: argmax with probability `1 − ε`, otherwise a
/// uniformly random candidate. One uniform draw is consumed per link even
/// when `ε = 0`, so the random stream does not depend on `ε`.
pub fn sample_path(arch: &ArchParams, epsilon: f64, rng: &mut impl Rng) -> SampledPath {
    let links = arch
        .alphas()
        .into_iter()
        .map(|alpha| {
            let explore = rng.random::<f64>() < epsilon;
            let index = if explore {
                rng.random_range(0..alpha.len())
            } else {
                argmax(&alpha)
            };
            SampledLink {
                index,
                coefficient: alpha[index],
                explored: explore,
            }
        })
        .collect();
    SampledPath { links }
}

/// `∂L/∂λ` for one link when only candidate `selected` was evaluated.
///
/// `coeff_grad` is `∂L/∂α*`, the gradient of the loss with respect to the
/// selected coefficient. Only the selected weight receives gradient; the
/// softmax Jacobian then spreads it over all of `λ`:
/// `∂L/∂λ_j = g · α_s · (δ_sj − α_j)`.
pub fn lambda_grad(coeff_grad: f64, alpha: &[f64], selected: usize) -> Vec<f64> {
    let a_s = alpha[selected];
    alpha
        .iter()
        .enumerate()
        .map(|(j, &a_j)| {
            let delta = if j == selected { 1.0 } else { 0.0 };
            coeff_grad * a_s * (delta - a_j)
        })
        .collect()
}

/// `∂L/∂λ` for the full mixture, given `∂L/∂α_m` for every candidate.
pub fn mixture_lambda_grad(coeff_grads: &[f64], alpha: &[f64]) -> Vec<f64> {
    let weighted: f64 = coeff_grads.iter().zip(alpha).map(|(g, a)| g * a).sum();
    alpha
        .iter()
        .zip(coeff_grads)
        .map(|(a, g)| a * (g - weighted))
        .collect()
}
