use rand::Rng;

use super::AdamState;
use crate::linalg::DenseMatrix;

/// Trainable ω: per-type projections, the shared hidden weight `Θ`, and an
/// optional classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub(crate) proj_weights: Vec<DenseMatrix>,
    pub(crate) proj_biases: Vec<DenseMatrix>,
    pub(crate) theta: DenseMatrix,
    pub(crate) head: Option<DenseMatrix>,
    optimizer: AdamState,
    generation: u64,
}

/// Gradients with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub proj_weights: Vec<DenseMatrix>,
    pub proj_biases: Vec<DenseMatrix>,
    pub theta: DenseMatrix,
    pub head: Option<DenseMatrix>,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let values = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    DenseMatrix::from_vec(rows, cols, values).expect("finite init")
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases. `n_classes` adds the output head.
    pub fn init(
        feature_dims: &[usize],
        hidden: usize,
        n_classes: Option<usize>,
        rng: &mut impl Rng,
    ) -> Self {
        let proj_weights = feature_dims.iter().map(|&d| glorot(d, hidden, rng)).collect();
        let proj_biases = feature_dims
            .iter()
            .map(|_| DenseMatrix::zeros(1, hidden))
            .collect();
        let theta = glorot(hidden, hidden, rng);
        let head = n_classes.map(|c| glorot(hidden, c, rng));
        Self::from_parts(proj_weights, proj_biases, theta, head)
    }

    /// Assembles parameters from explicit tensors (biases are `1 × d`).
    pub fn from_parts(
        proj_weights: Vec<DenseMatrix>,
        proj_biases: Vec<DenseMatrix>,
        theta: DenseMatrix,
        head: Option<DenseMatrix>,
    ) -> Self {
        assert_eq!(proj_weights.len(), proj_biases.len());
        let d = theta.n_rows();
        assert_eq!(theta.n_cols(), d, "Θ must be square");
        for (w, b) in proj_weights.iter().zip(&proj_biases) {
            assert_eq!(w.n_cols(), d);
            assert_eq!(b.shape(), (1, d));
        }
        if let Some(h) = &head {
            assert_eq!(h.n_rows(), d);
        }
        Self {
            proj_weights,
            proj_biases,
            theta,
            head,
            optimizer: AdamState::default(),
            generation: 0,
        }
    }

    pub fn hidden(&self) -> usize {
        self.theta.n_rows()
    }

    pub fn n_types(&self) -> usize {
        self.proj_weights.len()
    }

    pub fn proj_weight(&self, t: usize) -> &DenseMatrix {
        &self.proj_weights[t]
    }

    pub fn proj_bias(&self, t: usize) -> &DenseMatrix {
        &self.proj_biases[t]
    }

    pub fn theta(&self) -> &DenseMatrix {
        &self.theta
    }

    pub fn head(&self) -> Option<&DenseMatrix> {
        self.head.as_ref()
    }

    /// Incremented on every mutation; traces remember the value they saw.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.optimizer
    }

    /// All tensors in canonical order: `W_t, b_t` per type, `Θ`, head.
    pub fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut out = Vec::new();
        for (w, b) in self.proj_weights.iter().zip(&self.proj_biases) {
            out.push(w);
            out.push(b);
        }
        out.push(&self.theta);
        out.extend(self.head.as_ref());
        out
    }

    /// Mutable access invalidates existing traces.
    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.generation += 1;
        let mut out = Vec::new();
        for (w, b) in self.proj_weights.iter_mut().zip(&mut self.proj_biases) {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.theta);
        out.extend(self.head.as_mut());
        out
    }

    pub(crate) fn apply_adam(&mut self, grads: &ParamGrads, lr: f64, weight_decay: f64) {
        let grad_bufs: Vec<&[f64]> = grads.tensors().into_iter().map(DenseMatrix::values).collect();
        let mut optimizer = std::mem::take(&mut self.optimizer);
        {
            let mut bufs: Vec<&mut [f64]> = self
                .tensors_mut()
                .into_iter()
                .map(DenseMatrix::values_mut)
                .collect();
            optimizer.update(&mut bufs, &grad_bufs, lr, weight_decay);
        }
        self.optimizer = optimizer;
    }
}

impl ParamGrads {
    pub fn tensors(&self) -> Vec<&DenseMatrix> {
        let mut out = Vec::new();
        for (w, b) in self.proj_weights.iter().zip(&self.proj_biases) {
            out.push(w);
            out.push(b);
        }
        out.push(&self.theta);
        out.extend(self.head.as_ref());
        out
    }

    /// Elementwise sum, used when several objectives share ω.
    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.proj_weights.iter_mut().zip(&other.proj_weights) {
            a.add_scaled_assign(1.0, b).expect("same layout");
        }
        for (a, b) in self.proj_biases.iter_mut().zip(&other.proj_biases) {
            a.add_scaled_assign(1.0, b).expect("same layout");
        }
        self.theta.add_scaled_assign(1.0, &other.theta).expect("same layout");
        if let (Some(a), Some(b)) = (self.head.as_mut(), other.head.as_ref()) {
            a.add_scaled_assign(1.0, b).expect("same layout");
        }
    }
}
