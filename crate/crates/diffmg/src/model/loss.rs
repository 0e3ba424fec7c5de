use std::collections::BTreeMap;

use super::ModelError;
use crate::hin::Pair;
use crate::linalg::dense::{log_sigmoid, sigmoid, softmax_in_place};
use crate::linalg::DenseMatrix;

/// Summed cross-entropy and its gradients.
#[derive(Debug, Clone)]
pub struct NodeClassLoss {
    pub loss: f64,
    /// `Z W_o` for every node.
    pub logits: DenseMatrix,
    pub d_output: DenseMatrix,
    pub d_head: DenseMatrix,
}

/// `−Σ_{v ∈ nodes} log softmax(Z W_o)[v, y_v]`.
pub fn loss_nodeclass(
    output: &DenseMatrix,
    head: &DenseMatrix,
    labels: &BTreeMap<usize, usize>,
    nodes: &[usize],
) -> Result<NodeClassLoss, ModelError> {
    if nodes.is_empty() {
        return Err(ModelError::EmptyNodeSet);
    }
    let logits = output.matmul(head)?;
    let mut d_logits = DenseMatrix::zeros(logits.n_rows(), logits.n_cols());
    let mut loss = 0.0;
    for &v in nodes {
        let y = *labels
            .get(&v)
            .ok_or_else(|| ModelError::Task(format!("node {v} is not labeled")))?;
        let row = logits.row(v);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        loss += log_z - row[y];
        let mut p = row.to_vec();
        softmax_in_place(&mut p);
        p[y] -= 1.0;
        for (dst, src) in d_logits.row_mut(v).iter_mut().zip(&p) {
            *dst += src;
        }
    }
    let d_head = output.t_matmul(&d_logits)?;
    let d_output = d_logits.matmul_t(head)?;
    Ok(NodeClassLoss {
        loss,
        logits,
        d_output,
        d_head,
    })
}

#[derive(Debug, Clone)]
pub struct RecLoss {
    pub loss: f64,
    /// `z_uᵀ z_v` per pair, in input order.
    pub scores: Vec<f64>,
    pub d_src: DenseMatrix,
    pub d_dst: DenseMatrix,
}

/// `−Σ_{pos} log σ(z_uᵀz_v) − Σ_{neg} log σ(−z_uᵀz_v)` with `z_u` read from
/// `z_src` and `z_v` from `z_dst`.
pub fn loss_rec(
    z_src: &DenseMatrix,
    z_dst: &DenseMatrix,
    pairs: &[Pair],
) -> Result<RecLoss, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::EmptyPairSet);
    }
    if z_src.shape() != z_dst.shape() {
        return Err(crate::linalg::LinalgError::Shape {
            op: "loss_rec",
            lhs: z_src.shape(),
            rhs: z_dst.shape(),
        }
        .into());
    }
    let mut d_src = DenseMatrix::zeros(z_src.n_rows(), z_src.n_cols());
    let mut d_dst = DenseMatrix::zeros(z_dst.n_rows(), z_dst.n_cols());
    let mut loss = 0.0;
    let mut scores = Vec::with_capacity(pairs.len());
    for p in pairs {
        let zu = z_src.row(p.src);
        let zv = z_dst.row(p.dst);
        let s: f64 = zu.iter().zip(zv).map(|(a, b)| a * b).sum();
        scores.push(s);
        let (l, ds) = if p.label {
            (-log_sigmoid(s), sigmoid(s) - 1.0)
        } else {
            (-log_sigmoid(-s), sigmoid(s))
        };
        loss += l;
        let zu = zu.to_vec();
        let zv = zv.to_vec();
        for (g, v) in d_src.row_mut(p.src).iter_mut().zip(&zv) {
            *g += ds * v;
        }
        for (g, u) in d_dst.row_mut(p.dst).iter_mut().zip(&zu) {
            *g += ds * u;
        }
    }
    Ok(RecLoss {
        loss,
        scores,
        d_src,
        d_dst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_n_log_c() {
        let z = DenseMatrix::zeros(4, 3);
        let head = DenseMatrix::zeros(3, 5);
        let labels: BTreeMap<_, _> = (0..4).map(|v| (v, v % 5)).collect();
        let l = loss_nodeclass(&z, &head, &labels, &[0, 1, 3]).unwrap();
        assert!((l.loss - 3.0 * 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logit_gives_zero_loss() {
        let z = DenseMatrix::from_rows(&[vec![1.0]]);
        let head = DenseMatrix::from_rows(&[vec![800.0, 0.0]]);
        let labels = BTreeMap::from([(0, 0)]);
        let l = loss_nodeclass(&z, &head, &labels, &[0]).unwrap();
        assert!(l.loss.abs() < 1e-300);
    }

    #[test]
    fn three_node_hand_case() {
        // logits = Z W_o = Z with identity head
        let z = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![0.5, 0.5]]);
        let head = DenseMatrix::identity(2);
        let labels = BTreeMap::from([(0, 0), (1, 0), (2, 1)]);
        let l = loss_nodeclass(&z, &head, &labels, &[0, 1, 2]).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln() + (1.0 + 2.0f64.exp()).ln() + 2f64.ln();
        assert!((l.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_node_set_is_an_error() {
        let z = DenseMatrix::zeros(1, 1);
        let err = loss_nodeclass(&z, &DenseMatrix::zeros(1, 2), &BTreeMap::new(), &[]);
        assert!(matches!(err, Err(ModelError::EmptyNodeSet)));
    }

    #[test]
    fn zero_scores_give_n_log_two() {
        let z = DenseMatrix::zeros(3, 2);
        let pairs = [
            Pair { src: 0, dst: 1, label: true },
            Pair { src: 2, dst: 1, label: false },
        ];
        let l = loss_rec(&z, &z, &pairs).unwrap();
        assert!((l.loss - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_positive_score_gives_zero_loss() {
        let z = DenseMatrix::from_rows(&[vec![30.0], vec![30.0]]);
        let l = loss_rec(&z, &z, &[Pair { src: 0, dst: 1, label: true }]).unwrap();
        assert!(l.loss < 1e-300);
    }

    #[test]
    fn two_pair_hand_case() {
        let zs = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.0]]);
        let zd = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.5, -1.0]]);
        let pairs = [
            Pair { src: 0, dst: 1, label: true },
            Pair { src: 0, dst: 1, label: false },
        ];
        let l = loss_rec(&zs, &zd, &pairs).unwrap();
        // score = 0.5 - 2 = -1.5
        let s: f64 = -1.5;
        let expected = (1.0 + (-s).exp()).ln() + (1.0 + s.exp()).ln();
        assert!((l.loss - expected).abs() < 1e-12);
        assert_eq!(l.scores, vec![s, s]);
    }
}
