//! Independent checks: exhaustive meta-graph search, central finite
//! differences, and the zero-temperature limit behind the single-path λ
//! gradient.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::{train_eval, EvalError};
use crate::model::{DagAssignment, ForwardTrace, Model, ModelError, ModelParams, Split, TrainConfig};
use crate::search::{argmax, lambda_grad, mixture_assignment, ArchParams};
use crate::space::{build_space, MetaGraph, MetaGraphFile, SearchSpaceSpec, SpaceError};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("search space has {cardinality} meta graphs, above the cap of {cap}")]
    CapExceeded { cardinality: String, cap: u64 },
    #[error("step h must be positive, got {0}")]
    BadStep(f64),
    #[error("function value is not finite at coordinate {coordinate}")]
    NonFinite { coordinate: usize },
    #[error("temperatures must be positive and strictly decreasing")]
    BadTemperatures,
    #[error("argmax tie on link {link}; the zero-temperature limit is undefined")]
    Tie { link: usize },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One trained candidate of an exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    /// 1-based position in the ranking.
    pub rank: usize,
    pub metric: f64,
    pub test_metric: f64,
    /// One meta graph per target type.
    pub meta_graphs: Vec<MetaGraph>,
}

/// JSON-lines form of [`Ranked`]. Recommendation tasks carry the
/// target-side meta graph in `meta_graph_dst`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedLine {
    pub rank: usize,
    pub metric: f64,
    pub meta_graph: MetaGraphFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_graph_dst: Option<MetaGraphFile>,
}

impl Ranked {
    pub fn to_line(&self) -> RankedLine {
        RankedLine {
            rank: self.rank,
            metric: self.metric,
            meta_graph: self.meta_graphs[0].to_file(),
            meta_graph_dst: self.meta_graphs.get(1).map(MetaGraph::to_file),
        }
    }
}

/// Search spaces of every DAG of the task, in target-type order.
pub fn task_specs(model: &Model<'_>, k_states: usize) -> Result<Vec<SearchSpaceSpec>, SpaceError> {
    model
        .task
        .target_types()
        .iter()
        .map(|t| build_space(model.graph, t, k_states))
        .collect()
}

/// Number of candidates an exhaustive search over `specs` visits.
pub fn joint_cardinality(specs: &[SearchSpaceSpec]) -> num_bigint::BigUint {
    specs.iter().map(SearchSpaceSpec::cardinality).product()
}

/// Trains every meta graph (every combination, for two DAGs) with
/// `config` and ranks them by validation metric, best first. Equal metrics
/// keep enumeration order.
pub fn brute_force_search(
    model: &Model<'_>,
    k_states: usize,
    config: &TrainConfig,
    cap: u64,
    threads: usize,
) -> Result<Vec<Ranked>, OracleError> {
    let specs = task_specs(model, k_states)?;
    let total = joint_cardinality(&specs);
    if total > num_bigint::BigUint::from(cap) {
        return Err(OracleError::CapExceeded {
            cardinality: total.to_string(),
            cap,
        });
    }
    let per_dag: Vec<Vec<MetaGraph>> = specs
        .iter()
        .map(|s| s.enumerate(cap).map(Iterator::collect))
        .collect::<Result<_, _>>()?;
    let mut combos: Vec<Vec<MetaGraph>> = vec![Vec::new()];
    for options in &per_dag {
        combos = combos
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |mg| {
                    let mut c = prefix.clone();
                    c.push(mg.clone());
                    c
                })
            })
            .collect();
    }
    let results = crate::workers::run_indexed(combos.len(), threads, |i| {
        train_eval(model, &combos[i], config).map(|r| (r.val_metric, r.test_metric))
    });
    let mut ranked = combos
        .into_iter()
        .zip(results)
        .map(|(meta_graphs, r)| {
            let (metric, test_metric) = r?;
            Ok(Ranked {
                rank: 0,
                metric,
                test_metric,
                meta_graphs,
            })
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    ranked.sort_by(|a, b| b.metric.total_cmp(&a.metric));
    for (i, r) in ranked.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(ranked)
}

/// Position of `meta_graphs` in a ranking, counting only strictly better
/// entries ahead of it, so ties share the best rank.
pub fn rank_of(ranking: &[Ranked], meta_graphs: &[MetaGraph]) -> Option<usize> {
    let entry = ranking.iter().find(|r| r.meta_graphs == meta_graphs)?;
    Some(1 + ranking.iter().filter(|r| r.metric > entry.metric).count())
}

/// Central differences `(f(x + h·e_j) − f(x − h·e_j)) / 2h` per coordinate.
pub fn finite_diff(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>, OracleError> {
    if !(h > 0.0) {
        return Err(OracleError::BadStep(h));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        if !(up.is_finite() && down.is_finite()) {
            return Err(OracleError::NonFinite { coordinate: j });
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Worst agreement between an analytic and a numeric gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// Largest `|a − n| / max(|a|, |n|, SCALE_FLOOR)` over coordinates.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coordinates: usize,
    /// Coordinates left out because the probe flipped a relu.
    #[serde(default)]
    pub skipped: usize,
}

impl Agreement {
    /// Gradient magnitude below which errors are measured in absolute
    /// terms. Central differences at `h = 1e-6` carry roughly `1e-9`
    /// round-off on losses of order ten, which would otherwise dominate the
    /// relative error of near-zero entries.
    pub const SCALE_FLOOR: f64 = 1e-4;

    pub fn between(analytic: &[f64], numeric: &[f64]) -> Self {
        Self::between_except(analytic, numeric, &[])
    }

    /// Like [`between`](Self::between), leaving out coordinates flagged in
    /// `skip`.
    pub fn between_except(analytic: &[f64], numeric: &[f64], skip: &[bool]) -> Self {
        let mut out = Agreement {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            coordinates: analytic.len(),
            skipped: 0,
        };
        for (j, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            if skip.get(j).copied().unwrap_or(false) {
                out.skipped += 1;
                continue;
            }
            let abs = (a - n).abs();
            let scale = a.abs().max(n.abs()).max(Self::SCALE_FLOOR);
            out.max_abs_error = out.max_abs_error.max(abs);
            out.max_rel_error = out.max_rel_error.max(abs / scale);
        }
        out
    }

    pub fn merge(self, other: Agreement) -> Agreement {
        Agreement {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            max_abs_error: self.max_abs_error.max(other.max_abs_error),
            coordinates: self.coordinates + other.coordinates,
            skipped: self.skipped + other.skipped,
        }
    }

    pub fn within(&self, rel_tol: f64) -> bool {
        self.max_rel_error <= rel_tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Per ω tensor, in `ModelParams::tensors` order.
    pub tensors: Vec<Agreement>,
    pub coefficients: Agreement,
}

impl GradCheckReport {
    pub fn worst(&self) -> Agreement {
        self.tensors
            .iter()
            .copied()
            .fold(self.coefficients, Agreement::merge)
    }
}

/// Central differences of the loss of `eval`, flagging coordinates whose
/// two probes see different relu sign patterns; the loss is not smooth
/// across such a probe.
fn probe_diff(
    mut eval: impl FnMut(&[f64]) -> Result<ForwardTrace, ModelError>,
    x: &[f64],
    h: f64,
) -> Result<(Vec<f64>, Vec<bool>), OracleError> {
    if !(h > 0.0) {
        return Err(OracleError::BadStep(h));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    let mut kinked = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = eval(&probe)?;
        probe[j] = x[j] - h;
        let down = eval(&probe)?;
        probe[j] = x[j];
        if !(up.loss.is_finite() && down.loss.is_finite()) {
            return Err(OracleError::NonFinite { coordinate: j });
        }
        grad.push((up.loss - down.loss) / (2.0 * h));
        kinked.push(up.relu_pattern() != down.relu_pattern());
    }
    Ok((grad, kinked))
}

/// Compares backpropagated gradients of every ω tensor and every branch
/// coefficient against central differences of the loss on `split`.
/// Coordinates whose probes cross a relu kink are skipped and counted.
pub fn gradient_check(
    model: &Model<'_>,
    params: &ModelParams,
    dags: &[DagAssignment],
    split: Split,
    h: f64,
) -> Result<GradCheckReport, OracleError> {
    let trace = model.forward(params, dags, split, None)?;
    let grads = model.backward(params, &trace)?;
    let analytic = grads.params.tensors();
    let n_tensors = params.tensors().len();

    let mut tensors = Vec::with_capacity(n_tensors);
    for t in 0..n_tensors {
        let x0 = params.tensors()[t].values().to_vec();
        let (numeric, kinked) = probe_diff(
            |x| {
                let mut p = params.clone();
                p.tensors_mut()[t].values_mut().copy_from_slice(x);
                model.forward(&p, dags, split, None)
            },
            &x0,
            h,
        )?;
        tensors.push(Agreement::between_except(analytic[t].values(), &numeric, &kinked));
    }

    let flat_analytic: Vec<f64> = grads.links.iter().flatten().flatten().copied().collect();
    let flat_coeffs: Vec<f64> = dags
        .iter()
        .flat_map(|d| (0..d.links().len()).flat_map(move |l| d.branches(l).iter().map(|b| b.coefficient)))
        .collect();
    let (numeric, kinked) = probe_diff(
        |x| {
            let mut dags = dags.to_vec();
            let mut it = x.iter();
            for d in &mut dags {
                for l in 0..d.links().len() {
                    for b in d.branches_mut(l).iter_mut() {
                        b.coefficient = *it.next().expect("one value per branch");
                    }
                }
            }
            model.forward(params, &dags, split, None)
        },
        &flat_coeffs,
        h,
    )?;
    Ok(GradCheckReport {
        tensors,
        coefficients: Agreement::between_except(&flat_analytic, &numeric, &kinked),
    })
}

/// Single-branch assignment selecting `indices[l]` on every link, weighted
/// by the current α as during search.
pub fn hard_assignment(spec: &SearchSpaceSpec, arch: &ArchParams, indices: &[usize]) -> DagAssignment {
    let branches = indices
        .iter()
        .enumerate()
        .map(|(l, &m)| {
            vec![crate::model::Branch {
                choice: spec.candidates(l)[m].clone(),
                coefficient: arch.alpha(l)[m],
            }]
        })
        .collect();
    DagAssignment::new(spec.k_states(), branches).expect("one index per link")
}

/// Compares [`lambda_grad`] on one link against central differences of the
/// loss as a function of that link's λ, with every selection frozen.
pub fn lambda_grad_check(
    model: &Model<'_>,
    params: &ModelParams,
    specs: &[SearchSpaceSpec],
    archs: &[ArchParams],
    selections: &[Vec<usize>],
    dag: usize,
    link: usize,
    split: Split,
    h: f64,
) -> Result<Agreement, OracleError> {
    let build = |archs: &[ArchParams]| -> Vec<DagAssignment> {
        specs
            .iter()
            .zip(archs)
            .zip(selections)
            .map(|((s, a), sel)| hard_assignment(s, a, sel))
            .collect()
    };
    let dags = build(archs);
    let trace = model.forward(params, &dags, split, None)?;
    let grads = model.backward(params, &trace)?;
    let analytic = lambda_grad(
        grads.links[dag][link][0],
        &archs[dag].alpha(link),
        selections[dag][link],
    );
    let (numeric, kinked) = probe_diff(
        |x| {
            let mut archs = archs.to_vec();
            archs[dag].lambda_mut(link).copy_from_slice(x);
            model.forward(params, &build(&archs), split, None)
        },
        archs[dag].lambda(link),
        h,
    )?;
    Ok(Agreement::between_except(&analytic, &numeric, &kinked))
}

/// Every candidate evaluated on every link and summed with its α weight.
pub fn darts_reference_forward(
    model: &Model<'_>,
    params: &ModelParams,
    specs: &[SearchSpaceSpec],
    archs: &[ArchParams],
    split: Split,
) -> Result<ForwardTrace, OracleError> {
    let dags: Vec<DagAssignment> = specs
        .iter()
        .zip(archs)
        .map(|(s, a)| mixture_assignment(a, s))
        .collect();
    Ok(model.forward(params, &dags, split, None)?)
}

/// Outcome of the temperature-relaxation check on one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub dag: usize,
    pub link: usize,
    /// Argmax candidate `m*`.
    pub selected: usize,
    pub temperatures: Vec<f64>,
    /// `∂L/∂α^m` for every candidate, one row per temperature.
    pub alpha_grads: Vec<Vec<f64>>,
    /// `∂L/∂α*` of the loss with only `m*` evaluated.
    pub hard_grad: f64,
    /// Non-selected gradients at the last temperature are below `1e-3` of
    /// their magnitude at the first.
    pub vanishing: bool,
    /// Selected gradient at the last temperature is within `1e-3` relative
    /// of `hard_grad`.
    pub converging: bool,
}

impl Prop1Report {
    pub const TOL: f64 = 1e-3;
    /// Magnitudes below this count as zero in both comparisons.
    pub const ABS_FLOOR: f64 = 1e-12;

    pub fn passed(&self) -> bool {
        self.vanishing && self.converging
    }
}

fn temperature_softmax(alpha: &[f64], t: f64) -> Vec<f64> {
    let scaled: Vec<f64> = alpha.iter().map(|a| a / t).collect();
    crate::search::compute_alpha(&scaled)
}

/// Relaxes one link to `ᾱ^m = α^m · h(m; t)` with `h` the softmax of `α/t`,
/// evaluates every candidate there, and tracks `∂L/∂α^m` as `t` decreases.
/// Every other link keeps its argmax candidate with weight α.
pub fn prop1_numeric_check(
    model: &Model<'_>,
    params: &ModelParams,
    specs: &[SearchSpaceSpec],
    archs: &[ArchParams],
    dag: usize,
    link: usize,
    split: Split,
    temperatures: &[f64],
) -> Result<Prop1Report, OracleError> {
    let ok_ts = !temperatures.is_empty()
        && temperatures.iter().all(|&t| t > 0.0 && t.is_finite())
        && temperatures.windows(2).all(|w| w[1] < w[0]);
    if !ok_ts {
        return Err(OracleError::BadTemperatures);
    }
    let alpha = archs[dag].alpha(link);
    let selected = argmax(&alpha);
    if alpha.iter().enumerate().any(|(m, &a)| m != selected && a == alpha[selected]) {
        return Err(OracleError::Tie { link });
    }
    let argmax_paths: Vec<Vec<usize>> = archs
        .iter()
        .map(|a| a.alphas().iter().map(|x| argmax(x)).collect())
        .collect();
    let base: Vec<DagAssignment> = specs
        .iter()
        .zip(archs)
        .zip(&argmax_paths)
        .map(|((s, a), p)| hard_assignment(s, a, p))
        .collect();

    let trace = model.forward(params, &base, split, None)?;
    let hard_grad = model.backward(params, &trace)?.links[dag][link][0];

    let mut alpha_grads = Vec::with_capacity(temperatures.len());
    for &t in temperatures {
        let h = temperature_softmax(&alpha, t);
        let mut dags = base.clone();
        *dags[dag].branches_mut(link) = specs[dag]
            .candidates(link)
            .iter()
            .enumerate()
            .map(|(q, c)| crate::model::Branch {
                choice: c.clone(),
                coefficient: alpha[q] * h[q],
            })
            .collect();
        let trace = model.forward(params, &dags, split, None)?;
        let g = &model.backward(params, &trace)?.links[dag][link];
        // ∂L/∂α^m = Σ_q g_q (δ_qm h_q + α_q h_q (δ_qm − h_m) / t)
        let weighted: f64 = (0..alpha.len()).map(|q| g[q] * alpha[q] * h[q]).sum();
        let grad_m: Vec<f64> = (0..alpha.len())
            .map(|m| g[m] * h[m] + (g[m] * alpha[m] * h[m] - weighted * h[m]) / t)
            .collect();
        alpha_grads.push(grad_m);
    }

    let first = &alpha_grads[0];
    let last = alpha_grads.last().expect("at least one temperature");
    let vanishing = (0..alpha.len()).filter(|&m| m != selected).all(|m| {
        last[m].abs() <= Prop1Report::TOL * first[m].abs() || last[m].abs() <= Prop1Report::ABS_FLOOR
    });
    let diff = (last[selected] - hard_grad).abs();
    let converging = diff <= Prop1Report::TOL * hard_grad.abs() || diff <= Prop1Report::ABS_FLOOR;
    Ok(Prop1Report {
        dag,
        link,
        selected,
        temperatures: temperatures.to_vec(),
        alpha_grads,
        hard_grad,
        vanishing,
        converging,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_diff_of_quadratic() {
        let g = finite_diff(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
        let g = finite_diff(|_| 3.5, &[1.0, -2.0, 0.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn finite_diff_errors() {
        assert!(matches!(
            finite_diff(|x| x[0], &[1.0], 0.0),
            Err(OracleError::BadStep(_))
        ));
        assert!(matches!(
            finite_diff(|x| if x[1] > 0.0 { f64::NAN } else { 0.0 }, &[0.0, 0.0], 1e-3),
            Err(OracleError::NonFinite { coordinate: 1 })
        ));
    }

    #[test]
    fn agreement_uses_relative_error_above_floor() {
        let a = Agreement::between(&[1.0, 1e-12], &[1.0001, 0.0]);
        assert!((a.max_rel_error - 1e-4 / 1.0001).abs() < 1e-12);
        let a = Agreement::between(&[2e-5], &[1e-5]);
        assert!((a.max_rel_error - 0.1).abs() < 1e-12);
        assert!(!a.within(1e-4));
        // Round-off on a near-zero entry is measured against the floor.
        assert!(Agreement::between(&[2e-9], &[1e-9]).within(1e-4));
        assert!(!Agreement::between(&[1.0], &[1.1]).within(1e-4));
    }

    #[test]
    fn temperature_softmax_sharpens() {
        let h = temperature_softmax(&[0.4, 0.35, 0.25], 1e-3);
        assert!((h[0] - 1.0).abs() < 1e-12);
        let h = temperature_softmax(&[0.4, 0.35, 0.25], 1e6);
        assert!(h.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-6));
    }
}
