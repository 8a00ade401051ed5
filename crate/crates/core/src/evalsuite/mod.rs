//! Evaluation protocols: link prediction from log-odds, a multinomial
//! logistic-regression probe, subcompositional robustness, interiority
//! statistics, and single-balance probes.

mod balance;
mod metrics;
mod probe;
mod report;
mod subcomp;

pub use balance::{anova_f, balance_probe, balance_probe_with_basis, mutual_information_binned};
pub use metrics::{auc_pr, auc_roc, f1_scores};
pub use probe::{multinomial_probe, ProbeSplit, SoftmaxRegression, DEFAULT_L2_GRID};
pub use report::{mean_metrics, EvalReport, Metric, MetricMap, ReportGroup, Task};
pub use subcomp::{subcomp_eval, SubcompOptions};

use crate::compgeo::Composition;
use crate::error::{Error, Result};
use crate::graphio::LinkSplit;
use crate::model::{embed_all, log_odds_from, ModelState};
use serde_json::json;

/// Link prediction scored directly by the model's log-odds on the held-out
/// positive and negative pairs.
pub fn link_predict_eval(state: &ModelState, split: &LinkSplit) -> Result<EvalReport> {
    if split.residual.num_nodes() != state.num_nodes() {
        return Err(Error::DimMismatch {
            expected: split.residual.num_nodes(),
            got: state.num_nodes(),
        });
    }
    let emb = embed_all(state)?;
    let (pairs, labels) = split.test_pairs();
    let scores: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| log_odds_from(&emb, &state.biases, i, j))
        .collect();
    let metrics = [
        (Metric::AucRoc, auc_roc(&scores, &labels)?),
        (Metric::AucPr, auc_pr(&scores, &labels)?),
    ]
    .into();
    Ok(EvalReport::new(Task::LinkPrediction, metrics).with_echo(json!({
        "num_test_pos": split.test_pos.len(),
        "num_test_neg": split.test_neg.len(),
        "k": state.k(),
    })))
}

/// Default threshold on the largest component for a node to count as
/// near a simplex corner.
pub const NEAR_CORNER_THRESHOLD: f64 = 0.9;

/// Entropy, largest component, near-corner share and effective number of
/// roles `exp(H)`, averaged over compositions.
pub fn interiority_of(comps: &[Composition], threshold: f64) -> EvalReport {
    let n = comps.len().max(1) as f64;
    let (mut h, mut mx, mut corner, mut eff) = (0.0, 0.0, 0.0, 0.0);
    for z in comps {
        let entropy = z.entropy();
        let max = z.max_component();
        h += entropy;
        mx += max;
        eff += entropy.exp();
        if max > threshold {
            corner += 1.0;
        }
    }
    EvalReport::new(
        Task::Interiority,
        [
            (Metric::EntropyMean, h / n),
            (Metric::MaxCompMean, mx / n),
            (Metric::NearCornerFrac, corner / n),
            (Metric::EffRolesMean, eff / n),
        ]
        .into(),
    )
    .with_echo(json!({ "threshold": threshold, "num_nodes": comps.len() }))
}

/// [`interiority_of`] on the softmax compositions of every node.
pub fn interiority_stats(state: &ModelState, threshold: f64) -> EvalReport {
    interiority_of(&state.compositions(), threshold)
}
