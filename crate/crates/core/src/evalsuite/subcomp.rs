use super::metrics::{auc_pr, auc_roc};
use super::report::{mean_metrics, EvalReport, Metric, MetricMap, ReportGroup, Task};
use super::link_predict_eval;
use crate::compgeo::helmert_basis;
use crate::error::{Error, Result};
use crate::graphio::LinkSplit;
use crate::model::{embed_all, smoothed_distance, ModelState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubcompOptions {
    pub masks_per_size: usize,
    /// Rescale subcomposed distances by the ratio of median distances on
    /// the evaluation pairs.
    pub calibrate: bool,
    pub seed: u64,
}

impl Default for SubcompOptions {
    fn default() -> Self {
        SubcompOptions {
            masks_per_size: 50,
            calibrate: false,
            seed: 0,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Link prediction after discarding components: for each keep size, random
/// subsets S are re-closed and re-embedded with a Helmert basis on |S| parts,
/// then scored with the trained biases. One report group per keep size
/// holds the mask-averaged AUCs, per-mask values, and retention against the
/// full model.
pub fn subcomp_eval(
    state: &ModelState,
    split: &LinkSplit,
    keep_sizes: &[usize],
    opts: &SubcompOptions,
) -> Result<EvalReport> {
    let k = state.k();
    if let Some(&bad) = keep_sizes.iter().find(|&&s| s < 2 || s > k) {
        return Err(Error::BadKeepSize { keep: bad, k });
    }
    if opts.masks_per_size == 0 {
        return Err(Error::InvalidConfig("masks_per_size must be positive".into()));
    }
    let full = link_predict_eval(state, split)?;
    let (pairs, labels) = split.test_pairs();
    let full_emb = embed_all(state)?;
    let mut full_dist: Vec<f64> = pairs.iter().map(|&(i, j)| full_emb.distance(i, j)).collect();
    let full_median = median(&mut full_dist);

    let mut nodes: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
    nodes.sort_unstable();
    nodes.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut groups = Vec::with_capacity(keep_sizes.len());
    for &size in keep_sizes {
        let basis = helmert_basis(size)?;
        let mut per_mask = Vec::with_capacity(opts.masks_per_size);
        let mut alphas = Vec::with_capacity(opts.masks_per_size);
        let mut sub = vec![Vec::new(); state.num_nodes()];
        for _ in 0..opts.masks_per_size {
            let mut keep = rand::seq::index::sample(&mut rng, k, size).into_vec();
            keep.sort_unstable();
            // The sum-zero basis annihilates the re-closure constant, so the
            // subcomposed coordinates come straight from the kept logits.
            for &n in &nodes {
                let row = state.logit_row(n);
                let kept: Vec<f64> = keep.iter().map(|&c| row[c]).collect();
                sub[n] = basis.project(&kept);
            }
            let dist: Vec<f64> = pairs
                .iter()
                .map(|&(i, j)| smoothed_distance(&sub[i], &sub[j]))
                .collect();
            let alpha = if opts.calibrate {
                let m = median(&mut dist.clone());
                if m > 0.0 {
                    full_median / m
                } else {
                    1.0
                }
            } else {
                1.0
            };
            let scores: Vec<f64> = pairs
                .iter()
                .zip(&dist)
                .map(|(&(i, j), d)| -alpha * d + state.biases[i] + state.biases[j])
                .collect();
            per_mask.push(MetricMap::from([
                (Metric::AucRoc, auc_roc(&scores, &labels)?),
                (Metric::AucPr, auc_pr(&scores, &labels)?),
            ]));
            alphas.push(alpha);
        }
        let metrics = mean_metrics(&per_mask);
        let retention = metrics
            .iter()
            .filter_map(|(m, v)| full.metric(*m).map(|f| (*m, v / f)))
            .collect();
        log::debug!(
            "subcomp k'={size}: auc_roc={:.4} mean alpha={:.4}",
            metrics[&Metric::AucRoc],
            alphas.iter().sum::<f64>() / alphas.len() as f64
        );
        groups.push(ReportGroup {
            label: format!("k={size}"),
            metrics,
            per_seed: per_mask,
            retention,
        });
    }
    let mut report = EvalReport::new(Task::Subcomposition, full.metrics).with_echo(json!({
        "k": k,
        "keep_sizes": keep_sizes,
        "masks_per_size": opts.masks_per_size,
        "calibrate": opts.calibrate,
        "seed": opts.seed,
    }));
    report.groups = groups;
    Ok(report)
}
