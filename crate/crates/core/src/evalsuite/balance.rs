use super::probe::SoftmaxRegression;
use super::report::{EvalReport, Metric, Task};
use crate::compgeo::IlrBasis;
use crate::error::{Error, Result};
use crate::graphio::LabelTable;
use crate::model::{embed_with, ModelState};
use nalgebra::DMatrix;
use serde_json::json;

/// Value reported when within-group variance vanishes but groups differ.
pub const F_CAP: f64 = 1e12;

const PROBE_L2: f64 = 1e-3;

/// One-way ANOVA F statistic of `values` grouped by `classes`.
/// Returns 0 with fewer than two groups present.
pub fn anova_f(values: &[f64], classes: &[usize]) -> f64 {
    let n = values.len();
    let c = classes.iter().copied().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; c];
    let mut counts = vec![0usize; c];
    for (&v, &l) in values.iter().zip(classes) {
        sums[l] += v;
        counts[l] += 1;
    }
    let groups = counts.iter().filter(|&&k| k > 0).count();
    if groups < 2 {
        return 0.0;
    }
    let grand = values.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &k)| if k > 0 { s / k as f64 } else { 0.0 })
        .collect();
    let ssb: f64 = means
        .iter()
        .zip(&counts)
        .map(|(m, &k)| k as f64 * (m - grand).powi(2))
        .sum();
    let ssw: f64 = values
        .iter()
        .zip(classes)
        .map(|(v, &l)| (v - means[l]).powi(2))
        .sum();
    // Relative guards: sums of squares at rounding level count as zero.
    let scale = values.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let ssb_zero = ssb <= 1e-24 * scale;
    let ssw_zero = ssw <= 1e-24 * scale;
    if ssb_zero {
        return 0.0;
    }
    if ssw_zero || n <= groups {
        return F_CAP;
    }
    let f = (ssb / (groups - 1) as f64) / (ssw / (n - groups) as f64);
    f.min(F_CAP)
}

/// Bin index per value for `bins` equal-frequency bins. Tied values always
/// share a bin.
fn quantile_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; n];
    let mut prev: Option<(f64, usize)> = None;
    for (rank, &i) in order.iter().enumerate() {
        let bin = match prev {
            Some((v, b)) if v == values[i] => b,
            _ => rank * bins / n,
        };
        out[i] = bin;
        prev = Some((values[i], bin));
    }
    out
}

/// Plug-in mutual information (nats) between a quantile-binned continuous
/// variable and class labels.
pub fn mutual_information_binned(values: &[f64], classes: &[usize], bins: usize) -> f64 {
    let n = values.len();
    if n == 0 || bins == 0 {
        return 0.0;
    }
    let c = classes.iter().copied().max().map_or(0, |m| m + 1);
    let b = quantile_bins(values, bins);
    let mut joint = vec![0usize; bins * c];
    let mut pb = vec![0usize; bins];
    let mut pc = vec![0usize; c];
    for (&bi, &ci) in b.iter().zip(classes) {
        joint[bi * c + ci] += 1;
        pb[bi] += 1;
        pc[ci] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for bi in 0..bins {
        for ci in 0..c {
            let k = joint[bi * c + ci];
            if k > 0 {
                let p = k as f64 / nf;
                mi += p * (p * nf * nf / (pb[bi] as f64 * pc[ci] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// In-sample accuracy of a multinomial logistic probe on one coordinate.
fn probe_accuracy_1d(values: &[f64], classes: &[usize], num_classes: usize) -> f64 {
    let x = DMatrix::from_column_slice(values.len(), 1, values);
    let model = SoftmaxRegression::fit(&x, classes, num_classes, PROBE_L2);
    let pred = model.predict(&x);
    let hits = pred.iter().zip(classes).filter(|(p, t)| p == t).count();
    hits as f64 / values.len() as f64
}

/// [`balance_probe_with_basis`] under the state's own basis.
pub fn balance_probe(state: &ModelState, labels: &LabelTable, bins: usize) -> Result<EvalReport> {
    balance_probe_with_basis(state, &state.basis()?, labels, bins)
}

/// Picks the ILR coordinate with the largest ANOVA F across labels and
/// reports, for it alone, a 1D multinomial probe accuracy, F, and binned
/// mutual information.
pub fn balance_probe_with_basis(
    state: &ModelState,
    basis: &IlrBasis,
    labels: &LabelTable,
    bins: usize,
) -> Result<EvalReport> {
    if bins == 0 {
        return Err(Error::InvalidConfig("bins must be positive".into()));
    }
    if labels.num_nodes() != state.num_nodes() {
        return Err(Error::DimMismatch {
            expected: state.num_nodes(),
            got: labels.num_nodes(),
        });
    }
    let labeled = labels.labeled();
    if labeled.is_empty() {
        return Err(Error::NoLabels);
    }
    let emb = embed_with(state, basis)?;
    let classes: Vec<usize> = labeled.iter().map(|&(_, c)| c).collect();
    let column = |b: usize| -> Vec<f64> { labeled.iter().map(|&(n, _)| emb.row(n)[b]).collect() };

    let f_all: Vec<f64> = (0..emb.dim()).map(|b| anova_f(&column(b), &classes)).collect();
    let best = f_all
        .iter()
        .enumerate()
        .fold(0, |best, (b, &f)| if f > f_all[best] { b } else { best });
    let x = column(best);
    let metrics = [
        (Metric::ProbeAcc1d, probe_accuracy_1d(&x, &classes, labels.num_classes())),
        (Metric::AnovaF, f_all[best]),
        (Metric::MutualInfo, mutual_information_binned(&x, &classes, bins)),
    ]
    .into();
    Ok(EvalReport::new(Task::BalanceProbe, metrics).with_echo(json!({
        "coordinate": best,
        "basis": basis.kind(),
        "bins": bins,
        "num_labeled": labeled.len(),
        "anova_f_per_coordinate": f_all,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Embeddings;
    use proptest::prelude::*;

    #[test]
    fn constant_coordinate() {
        let v = vec![0.3; 40];
        let c: Vec<usize> = (0..40).map(|i| i % 4).collect();
        assert_eq!(anova_f(&v, &c), 0.0);
        assert!(mutual_information_binned(&v, &c, 16).abs() < 1e-12);
    }

    #[test]
    fn perfectly_separated() {
        let v: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let c: Vec<usize> = (0..20).map(|i| i % 2).collect();
        assert_eq!(anova_f(&v, &c), F_CAP);
        assert_eq!(probe_accuracy_1d(&v, &c, 2), 1.0);
        // Two tied blocks occupy two bins: MI = H(C) = ln 2.
        assert!((mutual_information_binned(&v, &c, 16) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn anova_hand_computed() {
        // Groups {1,2,3} and {5,6,7}: SSB = 24, SSW = 4, F = 24 / (4/4) = 24.
        let v = [1.0, 2.0, 3.0, 5.0, 6.0, 7.0];
        let c = [0, 0, 0, 1, 1, 1];
        assert!((anova_f(&v, &c) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_bins_equal_frequency() {
        let v: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let b = quantile_bins(&v, 16);
        for k in 0..16 {
            assert_eq!(b.iter().filter(|&&x| x == k).count(), 2);
        }
    }

    #[test]
    fn probe_selects_informative_coordinate() {
        let n = 40;
        let rows: Vec<f64> = (0..n)
            .flat_map(|i| [((i * 7) % 5) as f64, if i % 2 == 0 { -3.0 } else { 3.0 }, 0.0])
            .collect();
        let emb = Embeddings::from_rows(3, rows).unwrap();
        let state = ModelState::from_ilr_points(&emb, vec![0.0; n]).unwrap();
        let labels = LabelTable::from_classes((0..n).map(|i| Some(i % 2)).collect());
        let r = balance_probe(&state, &labels, 16).unwrap();
        assert_eq!(r.config_echo["coordinate"], 1);
        assert_eq!(r.metric(Metric::ProbeAcc1d), Some(1.0));
        let none = LabelTable::from_classes(vec![None; n]);
        assert!(matches!(balance_probe(&state, &none, 16), Err(Error::NoLabels)));
    }

    proptest! {
        #[test]
        fn mi_bounds(vals in prop::collection::vec((-5.0f64..5.0, 0usize..5), 1..200), bins in 1usize..20) {
            let v: Vec<f64> = vals.iter().map(|p| p.0).collect();
            let c: Vec<usize> = vals.iter().map(|p| p.1).collect();
            let mi = mutual_information_binned(&v, &c, bins);
            let classes = c.iter().copied().max().unwrap() + 1;
            prop_assert!(mi >= 0.0);
            prop_assert!(mi <= (bins as f64).ln().min((classes as f64).ln()) + 0.05);
        }

        #[test]
        fn anova_nonnegative(vals in prop::collection::vec((-5.0f64..5.0, 0usize..4), 2..100)) {
            let v: Vec<f64> = vals.iter().map(|p| p.0).collect();
            let c: Vec<usize> = vals.iter().map(|p| p.1).collect();
            prop_assert!(anova_f(&v, &c) >= 0.0);
        }
    }
}
