use super::metrics::f1_scores;
use super::report::{EvalReport, Metric, Task};
use crate::compgeo::logsumexp;
use crate::error::{Error, Result};
use crate::graphio::LabelTable;
use crate::model::Embeddings;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const DEFAULT_L2_GRID: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

const PROBE_ITERS: usize = 2000;
const PROBE_LR: f64 = 0.1;

/// Train/validation/test partition of the labeled nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub ratios: (f64, f64, f64),
    pub stratified: bool,
    pub seed: u64,
}

impl ProbeSplit {
    /// Stratified 60/20/20 split.
    pub fn stratified(labels: &LabelTable, seed: u64) -> Result<Self> {
        Self::stratified_with(labels, (0.6, 0.2, 0.2), seed)
    }

    /// Per class, shuffles the nodes and cuts them at the rounded ratios.
    /// Every class keeps at least one training node.
    pub fn stratified_with(labels: &LabelTable, ratios: (f64, f64, f64), seed: u64) -> Result<Self> {
        let (a, b, c) = ratios;
        if [a, b, c].iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (a + b + c - 1.0).abs() > 1e-9 || a <= 0.0 {
            return Err(Error::InvalidConfig(format!("bad split ratios {ratios:?}")));
        }
        let labeled = labels.labeled();
        if labeled.is_empty() {
            return Err(Error::NoLabels);
        }
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.num_classes()];
        for (node, class) in labeled {
            by_class[class].push(node);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
        for nodes in &mut by_class {
            if nodes.is_empty() {
                continue;
            }
            nodes.shuffle(&mut rng);
            let n = nodes.len() as f64;
            let n_train = ((a * n).round() as usize).max(1).min(nodes.len());
            let n_val = ((b * n).round() as usize).min(nodes.len() - n_train);
            train.extend_from_slice(&nodes[..n_train]);
            val.extend_from_slice(&nodes[n_train..n_train + n_val]);
            test.extend_from_slice(&nodes[n_train + n_val..]);
        }
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Ok(ProbeSplit {
            train,
            val,
            test,
            ratios,
            stratified: true,
            seed,
        })
    }
}

/// Multinomial logistic regression with an intercept and an L2 penalty on
/// the weights. Features are standardized with training statistics.
#[derive(Debug, Clone)]
pub struct SoftmaxRegression {
    pub weights: DMatrix<f64>,
    pub intercept: DVector<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl SoftmaxRegression {
    /// Full-batch gradient descent; a step that raises the loss is undone
    /// and the learning rate halved.
    pub fn fit(x: &DMatrix<f64>, y: &[usize], num_classes: usize, l2: f64) -> Self {
        let (n, d) = x.shape();
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let col = x.column(j);
            let m = col.mean();
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            mean[j] = m;
            scale[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
        let mut model = SoftmaxRegression {
            weights: DMatrix::zeros(d, num_classes),
            intercept: DVector::zeros(num_classes),
            mean,
            scale,
        };
        let xs = model.standardize(x);
        let mut lr = PROBE_LR;
        let (mut loss, mut gw, mut gb) = model.loss_grad(&xs, y, l2);
        for _ in 0..PROBE_ITERS {
            let old_w = model.weights.clone();
            let old_b = model.intercept.clone();
            model.weights -= &gw * lr;
            model.intercept -= &gb * lr;
            let (new_loss, new_gw, new_gb) = model.loss_grad(&xs, y, l2);
            if new_loss > loss {
                model.weights = old_w;
                model.intercept = old_b;
                lr *= 0.5;
                if lr < 1e-12 {
                    break;
                }
                continue;
            }
            loss = new_loss;
            gw = new_gw;
            gb = new_gb;
        }
        model
    }

    fn standardize(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut xs = x.clone();
        for j in 0..xs.ncols() {
            for v in xs.column_mut(j).iter_mut() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        xs
    }

    fn scores(&self, xs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut s = xs * &self.weights;
        for mut row in s.row_iter_mut() {
            row += self.intercept.transpose();
        }
        s
    }

    fn loss_grad(&self, xs: &DMatrix<f64>, y: &[usize], l2: f64) -> (f64, DMatrix<f64>, DVector<f64>) {
        let n = xs.nrows() as f64;
        let mut p = self.scores(xs);
        let mut loss = 0.0;
        for (r, &label) in y.iter().enumerate() {
            let row: Vec<f64> = p.row(r).iter().copied().collect();
            let lse = logsumexp(&row);
            loss -= row[label] - lse;
            for (c, v) in row.iter().enumerate() {
                p[(r, c)] = (v - lse).exp() - if c == label { 1.0 } else { 0.0 };
            }
        }
        loss = loss / n + 0.5 * l2 * self.weights.norm_squared();
        let gw = xs.transpose() * &p / n + &self.weights * l2;
        let gb = p.row_sum().transpose() / n;
        (loss, gw, gb)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let s = self.scores(&self.standardize(x));
        s.row_iter().map(|r| r.transpose().argmax().0).collect()
    }
}

fn gather(features: &Embeddings, labels: &LabelTable, nodes: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
    let d = features.dim();
    let x = DMatrix::from_fn(nodes.len(), d, |r, c| features.row(nodes[r])[c]);
    let y = nodes
        .iter()
        .map(|&n| labels.get(n).expect("split nodes are labeled"))
        .collect();
    (x, y)
}

/// Node-classification probe: λ is chosen by validation micro-F1 (first
/// grid entry wins ties) and test micro/macro-F1 are reported.
pub fn multinomial_probe(
    features: &Embeddings,
    labels: &LabelTable,
    split: &ProbeSplit,
    l2_grid: &[f64],
) -> Result<EvalReport> {
    if features.dim() == 0 {
        return Err(Error::DegenerateSplit("features have zero columns".into()));
    }
    if features.len() != labels.num_nodes() {
        return Err(Error::DimMismatch {
            expected: labels.num_nodes(),
            got: features.len(),
        });
    }
    if l2_grid.is_empty() || l2_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidConfig(format!("bad l2 grid {l2_grid:?}")));
    }
    for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if part.is_empty() {
            return Err(Error::DegenerateSplit(format!("{name} set is empty")));
        }
        if let Some(&n) = part.iter().find(|&&n| labels.get(n).is_none()) {
            return Err(Error::DegenerateSplit(format!("{name} node {n} is unlabeled")));
        }
    }
    let c = labels.num_classes();
    let (xtr, ytr) = gather(features, labels, &split.train);
    let mut seen = vec![false; c];
    ytr.iter().for_each(|&l| seen[l] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::DegenerateSplit("fewer than two classes in train".into()));
    }
    let (xva, yva) = gather(features, labels, &split.val);
    let (xte, yte) = gather(features, labels, &split.test);

    let mut best: Option<(f64, f64, SoftmaxRegression)> = None;
    for &l2 in l2_grid {
        let model = SoftmaxRegression::fit(&xtr, &ytr, c, l2);
        let (val_micro, _) = f1_scores(&yva, &model.predict(&xva), c);
        if best.as_ref().is_none_or(|(b, _, _)| val_micro > *b) {
            best = Some((val_micro, l2, model));
        }
    }
    let (val_micro, l2, model) = best.expect("grid is non-empty");
    let (micro, macro_) = f1_scores(&yte, &model.predict(&xte), c);
    Ok(EvalReport::new(
        Task::NodeClassification,
        [(Metric::MicroF1, micro), (Metric::MacroF1, macro_)].into(),
    )
    .with_echo(json!({
        "l2_grid": l2_grid,
        "selected_l2": l2,
        "val_micro_f1": val_micro,
        "num_train": split.train.len(),
        "num_val": split.val.len(),
        "num_test": split.test.len(),
        "split_seed": split.seed,
        "feature_dim": features.dim(),
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn labels_cycle(n: usize, c: usize) -> LabelTable {
        LabelTable::from_classes((0..n).map(|i| Some(i % c)).collect())
    }

    #[test]
    fn split_is_partition_and_stratified() {
        let mut l: Vec<Option<usize>> = (0..103).map(|i| Some(i % 3)).collect();
        l[5] = None;
        let labels = LabelTable::from_classes(l);
        let s = ProbeSplit::stratified(&labels, 4).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        let expect: Vec<usize> = labels.labeled().into_iter().map(|(n, _)| n).collect();
        assert_eq!(all, expect);
        for c in 0..3 {
            let k = s.train.iter().filter(|&&n| labels.get(n) == Some(c)).count();
            assert!((19..=22).contains(&k), "class {c}: {k}");
        }
        assert_eq!(s, ProbeSplit::stratified(&labels, 4).unwrap());
    }

    #[test]
    fn singleton_class_lands_in_train() {
        let mut l: Vec<Option<usize>> = (0..20).map(|i| Some(i % 2)).collect();
        l.push(Some(2));
        let labels = LabelTable::from_classes(l);
        let s = ProbeSplit::stratified(&labels, 0).unwrap();
        assert!(s.train.contains(&20));
    }

    #[test]
    fn separable_two_class() {
        let n = 60;
        let labels = labels_cycle(n, 2);
        let data: Vec<f64> = (0..n)
            .flat_map(|i| {
                let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
                [sign * (1.0 + (i as f64) / 100.0), (i as f64).sin()]
            })
            .collect();
        let feats = Embeddings::from_rows(2, data).unwrap();
        let split = ProbeSplit::stratified(&labels, 1).unwrap();
        let r = multinomial_probe(&feats, &labels, &split, &DEFAULT_L2_GRID).unwrap();
        assert_eq!(r.metric(Metric::MicroF1), Some(1.0));
        assert_eq!(r.metric(Metric::MacroF1), Some(1.0));
    }

    #[test]
    fn independent_labels_give_chance() {
        let n = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let labels = LabelTable::from_classes((0..n).map(|_| Some(rng.random_range(0..4))).collect());
        let data: Vec<f64> = (0..n * 3)
            .map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let feats = Embeddings::from_rows(3, data).unwrap();
        let split = ProbeSplit::stratified(&labels, 2).unwrap();
        let r = multinomial_probe(&feats, &labels, &split, &DEFAULT_L2_GRID).unwrap();
        let micro = r.metric(Metric::MicroF1).unwrap();
        assert!((micro - 0.25).abs() < 0.05, "micro {micro}");
    }

    #[test]
    fn degenerate_splits() {
        let labels = labels_cycle(10, 2);
        let feats = Embeddings::from_rows(1, (0..10).map(|i| i as f64).collect()).unwrap();
        let mut split = ProbeSplit::stratified(&labels, 0).unwrap();
        split.test.clear();
        assert!(matches!(
            multinomial_probe(&feats, &labels, &split, &DEFAULT_L2_GRID),
            Err(Error::DegenerateSplit(_))
        ));
        let one = LabelTable::from_classes(vec![Some(0); 10]);
        let split = ProbeSplit::stratified(&one, 0).unwrap();
        assert!(matches!(
            multinomial_probe(&feats, &one, &split, &DEFAULT_L2_GRID),
            Err(Error::DegenerateSplit(_))
        ));
    }

    #[test]
    fn descent_never_increases_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(50, 2, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng) * 30.0);
        let y: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let zero = SoftmaxRegression {
            weights: DMatrix::zeros(2, 3),
            intercept: DVector::zeros(3),
            mean: vec![0.0; 2],
            scale: vec![1.0; 2],
        };
        let m = SoftmaxRegression::fit(&x, &y, 3, 0.1);
        let xs = m.standardize(&x);
        assert!(m.loss_grad(&xs, &y, 0.1).0 <= zero.loss_grad(&xs, &y, 0.1).0);
    }
}
