use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Training,
    LinkPrediction,
    NodeClassification,
    Subcomposition,
    Interiority,
    BalanceProbe,
    Recovery,
}

/// The fixed metric vocabulary of every report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AucRoc,
    AucPr,
    MicroF1,
    MacroF1,
    EntropyMean,
    MaxCompMean,
    NearCornerFrac,
    EffRolesMean,
    #[serde(rename = "probe_acc_1d")]
    ProbeAcc1d,
    AnovaF,
    MutualInfo,
    L1,
    Cosine,
    Js,
}

pub type MetricMap = BTreeMap<Metric, f64>;

/// A labelled sub-result, e.g. one keep size of a subcomposition sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportGroup {
    pub label: String,
    pub metrics: MetricMap,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_seed: Vec<MetricMap>,
    /// Ratio of each metric to the parent report's value.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub retention: MetricMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub metrics: MetricMap,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_seed: Vec<MetricMap>,
    pub config_echo: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<ReportGroup>,
}

impl EvalReport {
    pub fn new(task: Task, metrics: MetricMap) -> Self {
        EvalReport {
            task,
            metrics,
            per_seed: Vec::new(),
            config_echo: serde_json::Value::Null,
            groups: Vec::new(),
        }
    }

    pub fn with_echo(mut self, echo: serde_json::Value) -> Self {
        self.config_echo = echo;
        self
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        self.metrics.get(&m).copied()
    }

    pub fn group(&self, label: &str) -> Option<&ReportGroup> {
        self.groups.iter().find(|g| g.label == label)
    }

    /// Combines per-seed reports of one task: their metric maps become
    /// `per_seed` and the top-level metrics are the means.
    pub fn aggregate(task: Task, runs: &[EvalReport], echo: serde_json::Value) -> Self {
        let per_seed: Vec<MetricMap> = runs.iter().map(|r| r.metrics.clone()).collect();
        EvalReport {
            task,
            metrics: mean_metrics(&per_seed),
            per_seed,
            config_echo: echo,
            groups: Vec::new(),
        }
    }
}

/// Per-metric mean over the maps that contain it.
pub fn mean_metrics(maps: &[MetricMap]) -> MetricMap {
    let mut sums: BTreeMap<Metric, (f64, usize)> = BTreeMap::new();
    for m in maps {
        for (&k, &v) in m {
            let e = sums.entry(k).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}
