//! Synthetic graphs with known memberships, and scoring of recovered ones.

use crate::compgeo::{closure, helmert_basis, ilr, Composition};
use crate::error::{Error, Result};
use crate::evalsuite::{interiority_of, EvalReport, Metric, MetricMap, ReportGroup, Task, NEAR_CORNER_THRESHOLD};
use crate::graphio::Graph;
use crate::model::{sigmoid, ModelState};
use crate::train::{fit, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::path::Path;

pub const P_IN: f64 = 0.9;
pub const CONTINUOUS_ALPHA: f64 = 5.0;
pub const NEAR_DISCRETE_ALPHA: f64 = 0.1;

const BISECTION_STEPS: usize = 200;
const DEGREE_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Continuous,
    NearDiscrete,
}

impl Regime {
    pub fn concentration(self) -> f64 {
        match self {
            Regime::Continuous => CONTINUOUS_ALPHA,
            Regime::NearDiscrete => NEAR_DISCRETE_ALPHA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Bilinear,
    IlrDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub k_true: usize,
    pub regime: Regime,
    pub generator: Generator,
    pub target_mean_degree: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_true < 2 {
            return Err(Error::KTooSmall(self.k_true));
        }
        if self.n <= self.k_true {
            return Err(Error::InvalidConfig(format!(
                "need N > K_true, got N = {} and K_true = {}",
                self.n, self.k_true
            )));
        }
        let max = (self.n - 1) as f64;
        if !(self.target_mean_degree > 0.0 && self.target_mean_degree < max) {
            return Err(Error::InvalidConfig(format!(
                "target mean degree {} outside (0, {max})",
                self.target_mean_degree
            )));
        }
        Ok(())
    }
}

/// Dirichlet memberships with a symmetric concentration set by the regime.
pub fn sample_memberships(config: &SynthConfig) -> Result<Vec<Composition>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gamma = Gamma::new(config.regime.concentration(), 1.0)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    (0..config.n)
        .map(|_| {
            // Small shapes can underflow to exact zero; keep the draw interior.
            let raw: Vec<f64> = (0..config.k_true)
                .map(|_| gamma.sample(&mut rng).max(f64::MIN_POSITIVE))
                .collect();
            closure(&raw)
        })
        .collect()
}

/// Calibrated edge-probability model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorParams {
    /// `P = z_iᵀ B z_j` with `B = p_out·11ᵀ + (p_in − p_out)·I`.
    Bilinear { p_in: f64, p_out: f64 },
    /// `P = σ(α − ‖ILR(z_i) − ILR(z_j)‖)` under the Helmert basis.
    IlrDistance { alpha: f64 },
}

impl GeneratorParams {
    /// Edge probability for the bilinear model on raw membership vectors.
    pub fn bilinear_probability(p_in: f64, p_out: f64, zi: &[f64], zj: &[f64]) -> f64 {
        let dot: f64 = zi.iter().zip(zj).map(|(a, b)| a * b).sum();
        let si: f64 = zi.iter().sum();
        let sj: f64 = zj.iter().sum();
        p_out * si * sj + (p_in - p_out) * dot
    }
}

/// Per-pair sufficient statistics, `i < j` in row-major order.
enum PairStats {
    Overlap(Vec<f64>),
    Distance(Vec<f64>),
}

fn pair_stats(memberships: &[Composition], generator: Generator) -> Result<PairStats> {
    let n = memberships.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    match generator {
        Generator::Bilinear => {
            for i in 0..n {
                for j in i + 1..n {
                    let (a, b) = (memberships[i].values(), memberships[j].values());
                    out.push(a.iter().zip(b).map(|(x, y)| x * y).sum());
                }
            }
            Ok(PairStats::Overlap(out))
        }
        Generator::IlrDistance => {
            let basis = helmert_basis(memberships[0].len())?;
            let pts = memberships
                .iter()
                .map(|z| ilr(z, &basis))
                .collect::<Result<Vec<_>>>()?;
            for i in 0..n {
                for j in i + 1..n {
                    out.push(pts[i].distance(&pts[j]));
                }
            }
            Ok(PairStats::Distance(out))
        }
    }
}

impl PairStats {
    fn probabilities<'a>(&'a self, params: &'a GeneratorParams) -> Box<dyn Iterator<Item = f64> + 'a> {
        match (self, *params) {
            (PairStats::Overlap(s), GeneratorParams::Bilinear { p_in, p_out }) => {
                Box::new(s.iter().map(move |&s| p_out + (p_in - p_out) * s))
            }
            (PairStats::Distance(d), GeneratorParams::IlrDistance { alpha }) => {
                Box::new(d.iter().map(move |&d| sigmoid(alpha - d)))
            }
            _ => unreachable!("generator and statistics always agree"),
        }
    }

    fn mean_degree(&self, params: &GeneratorParams, n: usize) -> f64 {
        2.0 * self.probabilities(params).sum::<f64>() / n as f64
    }
}

/// Bisects `f` (increasing) on `[lo, hi]` for `f(x) = target`.
fn bisect(mut lo: f64, mut hi: f64, target: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let v = f(mid);
        if (v - target).abs() <= DEGREE_TOL * target * 1e-3 {
            return Some(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    ((f(mid) - target).abs() <= DEGREE_TOL * target).then_some(mid)
}

fn calibrate(stats: &PairStats, config: &SynthConfig) -> Result<GeneratorParams> {
    let n = config.n;
    let target = config.target_mean_degree;
    let unreachable = |what: &str| {
        Error::TargetUnreachable(format!(
            "mean degree {target} not reachable with the {what} generator"
        ))
    };
    match stats {
        PairStats::Overlap(_) => {
            let deg = |p_in: f64, p_out: f64| stats.mean_degree(&GeneratorParams::Bilinear { p_in, p_out }, n);
            if deg(P_IN, 0.0) <= target {
                let p_out = bisect(0.0, P_IN, target, |p| deg(P_IN, p)).ok_or_else(|| unreachable("bilinear"))?;
                Ok(GeneratorParams::Bilinear { p_in: P_IN, p_out })
            } else {
                // Membership overlap alone already exceeds the target at
                // p_out = 0; fall back to shrinking p_in.
                log::warn!("bilinear target {target} below the p_out = 0 density; rescaling p_in");
                let p_in = bisect(0.0, P_IN, target, |p| deg(p, 0.0)).ok_or_else(|| unreachable("bilinear"))?;
                Ok(GeneratorParams::Bilinear { p_in, p_out: 0.0 })
            }
        }
        PairStats::Distance(d) => {
            let dmax = d.iter().copied().fold(0.0, f64::max);
            let deg = |alpha: f64| stats.mean_degree(&GeneratorParams::IlrDistance { alpha }, n);
            let alpha = bisect(-dmax - 50.0, 50.0, target, deg).ok_or_else(|| unreachable("ILR-distance"))?;
            Ok(GeneratorParams::IlrDistance { alpha })
        }
    }
}

/// A sampled graph with the calibrated generator and its expected degree.
#[derive(Debug, Clone)]
pub struct SynthGraph {
    pub graph: Graph,
    pub params: GeneratorParams,
    pub expected_mean_degree: f64,
}

/// Calibrates the generator to the target mean degree by bisection and draws
/// independent Bernoulli edges for every pair `i < j`.
pub fn generate_graph(memberships: &[Composition], config: &SynthConfig) -> Result<SynthGraph> {
    config.validate()?;
    if memberships.len() != config.n {
        return Err(Error::DimMismatch {
            expected: config.n,
            got: memberships.len(),
        });
    }
    if let Some(z) = memberships.iter().find(|z| z.len() != config.k_true) {
        return Err(Error::DimMismatch {
            expected: config.k_true,
            got: z.len(),
        });
    }
    let stats = pair_stats(memberships, config.generator)?;
    let params = calibrate(&stats, config)?;
    let expected_mean_degree = stats.mean_degree(&params, config.n);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let n = config.n;
    let mut edges = Vec::new();
    let mut probs = stats.probabilities(&params);
    for i in 0..n {
        for j in i + 1..n {
            let p = probs.next().expect("one probability per pair");
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Ok(SynthGraph {
        graph: Graph::new(n, edges)?,
        params,
        expected_mean_degree,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    pub l1: f64,
    pub cosine: f64,
    pub js: f64,
    /// `permutation[t]` is the learned component matched to truth component `t`.
    pub permutation: Vec<usize>,
}

/// Minimum-cost perfect assignment on a square cost matrix; returns the
/// column assigned to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // Potentials and matching are 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[row_of[j] - 1] = j - 1;
    }
    assign
}

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

/// Jensen-Shannon divergence in nats.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl_to_mixture(p, &m) + 0.5 * kl_to_mixture(q, &m)).clamp(0.0, std::f64::consts::LN_2)
}

/// Aligns learned components to the truth, then averages per-node ℓ1,
/// cosine similarity and Jensen-Shannon divergence.
pub fn score_recovery(learned: &[Composition], truth: &[Composition]) -> Result<RecoveryScore> {
    if learned.len() != truth.len() {
        return Err(Error::DimMismatch {
            expected: truth.len(),
            got: learned.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::DegenerateData("no memberships to score".into()));
    }
    let k = truth[0].len();
    for z in learned.iter().chain(truth) {
        if z.len() != k {
            return Err(Error::DimMismatch { expected: k, got: z.len() });
        }
    }
    let n = truth.len() as f64;
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|t| {
            (0..k)
                .map(|l| truth.iter().zip(learned).map(|(a, b)| (a[t] - b[l]).abs()).sum::<f64>() / n)
                .collect()
        })
        .collect();
    let permutation = hungarian(&cost);

    let (mut l1, mut cosine, mut js) = (0.0, 0.0, 0.0);
    for (t, l) in truth.iter().zip(learned) {
        let aligned: Vec<f64> = permutation.iter().map(|&c| l[c]).collect();
        let t = t.values();
        l1 += t.iter().zip(&aligned).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let dot: f64 = t.iter().zip(&aligned).map(|(a, b)| a * b).sum();
        let norms = t.iter().map(|a| a * a).sum::<f64>().sqrt() * aligned.iter().map(|a| a * a).sum::<f64>().sqrt();
        cosine += dot / norms;
        js += jensen_shannon(t, &aligned);
    }
    Ok(RecoveryScore {
        l1: l1 / n,
        cosine: cosine / n,
        js: js / n,
        permutation,
    })
}

/// Every artifact of one recovery run.
#[derive(Debug, Clone)]
pub struct RecoveryRun {
    pub truth: Vec<Composition>,
    pub graph: SynthGraph,
    pub state: ModelState,
    pub score: RecoveryScore,
    pub report: EvalReport,
}

/// Samples memberships, generates a graph, fits a model with `K = K_true`
/// and scores the recovered compositions.
pub fn run_recovery(config: &SynthConfig, train: &TrainConfig) -> Result<RecoveryRun> {
    let truth = sample_memberships(config)?;
    let graph = generate_graph(&truth, config)?;
    let train = TrainConfig {
        k: config.k_true,
        ..train.clone()
    };
    let state = fit(&graph.graph, &train)?;
    let learned = state.compositions();
    let score = score_recovery(&learned, &truth)?;

    let learned_int = interiority_of(&learned, NEAR_CORNER_THRESHOLD);
    let truth_int = interiority_of(&truth, NEAR_CORNER_THRESHOLD);
    let mut metrics = MetricMap::from([
        (Metric::L1, score.l1),
        (Metric::Cosine, score.cosine),
        (Metric::Js, score.js),
    ]);
    metrics.extend(learned_int.metrics.clone());
    let mut report = EvalReport::new(Task::Recovery, metrics).with_echo(json!({
        "synth": config,
        "train": train,
        "generator_params": graph.params,
        "expected_mean_degree": graph.expected_mean_degree,
        "realized_mean_degree": 2.0 * graph.graph.num_edges() as f64 / config.n as f64,
        "permutation": score.permutation,
    }));
    report.groups = vec![
        ReportGroup {
            label: "truth".into(),
            metrics: truth_int.metrics,
            per_seed: Vec::new(),
            retention: MetricMap::new(),
        },
        ReportGroup {
            label: "learned".into(),
            metrics: learned_int.metrics,
            per_seed: Vec::new(),
            retention: MetricMap::new(),
        },
    ];
    Ok(RecoveryRun {
        truth,
        graph,
        state,
        score,
        report,
    })
}

pub fn run_recovery_experiment(config: &SynthConfig, train: &TrainConfig) -> Result<EvalReport> {
    run_recovery(config, train).map(|r| r.report)
}

/// Writes one row per node: `node,c0,...,c{K-1}`.
pub fn write_compositions_csv(path: impl AsRef<Path>, comps: &[Composition], names: Option<&[String]>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let k = comps.first().map_or(0, Composition::len);
    let mut header = vec!["node".to_string()];
    header.extend((0..k).map(|c| format!("c{c}")));
    w.write_record(&header)?;
    for (i, z) in comps.iter().enumerate() {
        let mut row = vec![names.map_or_else(|| i.to_string(), |n| n[i].clone())];
        row.extend(z.values().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
