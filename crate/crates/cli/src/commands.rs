use crate::config::{pick, FileConfig};
use crate::{BasisArg, TrainArgs};
use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use compograph::evalsuite::{
    balance_probe_with_basis, interiority_stats, link_predict_eval, multinomial_probe, subcomp_eval, EvalReport,
    ProbeSplit, ReportGroup, SubcompOptions, Task, DEFAULT_L2_GRID, NEAR_CORNER_THRESHOLD,
};
use compograph::graphio::{connected_link_split, load_edge_list, load_labels, Graph, NodeIds};
use compograph::interpret::{
    export_basis, export_trajectory_with_basis, write_coordinates_by_label_csv, write_features_csv,
    write_loadings_csv, write_pair_features_csv, write_trajectory_csv, BalanceLoadings, DyadicOp,
};
use compograph::model::{embed_all, embed_with, BasisMode, Checkpoint, ModelState};
use compograph::synth::{run_recovery, write_compositions_csv, Generator, Regime, SynthConfig};
use compograph::train::{fit_with_progress, FitOutcome, TrainConfig};
use serde::Serialize;
use serde_json::json;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

fn train_config(args: &TrainArgs, file: &FileConfig, k: Option<usize>) -> TrainConfig {
    let d = TrainConfig::default();
    let f = &file.train;
    let basis = args.basis.map(|b| match b {
        BasisArg::Helmert => BasisMode::FixedHelmert,
        BasisArg::Learned => BasisMode::LearnedQr,
    });
    TrainConfig {
        iterations: pick(&args.iterations, &f.iterations, d.iterations),
        lr: pick(&args.lr, &f.lr, d.lr),
        neg_ratio: pick(&args.neg_ratio, &f.neg_ratio, d.neg_ratio),
        seed: pick(&args.seed, &f.seed, d.seed),
        k: k.unwrap_or_else(|| pick(&args.k, &f.k, d.k)),
        basis_mode: pick(&basis, &f.basis_mode, d.basis_mode),
        log_every: pick(&args.log_every, &f.log_every, d.log_every),
    }
}

fn fit_logged(graph: &Graph, cfg: &TrainConfig) -> Result<FitOutcome> {
    Ok(fit_with_progress(graph, cfg, |iter, loss| {
        eprintln!("iter={iter} nll_est={loss}");
    })?)
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_nodes(path: &Path, ids: &NodeIds) -> Result<()> {
    let mut text = String::from("index\tnode\n");
    for i in 0..ids.len() {
        writeln!(text, "{i}\t{}", ids.name(i))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_state(path: &Path, num_nodes: Option<usize>) -> Result<ModelState> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let state = ckpt.to_state()?;
    if let Some(n) = num_nodes {
        if n != state.num_nodes() {
            bail!(
                "checkpoint {} has {} nodes but the graph has {n}",
                path.display(),
                state.num_nodes()
            );
        }
    }
    Ok(state)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Dimensions to run: explicit `--dims`, else the file, else `K - 1`.
fn resolve_dims(flag: &[usize], file: &FileConfig, train: &TrainArgs) -> Result<Vec<usize>> {
    let dims = if !flag.is_empty() {
        flag.to_vec()
    } else if let Some(d) = &file.eval.dims {
        d.clone()
    } else {
        vec![pick(&train.k, &file.train.k, TrainConfig::default().k).saturating_sub(1)]
    };
    if dims.is_empty() || dims.contains(&0) {
        bail!(compograph::Error::InvalidConfig(format!(
            "embedding dimensions must be positive, got {dims:?}"
        )));
    }
    Ok(dims)
}

fn per_dim_report(task: Task, groups: Vec<ReportGroup>, echo: serde_json::Value) -> EvalReport {
    let first = &groups[0];
    let mut report = EvalReport::new(task, first.metrics.clone()).with_echo(echo);
    report.per_seed = first.per_seed.clone();
    report.groups = groups;
    report
}

fn group_from_runs(label: String, runs: &[EvalReport]) -> ReportGroup {
    let agg = EvalReport::aggregate(runs[0].task, runs, serde_json::Value::Null);
    ReportGroup {
        label,
        metrics: agg.metrics,
        per_seed: agg.per_seed,
        retention: Default::default(),
    }
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    /// Whitespace-separated edge list, one `u v` pair per line.
    #[arg(long)]
    edges: PathBuf,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
}

impl TrainCmd {
    pub fn run(self, file: &FileConfig) -> Result<()> {
        let cfg = train_config(&self.train, file, None);
        cfg.validate()?;
        let (graph, ids) = load_edge_list(&self.edges)?;
        prepare_out(&self.out)?;
        let outcome = fit_logged(&graph, &cfg)?;
        Checkpoint::from_state(&outcome.state, cfg.seed, cfg.iterations).save(self.out.join("checkpoint.json"))?;
        write_nodes(&self.out.join("nodes.tsv"), &ids)?;
        let mut report = interiority_stats(&outcome.state, NEAR_CORNER_THRESHOLD);
        report.task = Task::Training;
        report.config_echo = json!({
            "command": "train",
            "edges": path_str(&self.edges),
            "num_nodes": graph.num_nodes(),
            "num_edges": graph.num_edges(),
            "train": cfg,
            "near_corner_threshold": NEAR_CORNER_THRESHOLD,
            "trace": outcome.trace,
        });
        write_json(&self.out.join("report.json"), &report)
    }
}

#[derive(Debug, Args)]
pub struct LinkpredCmd {
    #[arg(long)]
    edges: PathBuf,
    /// Fraction of edges held out as positive test pairs.
    #[arg(long)]
    fraction: Option<f64>,
    /// Embedding dimensions D to evaluate; each trains with K = D + 1.
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    /// Number of seeds; run r uses seed `--seed + r` for split and training.
    #[arg(long)]
    seeds: Option<usize>,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
}

impl LinkpredCmd {
    pub fn run(self, file: &FileConfig) -> Result<()> {
        let fraction = pick(&self.fraction, &file.eval.fraction, 0.5);
        let seeds = pick(&self.seeds, &file.eval.seeds, 1);
        let dims = resolve_dims(&self.dims, file, &self.train)?;
        let base = train_config(&self.train, file, None);
        for &d in &dims {
            train_config(&self.train, file, Some(d + 1)).validate()?;
        }
        if seeds == 0 {
            bail!(compograph::Error::InvalidConfig("seeds must be positive".into()));
        }
        let (graph, ids) = load_edge_list(&self.edges)?;
        prepare_out(&self.out)?;
        write_nodes(&self.out.join("nodes.tsv"), &ids)?;

        let mut groups = Vec::new();
        for &d in &dims {
            let mut runs = Vec::new();
            for r in 0..seeds {
                let seed = base.seed + r as u64;
                let split = connected_link_split(&graph, fraction, seed)?;
                let cfg = TrainConfig {
                    seed,
                    ..train_config(&self.train, file, Some(d + 1))
                };
                let outcome = fit_logged(&split.residual, &cfg)?;
                Checkpoint::from_state(&outcome.state, seed, cfg.iterations)
                    .save(self.out.join(format!("checkpoint_d{d}_seed{seed}.json")))?;
                runs.push(link_predict_eval(&outcome.state, &split)?);
            }
            groups.push(group_from_runs(format!("d={d}"), &runs));
        }
        let echo = json!({
            "command": "linkpred",
            "edges": path_str(&self.edges),
            "fraction": fraction,
            "dims": dims,
            "seeds": (0..seeds).map(|r| base.seed + r as u64).collect::<Vec<_>>(),
            "train": base,
        });
        write_json(&self.out.join("report.json"), &per_dim_report(Task::LinkPrediction, groups, echo))
    }
}

#[derive(Debug, Args)]
pub struct NodeclassCmd {
    #[arg(long)]
    edges: PathBuf,
    /// Tab-separated `node label` file.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_delimiter = ',')]
    dims: Vec<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    /// L2 penalties tried by the probe; picked by validation micro-F1.
    #[arg(long, value_delimiter = ',')]
    l2_grid: Vec<f64>,
    /// Write the node embeddings of every run as CSV.
    #[arg(long)]
    export_features: bool,
    /// Also write average/Hadamard/weighted-L1/weighted-L2 edge features.
    #[arg(long)]
    export_pair_features: bool,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
}

impl NodeclassCmd {
    pub fn run(self, file: &FileConfig) -> Result<()> {
        let seeds = pick(&self.seeds, &file.eval.seeds, 1);
        let dims = resolve_dims(&self.dims, file, &self.train)?;
        let l2_grid = if !self.l2_grid.is_empty() {
            self.l2_grid.clone()
        } else {
            file.eval.l2_grid.clone().unwrap_or_else(|| DEFAULT_L2_GRID.to_vec())
        };
        let base = train_config(&self.train, file, None);
        for &d in &dims {
            train_config(&self.train, file, Some(d + 1)).validate()?;
        }
        if seeds == 0 {
            bail!(compograph::Error::InvalidConfig("seeds must be positive".into()));
        }
        let (graph, ids) = load_edge_list(&self.edges)?;
        let labels = load_labels(&self.labels, &ids)?;
        prepare_out(&self.out)?;
        write_nodes(&self.out.join("nodes.tsv"), &ids)?;

        let mut groups = Vec::new();
        for &d in &dims {
            let mut runs = Vec::new();
            for r in 0..seeds {
                let seed = base.seed + r as u64;
                let split = ProbeSplit::stratified(&labels, seed)?;
                let cfg = TrainConfig {
                    seed,
                    ..train_config(&self.train, file, Some(d + 1))
                };
                let outcome = fit_logged(&graph, &cfg)?;
                let tag = format!("d{d}_seed{seed}");
                Checkpoint::from_state(&outcome.state, seed, cfg.iterations)
                    .save(self.out.join(format!("checkpoint_{tag}.json")))?;
                let emb = embed_all(&outcome.state)?;
                if self.export_features {
                    write_features_csv(self.out.join(format!("features_{tag}.csv")), &emb, Some(&ids))?;
                }
                if self.export_pair_features {
                    write_pair_features_csv(
                        self.out.join(format!("pair_features_{tag}.csv")),
                        &emb,
                        graph.edges(),
                        &DyadicOp::ALL,
                        Some(&ids),
                    )?;
                }
                runs.push(multinomial_probe(&emb, &labels, &split, &l2_grid)?);
            }
            groups.push(group_from_runs(format!("d={d}"), &runs));
        }
        let echo = json!({
            "command": "nodeclass",
            "edges": path_str(&self.edges),
            "labels": path_str(&self.labels),
            "dims": dims,
            "seeds": (0..seeds).map(|r| base.seed + r as u64).collect::<Vec<_>>(),
            "l2_grid": l2_grid,
            "split_ratios": [0.6, 0.2, 0.2],
            "train": base,
        });
        write_json(&self.out.join("report.json"), &per_dim_report(Task::NodeClassification, groups, echo))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Calibration {
    None,
    Median,
    Both,
}

#[derive(Debug, Args)]
pub struct SubcompCmd {
    #[arg(long)]
    edges: PathBuf,
    /// Model trained on the residual of the same split; trained here if absent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    fraction: Option<f64>,
    /// Seed of the link split (defaults to the training seed).
    #[arg(long)]
    split_seed: Option<u64>,
    /// Numbers of kept components K'.
    #[arg(long, value_delimiter = ',')]
    keep: Vec<usize>,
    #[arg(long)]
    masks: Option<usize>,
    #[arg(long, value_enum)]
    calibration: Option<Calibration>,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
}

impl SubcompCmd {
    pub fn run(self, file: &FileConfig) -> Result<()> {
        let fraction = pick(&self.fraction, &file.eval.fraction, 0.5);
        let cfg = train_config(&self.train, file, None);
        cfg.validate()?;
        let split_seed = pick(&self.split_seed, &file.eval.split_seed, cfg.seed);
        let masks = pick(&self.masks, &file.eval.masks, SubcompOptions::default().masks_per_size);
        let keep = if !self.keep.is_empty() {
            self.keep.clone()
        } else {
            file.eval.keep.clone().unwrap_or_default()
        };
        if keep.is_empty() {
            bail!(compograph::Error::InvalidConfig("at least one --keep size is required".into()));
        }
        let calibration = match (&self.calibration, &file.eval.calibration) {
            (Some(c), _) => *c,
            (None, Some(s)) => Calibration::from_str(s, true)
                .map_err(|e| compograph::Error::InvalidConfig(format!("calibration: {e}")))?,
            (None, None) => Calibration::Both,
        };

        let (graph, ids) = load_edge_list(&self.edges)?;
        let split = connected_link_split(&graph, fraction, split_seed)?;
        prepare_out(&self.out)?;
        write_nodes(&self.out.join("nodes.tsv"), &ids)?;
        let state = match &self.checkpoint {
            Some(p) => load_state(p, Some(graph.num_nodes()))?,
            None => {
                let outcome = fit_logged(&split.residual, &cfg)?;
                Checkpoint::from_state(&outcome.state, cfg.seed, cfg.iterations)
                    .save(self.out.join("checkpoint.json"))?;
                outcome.state
            }
        };
        let modes: &[bool] = match calibration {
            Calibration::None => &[false],
            Calibration::Median => &[true],
            Calibration::Both => &[false, true],
        };
        let mut report: Option<EvalReport> = None;
        for &calibrate in modes {
            let opts = SubcompOptions {
                masks_per_size: masks,
                calibrate,
                seed: split_seed,
            };
            let mut r = subcomp_eval(&state, &split, &keep, &opts)?;
            if calibrate {
                r.groups.iter_mut().for_each(|g| g.label.push_str(",calibrated"));
            }
            match &mut report {
                None => report = Some(r),
                Some(acc) => acc.groups.extend(r.groups),
            }
        }
        let mut report = report.expect("at least one calibration mode");
        report.config_echo = json!({
            "command": "subcomp",
            "edges": path_str(&self.edges),
            "checkpoint": self.checkpoint.as_deref().map(path_str),
            "fraction": fraction,
            "split_seed": split_seed,
            "keep": keep,
            "masks_per_size": masks,
            "calibration": format!("{calibration:?}").to_lowercase(),
            "k": state.k(),
            "train": self.checkpoint.is_none().then_some(&cfg),
        });
        write_json(&self.out.join("report.json"), &report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeneratorArg {
    Ilr,
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Continuous,
    #[value(alias = "near-discrete")]
    Discrete,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    #[arg(long, value_enum)]
    generator: Option<GeneratorArg>,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    /// Number of nodes.
    #[arg(long)]
    n: Option<usize>,
    /// Target expected mean degree.
    #[arg(long)]
    degree: Option<f64>,
    /// Training flags; `--K` is the true number of components.
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    out: PathBuf,
}

impl SynthCmd {
    pub fn run(self, file: &FileConfig) -> Result<()> {
        let f = &file.synth;
        let generator = match self.generator {
            Some(GeneratorArg::Ilr) => Generator::IlrDistance,
            Some(GeneratorArg::Bilinear) => Generator::Bilinear,
            None => f.generator.unwrap_or(Generator::IlrDistance),
        };
        let regime = match self.regime {
            Some(RegimeArg::Continuous) => Regime::Continuous,
            Some(RegimeArg::Discrete) => Regime::NearDiscrete,
            None => f.regime.unwrap_or(Regime::Continuous),
        };
        let k_true = self.train.k.or(f.k).or(file.train.k).unwrap_or(8);
        let cfg = train_config(&self.train, file, Some(k_true));
        cfg.validate()?;
        let synth = SynthConfig {
            n: pick(&self.n, &f.n, 800),
            k_true,
            regime,
            generator,
            target_mean_degree: pick(&self.degree, &f.mean_degree, 20.0),
            seed: cfg.seed,
        };
        synth.validate()?;
        prepare_out(&self.out)?;
        let run = run_recovery(&synth, &cfg)?;
        let mut edges = String::new();
        for &(i, j) in run.graph.graph.edges() {
            writeln!(edges, "{i}\t{j}")?;
        }
        fs::write(self.out.join("edges.tsv"), edges).context("writing edges.tsv")?;
        write_compositions_csv(self.out.join("truth.csv"), &run.truth, None)?;
        write_compositions_csv(self.out.join("learned.csv"), &run.state.compositions(), None)?;
        Checkpoint::from_state(&run.state, cfg.seed, cfg.iterations).save(self.out.join("checkpoint.json"))?;
        write_json(&self.out.join("recovery.json"), &run.score)?;
        let mut report = run.report;
        if let Some(echo) = report.config_echo.as_object_mut() {
            echo.insert("command".into(), json!("synth"));
        }
        write_json(&self.out.join("report.json"), &report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeBasis {
    Current,
    Varimax,
    Both,
}

#[derive(Debug, Args)]
pub struct ProbeCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Edge list the checkpoint was trained on (for node names).
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Equal-frequency bins for the mutual-information estimate.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    basis: ProbeBasis,
    #[arg(long)]
    out: PathBuf,
}

impl ProbeCmd {
    pub fn run(self, file: &FileConfig) -> Result<()> {
        let bins = pick(&self.bins, &file.eval.bins, 16);
        let (graph, ids) = load_edge_list(&self.edges)?;
        let labels = load_labels(&self.labels, &ids)?;
        let state = load_state(&self.checkpoint, Some(graph.num_nodes()))?;
        prepare_out(&self.out)?;
        let variants: &[(bool, &str)] = match self.basis {
            ProbeBasis::Current => &[(false, "")],
            ProbeBasis::Varimax => &[(true, "_varimax")],
            ProbeBasis::Both => &[(false, ""), (true, "_varimax")],
        };
        let mut report: Option<EvalReport> = None;
        for &(rotate, suffix) in variants {
            let basis = export_basis(&state, rotate)?;
            write_loadings_csv(self.out.join(format!("loadings{suffix}.csv")), &BalanceLoadings::from_basis(&basis))?;
            let emb = embed_with(&state, &basis)?;
            write_coordinates_by_label_csv(self.out.join(format!("coords_by_label{suffix}.csv")), &emb, &labels, Some(&ids))?;
            let r = balance_probe_with_basis(&state, &basis, &labels, bins)?;
            match &mut report {
                None => report = Some(r),
                Some(acc) => acc.groups.push(ReportGroup {
                    label: "varimax".into(),
                    metrics: r.metrics,
                    per_seed: Vec::new(),
                    retention: Default::default(),
                }),
            }
        }
        let mut report = report.expect("at least one basis variant");
        if let Some(echo) = report.config_echo.as_object_mut() {
            echo.insert("command".into(), json!("probe"));
            echo.insert("checkpoint".into(), json!(path_str(&self.checkpoint)));
            echo.insert("labels".into(), json!(path_str(&self.labels)));
            echo.insert("variants".into(), json!(format!("{:?}", self.basis).to_lowercase()));
        }
        write_json(&self.out.join("report.json"), &report)
    }
}

#[derive(Debug, Args)]
pub struct TrajectoryCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    /// 0-based node index.
    #[arg(long)]
    node: usize,
    /// Component raised along the path (0-based).
    #[arg(long)]
    a: usize,
    /// Component lowered along the path (0-based).
    #[arg(long)]
    b: usize,
    #[arg(long, allow_negative_numbers = true, default_value_t = -2.0)]
    smin: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 2.0)]
    smax: f64,
    #[arg(long, default_value_t = 41)]
    steps: usize,
    /// Express the path in the varimax-rotated basis.
    #[arg(long)]
    varimax: bool,
    #[arg(long)]
    out: PathBuf,
}

impl TrajectoryCmd {
    pub fn run(self, _file: &FileConfig) -> Result<()> {
        if self.steps == 0 || !(self.smin.is_finite() && self.smax.is_finite()) || self.smin > self.smax {
            bail!(compograph::Error::InvalidConfig(format!(
                "need steps >= 1 and finite smin <= smax, got {} steps over [{}, {}]",
                self.steps, self.smin, self.smax
            )));
        }
        let state = load_state(&self.checkpoint, None)?;
        let last = (self.steps - 1).max(1) as f64;
        // Endpoint-weighted form keeps s = 0 exact on symmetric grids.
        let grid: Vec<f64> = (0..self.steps)
            .map(|i| (self.smin * (last - i as f64) + self.smax * i as f64) / last)
            .collect();
        let basis = export_basis(&state, self.varimax)?;
        let path = export_trajectory_with_basis(&state, &basis, self.node, self.a, self.b, &grid)?;
        prepare_out(&self.out)?;
        Ok(write_trajectory_csv(self.out.join("trajectory.csv"), &path)?)
    }
}
