//! Node parameters, the latent-distance edge likelihood, and its gradients.
//!
//! Each node carries logits `z̃_i ∈ R^K` (its composition is `softmax(z̃_i)`)
//! and a degree bias `γ_i`. Because `log softmax(z̃) = z̃ − lse(z̃)·1` and the
//! basis columns are sum-zero, the ILR embedding is simply `x_i = Vᵀ z̃_i`.
//! Edge log-odds are `η_ij = −‖x_i − x_j‖ + γ_i + γ_j`.

use crate::compgeo::{
    helmert_basis, learned_basis_backward, learned_basis_with_r, softmax, Composition, IlrBasis,
};
use crate::error::{Error, Result};
use crate::graphio::{sample_pair, Graph};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Smoothing inside the distance, `√(‖d‖² + ε²)`.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisMode {
    FixedHelmert,
    LearnedQr,
}

/// Trainable parameters. Matrices are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    num_nodes: usize,
    k: usize,
    pub logits: Vec<f64>,
    pub biases: Vec<f64>,
    basis_mode: BasisMode,
    /// `K × (K-1)` basis parameters, present iff the mode is `LearnedQr`.
    pub basis_params: Option<Vec<f64>>,
}

impl ModelState {
    pub fn new(
        num_nodes: usize,
        k: usize,
        logits: Vec<f64>,
        biases: Vec<f64>,
        basis_mode: BasisMode,
        basis_params: Option<Vec<f64>>,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::KTooSmall(k));
        }
        if logits.len() != num_nodes * k {
            return Err(Error::ShapeMismatch(format!(
                "logits: expected {} values, got {}",
                num_nodes * k,
                logits.len()
            )));
        }
        if biases.len() != num_nodes {
            return Err(Error::ShapeMismatch(format!(
                "biases: expected {num_nodes} values, got {}",
                biases.len()
            )));
        }
        match (basis_mode, &basis_params) {
            (BasisMode::FixedHelmert, None) => {}
            (BasisMode::LearnedQr, Some(w)) if w.len() == k * (k - 1) => {}
            _ => {
                return Err(Error::ShapeMismatch(
                    "basis parameters must be K×(K-1) iff the basis is learned".into(),
                ))
            }
        }
        let all_finite = logits
            .iter()
            .chain(&biases)
            .chain(basis_params.iter().flatten())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidConfig("model parameters must be finite".into()));
        }
        Ok(ModelState {
            num_nodes,
            k,
            logits,
            biases,
            basis_mode,
            basis_params,
        })
    }

    /// Logits `0.1·N(0,1)`, zero biases, and `N(0,1)` basis parameters.
    pub fn init<R: Rng>(num_nodes: usize, k: usize, basis_mode: BasisMode, rng: &mut R) -> Result<Self> {
        if k < 2 {
            return Err(Error::KTooSmall(k));
        }
        let logits = (0..num_nodes * k)
            .map(|_| 0.1 * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect::<Vec<f64>>();
        let basis_params = match basis_mode {
            BasisMode::FixedHelmert => None,
            BasisMode::LearnedQr => Some(
                (0..k * (k - 1))
                    .map(|_| StandardNormal.sample(rng))
                    .collect(),
            ),
        };
        Self::new(
            num_nodes,
            k,
            logits,
            vec![0.0; num_nodes],
            basis_mode,
            basis_params,
        )
    }

    /// A Helmert-basis state whose embeddings are exactly `points`
    /// (row-major, `N × (K-1)`), via `z̃_i = V x_i`.
    pub fn from_ilr_points(points: &Embeddings, biases: Vec<f64>) -> Result<Self> {
        let k = points.dim() + 1;
        let basis = helmert_basis(k)?;
        let logits = (0..points.len())
            .flat_map(|i| basis.lift(points.row(i)))
            .collect();
        Self::new(points.len(), k, logits, biases, BasisMode::FixedHelmert, None)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn basis_mode(&self) -> BasisMode {
        self.basis_mode
    }

    pub fn logit_row(&self, i: usize) -> &[f64] {
        &self.logits[i * self.k..(i + 1) * self.k]
    }

    pub fn composition(&self, i: usize) -> Composition {
        softmax(self.logit_row(i))
    }

    pub fn compositions(&self) -> Vec<Composition> {
        (0..self.num_nodes).map(|i| self.composition(i)).collect()
    }

    pub fn basis_params_matrix(&self) -> Option<DMatrix<f64>> {
        self.basis_params
            .as_ref()
            .map(|w| DMatrix::from_row_slice(self.k, self.k - 1, w))
    }

    /// The current ILR basis: Helmert, or the centered-QR map of the
    /// basis parameters.
    pub fn basis(&self) -> Result<IlrBasis> {
        match self.basis_params_matrix() {
            None => helmert_basis(self.k),
            Some(w) => Ok(learned_basis_with_r(&w)?.0),
        }
    }

    /// All parameters in the layout `[logits, biases, basis_params]`.
    pub fn params_flat(&self) -> Vec<f64> {
        self.logits
            .iter()
            .chain(&self.biases)
            .chain(self.basis_params.iter().flatten())
            .copied()
            .collect()
    }

    /// Inverse of [`ModelState::params_flat`].
    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let (l, rest) = flat.split_at(self.logits.len());
        let (b, w) = rest.split_at(self.biases.len());
        self.logits.copy_from_slice(l);
        self.biases.copy_from_slice(b);
        if let Some(params) = self.basis_params.as_mut() {
            params.copy_from_slice(w);
        }
        Ok(())
    }

    /// Number of scalar parameters in the flattened layout
    /// `[logits, biases, basis_params]`.
    pub fn num_params(&self) -> usize {
        self.logits.len() + self.biases.len() + self.basis_params.as_ref().map_or(0, Vec::len)
    }
}

/// Row-major `N × D` matrix of ILR coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    dim: usize,
    data: Vec<f64>,
}

impl Embeddings {
    pub fn from_rows(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        Ok(Embeddings { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Smoothed distance `√(‖x_i − x_j‖² + ε²)`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        smoothed_distance(self.row(i), self.row(j))
    }
}

pub(crate) fn smoothed_distance(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sq + NORM_EPS * NORM_EPS).sqrt()
}

/// ILR coordinates of every node under an explicit basis.
pub fn embed_with(state: &ModelState, basis: &IlrBasis) -> Result<Embeddings> {
    if basis.k() != state.k {
        return Err(Error::DimMismatch {
            expected: state.k,
            got: basis.k(),
        });
    }
    let data = (0..state.num_nodes)
        .flat_map(|i| basis.project(state.logit_row(i)))
        .collect();
    Embeddings::from_rows(basis.dim(), data)
}

/// ILR coordinates `x_i = Vᵀ z̃_i` of every node under the current basis.
pub fn embed_all(state: &ModelState) -> Result<Embeddings> {
    embed_with(state, &state.basis()?)
}

/// `η_ij` from precomputed embeddings.
pub fn log_odds_from(emb: &Embeddings, biases: &[f64], i: usize, j: usize) -> f64 {
    -emb.distance(i, j) + biases[i] + biases[j]
}

/// Edge log-odds `η_ij = −‖x_i − x_j‖ + γ_i + γ_j`.
pub fn log_odds(state: &ModelState, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::SelfPair(i));
    }
    let basis = state.basis()?;
    let xi = basis.project(state.logit_row(i));
    let xj = basis.project(state.logit_row(j));
    Ok(-smoothed_distance(&xi, &xj) + state.biases[i] + state.biases[j])
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Exact negative log-likelihood over all unordered pairs. Quadratic in N;
/// intended for small graphs and as a reference for the sampled objective.
pub fn nll_exact(state: &ModelState, graph: &Graph) -> Result<f64> {
    let emb = embed_all(state)?;
    let n = state.num_nodes;
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let eta = log_odds_from(&emb, &state.biases, i, j);
            let y = if graph.has_edge(i, j) { eta } else { 0.0 };
            total += softplus(eta) - y;
        }
    }
    Ok(total)
}

/// Observed edges plus a weighted sample of non-edges.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub pos_pairs: Vec<(usize, usize)>,
    pub neg_pairs: Vec<(usize, usize)>,
    /// Inverse inclusion ratio `(#non-edges) / |neg_pairs|`.
    pub neg_weight: f64,
}

impl PairBatch {
    /// All edges and `num_neg` non-edges drawn uniformly with replacement.
    pub fn sample<R: Rng>(graph: &Graph, num_neg: usize, rng: &mut R) -> Self {
        let available = graph.num_non_edges();
        let n = graph.num_nodes();
        let mut neg_pairs = Vec::with_capacity(num_neg);
        if available > 0 {
            while neg_pairs.len() < num_neg {
                let (i, j) = sample_pair(rng, n);
                if !graph.has_edge(i, j) {
                    neg_pairs.push((i, j));
                }
            }
        }
        let neg_weight = if neg_pairs.is_empty() {
            1.0
        } else {
            available as f64 / neg_pairs.len() as f64
        };
        PairBatch {
            pos_pairs: graph.edges().to_vec(),
            neg_pairs,
            neg_weight,
        }
    }

    /// Every non-edge exactly once with unit weight.
    pub fn exhaustive(graph: &Graph) -> Self {
        let n = graph.num_nodes();
        let neg_pairs = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !graph.has_edge(i, j))
            .collect();
        PairBatch {
            pos_pairs: graph.edges().to_vec(),
            neg_pairs,
            neg_weight: 1.0,
        }
    }
}

fn sampled_from(emb: &Embeddings, biases: &[f64], batch: &PairBatch) -> f64 {
    let pos: f64 = batch
        .pos_pairs
        .iter()
        .map(|&(i, j)| {
            let eta = log_odds_from(emb, biases, i, j);
            softplus(eta) - eta
        })
        .sum();
    let neg: f64 = batch
        .neg_pairs
        .iter()
        .map(|&(i, j)| softplus(log_odds_from(emb, biases, i, j)))
        .sum();
    pos + batch.neg_weight * neg
}

/// Negative-sampling estimate of the negative log-likelihood. Edge terms are
/// exact; only the non-edge softplus mass is estimated.
pub fn nll_sampled(state: &ModelState, batch: &PairBatch) -> Result<f64> {
    let emb = embed_all(state)?;
    Ok(sampled_from(&emb, &state.biases, batch))
}

/// Gradient of the sampled objective, laid out like [`ModelState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub logits: Vec<f64>,
    pub biases: Vec<f64>,
    pub basis_params: Option<Vec<f64>>,
}

impl Gradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.logits
            .iter()
            .chain(&self.biases)
            .chain(self.basis_params.iter().flatten())
            .copied()
            .collect()
    }
}

/// Analytic gradient of [`nll_sampled`].
pub fn grad(state: &ModelState, batch: &PairBatch) -> Result<Gradient> {
    loss_and_grad(state, batch).map(|(_, g)| g)
}

/// Objective value and its gradient in one pass.
pub fn loss_and_grad(state: &ModelState, batch: &PairBatch) -> Result<(f64, Gradient)> {
    let (n, k) = (state.num_nodes, state.k);
    let (basis, r) = match state.basis_params_matrix() {
        None => (helmert_basis(k)?, None),
        Some(w) => {
            let (b, r) = learned_basis_with_r(&w)?;
            (b, Some(r))
        }
    };
    let d = k - 1;
    let emb = embed_with(state, &basis)?;
    let mut g_x = vec![0.0; n * d];
    let mut g_bias = vec![0.0; n];
    let mut loss = 0.0;
    let mut diff = vec![0.0; d];

    let mut accumulate = |i: usize, j: usize, positive: bool, weight: f64| {
        let (xi, xj) = (emb.row(i), emb.row(j));
        let mut sq = 0.0;
        for b in 0..d {
            diff[b] = xi[b] - xj[b];
            sq += diff[b] * diff[b];
        }
        let dist = (sq + NORM_EPS * NORM_EPS).sqrt();
        let eta = -dist + state.biases[i] + state.biases[j];
        let sig = sigmoid(eta);
        // dL/dη
        let c = if positive {
            loss += softplus(eta) - eta;
            sig - 1.0
        } else {
            loss += weight * softplus(eta);
            weight * sig
        };
        g_bias[i] += c;
        g_bias[j] += c;
        let scale = c / dist;
        for b in 0..d {
            let g = scale * diff[b];
            g_x[i * d + b] -= g;
            g_x[j * d + b] += g;
        }
    };
    for &(i, j) in &batch.pos_pairs {
        accumulate(i, j, true, 1.0);
    }
    for &(i, j) in &batch.neg_pairs {
        accumulate(i, j, false, batch.neg_weight);
    }

    let mut g_logits = Vec::with_capacity(n * k);
    for i in 0..n {
        g_logits.extend(basis.lift(&g_x[i * d..(i + 1) * d]));
    }

    let g_params = match r {
        None => None,
        Some(r) => {
            // dL/dV = Σ_i z̃_i (dL/dx_i)ᵀ
            let mut g_v = DMatrix::zeros(k, d);
            for i in 0..n {
                let z = state.logit_row(i);
                let gx = &g_x[i * d..(i + 1) * d];
                for a in 0..k {
                    for b in 0..d {
                        g_v[(a, b)] += z[a] * gx[b];
                    }
                }
            }
            let g_w = learned_basis_backward(&basis, &r, &g_v);
            let mut flat = Vec::with_capacity(k * d);
            for a in 0..k {
                for b in 0..d {
                    flat.push(g_w[(a, b)]);
                }
            }
            Some(flat)
        }
    };

    Ok((
        loss,
        Gradient {
            logits: g_logits,
            biases: g_bias,
            basis_params: g_params,
        },
    ))
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk JSON form of a trained state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    #[serde(rename = "N")]
    pub num_nodes: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub basis_mode: BasisMode,
    pub logits: Vec<f64>,
    pub biases: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_params: Option<Vec<f64>>,
    pub seed: u64,
    pub iterations: usize,
}

impl Checkpoint {
    pub fn from_state(state: &ModelState, seed: u64, iterations: usize) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            num_nodes: state.num_nodes,
            k: state.k,
            basis_mode: state.basis_mode,
            logits: state.logits.clone(),
            biases: state.biases.clone(),
            basis_params: state.basis_params.clone(),
            seed,
            iterations,
        }
    }

    pub fn to_state(&self) -> Result<ModelState> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        ModelState::new(
            self.num_nodes,
            self.k,
            self.logits.clone(),
            self.biases.clone(),
            self.basis_mode,
            self.basis_params.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
