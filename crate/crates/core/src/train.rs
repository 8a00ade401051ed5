//! Adam and the fixed-iteration training loop.

use crate::error::{Error, Result};
use crate::graphio::Graph;
use crate::model::{loss_and_grad, BasisMode, ModelState, PairBatch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Adam moments and hyperparameters for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zero moments with the usual defaults `β₁ = 0.9`, `β₂ = 0.999`,
    /// `eps = 1e-8`.
    pub fn new(num_params: usize, lr: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], opt: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != opt.first_moment.len() {
        return Err(Error::ShapeMismatch(format!(
            "params {}, grads {}, moments {}",
            params.len(),
            grads.len(),
            opt.first_moment.len()
        )));
    }
    opt.step_count += 1;
    let t = opt.step_count as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(opt.first_moment.iter_mut())
        .zip(opt.second_moment.iter_mut())
    {
        *m = opt.beta1 * *m + (1.0 - opt.beta1) * g;
        *v = opt.beta2 * *v + (1.0 - opt.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: f64,
    /// Negative pairs per iteration as a multiple of the edge count.
    pub neg_ratio: f64,
    pub seed: u64,
    /// Number of simplex components; the ILR dimension is `k - 1`.
    pub k: usize,
    pub basis_mode: BasisMode,
    /// Report the running objective every `log_every` iterations (0 = never).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 5000,
            lr: 1e-2,
            neg_ratio: 5.0,
            seed: 0,
            k: 9,
            basis_mode: BasisMode::FixedHelmert,
            log_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.iterations == 0 {
            return fail("iterations must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.neg_ratio > 0.0 && self.neg_ratio.is_finite()) {
            return fail(format!("neg_ratio must be positive, got {}", self.neg_ratio));
        }
        if self.k < 2 {
            return Err(Error::KTooSmall(self.k));
        }
        Ok(())
    }
}

/// Trained parameters plus the logged objective estimates.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub state: ModelState,
    /// `(iteration, sampled NLL)` at every logging point, 1-based iterations.
    pub trace: Vec<(usize, f64)>,
}

/// Trains a model on `graph`; a pure function of its inputs.
pub fn fit(graph: &Graph, config: &TrainConfig) -> Result<ModelState> {
    fit_with_progress(graph, config, |_, _| {}).map(|o| o.state)
}

/// [`fit`] with a callback invoked at each logging point.
pub fn fit_with_progress<F>(graph: &Graph, config: &TrainConfig, mut progress: F) -> Result<FitOutcome>
where
    F: FnMut(usize, f64),
{
    config.validate()?;
    if graph.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = ModelState::init(graph.num_nodes(), config.k, config.basis_mode, &mut rng)?;
    let num_neg = ((config.neg_ratio * graph.num_edges() as f64).round() as usize).max(1);
    let mut opt = AdamState::new(state.num_params(), config.lr);
    let mut params = state.params_flat();
    let mut trace = Vec::new();

    for iter in 1..=config.iterations {
        let batch = PairBatch::sample(graph, num_neg, &mut rng);
        let (loss, g) = loss_and_grad(&state, &batch)?;
        if !loss.is_finite() {
            return Err(Error::DegenerateData(format!(
                "objective became non-finite at iteration {iter}"
            )));
        }
        adam_step(&mut params, &g.flatten(), &mut opt)?;
        state.set_params_flat(&params)?;
        if config.log_every > 0 && iter % config.log_every == 0 {
            trace.push((iter, loss));
            progress(iter, loss);
        }
    }
    Ok(FitOutcome { state, trace })
}
