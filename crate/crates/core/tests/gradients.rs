//! Analytic gradients against central finite differences.

use compograph::graphio::Graph;
use compograph::model::{grad, nll_sampled, BasisMode, ModelState, PairBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;

fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

/// Which parameter block a flat coordinate belongs to.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Block {
    Logits,
    Biases,
    BasisParams,
}

fn perturbed(state: &ModelState, block: Block, idx: usize, delta: f64) -> ModelState {
    let mut s = state.clone();
    match block {
        Block::Logits => s.logits[idx] += delta,
        Block::Biases => s.biases[idx] += delta,
        Block::BasisParams => s.basis_params.as_mut().unwrap()[idx] += delta,
    }
    s
}

fn finite_difference(state: &ModelState, batch: &PairBatch, block: Block, idx: usize) -> f64 {
    let plus = nll_sampled(&perturbed(state, block, idx, H), batch).unwrap();
    let minus = nll_sampled(&perturbed(state, block, idx, -H), batch).unwrap();
    (plus - minus) / (2.0 * H)
}

/// Relative error with the denominator floored at a small fraction of the
/// gradient's overall scale. The likelihood only sees distances, which every
/// orthonormal contrast basis preserves, so the basis-parameter gradient is
/// zero in exact arithmetic and a pure ratio would compare roundoff to
/// roundoff.
fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3 * scale)
}

/// Worst relative error over `count` random coordinates drawn from `blocks`.
fn worst_error(mode: BasisMode, seed: u64, blocks: &[Block], count: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, k) = (12, 4);
    let graph = random_graph(n, 0.3, &mut rng);
    let mut state = ModelState::init(n, k, mode, &mut rng).unwrap();
    for v in &mut state.logits {
        *v *= 10.0;
    }
    for b in &mut state.biases {
        *b = rng.random_range(-1.0..1.0);
    }
    let batch = PairBatch::sample(&graph, 5 * graph.num_edges(), &mut rng);
    let g = grad(&state, &batch).unwrap();
    let scale = g.flatten().iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let block = blocks[rng.random_range(0..blocks.len())];
        let (idx, analytic) = match block {
            Block::Logits => {
                let i = rng.random_range(0..g.logits.len());
                (i, g.logits[i])
            }
            Block::Biases => {
                let i = rng.random_range(0..g.biases.len());
                (i, g.biases[i])
            }
            Block::BasisParams => {
                let w = g.basis_params.as_ref().unwrap();
                let i = rng.random_range(0..w.len());
                (i, w[i])
            }
        };
        let numeric = finite_difference(&state, &batch, block, idx);
        worst = worst.max(relative_error(analytic, numeric, scale));
    }
    worst
}

#[test]
fn helmert_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let err = worst_error(
            BasisMode::FixedHelmert,
            seed,
            &[Block::Logits, Block::Biases],
            50,
        );
        assert!(err < 1e-5, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn learned_basis_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let err = worst_error(BasisMode::LearnedQr, seed, &[Block::BasisParams], 50);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
        let err = worst_error(
            BasisMode::LearnedQr,
            100 + seed,
            &[Block::Logits, Block::Biases],
            50,
        );
        assert!(err < 1e-5, "seed {seed}: relative error {err:e}");
    }
}
