//! Aitchison geometry on the open simplex.
//!
//! Compositions are strictly positive vectors summing to one. They are mapped
//! to unconstrained Euclidean coordinates through an isometric log-ratio (ILR)
//! transform `x = Vᵀ log z`, where the columns of `V` form an orthonormal
//! basis of the sum-zero contrast space. Every valid basis induces the same
//! (Aitchison) distances; bases only differ in which log-ratio balances they
//! expose as coordinates.

mod basis;
mod subcomp;
mod varimax;

pub use basis::{helmert_basis, learned_basis_from_params, BasisKind, IlrBasis};
pub(crate) use basis::{learned_basis_backward, learned_basis_with_r};
pub use subcomp::{subcomp_projection, subcompose, SubcompProjection};
pub use varimax::{varimax_criterion, varimax_rotate};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A point on the open simplex: strictly positive entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Composition(Vec<f64>);

impl Composition {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    pub fn max_component(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for Composition {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Unconstrained ILR coordinates of a composition (length `K - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IlrPoint(Vec<f64>);

impl IlrPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        IlrPoint(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &IlrPoint) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Rescales a strictly positive vector to sum to one.
pub fn closure(raw: &[f64]) -> Result<Composition> {
    if raw.len() < 2 {
        return Err(Error::TooShort(raw.len()));
    }
    if let Some((index, &value)) = raw.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveEntry { index, value });
    }
    let total: f64 = raw.iter().sum();
    if !total.is_finite() {
        return Err(Error::NonPositiveEntry {
            index: raw.iter().position(|v| !v.is_finite()).unwrap_or(0),
            value: total,
        });
    }
    Ok(Composition(raw.iter().map(|v| v / total).collect()))
}

/// Row-wise softmax of a logit vector.
///
/// Entries that would underflow are held at the smallest positive normal
/// double so the result stays on the open simplex.
pub fn softmax(logits: &[f64]) -> Composition {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v = (*v / total).max(f64::MIN_POSITIVE);
    }
    Composition(out)
}

/// Numerically stable `log(sum(exp(v)))`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimMismatch { expected, got });
    }
    Ok(())
}

/// ILR coordinates `Vᵀ log z`.
pub fn ilr(z: &Composition, basis: &IlrBasis) -> Result<IlrPoint> {
    check_dim(basis.k(), z.len())?;
    let logs: Vec<f64> = z.values().iter().map(|v| v.ln()).collect();
    Ok(IlrPoint(basis.project(&logs)))
}

/// Inverse ILR map `closure(exp(V x))`.
pub fn ilr_inverse(x: &IlrPoint, basis: &IlrBasis) -> Result<Composition> {
    check_dim(basis.dim(), x.dim())?;
    let logs = basis.lift(x.coords());
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    closure(&raw)
}

/// Aitchison distance, computed as the Euclidean distance of ILR coordinates.
pub fn aitchison_distance(a: &Composition, b: &Composition, basis: &IlrBasis) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    Ok(ilr(a, basis)?.distance(&ilr(b, basis)?))
}

/// Paired log-ratio intervention: component `a` is scaled by `e^s` and `b` by
/// `e^-s` before re-closing, for every `s` in `s_values`.
pub fn tradeoff_trajectory(
    z: &Composition,
    a: usize,
    b: usize,
    s_values: &[f64],
) -> Result<Vec<Composition>> {
    let k = z.len();
    if a == b || a >= k || b >= k {
        return Err(Error::BadIndices(format!(
            "need distinct components below {k}, got a = {a}, b = {b}"
        )));
    }
    s_values
        .iter()
        .map(|&s| {
            if s == 0.0 {
                return Ok(z.clone());
            }
            let mut raw = z.values().to_vec();
            raw[a] *= s.exp();
            raw[b] *= (-s).exp();
            closure(&raw)
        })
        .collect()
}
