use super::{closure, Composition, IlrBasis, IlrPoint};
use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Linear map from full ILR coordinates to the ILR coordinates of a re-closed
/// subcomposition: `P_S = V_Sᵀ R_S V`, where `R_S` selects the rows in `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcompProjection {
    keep: Vec<usize>,
    matrix: DMatrix<f64>,
}

impl SubcompProjection {
    pub fn keep_set(&self) -> &[usize] {
        &self.keep
    }

    /// The `(|S|-1) × (K-1)` projection matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, x: &IlrPoint) -> Result<IlrPoint> {
        if x.dim() != self.matrix.ncols() {
            return Err(Error::DimMismatch {
                expected: self.matrix.ncols(),
                got: x.dim(),
            });
        }
        let out = (0..self.matrix.nrows())
            .map(|r| {
                (0..self.matrix.ncols())
                    .map(|c| self.matrix[(r, c)] * x.coords()[c])
                    .sum()
            })
            .collect();
        Ok(IlrPoint::new(out))
    }
}

pub(crate) fn validate_subset(keep: &[usize], k: usize) -> Result<()> {
    if keep.len() < 2 {
        return Err(Error::BadSubset(format!(
            "need at least 2 components, got {}",
            keep.len()
        )));
    }
    let mut seen = vec![false; k];
    for &i in keep {
        if i >= k {
            return Err(Error::BadSubset(format!("index {i} out of range for K = {k}")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::BadSubset(format!("index {i} repeated")));
        }
    }
    Ok(())
}

/// Builds `P_S` for the subset `keep` (0-based, order significant) given the
/// full basis and a basis of the `|S|`-part simplex.
pub fn subcomp_projection(
    basis: &IlrBasis,
    keep: &[usize],
    sub_basis: &IlrBasis,
) -> Result<SubcompProjection> {
    validate_subset(keep, basis.k())?;
    if sub_basis.k() != keep.len() {
        return Err(Error::DimMismatch {
            expected: keep.len(),
            got: sub_basis.k(),
        });
    }
    let v = basis.matrix();
    let selected = DMatrix::from_fn(keep.len(), v.ncols(), |r, c| v[(keep[r], c)]);
    let matrix = sub_basis.matrix().transpose() * selected;
    Ok(SubcompProjection {
        keep: keep.to_vec(),
        matrix,
    })
}

/// Re-closed restriction of `z` to the components in `keep`, in that order.
pub fn subcompose(z: &Composition, keep: &[usize]) -> Result<Composition> {
    validate_subset(keep, z.len())?;
    let raw: Vec<f64> = keep.iter().map(|&i| z[i]).collect();
    closure(&raw)
}
