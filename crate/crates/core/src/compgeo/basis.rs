use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Validity tolerance for `VᵀV = I` and `Vᵀ1 = 0`.
pub(crate) const BASIS_TOL: f64 = 1e-10;

/// Smallest admissible `|R_jj|` in the learned-basis QR factorization.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Helmert,
    Learned,
    VarimaxRotated,
}

/// A `K × (K-1)` matrix whose columns are an orthonormal basis of the
/// sum-zero contrast space of `R^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct IlrBasis {
    columns: DMatrix<f64>,
    kind: BasisKind,
}

impl IlrBasis {
    /// Wraps a matrix after checking both basis invariants.
    pub fn from_columns(columns: DMatrix<f64>, kind: BasisKind) -> Result<Self> {
        let (k, d) = columns.shape();
        if k < 2 {
            return Err(Error::KTooSmall(k));
        }
        if d + 1 != k {
            return Err(Error::DimMismatch {
                expected: k - 1,
                got: d,
            });
        }
        let basis = IlrBasis { columns, kind };
        let ortho = basis.orthonormality_error();
        let contrast = basis.contrast_error();
        if !(ortho < BASIS_TOL && contrast < BASIS_TOL) {
            return Err(Error::InvalidConfig(format!(
                "not an ILR basis: |VᵀV - I|_F = {ortho:e}, |Vᵀ1|_inf = {contrast:e}"
            )));
        }
        Ok(basis)
    }

    /// Number of simplex components `K`.
    pub fn k(&self) -> usize {
        self.columns.nrows()
    }

    /// ILR dimension `K - 1`.
    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn column(&self, b: usize) -> Vec<f64> {
        self.columns.column(b).iter().copied().collect()
    }

    /// `Vᵀ v` for a length-`K` vector.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let (k, d) = self.columns.shape();
        debug_assert_eq!(v.len(), k);
        (0..d)
            .map(|b| (0..k).map(|r| self.columns[(r, b)] * v[r]).sum())
            .collect()
    }

    /// `V x` for a length-`(K-1)` vector.
    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        let (k, d) = self.columns.shape();
        debug_assert_eq!(x.len(), d);
        (0..k)
            .map(|r| (0..d).map(|b| self.columns[(r, b)] * x[b]).sum())
            .collect()
    }

    /// `‖VᵀV − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.columns.transpose() * &self.columns;
        (gram - DMatrix::<f64>::identity(self.dim(), self.dim())).norm()
    }

    /// `‖Vᵀ1‖_∞`.
    pub fn contrast_error(&self) -> f64 {
        self.columns
            .column_iter()
            .map(|c| c.sum().abs())
            .fold(0.0, f64::max)
    }
}

/// Normalized Helmert contrasts: column `b` contrasts the first `b + 1`
/// components against component `b + 2` (1-based).
pub fn helmert_basis(k: usize) -> Result<IlrBasis> {
    if k < 2 {
        return Err(Error::KTooSmall(k));
    }
    let mut v = DMatrix::zeros(k, k - 1);
    for b in 0..k - 1 {
        let m = (b + 1) as f64;
        let norm = (m * (m + 1.0)).sqrt();
        for r in 0..=b {
            v[(r, b)] = 1.0 / norm;
        }
        v[(b + 1, b)] = -m / norm;
    }
    Ok(IlrBasis {
        columns: v,
        kind: BasisKind::Helmert,
    })
}

/// Builds a valid basis from an unconstrained `K × (K-1)` parameter matrix:
/// column-center, then take the Q factor of a thin QR with positive R diagonal.
pub fn learned_basis_from_params(params: &DMatrix<f64>) -> Result<IlrBasis> {
    learned_basis_with_r(params).map(|(basis, _)| basis)
}

pub(crate) fn learned_basis_with_r(params: &DMatrix<f64>) -> Result<(IlrBasis, DMatrix<f64>)> {
    let (k, d) = params.shape();
    if k < 2 {
        return Err(Error::KTooSmall(k));
    }
    if d + 1 != k {
        return Err(Error::DimMismatch {
            expected: k - 1,
            got: d,
        });
    }
    let centered = center_columns(params);
    let (q, r) = thin_qr(&centered)?;
    Ok((
        IlrBasis {
            columns: q,
            kind: BasisKind::Learned,
        },
        r,
    ))
}

/// Pulls a gradient with respect to the learned basis back to its
/// parameter matrix.
///
/// For a thin QR `A = QR` with `Ā_R = 0`:
/// `Ā = (Q̄ + Q·copyltu(M)) R⁻ᵀ` with `M = −Q̄ᵀQ`; centering is a symmetric
/// projection so the result is centered once more.
pub(crate) fn learned_basis_backward(
    basis: &IlrBasis,
    r: &DMatrix<f64>,
    basis_grad: &DMatrix<f64>,
) -> DMatrix<f64> {
    let q = basis.matrix();
    let m = -(basis_grad.transpose() * q);
    let n = m.nrows();
    let mut sym = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            sym[(i, j)] = m[(j, i)];
        }
    }
    let lhs = basis_grad + q * sym;
    // Solve X R^T = lhs, i.e. R X^T = lhs^T, with R upper triangular.
    let xt = r
        .solve_upper_triangular(&lhs.transpose())
        .expect("R has a nonzero diagonal by construction");
    center_columns(&xt.transpose())
}

fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.nrows() as f64;
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / k;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Thin QR by modified Gram-Schmidt with one reorthogonalization pass.
/// The diagonal of R is nonnegative by construction.
fn thin_qr(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    let mut q = a.clone();
    let mut r = DMatrix::zeros(n, n);
    let mut min_diag = f64::INFINITY;
    for j in 0..n {
        for _pass in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                r[(i, j)] += proj;
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let norm = q.column(j).norm();
        min_diag = min_diag.min(norm);
        if !(norm >= RANK_TOL) {
            return Err(Error::RankDeficient { min_diag: norm });
        }
        r[(j, j)] = norm;
        q.column_mut(j).unscale_mut(norm);
    }
    debug_assert!(m >= n && min_diag >= RANK_TOL);
    Ok((q, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn helmert_small_cases() {
        let h2 = helmert_basis(2).unwrap();
        let s = 0.5f64.sqrt();
        assert!((h2.matrix()[(0, 0)] - s).abs() < 1e-15);
        assert!((h2.matrix()[(1, 0)] + s).abs() < 1e-15);

        let h3 = helmert_basis(3).unwrap();
        let expected = [
            [s, -s, 0.0],
            [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()],
        ];
        for (b, col) in expected.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                assert!((h3.matrix()[(r, b)] - v).abs() < 1e-15);
            }
        }
        assert!(matches!(helmert_basis(1), Err(Error::KTooSmall(1))));
        assert!(matches!(helmert_basis(0), Err(Error::KTooSmall(0))));
    }

    #[test]
    fn helmert_invariants() {
        for k in 2..=30 {
            let h = helmert_basis(k).unwrap();
            assert!(h.orthonormality_error() < 1e-12, "K={k}");
            assert!(h.contrast_error() < 1e-12, "K={k}");
        }
    }

    #[test]
    fn learned_basis_zero_params_is_rank_deficient() {
        let w = DMatrix::zeros(4, 3);
        assert!(matches!(
            learned_basis_from_params(&w),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn learned_basis_constant_rows_is_rank_deficient() {
        // Every column constant: centering wipes it out.
        let w = DMatrix::from_element(5, 4, 3.0);
        assert!(learned_basis_from_params(&w).is_err());
    }

    #[test]
    fn learned_basis_from_seeded_normal() {
        let w = normal_matrix(5, 4, 0);
        let v = learned_basis_from_params(&w).unwrap();
        assert_eq!(v.kind(), BasisKind::Learned);
        assert!(v.orthonormality_error() < 1e-10);
        assert!(v.contrast_error() < 1e-10);
        let (_, r) = learned_basis_with_r(&w).unwrap();
        assert!((0..4).all(|j| r[(j, j)] > 0.0));
    }

    #[test]
    fn learned_basis_shape_checked() {
        assert!(matches!(
            learned_basis_from_params(&DMatrix::zeros(4, 2)),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn learned_from_helmert_params_reproduces_helmert() {
        // Helmert columns are already centered and orthonormal, so QR with a
        // positive diagonal returns them unchanged.
        let h = helmert_basis(6).unwrap();
        let v = learned_basis_from_params(h.matrix()).unwrap();
        assert!((v.matrix() - h.matrix()).amax() < 1e-12);
    }

    #[test]
    fn from_columns_rejects_invalid() {
        let bad = DMatrix::from_element(3, 2, 1.0);
        assert!(IlrBasis::from_columns(bad, BasisKind::Learned).is_err());
        let h = helmert_basis(3).unwrap();
        assert!(IlrBasis::from_columns(h.matrix().clone(), BasisKind::Helmert).is_ok());
    }

    #[test]
    fn qr_backward_matches_finite_differences() {
        // L(W) = <G, V(W)> for a fixed random G exercises the full
        // centering + QR differential.
        for (k, seed) in [(3, 1u64), (5, 2), (8, 3)] {
            let w = normal_matrix(k, k - 1, seed);
            let g = normal_matrix(k, k - 1, seed + 100);
            let loss = |w: &DMatrix<f64>| learned_basis_from_params(w).unwrap().matrix().dot(&g);
            let (basis, r) = learned_basis_with_r(&w).unwrap();
            let analytic = learned_basis_backward(&basis, &r, &g);
            let h = 1e-6;
            for a in 0..k {
                for b in 0..k - 1 {
                    let mut wp = w.clone();
                    wp[(a, b)] += h;
                    let mut wm = w.clone();
                    wm[(a, b)] -= h;
                    let numeric = (loss(&wp) - loss(&wm)) / (2.0 * h);
                    let err = (analytic[(a, b)] - numeric).abs()
                        / analytic[(a, b)].abs().max(numeric.abs()).max(1e-3);
                    assert!(err < 1e-6, "K={k} ({a},{b}): {} vs {numeric}", analytic[(a, b)]);
                }
            }
        }
    }

    #[test]
    fn project_and_lift_are_adjoint() {
        let v = learned_basis_from_params(&normal_matrix(6, 5, 3)).unwrap();
        let x = [0.3, -1.0, 0.2, 0.0, 2.5];
        // VᵀV = I, so projecting a lifted point recovers it.
        let back = v.project(&v.lift(&x));
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
