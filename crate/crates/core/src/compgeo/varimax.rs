use super::{BasisKind, IlrBasis};
use nalgebra::DMatrix;

const TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 1000;

/// Raw varimax criterion of a loading matrix (rows = variables):
/// `Σ_b [ Σ_r L_rb⁴ − (Σ_r L_rb²)² / K ]`.
pub fn varimax_criterion(loadings: &DMatrix<f64>) -> f64 {
    let n = loadings.nrows() as f64;
    loadings
        .column_iter()
        .map(|c| {
            let s2: f64 = c.iter().map(|v| v * v).sum();
            let s4: f64 = c.iter().map(|v| v.powi(4)).sum();
            s4 - s2 * s2 / n
        })
        .sum()
}

/// Kaiser-normalized varimax rotation by pairwise planar rotations.
///
/// Returns `V·R` for an orthogonal `R`, so the result spans the same contrast
/// space and induces the same Aitchison distances.
pub fn varimax_rotate(basis: &IlrBasis) -> IlrBasis {
    let v = basis.matrix();
    let (k, d) = v.shape();
    let weights: Vec<f64> = v
        .row_iter()
        .map(|r| {
            let h = r.norm();
            if h > 0.0 {
                h
            } else {
                1.0
            }
        })
        .collect();
    let mut loadings = DMatrix::from_fn(k, d, |r, c| v[(r, c)] / weights[r]);
    let mut rotation = DMatrix::<f64>::identity(d, d);

    let mut criterion = varimax_criterion(&loadings);
    for _ in 0..MAX_SWEEPS {
        for p in 0..d {
            for q in (p + 1)..d {
                let (mut a, mut b, mut c, mut dd) = (0.0, 0.0, 0.0, 0.0);
                for r in 0..k {
                    let x = loadings[(r, p)];
                    let y = loadings[(r, q)];
                    let u = x * x - y * y;
                    let w = 2.0 * x * y;
                    a += u;
                    b += w;
                    c += u * u - w * w;
                    dd += 2.0 * u * w;
                }
                let kf = k as f64;
                let num = dd - 2.0 * a * b / kf;
                let den = c - (a * a - b * b) / kf;
                let phi = num.atan2(den) / 4.0;
                if phi.abs() < 1e-15 {
                    continue;
                }
                let (sin, cos) = phi.sin_cos();
                rotate_columns(&mut loadings, p, q, cos, sin);
                rotate_columns(&mut rotation, p, q, cos, sin);
            }
        }
        let next = varimax_criterion(&loadings);
        let improvement = next - criterion;
        criterion = next;
        if improvement < TOL {
            break;
        }
    }

    let columns = v * rotation;
    IlrBasis::from_columns(columns, BasisKind::VarimaxRotated)
        .unwrap_or_else(|_| unreachable!("orthogonal rotation of a valid basis"))
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, cos: f64, sin: f64) {
    for r in 0..m.nrows() {
        let x = m[(r, p)];
        let y = m[(r, q)];
        m[(r, p)] = x * cos + y * sin;
        m[(r, q)] = -x * sin + y * cos;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compgeo::{helmert_basis, learned_basis_from_params};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rotation_increases_criterion_and_keeps_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = DMatrix::from_fn(8, 7, |_, _| StandardNormal.sample(&mut rng));
        let v = learned_basis_from_params(&w).unwrap();
        let rot = varimax_rotate(&v);
        assert_eq!(rot.kind(), BasisKind::VarimaxRotated);
        assert!(rot.orthonormality_error() < 1e-10);
        assert!(rot.contrast_error() < 1e-10);
        assert!(varimax_criterion(rot.matrix()) >= varimax_criterion(v.matrix()) - 1e-12);
    }

    #[test]
    fn second_rotation_is_stationary() {
        let h = helmert_basis(6).unwrap();
        let once = varimax_rotate(&h);
        let twice = varimax_rotate(&once);
        let c1 = varimax_criterion(once.matrix());
        let c2 = varimax_criterion(twice.matrix());
        assert!((c1 - c2).abs() < 1e-7, "{c1} vs {c2}");
    }

    #[test]
    fn k2_is_trivial() {
        let h = helmert_basis(2).unwrap();
        let rot = varimax_rotate(&h);
        assert!((rot.matrix() - h.matrix()).amax() < 1e-15);
    }
}
