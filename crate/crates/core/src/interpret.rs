//! Interpretability exports: balance loadings, coordinate tables, PCA
//! projections and trade-off trajectories, all written as CSV for external
//! plotting.

use crate::compgeo::{ilr, tradeoff_trajectory, varimax_rotate, BasisKind, Composition, IlrBasis};
use crate::error::{Error, Result};
use crate::graphio::{LabelTable, NodeIds};
use crate::model::{embed_with, Embeddings, ModelState};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Relative eigenvalue below which a principal direction counts as absent.
const RANK_TOL: f64 = 1e-12;

/// Basis columns `v_b`, one loading vector of length K per balance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceLoadings {
    pub basis_kind: BasisKind,
    pub columns: Vec<Vec<f64>>,
}

impl BalanceLoadings {
    pub fn from_basis(basis: &IlrBasis) -> Self {
        BalanceLoadings {
            basis_kind: basis.kind(),
            columns: (0..basis.dim()).map(|b| basis.column(b)).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// The state's basis, optionally varimax-rotated for sparser loadings.
pub fn export_basis(state: &ModelState, rotate_varimax: bool) -> Result<IlrBasis> {
    let basis = state.basis()?;
    Ok(if rotate_varimax { varimax_rotate(&basis) } else { basis })
}

pub fn export_loadings(state: &ModelState, rotate_varimax: bool) -> Result<BalanceLoadings> {
    export_basis(state, rotate_varimax).map(|b| BalanceLoadings::from_basis(&b))
}

/// Two leading principal directions of a point cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca2d {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    /// Share of total variance along each component.
    pub explained: [f64; 2],
    /// Projections of the fitted points.
    pub projected: Vec<[f64; 2]>,
}

impl Pca2d {
    pub fn project(&self, x: &[f64]) -> [f64; 2] {
        let dot = |c: &[f64]| -> f64 { c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum() };
        [dot(&self.components[0]), dot(&self.components[1])]
    }
}

fn pca_fit(points: &Embeddings, strict: bool) -> Result<Pca2d> {
    let (n, d) = (points.len(), points.dim());
    if n < 3 || d < 2 {
        return Err(Error::DegenerateData(format!(
            "PCA needs at least 3 points in 2+ dimensions, got {n} x {d}"
        )));
    }
    let x = DMatrix::from_row_slice(n, d, points.as_slice());
    let mean: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let centered = DMatrix::from_fn(n, d, |r, c| x[(r, c)] - mean[c]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let scale = eig.eigenvalues[order[0]].abs().max(f64::MIN_POSITIVE);
    let rank = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > RANK_TOL * scale && eig.eigenvalues[i] > 0.0)
        .count();
    if rank < 2 {
        let msg = format!("covariance rank {rank} < 2");
        if strict {
            return Err(Error::DegenerateData(msg));
        }
        log::warn!("{msg}; missing PCA coordinates are set to zero");
    }

    let mut components: [Vec<f64>; 2] = Default::default();
    let mut explained = [0.0; 2];
    for (slot, &idx) in order.iter().take(2).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        if slot < rank {
            let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            explained[slot] = eig.eigenvalues[idx] / total;
        } else {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        components[slot] = v;
    }
    let mut pca = Pca2d {
        mean,
        components,
        explained,
        projected: Vec::new(),
    };
    pca.projected = (0..n).map(|i| pca.project(points.row(i))).collect();
    Ok(pca)
}

/// PCA onto two components; rank-deficient input is a `DegenerateData` error.
pub fn pca_2d(points: &Embeddings) -> Result<Pca2d> {
    pca_fit(points, true)
}

/// Like [`pca_2d`], but missing directions project to zero with a warning.
pub fn pca_2d_lenient(points: &Embeddings) -> Result<Pca2d> {
    pca_fit(points, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPath {
    pub node: usize,
    pub a: usize,
    pub b: usize,
    pub s: Vec<f64>,
    pub compositions: Vec<Composition>,
    pub ilr: Vec<Vec<f64>>,
    pub pca: Vec<[f64; 2]>,
}

/// Trade-off path of one node under the state's basis.
pub fn export_trajectory(state: &ModelState, node: usize, a: usize, b: usize, s_grid: &[f64]) -> Result<TrajectoryPath> {
    export_trajectory_with_basis(state, &state.basis()?, node, a, b, s_grid)
}

/// Trade-off path mapped through `basis` and a PCA fitted to every node's
/// coordinates under that basis.
pub fn export_trajectory_with_basis(
    state: &ModelState,
    basis: &IlrBasis,
    node: usize,
    a: usize,
    b: usize,
    s_grid: &[f64],
) -> Result<TrajectoryPath> {
    if node >= state.num_nodes() {
        return Err(Error::BadIndices(format!(
            "node {node} out of range for {} nodes",
            state.num_nodes()
        )));
    }
    let compositions = tradeoff_trajectory(&state.composition(node), a, b, s_grid)?;
    let ilr_path = compositions
        .iter()
        .map(|z| ilr(z, basis).map(|p| p.coords().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let pca = pca_2d_lenient(&embed_with(state, basis)?)?;
    Ok(TrajectoryPath {
        node,
        a,
        b,
        s: s_grid.to_vec(),
        pca: ilr_path.iter().map(|x| pca.project(x)).collect(),
        compositions,
        ilr: ilr_path,
    })
}

/// Edge-feature operators for pairs of node embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DyadicOp {
    Average,
    Hadamard,
    WeightedL1,
    WeightedL2,
}

impl DyadicOp {
    pub const ALL: [DyadicOp; 4] = [DyadicOp::Average, DyadicOp::Hadamard, DyadicOp::WeightedL1, DyadicOp::WeightedL2];

    pub fn name(self) -> &'static str {
        match self {
            DyadicOp::Average => "average",
            DyadicOp::Hadamard => "hadamard",
            DyadicOp::WeightedL1 => "weighted_l1",
            DyadicOp::WeightedL2 => "weighted_l2",
        }
    }

    pub fn apply(self, x: &[f64], y: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(y)
            .map(|(&a, &b)| match self {
                DyadicOp::Average => 0.5 * (a + b),
                DyadicOp::Hadamard => a * b,
                DyadicOp::WeightedL1 => (a - b).abs(),
                DyadicOp::WeightedL2 => (a - b) * (a - b),
            })
            .collect()
    }
}

fn node_name(ids: Option<&NodeIds>, i: usize) -> String {
    ids.map_or_else(|| i.to_string(), |ids| ids.name(i).to_string())
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per simplex component, one column per balance.
pub fn write_loadings_csv(path: impl AsRef<Path>, loadings: &BalanceLoadings) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["component".to_string()];
    header.extend((0..loadings.columns.len()).map(|b| format!("b{b}")));
    w.write_record(&header)?;
    for c in 0..loadings.k() {
        let mut row = vec![c.to_string()];
        row.extend(loadings.columns.iter().map(|col| col[c].to_string()));
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// Columns `s, z0.., x0.., pc1, pc2`.
pub fn write_trajectory_csv(path: impl AsRef<Path>, traj: &TrajectoryPath) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let k = traj.compositions.first().map_or(0, Composition::len);
    let d = traj.ilr.first().map_or(0, Vec::len);
    let mut header = vec!["s".to_string()];
    header.extend((0..k).map(|c| format!("z{c}")));
    header.extend((0..d).map(|b| format!("x{b}")));
    header.extend(["pc1".to_string(), "pc2".to_string()]);
    w.write_record(&header)?;
    for i in 0..traj.s.len() {
        let mut row = vec![traj.s[i].to_string()];
        row.extend(traj.compositions[i].values().iter().map(|v| v.to_string()));
        row.extend(traj.ilr[i].iter().map(|v| v.to_string()));
        row.extend(traj.pca[i].iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// Node embeddings as `node, x0, …, x{D-1}`.
pub fn write_features_csv(path: impl AsRef<Path>, emb: &Embeddings, ids: Option<&NodeIds>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node".to_string()];
    header.extend((0..emb.dim()).map(|b| format!("x{b}")));
    w.write_record(&header)?;
    for i in 0..emb.len() {
        let mut row = vec![node_name(ids, i)];
        row.extend(emb.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    finish(w, path)
}

/// Long-format `node, label, balance, value` rows for every labeled node.
pub fn write_coordinates_by_label_csv(
    path: impl AsRef<Path>,
    emb: &Embeddings,
    labels: &LabelTable,
    ids: Option<&NodeIds>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node", "label", "balance", "value"])?;
    for (node, class) in labels.labeled() {
        for (b, v) in emb.row(node).iter().enumerate() {
            w.write_record([node_name(ids, node), labels.class_name(class).to_string(), b.to_string(), v.to_string()])?;
        }
    }
    finish(w, path)
}

/// Dyadic features for node pairs: `u, v` then `<op>_<b>` per operator.
pub fn write_pair_features_csv(
    path: impl AsRef<Path>,
    emb: &Embeddings,
    pairs: &[(usize, usize)],
    ops: &[DyadicOp],
    ids: Option<&NodeIds>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["u".to_string(), "v".to_string()];
    for op in ops {
        header.extend((0..emb.dim()).map(|b| format!("{}_{b}", op.name())));
    }
    w.write_record(&header)?;
    for &(i, j) in pairs {
        let mut row = vec![node_name(ids, i), node_name(ids, j)];
        for op in ops {
            row.extend(op.apply(emb.row(i), emb.row(j)).iter().map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    finish(w, path)
}
