//! Snapshot matrices and truncated POD bases.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::monolithic::Trajectory;

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Displacement snapshots of one subdomain, with companion fields.
#[derive(Clone, Debug)]
pub struct SnapshotSet {
    /// Global node index of each snapshot row.
    pub nodes: Vec<usize>,
    pub u: DMatrix<f64>,
    pub v: Option<DMatrix<f64>>,
    pub a: Option<DMatrix<f64>>,
    pub times: Vec<f64>,
}

impl SnapshotSet {
    pub fn new(nodes: Vec<usize>, u: DMatrix<f64>, times: Vec<f64>) -> Result<Self> {
        if u.nrows() != nodes.len() || u.ncols() != times.len() {
            return Err(Error::DimensionMismatch(format!(
                "snapshot matrix is {}x{}, expected {}x{}",
                u.nrows(),
                u.ncols(),
                nodes.len(),
                times.len()
            )));
        }
        Ok(Self {
            nodes,
            u,
            v: None,
            a: None,
            times,
        })
    }

    /// Rows `nodes` of states `states` of a recorded trajectory.
    pub fn from_trajectory(traj: &Trajectory, nodes: &[usize], states: std::ops::Range<usize>) -> Result<Self> {
        if states.end > traj.n_states() || states.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "snapshot range {states:?} outside a trajectory of {} states",
                traj.n_states()
            )));
        }
        if let Some(&bad) = nodes.iter().find(|&&i| i >= traj.n_nodes()) {
            return Err(Error::DimensionMismatch(format!(
                "node {bad} outside a trajectory of {} nodes",
                traj.n_nodes()
            )));
        }
        let cols = states.len();
        let pick = |m: &DMatrix<f64>| {
            DMatrix::from_fn(nodes.len(), cols, |i, j| m[(nodes[i], states.start + j)])
        };
        Ok(Self {
            nodes: nodes.to_vec(),
            u: pick(&traj.u),
            v: Some(pick(&traj.v)),
            a: Some(pick(&traj.a)),
            times: traj.times[states].to_vec(),
        })
    }

    pub fn n_snapshots(&self) -> usize {
        self.u.ncols()
    }
}

/// How many modes to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truncation {
    /// Smallest mode count reaching this energy fraction.
    Energy(f64),
    Modes(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PodBasis {
    pub phi: DMatrix<f64>,
    /// All singular values of the snapshot matrix, descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub captured_energy: f64,
    pub truncation: Truncation,
}

impl PodBasis {
    pub fn n_modes(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.phi.nrows()
    }
}

/// `Σ_{i≤r} μ_i² / Σ_{i≤R} μ_i²`.
pub fn energy_fraction(singular_values: &[f64], rank: usize, r: usize) -> f64 {
    let total: f64 = singular_values[..rank].iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0.0;
    }
    let kept: f64 = singular_values[..r.min(rank)].iter().map(|s| s * s).sum();
    (kept / total).min(1.0)
}

/// Numerical rank with the relative cutoff [`RANK_TOLERANCE`].
pub fn numerical_rank(singular_values: &[f64]) -> usize {
    let Some(&first) = singular_values.first() else {
        return 0;
    };
    singular_values
        .iter()
        .take_while(|&&s| s > RANK_TOLERANCE * first)
        .count()
}

/// Left singular vectors and singular values, descending.
///
/// Tall-and-wide inputs go through a thin QR of the transpose first.
pub fn thin_svd(u: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (n, m) = u.shape();
    let core = if m > n {
        u.transpose().qr().r().transpose()
    } else {
        u.clone()
    };
    let svd = core.svd(true, false);
    let left = svd
        .u
        .ok_or_else(|| Error::Singular("SVD did not produce left vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let vectors = DMatrix::from_fn(n, order.len(), |i, j| left[(i, order[j])]);
    Ok((vectors, values))
}

pub fn compute_basis(snapshots: &DMatrix<f64>, truncation: Truncation) -> Result<PodBasis> {
    if snapshots.ncols() == 0 || snapshots.nrows() == 0 {
        return Err(Error::InvalidConfig("empty snapshot matrix".into()));
    }
    if !snapshots.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("snapshot matrix".into()));
    }
    let (vectors, values) = thin_svd(snapshots)?;
    let rank = numerical_rank(&values);
    if rank == 0 {
        return Err(Error::InvalidConfig("snapshot matrix is zero".into()));
    }
    let r = match truncation {
        Truncation::Energy(target) => {
            if !(target > 0.0 && target <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "energy target {target} outside (0, 1]"
                )));
            }
            (1..=rank)
                .find(|&r| energy_fraction(&values, rank, r) >= target)
                .unwrap_or(rank)
        }
        Truncation::Modes(r) => {
            if r == 0 || r > rank {
                return Err(Error::InvalidConfig(format!(
                    "mode count {r} outside 1..={rank}"
                )));
            }
            r
        }
    };
    Ok(PodBasis {
        phi: vectors.columns(0, r).into_owned(),
        captured_energy: energy_fraction(&values, rank, r),
        singular_values: values,
        rank,
        truncation,
    })
}

pub fn project_state(basis: &PodBasis, full: &DVector<f64>) -> Result<DVector<f64>> {
    if full.len() != basis.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} against a basis of {} rows",
            full.len(),
            basis.n_rows()
        )));
    }
    Ok(basis.phi.tr_mul(full))
}

pub fn reconstruct_state(basis: &PodBasis, reduced: &DVector<f64>) -> Result<DVector<f64>> {
    if reduced.len() != basis.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "reduced vector of length {} against {} modes",
            reduced.len(),
            basis.n_modes()
        )));
    }
    Ok(&basis.phi * reduced)
}
