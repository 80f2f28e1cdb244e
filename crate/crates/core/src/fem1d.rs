//! Uniform 1D meshes and linear-element assembly for an elastic bar.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymTridiagonal;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub youngs_modulus: f64,
    pub density: f64,
    pub area: f64,
}

impl MaterialParams {
    pub fn new(youngs_modulus: f64, density: f64, area: f64) -> Result<Self> {
        let params = Self {
            youngs_modulus,
            density,
            area,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("youngs_modulus", self.youngs_modulus),
            ("density", self.density),
            ("area", self.area),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidMaterial(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }

    pub fn wave_speed(&self) -> f64 {
        (self.youngs_modulus / self.density).sqrt()
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            youngs_modulus: 1.0e9,
            density: 1000.0,
            area: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh1D {
    x_left: f64,
    x_right: f64,
    h: f64,
    nodes: Vec<f64>,
}

/// Builds a uniform mesh of `[x_left, x_right]` with elements of size `h`.
///
/// The span must hold an integer number of elements (to 1e-9 relative).
/// Nodes are placed at `x_left + i h`, with the last one snapped to `x_right`.
pub fn build_uniform_mesh(x_left: f64, x_right: f64, h: f64) -> Result<Mesh1D> {
    if !(x_left.is_finite() && x_right.is_finite() && h.is_finite()) {
        return Err(Error::InvalidMesh("non-finite mesh bounds".into()));
    }
    if x_right <= x_left {
        return Err(Error::InvalidMesh(format!(
            "x_right ({x_right}) must exceed x_left ({x_left})"
        )));
    }
    if h <= 0.0 {
        return Err(Error::InvalidMesh(format!("element size must be positive, got {h}")));
    }
    let ratio = (x_right - x_left) / h;
    let n_elements = ratio.round();
    if n_elements < 1.0 || (ratio - n_elements).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidMesh(format!(
            "span {} is not an integer multiple of h = {h} (ratio {ratio})",
            x_right - x_left
        )));
    }
    let n_elements = n_elements as usize;
    let mut nodes: Vec<f64> = (0..=n_elements).map(|i| x_left + i as f64 * h).collect();
    nodes[n_elements] = x_right;
    Ok(Mesh1D {
        x_left,
        x_right,
        h,
        nodes,
    })
}

impl Mesh1D {
    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.x_right
    }

    pub fn element_size(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn last_node(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Index of the node located at `x`, if any (within 1e-6 h).
    pub fn node_at(&self, x: f64) -> Option<usize> {
        let pos = ((x - self.x_left) / self.h).round();
        if pos < 0.0 || pos as usize >= self.nodes.len() {
            return None;
        }
        let i = pos as usize;
        ((self.nodes[i] - x).abs() <= 1e-6 * self.h).then_some(i)
    }

    pub fn is_endpoint(&self, index: usize) -> bool {
        index == 0 || index == self.last_node()
    }
}

/// Constrained (Dirichlet) and free node sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcPartition {
    constrained: Vec<usize>,
    free: Vec<usize>,
    interface: Option<usize>,
}

impl BcPartition {
    pub fn new(n_nodes: usize, constrained: &[usize], interface: Option<usize>) -> Result<Self> {
        let mut is_constrained = vec![false; n_nodes];
        for &i in constrained {
            if i >= n_nodes {
                return Err(Error::InvalidPartition(format!(
                    "constrained index {i} out of range for {n_nodes} nodes"
                )));
            }
            is_constrained[i] = true;
        }
        if let Some(i) = interface {
            if i >= n_nodes {
                return Err(Error::InvalidPartition(format!(
                    "interface index {i} out of range for {n_nodes} nodes"
                )));
            }
        }
        let constrained: Vec<usize> = (0..n_nodes).filter(|&i| is_constrained[i]).collect();
        let free: Vec<usize> = (0..n_nodes).filter(|&i| !is_constrained[i]).collect();
        if constrained.is_empty() {
            return Err(Error::InvalidPartition(
                "at least one node must be constrained".into(),
            ));
        }
        if free.is_empty() {
            return Err(Error::InvalidPartition(
                "all nodes constrained, no free degrees of freedom".into(),
            ));
        }
        Ok(Self {
            constrained,
            free,
            interface,
        })
    }

    pub fn constrained(&self) -> &[usize] {
        &self.constrained
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn interface(&self) -> Option<usize> {
        self.interface
    }

    pub fn free_position(&self, node: usize) -> Option<usize> {
        self.free.binary_search(&node).ok()
    }

    pub fn constrained_position(&self, node: usize) -> Option<usize> {
        self.constrained.binary_search(&node).ok()
    }
}

/// Consistent mass and stiffness matrices for linear two-node elements.
pub fn assemble_system(mesh: &Mesh1D, mat: &MaterialParams) -> (SymTridiagonal, SymTridiagonal) {
    let n = mesh.n_nodes();
    let h = mesh.element_size();
    let m_e = mat.density * mat.area * h / 6.0;
    let k_e = mat.youngs_modulus * mat.area / h;
    let mut mass = SymTridiagonal::zeros(n);
    let mut stiffness = SymTridiagonal::zeros(n);
    for e in 0..mesh.n_elements() {
        mass.add_diag(e, 2.0 * m_e);
        mass.add_diag(e + 1, 2.0 * m_e);
        mass.add_off(e, m_e);
        stiffness.add_diag(e, k_e);
        stiffness.add_diag(e + 1, k_e);
        stiffness.add_off(e, -k_e);
    }
    (mass, stiffness)
}

/// Mass/stiffness pair split over free and constrained nodes.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub mass: SymTridiagonal,
    pub stiffness: SymTridiagonal,
    pub partition: BcPartition,
    /// `M[i_u, i_u]`
    pub mass_free: SymTridiagonal,
    /// `K[i_u, i_u]`
    pub stiffness_free: SymTridiagonal,
    /// `-K[i_u, i_d]`
    pub dirichlet_coupling: DMatrix<f64>,
    /// `M[i_u, i_d]`, the inertial coupling to prescribed nodes.
    pub mass_coupling: DMatrix<f64>,
}

pub fn partition_system(
    mass: &SymTridiagonal,
    stiffness: &SymTridiagonal,
    partition: &BcPartition,
) -> Result<AssembledSystem> {
    let n = mass.dim();
    if stiffness.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "mass is {n}x{n}, stiffness is {0}x{0}",
            stiffness.dim()
        )));
    }
    let free = partition.free();
    let constrained = partition.constrained();
    if free.iter().chain(constrained).any(|&i| i >= n) {
        return Err(Error::InvalidPartition(format!(
            "partition does not fit a {n}-node system"
        )));
    }
    let dirichlet_coupling = DMatrix::from_fn(free.len(), constrained.len(), |r, c| {
        -stiffness.get(free[r], constrained[c])
    });
    let mass_coupling =
        DMatrix::from_fn(free.len(), constrained.len(), |r, c| mass.get(free[r], constrained[c]));
    Ok(AssembledSystem {
        mass: mass.clone(),
        stiffness: stiffness.clone(),
        partition: partition.clone(),
        mass_free: mass.principal_submatrix(free),
        stiffness_free: stiffness.principal_submatrix(free),
        dirichlet_coupling,
        mass_coupling,
    })
}

/// Single-column load map for a point traction at an end node.
pub fn interface_load_map(
    mesh: &Mesh1D,
    partition: &BcPartition,
    interface_index: usize,
    area: f64,
) -> Result<DMatrix<f64>> {
    if interface_index >= mesh.n_nodes() || !mesh.is_endpoint(interface_index) {
        return Err(Error::InvalidPartition(format!(
            "interface node {interface_index} is not an endpoint of the mesh"
        )));
    }
    let mut map = DMatrix::zeros(partition.free().len(), 1);
    if let Some(row) = partition.free_position(interface_index) {
        map[(row, 0)] = area;
    }
    Ok(map)
}

/// Gaussian bump `a exp(-(x - b)^2 / (2 w^2))` sampled at the nodes.
pub fn gaussian_ic(mesh: &Mesh1D, a: f64, b: f64, w: f64) -> Result<DVector<f64>> {
    if !(w > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "Gaussian width must be positive, got {w}"
        )));
    }
    Ok(DVector::from_iterator(
        mesh.n_nodes(),
        mesh.nodes()
            .iter()
            .map(|&x| a * (-(x - b).powi(2) / (2.0 * w * w)).exp()),
    ))
}

/// Constant stress of each element, `E (u_{e+1} - u_e) / h`.
pub fn element_stress(mesh: &Mesh1D, mat: &MaterialParams, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "displacement has {} entries, mesh has {} nodes",
            u.len(),
            mesh.n_nodes()
        )));
    }
    let scale = mat.youngs_modulus / mesh.element_size();
    Ok(u.windows(2).map(|w| scale * (w[1] - w[0])).collect())
}
