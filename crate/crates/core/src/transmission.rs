//! Transmission conditions on the interface Γ between the two subdomains.
//!
//! Subdomain `i` imposes `α_ij T_i + β_ij u_i = λ_i` on Γ, where `T_i` is its
//! outward traction. `α_ij` is stored normalized by the reference stress,
//! `ᾱ_ij = σ_max α_ij`. Neighbour data is handed over in the receiver's
//! outward-normal convention, so the converged interface state of the coupled
//! problem matches the single-domain one.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::TractionMethod;
use crate::error::{Error, Result};
use crate::fem1d::{BcPartition, MaterialParams, Mesh1D};
use crate::linalg::SymTridiagonal;
use crate::newmark::KinematicState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmissionKind {
    AlternatingDN,
    RobinRobin,
    DirichletDirichlet,
}

impl TransmissionKind {
    pub fn short_name(&self) -> &'static str {
        match self {
            TransmissionKind::AlternatingDN => "dn",
            TransmissionKind::RobinRobin => "rr",
            TransmissionKind::DirichletDirichlet => "dd",
        }
    }

    pub fn from_short_name(name: &str) -> Option<Self> {
        match name {
            "dn" => Some(TransmissionKind::AlternatingDN),
            "rr" => Some(TransmissionKind::RobinRobin),
            "dd" => Some(TransmissionKind::DirichletDirichlet),
            _ => None,
        }
    }
}

/// Which side of Γ a subdomain occupies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Outward normal of the subdomain at Γ.
    pub fn normal(&self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    pub fn other(&self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Physical coefficients of one subdomain's interface condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideCoefficients {
    /// Physical α (Pa⁻¹ scaled), zero for a Dirichlet condition.
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
}

/// How a subdomain consumes its transmission data λ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InterfaceRole {
    /// `u(Γ) = λ / β`
    Dirichlet { beta: f64 },
    /// Traction `(λ - β u) / α`; `β = 0` is a pure Neumann condition.
    Robin { alpha: f64, beta: f64 },
}

impl SideCoefficients {
    pub fn role(&self) -> InterfaceRole {
        if self.alpha == 0.0 {
            InterfaceRole::Dirichlet { beta: self.beta }
        } else {
            InterfaceRole::Robin {
                alpha: self.alpha,
                beta: self.beta,
            }
        }
    }

    pub fn is_dirichlet(&self) -> bool {
        self.alpha == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransmissionSpec {
    pub kind: TransmissionKind,
    pub alpha12_bar: f64,
    pub alpha21_bar: f64,
    pub beta12: f64,
    pub beta21: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub sigma_max: f64,
}

impl TransmissionSpec {
    pub fn alternating_dn(sigma_max: f64) -> Result<Self> {
        Self {
            kind: TransmissionKind::AlternatingDN,
            alpha12_bar: 0.0,
            alpha21_bar: 1.0,
            beta12: 1.0,
            beta21: 0.0,
            theta1: 1.0,
            theta2: 1.0,
            sigma_max,
        }
        .validated()
    }

    pub fn robin_robin(
        alpha12_bar: f64,
        alpha21_bar: f64,
        beta12: f64,
        beta21: f64,
        sigma_max: f64,
    ) -> Result<Self> {
        Self {
            kind: TransmissionKind::RobinRobin,
            alpha12_bar,
            alpha21_bar,
            beta12,
            beta21,
            theta1: 1.0,
            theta2: 1.0,
            sigma_max,
        }
        .validated()
    }

    pub fn dirichlet_dirichlet(sigma_max: f64) -> Result<Self> {
        Self {
            kind: TransmissionKind::DirichletDirichlet,
            alpha12_bar: 0.0,
            alpha21_bar: 0.0,
            beta12: 1.0,
            beta21: 1.0,
            theta1: 1.0,
            theta2: 1.0,
            sigma_max,
        }
        .validated()
    }

    pub fn with_relaxation(mut self, theta1: f64, theta2: f64) -> Result<Self> {
        self.theta1 = theta1;
        self.theta2 = theta2;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_max.is_finite() && self.sigma_max > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma_max must be positive, got {}",
                self.sigma_max
            )));
        }
        for theta in [self.theta1, self.theta2] {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "relaxation parameter {theta} outside (0, 1]"
                )));
            }
        }
        let coeffs = [self.alpha12_bar, self.alpha21_bar, self.beta12, self.beta21];
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("non-finite transmission coefficient".into()));
        }
        let ok = match self.kind {
            TransmissionKind::AlternatingDN => {
                self.alpha12_bar == 0.0
                    && self.beta21 == 0.0
                    && self.alpha21_bar == 1.0
                    && self.beta12 == 1.0
            }
            TransmissionKind::RobinRobin => coeffs.iter().all(|&c| c != 0.0),
            TransmissionKind::DirichletDirichlet => {
                self.alpha12_bar == 0.0
                    && self.alpha21_bar == 0.0
                    && self.beta12 != 0.0
                    && self.beta21 != 0.0
            }
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "coefficients ({}, {}, {}, {}) are inconsistent with {:?}",
                self.alpha12_bar, self.alpha21_bar, self.beta12, self.beta21, self.kind
            )));
        }
        Ok(())
    }

    pub fn side(&self, side: Side) -> SideCoefficients {
        match side {
            Side::Left => SideCoefficients {
                alpha: self.alpha12_bar / self.sigma_max,
                beta: self.beta12,
                theta: self.theta1,
            },
            Side::Right => SideCoefficients {
                alpha: self.alpha21_bar / self.sigma_max,
                beta: self.beta21,
                theta: self.theta2,
            },
        }
    }
}

/// Transmission data and the latest neighbour interface values, per subdomain.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InterfaceState {
    pub lambda: [f64; 2],
    pub neighbor_disp: [f64; 2],
    pub neighbor_traction: [f64; 2],
}

impl InterfaceState {
    pub fn reset_lambda(&mut self) {
        self.lambda = [0.0; 2];
    }

    pub fn is_finite(&self) -> bool {
        self.lambda.iter().all(|l| l.is_finite())
    }

    /// Records the neighbour data for `receiver` and relaxes its λ.
    pub fn update(
        &mut self,
        receiver: Side,
        coeffs: &SideCoefficients,
        neighbor_traction: f64,
        neighbor_disp: f64,
    ) -> f64 {
        let k = receiver.index();
        self.neighbor_traction[k] = neighbor_traction;
        self.neighbor_disp[k] = neighbor_disp;
        self.lambda[k] = relax_lambda(
            coeffs.theta,
            coeffs.alpha,
            coeffs.beta,
            neighbor_traction,
            neighbor_disp,
            self.lambda[k],
        );
        self.lambda[k]
    }
}

/// `θ (α T + β u) + (1 - θ) λ_prev`
pub fn relax_lambda(theta: f64, alpha: f64, beta: f64, traction: f64, disp: f64, lambda_prev: f64) -> f64 {
    theta * (alpha * traction + beta * disp) + (1.0 - theta) * lambda_prev
}

/// Robin stiffness `S` (unit diagonal entry at the interface row) and
/// boundary force `R = c e_j` over the free nodes.
pub fn robin_contributions(
    mesh: &Mesh1D,
    partition: &BcPartition,
    interface_index: usize,
    alpha: f64,
    c_value: f64,
) -> Result<(SymTridiagonal, DVector<f64>)> {
    if alpha == 0.0 {
        return Err(Error::InvalidConfig(
            "Robin condition with alpha = 0 degenerates to Dirichlet".into(),
        ));
    }
    if interface_index >= mesh.n_nodes() || !mesh.is_endpoint(interface_index) {
        return Err(Error::InvalidPartition(format!(
            "interface node {interface_index} is not an endpoint"
        )));
    }
    let n = partition.free().len();
    let row = partition.free_position(interface_index).ok_or_else(|| {
        Error::InvalidPartition("Robin interface node must be free".into())
    })?;
    let mut s = SymTridiagonal::zeros(n);
    s.add_diag(row, 1.0);
    let mut r = DVector::zeros(n);
    r[row] = c_value;
    Ok((s, r))
}

/// Outward traction on Γ from a subdomain displacement field.
///
/// `residual` supplies `(M a + K u)` at the interface row for the
/// residual-reaction method; it is ignored for element stress.
pub fn extract_traction(
    mesh: &Mesh1D,
    mat: &MaterialParams,
    state: &KinematicState,
    side: Side,
    method: TractionMethod,
    residual: Option<f64>,
) -> Result<f64> {
    let n = mesh.n_nodes();
    if state.len() != n || n < 2 {
        return Err(Error::DimensionMismatch(format!(
            "state has {} entries for a {n}-node mesh",
            state.len()
        )));
    }
    match method {
        TractionMethod::ElementStress => {
            let scale = mat.youngs_modulus / mesh.element_size();
            Ok(match side {
                Side::Left => scale * (state.u[n - 1] - state.u[n - 2]),
                Side::Right => -scale * (state.u[1] - state.u[0]),
            })
        }
        TractionMethod::ResidualReaction => residual
            .map(|r| r / mat.area)
            .ok_or_else(|| Error::InvalidConfig("residual-reaction traction needs the interface residual".into())),
    }
}

/// Interface node of a subdomain mesh (local index).
pub fn interface_node(mesh: &Mesh1D, side: Side) -> usize {
    match side {
        Side::Left => mesh.last_node(),
        Side::Right => 0,
    }
}
