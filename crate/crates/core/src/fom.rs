//! Full-order finite-element stepper with prescribed nodes and an optional
//! Robin term at one end node.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem1d::{assemble_system, partition_system, AssembledSystem, BcPartition, MaterialParams, Mesh1D};
use crate::linalg::{SymTridiagonal, TridiagonalLdl};
use crate::newmark::{initial_acceleration, KinematicState, NewmarkParams};

/// Robin stiffness added on the diagonal of one node, `(β/α) A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobinTerm {
    pub node: usize,
    pub stiffness: f64,
}

#[derive(Clone, Debug)]
pub struct FullOrderStepper {
    mesh: Mesh1D,
    material: MaterialParams,
    system: AssembledSystem,
    params: NewmarkParams,
    /// Effective stiffness over all nodes, including any Robin term.
    effective: SymTridiagonal,
    factor: TridiagonalLdl,
    /// When false, prescribed nodes couple to the free nodes through stiffness only.
    prescribed_inertia: bool,
}

impl FullOrderStepper {
    pub fn new(
        mesh: Mesh1D,
        material: MaterialParams,
        partition: BcPartition,
        params: NewmarkParams,
        robin: Option<RobinTerm>,
    ) -> Result<Self> {
        params.validate()?;
        let (mass, stiffness) = assemble_system(&mesh, &material);
        let system = partition_system(&mass, &stiffness, &partition)?;
        let mut effective = mass.combine(params.mass_factor(), &stiffness, 1.0)?;
        if let Some(term) = robin {
            if partition.free_position(term.node).is_none() {
                return Err(Error::InvalidPartition(format!(
                    "Robin node {} is constrained",
                    term.node
                )));
            }
            effective.add_diag(term.node, term.stiffness);
        }
        let factor = effective.principal_submatrix(partition.free()).factor()?;
        Ok(Self {
            mesh,
            material,
            system,
            params,
            effective,
            factor,
            prescribed_inertia: true,
        })
    }

    /// Drops the inertia of prescribed nodes from the free equations.
    pub fn without_prescribed_inertia(mut self) -> Self {
        self.prescribed_inertia = false;
        self
    }

    pub fn prescribed_inertia(&self) -> bool {
        self.prescribed_inertia
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn material(&self) -> &MaterialParams {
        &self.material
    }

    pub fn system(&self) -> &AssembledSystem {
        &self.system
    }

    pub fn partition(&self) -> &BcPartition {
        &self.system.partition
    }

    pub fn params(&self) -> &NewmarkParams {
        &self.params
    }

    /// Consistent initial acceleration over the free nodes, zero at constrained nodes.
    pub fn initial_state(&self, u0: DVector<f64>, v0: DVector<f64>, t0: f64) -> Result<KinematicState> {
        let free = self.partition().free();
        let u_free = DVector::from_iterator(free.len(), free.iter().map(|&i| u0[i]));
        // constrained nodes start at rest
        let f0 = &self.system.dirichlet_coupling
            * DVector::from_iterator(
                self.partition().constrained().len(),
                self.partition().constrained().iter().map(|&i| u0[i]),
            );
        let a_free = initial_acceleration(&self.system.mass_free, &self.system.stiffness_free, &f0, &u_free)?;
        let mut a0 = DVector::zeros(u0.len());
        for (k, &i) in free.iter().enumerate() {
            a0[i] = a_free[k];
        }
        KinematicState::new(u0, v0, a0, t0)
    }

    /// Advances `prev` by one step.
    ///
    /// `prescribed` holds displacements at `t_{n+1}` for the constrained nodes
    /// (in partition order); `nodal_force` is an external force on one node.
    pub fn step(
        &self,
        prev: &KinematicState,
        prescribed: &[f64],
        nodal_force: Option<(usize, f64)>,
    ) -> Result<KinematicState> {
        let n = self.mesh.n_nodes();
        let part = &self.system.partition;
        if prev.len() != n || prescribed.len() != part.constrained().len() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} entries for {n} nodes; {} prescribed values for {} constrained nodes",
                prev.len(),
                prescribed.len(),
                part.constrained().len()
            )));
        }
        let mut pred = vec![0.0; n];
        self.params
            .predictor(prev.u.as_slice(), prev.v.as_slice(), prev.a.as_slice(), &mut pred);
        let mut inertia = vec![0.0; n];
        if !self.prescribed_inertia {
            for &d in part.constrained() {
                pred[d] = 0.0;
            }
        }
        self.system.mass.mul_vec(&pred, &mut inertia);

        let mut u_new = vec![0.0; n];
        for (&i, &g) in part.constrained().iter().zip(prescribed) {
            u_new[i] = g;
        }
        let free = part.free();
        let mut rhs: Vec<f64> = free.iter().map(|&i| inertia[i]).collect();
        if let Some((node, force)) = nodal_force {
            if let Some(k) = part.free_position(node) {
                rhs[k] += force;
            }
        }
        for &d in part.constrained() {
            let g = u_new[d];
            if g == 0.0 {
                continue;
            }
            for nb in [d.wrapping_sub(1), d + 1] {
                if nb < n {
                    if let Some(k) = part.free_position(nb) {
                        let coup = if self.prescribed_inertia {
                            self.effective.get(nb, d)
                        } else {
                            self.system.stiffness.get(nb, d)
                        };
                        rhs[k] -= coup * g;
                    }
                }
            }
        }
        self.factor.solve_in_place(&mut rhs);
        for (k, &i) in free.iter().enumerate() {
            u_new[i] = rhs[k];
        }

        let mut next = KinematicState::zeros(n, prev.t + self.params.dt);
        for i in 0..n {
            let (a, v) = self.params.corrector(u_new[i], prev.u[i], prev.v[i], prev.a[i]);
            next.u[i] = u_new[i];
            next.v[i] = v;
            next.a[i] = a;
        }
        Ok(next)
    }

    /// Nodal residual `(M a + K u)_i` of the unpartitioned system.
    pub fn nodal_residual(&self, state: &KinematicState, node: usize) -> f64 {
        self.system.mass.row_dot(node, state.a.as_slice())
            + self.system.stiffness.row_dot(node, state.u.as_slice())
    }
}
