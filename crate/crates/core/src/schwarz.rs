//! Multiplicative non-overlapping Schwarz iteration over two subdomains.
//!
//! Within each time window the left subdomain is solved first with data from
//! the right subdomain's previous iterate; the right subdomain then consumes
//! the left subdomain's fresh iterate. Every subdomain re-solve restarts from
//! the state converged at the end of the previous window.

use std::sync::Arc;
use std::time::Instant;

use crate::config::{DirichletInterface, LambdaReset, ProblemConfig, TractionMethod};
use crate::error::{Error, Result};
use crate::fem1d::{BcPartition, MaterialParams, Mesh1D};
use crate::fom::{FullOrderStepper, RobinTerm};
use crate::newmark::{KinematicState, NewmarkParams};
use crate::transmission::{
    extract_traction, interface_node, InterfaceRole, InterfaceState, Side, SideCoefficients,
    TransmissionSpec,
};

/// Start-of-window data handed to every iteration of one window.
#[derive(Clone, Debug)]
pub enum WindowStart {
    /// Re-solve from the state converged at the end of the previous window.
    Restart(KinematicState),
    /// Iterate as `base + λ slope`, for models whose window solve is affine in λ.
    Affine {
        base: Arc<KinematicState>,
        slope: Arc<KinematicState>,
    },
}

/// A subdomain solver usable inside the Schwarz loop.
pub trait SubdomainModel: Send + Sync {
    fn mesh(&self) -> &Mesh1D;

    fn side(&self) -> Side;

    fn prepare_window(&self, prev: &KinematicState) -> Result<WindowStart> {
        Ok(WindowStart::Restart(prev.clone()))
    }

    /// Solves the window with transmission data `lambda`, returning the
    /// full-order state at the end of the window.
    fn solve_iteration(&self, lambda: f64, start: &WindowStart) -> Result<KinematicState>;

    /// Outward traction on Γ for a state of this subdomain.
    fn interface_traction(&self, state: &KinematicState) -> Result<f64>;

    fn interface_node(&self) -> usize {
        interface_node(self.mesh(), self.side())
    }

    /// True when the interface displacement is prescribed rather than solved for.
    fn prescribes_interface(&self) -> bool;

    fn label(&self) -> &'static str;
}

/// Finite-element subdomain.
#[derive(Clone, Debug)]
pub struct FomSubdomain {
    stepper: FullOrderStepper,
    side: Side,
    role: InterfaceRole,
    outer_value: f64,
    traction_method: TractionMethod,
}

impl FomSubdomain {
    pub fn new(
        mesh: Mesh1D,
        material: MaterialParams,
        side: Side,
        coeffs: SideCoefficients,
        params: NewmarkParams,
        outer_value: f64,
        traction_method: TractionMethod,
        dirichlet: DirichletInterface,
    ) -> Result<Self> {
        let gamma = interface_node(&mesh, side);
        let outer = match side {
            Side::Left => 0,
            Side::Right => mesh.last_node(),
        };
        let role = coeffs.role();
        let (constrained, robin) = match role {
            InterfaceRole::Dirichlet { beta } => {
                if beta == 0.0 {
                    return Err(Error::InvalidConfig(
                        "Dirichlet transmission with beta = 0".into(),
                    ));
                }
                (vec![outer, gamma], None)
            }
            InterfaceRole::Robin { alpha, beta } => (
                vec![outer],
                (beta != 0.0).then(|| RobinTerm {
                    node: gamma,
                    stiffness: material.area * beta / alpha,
                }),
            ),
        };
        let partition = BcPartition::new(mesh.n_nodes(), &constrained, Some(gamma))?;
        let mut stepper = FullOrderStepper::new(mesh, material, partition, params, robin)?;
        if dirichlet == DirichletInterface::Condensed {
            stepper = stepper.without_prescribed_inertia();
        }
        Ok(Self {
            stepper,
            side,
            role,
            outer_value,
            traction_method,
        })
    }

    pub fn stepper(&self) -> &FullOrderStepper {
        &self.stepper
    }
}

impl SubdomainModel for FomSubdomain {
    fn mesh(&self) -> &Mesh1D {
        self.stepper.mesh()
    }

    fn side(&self) -> Side {
        self.side
    }

    fn solve_iteration(&self, lambda: f64, start: &WindowStart) -> Result<KinematicState> {
        let WindowStart::Restart(prev) = start else {
            return Err(Error::InvalidConfig("finite-element subdomain handed an affine window".into()));
        };
        match self.role {
            InterfaceRole::Dirichlet { beta } => {
                let g = lambda / beta;
                let prescribed = match self.side {
                    Side::Left => [self.outer_value, g],
                    Side::Right => [g, self.outer_value],
                };
                self.stepper.step(prev, &prescribed, None)
            }
            InterfaceRole::Robin { alpha, .. } => {
                let force = self.stepper.material().area * lambda / alpha;
                self.stepper
                    .step(prev, &[self.outer_value], Some((self.interface_node(), force)))
            }
        }
    }

    fn interface_traction(&self, state: &KinematicState) -> Result<f64> {
        let residual = match self.traction_method {
            TractionMethod::ElementStress => None,
            TractionMethod::ResidualReaction => {
                Some(self.stepper.nodal_residual(state, self.interface_node()))
            }
        };
        extract_traction(
            self.mesh(),
            self.stepper.material(),
            state,
            self.side,
            self.traction_method,
            residual,
        )
    }

    fn prescribes_interface(&self) -> bool {
        matches!(self.role, InterfaceRole::Dirichlet { .. })
    }

    fn label(&self) -> &'static str {
        "FOM"
    }
}

/// Relative change `‖Δu + dt Δv + ½dt² Δa‖ / ‖u + dt v + ½dt² a‖` between iterates.
///
/// Falls back to the absolute numerator when the denominator vanishes.
pub fn convergence_measure(prev: &KinematicState, next: &KinematicState, dt: f64) -> f64 {
    let half_dt2 = 0.5 * dt * dt;
    let n = prev.len().min(next.len());
    let (pu, pv, pa) = (&prev.u.as_slice()[..n], &prev.v.as_slice()[..n], &prev.a.as_slice()[..n]);
    let (nu, nv, na) = (&next.u.as_slice()[..n], &next.v.as_slice()[..n], &next.a.as_slice()[..n]);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let d = (nu[i] - pu[i]) + dt * (nv[i] - pv[i]) + half_dt2 * (na[i] - pa[i]);
        let s = pu[i] + dt * pv[i] + half_dt2 * pa[i];
        num += d * d;
        den += s * s;
    }
    let (num, den) = (num.sqrt(), den.sqrt());
    if den < 1e-14 * num.max(1.0) {
        num
    } else {
        num / den
    }
}

pub fn check_convergence(prev: &KinematicState, next: &KinematicState, dt: f64, delta: f64) -> bool {
    convergence_measure(prev, next, dt) < delta
}

#[derive(Clone, Debug)]
pub struct WindowOutcome {
    pub states: [KinematicState; 2],
    pub iterations: usize,
    pub measure: f64,
}

/// Window-level controls shared by every window of a run.
#[derive(Clone, Copy, Debug)]
pub struct WindowControls {
    pub dt: f64,
    pub delta: f64,
    pub max_iters: usize,
    pub reset_lambda: bool,
    /// Copy the neighbor's interface velocity and acceleration onto a
    /// prescribed interface node.
    pub neighbor_kinematics: bool,
}

fn copy_interface_rates(target: &mut KinematicState, node: usize, source: &KinematicState, source_node: usize) {
    target.v[node] = source.v[source_node];
    target.a[node] = source.a[source_node];
}

/// Iterates one time window to convergence.
pub fn advance_window(
    models: [&dyn SubdomainModel; 2],
    start: &[KinematicState; 2],
    iface: &mut InterfaceState,
    spec: &TransmissionSpec,
    controls: &WindowControls,
    window: usize,
    t_next: f64,
) -> Result<WindowOutcome> {
    let [left, right] = models;
    let coeffs = [spec.side(Side::Left), spec.side(Side::Right)];
    if controls.reset_lambda {
        iface.reset_lambda();
    }
    let prepared = [left.prepare_window(&start[0])?, right.prepare_window(&start[1])?];
    let mut iterate = [start[0].clone(), start[1].clone()];
    let mut measure = f64::INFINITY;
    for s in 0..controls.max_iters {
        // Ω₁ from Ω₂'s iterate s; tractions are handed over in the receiver's normal
        let t2 = right.interface_traction(&iterate[1])?;
        let u2 = iterate[1].u[right.interface_node()];
        let lambda1 = iface.update(Side::Left, &coeffs[0], -t2, u2);
        let mut next_left = left.solve_iteration(lambda1, &prepared[0])?;
        next_left.t = t_next;
        if controls.neighbor_kinematics && left.prescribes_interface() {
            copy_interface_rates(&mut next_left, left.interface_node(), &iterate[1], right.interface_node());
        }

        // Ω₂ from Ω₁'s fresh iterate s + 1
        let t1 = left.interface_traction(&next_left)?;
        let u1 = next_left.u[left.interface_node()];
        let lambda2 = iface.update(Side::Right, &coeffs[1], -t1, u1);
        let mut next_right = right.solve_iteration(lambda2, &prepared[1])?;
        next_right.t = t_next;
        if controls.neighbor_kinematics && right.prescribes_interface() {
            copy_interface_rates(&mut next_right, right.interface_node(), &next_left, left.interface_node());
        }

        // the previous iterate is finite, so any non-finite entry shows up in the measure
        let m1 = convergence_measure(&iterate[0], &next_left, controls.dt);
        let m2 = convergence_measure(&iterate[1], &next_right, controls.dt);
        if !(m1.is_finite() && m2.is_finite() && iface.is_finite()) {
            return Err(Error::Diverged {
                window,
                time: t_next,
                iterations: s + 1,
                last_measure: f64::INFINITY,
            });
        }
        measure = m1.max(m2);
        iterate = [next_left, next_right];
        if m1 < controls.delta && m2 < controls.delta {
            return Ok(WindowOutcome {
                states: iterate,
                iterations: s + 1,
                measure,
            });
        }
    }
    Err(Error::Diverged {
        window,
        time: t_next,
        iterations: controls.max_iters,
        last_measure: measure,
    })
}

/// Outcome of a coupled run; states are delivered to the observer as they converge.
#[derive(Clone, Debug)]
pub struct SchwarzRun {
    pub iterations: Vec<usize>,
    pub measures: Vec<f64>,
    pub wall_time_s: f64,
    pub final_states: [KinematicState; 2],
}

impl SchwarzRun {
    pub fn n_windows(&self) -> usize {
        self.iterations.len()
    }
}

/// Full time loop. `observer` sees the initial states (window 0) and the
/// converged states of every window; wall time excludes the observer.
pub fn run_schwarz<F>(
    cfg: &ProblemConfig,
    spec: &TransmissionSpec,
    models: [&dyn SubdomainModel; 2],
    initial: [KinematicState; 2],
    mut observer: F,
) -> Result<SchwarzRun>
where
    F: FnMut(usize, &[KinematicState; 2]) -> Result<()>,
{
    spec.validate()?;
    let n_steps = cfg.n_steps();
    let controls = WindowControls {
        dt: cfg.dt,
        delta: cfg.schwarz_tol,
        max_iters: cfg.max_schwarz_iters,
        reset_lambda: true,
        neighbor_kinematics: cfg.dirichlet_interface == DirichletInterface::Condensed,
    };
    let mut iface = InterfaceState::default();
    let mut iterations = Vec::with_capacity(n_steps);
    let mut measures = Vec::with_capacity(n_steps);
    let mut states = initial;
    observer(0, &states)?;
    let mut elapsed = 0.0;
    for n in 0..n_steps {
        let window_controls = WindowControls {
            reset_lambda: match cfg.lambda_reset {
                LambdaReset::EveryWindow => true,
                LambdaReset::InitialOnly => n == 0,
            },
            ..controls
        };
        let clock = Instant::now();
        let outcome = advance_window(
            models,
            &states,
            &mut iface,
            spec,
            &window_controls,
            n,
            cfg.time(n + 1),
        )?;
        elapsed += clock.elapsed().as_secs_f64();
        iterations.push(outcome.iterations);
        measures.push(outcome.measure);
        states = outcome.states;
        observer(n + 1, &states)?;
    }
    Ok(SchwarzRun {
        iterations,
        measures,
        wall_time_s: elapsed,
        final_states: states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn state(u: &[f64], v: &[f64], a: &[f64]) -> KinematicState {
        KinematicState::new(
            DVector::from_column_slice(u),
            DVector::from_column_slice(v),
            DVector::from_column_slice(a),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn identical_iterates_converge() {
        let s = state(&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]);
        assert_eq!(convergence_measure(&s, &s, 1e-3), 0.0);
        assert!(check_convergence(&s, &s, 1e-3, 1e-12));
    }

    #[test]
    fn uniform_relative_perturbation() {
        let s = state(&[1.0, -2.0, 0.5], &[30.0, 4.0, -1.0], &[5e3, 6e2, 1.0]);
        let scaled = KinematicState {
            u: &s.u * (1.0 + 1e-6),
            v: &s.v * (1.0 + 1e-6),
            a: &s.a * (1.0 + 1e-6),
            t: 0.0,
        };
        let m = convergence_measure(&s, &scaled, 1e-3);
        assert!((m - 1e-6).abs() < 1e-12);
        assert!(!check_convergence(&s, &scaled, 1e-3, 1e-8));
    }

    #[test]
    fn zero_states_use_absolute_fallback() {
        let z = KinematicState::zeros(3, 0.0);
        assert!(check_convergence(&z, &z, 1e-3, 1e-8));
    }
}
