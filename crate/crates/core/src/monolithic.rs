//! Single-domain reference simulation of the clamped bar.

use nalgebra::{DMatrix, DVector};

use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::fem1d::{element_stress, gaussian_ic, BcPartition, MaterialParams, Mesh1D};
use crate::fom::FullOrderStepper;
use crate::newmark::KinematicState;

/// Recorded monolithic solution, one column per stored state (t0 included).
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub a: DMatrix<f64>,
    /// Displacement at the interface node.
    pub interface_disp: Vec<f64>,
    /// Outward traction seen by the left subdomain (stress of the element left of Γ).
    pub traction_left: Vec<f64>,
    /// Outward traction seen by the right subdomain (minus the stress right of Γ).
    pub traction_right: Vec<f64>,
    pub interface_node: usize,
}

impl Trajectory {
    pub fn n_states(&self) -> usize {
        self.times.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.u.nrows()
    }

    pub fn state(&self, k: usize) -> KinematicState {
        KinematicState {
            u: self.u.column(k).into_owned(),
            v: self.v.column(k).into_owned(),
            a: self.a.column(k).into_owned(),
            t: self.times[k],
        }
    }

    /// State `k` restricted to nodes `offset .. offset + len`.
    pub fn window(&self, k: usize, offset: usize, len: usize) -> KinematicState {
        KinematicState {
            u: self.u.column(k).rows(offset, len).into_owned(),
            v: self.v.column(k).rows(offset, len).into_owned(),
            a: self.a.column(k).rows(offset, len).into_owned(),
            t: self.times[k],
        }
    }

    /// Keeps the listed states, in the given order.
    pub fn select_states(&self, states: &[usize]) -> Self {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), states.len(), |i, j| m[(i, states[j])]);
        let series = |x: &[f64]| states.iter().map(|&k| x[k]).collect::<Vec<_>>();
        Self {
            times: series(&self.times),
            u: pick(&self.u),
            v: pick(&self.v),
            a: pick(&self.a),
            interface_disp: series(&self.interface_disp),
            traction_left: series(&self.traction_left),
            traction_right: series(&self.traction_right),
            interface_node: self.interface_node,
        }
    }

    /// Keeps the first `n_states` states.
    pub fn truncated(&self, n_states: usize) -> Self {
        let n = n_states.min(self.n_states());
        Self {
            times: self.times[..n].to_vec(),
            u: self.u.columns(0, n).into_owned(),
            v: self.v.columns(0, n).into_owned(),
            a: self.a.columns(0, n).into_owned(),
            interface_disp: self.interface_disp[..n].to_vec(),
            traction_left: self.traction_left[..n].to_vec(),
            traction_right: self.traction_right[..n].to_vec(),
            interface_node: self.interface_node,
        }
    }
}

/// Steps the full bar one window at a time.
#[derive(Clone, Debug)]
pub struct MonolithicSolver {
    cfg: ProblemConfig,
    stepper: FullOrderStepper,
    interface_node: usize,
}

impl MonolithicSolver {
    pub fn new(cfg: &ProblemConfig) -> Result<Self> {
        cfg.validate()?;
        let mesh = cfg.full_mesh()?;
        let last = mesh.last_node();
        let interface_node = mesh
            .node_at(cfg.interface)
            .ok_or_else(|| Error::InvalidConfig("interface is not a mesh node".into()))?;
        let partition = BcPartition::new(mesh.n_nodes(), &[0, last], None)?;
        let stepper = FullOrderStepper::new(mesh, cfg.material(), partition, cfg.newmark()?, None)?;
        Ok(Self {
            cfg: cfg.clone(),
            stepper,
            interface_node,
        })
    }

    pub fn mesh(&self) -> &Mesh1D {
        self.stepper.mesh()
    }

    pub fn interface_node(&self) -> usize {
        self.interface_node
    }

    pub fn initial_state(&self) -> Result<KinematicState> {
        let mesh = self.mesh();
        let mut u0 = gaussian_ic(mesh, self.cfg.ic_amplitude, self.cfg.ic_center, self.cfg.ic_width)?;
        u0[0] = self.cfg.dirichlet_left;
        let last = mesh.last_node();
        u0[last] = self.cfg.dirichlet_right;
        self.stepper
            .initial_state(u0, DVector::zeros(mesh.n_nodes()), self.cfg.t0)
    }

    /// State at window `step + 1` from the state at window `step`.
    pub fn step(&self, prev: &KinematicState, step: usize) -> Result<KinematicState> {
        let mut next = self
            .stepper
            .step(prev, &[self.cfg.dirichlet_left, self.cfg.dirichlet_right], None)?;
        next.t = self.cfg.time(step + 1);
        Ok(next)
    }

    /// Outward interface tractions `(left, right)` from element stresses.
    pub fn interface_tractions(&self, state: &KinematicState) -> (f64, f64) {
        let g = self.interface_node;
        let scale = self.cfg.youngs_modulus / self.cfg.h;
        let left = scale * (state.u[g] - state.u[g - 1]);
        let right = -scale * (state.u[g + 1] - state.u[g]);
        (left, right)
    }
}

/// Runs the clamped bar from `t0` to `tf`, recording every state.
pub fn run_monolithic(cfg: &ProblemConfig) -> Result<Trajectory> {
    let solver = MonolithicSolver::new(cfg)?;
    let n_steps = cfg.n_steps();
    let n_nodes = solver.mesh().n_nodes();
    let mut traj = Trajectory {
        times: Vec::with_capacity(n_steps + 1),
        u: DMatrix::zeros(n_nodes, n_steps + 1),
        v: DMatrix::zeros(n_nodes, n_steps + 1),
        a: DMatrix::zeros(n_nodes, n_steps + 1),
        interface_disp: Vec::with_capacity(n_steps + 1),
        traction_left: Vec::with_capacity(n_steps + 1),
        traction_right: Vec::with_capacity(n_steps + 1),
        interface_node: solver.interface_node(),
    };
    let mut record = |k: usize, s: &KinematicState| {
        traj.times.push(s.t);
        traj.u.set_column(k, &s.u);
        traj.v.set_column(k, &s.v);
        traj.a.set_column(k, &s.a);
        traj.interface_disp.push(s.u[solver.interface_node()]);
        let (tl, tr) = solver.interface_tractions(s);
        traj.traction_left.push(tl);
        traj.traction_right.push(tr);
    };
    let mut state = solver.initial_state()?;
    record(0, &state);
    for n in 0..n_steps {
        state = solver.step(&state, n)?;
        record(n + 1, &state);
    }
    Ok(traj)
}

/// Largest element stress magnitude from `t0` to `tf` without storing states.
pub fn monolithic_sigma_max(cfg: &ProblemConfig) -> Result<f64> {
    let solver = MonolithicSolver::new(cfg)?;
    let mat = cfg.material();
    let peak = |s: &KinematicState| -> Result<f64> {
        let stress = element_stress(solver.mesh(), &mat, s.u.as_slice())?;
        Ok(stress.iter().fold(0.0_f64, |m, x| m.max(x.abs())))
    };
    let mut state = solver.initial_state()?;
    let mut sigma_max = peak(&state)?;
    for n in 0..cfg.n_steps() {
        state = solver.step(&state, n)?;
        sigma_max = sigma_max.max(peak(&state)?);
    }
    Ok(sigma_max)
}

/// Largest element stress magnitude over every recorded state.
pub fn compute_sigma_max(traj: &Trajectory, mesh: &Mesh1D, mat: &MaterialParams) -> Result<f64> {
    if traj.n_states() == 0 {
        return Err(Error::InvalidConfig("empty trajectory".into()));
    }
    let mut sigma_max = 0.0_f64;
    for col in traj.u.column_iter() {
        let stress = element_stress(mesh, mat, col.as_slice())?;
        sigma_max = stress.iter().fold(sigma_max, |m, s| m.max(s.abs()));
    }
    Ok(sigma_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_cfg(tf: f64) -> ProblemConfig {
        ProblemConfig {
            tf,
            ..ProblemConfig::default()
        }
    }

    #[test]
    fn empty_horizon_returns_initial_state_only() {
        let traj = run_monolithic(&short_cfg(0.0)).unwrap();
        assert_eq!(traj.n_states(), 1);
        assert!((traj.u[(500, 0)] - 0.005).abs() < 1e-15);
    }

    #[test]
    fn zero_amplitude_stays_zero() {
        let cfg = ProblemConfig {
            ic_amplitude: 0.0,
            tf: 2.5e-5,
            ..ProblemConfig::default()
        };
        let traj = run_monolithic(&cfg).unwrap();
        assert_eq!(traj.n_states(), 101);
        assert_eq!(traj.u.amax(), 0.0);
        assert_eq!(traj.a.amax(), 0.0);
        let sigma = compute_sigma_max(&traj, &cfg.full_mesh().unwrap(), &cfg.material()).unwrap();
        assert_eq!(sigma, 0.0);
        assert_eq!(monolithic_sigma_max(&cfg).unwrap(), 0.0);
    }

    #[test]
    fn streaming_sigma_max_matches_stored() {
        let cfg = short_cfg(5e-5);
        let traj = run_monolithic(&cfg).unwrap();
        let stored = compute_sigma_max(&traj, &cfg.full_mesh().unwrap(), &cfg.material()).unwrap();
        assert_eq!(monolithic_sigma_max(&cfg).unwrap(), stored);
        let picked = traj.select_states(&[3, 0]);
        assert_eq!(picked.times, vec![traj.times[3], 0.0]);
        assert_eq!(picked.u.column(1), traj.u.column(0));
    }

    #[test]
    fn sigma_max_of_uniform_strain() {
        let mesh = crate::fem1d::build_uniform_mesh(0.0, 1.0, 0.1).unwrap();
        let mat = MaterialParams::new(3.0, 1.0, 1.0).unwrap();
        let eps = 0.01;
        let col = DVector::from_iterator(mesh.n_nodes(), mesh.nodes().iter().map(|x| eps * x));
        let u = DMatrix::from_columns(&[col.clone(), col]);
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            v: u.clone() * 0.0,
            a: u.clone() * 0.0,
            u,
            interface_disp: vec![0.0; 2],
            traction_left: vec![0.0; 2],
            traction_right: vec![0.0; 2],
            interface_node: 5,
        };
        let sigma = compute_sigma_max(&traj, &mesh, &mat).unwrap();
        assert!((sigma - 3.0 * eps).abs() < 1e-12);
    }
}
