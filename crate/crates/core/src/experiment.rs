//! Coupled runs measured against the monolithic reference.

use std::ops::Range;
use std::sync::Arc;

use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::metrics::{average_error, iteration_stats, step_error, ErrorReport};
use crate::monolithic::{MonolithicSolver, Trajectory};
use crate::newmark::KinematicState;
use crate::opinf::{build_training_set, infer_operators, rom_nodes, RomOperators, RomSubdomain};
use crate::pod::{compute_basis, PodBasis, SnapshotSet, Truncation};
use crate::schwarz::{run_schwarz, FomSubdomain, SchwarzRun, SubdomainModel};
use crate::transmission::{Side, TransmissionSpec};

/// A trained reduced model of one subdomain.
#[derive(Clone, Debug)]
pub struct RomModel {
    pub basis: PodBasis,
    pub ops: RomOperators,
}

impl RomModel {
    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }
}

/// Subdomain model choice.
#[derive(Clone, Debug)]
pub enum ModelKind {
    Fom,
    Rom(Arc<RomModel>),
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Fom => "FOM",
            ModelKind::Rom(_) => "OpInf",
        }
    }

    pub fn n_modes(&self) -> Option<usize> {
        match self {
            ModelKind::Fom => None,
            ModelKind::Rom(m) => Some(m.n_modes()),
        }
    }
}

/// Global offset and node count of a subdomain.
pub fn subdomain_extent(cfg: &ProblemConfig, side: Side) -> Result<(usize, usize)> {
    let (left, right) = cfg.subdomain_meshes()?;
    let (_, gamma) = cfg.subdomain_offsets()?;
    Ok(match side {
        Side::Left => (0, left.n_nodes()),
        Side::Right => (gamma, right.n_nodes()),
    })
}

/// Snapshots of the nodes a reduced subdomain carries, states `1..=n_train`.
pub fn subdomain_snapshots(
    cfg: &ProblemConfig,
    traj: &Trajectory,
    side: Side,
    n_train: usize,
) -> Result<SnapshotSet> {
    let (offset, n) = subdomain_extent(cfg, side)?;
    let nodes: Vec<usize> = rom_nodes(n, side).iter().map(|i| i + offset).collect();
    SnapshotSet::from_trajectory(traj, &nodes, training_range(traj, n_train)?)
}

fn training_range(traj: &Trajectory, n_train: usize) -> Result<Range<usize>> {
    if n_train == 0 || n_train >= traj.n_states() {
        return Err(Error::InvalidConfig(format!(
            "{n_train} training states requested from a trajectory of {} states",
            traj.n_states()
        )));
    }
    Ok(1..n_train + 1)
}

/// POD basis plus regressed operators for one subdomain, trained on states
/// `1..=n_train` of the monolithic trajectory.
pub fn train_rom(
    cfg: &ProblemConfig,
    traj: &Trajectory,
    spec: &TransmissionSpec,
    side: Side,
    truncation: Truncation,
    n_train: usize,
) -> Result<RomModel> {
    let snapshots = subdomain_snapshots(cfg, traj, side, n_train)?;
    let basis = compute_basis(&snapshots.u, truncation)?;
    let (offset, n) = subdomain_extent(cfg, side)?;
    let train = build_training_set(
        traj,
        side,
        offset,
        &basis,
        &rom_nodes(n, side),
        &spec.side(side),
        spec.sigma_max,
        training_range(traj, n_train)?,
        cfg.training_traction,
    )?;
    let ops = infer_operators(&train, cfg.lambda_reg)?;
    Ok(RomModel { basis, ops })
}

/// Source of monolithic states for the error measure.
pub enum Reference {
    /// Pre-computed trajectory covering the whole horizon.
    Stored(Arc<Trajectory>),
    /// Monolithic solver advanced in lockstep with the coupled run.
    Lockstep,
}

pub struct CoupledResult {
    pub run: SchwarzRun,
    pub report: ErrorReport,
    /// Recorded converged states with their state index.
    pub states: Option<Vec<(usize, [KinematicState; 2])>>,
}

pub fn build_subdomain(
    cfg: &ProblemConfig,
    spec: &TransmissionSpec,
    side: Side,
    kind: &ModelKind,
) -> Result<Box<dyn SubdomainModel>> {
    let (left_mesh, right_mesh) = cfg.subdomain_meshes()?;
    let (mesh, outer) = match side {
        Side::Left => (left_mesh, cfg.dirichlet_left),
        Side::Right => (right_mesh, cfg.dirichlet_right),
    };
    match kind {
        ModelKind::Fom => Ok(Box::new(FomSubdomain::new(
            mesh,
            cfg.material(),
            side,
            spec.side(side),
            cfg.newmark()?,
            outer,
            cfg.traction_method,
            cfg.dirichlet_interface,
        )?)),
        ModelKind::Rom(model) => Ok(Box::new(RomSubdomain::new(
            mesh,
            cfg.material(),
            side,
            spec.side(side),
            cfg.newmark()?,
            outer,
            model.basis.clone(),
            model.ops.clone(),
        )?)),
    }
}

pub fn run_coupled(
    cfg: &ProblemConfig,
    spec: &TransmissionSpec,
    kinds: [&ModelKind; 2],
    reference: &Reference,
    record_every: Option<usize>,
) -> Result<CoupledResult> {
    cfg.validate()?;
    let left = build_subdomain(cfg, spec, Side::Left, kinds[0])?;
    let right = build_subdomain(cfg, spec, Side::Right, kinds[1])?;
    let (_, gamma) = cfg.subdomain_offsets()?;
    let lens = [left.mesh().n_nodes(), right.mesh().n_nodes()];
    let offsets = [0, gamma];

    let lockstep = match reference {
        Reference::Lockstep => Some(MonolithicSolver::new(cfg)?),
        Reference::Stored(traj) => {
            if traj.n_states() < cfg.n_steps() + 1 {
                return Err(Error::InvalidConfig(format!(
                    "reference trajectory has {} states, run needs {}",
                    traj.n_states(),
                    cfg.n_steps() + 1
                )));
            }
            None
        }
    };
    let mut mono_state = match &lockstep {
        Some(solver) => Some(solver.initial_state()?),
        None => None,
    };
    let reference_window = |k: usize, mono: &Option<KinematicState>, sub: usize| -> KinematicState {
        match reference {
            Reference::Stored(traj) => traj.window(k, offsets[sub], lens[sub]),
            Reference::Lockstep => {
                let s = mono.as_ref().expect("lockstep state");
                s.select(&(offsets[sub]..offsets[sub] + lens[sub]).collect::<Vec<_>>())
            }
        }
    };
    let initial = [reference_window(0, &mono_state, 0), reference_window(0, &mono_state, 1)];

    let n_states = cfg.n_steps() + 1;
    let mut report = ErrorReport {
        times: Vec::with_capacity(n_states),
        per_subdomain: [Vec::with_capacity(n_states), Vec::with_capacity(n_states)],
        ..ErrorReport::default()
    };
    if record_every == Some(0) {
        return Err(Error::InvalidConfig("recording stride must be positive".into()));
    }
    let mut recorded = record_every.map(|_| Vec::new());
    let run = run_schwarz(cfg, spec, [left.as_ref(), right.as_ref()], initial, |k, states| {
        if k > 0 {
            if let (Some(solver), Some(mono)) = (&lockstep, mono_state.as_mut()) {
                *mono = solver.step(mono, k - 1)?;
            }
        }
        report.times.push(cfg.time(k));
        for sub in 0..2 {
            let reference = reference_window(k, &mono_state, sub);
            report.per_subdomain[sub].push(step_error(&states[sub], &reference, cfg.dt)?);
        }
        if let (Some(rec), Some(stride)) = (recorded.as_mut(), record_every) {
            if k % stride == 0 || k + 1 == n_states {
                rec.push((k, states.clone()));
            }
        }
        Ok(())
    })?;
    report.eps_avg = if n_states >= 2 {
        average_error(&report.per_subdomain)?
    } else {
        0.0
    };
    report.mean_iterations = iteration_stats(&run.iterations);
    report.wall_time_s = run.wall_time_s;
    Ok(CoupledResult {
        run,
        report,
        states: recorded,
    })
}

/// Largest `|a|` over nodes within `radius` of the interface.
pub fn peak_acceleration_near(mesh: &crate::fem1d::Mesh1D, a: &[f64], interface: f64, radius: f64) -> f64 {
    mesh.nodes()
        .iter()
        .zip(a)
        .filter(|(x, _)| (**x - interface).abs() <= radius + 1e-12)
        .fold(0.0, |m, (_, a)| m.max(a.abs()))
}

/// Peak interface-adjacent acceleration of a coupled state over the same
/// peak of the monolithic state.
pub fn interface_acceleration_ratio(
    cfg: &ProblemConfig,
    coupled: &[KinematicState; 2],
    monolithic: &KinematicState,
    radius: f64,
) -> Result<f64> {
    let (left, right) = cfg.subdomain_meshes()?;
    let full = cfg.full_mesh()?;
    if monolithic.len() != full.n_nodes() || coupled[0].len() != left.n_nodes() || coupled[1].len() != right.n_nodes() {
        return Err(Error::DimensionMismatch("states do not match the configured meshes".into()));
    }
    let coupled_peak = peak_acceleration_near(&left, coupled[0].a.as_slice(), cfg.interface, radius)
        .max(peak_acceleration_near(&right, coupled[1].a.as_slice(), cfg.interface, radius));
    let reference = peak_acceleration_near(&full, monolithic.a.as_slice(), cfg.interface, radius);
    if reference == 0.0 {
        return Err(Error::InvalidConfig("monolithic acceleration vanishes near the interface".into()));
    }
    Ok(coupled_peak / reference)
}

/// Scalar outcome of a coupled run.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct RunSummary {
    pub eps_avg: f64,
    pub mean_iterations: f64,
    pub wall_time_s: f64,
    pub config_hash: String,
    pub transmission: String,
    pub coupling: String,
    pub alpha12_bar: f64,
    pub alpha21_bar: f64,
    pub beta12: f64,
    pub beta21: f64,
    pub modes_left: Option<usize>,
    pub modes_right: Option<usize>,
    pub n_windows: usize,
}

impl RunSummary {
    pub fn new(cfg: &ProblemConfig, spec: &crate::transmission::TransmissionSpec, kinds: [&ModelKind; 2], result: &CoupledResult) -> Self {
        Self {
            eps_avg: result.report.eps_avg,
            mean_iterations: result.report.mean_iterations,
            wall_time_s: result.report.wall_time_s,
            config_hash: cfg.digest(),
            transmission: spec.kind.short_name().into(),
            coupling: format!("{}-{}", kinds[0].label(), kinds[1].label()),
            alpha12_bar: spec.alpha12_bar,
            alpha21_bar: spec.alpha21_bar,
            beta12: spec.beta12,
            beta21: spec.beta21,
            modes_left: kinds[0].n_modes(),
            modes_right: kinds[1].n_modes(),
            n_windows: result.run.n_windows(),
        }
    }
}
