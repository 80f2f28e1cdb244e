//! Robin parameter sweeps, Pareto fronts and the bundled preset experiments.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::error::{Error, Result};
use crate::experiment::{run_coupled, train_rom, CoupledResult, ModelKind, Reference, RomModel};
use crate::metrics::ErrorReport;
use crate::monolithic::{compute_sigma_max, run_monolithic, Trajectory};
use crate::pod::Truncation;
use crate::transmission::{Side, TransmissionKind, TransmissionSpec};

/// Values used on every axis of the standard grid.
pub const DEFAULT_AXIS: [f64; 5] = [1e-3, 1e-1, 1.0, 3.0, 5.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub alpha12_bar: f64,
    pub alpha21_bar: f64,
    pub beta12: f64,
    pub beta21: f64,
    pub eps_avg: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub wall_time_s: f64,
    pub converged: bool,
}

impl SweepRecord {
    pub fn params(&self) -> [f64; 4] {
        [self.alpha12_bar, self.alpha21_bar, self.beta12, self.beta21]
    }

    /// True when `self` is no worse in both objectives and better in one.
    pub fn dominates(&self, other: &SweepRecord) -> bool {
        match (self.objectives(), other.objectives()) {
            (Some((e1, i1)), Some((e2, i2))) => e1 <= e2 && i1 <= i2 && (e1 < e2 || i1 < i2),
            _ => false,
        }
    }

    fn objectives(&self) -> Option<(f64, f64)> {
        match (self.converged, self.eps_avg, self.mean_iterations) {
            (true, Some(e), Some(i)) if e.is_finite() => Some((e, i)),
            _ => None,
        }
    }
}

/// Axis values for `(ᾱ₁₂, ᾱ₂₁, β₁₂, β₂₁)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub alpha12_bar: Vec<f64>,
    pub alpha21_bar: Vec<f64>,
    pub beta12: Vec<f64>,
    pub beta21: Vec<f64>,
}

impl GridAxes {
    pub fn standard() -> Self {
        Self {
            alpha12_bar: DEFAULT_AXIS.to_vec(),
            alpha21_bar: DEFAULT_AXIS.to_vec(),
            beta12: DEFAULT_AXIS.to_vec(),
            beta21: DEFAULT_AXIS.to_vec(),
        }
    }
}

/// Cartesian product in lexicographic order, the last axis varying fastest.
pub fn generate_grid(axes: &GridAxes) -> Vec<[f64; 4]> {
    let mut grid = Vec::new();
    for &a12 in &axes.alpha12_bar {
        for &a21 in &axes.alpha21_bar {
            for &b12 in &axes.beta12 {
                for &b21 in &axes.beta21 {
                    grid.push([a12, a21, b12, b21]);
                }
            }
        }
    }
    grid
}

/// How a subdomain is modelled in a sweep or preset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Fom,
    Rom(Truncation),
}

impl ModelChoice {
    pub fn label(&self) -> &'static str {
        match self {
            ModelChoice::Fom => "FOM",
            ModelChoice::Rom(_) => "OpInf",
        }
    }
}

/// Monolithic reference and training data shared by every run of a study.
#[derive(Clone, Debug)]
pub struct StudyContext {
    pub cfg: ProblemConfig,
    pub traj: Arc<Trajectory>,
    pub sigma_max: f64,
    /// Training states `1..=n_train` of `traj`.
    pub n_train: usize,
}

impl StudyContext {
    pub fn new(cfg: &ProblemConfig) -> Result<Self> {
        let traj = run_monolithic(cfg)?;
        Self::from_trajectory(cfg, Arc::new(traj))
    }

    pub fn from_trajectory(cfg: &ProblemConfig, traj: Arc<Trajectory>) -> Result<Self> {
        cfg.validate()?;
        if traj.n_states() != cfg.n_steps() + 1 {
            return Err(Error::InvalidConfig(format!(
                "trajectory has {} states, the configuration implies {}",
                traj.n_states(),
                cfg.n_steps() + 1
            )));
        }
        let sigma_max = compute_sigma_max(&traj, &cfg.full_mesh()?, &cfg.material())?;
        Ok(Self {
            cfg: cfg.clone(),
            n_train: traj.n_states() - 1,
            traj,
            sigma_max,
        })
    }

    pub fn train(&self, spec: &TransmissionSpec, side: Side, truncation: Truncation) -> Result<RomModel> {
        train_rom(&self.cfg, &self.traj, spec, side, truncation, self.n_train)
    }

    pub fn model(&self, spec: &TransmissionSpec, side: Side, choice: ModelChoice) -> Result<ModelKind> {
        Ok(match choice {
            ModelChoice::Fom => ModelKind::Fom,
            ModelChoice::Rom(t) => ModelKind::Rom(Arc::new(self.train(spec, side, t)?)),
        })
    }
}

fn robin_spec(params: [f64; 4], sigma_max: f64) -> Result<TransmissionSpec> {
    let [a12, a21, b12, b21] = params;
    TransmissionSpec::robin_robin(a12, a21, b12, b21, sigma_max)
}

/// One Robin-Robin run measured against the stored reference.
pub fn run_point(ctx: &StudyContext, models: [ModelChoice; 2], params: [f64; 4]) -> SweepRecord {
    let clock = Instant::now();
    let [a12, a21, b12, b21] = params;
    let failed = |wall: f64| SweepRecord {
        alpha12_bar: a12,
        alpha21_bar: a21,
        beta12: b12,
        beta21: b21,
        eps_avg: None,
        mean_iterations: None,
        wall_time_s: wall,
        converged: false,
    };
    let outcome = (|| -> Result<CoupledResult> {
        let spec = robin_spec(params, ctx.sigma_max)?;
        let left = ctx.model(&spec, Side::Left, models[0])?;
        let right = ctx.model(&spec, Side::Right, models[1])?;
        run_coupled(&ctx.cfg, &spec, [&left, &right], &Reference::Stored(ctx.traj.clone()), None)
    })();
    match outcome {
        Ok(res) => SweepRecord {
            eps_avg: Some(res.report.eps_avg),
            mean_iterations: Some(res.report.mean_iterations),
            wall_time_s: res.report.wall_time_s,
            converged: true,
            ..failed(0.0)
        },
        Err(e) => {
            log::warn!("sweep point {params:?} failed: {e}");
            failed(clock.elapsed().as_secs_f64())
        }
    }
}

/// Runs every grid point, `jobs` at a time. `sink` sees each record as it
/// completes, one call at a time; the returned records follow grid order.
pub fn run_sweep<F>(
    ctx: &StudyContext,
    grid: &[[f64; 4]],
    models: [ModelChoice; 2],
    jobs: usize,
    sink: F,
) -> Result<Vec<SweepRecord>>
where
    F: FnMut(usize, &SweepRecord) + Send,
{
    if jobs == 0 {
        return Err(Error::InvalidConfig("jobs must be at least 1".into()));
    }
    let sink = Mutex::new(sink);
    let task = |(i, params): (usize, &[f64; 4])| {
        let record = run_point(ctx, models, *params);
        if let Ok(mut f) = sink.lock() {
            f(i, &record);
        }
        record
    };
    if jobs == 1 {
        return Ok(grid.iter().enumerate().map(task).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| grid.par_iter().enumerate().map(task).collect()))
}

/// Non-dominated converged records under joint minimization of error and
/// iterations; exact ties are all kept.
pub fn pareto_front(records: &[SweepRecord]) -> Vec<SweepRecord> {
    records
        .iter()
        .filter(|r| r.objectives().is_some())
        .filter(|r| !records.iter().any(|o| o.dominates(r)))
        .cloned()
        .collect()
}

/// A named coupled run inside a preset.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseSpec {
    pub name: String,
    pub kind: TransmissionKind,
    /// `(ᾱ₁₂, ᾱ₂₁, β₁₂, β₂₁)`, used for Robin-Robin only.
    pub params: [f64; 4],
    pub models: [ModelChoice; 2],
}

impl CaseSpec {
    pub fn transmission(&self, sigma_max: f64) -> Result<TransmissionSpec> {
        match self.kind {
            TransmissionKind::AlternatingDN => TransmissionSpec::alternating_dn(sigma_max),
            TransmissionKind::DirichletDirichlet => TransmissionSpec::dirichlet_dirichlet(sigma_max),
            TransmissionKind::RobinRobin => robin_spec(self.params, sigma_max),
        }
    }

    /// `FOM-OpInf`-style label.
    pub fn coupling_label(&self) -> String {
        format!("{}-{}", self.models[0].label(), self.models[1].label())
    }
}

/// Summary row of one preset case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub name: String,
    pub transmission: String,
    pub coupling: String,
    pub alpha12_bar: f64,
    pub alpha21_bar: f64,
    pub beta12: f64,
    pub beta21: f64,
    pub modes_left: Option<usize>,
    pub modes_right: Option<usize>,
    pub eps_avg: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

pub struct CaseResult {
    pub row: CaseRow,
    pub report: Option<ErrorReport>,
    pub iterations: Option<Vec<usize>>,
    pub states: Option<Vec<(usize, [crate::newmark::KinematicState; 2])>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Table1,
    Table2,
    Fig2,
    Fig8,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Table2 => "table2",
            Preset::Fig2 => "fig2",
            Preset::Fig8 => "fig8",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Preset::Table1, Preset::Table2, Preset::Fig2, Preset::Fig8]
            .into_iter()
            .find(|p| p.name() == name)
    }
}

pub const LOWEST_ERROR: [f64; 4] = [1e-3, 1e-3, 1.0, 1.0];
pub const HIGHEST_ERROR: [f64; 4] = [1e-1, 1.0, 1.0, 3.0];
pub const LOWEST_ITERATIONS: [f64; 4] = [1e-3, 1e-3, 1e-1, 5.0];
pub const HIGHEST_ITERATIONS: [f64; 4] = [1e-1, 1e-1, 1e-3, 3.0];

/// Mode counts of the two reduced-model settings.
pub const MODES_LOW: [usize; 2] = [20, 17];
pub const MODES_HIGH: [usize; 2] = [34, 29];

fn case(name: &str, kind: TransmissionKind, params: [f64; 4], models: [ModelChoice; 2]) -> CaseSpec {
    CaseSpec {
        name: name.into(),
        kind,
        params,
        models,
    }
}

const FOM_FOM: [ModelChoice; 2] = [ModelChoice::Fom, ModelChoice::Fom];

fn rom_rom(modes: [usize; 2]) -> [ModelChoice; 2] {
    [
        ModelChoice::Rom(Truncation::Modes(modes[0])),
        ModelChoice::Rom(Truncation::Modes(modes[1])),
    ]
}

pub fn table1_cases() -> Vec<CaseSpec> {
    use TransmissionKind::*;
    vec![
        case("dirichlet-neumann", AlternatingDN, [0.0; 4], FOM_FOM),
        case("lowest-error", RobinRobin, LOWEST_ERROR, FOM_FOM),
        case("highest-error", RobinRobin, HIGHEST_ERROR, FOM_FOM),
        case("lowest-iterations", RobinRobin, LOWEST_ITERATIONS, FOM_FOM),
        case("highest-iterations", RobinRobin, HIGHEST_ITERATIONS, FOM_FOM),
    ]
}

/// Both conditions, both mode settings, and the three couplings involving a reduced model.
pub fn table2_cases() -> Vec<CaseSpec> {
    let mut cases = Vec::new();
    for (kind, params, tag) in [
        (TransmissionKind::AlternatingDN, [0.0; 4], "dn"),
        (TransmissionKind::RobinRobin, LOWEST_ERROR, "rr"),
    ] {
        for modes in [MODES_LOW, MODES_HIGH] {
            let [l, r] = rom_rom(modes);
            for (models, label) in [
                ([l, ModelChoice::Fom], "opinf-fom"),
                ([ModelChoice::Fom, r], "fom-opinf"),
                ([l, r], "opinf-opinf"),
            ] {
                let name = format!("{tag}-{label}-{}-{}", modes[0], modes[1]);
                cases.push(case(&name, kind, params, models));
            }
        }
    }
    cases
}

pub fn fig8_cases() -> Vec<CaseSpec> {
    use TransmissionKind::*;
    vec![
        case("dn-fom-fom", AlternatingDN, [0.0; 4], FOM_FOM),
        case("rr-fom-fom", RobinRobin, LOWEST_ERROR, FOM_FOM),
        case("dn-opinf-opinf", AlternatingDN, [0.0; 4], rom_rom(MODES_HIGH)),
        case("rr-opinf-opinf", RobinRobin, LOWEST_ERROR, rom_rom(MODES_HIGH)),
    ]
}

/// Horizon of the predictive study.
pub const FIG8_TF: f64 = 1e-2;

/// Trained models shared between the cases of one preset.
#[derive(Default)]
pub struct ModelCache {
    models: Mutex<HashMap<String, Arc<RomModel>>>,
}

impl ModelCache {
    pub fn get(&self, ctx: &StudyContext, spec: &TransmissionSpec, side: Side, choice: ModelChoice) -> Result<ModelKind> {
        let ModelChoice::Rom(truncation) = choice else {
            return Ok(ModelKind::Fom);
        };
        // the learned operators depend on the coefficients of this side only
        let c = spec.side(side);
        let key = format!("{side:?}|{truncation:?}|{:e}|{:e}", c.alpha, c.beta);
        if let Some(m) = self.models.lock().ok().and_then(|m| m.get(&key).cloned()) {
            return Ok(ModelKind::Rom(m));
        }
        let model = Arc::new(ctx.train(spec, side, truncation)?);
        if let Ok(mut m) = self.models.lock() {
            m.insert(key, model.clone());
        }
        Ok(ModelKind::Rom(model))
    }
}

/// Runs one case. `run_cfg` sets the horizon; models are trained from `ctx`.
pub fn run_case(
    ctx: &StudyContext,
    run_cfg: &ProblemConfig,
    case: &CaseSpec,
    cache: &ModelCache,
    reference: &Reference,
    record_every: Option<usize>,
) -> CaseResult {
    let mut row = CaseRow {
        name: case.name.clone(),
        transmission: case.kind.short_name().into(),
        coupling: case.coupling_label(),
        alpha12_bar: 0.0,
        alpha21_bar: 0.0,
        beta12: 0.0,
        beta21: 0.0,
        modes_left: None,
        modes_right: None,
        eps_avg: None,
        mean_iterations: None,
        wall_time_s: None,
        converged: false,
        error: None,
    };
    let outcome = (|| -> Result<CoupledResult> {
        let spec = case.transmission(ctx.sigma_max)?;
        row.alpha12_bar = spec.alpha12_bar;
        row.alpha21_bar = spec.alpha21_bar;
        row.beta12 = spec.beta12;
        row.beta21 = spec.beta21;
        let left = cache.get(ctx, &spec, Side::Left, case.models[0])?;
        let right = cache.get(ctx, &spec, Side::Right, case.models[1])?;
        row.modes_left = left.n_modes();
        row.modes_right = right.n_modes();
        run_coupled(run_cfg, &spec, [&left, &right], reference, record_every)
    })();
    match outcome {
        Ok(res) => {
            row.eps_avg = Some(res.report.eps_avg);
            row.mean_iterations = Some(res.report.mean_iterations);
            row.wall_time_s = Some(res.report.wall_time_s);
            row.converged = true;
            CaseResult {
                row,
                iterations: Some(res.run.iterations),
                report: Some(res.report),
                states: res.states,
            }
        }
        Err(e) => {
            row.error = Some(e.to_string());
            CaseResult {
                row,
                report: None,
                iterations: None,
                states: None,
            }
        }
    }
}
