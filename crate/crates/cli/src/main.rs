use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use nosam_core::experiment::{
    interface_acceleration_ratio, run_coupled, train_rom, ModelKind, Reference, RomModel, RunSummary,
};
use nosam_core::io::{
    file_sha256, load_basis, load_operators, load_trajectory, read_json, save_basis, save_coupled_states,
    save_operators, save_trajectory, write_errors_csv, write_iterations_csv, ArtifactDir,
};
use nosam_core::monolithic::{compute_sigma_max, monolithic_sigma_max, run_monolithic};
use nosam_core::pod::Truncation;
use nosam_core::sweep::{
    fig8_cases, generate_grid, pareto_front, run_case, run_sweep, table1_cases, table2_cases, CaseResult,
    CaseRow, GridAxes, ModelCache, ModelChoice, Preset, StudyContext, SweepRecord, FIG8_TF, LOWEST_ERROR,
};
use nosam_core::transmission::{Side, TransmissionKind, TransmissionSpec};
use nosam_core::{Error, ProblemConfig, Result};

/// Like `println!`, but a closed pipe is not an error.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "nosam", version, about = "Schwarz coupling of FEM and operator-inference models on a 1D bar")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Coefficients {
    /// Normalized α of the left subdomain (Robin only).
    #[arg(long)]
    alpha12: Option<f64>,
    #[arg(long)]
    alpha21: Option<f64>,
    #[arg(long)]
    beta12: Option<f64>,
    #[arg(long)]
    beta21: Option<f64>,
    /// Relaxation of the left and right transmission updates.
    #[arg(long, default_value_t = 1.0)]
    theta1: f64,
    #[arg(long, default_value_t = 1.0)]
    theta2: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Single-domain reference run.
    Monolithic {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// POD basis and operator inference for one subdomain.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trajectory sidecar written by `monolithic`.
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        subdomain: u8,
        #[arg(long, conflicts_with = "modes", required_unless_present = "modes")]
        energy: Option<f64>,
        #[arg(long)]
        modes: Option<usize>,
        /// dn, rr or dd.
        #[arg(long)]
        transmission: String,
        #[command(flatten)]
        coeffs: Coefficients,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coupled Schwarz run.
    Couple {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `fom` or `rom:DIR` with DIR written by `train`.
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
        #[arg(long)]
        transmission: String,
        #[command(flatten)]
        coeffs: Coefficients,
        /// Stored monolithic trajectory; otherwise the reference is stepped alongside.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Save converged states every N windows.
        #[arg(long)]
        record_every: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Robin parameter sweep.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "fig2")]
        preset: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Comma-separated values used on all four axes instead of the standard grid.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bundled experiments: table1, table2, fig2, fig8.
    Preset {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints the summaries found in an output directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Diverged { .. } | Error::NonFinite(_) | Error::Singular(_) => 3,
        Error::Io { .. } | Error::Format(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let argv: Vec<String> = std::env::args().collect();
    match execute(cli.command, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ProblemConfig> {
    match path {
        Some(p) => ProblemConfig::load(p),
        None => Ok(ProblemConfig::default()),
    }
}

fn path_string(p: Option<&Path>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn transmission_spec(name: &str, c: &Coefficients, sigma_max: f64) -> Result<TransmissionSpec> {
    let kind = TransmissionKind::from_short_name(name)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown transmission {name:?}, expected dn, rr or dd")))?;
    let spec = match kind {
        TransmissionKind::RobinRobin => {
            let [a12, a21, b12, b21] = LOWEST_ERROR;
            TransmissionSpec::robin_robin(
                c.alpha12.unwrap_or(a12),
                c.alpha21.unwrap_or(a21),
                c.beta12.unwrap_or(b12),
                c.beta21.unwrap_or(b21),
                sigma_max,
            )?
        }
        _ => {
            if [c.alpha12, c.alpha21, c.beta12, c.beta21].iter().any(Option::is_some) {
                return Err(Error::InvalidConfig(format!(
                    "coefficients are fixed for the {name} condition"
                )));
            }
            match kind {
                TransmissionKind::AlternatingDN => TransmissionSpec::alternating_dn(sigma_max)?,
                _ => TransmissionSpec::dirichlet_dirichlet(sigma_max)?,
            }
        }
    };
    spec.with_relaxation(c.theta1, c.theta2)
}

fn execute(command: Command, argv: Vec<String>) -> Result<()> {
    match command {
        Command::Monolithic { config, out } => cmd_monolithic(config.as_deref(), &out, argv),
        Command::Train {
            config,
            trajectory,
            subdomain,
            energy,
            modes,
            transmission,
            coeffs,
            out,
        } => {
            let truncation = match (energy, modes) {
                (Some(e), None) => Truncation::Energy(e),
                (None, Some(r)) => Truncation::Modes(r),
                _ => return Err(Error::InvalidConfig("give exactly one of --energy and --modes".into())),
            };
            let side = if subdomain == 1 { Side::Left } else { Side::Right };
            cmd_train(config.as_deref(), &trajectory, side, truncation, &transmission, &coeffs, &out, argv)
        }
        Command::Couple {
            config,
            left,
            right,
            transmission,
            coeffs,
            reference,
            record_every,
            out,
        } => cmd_couple(
            config.as_deref(),
            [&left, &right],
            &transmission,
            &coeffs,
            reference.as_deref(),
            record_every,
            &out,
            argv,
        ),
        Command::Sweep {
            config,
            preset,
            jobs,
            values,
            out,
        } => {
            if preset != "fig2" {
                return Err(Error::InvalidConfig(format!("sweep preset {preset:?} is unknown, expected fig2")));
            }
            cmd_sweep(config.as_deref(), jobs, values, &out, argv)
        }
        Command::Preset { name, config, jobs, out } => {
            let preset = Preset::from_name(&name).ok_or_else(|| {
                Error::InvalidConfig(format!("unknown preset {name:?}, expected table1, table2, fig2 or fig8"))
            })?;
            cmd_preset(preset, config.as_deref(), jobs, &out, argv)
        }
        Command::Report { input } => cmd_report(&input),
    }
}

fn cmd_monolithic(config: Option<&Path>, out: &Path, argv: Vec<String>) -> Result<()> {
    let cfg = load_config(config)?;
    let mut dir = ArtifactDir::create(out)?;
    let traj = run_monolithic(&cfg)?;
    let sigma_max = compute_sigma_max(&traj, &cfg.full_mesh()?, &cfg.material())?;
    let files = save_trajectory(&dir.path("trajectory.json")?, &traj, &cfg.digest())?;
    dir.record(files);
    dir.write_text("config.toml", &cfg.to_toml_string())?;
    dir.write_json(
        "monolithic.json",
        &json!({
            "sigma_max": sigma_max,
            "n_states": traj.n_states(),
            "n_nodes": traj.n_nodes(),
            "interface_node": traj.interface_node,
            "config_hash": cfg.digest(),
        }),
    )?;
    out!("monolithic: {} states, sigma_max = {sigma_max:.6e} Pa", traj.n_states());
    dir.finish(argv, path_string(config), Some(cfg.digest()), None)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config: Option<&Path>,
    trajectory: &Path,
    side: Side,
    truncation: Truncation,
    transmission: &str,
    coeffs: &Coefficients,
    out: &Path,
    argv: Vec<String>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let (traj, sidecar) = load_trajectory(trajectory)?;
    if sidecar.config_hash != cfg.digest() {
        log::warn!("trajectory was produced with a different configuration");
    }
    let sigma_max = compute_sigma_max(&traj, &cfg.full_mesh()?, &cfg.material())?;
    let spec = transmission_spec(transmission, coeffs, sigma_max)?;
    let n_train = traj.n_states().saturating_sub(1);
    let mut model = train_rom(&cfg, &traj, &spec, side, truncation, n_train)?;
    let hash = file_sha256(trajectory)?;
    model.ops.basis_file = Some("basis.json".into());
    model.ops.training_hash = Some(hash.clone());

    let mut dir = ArtifactDir::create(out)?;
    let files = save_basis(&dir.path("basis.json")?, &model.basis, side, &hash)?;
    dir.record(files);
    let ops_path = dir.path("operators.json")?;
    save_operators(&ops_path, &model.ops)?;
    dir.record([ops_path]);
    dir.write_text("config.toml", &cfg.to_toml_string())?;
    dir.write_json(
        "train.json",
        &json!({
            "side": side,
            "modes": model.n_modes(),
            "rank": model.basis.rank,
            "captured_energy": model.basis.captured_energy,
            "transmission": spec.kind.short_name(),
            "form": model.ops.form,
            "alpha": model.ops.alpha,
            "beta": model.ops.beta,
            "n_samples": model.ops.n_samples,
            "lambda_reg": model.ops.lambda_reg,
            "sigma_max": sigma_max,
        }),
    )?;
    out!(
        "train: {side:?} subdomain, {} modes, captured energy {:.10}",
        model.n_modes(),
        model.basis.captured_energy
    );
    dir.finish(argv, path_string(config), Some(cfg.digest()), None)?;
    Ok(())
}

fn load_rom(dir: &Path) -> Result<RomModel> {
    let ops = load_operators(&dir.join("operators.json"))?;
    let basis_file = ops.basis_file.clone().unwrap_or_else(|| "basis.json".into());
    let (basis, _) = load_basis(&dir.join(basis_file))?;
    Ok(RomModel { basis, ops })
}

fn model_arg(arg: &str) -> Result<ModelKind> {
    if arg == "fom" {
        return Ok(ModelKind::Fom);
    }
    match arg.strip_prefix("rom:") {
        Some(path) => Ok(ModelKind::Rom(Arc::new(load_rom(Path::new(path))?))),
        None => Err(Error::InvalidConfig(format!("model {arg:?} must be fom or rom:DIR"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_couple(
    config: Option<&Path>,
    models: [&str; 2],
    transmission: &str,
    coeffs: &Coefficients,
    reference: Option<&Path>,
    record_every: Option<usize>,
    out: &Path,
    argv: Vec<String>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let kinds = [model_arg(models[0])?, model_arg(models[1])?];
    let stored = match reference {
        Some(p) => Some(Arc::new(load_trajectory(p)?.0)),
        None => None,
    };
    let rom_sigma = kinds.iter().find_map(|k| match k {
        ModelKind::Rom(m) => Some(m.ops.sigma_max),
        ModelKind::Fom => None,
    });
    let sigma_max = match (&stored, rom_sigma) {
        (Some(traj), _) => compute_sigma_max(traj, &cfg.full_mesh()?, &cfg.material())?,
        (None, Some(s)) => s,
        (None, None) => monolithic_sigma_max(&cfg)?,
    };
    let spec = transmission_spec(transmission, coeffs, sigma_max)?;
    for (kind, side) in kinds.iter().zip([Side::Left, Side::Right]) {
        if let ModelKind::Rom(m) = kind {
            let c = spec.side(side);
            let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
            if !(same(m.ops.alpha, c.alpha) && same(m.ops.beta, c.beta) && same(m.ops.sigma_max, sigma_max)) {
                log::warn!("{side:?} reduced model was trained with different transmission coefficients");
            }
        }
    }
    let reference = match stored {
        Some(traj) => Reference::Stored(traj),
        None => Reference::Lockstep,
    };
    let result = run_coupled(&cfg, &spec, [&kinds[0], &kinds[1]], &reference, record_every)?;
    let summary = RunSummary::new(&cfg, &spec, [&kinds[0], &kinds[1]], &result);

    let mut dir = ArtifactDir::create(out)?;
    dir.write_json("summary.json", &summary)?;
    let errors = dir.path("errors.csv")?;
    write_errors_csv(&errors, &result.report)?;
    let iterations = dir.path("iterations.csv")?;
    write_iterations_csv(&iterations, &result.report.times, &result.run.iterations)?;
    dir.record([errors, iterations]);
    if let Some(states) = &result.states {
        let files = save_coupled_states(&dir.path("states.json")?, states, &result.run.iterations, &cfg.digest())?;
        dir.record(files);
    }
    dir.write_text("config.toml", &cfg.to_toml_string())?;
    out!(
        "couple {} {}: eps_avg = {:.4e}, mean iterations = {:.3}, wall time = {:.3} s",
        summary.transmission, summary.coupling, summary.eps_avg, summary.mean_iterations, summary.wall_time_s
    );
    dir.finish(argv, path_string(config), Some(cfg.digest()), None)?;
    Ok(())
}

fn write_records(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_rows(path: &Path, rows: &[CaseRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn run_sweep_into(
    dir: &mut ArtifactDir,
    ctx: &StudyContext,
    axes: &GridAxes,
    jobs: usize,
) -> Result<Value> {
    let grid = generate_grid(axes);
    let sweep_path = dir.path("sweep.csv")?;
    let mut writer = csv::Writer::from_path(&sweep_path).map_err(|e| Error::Format(e.to_string()))?;
    let total = grid.len();
    let mut done = 0usize;
    let records = run_sweep(ctx, &grid, [ModelChoice::Fom, ModelChoice::Fom], jobs, |_, record| {
        done += 1;
        if writer.serialize(record).and_then(|_| Ok(writer.flush()?)).is_err() {
            log::error!("could not append to {}", sweep_path.display());
        }
        log::info!("sweep {done}/{total}: {:?} converged = {}", record.params(), record.converged);
    })?;
    drop(writer);
    // rewritten in grid order once every point is in
    write_records(&sweep_path, &records)?;
    let front = pareto_front(&records);
    let pareto_path = dir.path("pareto.csv")?;
    write_records(&pareto_path, &front)?;
    dir.record([sweep_path, pareto_path]);

    let cache = ModelCache::default();
    let dn_case = &table1_cases()[0];
    let dn = run_case(ctx, &ctx.cfg, dn_case, &cache, &Reference::Stored(ctx.traj.clone()), None);
    let converged: Vec<&SweepRecord> = records.iter().filter(|r| r.converged).collect();
    let best_by = |key: fn(&SweepRecord) -> f64| {
        converged
            .iter()
            .min_by(|a, b| key(a).total_cmp(&key(b)))
            .map(|r| (*r).clone())
    };
    let dn_iters = dn.row.mean_iterations;
    let summary = json!({
        "n_points": records.len(),
        "n_converged": converged.len(),
        "n_pareto": front.len(),
        "dn_reference": dn.row,
        "lowest_error": best_by(|r| r.eps_avg.unwrap_or(f64::INFINITY)),
        "lowest_iterations": best_by(|r| r.mean_iterations.unwrap_or(f64::INFINITY)),
        "all_converged_below_dn_iterations": dn_iters.map(|d| converged.iter().all(|r| r.mean_iterations.is_some_and(|i| i < d))),
    });
    dir.write_json("sweep_summary.json", &summary)?;
    out!(
        "sweep: {} points, {} converged, {} on the Pareto front",
        records.len(),
        converged.len(),
        front.len()
    );
    Ok(summary)
}

fn cmd_sweep(config: Option<&Path>, jobs: usize, values: Option<Vec<f64>>, out: &Path, argv: Vec<String>) -> Result<()> {
    let cfg = load_config(config)?;
    let axes = match values {
        Some(v) if v.is_empty() => return Err(Error::InvalidConfig("--values is empty".into())),
        Some(v) => GridAxes {
            alpha12_bar: v.clone(),
            alpha21_bar: v.clone(),
            beta12: v.clone(),
            beta21: v,
        },
        None => GridAxes::standard(),
    };
    let ctx = StudyContext::new(&cfg)?;
    let mut dir = ArtifactDir::create(out)?;
    run_sweep_into(&mut dir, &ctx, &axes, jobs)?;
    dir.write_text("config.toml", &cfg.to_toml_string())?;
    dir.finish(argv, path_string(config), Some(cfg.digest()), Some("fig2".into()))?;
    Ok(())
}

/// State stride for snapshot recording in table1.
const SNAPSHOT_STRIDE: usize = 250;
/// Time and radius of the interface oscillation check.
const OSCILLATION_TIME: f64 = 2.5e-4;
const OSCILLATION_RADIUS: f64 = 0.05;

fn write_case(dir: &mut ArtifactDir, result: &CaseResult, cfg: &ProblemConfig) -> Result<()> {
    let name = &result.row.name;
    dir.write_json(&format!("{name}/summary.json"), &result.row)?;
    if let (Some(report), Some(iterations)) = (&result.report, &result.iterations) {
        let errors = dir.path(&format!("{name}/errors.csv"))?;
        write_errors_csv(&errors, report)?;
        let iters = dir.path(&format!("{name}/iterations.csv"))?;
        write_iterations_csv(&iters, &report.times, iterations)?;
        dir.record([errors, iters]);
        if let Some(states) = &result.states {
            let files = save_coupled_states(&dir.path(&format!("{name}/states.json"))?, states, iterations, &cfg.digest())?;
            dir.record(files);
        }
    }
    Ok(())
}

fn print_rows(rows: &[CaseRow]) {
    out!(
        "{:<28} {:>4} {:>12} {:>7} {:>12} {:>8} {:>9}",
        "case", "bc", "coupling", "modes", "eps_avg", "iters", "wall [s]"
    );
    for r in rows {
        let modes = match (r.modes_left, r.modes_right) {
            (None, None) => "-".to_string(),
            (l, r) => format!(
                "{}/{}",
                l.map_or("-".into(), |m| m.to_string()),
                r.map_or("-".into(), |m| m.to_string())
            ),
        };
        let fmt = |x: Option<f64>, p: usize, sci: bool| match x {
            Some(v) if sci => format!("{v:.3e}"),
            Some(v) => format!("{v:.p$}"),
            None => "failed".into(),
        };
        out!(
            "{:<28} {:>4} {:>12} {:>7} {:>12} {:>8} {:>9}",
            r.name,
            r.transmission,
            r.coupling,
            modes,
            fmt(r.eps_avg, 0, true),
            fmt(r.mean_iterations, 3, false),
            fmt(r.wall_time_s, 3, false)
        );
    }
}

fn cmd_preset(preset: Preset, config: Option<&Path>, jobs: usize, out: &Path, argv: Vec<String>) -> Result<()> {
    let cfg = load_config(config)?;
    let ctx = StudyContext::new(&cfg)?;
    let mut dir = ArtifactDir::create(out)?;
    dir.write_text("config.toml", &cfg.to_toml_string())?;
    let cache = ModelCache::default();
    let stored = Reference::Stored(ctx.traj.clone());
    let mut extra = json!({});
    let rows: Vec<CaseRow> = match preset {
        Preset::Fig2 => {
            extra = run_sweep_into(&mut dir, &ctx, &GridAxes::standard(), jobs)?;
            Vec::new()
        }
        Preset::Table1 => {
            let snapshot_steps: Vec<usize> = (0..=cfg.n_steps()).step_by(SNAPSHOT_STRIDE).collect();
            let files = save_trajectory(
                &dir.path("reference.json")?,
                &ctx.traj.select_states(&snapshot_steps),
                &cfg.digest(),
            )?;
            dir.record(files);
            let check_step = ((OSCILLATION_TIME - cfg.t0) / cfg.dt).round() as usize;
            let mut rows = Vec::new();
            let mut ratios = serde_json::Map::new();
            for case in table1_cases() {
                let result = run_case(&ctx, &cfg, &case, &cache, &stored, Some(SNAPSHOT_STRIDE));
                if let Some(states) = &result.states {
                    if let Some((_, s)) = states.iter().find(|(k, _)| *k == check_step) {
                        let ratio =
                            interface_acceleration_ratio(&cfg, s, &ctx.traj.state(check_step), OSCILLATION_RADIUS)?;
                        ratios.insert(case.name.clone(), json!(ratio));
                    }
                }
                write_case(&mut dir, &result, &cfg)?;
                rows.push(result.row);
            }
            extra = json!({
                "interface_acceleration_ratio": ratios,
                "oscillation_time_s": OSCILLATION_TIME,
                "oscillation_radius_m": OSCILLATION_RADIUS,
            });
            rows
        }
        Preset::Table2 => {
            let mut rows = Vec::new();
            let mut references = Vec::new();
            for case in table1_cases().into_iter().take(2) {
                let result = run_case(&ctx, &cfg, &case, &cache, &stored, None);
                references.push(result.row.clone());
                write_case(&mut dir, &result, &cfg)?;
            }
            for case in table2_cases() {
                let result = run_case(&ctx, &cfg, &case, &cache, &stored, None);
                write_case(&mut dir, &result, &cfg)?;
                rows.push(result.row);
            }
            let speedups: serde_json::Map<String, Value> = rows
                .iter()
                .filter_map(|r| {
                    let base = references.iter().find(|b| b.transmission == r.transmission)?;
                    Some((r.name.clone(), json!(base.wall_time_s? / r.wall_time_s?)))
                })
                .collect();
            extra = json!({ "fom_fom_references": references, "speedup_over_fom_fom": speedups });
            rows
        }
        Preset::Fig8 => {
            let long = ProblemConfig { tf: FIG8_TF, ..cfg.clone() };
            long.validate()?;
            let mut rows = Vec::new();
            for case in fig8_cases() {
                let result = run_case(&ctx, &long, &case, &cache, &Reference::Lockstep, None);
                write_case(&mut dir, &result, &long)?;
                rows.push(result.row);
            }
            extra = json!({
                "tf": FIG8_TF,
                "training_cutoff_s": cfg.time(ctx.n_train),
                "training_states": ctx.n_train,
            });
            rows
        }
    };
    if !rows.is_empty() {
        let table = dir.path("table.csv")?;
        write_rows(&table, &rows)?;
        dir.record([table]);
        print_rows(&rows);
    }
    dir.write_json(
        "summary.json",
        &json!({ "preset": preset.name(), "config_hash": cfg.digest(), "rows": rows, "extra": extra }),
    )?;
    dir.finish(argv, path_string(config), Some(cfg.digest()), Some(preset.name().into()))?;
    Ok(())
}

fn collect_summaries(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_summaries(&p, found)?;
        } else if p.file_name().is_some_and(|n| n == "summary.json") {
            found.push(p);
        }
    }
    Ok(())
}

fn cmd_report(input: &Path) -> Result<()> {
    let top = input.join("summary.json");
    if top.exists() {
        let value: Value = read_json(&top)?;
        if let Some(rows) = value.get("rows") {
            let rows: Vec<CaseRow> = serde_json::from_value(rows.clone())?;
            out!("preset {}", value["preset"].as_str().unwrap_or("?"));
            print_rows(&rows);
            if let Some(extra) = value.get("extra").filter(|e| e.as_object().is_some_and(|o| !o.is_empty())) {
                out!("{}", serde_json::to_string_pretty(extra)?);
            }
            return Ok(());
        }
    }
    let mut found = Vec::new();
    collect_summaries(input, &mut found)?;
    if found.is_empty() && !input.join("sweep_summary.json").exists() {
        return Err(Error::InvalidConfig(format!("no summary.json below {}", input.display())));
    }
    for path in found {
        let s: RunSummary = match read_json(&path) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let rel = path.parent().and_then(|p| p.strip_prefix(input).ok()).unwrap_or(Path::new("."));
        out!(
            "{:<24} {:>3} {:>12} eps_avg {:.4e}  iters {:.3}  wall {:.3} s",
            rel.display(),
            s.transmission,
            s.coupling,
            s.eps_avg,
            s.mean_iterations,
            s.wall_time_s
        );
    }
    let sweep = input.join("sweep_summary.json");
    if sweep.exists() {
        let value: Value = read_json(&sweep)?;
        out!("{}", serde_json::to_string_pretty(&value)?);
    }
    Ok(())
}
