//! Subcommands. Every run writes a manifest next to its primary output;
//! `replay` re-executes a manifest and checks the outputs byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use lunar_descent_core::extremal::{build_dataset, Quadruple, TrajectorySummary};
use lunar_descent_core::guidance::{aggregate, simulate, NeuralGuidance, OracleCase, RunRecord, TraceRow};
use lunar_descent_core::mlp::{train, MlpModel};
use lunar_descent_core::shooting::{
    cold_seed, nearest_in_bank, seed_from_extremal, seed_from_fit, solve, ShootingOutcome, ShootingUnknowns,
    SolverOptions, StageLog,
};
use lunar_descent_core::{LanderState, PhysicalParams, SiState};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{
    load_model, read_dataset, read_json, sha256_file, sidecar, write_histogram, write_history, write_json,
    write_manifest, write_trace, Artifact, DatasetRow, DatasetSidecar, DatasetWriter, ManifestFile, ModelFile,
    ModelMetadata, RunManifest,
};

#[derive(Debug, Parser)]
#[command(name = "lunar-descent", version, about = "Fuel-optimal lunar descent: data, networks, oracle, guidance")]
pub struct Cli {
    /// `key = value` configuration file; defaults are used if it is missing.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Tau,
    Psi,
    Sreg,
    S,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Tau => "tau",
            Target::Psi => "psi",
            Target::Sreg => "sreg",
            Target::S => "s",
        }
    }

    pub fn hidden(self) -> &'static [usize] {
        match self {
            Target::Tau => &[15, 15],
            _ => &[20, 20, 20],
        }
    }

    pub fn column(self, row: &DatasetRow) -> f64 {
        match self {
            Target::Tau => row.tau,
            Target::Psi => row.psi,
            Target::Sreg => row.s_reg,
            Target::S => row.s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeedFrom {
    Cold,
    Trajectory,
    Models,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate extremals and write the training table.
    GenDataset {
        #[arg(long)]
        n_traj: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one network on a dataset column.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        target: Target,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fly one closed-loop descent with the trained networks.
    Simulate {
        /// Directory holding tau.json, psi.json and sreg.json.
        #[arg(long)]
        models: PathBuf,
        /// "r_km,v_mps,theta_deg,omega_radps,m_kg"
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop runs from randomly drawn dataset rows.
    Montecarlo {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "off")]
        oracle: Switch,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the boundary-value problem for one initial state.
    Oracle {
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long, value_enum, default_value = "cold")]
        seed_from: SeedFrom,
        /// Dataset CSV, for `--seed-from trajectory`.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Model directory, for `--seed-from models`.
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a stored manifest and compare outputs.
    Replay { manifest: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenDataset { .. } => "gen-dataset",
            Command::Train { .. } => "train",
            Command::Simulate { .. } => "simulate",
            Command::Montecarlo { .. } => "montecarlo",
            Command::Oracle { .. } => "oracle",
            Command::Replay { .. } => "replay",
        }
    }
}

/// Parse `args` (without the program name) and run. Help and version
/// requests print and return `Ok`.
pub fn run<I, S>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(std::iter::once("lunar-descent".to_string()).chain(args.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.render().to_string()));
        }
    };
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest);
    }
    let (cfg, warning) = RunConfig::load(cli.config.as_deref())?;
    if let Some(w) = warning {
        eprintln!("warning: {w}");
    }
    let ctx = Context {
        manifest: RunManifest {
            subcommand: cli.command.name().to_string(),
            args,
            config_path: cli.config.as_ref().map(|p| p.display().to_string()),
            config: cfg.render(),
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: Vec::new(),
        },
        cfg,
        config_path: cli.config.clone(),
    };
    match cli.command {
        Command::GenDataset { n_traj, seed, out } => gen_dataset(ctx, n_traj, seed, &out),
        Command::Train {
            dataset,
            target,
            out,
            seed,
        } => train_cmd(ctx, &dataset, target, &out, seed),
        Command::Simulate { models, x0, out } => simulate_cmd(ctx, &models, &x0, &out),
        Command::Montecarlo {
            models,
            dataset,
            n,
            seed,
            oracle,
            out,
        } => montecarlo(ctx, &models, &dataset, n, seed, oracle == Switch::On, &out),
        Command::Oracle {
            x0,
            seed_from,
            dataset,
            models,
            out,
        } => oracle_cmd(ctx, &x0, seed_from, dataset.as_deref(), models.as_deref(), &out),
        Command::Replay { .. } => unreachable!(),
    }
}

struct Context {
    manifest: RunManifest,
    cfg: RunConfig,
    config_path: Option<PathBuf>,
}

impl Context {
    fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        self.manifest.inputs.push(Artifact::of(path)?);
        Ok(())
    }

    /// Records the config file (when present) and returns the manifest hash.
    fn seal(&mut self, seed: Option<u64>) -> Result<String, CliError> {
        self.manifest.seed = seed;
        if let Some(p) = self.config_path.clone().filter(|p| p.exists()) {
            self.add_input(&p)?;
        }
        Ok(self.manifest.hash())
    }
}

fn manifest_path(primary: &Path) -> PathBuf {
    sidecar(primary, "manifest.json")
}

/// Parse "r_km,v_mps,theta_deg,omega_radps,m_kg" into SI.
pub fn parse_x0(s: &str) -> Result<SiState, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || CliError::Usage(format!("--x0 expects five comma-separated numbers r_km,v_mps,theta_deg,omega_radps,m_kg; got `{s}`"));
    if parts.len() != 5 {
        return Err(bad());
    }
    let mut v = [0.0; 5];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad)?;
    }
    Ok(SiState {
        r_m: v[0] * 1000.0,
        v_mps: v[1],
        theta_rad: v[2].to_radians(),
        omega_radps: v[3],
        m_kg: v[4],
    })
}

fn check_x0(x0: &SiState, phys: &PhysicalParams) -> Result<(), CliError> {
    if x0.m_kg <= phys.m_dry {
        return Err(CliError::Usage(format!(
            "initial mass {} kg is not above the dry mass {} kg",
            x0.m_kg, phys.m_dry
        )));
    }
    if x0.m_kg > phys.m0 {
        return Err(CliError::Usage(format!(
            "initial mass {} kg exceeds the reference mass {} kg",
            x0.m_kg, phys.m0
        )));
    }
    if x0.r_m < phys.r0 {
        return Err(CliError::Usage("initial radius is below the lunar surface".into()));
    }
    Ok(())
}

fn gen_dataset(mut ctx: Context, n_traj: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let hash = ctx.seal(Some(seed))?;
    let params = ctx.cfg.physical.dimensionless()?;
    let mut writer = DatasetWriter::create(out)?;
    let mut summaries: Vec<TrajectorySummary> = Vec::with_capacity(n_traj);
    let mut io_err = None;
    let stats = build_dataset(n_traj, &ctx.cfg.dataset_config(), seed, &params, |s, _, rows| {
        summaries.push(*s);
        if let Err(e) = writer.write(rows) {
            io_err = Some(e);
            return Err(lunar_descent_core::Error::Domain("dataset write failed"));
        }
        Ok(())
    });
    if let Some(e) = io_err {
        return Err(e);
    }
    let stats = stats?;
    writer.finish()?;
    let stats_path = sidecar(out, "stats.json");
    write_json(
        &stats_path,
        &DatasetSidecar {
            manifest_hash: hash,
            stats: stats.clone(),
            trajectories: summaries,
        },
    )?;
    write_manifest(&manifest_path(out), &ctx.manifest, &[out, &stats_path])?;
    println!(
        "trajectories {} rows {} draws {} acceptance {:.4}",
        stats.accepted, stats.rows, stats.draws, stats.acceptance_rate
    );
    println!(
        "census always_on {} on_off_on {} off_on {} other {}",
        stats.census.always_on, stats.census.on_off_on, stats.census.off_on, stats.census.other
    );
    println!(
        "rejected mass_filter {} subsurface {} mass_bound {} integrator {}",
        stats.rejections.mass_filter,
        stats.rejections.subsurface,
        stats.rejections.mass_bound,
        stats.rejections.integrator_failure
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainOutput {
    manifest_hash: String,
    target: Target,
    dataset_hash: String,
    seed: u64,
    hidden: Vec<usize>,
    n_params: usize,
    report: lunar_descent_core::mlp::TrainReport,
}

fn train_cmd(mut ctx: Context, dataset: &Path, target: Target, out: &Path, seed: u64) -> Result<(), CliError> {
    if !dataset.exists() {
        return Err(CliError::MissingArtifacts(vec![dataset.display().to_string()]));
    }
    ctx.add_input(dataset)?;
    let hash = ctx.seal(Some(seed))?;
    let dataset_hash = ctx.manifest.inputs[0].sha256.clone();
    let rows = read_dataset(dataset)?;
    if rows.is_empty() {
        return Err(CliError::Runtime(format!("{} has no rows above the stop altitude", dataset.display())));
    }
    let x: Vec<f64> = rows.iter().flat_map(|r| r.state().to_array()).collect();
    let y: Vec<f64> = rows.iter().map(|r| target.column(r)).collect();
    let (model, report) = train(&x, 5, &y, target.hidden(), &ctx.cfg.train_config(seed))?;
    if !(report.train_mse.is_finite() && report.val_mse.is_finite()) {
        return Err(CliError::Runtime(format!("training diverged (train MSE {})", report.train_mse)));
    }
    let file = ModelFile {
        model: model.clone(),
        metadata: ModelMetadata {
            target: target.name().into(),
            dataset_hash: dataset_hash.clone(),
            seed,
            train_mse: report.train_mse,
            val_mse: report.val_mse,
            test_mse: report.test_mse,
            manifest_hash: hash.clone(),
        },
    };
    write_json(out, &file)?;
    let report_path = sidecar(out, "report.json");
    let history_path = sidecar(out, "history.csv");
    write_history(&history_path, &report.history)?;
    println!(
        "{}: epochs {} stop {:?} train {:.3e} val {:.3e} test {:.3e} (normalized MSE)",
        target.name(),
        report.epochs,
        report.stop_reason,
        report.train_mse,
        report.val_mse,
        report.test_mse
    );
    write_json(
        &report_path,
        &TrainOutput {
            manifest_hash: hash,
            target,
            dataset_hash,
            seed,
            hidden: target.hidden().to_vec(),
            n_params: model.n_params(),
            report,
        },
    )?;
    write_manifest(&manifest_path(out), &ctx.manifest, &[out, &report_path, &history_path])?;
    Ok(())
}

struct Models {
    tau: MlpModel,
    psi: MlpModel,
    sreg: MlpModel,
}

fn load_models(ctx: &mut Context, dir: &Path) -> Result<Models, CliError> {
    let paths: Vec<PathBuf> = ["tau.json", "psi.json", "sreg.json"].iter().map(|f| dir.join(f)).collect();
    let missing: Vec<String> = paths.iter().filter(|p| !p.exists()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts(missing));
    }
    let mut loaded: Vec<ModelFile> = Vec::new();
    for p in &paths {
        ctx.add_input(p)?;
        loaded.push(load_model(p)?);
    }
    let mut it = loaded.into_iter().map(|m| m.model);
    Ok(Models {
        tau: it.next().unwrap(),
        psi: it.next().unwrap(),
        sreg: it.next().unwrap(),
    })
}

impl Models {
    fn guidance(&self, deadband: f64) -> NeuralGuidance<'_> {
        NeuralGuidance {
            psi: &self.psi,
            s_reg: &self.sreg,
            tau: Some(&self.tau),
            deadband,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SimulateOutput {
    manifest_hash: String,
    x0: SiState,
    #[serde(flatten)]
    report: lunar_descent_core::guidance::LandingReport,
}

fn simulate_cmd(mut ctx: Context, models: &Path, x0: &str, out: &Path) -> Result<(), CliError> {
    let x0 = parse_x0(x0)?;
    check_x0(&x0, &ctx.cfg.physical)?;
    let models = load_models(&mut ctx, models)?;
    let hash = ctx.seal(None)?;
    let mut report = simulate(
        &x0,
        &models.guidance(ctx.cfg.deadband),
        &ctx.cfg.physical,
        &ctx.cfg.sim_config(None),
    )?;
    let trace_path = sidecar(out, "trace.csv");
    write_trace(&trace_path, &report.trace)?;
    report.trace.clear();
    println!(
        "outcome {:?} success {} Vf {:.3} m/s e_p {:.2} m fuel {:.3} kg flight {:.2} s (predicted {})",
        report.outcome,
        report.success,
        report.vf_mps,
        report.e_p_m,
        report.fuel_kg,
        report.flight_time_s,
        report.predicted_flight_time_s.map_or("n/a".into(), |t| format!("{t:.2} s"))
    );
    write_json(
        out,
        &SimulateOutput {
            manifest_hash: hash,
            x0,
            report,
        },
    )?;
    write_manifest(&manifest_path(out), &ctx.manifest, &[out, &trace_path])?;
    Ok(())
}

struct Bank {
    rows: Vec<DatasetRow>,
    trajectories: BTreeMap<u64, TrajectorySummary>,
}

fn load_bank(ctx: &mut Context, dataset: &Path) -> Result<Bank, CliError> {
    let stats_path = sidecar(dataset, "stats.json");
    let missing: Vec<String> = [dataset, &stats_path]
        .iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts(missing));
    }
    ctx.add_input(dataset)?;
    ctx.add_input(&stats_path)?;
    let rows = read_dataset(dataset)?;
    let side: DatasetSidecar = read_json(&stats_path)?;
    let trajectories = side.trajectories.into_iter().map(|s| (s.traj_id, s)).collect();
    Ok(Bank { rows, trajectories })
}

impl Bank {
    /// Rows at or above the given altitude in metres.
    fn rows_above(&self, altitude_m: f64, length_m: f64) -> Vec<DatasetRow> {
        self.rows
            .iter()
            .filter(|r| (r.state().r - 1.0) * length_m >= altitude_m)
            .copied()
            .collect()
    }

    fn quadruple(&self, traj_id: u64) -> Result<Quadruple, CliError> {
        self.trajectories
            .get(&traj_id)
            .map(|s| s.quadruple)
            .ok_or_else(|| CliError::Io(format!("trajectory {traj_id} missing from the stats sidecar")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MonteCarloOutput {
    manifest_hash: String,
    oracle: bool,
    #[serde(flatten)]
    report: lunar_descent_core::guidance::MonteCarloReport,
}

fn oracle_case(
    x0: &LanderState,
    z: &ShootingUnknowns,
    cfg: &RunConfig,
) -> Result<(OracleCase, ShootingOutcome), CliError> {
    let params = cfg.physical.dimensionless()?;
    let scale = cfg.physical.scaling()?;
    let outcome = solve(x0, z, &cfg.homotopy, &params, &SolverOptions::default())?;
    let case = match &outcome {
        ShootingOutcome::Converged(s) => OracleCase {
            converged: true,
            fuel_kg: Some(s.fuel * scale.mass),
            flight_time_s: Some(scale.time_to_si(s.unknowns.tf)),
            residual: s.residual.norm_inf(),
            max_abs_hamiltonian: Some(s.max_abs_hamiltonian),
            final_p_m: s.trajectory.last().map(|r| r.costate.p_m),
        },
        ShootingOutcome::Failed(f) => OracleCase {
            converged: false,
            fuel_kg: None,
            flight_time_s: None,
            residual: f.residual,
            max_abs_hamiltonian: None,
            final_p_m: None,
        },
    };
    Ok((case, outcome))
}

fn montecarlo(
    mut ctx: Context,
    models: &Path,
    dataset: &Path,
    n: usize,
    seed: u64,
    with_oracle: bool,
    out: &Path,
) -> Result<(), CliError> {
    let models = load_models(&mut ctx, models)?;
    let bank = load_bank(&mut ctx, dataset)?;
    let hash = ctx.seal(Some(seed))?;
    let scale = ctx.cfg.physical.scaling()?;
    let params = ctx.cfg.physical.dimensionless()?;
    let sim_cfg = ctx.cfg.sim_config(None);
    let pool = bank.rows_above(sim_cfg.stop_altitude_m, scale.length);
    if pool.is_empty() && n > 0 {
        return Err(CliError::Runtime(format!("{} has no rows above the stop altitude", dataset.display())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if n <= pool.len() {
        sample(&mut rng, pool.len(), n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..pool.len())).collect()
    };

    let policy = models.guidance(ctx.cfg.deadband);
    let mut runs = Vec::with_capacity(n);
    for (index, &k) in picks.iter().enumerate() {
        let row = pool[k];
        let x0 = scale.state_to_si(&row.state());
        let mut report = match simulate(&x0, &policy, &ctx.cfg.physical, &sim_cfg) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("run {index}: {e}");
                continue;
            }
        };
        report.trace.clear();
        let oracle = if with_oracle {
            let q = bank.quadruple(row.traj_id)?;
            let case = seed_from_extremal(&q, row.tau, &params)
                .map_err(CliError::from)
                .and_then(|(_, z)| oracle_case(&scale.state_to_dimensionless(&x0), &z, &ctx.cfg));
            Some(match case {
                Ok((c, _)) => c,
                Err(e) => {
                    eprintln!("run {index}: oracle: {e}");
                    OracleCase {
                        converged: false,
                        fuel_kg: None,
                        flight_time_s: None,
                        residual: f64::NAN,
                        max_abs_hamiltonian: None,
                        final_p_m: None,
                    }
                }
            })
        } else {
            None
        };
        runs.push(RunRecord {
            index,
            x0,
            in_distribution: true,
            report,
            oracle,
        });
    }
    let report = aggregate(runs);
    let hist: [(&str, &lunar_descent_core::guidance::Histogram); 3] = [
        ("vf_hist.csv", &report.vf_histogram),
        ("theta_hist.csv", &report.theta_histogram),
        ("ep_hist.csv", &report.e_p_histogram),
    ];
    let mut outputs = vec![out.to_path_buf()];
    for (suffix, h) in hist {
        let p = sidecar(out, suffix);
        write_histogram(&p, h)?;
        outputs.push(p);
    }
    println!(
        "runs {} success {} ({:.1}%) max Vf {} max e_p {}",
        report.n,
        report.success_count,
        100.0 * report.success_rate,
        report.max_vf_mps.map_or("n/a".into(), |v| format!("{v:.3} m/s")),
        report.max_e_p_m.map_or("n/a".into(), |v| format!("{v:.2} m")),
    );
    if with_oracle {
        println!(
            "oracle converged {}/{}; fuel penalty max {}",
            report.oracle_converged,
            report.oracle_attempted,
            report.max_fuel_penalty_kg.map_or("n/a".into(), |v| format!("{v:.3} kg"))
        );
    }
    write_json(
        out,
        &MonteCarloOutput {
            manifest_hash: hash,
            oracle: with_oracle,
            report,
        },
    )?;
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&manifest_path(out), &ctx.manifest, &refs)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct OracleOutput {
    manifest_hash: String,
    x0: SiState,
    seed_from: String,
    /// Max state defect of the fitted warm-start extremal (scaled units).
    seed_defect: Option<f64>,
    converged: bool,
    unknowns: Option<ShootingUnknowns>,
    tf_s: Option<f64>,
    fuel_kg: Option<f64>,
    residual_norm: f64,
    delta: f64,
    switch_times_s: Vec<f64>,
    max_abs_hamiltonian: Option<f64>,
    final_p_m: Option<f64>,
    stages: Vec<StageLog>,
    message: Option<String>,
}

fn oracle_cmd(
    mut ctx: Context,
    x0_text: &str,
    seed_from: SeedFrom,
    dataset: Option<&Path>,
    models: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let x0_si = parse_x0(x0_text)?;
    check_x0(&x0_si, &ctx.cfg.physical)?;
    let scale = ctx.cfg.physical.scaling()?;
    let params = ctx.cfg.physical.dimensionless()?;
    let x0 = scale.state_to_dimensionless(&x0_si);
    let iv = ctx.cfg.intervals;
    let mid = |(a, b): (f64, f64)| 0.5 * (a + b);
    let centre = Quadruple::new(mid(iv.p_r), mid(iv.p_v), mid(iv.p_theta), mid(iv.p_omega));

    let (name, seed) = match seed_from {
        SeedFrom::Cold => ("cold", cold_seed(&x0, 0.6, &params)),
        SeedFrom::Trajectory => {
            let path = dataset.ok_or_else(|| CliError::Usage("--seed-from trajectory needs --dataset".into()))?;
            let bank = load_bank(&mut ctx, path)?;
            let cands = bank
                .rows
                .iter()
                .filter_map(|r| bank.trajectories.get(&r.traj_id).map(|s| (r.state(), s.quadruple, r.tau)));
            let (q, tau) = nearest_in_bank(&x0, cands)
                .ok_or_else(|| CliError::Runtime(format!("{} has no rows", path.display())))?;
            ("trajectory", seed_from_fit(&x0, &q, tau, &params))
        }
        SeedFrom::Models => {
            let dir = models.ok_or_else(|| CliError::Usage("--seed-from models needs --models".into()))?;
            let p = dir.join("tau.json");
            if !p.exists() {
                return Err(CliError::MissingArtifacts(vec![p.display().to_string()]));
            }
            ctx.add_input(&p)?;
            let tau = load_model(&p)?.model.predict(&x0)?;
            ("models", seed_from_fit(&x0, &centre, tau, &params))
        }
    };
    let hash = ctx.seal(None)?;
    let traj_path = sidecar(out, "trajectory.csv");
    let mut output = OracleOutput {
        manifest_hash: hash,
        x0: x0_si,
        seed_from: name.into(),
        seed_defect: None,
        converged: false,
        unknowns: None,
        tf_s: None,
        fuel_kg: None,
        residual_norm: f64::NAN,
        delta: f64::NAN,
        switch_times_s: Vec::new(),
        max_abs_hamiltonian: None,
        final_p_m: None,
        stages: Vec::new(),
        message: None,
    };
    let result = match seed {
        Err(e) => Err(format!("warm start failed: {e}")),
        Ok((z, defect)) => {
            output.seed_defect = Some(defect);
            let (_, outcome) = oracle_case(&x0, &z, &ctx.cfg)?;
            match outcome {
                ShootingOutcome::Converged(s) => {
                    output.converged = true;
                    output.unknowns = Some(s.unknowns);
                    output.tf_s = Some(scale.time_to_si(s.unknowns.tf));
                    output.fuel_kg = Some(s.fuel * scale.mass);
                    output.residual_norm = s.residual.norm_inf();
                    output.delta = s.delta;
                    output.switch_times_s = s.switch_times.iter().map(|t| scale.time_to_si(*t)).collect();
                    output.max_abs_hamiltonian = Some(s.max_abs_hamiltonian);
                    output.final_p_m = s.trajectory.last().map(|r| r.costate.p_m);
                    output.stages = s.stages;
                    let trace: Vec<TraceRow> = s
                        .trajectory
                        .iter()
                        .map(|r| TraceRow {
                            t_s: scale.time_to_si(r.t),
                            state: scale.state_to_si(&r.state),
                            u: r.u,
                            psi_rad: r.psi,
                        })
                        .collect();
                    write_trace(&traj_path, &trace)?;
                    Ok(())
                }
                ShootingOutcome::Failed(f) => {
                    output.residual_norm = f.residual;
                    output.delta = f.failed_delta;
                    output.unknowns = Some(f.last_unknowns);
                    output.stages = f.stages;
                    Err(f.message)
                }
            }
        }
    };
    if let Err(m) = &result {
        output.message = Some(m.clone());
    }
    write_json(out, &output)?;
    let mut outputs = vec![out];
    if output.converged {
        outputs.push(&traj_path);
        println!(
            "converged: t_f {:.3} s fuel {:.4} kg residual {:.2e} switches {:?} s",
            output.tf_s.unwrap_or(f64::NAN),
            output.fuel_kg.unwrap_or(f64::NAN),
            output.residual_norm,
            output.switch_times_s
        );
    }
    write_manifest(&manifest_path(out), &ctx.manifest, &outputs)?;
    result.map_err(CliError::NotConverged)
}

fn replay(path: &Path) -> Result<(), CliError> {
    let stored: ManifestFile = read_json(path)?;
    if stored.manifest.hash() != stored.manifest_hash {
        return Err(CliError::Config(format!("{}: manifest hash does not match its content", path.display())));
    }
    for input in &stored.manifest.inputs {
        let p = Path::new(&input.path);
        if !p.exists() {
            return Err(CliError::MissingArtifacts(vec![input.path.clone()]));
        }
        if sha256_file(p)? != input.sha256 {
            return Err(CliError::Runtime(format!("input {} changed since the manifest was written", input.path)));
        }
    }
    // a non-convergence is a reproducible outcome too
    match run(stored.manifest.args.clone()) {
        Ok(()) | Err(CliError::NotConverged(_)) => {}
        Err(e) => return Err(e),
    }
    let mut differing = Vec::new();
    for o in &stored.outputs {
        let now = sha256_file(Path::new(&o.path))?;
        let same = now == o.sha256;
        println!("{} {}", if same { "identical" } else { "DIFFERS  " }, o.path);
        if !same {
            differing.push(o.path.clone());
        }
    }
    if differing.is_empty() {
        println!("reproduced {}/{} outputs", stored.outputs.len(), stored.outputs.len());
        Ok(())
    } else {
        Err(CliError::Runtime(format!("outputs differ: {}", differing.join(", "))))
    }
}
