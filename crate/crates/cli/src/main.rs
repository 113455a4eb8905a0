//! `thermophase` command line driver.
//!
//! Subcommands: `run` (single simulation), `converge` (refinement study),
//! `applied` (two-particle sintering experiment), `check` (structural
//! property smoke test).  Errors exit nonzero with one machine-parsable line
//! on stderr; bad arguments print usage and exit 2.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thermophase::diagnostics::{self, DiagnosticsRecord};
use thermophase::experiments::{
    applied_experiment, convergence_initial_data, convergence_study, AppliedConfig, StudyConfig,
    TempProfile,
};
use thermophase::fem::FemSpace;
use thermophase::mesh::build_uniform;
use thermophase::model::{validate_split, MobilityMatrix};
use thermophase::scheme::{SolverConfig, Stepper};

use thermophase_cli::config::{parse_config, RunConfig};
use thermophase_cli::output::{write_diagnostics, write_snapshot, SnapshotFormat};

#[derive(Parser)]
#[command(name = "thermophase", version, about = "Structure-preserving phase-field solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Key-value configuration file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single simulation and write diagnostics plus a final snapshot.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Snapshot file format.
        #[arg(long, default_value = "grid-csv")]
        format: SnapshotFormat,
    },
    /// Run the refinement study and write the error/EOC table as CSV.
    Converge {
        #[command(flatten)]
        common: CommonArgs,
        /// Finest refinement level (runs levels 0..=K).
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Run the two-particle sintering experiment.
    Applied {
        #[command(flatten)]
        common: CommonArgs,
        /// Initial temperature profile.
        #[arg(long)]
        profile: Option<TempProfile>,
        #[arg(long, default_value = "grid-csv")]
        format: SnapshotFormat,
    },
    /// Run the structural property suite on a small configuration.
    Check {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version itself; argument errors exit 2
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = thread_cap() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Run { common, format } => cmd_run(&common, format),
        Command::Converge { common, levels } => cmd_converge(&common, levels),
        Command::Applied { common, profile, format } => cmd_applied(&common, profile, format),
        Command::Check { common } => cmd_check(&common),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

/// `THERMOPHASE_THREADS` caps the number of concurrently advanced refinement
/// levels.  The driver currently runs levels sequentially, so any positive
/// cap is honored as-is; the variable is still validated.
fn thread_cap() -> Result<usize, String> {
    match std::env::var("THERMOPHASE_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(format!("THERMOPHASE_THREADS must be a positive integer, got `{v}`")),
        },
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        None => RunConfig::default(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.display().to_string();
    }
    Ok(cfg)
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf, String> {
    let dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    Ok(dir)
}

fn cmd_run(common: &CommonArgs, format: SnapshotFormat) -> Result<ExitCode, String> {
    let cfg = load_config(common)?;
    let dir = ensure_out_dir(&cfg)?;
    let space = FemSpace::new(build_uniform(cfg.n).map_err(|e| e.to_string())?);
    let mobility = cfg.mobility.matrix();
    let stepper = Stepper::new(&space, &cfg.params, &mobility, cfg.solver_config())
        .map_err(|e| e.to_string())?;
    let (rho0, theta0, eta0) = convergence_initial_data(&space).map_err(|e| e.to_string())?;
    let mut records = Vec::new();
    let mut snapshots: Vec<thermophase::scheme::State> = Vec::new();
    let snapshot_times = cfg.snapshot_times.clone();
    let final_state = stepper
        .run(rho0, theta0, eta0, |state, _, record| {
            records.push(record.clone());
            if snapshot_times.iter().any(|&t| (t - state.t).abs() < 1e-9) {
                snapshots.push(state.clone());
            }
        })
        .map_err(|e| e.to_string())?;
    write_diagnostics(&records, &dir.join("diagnostics.csv")).map_err(|e| e.to_string())?;
    for snap in &snapshots {
        let name = format!("snapshot_t{:.6}.{}", snap.t, format.extension());
        write_snapshot(&space, snap, &dir.join(name), format).map_err(|e| e.to_string())?;
    }
    let name = format!("final.{}", format.extension());
    write_snapshot(&space, &final_state, &dir.join(name), format).map_err(|e| e.to_string())?;
    println!(
        "run: n={} tau={:.3e} steps={} -> {}",
        cfg.n,
        cfg.tau,
        records.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_converge(common: &CommonArgs, levels: Option<usize>) -> Result<ExitCode, String> {
    let cfg = load_config(common)?;
    let dir = ensure_out_dir(&cfg)?;
    let k_max = levels.unwrap_or(cfg.levels);
    let mobility = cfg.mobility.matrix();
    let table = convergence_study(k_max, &cfg.params, &mobility, &StudyConfig::default())
        .map_err(|e| e.to_string())?;
    let csv_path = dir.join("convergence.csv");
    std::fs::write(&csv_path, table.to_csv())
        .map_err(|e| format!("cannot write {}: {e}", csv_path.display()))?;
    print!("{}", table.to_text());
    println!("converge: levels 0..={k_max} -> {}", csv_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_applied(
    common: &CommonArgs,
    profile: Option<TempProfile>,
    format: SnapshotFormat,
) -> Result<ExitCode, String> {
    let cfg = load_config(common)?;
    let dir = ensure_out_dir(&cfg)?;
    let profile = profile.unwrap_or(cfg.profile);
    let applied_cfg = AppliedConfig::default();
    let run = applied_experiment(profile, &cfg.params, &applied_cfg).map_err(|e| e.to_string())?;
    let space = FemSpace::new(build_uniform(applied_cfg.n).map_err(|e| e.to_string())?);
    write_diagnostics(&run.records, &dir.join("diagnostics.csv")).map_err(|e| e.to_string())?;
    for snap in &run.snapshots {
        let name = format!("snapshot_t{:.6}.{}", snap.t, format.extension());
        write_snapshot(&space, snap, &dir.join(name), format).map_err(|e| e.to_string())?;
    }
    println!(
        "applied: profile {:?}, {} snapshots -> {}",
        profile,
        run.snapshots.len(),
        dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Smoke test of the structural guarantees: conservation, per-step entropy
/// production, and validity of the convex–concave split.
fn cmd_check(common: &CommonArgs) -> Result<ExitCode, String> {
    let cfg = load_config(common)?;
    let mut pass = true;
    let mut report = |label: &str, ok: bool, detail: String| {
        println!("{} {label}: {detail}", if ok { "PASS" } else { "FAIL" });
        pass &= ok;
    };

    match validate_split(&cfg.params) {
        Ok(()) => report("split", true, "convex-concave split valid on the declared box".into()),
        Err(e) => report("split", false, e.to_string()),
    }

    let space = FemSpace::new(build_uniform(4).map_err(|e| e.to_string())?);
    let mobility = cfg.mobility.matrix();
    let solver = SolverConfig {
        tau: 1e-3,
        t_final: 0.02,
        ..cfg.solver_config()
    };
    let stepper =
        Stepper::new(&space, &cfg.params, &mobility, solver).map_err(|e| e.to_string())?;
    let (rho0, theta0, eta0) = convergence_initial_data(&space).map_err(|e| e.to_string())?;
    let init = stepper
        .initialize_state(rho0.clone(), theta0.clone(), eta0.clone())
        .map_err(|e| e.to_string())?;
    let mass0 = diagnostics::total_mass(&space, &init.rho);
    let energy0 =
        diagnostics::total_internal_energy(&space, &init, &cfg.params).map_err(|e| e.to_string())?;
    let entropy0 =
        diagnostics::total_entropy(&space, &init, &cfg.params).map_err(|e| e.to_string())?;
    let mut records: Vec<DiagnosticsRecord> = Vec::new();
    stepper
        .run(rho0, theta0, eta0, |_, _, r| records.push(r.clone()))
        .map_err(|e| e.to_string())?;

    let mass_drift = records
        .iter()
        .map(|r| ((r.total_mass - mass0) / mass0).abs())
        .fold(0.0, f64::max);
    report(
        "mass",
        mass_drift <= 1e-12,
        format!("relative drift {mass_drift:.2e} over {} steps", records.len()),
    );
    let energy_drift = records
        .iter()
        .map(|r| ((r.total_internal_energy - energy0) / energy0).abs())
        .fold(0.0, f64::max);
    report("energy", energy_drift <= 1e-9, format!("relative drift {energy_drift:.2e}"));

    let mut s_prev = entropy0;
    let mut worst = f64::INFINITY;
    for r in &records {
        let gain = r.total_entropy - s_prev;
        worst = worst.min(gain - 1e-3 * r.dissipation_rate + 1e-9 * (1.0 + s_prev.abs()));
        s_prev = r.total_entropy;
    }
    report("entropy", worst >= 0.0, format!("worst production slack {worst:.2e}"));

    if pass {
        println!("check: all structural properties hold");
        Ok(ExitCode::SUCCESS)
    } else {
        Err("structural property suite failed".into())
    }
}
