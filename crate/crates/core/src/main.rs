use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use sacfem::config::{parse_config, StudyConfig};
use sacfem::experiments::{run_study, sample_trajectory, RunOptions};
use sacfem::selftest::run_selftest;

/// Finite element rate studies for stochastic Allen–Cahn type equations.
#[derive(Parser)]
#[command(name = "sacfem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a TOML config and write CSV + JSON reports.
    Study {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write one checkpointed sample path as CSV.
    Trajectory {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Monte-Carlo sample index of the path.
        #[arg(long, default_value_t = 0)]
        sample: u64,
    },
    /// Run the built-in example and invariant checks.
    Selftest,
}

#[derive(Args)]
struct RunArgs {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long, env = "SACFEM_OUT", default_value = "sacfem-out")]
    out: PathBuf,
}

fn load(path: &Path, seed: Option<u64>) -> Result<StudyConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn study(config: &Path, run: &RunArgs) -> Result<bool, String> {
    let cfg = load(config, run.seed)?;
    let start = Instant::now();
    let out = run_study(&cfg, &RunOptions { workers: run.workers }).map_err(|e| format!("study failed: {e}"))?;
    let runtime = start.elapsed().as_secs_f64();
    let files = out.write(&run.out, runtime).map_err(|e| format!("cannot write reports: {e}"))?;
    for r in out.reports() {
        match r.fit {
            Some(f) => println!(
                "{}: slope {:.4} [{:.4}, {:.4}] over {} levels{}",
                r.file_stem(),
                f.slope,
                f.ci_lo,
                f.ci_hi,
                f.levels_used,
                r.expected_slope.map(|s| format!(", expected {s}")).unwrap_or_default()
            ),
            None => println!("{}: no fit ({})", r.file_stem(), r.fit_error.as_deref().unwrap_or("unknown")),
        }
        for n in &r.diagnostics.notes {
            println!("  note: {n}");
        }
    }
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    eprintln!("config {} seed {} in {runtime:.2}s", cfg.hash(), cfg.seed);
    Ok(out.is_ok())
}

fn trajectory(config: &Path, run: &RunArgs, sample: u64) -> Result<bool, String> {
    let cfg = load(config, run.seed)?;
    let start = Instant::now();
    let (space, tr) = sample_trajectory(&cfg, sample).map_err(|e| format!("trajectory failed: {e}"))?;
    let stride = tr.stride.unwrap_or(1);
    let mut csv = format!(
        "# sacfem {} trajectory config_hash={} seed={} sample={}\nstep,t,node,x,value\n",
        env!("CARGO_PKG_VERSION"),
        cfg.hash(),
        cfg.seed,
        sample
    );
    let nodes = space.mesh().interior_nodes();
    for (i, state) in tr.states.iter().enumerate() {
        let step = i * stride;
        for (j, (x, v)) in nodes.iter().zip(state).enumerate() {
            let _ = writeln!(csv, "{step},{:.16e},{},{:.16e},{:.16e}", step as f64 * tr.dt, j + 1, x, v);
        }
    }
    std::fs::create_dir_all(&run.out).map_err(|e| e.to_string())?;
    let path = run.out.join("trajectory.csv");
    std::fs::write(&path, csv).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    let summary = serde_json::json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "sample": sample,
        "dt": tr.dt,
        "n_steps": tr.n_steps,
        "stride": stride,
        "max_sup_norm": tr.max_sup_norm,
        "version": env!("CARGO_PKG_VERSION"),
        "runtime_seconds": start.elapsed().as_secs_f64(),
    });
    let js = run.out.join("trajectory.json");
    std::fs::write(&js, serde_json::to_string_pretty(&summary).expect("serialisable") + "\n")
        .map_err(|e| format!("cannot write {}: {e}", js.display()))?;
    eprintln!("wrote {} and {}", path.display(), js.display());
    Ok(true)
}

fn selftest() -> bool {
    let outcomes = run_selftest();
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} checks, {failed} failed", outcomes.len());
    failed == 0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Study { config, run } => study(config, run),
        Command::Trajectory { config, run, sample } => trajectory(config, run, *sample),
        Command::Selftest => Ok(selftest()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
