use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use map_replica_cli::{run, RunConfig, Table};

#[derive(Parser)]
#[command(name = "map-replica", version, about = "Replica predictions and Monte Carlo checks for MAP estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides `montecarlo.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    gh_order: Option<usize>,
    #[arg(long, global = true)]
    legendre_order: Option<usize>,
    /// Overrides `output.path`; `-` writes to stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// All fixed points at the configured single point.
    Solve { config: PathBuf },
    /// Solutions along the sweep grid.
    Sweep { config: PathBuf },
    /// Selected MSE at two ansatz levels and the ε-validity break point.
    Compare { config: PathBuf },
    /// Monte Carlo simulation only.
    Simulate { config: PathBuf },
    /// Zero-temperature entropy along the sweep grid.
    Entropy { config: PathBuf },
}

fn load(path: &PathBuf, cli: &Cli) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rc = RunConfig::from_toml(&text)?;
    if let Some(s) = cli.seed {
        rc.montecarlo.seed = s;
    }
    if let Some(g) = cli.gh_order {
        rc.quadrature.gh_order = g;
    }
    if let Some(l) = cli.legendre_order {
        rc.quadrature.legendre_order = l;
    }
    if let Some(o) = &cli.output {
        rc.output.path = Some(o.clone());
    }
    rc.validate()?;
    Ok(rc)
}

fn emit(t: &Table, rc: &RunConfig) -> Result<()> {
    match &rc.output.path {
        Some(p) if p.as_os_str() != "-" => {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            t.write_csv(BufWriter::new(f))
        }
        _ => t.write_csv(io::stdout().lock()),
    }
}

fn main_inner(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("--threads")?;
    }
    let path = match &cli.command {
        Command::Solve { config }
        | Command::Sweep { config }
        | Command::Compare { config }
        | Command::Simulate { config }
        | Command::Entropy { config } => config.clone(),
    };
    let rc = load(&path, &cli)?;
    let quad = rc.quadrature()?;
    let table = match cli.command {
        Command::Solve { .. } => run::run_solve(&rc, &quad)?,
        Command::Sweep { .. } => run::run_sweep(&rc, &quad)?,
        Command::Compare { .. } => {
            let (t, brk) = run::run_compare(&rc, &quad)?;
            match brk {
                Some(v) => eprintln!("gap below epsilon up to {v}"),
                None => eprintln!("gap exceeds epsilon at the first grid point"),
            }
            t
        }
        Command::Simulate { .. } => run::run_simulate(&rc)?,
        Command::Entropy { .. } => run::run_entropy(&rc, &quad)?,
    };
    emit(&table, &rc)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
