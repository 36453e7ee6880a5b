use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wavecache::harness::{self, HarnessError, RunConfig, STANDARD_WINDOWS};
use wavecache::ir::{KernelKind, KernelParams};
use wavecache::memory::Window;
use wavecache::sim::{Mode, SimError};

#[derive(Parser)]
#[command(name = "wavecache", version, about = "Dataflow simulator with wave-ordered and transactional memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one kernel in one mode.
    Run(RunArgs),
    /// Strict and decoupled baselines plus one TWC run per window.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long)]
    kernel: Option<KernelKind>,
    /// Matrix count.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    dim: Option<u32>,
    #[arg(long)]
    repeat: Option<u32>,
    /// VECTOR-FULL-DEP vector length.
    #[arg(long)]
    len: Option<u32>,
    /// Full scale: 500 matrices, repeat 10, vector length 500.
    #[arg(long)]
    full_scale: bool,
    /// TOML file with RunConfig fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    mode: Option<Mode>,
    /// Positive integer or `inf`.
    #[arg(long)]
    window: Option<Window>,
    /// Compare the final memory against the oracle; fail on any difference.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    dump_memory: Option<PathBuf>,
    #[arg(long)]
    event_log: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, value_delimiter = ',', default_value = "2,3,5,10,20,30,inf")]
    windows: Vec<Window>,
    /// Directory for sweep.csv and speedup.dat.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn base_config(k: &KernelArgs) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &k.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if k.full_scale {
        cfg.params = KernelParams::full_scale();
    }
    cfg.kernel = k.kernel.unwrap_or(cfg.kernel);
    cfg.params.matrices = k.n.unwrap_or(cfg.params.matrices);
    cfg.params.dim = k.dim.unwrap_or(cfg.params.dim);
    cfg.params.repeat = k.repeat.unwrap_or(cfg.params.repeat);
    cfg.params.vector_len = k.len.unwrap_or(cfg.params.vector_len);
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn cmd_run(a: RunArgs) -> Result<(), HarnessError> {
    let mut cfg = base_config(&a.kernel)?;
    cfg.mode = a.mode.unwrap_or(cfg.mode);
    if a.window.is_some() {
        cfg.window = a.window;
    }
    if cfg.mode != Mode::Twc {
        cfg.window = None;
    } else if cfg.window.is_none() {
        cfg.window = Some(Window::Infinite);
    }
    cfg.verify |= a.verify;
    cfg.event_log |= a.event_log.is_some();
    let out = harness::run(&cfg)?;
    if let Some(path) = &a.dump_memory {
        write(path, &out.memory_dump())?;
    }
    if let Some(path) = &a.event_log {
        write(path, &out.event_log())?;
    }
    println!("{}", serde_json::to_string_pretty(&out.metrics).expect("metrics serialize"));
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), HarnessError> {
    let cfg = base_config(&a.kernel)?;
    let windows = if a.windows.is_empty() { STANDARD_WINDOWS.to_vec() } else { a.windows };
    let rows = harness::sweep(&cfg, &windows)?;
    print!("{}", harness::render_csv(&rows));
    if let Some(dir) = &a.out {
        let (csv, plot) = harness::emit_report(&rows, dir)?;
        eprintln!("wrote {} and {}", csv.display(), plot.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                HarnessError::Verification(_) => 3,
                HarnessError::Sim(SimError::Deadlock { .. } | SimError::CycleBudget(_)) => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
