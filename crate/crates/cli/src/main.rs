use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use steinflow::basis_io::{basis_fingerprint, fingerprint_hex, load_or_build};
use steinflow::config::{BasisKind, KernelConfig};
use steinflow::experiment::default_output_dir;
use steinflow::presets::{find_preset, list_presets};
use steinflow::{parse_config, run_experiment, Error, ExperimentConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "steinflow",
    version,
    about = "SVGD / LAWGD samplers and density-flow checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (default: config `output_dir`, else runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `particles.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List built-in presets, or print one as a config document.
    Presets {
        #[arg(long, value_name = "NAME")]
        show: Option<String>,
    },
    /// Spectral basis cache maintenance.
    Basis {
        #[command(subcommand)]
        command: BasisCommand,
    },
}

#[derive(Subcommand)]
enum BasisCommand {
    /// Compute the FD basis of a config and store it at its `basis_cache` path.
    Build { config: PathBuf },
}

enum Failure {
    Config(String),
    Abort(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::InvalidSpec(_) | Error::InvalidGrid(_) => {
                Failure::Config(e.to_string())
            }
            Error::Aborted { .. }
            | Error::Numeric(_)
            | Error::Solver(_)
            | Error::Unstable(_)
            | Error::EmptyBasis => Failure::Abort(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn configure_threads() {
    let Ok(v) = std::env::var("STEINFLOW_THREADS") else {
        return;
    };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring STEINFLOW_THREADS={v:?}: expected a positive integer"),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = load_config(&config)?;
            if let (Some(s), Some(p)) = (seed, cfg.particles.as_mut()) {
                p.seed = s;
            }
            let dir = out.unwrap_or_else(|| default_output_dir(&cfg));
            let manifest = run_experiment(&cfg, &dir)?;
            for f in &manifest.files {
                println!("{}\t{} rows", dir.join(&f.name).display(), f.rows);
            }
            println!("wall time {:.2} s", manifest.wall_time_secs);
            if let Some(reason) = manifest.abort {
                return Err(Failure::Abort(reason));
            }
            Ok(())
        }
        Command::Presets { show: Some(name) } => {
            let p = find_preset(&name)
                .ok_or_else(|| Failure::Config(format!("no preset named {name:?}")))?;
            println!("{}", p.json);
            Ok(())
        }
        Command::Presets { show: None } => {
            for p in list_presets() {
                println!("{}\n    {}", p.name, p.description);
            }
            Ok(())
        }
        Command::Basis {
            command: BasisCommand::Build { config },
        } => {
            let cfg = load_config(&config)?;
            let Some(KernelConfig::Spectral {
                basis: BasisKind::Fd,
                k,
            }) = cfg.kernel
            else {
                return Err(Failure::Config(
                    "kernel: basis build needs an fd spectral kernel".into(),
                ));
            };
            let cache = cfg
                .basis_cache
                .clone()
                .ok_or_else(|| Failure::Config("basis_cache: no cache path configured".into()))?;
            let target = cfg.build_target()?;
            let grid = cfg.grid.build()?;
            let (basis, status) = load_or_build(&target, &grid, k, Some(Path::new(&cache)))?;
            println!(
                "{cache}: {} ({} modes, fingerprint {})",
                status.as_str(),
                basis.k(),
                fingerprint_hex(&basis_fingerprint(target.spec(), &grid, k))
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Abort(m)) => {
            eprintln!("aborted: {m}");
            ExitCode::from(EXIT_ABORT)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}
