use std::path::PathBuf;
use std::process::ExitCode;

use bimax_cli::{execute, exit_code, parse_config, CliError, Mode};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bimax", version, about = "Bilevel minimax solver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One solver run; writes a JSON record.
    Run(Common),
    /// Gap measurements over a grid; writes CSV.
    Sweep(Common),
    /// Same as `sweep`.
    Gap(Common),
    /// Stability estimates over a grid; writes CSV.
    Stability(Common),
    /// Rate expressions over a grid; writes CSV.
    Bounds(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    preset: Option<String>,
    /// Worker threads.
    #[arg(long, env = "BIMAX_WORKERS")]
    workers: Option<usize>,
    /// Root seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn go(mode: Mode, c: &Common) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&c.config).map_err(|source| CliError::Io {
        path: c.config.display().to_string(),
        source,
    })?;
    let cfg = parse_config(&text, c.preset.as_deref(), c.seed)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = c.workers {
        if n == 0 {
            return Err(CliError::Config("workers: must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Output(e.to_string()))?;
    let artifact = pool.install(|| execute(mode, &cfg))?;
    std::fs::create_dir_all(&c.out).map_err(|source| CliError::Io {
        path: c.out.display().to_string(),
        source,
    })?;
    let path = c.out.join(&artifact.file_name);
    std::fs::write(&path, &artifact.contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    println!("{}", path.display());
    if artifact.diverged {
        eprintln!("run diverged; partial record written");
    }
    Ok(exit_code(&artifact))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match &cli.command {
        Command::Run(c) => (Mode::Run, c),
        Command::Sweep(c) => (Mode::Sweep, c),
        Command::Gap(c) => (Mode::Gap, c),
        Command::Stability(c) => (Mode::Stability, c),
        Command::Bounds(c) => (Mode::Bounds, c),
    };
    match go(mode, common) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("bimax: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
