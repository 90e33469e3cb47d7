use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use jflow_cli::{configure_threads, parse_config_for, run_command, Command, CliError, EXIT_CONFIG, EXIT_OK};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CommandArg {
    Flow,
    Geodesic,
    Contract,
    Diagnose,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Flow => Command::Flow,
            CommandArg::Geodesic => Command::Geodesic,
            CommandArg::Contract => Command::Contract,
            CommandArg::Diagnose => Command::Diagnose,
        }
    }
}

/// Run J-flow, geodesic and contraction experiments on flat tori.
#[derive(Debug, Parser)]
#[command(name = "jflow", version)]
struct Args {
    command: CommandArg,
    /// Run configuration (flat `key = value` file).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random modes; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    if let Err(e) = configure_threads(std::env::var("JFLOW_THREADS").ok().as_deref()) {
        eprintln!("{e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(source) => {
            eprintln!("{}", CliError::Io { path: args.config.clone(), source });
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let mut cfg = match parse_config_for(&text, args.command.into()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let outcome = run_command(&cfg);
    if outcome.exit_code == EXIT_OK {
        println!("{}", outcome.message);
    } else {
        eprintln!("{}", outcome.message);
    }
    ExitCode::from(outcome.exit_code as u8)
}
