use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dunkl_cli::config::{parse_config, ExperimentConfig};
use dunkl_cli::runner::{self, CliError};
use dunkl_cli::OUTPUT_DIR_ENV;

#[derive(Parser)]
#[command(name = "dunkl-lab", version, about = "Simulate radial Dunkl processes and run Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment and write CSV, summary and manifest files.
    Run { config: PathBuf },
    /// Print derived quantities (dt, eps_n, L_k, p*) without simulating.
    Describe { config: PathBuf },
    /// Check the configuration and exit.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let output_override = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    parse_config(&text, output_override).map_err(CliError::Config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => load(config).and_then(|cfg| {
            let summary = runner::run(&cfg)?;
            for line in &summary.report {
                println!("{line}");
            }
            for f in &summary.files {
                println!("wrote {} ({} lines)", summary.output_dir.join(&f.file).display(), f.lines);
            }
            Ok(if summary.passed { 0 } else { 2 })
        }),
        Command::Describe { config } => load(config).map(|cfg| {
            print!("{}", runner::describe(&cfg));
            0
        }),
        Command::Validate { config } => load(config).map(|_| {
            println!("configuration is valid");
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
