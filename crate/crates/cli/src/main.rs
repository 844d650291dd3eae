use std::process::ExitCode;

use clap::Parser;
use diqkd_cli::args::Cli;
use diqkd_cli::{run, threads_from_env};

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    // clap prints usage errors itself and exits with 2
    let cli = Cli::parse();
    let outcome = threads_from_env().and_then(|threads| {
        if let Some(n) = threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| diqkd_cli::CliError::Other(e.into()))?;
        }
        run(cli, &argv, &mut std::io::stdout().lock())
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("diqkd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
