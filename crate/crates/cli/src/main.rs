mod args;
mod failure;
mod kernel;
mod output;
mod simulate;
mod stats;
mod verify;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use failure::Failure;

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let argv = match args::merge_config(raw) {
        Ok(a) => a,
        Err(f) => return f.report(),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return Failure::Usage(e.to_string().trim().to_string()).report();
        }
    };
    if let Err(f) = configure_threads() {
        return f.report();
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Verify(a) => verify::run(&a),
        Command::Stats(a) => stats::run(&a),
        Command::Kernel(a) => kernel::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

/// Caps the global rayon pool at `VXL_THREADS` when set.
fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("VXL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("VXL_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot configure thread pool: {e}")))
}
