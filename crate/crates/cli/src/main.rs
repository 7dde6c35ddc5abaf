use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = infact_cli::Cli::parse();
    match infact_cli::init_workers().and_then(|_| infact_cli::run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
