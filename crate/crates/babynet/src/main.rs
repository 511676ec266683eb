use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = babynet::cli::Cli::parse();
    match babynet::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
