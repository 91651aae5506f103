use std::process::ExitCode;

use clap::Parser;

use drex_cli::{expand_config, run, Cli};

fn main() -> ExitCode {
    let args = match expand_config(std::env::args().collect()) {
        Ok(args) => args,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    // clap exits with 2 on usage errors and 0 for --help/--version.
    let cli = Cli::parse_from(args);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
