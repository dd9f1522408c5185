use std::process::ExitCode;

use clap::Parser;
use mprfrail::cli::{run, Cli, EXIT_USAGE};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let Some(text) = e.output {
                print!("{text}");
            }
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
