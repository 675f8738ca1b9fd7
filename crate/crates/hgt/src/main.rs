use std::process::ExitCode;

use clap::Parser;
use hgt::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
