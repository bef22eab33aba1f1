use std::process::ExitCode;

use clap::Parser;

use mboris::cli::{resolve, Cli};
use mboris::execute;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, flags) = cli.command.split();
    let result = resolve(experiment, flags).and_then(|cfg| execute(&cfg));
    match result {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
