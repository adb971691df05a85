use std::process::ExitCode;

use clap::Parser;
use csof_cli::{execute, Cli, ExperimentSpec};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // --help and --version arrive here too.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match ExperimentSpec::resolve(&cli).and_then(|spec| execute(&spec)) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("csof: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
